#pragma once

#include <cmath>

#include "lrdfield/error.hpp"

namespace lrdfield {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1] in the closed positive quadrant.
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    static Rect make(double x0, double y0, double x1, double y1)
    {
        if (!(x0 <= x1 && y0 <= y1)) throw Error(ErrorKind::ParameterOutOfRange, "rectangle corners out of order");
        if (!(x0 >= 0 && y0 >= 0)) throw Error(ErrorKind::ParameterOutOfRange, "rectangle outside the quadrant");
        return {x0, y0, x1, y1};
    }
    static Rect from_origin(Point p) { return make(0.0, 0.0, p.x, p.y); }

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    Rect shifted(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }
};

/// The line {ax + by = 0}, normalized to a^2 + b^2 = 1 with a > 0, or a = 0 and b > 0.
struct Line {
    double a = 1.0;
    double b = 0.0;

    static Line make(double a, double b)
    {
        const double r = std::hypot(a, b);
        if (!(r > 0)) throw Error(ErrorKind::ParameterOutOfRange, "line needs (a,b) != (0,0)");
        a /= r;
        b /= r;
        if (a < 0 || (a == 0 && b < 0)) {
            a = -a;
            b = -b;
        }
        return {a, b};
    }
    static Line horizontal() { return make(0, 1); }
    static Line vertical() { return make(1, 0); }

    /// Unit vector along the line.
    Point direction() const { return {b, -a}; }
};

}  // namespace lrdfield
