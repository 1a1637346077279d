#pragma once

// Adaptive Gauss-Kronrod integration for integrands with power-law singularities
// and slowly decaying oscillatory tails.
//
// Layout of a one-dimensional integral:
//   * panels are G10/K21 rules, refined by bisecting the worst panel;
//   * around a singular point the domain is cut into geometric rings
//     [r/beta, r], integrated one by one; the remainder inside the innermost
//     ring (or beyond the outermost one) is extrapolated from the ratio of
//     consecutive ring contributions, which is exact for pure power laws;
//   * for integrands of the form (1 - cos(w s)) phi(s) the caller may supply
//     the oscillation-averaged variant phi; beyond a cut placed at an integer
//     number of periods only phi is integrated. The dropped cosine part is
//     phi'(S)/w^2 to leading order and is added back as a correction.
// Two-dimensional integrals are nested one-dimensional ones; a line
// singularity au + bv = 0 is rotated onto an axis first.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "lrdfield/error.hpp"

namespace lrdfield {

struct QuadratureSpec {
    double rel_tol = 1e-7;
    double abs_tol = 1e-14;
    std::size_t max_panels = 200000;  // per one-dimensional integral
    double ring_base = 2.0;
    double tail_cutoff = 32.0;        // cut radius in oscillation periods

    void check() const
    {
        if (!(rel_tol >= 1e-12)) throw Error(ErrorKind::ParameterOutOfRange, "rel_tol must be >= 1e-12");
        if (!(abs_tol > 0)) throw Error(ErrorKind::ParameterOutOfRange, "abs_tol must be positive");
        if (max_panels < 1) throw Error(ErrorKind::ParameterOutOfRange, "max_panels must be positive");
        if (!(ring_base > 1)) throw Error(ErrorKind::ParameterOutOfRange, "ring_base must exceed 1");
        if (!(tail_cutoff > 0)) throw Error(ErrorKind::ParameterOutOfRange, "tail_cutoff must be positive");
    }
};

struct IntegralResult {
    double value = 0.0;
    double err_estimate = 0.0;
    std::size_t panels_used = 0;
    bool converged = true;
};

/// Bound on the integral of C r^{-p} outside radius R: 1D (both tails) or 2D (radial).
inline double power_law_tail_bound(int dim, double C, double p, double R)
{
    if (dim == 1) {
        if (!(p > 1)) throw Error(ErrorKind::ParameterOutOfRange, "1D tail bound needs p > 1");
        return 2.0 * C * std::pow(R, 1.0 - p) / (p - 1.0);
    }
    if (!(p > 2)) throw Error(ErrorKind::ParameterOutOfRange, "2D tail bound needs p > 2");
    return 2.0 * 3.14159265358979323846 * C * std::pow(R, 2.0 - p) / (p - 2.0);
}

template <std::size_t K>
using Vec = std::array<double, K>;

template <std::size_t K>
inline Vec<K>& operator+=(Vec<K>& a, const Vec<K>& b)
{
    for (std::size_t i = 0; i < K; ++i) a[i] += b[i];
    return a;
}
template <std::size_t K>
inline Vec<K> scaled(const Vec<K>& a, double s)
{
    Vec<K> r;
    for (std::size_t i = 0; i < K; ++i) r[i] = a[i] * s;
    return r;
}

template <std::size_t K>
struct Partial {
    Vec<K> value{};
    double err = 0.0;
    std::size_t panels = 0;
    bool ok = true;

    Partial& operator+=(const Partial& o)
    {
        value += o.value;
        err += o.err;
        panels += o.panels;
        ok = ok && o.ok;
        return *this;
    }
};

/// One-dimensional axis description for the nested engine.
struct AxisSpec {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::optional<double> singular;   // integrable singularity or sharp peak
    std::vector<double> breakpoints;  // kinks inside a finite domain
    double period = 0.0;              // oscillation period of the full integrand
    bool even = false;                // integrand symmetric about 0
};

namespace detail {

inline constexpr std::array<double, 11> xgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> wgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525478896, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> wg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651344};

template <std::size_t K, class F>
void gk21(const F& f, double a, double b, Vec<K>& result, double& err)
{
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    std::array<Vec<K>, 21> fv;
    fv[20] = f(c);
    for (int j = 0; j < 10; ++j) {
        const double x = h * xgk[j];
        fv[2 * j] = f(c - x);
        fv[2 * j + 1] = f(c + x);
    }
    Vec<K> resk{}, resg{};
    for (std::size_t k = 0; k < K; ++k) {
        double sk = wgk[10] * fv[20][k];
        double sg = 0.0;
        for (int j = 0; j < 10; ++j) {
            const double s = fv[2 * j][k] + fv[2 * j + 1][k];
            sk += wgk[j] * s;
            if (j % 2 == 1) sg += wg[j / 2] * s;
        }
        resk[k] = sk * h;
        resg[k] = sg * h;
    }
    const double mean = resk[0] / (2.0 * h);
    double resasc = wgk[10] * std::abs(fv[20][0] - mean);
    double resabs = wgk[10] * std::abs(fv[20][0]);
    for (int j = 0; j < 10; ++j) {
        resasc += wgk[j] * (std::abs(fv[2 * j][0] - mean) + std::abs(fv[2 * j + 1][0] - mean));
        resabs += wgk[j] * (std::abs(fv[2 * j][0]) + std::abs(fv[2 * j + 1][0]));
    }
    resasc *= std::abs(h);
    resabs *= std::abs(h);
    double e = std::abs(resk[0] - resg[0]);
    for (std::size_t k = 1; k < K; ++k) e = std::max(e, std::abs(resk[k] - resg[k]) * 1e-3);
    if (resasc != 0.0 && e != 0.0) e = resasc * std::min(1.0, std::pow(200.0 * e / resasc, 1.5));
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50 * eps)) e = std::max(50 * eps * resabs, e);
    result = resk;
    err = e;
}

}  // namespace detail

template <std::size_t K>
class LineIntegrator {
public:
    using V = Vec<K>;
    using Fn = std::function<V(double)>;

    explicit LineIntegrator(const QuadratureSpec& spec) : spec_(spec), budget_(spec.max_panels) {}

    Partial<K> integrate(const Fn& f, const Fn* mean, const AxisSpec& ax)
    {
        if (!(ax.lo <= ax.hi)) throw Error(ErrorKind::ParameterOutOfRange, "axis bounds reversed");
        const bool origin_mode = ax.lo <= 0.0 && ax.hi >= 0.0 && (!ax.singular || *ax.singular == 0.0) &&
                                 (mean || std::isinf(ax.lo) || std::isinf(ax.hi) || ax.even) &&
                                 ax.breakpoints.empty();
        if (origin_mode) {
            const bool sing0 = ax.singular.has_value();
            Partial<K> right = half_line(f, mean, ax.hi, sing0, ax.period);
            if (ax.even) {
                Partial<K> both = right;
                both.value = scaled(right.value, 2.0);
                both.err *= 2.0;
                return both;
            }
            Fn fr = [&f](double s) { return f(-s); };
            Fn mr;
            if (mean) mr = [mean](double s) { return (*mean)(-s); };
            Partial<K> left = half_line(fr, mean ? &mr : nullptr, -ax.lo, sing0, ax.period);
            right += left;
            return right;
        }
        if (std::isinf(ax.lo) || std::isinf(ax.hi))
            throw Error(ErrorKind::InvalidSingularSet, "infinite axis needs its singularity at the origin");
        return finite(f, ax);
    }

private:
    Partial<K> finite(const Fn& f, const AxisSpec& ax)
    {
        std::vector<double> pts{ax.lo, ax.hi};
        for (double b : ax.breakpoints)
            if (b > ax.lo && b < ax.hi) pts.push_back(b);
        std::optional<double> sing = ax.singular;
        if (sing && *sing > ax.lo && *sing < ax.hi) pts.push_back(*sing);
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        Partial<K> total;
        const double width = ax.hi - ax.lo;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double a = pts[i], b = pts[i + 1];
            bool sa = false, sb = false;
            if (sing) {
                sa = *sing == a;
                sb = *sing == b;
                // Sharp peak just outside the domain: grade toward the nearer end.
                if (!sa && !sb && (*sing < ax.lo || *sing > ax.hi) &&
                    std::min(std::abs(*sing - ax.lo), std::abs(*sing - ax.hi)) < width) {
                    if (*sing < ax.lo && a == ax.lo) sa = true;
                    if (*sing > ax.hi && b == ax.hi) sb = true;
                }
            }
            total += segment(f, a, b, sa, sb, ax.period, total.value[0]);
            if (!total.ok && budget_ == 0) break;
        }
        return total;
    }

    Partial<K> half_line(const Fn& f, const Fn* mean, double hi, bool sing0, double period)
    {
        Partial<K> out;
        if (hi <= 0.0) return out;
        double cut = 1.0;
        if (period > 0) cut = (mean ? std::ceil(spec_.tail_cutoff) : spec_.tail_cutoff) * period;
        if (hi <= cut) return segment(f, 0.0, hi, sing0, false, period, 0.0);
        out = segment(f, 0.0, cut, sing0, false, period, 0.0);
        if (!out.ok && budget_ == 0) return out;
        const Fn& tail_f = mean ? *mean : f;
        out += outward(tail_f, cut, hi, mean ? 0.0 : period, out.value[0]);
        if (mean && period > 0) {
            // Beyond the cut f = phi (1 - cos(w s)); the dropped cosine part integrates to phi'(S)/w^2.
            const double w = 2.0 * 3.14159265358979323846 / period;
            const double hstep = 0.25 * period;
            const V ahead = (*mean)(cut + hstep);
            const V behind = (*mean)(cut - hstep);
            V corr;
            for (std::size_t i = 0; i < K; ++i) corr[i] = (ahead[i] - behind[i]) / (2 * hstep * w * w);
            out.value += corr;
            out.err += std::abs(corr[0]) * 10.0 / ((w * cut) * (w * cut)) + 1e-3 * std::abs(corr[0]);
        }
        return out;
    }

    Partial<K> segment(const Fn& f, double a, double b, bool sa, bool sb, double period, double ref)
    {
        if (sa && sb) {
            const double m = 0.5 * (a + b);
            Partial<K> left = segment(f, a, m, true, false, period, ref);
            left += segment(f, m, b, false, true, period, ref + left.value[0]);
            return left;
        }
        if (sa) return inward(f, a, b, period, ref, +1);
        if (sb) return inward(f, b, a, period, ref, -1);
        return adaptive(f, a, b, pieces(b - a, period), ref);
    }

    static std::size_t pieces(double width, double period)
    {
        if (period <= 0) return 1;
        return static_cast<std::size_t>(std::min(1e6, std::ceil(width / period)));
    }

    // Rings from `far` toward the singular point `s`; dir=+1 when s is the left end.
    Partial<K> inward(const Fn& f, double s, double far, double period, double ref, int dir)
    {
        const double w = std::abs(far - s);
        const double beta = spec_.ring_base;
        RingState st;
        st.ref = ref;
        for (int k = 0; k < max_rings; ++k) {
            const double r_hi = w * std::pow(beta, -k);
            const double r_lo = w * std::pow(beta, -(k + 1));
            const double lo = dir > 0 ? s + r_lo : s - r_hi;
            const double hi = dir > 0 ? s + r_hi : s - r_lo;
            if (!(hi > lo) || lo == s || hi == s) break;
            if (k >= 3 && r_hi < 1e-11 * std::abs(s)) {
                // Rings below floating-point resolution of the distance to s: close with the
                // ratio extrapolation and report the remainder as error.
                st.close();
                return st.sum;
            }
            Partial<K> ring = adaptive(f, lo, hi, pieces(hi - lo, period), st.ref + st.sum.value[0]);
            if (st.push(ring, spec_, k)) return st.sum;
            if (!st.sum.ok && budget_ == 0) break;
        }
        st.sum.ok = false;
        return st.sum;
    }

    Partial<K> outward(const Fn& f, double t0, double hi, double period, double ref)
    {
        const double beta = spec_.ring_base;
        RingState st;
        st.ref = ref;
        for (int k = 0; k < max_rings; ++k) {
            const double lo = t0 * std::pow(beta, k);
            if (lo >= hi) return st.sum;
            const double up = std::min(hi, t0 * std::pow(beta, k + 1));
            Partial<K> ring = adaptive(f, lo, up, pieces(up - lo, period), st.ref + st.sum.value[0]);
            if (std::isinf(hi)) {
                if (st.push(ring, spec_, k)) return st.sum;
            } else {
                st.sum += ring;
            }
            if (!st.sum.ok && budget_ == 0) break;
        }
        if (!std::isinf(hi)) return st.sum;
        st.sum.ok = false;
        return st.sum;
    }

    struct RingState {
        Partial<K> sum;
        double ref = 0.0;
        double c1 = 0.0, c2 = 0.0;  // previous two ring contributions (component 0)
        V last{};
        int n = 0;

        // Returns true when the remaining rings are negligible or extrapolated.
        bool push(const Partial<K>& ring, const QuadratureSpec& spec, int k)
        {
            sum += ring;
            const double c0 = ring.value[0];
            const double total = std::abs(ref + sum.value[0]);
            const double tol = std::max(spec.abs_tol, spec.rel_tol * total);
            bool done = false;
            if (k >= 2 && std::abs(c0) <= 1e-3 * tol && std::abs(c1) <= 1e-2 * tol) {
                sum.err += std::abs(c0);
                done = true;
            } else if (k >= 3) {
                const double r0 = c1 != 0.0 ? c0 / c1 : 0.0;
                const double r1 = c2 != 0.0 ? c1 / c2 : 0.0;
                if (r0 > 0 && r0 < 0.97 && r1 > 0 && r1 < 0.97) {
                    const double e0 = c0 * r0 / (1 - r0);
                    const double e1 = c0 * r1 / (1 - r1);
                    const double unc = 2.0 * std::abs(e0 - e1) + 1e-6 * std::abs(e0);
                    if (unc <= 0.1 * tol) {
                        sum.value += scaled(ring.value, r0 / (1 - r0));
                        sum.err += unc;
                        done = true;
                    }
                }
            }
            c2 = c1;
            c1 = c0;
            last = ring.value;
            ++n;
            return done;
        }

        void close()
        {
            const double r = c2 != 0.0 ? c1 / c2 : 0.0;
            if (r > 0 && r < 0.97) {
                const double e = c1 * r / (1 - r);
                sum.value += scaled(last, r / (1 - r));
                sum.err += 1e-2 * std::abs(e) + 1e-3 * std::abs(c1);
            } else {
                sum.err += 100.0 * std::abs(c1);
            }
        }
    };

    Partial<K> adaptive(const Fn& f, double a, double b, std::size_t npieces, double ref)
    {
        struct Panel {
            double a, b;
            V val;
            double err;
        };
        Partial<K> out;
        if (!(b > a)) return out;
        if (budget_ < npieces) {
            out.ok = false;
            out.err = std::numeric_limits<double>::infinity();
            budget_ = 0;
            return out;
        }
        std::vector<Panel> panels;
        panels.reserve(npieces + 16);
        auto eval = [&](double lo, double hi) {
            Panel p{lo, hi, {}, 0.0};
            detail::gk21<K>(f, lo, hi, p.val, p.err);
            --budget_;
            ++out.panels;
            return p;
        };
        auto cmp = [&panels](std::size_t i, std::size_t j) { return panels[i].err < panels[j].err; };
        std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
        double total = 0.0, err = 0.0;
        for (std::size_t i = 0; i < npieces; ++i) {
            const double lo = a + (b - a) * double(i) / double(npieces);
            const double hi = i + 1 == npieces ? b : a + (b - a) * double(i + 1) / double(npieces);
            panels.push_back(eval(lo, hi));
            heap.push(panels.size() - 1);
            total += panels.back().val[0];
            err += panels.back().err;
        }
        const double rel = 0.2 * spec_.rel_tol;
        while (true) {
            const double target = std::max(1e-2 * spec_.abs_tol, rel * std::max(std::abs(total), std::abs(ref)));
            if (err <= target) break;
            if (budget_ < 2) {
                out.ok = false;
                break;
            }
            const std::size_t w = heap.top();
            heap.pop();
            Panel worst = panels[w];
            const double mid = 0.5 * (worst.a + worst.b);
            if (!(mid > worst.a && mid < worst.b)) {
                out.ok = false;
                heap.push(w);
                break;
            }
            Panel left = eval(worst.a, mid);
            Panel right = eval(mid, worst.b);
            total += left.val[0] + right.val[0] - worst.val[0];
            err += left.err + right.err - worst.err;
            panels[w] = left;
            heap.push(w);
            panels.push_back(right);
            heap.push(panels.size() - 1);
        }
        std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
        err = 0.0;
        for (const auto& p : panels) {
            out.value += p.val;
            err += p.err;
        }
        out.err = err;
        if (!out.ok && budget_ < 2) out.err = std::numeric_limits<double>::infinity();
        return out;
    }

    static constexpr int max_rings = 400;

    QuadratureSpec spec_;
    std::size_t budget_;
};

inline IntegralResult finish(const Partial<1>& p, const QuadratureSpec& spec)
{
    IntegralResult r;
    r.value = p.value[0];
    r.err_estimate = p.err;
    r.panels_used = p.panels;
    r.converged = p.ok && p.err <= std::max(spec.abs_tol, spec.rel_tol * std::abs(r.value));
    return r;
}

/// Optional oscillation structure of a one-dimensional integrand. When `mean` is set the
/// integrand must equal mean(s) (1 - cos(2 pi s / period)) beyond the cut.
struct Oscillation {
    double period = 0.0;
    std::function<double(double)> mean;
};

/// Integral over the real line.
inline IntegralResult integrate_1d(const std::function<double(double)>& f, bool singular_at_zero,
                                   const QuadratureSpec& spec, const Oscillation& osc = {}, bool even = false)
{
    spec.check();
    LineIntegrator<1> li(spec);
    AxisSpec ax;
    if (singular_at_zero) ax.singular = 0.0;
    ax.period = osc.period;
    ax.even = even;
    LineIntegrator<1>::Fn fv = [&f](double s) { return Vec<1>{f(s)}; };
    LineIntegrator<1>::Fn mv;
    if (osc.mean) mv = [&osc](double s) { return Vec<1>{osc.mean(s)}; };
    return finish(li.integrate(fv, osc.mean ? &mv : nullptr, ax), spec);
}

/// Integral over a finite interval with an optional singular point inside or at an end.
inline IntegralResult integrate_interval(const std::function<double(double)>& f, double lo, double hi,
                                         std::optional<double> singular, const QuadratureSpec& spec,
                                         double period = 0.0)
{
    spec.check();
    LineIntegrator<1> li(spec);
    AxisSpec ax;
    ax.lo = lo;
    ax.hi = hi;
    ax.singular = singular;
    ax.period = period;
    LineIntegrator<1>::Fn fv = [&f](double s) { return Vec<1>{f(s)}; };
    return finish(li.integrate(fv, nullptr, ax), spec);
}

// ---------------------------------------------------------------------------
// Two dimensions

enum class SingularSetKind { None, Origin, UAxis, VAxis, Line };

/// UAxis is the line v = 0, VAxis the line u = 0, Line is au + bv = 0.
struct SingularSet {
    SingularSetKind kind = SingularSetKind::None;
    double a = 0.0, b = 0.0;

    static SingularSet none() { return {}; }
    static SingularSet origin() { return {SingularSetKind::Origin}; }
    static SingularSet u_axis() { return {SingularSetKind::UAxis}; }
    static SingularSet v_axis() { return {SingularSetKind::VAxis}; }
    static SingularSet line(double a, double b) { return {SingularSetKind::Line, a, b}; }
};

struct Integrand2D {
    std::function<double(double, double)> f;
    // Oscillation-averaged variants: in u (valid for |u| beyond the u cut), in v, and in both.
    std::function<double(double, double)> mean_u, mean_v, mean_uv;
    double period_u = 0.0, period_v = 0.0;
    bool even_u = false, even_v = false;
    // Domain [-u_max, u_max] x [-v_max, v_max].
    double u_max = std::numeric_limits<double>::infinity();
    double v_max = std::numeric_limits<double>::infinity();
};

/// Nested integral over a product domain described by two axes.
template <std::size_t K = 1>
Partial<K> integrate_nested(const std::function<Vec<K>(double, double)>& f,
                            const std::function<Vec<K>(double, double)>* mean_u,
                            const std::function<Vec<K>(double, double)>* mean_v,
                            const std::function<Vec<K>(double, double)>* mean_uv, const AxisSpec& u_axis,
                            const AxisSpec& v_axis, const QuadratureSpec& spec)
{
    QuadratureSpec inner_spec = spec;
    inner_spec.rel_tol = std::max(1e-13, spec.rel_tol * 0.25);
    bool inner_ok = true;
    using InnerFn = typename LineIntegrator<K>::Fn;
    auto inner = [&](const std::function<Vec<K>(double, double)>& g,
                     const std::function<Vec<K>(double, double)>* gm, double u) {
        LineIntegrator<K> li(inner_spec);
        InnerFn fv = [&g, u](double v) { return g(u, v); };
        InnerFn mv;
        if (gm) mv = [gm, u](double v) { return (*gm)(u, v); };
        Partial<K> p = li.integrate(fv, gm ? &mv : nullptr, v_axis);
        if (!p.ok) inner_ok = false;
        Vec<K + 1> out;
        for (std::size_t i = 0; i < K; ++i) out[i] = p.value[i];
        out[K] = p.err;
        return out;
    };
    typename LineIntegrator<K + 1>::Fn outer_f = [&](double u) { return inner(f, mean_v, u); };
    typename LineIntegrator<K + 1>::Fn outer_mean;
    if (mean_u) outer_mean = [&](double u) { return inner(*mean_u, mean_uv, u); };
    LineIntegrator<K + 1> outer(spec);
    Partial<K + 1> r = outer.integrate(outer_f, mean_u ? &outer_mean : nullptr, u_axis);
    Partial<K> out;
    for (std::size_t i = 0; i < K; ++i) out.value[i] = r.value[i];
    out.err = r.err + std::abs(r.value[K]);
    out.panels = r.panels;
    out.ok = r.ok && inner_ok;
    return out;
}

/// Integral over the plane of an integrand with the given singular set.
inline IntegralResult integrate_2d(const Integrand2D& in, const SingularSet& sing, const QuadratureSpec& spec)
{
    spec.check();
    using F1 = std::function<Vec<1>(double, double)>;
    AxisSpec ua, va;
    if (sing.kind == SingularSetKind::Line) {
        const double rho = std::hypot(sing.a, sing.b);
        if (!(rho > 0)) throw Error(ErrorKind::InvalidSingularSet, "line needs (a,b) != (0,0)");
        if (!std::isinf(in.u_max) || !std::isinf(in.v_max))
            throw Error(ErrorKind::InvalidSingularSet, "line singularity needs the whole plane");
        const double n1 = sing.a / rho, n2 = sing.b / rho;
        F1 g = [&in, n1, n2](double s, double w) {
            return Vec<1>{in.f(n1 * s - n2 * w, n2 * s + n1 * w)};
        };
        double period = 0.0;
        for (double p : {in.period_u, in.period_v})
            if (p > 0) period = period > 0 ? std::min(period, p) : p;
        ua.singular = 0.0;
        ua.period = period;
        va.period = period;
        return finish(integrate_nested<1>(g, nullptr, nullptr, nullptr, ua, va, spec), spec);
    }
    ua.period = in.period_u;
    va.period = in.period_v;
    ua.lo = -in.u_max;
    ua.hi = in.u_max;
    va.lo = -in.v_max;
    va.hi = in.v_max;
    ua.even = in.even_u;
    va.even = in.even_v;
    switch (sing.kind) {
    case SingularSetKind::Origin: ua.singular = 0.0; va.singular = 0.0; break;
    case SingularSetKind::UAxis: va.singular = 0.0; break;
    case SingularSetKind::VAxis: ua.singular = 0.0; break;
    default: break;
    }
    F1 f = [&in](double u, double v) { return Vec<1>{in.f(u, v)}; };
    F1 mu, mv, muv;
    if (in.mean_u) mu = [&in](double u, double v) { return Vec<1>{in.mean_u(u, v)}; };
    if (in.mean_v) mv = [&in](double u, double v) { return Vec<1>{in.mean_v(u, v)}; };
    if (in.mean_uv) muv = [&in](double u, double v) { return Vec<1>{in.mean_uv(u, v)}; };
    return finish(integrate_nested<1>(f, in.mean_u ? &mu : nullptr, in.mean_v ? &mv : nullptr,
                                      in.mean_uv ? &muv : nullptr, ua, va, spec),
                  spec);
}

}  // namespace lrdfield
