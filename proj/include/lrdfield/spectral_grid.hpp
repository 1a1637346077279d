#pragma once

// Lattice autocovariances r(t1,t2) = iint_{[-pi,pi]^2} e^{i(t1 u + t2 v)} f(u,v) du dv on a
// uniform frequency grid. Each grid cell contributes through a 3x3 stencil on the
// neighbouring nodes: the exponential is replaced by its quadratic interpolant and
// the cell moments int f s^p t^q (p,q <= 2) are computed by quadrature, adaptively
// near the singular set. The weighted node grid is then Fourier transformed.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <tuple>
#include <vector>

#include "lrdfield/error.hpp"
#include "lrdfield/quadrature.hpp"
#include "lrdfield/spectral_models.hpp"

namespace lrdfield {

struct GridOptions {
    int refine = 4;            // nodes per unit lag, relative to 2 * max lag
    double smooth_scale = 16;  // cells this many widths from the singular set skip the smoothness check
    double cell_check_tol = 1e-9;
    QuadratureSpec cell_spec{1e-8, 1e-30, 200000, 2.0, 32.0};

    void check() const
    {
        if (refine < 2) throw Error(ErrorKind::ParameterOutOfRange, "refine must be >= 2");
        if (!(smooth_scale >= 2)) throw Error(ErrorKind::ParameterOutOfRange, "smooth_scale must be >= 2");
        cell_spec.check();
    }
};

namespace detail {

inline long good_fft_size(long n)
{
    n = std::max<long>(n, 8);
    for (long m = n + (n & 1);; m += 2) {
        long r = m;
        for (long p : {2, 3, 5})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

inline double wrap_angle(double u)
{
    if (u > pi) return u - 2 * pi;
    if (u < -pi) return u + 2 * pi;
    return u;
}

inline constexpr std::array<double, 4> gl4_x = {-0.4305681557970263, -0.1699905217924281, 0.1699905217924281,
                                                0.4305681557970263};
inline constexpr std::array<double, 4> gl4_w = {0.1739274225687269, 0.3260725774312731, 0.3260725774312731,
                                                0.1739274225687269};

// Coefficients of the quadratic Lagrange basis at nodes -1, 0, 1 in powers 1, s, s^2.
inline constexpr double lagrange[3][3] = {{0.0, -0.5, 0.5}, {1.0, 0.0, -1.0}, {0.0, 0.5, 0.5}};

inline std::mutex& fftw_mutex()
{
    static std::mutex mu;
    return mu;
}

/// Density on the torus; zero on the singular set (a null set).
inline double torus_density(const ValidatedModel& m, double u, double v)
{
    u = wrap_angle(u);
    v = wrap_angle(v);
    if (m.in_singular_set(u, v)) return 0.0;
    return m.density(u, v);
}

/// Whether f is smooth on the scale of a cell centred at (u,v).
inline bool smooth_cell(const ValidatedModel& m, double u, double v, double hu, double hv, double D)
{
    const double uw = wrap_angle(u), vw = wrap_angle(v);
    u = std::abs(uw);
    v = std::abs(vw);
    switch (m.kind()) {
    case ModelKind::TypeI: {
        const double c = m->c.value, q = m.q();
        const double su = std::max(u, std::sqrt(c) * std::pow(v, 0.5 * q));
        const double sv = std::max(v, std::pow(u * u / c, 1.0 / q));
        return su >= D * hu && sv >= D * hv;
    }
    case ModelKind::TypeII: return u >= D * hu && v >= D * hv;
    case ModelKind::LinearSingular: {
        const double a = m->a.value, b = m->b.value;
        double dist = std::numeric_limits<double>::infinity();
        // The singular line and its images under the torus identifications.
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
                dist = std::min(dist, std::abs(a * (uw + 2 * pi * i) + b * (vw + 2 * pi * j)));
        return dist >= D * (std::abs(a) * hu + std::abs(b) * hv);
    }
    case ModelKind::WhiteNoise: return true;
    }
    return false;
}

/// Whether the closed cell centred at (u,v) meets the singular set.
inline bool touches_singular(const ValidatedModel& m, double u, double v, double hu, double hv)
{
    const double uw = wrap_angle(u), vw = wrap_angle(v);
    const double eu = 0.5 * hu * (1 + 1e-9), ev = 0.5 * hv * (1 + 1e-9);
    switch (m.kind()) {
    case ModelKind::TypeI: return std::abs(uw) <= eu && std::abs(vw) <= ev;
    case ModelKind::TypeII: return std::abs(uw) <= eu || std::abs(vw) <= ev;
    case ModelKind::LinearSingular: {
        const double a = m->a.value, b = m->b.value;
        double dist = std::numeric_limits<double>::infinity();
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
                dist = std::min(dist, std::abs(a * (uw + 2 * pi * i) + b * (vw + 2 * pi * j)));
        return dist <= std::abs(a) * eu + std::abs(b) * ev;
    }
    case ModelKind::WhiteNoise: return false;
    }
    return false;
}

using M9 = Vec<9>;
using M3 = Vec<3>;

inline std::vector<double> wrap_breaks(double lo, double hi)
{
    std::vector<double> out;
    for (double b : {-pi, pi})
        if (b > lo && b < hi) out.push_back(b);
    return out;
}

/// Tensor Gauss-Legendre moments over [u0,u1] x [v0,v1] of a cell centred at (uc,vc).
template <class F>
M9 gl_moments(const F& f, double u0, double u1, double v0, double v1, double uc, double vc, double hu, double hv)
{
    M9 mu{};
    const double wu = u1 - u0, wv = v1 - v0;
    for (int i = 0; i < 4; ++i) {
        const double u = 0.5 * (u0 + u1) + wu * gl4_x[i];
        const double s = (u - uc) / hu;
        for (int j = 0; j < 4; ++j) {
            const double v = 0.5 * (v0 + v1) + wv * gl4_x[j];
            const double t = (v - vc) / hv;
            const double w = wu * gl4_w[i] * wv * gl4_w[j] * f(u, v);
            const double sp[3] = {1.0, s, s * s}, tp[3] = {1.0, t, t * t};
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q) mu[3 * p + q] += w * sp[p] * tp[q];
        }
    }
    return mu;
}

template <class F>
M9 gl_moments_split(const F& f, double uc, double vc, double hu, double hv, int parts)
{
    M9 mu{};
    for (int i = 0; i < parts; ++i)
        for (int j = 0; j < parts; ++j) {
            const double u0 = uc - 0.5 * hu + hu * i / parts, u1 = uc - 0.5 * hu + hu * (i + 1) / parts;
            const double v0 = vc - 0.5 * hv + hv * j / parts, v1 = vc - 0.5 * hv + hv * (j + 1) / parts;
            // Split further at the wrap lines so no panel straddles a kink.
            std::vector<double> us{u0}, vs{v0};
            for (double b : wrap_breaks(u0, u1)) us.push_back(b);
            for (double b : wrap_breaks(v0, v1)) vs.push_back(b);
            us.push_back(u1);
            vs.push_back(v1);
            for (std::size_t a = 0; a + 1 < us.size(); ++a)
                for (std::size_t b = 0; b + 1 < vs.size(); ++b)
                    mu += gl_moments(f, us[a], us[a + 1], vs[b], vs[b + 1], uc, vc, hu, hv);
        }
    return mu;
}

/// Singular-set location hints for nested quadrature over a cell.
struct CellHints {
    std::optional<double> u_sing;
    std::function<std::optional<double>(double)> v_sing;
    std::vector<double> u_breaks;
};

inline CellHints cell_hints(const ValidatedModel& m, double uc, double vc, double hu, double hv)
{
    CellHints h;
    const double u0 = uc - 0.5 * hu, u1 = uc + 0.5 * hu;
    h.u_breaks = wrap_breaks(u0, u1);
    // Representative of x + 2 pi k nearest to `near`.
    auto nearest = [](double x, double near) { return x + 2 * pi * std::round((near - x) / (2 * pi)); };
    switch (m.kind()) {
    case ModelKind::TypeI:
    case ModelKind::TypeII:
        h.u_sing = nearest(0.0, uc);
        h.v_sing = [vc](double) -> std::optional<double> { return 2 * pi * std::round(vc / (2 * pi)); };
        break;
    case ModelKind::LinearSingular: {
        const double a = m->a.value, b = m->b.value;
        h.v_sing = [a, b, vc, nearest](double u) -> std::optional<double> {
            return nearest(-a * wrap_angle(u) / b, vc);
        };
        const double v0 = vc - 0.5 * hv, v1 = vc + 0.5 * hv;
        for (double vb : {v0, v1}) {
            const double ub = nearest(-b * wrap_angle(vb) / a, uc);
            if (ub > u0 && ub < u1) h.u_breaks.push_back(ub);
        }
        break;
    }
    case ModelKind::WhiteNoise: break;
    }
    return h;
}

/// Adaptive nested moments over one cell.
template <class F>
Partial<9> adaptive_moments(const F& f, double uc, double vc, double hu, double hv, const CellHints& hints,
                            const QuadratureSpec& q)
{
    const double u0 = uc - 0.5 * hu, u1 = uc + 0.5 * hu;
    const double v0 = vc - 0.5 * hv, v1 = vc + 0.5 * hv;
    QuadratureSpec inner_q = q;
    inner_q.rel_tol = std::max(1e-13, 0.25 * q.rel_tol);
    bool inner_ok = true;
    LineIntegrator<10>::Fn outer_f = [&](double u) {
        AxisSpec va;
        va.lo = v0;
        va.hi = v1;
        va.breakpoints = wrap_breaks(v0, v1);
        if (hints.v_sing) va.singular = hints.v_sing(u);
        const double s = (u - uc) / hu;
        LineIntegrator<9> li(inner_q);
        LineIntegrator<9>::Fn g = [&](double v) {
            const double t = (v - vc) / hv;
            const double fv = f(u, v);
            M9 r;
            const double sp[3] = {1.0, s, s * s}, tp[3] = {1.0, t, t * t};
            for (int p = 0; p < 3; ++p)
                for (int k = 0; k < 3; ++k) r[3 * p + k] = fv * sp[p] * tp[k];
            return r;
        };
        Partial<9> in = li.integrate(g, nullptr, va);
        if (!in.ok) inner_ok = false;
        Vec<10> out;
        for (int i = 0; i < 9; ++i) out[i] = in.value[i];
        out[9] = in.err;
        return out;
    };
    AxisSpec ua;
    ua.lo = u0;
    ua.hi = u1;
    ua.breakpoints = hints.u_breaks;
    ua.singular = hints.u_sing;
    if (!ua.breakpoints.empty() && ua.singular && *ua.singular > u0 && *ua.singular < u1)
        ua.breakpoints.push_back(*ua.singular);
    LineIntegrator<10> outer(q);
    Partial<10> r = outer.integrate(outer_f, nullptr, ua);
    Partial<9> out;
    for (int i = 0; i < 9; ++i) out.value[i] = r.value[i];
    out.err = r.err + std::abs(r.value[9]);
    out.panels = r.panels;
    out.ok = r.ok && inner_ok;
    return out;
}

/// Moments of a cell for |a U + b V|^{-2d} (constant g): integrate first along the lines
/// a u + b v = w, where the integrand is polynomial, then over w.
inline Partial<9> linear_cell_moments(const ValidatedModel& m, double uc, double vc, double hu, double hv,
                                      const QuadratureSpec& q)
{
    const double a = m->a.value, b = m->b.value, p2 = 2 * m->d.value;
    static constexpr double g3x[3] = {-0.3872983346207417, 0.0, 0.3872983346207417};
    static constexpr double g3w[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
    Partial<9> total;
    std::vector<double> us{uc - 0.5 * hu}, vs{vc - 0.5 * hv};
    for (double x : wrap_breaks(uc - 0.5 * hu, uc + 0.5 * hu)) us.push_back(x);
    for (double x : wrap_breaks(vc - 0.5 * hv, vc + 0.5 * hv)) vs.push_back(x);
    us.push_back(uc + 0.5 * hu);
    vs.push_back(vc + 0.5 * hv);
    for (std::size_t i = 0; i + 1 < us.size(); ++i)
        for (std::size_t j = 0; j + 1 < vs.size(); ++j) {
            const double u0 = us[i], u1 = us[i + 1], v0 = vs[j], v1 = vs[j + 1];
            const double ou = 0.5 * (u0 + u1) - wrap_angle(0.5 * (u0 + u1));
            const double ov = 0.5 * (v0 + v1) - wrap_angle(0.5 * (v0 + v1));
            const double shift = a * ou + b * ov;
            std::vector<double> ws = {a * u0 + b * v0, a * u0 + b * v1, a * u1 + b * v0, a * u1 + b * v1};
            std::sort(ws.begin(), ws.end());
            LineIntegrator<9>::Fn g = [&](double w) {
                M9 r{};
                double z0 = (w - b * v0) / a, z1 = (w - b * v1) / a;
                if (z0 > z1) std::swap(z0, z1);
                z0 = std::max(z0, u0);
                z1 = std::min(z1, u1);
                if (!(z1 > z0)) return r;
                const double dw = std::abs(w - shift);
                if (dw == 0.0) return r;
                const double fw = std::pow(dw, -p2) / std::abs(b);
                for (int k = 0; k < 3; ++k) {
                    const double z = 0.5 * (z0 + z1) + (z1 - z0) * g3x[k];
                    const double s = (z - uc) / hu, t = ((w - a * z) / b - vc) / hv;
                    const double wt = (z1 - z0) * g3w[k] * fw;
                    const double sp[3] = {1.0, s, s * s}, tp[3] = {1.0, t, t * t};
                    for (int pp = 0; pp < 3; ++pp)
                        for (int qq = 0; qq < 3; ++qq) r[3 * pp + qq] += wt * sp[pp] * tp[qq];
                }
                return r;
            };
            AxisSpec ax;
            ax.lo = ws.front();
            ax.hi = ws.back();
            ax.breakpoints.assign(ws.begin() + 1, ws.end() - 1);
            ax.singular = shift;
            if (!(ax.hi > ax.lo)) continue;
            LineIntegrator<9> li(q);
            total += li.integrate(g, nullptr, ax);
        }
    return total;
}

struct CellResult {
    M9 mu{};
    double err = 0.0;
    bool ok = true;         // cell error within tolerance of the cell's own mass
    bool budget_ok = true;  // quadrature finished inside its panel budget
};

template <class F>
CellResult cell_moments(const ValidatedModel& m, const F& f, double uc, double vc, double hu, double hv,
                        const GridOptions& opt)
{
    CellResult c;
    if (smooth_cell(m, uc, vc, hu, hv, opt.smooth_scale)) {
        c.mu = gl_moments_split(f, uc, vc, hu, hv, 1);
        return c;
    }
    if (!touches_singular(m, uc, vc, hu, hv)) {
        const M9 coarse = gl_moments_split(f, uc, vc, hu, hv, 1);
        const M9 fine = gl_moments_split(f, uc, vc, hu, hv, 2);
        double diff = 0.0;
        for (int i = 0; i < 9; ++i) diff = std::max(diff, std::abs(fine[i] - coarse[i]));
        if (diff <= opt.cell_check_tol * std::abs(fine[0])) {
            c.mu = fine;
            c.err = diff / 256.0;
            return c;
        }
    }
    const Partial<9> p = m.kind() == ModelKind::LinearSingular && m->g.is_constant()
                             ? linear_cell_moments(m, uc, vc, hu, hv, opt.cell_spec)
                             : adaptive_moments(f, uc, vc, hu, hv, cell_hints(m, uc, vc, hu, hv), opt.cell_spec);
    c.mu = p.value;
    c.err = p.err;
    c.budget_ok = p.ok;
    c.ok = p.ok && p.err <= 10 * opt.cell_spec.rel_tol * std::abs(p.value[0]) + opt.cell_spec.abs_tol;
    return c;
}

/// 3x3 node weights W = A mu A^T.
inline std::array<std::array<double, 3>, 3> stencil(const M9& mu)
{
    std::array<std::array<double, 3>, 3> w{};
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
            double s = 0.0;
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q) s += lagrange[j][p] * mu[3 * p + q] * lagrange[k][q];
            w[j][k] = s;
        }
    return w;
}

inline std::array<double, 3> stencil_1d(const M3& mu)
{
    std::array<double, 3> w{};
    for (int j = 0; j < 3; ++j)
        for (int p = 0; p < 3; ++p) w[j] += lagrange[j][p] * mu[p];
    return w;
}

/// Real part of the DFT of a real G1 x G2 grid: out(k1, k2) for k2 in [0, G2/2].
inline std::vector<double> real_dft_2d(std::vector<double>& w, long G1, long G2)
{
    const long H = G2 / 2 + 1;
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(G1 * H));
    if (!out) throw Error(ErrorKind::BudgetExceeded, "FFT allocation failed");
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_r2c_2d(static_cast<int>(G1), static_cast<int>(G2), w.data(), out, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::vector<double> re(static_cast<std::size_t>(G1 * H));
    for (long i = 0; i < G1 * H; ++i) re[i] = out[i][0];
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(out);
    return re;
}

inline std::vector<double> real_dft_1d(std::vector<double>& w)
{
    const long G = static_cast<long>(w.size());
    const long H = G / 2 + 1;
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(H));
    if (!out) throw Error(ErrorKind::BudgetExceeded, "FFT allocation failed");
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(G), w.data(), out, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::vector<double> re(static_cast<std::size_t>(H));
    for (long i = 0; i < H; ++i) re[i] = out[i][0];
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(out);
    return re;
}

inline long pmod(long k, long G) { return ((k % G) + G) % G; }

}  // namespace detail

/// Autocovariances from a G1 x G2 frequency grid. r(t1,t2) is exactly symmetric under t -> -t.
struct SpectralLagGrid {
    long G1 = 0, G2 = 0;
    std::vector<double> re;  // G1 x (G2/2 + 1)
    double err = 0.0;        // accumulated cell quadrature error (absolute, on r(0,0))
    bool ok = true;

    double operator()(long t1, long t2) const
    {
        if (t2 < 0 || (t2 == 0 && t1 < 0)) {
            t1 = -t1;
            t2 = -t2;
        }
        const long H = G2 / 2 + 1;
        return re[static_cast<std::size_t>(detail::pmod(t1, G1) * H + t2)];
    }
};

/// One-dimensional analogue: r(t) = int_{-pi}^{pi} e^{itu} phi(u) du, exactly even in t.
struct SpectralLagLine {
    long G = 0;
    std::vector<double> re;  // G/2 + 1
    double err = 0.0;
    bool ok = true;

    double operator()(long t) const { return re[static_cast<std::size_t>(std::abs(t))]; }
};

inline SpectralLagGrid spectral_lag_grid(const ValidatedModel& m, long G1, long G2, const GridOptions& opt = {})
{
    opt.check();
    if (G1 < 8 || G2 < 8 || (G1 & 1) || (G2 & 1))
        throw Error(ErrorKind::ParameterOutOfRange, "grid sizes must be even and >= 8");
    const double hu = 2 * pi / G1, hv = 2 * pi / G2;
    auto f = [&m](double u, double v) { return detail::torus_density(m, u, v); };
    std::vector<double> w(static_cast<std::size_t>(G1 * G2), 0.0);
    SpectralLagGrid g;
    g.G1 = G1;
    g.G2 = G2;
    auto scatter = [&](long k, long l, const detail::M9& mu) {
        const auto st = detail::stencil(mu);
        for (int j = 0; j < 3; ++j)
            for (int jj = 0; jj < 3; ++jj)
                w[static_cast<std::size_t>(detail::pmod(k + j - 1, G1) * G2 + detail::pmod(l + jj - 1, G2))] +=
                    st[j][jj];
    };
    auto mirror = [](detail::M9 mu, bool fu, bool fv) {
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
                if ((fu && p == 1) != (fv && q == 1)) mu[3 * p + q] = -mu[3 * p + q];
        return mu;
    };
    const long K1 = G1 / 2, K2 = G2 / 2;
    // A cell that misses its own tolerance is acceptable when the accumulated error stays
    // within tolerance of the total mass r(0,0).
    bool budget_ok = true;
    double mass = 0.0;
    auto account = [&](const detail::CellResult& c, int copies) {
        g.err += c.err * copies;
        g.ok = g.ok && c.ok;
        budget_ok = budget_ok && c.budget_ok;
        mass += c.mu[0] * copies;
    };
    if (m.separately_even()) {
        for (long k = 0; k <= K1; ++k)
            for (long l = 0; l <= K2; ++l) {
                const detail::CellResult c = detail::cell_moments(m, f, k * hu, l * hv, hu, hv, opt);
                const bool mu_u = k != 0 && k != K1, mu_v = l != 0 && l != K2;
                account(c, (mu_u && mu_v) ? 4 : ((mu_u || mu_v) ? 2 : 1));
                scatter(k, l, c.mu);
                if (mu_u) scatter(-k, l, mirror(c.mu, true, false));
                if (mu_v) scatter(k, -l, mirror(c.mu, false, true));
                if (mu_u && mu_v) scatter(-k, -l, mirror(c.mu, true, true));
            }
    } else {
        for (long l = 0; l <= K2; ++l)
            for (long k = -K1; k < K1; ++k) {
                const bool edge = l == 0 || l == K2;
                if (edge && k < 0) {
                    // (k, l) mirrors (-k, -l) = (-k, l) on the edge rows; computed from k > 0 below.
                    if (k == -K1) {
                        const detail::CellResult c = detail::cell_moments(m, f, k * hu, l * hv, hu, hv, opt);
                        account(c, 1);
                        scatter(k, l, c.mu);
                    }
                    continue;
                }
                const detail::CellResult c = detail::cell_moments(m, f, k * hu, l * hv, hu, hv, opt);
                const bool has_mirror = !(k == 0 && edge);
                account(c, has_mirror ? 2 : 1);
                scatter(k, l, c.mu);
                if (has_mirror) scatter(-k, -l, mirror(c.mu, true, true));
            }
    }
    if (!g.ok) g.ok = budget_ok && g.err <= 10 * opt.cell_spec.rel_tol * std::abs(mass) + opt.cell_spec.abs_tol;
    g.re = detail::real_dft_2d(w, G1, G2);
    return g;
}

/// Lag line for a one-dimensional even function phi on [-pi, pi] with an optional singular point at 0.
inline SpectralLagLine spectral_lag_line(const std::function<double(double)>& phi, bool singular_at_zero, long G,
                                         const GridOptions& opt = {}, long band = 8)
{
    opt.check();
    if (G < 8 || (G & 1)) throw Error(ErrorKind::ParameterOutOfRange, "grid size must be even and >= 8");
    const double h = 2 * pi / G;
    auto fw = [&phi](double u) {
        u = detail::wrap_angle(u);
        return u == 0.0 ? 0.0 : phi(u);
    };
    auto fwr = [&](double u) {
        u = detail::wrap_angle(u);
        return phi(u);
    };
    std::vector<double> w(static_cast<std::size_t>(G), 0.0);
    SpectralLagLine line;
    line.G = G;
    const long K = G / 2;
    auto gl = [&](double lo, double hi, double uc) {
        detail::M3 mu{};
        const double wd = hi - lo;
        for (int i = 0; i < 4; ++i) {
            const double u = 0.5 * (lo + hi) + wd * detail::gl4_x[i];
            const double s = (u - uc) / h;
            const double v = wd * detail::gl4_w[i] * (singular_at_zero ? fw(u) : fwr(u));
            mu[0] += v;
            mu[1] += v * s;
            mu[2] += v * s * s;
        }
        return mu;
    };
    for (long k = 0; k <= K; ++k) {
        const double uc = k * h;
        detail::M3 mu{};
        if (singular_at_zero && k <= band) {
            LineIntegrator<3> li(opt.cell_spec);
            AxisSpec ax;
            ax.lo = uc - 0.5 * h;
            ax.hi = uc + 0.5 * h;
            ax.singular = 0.0;
            LineIntegrator<3>::Fn g = [&](double u) {
                const double s = (u - uc) / h;
                const double v = fw(u);
                return detail::M3{v, v * s, v * s * s};
            };
            const Partial<3> p = li.integrate(g, nullptr, ax);
            mu = p.value;
            line.err += p.err * (k == 0 ? 1 : 2);
            line.ok = line.ok && p.ok;
        } else if (k == K) {
            mu = gl(uc - 0.5 * h, pi, uc);
            mu += gl(pi, uc + 0.5 * h, uc);
        } else {
            mu = gl(uc - 0.5 * h, uc + 0.5 * h, uc);
        }
        auto put = [&](long kk, const detail::M3& m3) {
            const auto st = detail::stencil_1d(m3);
            for (int j = 0; j < 3; ++j) w[static_cast<std::size_t>(detail::pmod(kk + j - 1, G))] += st[j];
        };
        put(k, mu);
        if (k != 0 && k != K) put(-k, detail::M3{mu[0], -mu[1], mu[2]});
    }
    line.re = detail::real_dft_1d(w);
    return line;
}

/// Covariances r(t1,t2) for |t1| <= L1, |t2| <= L2.
struct LagGrid {
    long L1 = 0, L2 = 0;
    std::vector<double> r;  // (2 L1 + 1) x (2 L2 + 1), row-major in t1
    double err = 0.0;
    bool ok = true;

    double operator()(long t1, long t2) const
    {
        return r[static_cast<std::size_t>((t1 + L1) * (2 * L2 + 1) + (t2 + L2))];
    }
};

namespace detail {

inline std::shared_ptr<const SpectralLagGrid> cached_lag_grid(const ValidatedModel& m, long G1, long G2,
                                                              const GridOptions& opt)
{
    using Key = std::tuple<std::uint64_t, long, long, int, double, double>;
    static std::map<Key, std::shared_ptr<const SpectralLagGrid>> cache;
    static std::mutex mu;
    const Key key{model_hash(m.model()), G1, G2, opt.refine, opt.smooth_scale, opt.cell_spec.rel_tol};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto g = std::make_shared<const SpectralLagGrid>(spectral_lag_grid(m, G1, G2, opt));
    std::lock_guard<std::mutex> lock(mu);
    if (cache.size() >= 6) cache.clear();
    cache.emplace(key, g);
    return g;
}

}  // namespace detail

inline LagGrid autocovariance_grid(const ValidatedModel& m, long L1, long L2, const GridOptions& opt = {})
{
    if (L1 < 0 || L2 < 0) throw Error(ErrorKind::ParameterOutOfRange, "lag ranges must be nonnegative");
    LagGrid out;
    out.L1 = L1;
    out.L2 = L2;
    out.r.assign(static_cast<std::size_t>((2 * L1 + 1) * (2 * L2 + 1)), 0.0);
    const long G1 = detail::good_fft_size(2 * opt.refine * std::max<long>(L1, 1));
    const long G2 = detail::good_fft_size(2 * opt.refine * std::max<long>(L2, 1));
    if (m.separable()) {
        const bool s1 = m.kind() == ModelKind::TypeII, s2 = s1;
        const SpectralLagLine r1 = spectral_lag_line([&m](double u) { return m.factor_u(u); }, s1, G1, opt);
        const SpectralLagLine r2 = spectral_lag_line([&m](double v) { return m.factor_v(v); }, s2, G2, opt);
        for (long a = -L1; a <= L1; ++a)
            for (long b = -L2; b <= L2; ++b)
                out.r[static_cast<std::size_t>((a + L1) * (2 * L2 + 1) + (b + L2))] = r1(a) * r2(b);
        out.err = r1.err * std::abs(r2(0)) + r2.err * std::abs(r1(0));
        out.ok = r1.ok && r2.ok;
    } else {
        const auto g = detail::cached_lag_grid(m, G1, G2, opt);
        for (long a = -L1; a <= L1; ++a)
            for (long b = -L2; b <= L2; ++b)
                out.r[static_cast<std::size_t>((a + L1) * (2 * L2 + 1) + (b + L2))] = (*g)(a, b);
        out.err = g->err;
        out.ok = g->ok;
    }
    if (!out.ok) throw Error(ErrorKind::NotConverged, "cell quadrature near the singular set did not converge");
    const double r0 = out(0, 0);
    for (double x : out.r)
        if (std::abs(x) > r0 * (1 + 1e-9) + out.err)
            throw Error(ErrorKind::NotConverged, "autocovariance grid violates |r(t)| <= r(0)");
    return out;
}

}  // namespace lrdfield
