#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "lrdfield/error.hpp"
#include "lrdfield/geometry.hpp"
#include "lrdfield/quadrature.hpp"
#include "lrdfield/spectral_grid.hpp"
#include "lrdfield/spectral_models.hpp"

namespace lrdfield {

/// D_n(u) = sum_{t=1}^n e^{itu}, via the half-angle form e^{i(n+1)u/2} sin(nu/2) / sin(u/2).
inline std::complex<double> dirichlet(long n, double u)
{
    if (n < 0) throw Error(ErrorKind::ParameterOutOfRange, "dirichlet needs n >= 0");
    if (!(std::abs(u) <= pi)) throw Error(ErrorKind::OutOfDomain, "dirichlet needs |u| <= pi");
    if (n == 0) return 0.0;
    if (u == 0.0) return static_cast<double>(n);
    const double mag = std::sin(0.5 * n * u) / std::sin(0.5 * u);
    const double ph = 0.5 * (n + 1) * u;
    return {mag * std::cos(ph), mag * std::sin(ph)};
}

/// #{(t, t') in [1,N] x [1,N'] : t - t' = tau}.
inline long lag_weight(long N, long Np, long tau)
{
    const long lo = std::max(1L, 1 + tau), hi = std::min(N, Np + tau);
    return std::max(0L, hi - lo + 1);
}

/// floor(t), except that values within 1e-9 (relative) of an integer snap to it.
inline long snapped_floor(double t)
{
    const double r = std::round(t);
    if (std::abs(t - r) <= 1e-9 * std::max(1.0, std::abs(t))) return static_cast<long>(r);
    return static_cast<long>(std::floor(t));
}

/// m = floor(n^gamma).
inline long scaled_count(long n, double gamma)
{
    if (n < 1) throw Error(ErrorKind::ParameterOutOfRange, "n must be >= 1");
    if (!(gamma > 0)) throw Error(ErrorKind::ParameterOutOfRange, "gamma must be positive");
    return snapped_floor(std::pow(static_cast<double>(n), gamma));
}

enum class PrelimitMethod { DirichletQuadrature, FFTLagSum, Both };

inline const char* to_string(PrelimitMethod m)
{
    switch (m) {
    case PrelimitMethod::DirichletQuadrature: return "DirichletQuadrature";
    case PrelimitMethod::FFTLagSum: return "FFTLagSum";
    case PrelimitMethod::Both: return "Both";
    }
    return "?";
}

struct PrelimitQuery {
    ValidatedModel model;
    long n = 1;
    Number gamma = 1.0;
    Point p{1, 1}, pp{1, 1};
    PrelimitMethod method = PrelimitMethod::FFTLagSum;
};

struct PrelimitOptions {
    GridOptions grid;
    double dirichlet_limit = 1 << 20;  // largest n * m for the Dirichlet route
    double grid_budget = 1 << 22;      // largest G1 * G2 for the two-dimensional lag grid
    long band = 8;                     // cells integrated directly around the singular point (mixed route)
};

struct PrelimitCounts {
    long n = 0, m = 0;
    long N = 0, Np = 0, M = 0, Mp = 0;
};

struct PrelimitResult {
    IntegralResult value;
    std::optional<IntegralResult> dirichlet, lag_sum;
    std::string lag_route;
    double discrepancy = 0.0;
    bool agree = true;
    PrelimitCounts counts;
};

inline PrelimitCounts prelimit_counts(const PrelimitQuery& q)
{
    if (!(q.p.x > 0 && q.p.y > 0 && q.pp.x > 0 && q.pp.y > 0))
        throw Error(ErrorKind::ParameterOutOfRange, "points must be strictly positive");
    PrelimitCounts c;
    c.n = q.n;
    c.m = scaled_count(q.n, q.gamma.value);
    if (c.m < 1) throw Error(ErrorKind::ParameterOutOfRange, "floor(n^gamma) must be >= 1");
    c.N = snapped_floor(q.n * q.p.x);
    c.Np = snapped_floor(q.n * q.pp.x);
    c.M = snapped_floor(c.m * q.p.y);
    c.Mp = snapped_floor(c.m * q.pp.y);
    return c;
}

namespace detail {

/// sin^2(A u / 2) / (2 sin^2(u / 2)), i.e. |D_A(u)|^2 / 2.
inline double fejer_half(double A, double u)
{
    const double s = std::sin(0.5 * u);
    if (s == 0.0) return 0.5 * A * A;
    const double t = std::sin(0.5 * A * u);
    return t * t / (2 * s * s);
}

inline double fejer_mean(double u)
{
    const double s = std::sin(0.5 * u);
    return 1.0 / (4 * s * s);
}

/// Re[D_N conj D_N'] = sum_j s_j |D_{a_j}|^2 / 2 with a = (N, N', |N - N'|), s = (1, 1, -1).
struct FejerTerms {
    std::array<long, 3> a{};
    std::array<double, 3> s{1.0, 1.0, -1.0};
};

inline FejerTerms fejer_terms(long N, long Np) { return {{N, Np, std::abs(N - Np)}}; }

/// int_{-pi}^{pi} K_A(u) phi(u) du for even phi, with the oscillation-averaged tail.
inline IntegralResult fejer_line(long A, const std::function<double(double)>& phi, const QuadratureSpec& q)
{
    if (A == 0) return {};
    LineIntegrator<1> li(q);
    AxisSpec ax;
    ax.lo = -pi;
    ax.hi = pi;
    ax.singular = 0.0;
    ax.even = true;
    ax.period = 2 * pi / static_cast<double>(A);
    const double Ad = static_cast<double>(A);
    LineIntegrator<1>::Fn f = [&phi, Ad](double u) { return Vec<1>{fejer_half(Ad, u) * phi(u)}; };
    LineIntegrator<1>::Fn mean = [&phi](double u) { return Vec<1>{fejer_mean(u) * phi(u)}; };
    return finish(li.integrate(f, &mean, ax), q);
}

/// T(A,B) = iint K_A(u) K_B(v) f(u,v) du dv over [-pi,pi]^2 (separately even f).
inline IntegralResult fejer_box(const ValidatedModel& m, long A, long B, const QuadratureSpec& q)
{
    if (A == 0 || B == 0) return {};
    using Key = std::tuple<std::uint64_t, long, long, double, double>;
    static std::map<Key, IntegralResult> cache;
    static std::mutex mu;
    const Key key{model_hash(m.model()), A, B, q.rel_tol, q.tail_cutoff};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    IntegralResult r;
    if (m.separable()) {
        const IntegralResult ru = fejer_line(A, [&m](double u) { return m.factor_u(u); }, q);
        const IntegralResult rv = fejer_line(B, [&m](double v) { return m.factor_v(v); }, q);
        r.value = ru.value * rv.value;
        r.err_estimate = std::abs(ru.value) * rv.err_estimate + std::abs(rv.value) * ru.err_estimate;
        r.panels_used = ru.panels_used + rv.panels_used;
        r.converged = ru.converged && rv.converged;
    } else {
        const double Ad = static_cast<double>(A), Bd = static_cast<double>(B);
        auto f = [&m](double u, double v) { return torus_density(m, u, v); };
        Integrand2D in;
        in.f = [=](double u, double v) { return fejer_half(Ad, u) * fejer_half(Bd, v) * f(u, v); };
        in.mean_u = [=](double u, double v) { return fejer_mean(u) * fejer_half(Bd, v) * f(u, v); };
        in.mean_v = [=](double u, double v) { return fejer_half(Ad, u) * fejer_mean(v) * f(u, v); };
        in.mean_uv = [=](double u, double v) { return fejer_mean(u) * fejer_mean(v) * f(u, v); };
        in.period_u = 2 * pi / Ad;
        in.period_v = 2 * pi / Bd;
        in.even_u = in.even_v = true;
        in.u_max = in.v_max = pi;
        r = integrate_2d(in, SingularSet::origin(), q);
    }
    std::lock_guard<std::mutex> lock(mu);
    if (cache.size() > 4096) cache.clear();
    cache.emplace(key, r);
    return r;
}

inline IntegralResult dirichlet_route_even(const ValidatedModel& m, const PrelimitCounts& c, const QuadratureSpec& q)
{
    const FejerTerms tx = fejer_terms(c.N, c.Np), ty = fejer_terms(c.M, c.Mp);
    IntegralResult out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (tx.a[i] == 0 || ty.a[j] == 0) continue;
            const IntegralResult t = fejer_box(m, tx.a[i], ty.a[j], q);
            out.value += tx.s[i] * ty.s[j] * t.value;
            out.err_estimate += t.err_estimate;
            out.panels_used += t.panels_used;
            out.converged = out.converged && t.converged;
        }
    return out;
}

/// sin(N u/2) sin(N' u/2) / sin^2(u/2) = |D_N D_N'|.
inline double dirichlet_mod_product(long N, long Np, double u)
{
    const double s = std::sin(0.5 * u);
    if (s == 0.0) return static_cast<double>(N) * static_cast<double>(Np);
    return std::sin(0.5 * N * u) * std::sin(0.5 * Np * u) / (s * s);
}

/// Full complex integrand for densities that are only centrally symmetric.
inline IntegralResult dirichlet_route_general(const ValidatedModel& m, const PrelimitCounts& c,
                                              const QuadratureSpec& q)
{
    const double a = m->a.value, b = m->b.value;
    const double du = 0.5 * static_cast<double>(c.N - c.Np), dv = 0.5 * static_cast<double>(c.M - c.Mp);
    QuadratureSpec inner_q = q;
    inner_q.rel_tol = std::max(1e-13, 0.25 * q.rel_tol);
    bool inner_ok = true;
    const double pu = 2 * pi / static_cast<double>(std::max(c.N, c.Np));
    const double pv = 2 * pi / static_cast<double>(std::max(c.M, c.Mp));
    LineIntegrator<2>::Fn outer_f = [&](double u) {
        const double sx = dirichlet_mod_product(c.N, c.Np, u);
        AxisSpec va;
        va.lo = -pi;
        va.hi = pi;
        va.period = pv;
        va.singular = -a * u / b;
        LineIntegrator<1> li(inner_q);
        LineIntegrator<1>::Fn g = [&](double v) {
            const double fv = torus_density(m, u, v);
            return Vec<1>{sx * dirichlet_mod_product(c.M, c.Mp, v) * std::cos(du * u + dv * v) * fv};
        };
        const Partial<1> in = li.integrate(g, nullptr, va);
        if (!in.ok) inner_ok = false;
        return Vec<2>{in.value[0], in.err};
    };
    AxisSpec ua;
    ua.lo = 0.0;
    ua.hi = pi;
    ua.period = pu;
    const double uc = std::abs(b) * pi / std::abs(a);
    if (uc < pi) ua.breakpoints.push_back(uc);
    LineIntegrator<2> outer(q);
    const Partial<2> r = outer.integrate(outer_f, nullptr, ua);
    IntegralResult out;
    out.value = 2 * r.value[0];
    out.err_estimate = 2 * (r.err + std::abs(r.value[1]));
    out.panels_used = r.panels;
    out.converged = r.ok && inner_ok && out.err_estimate <= std::max(q.abs_tol, q.rel_tol * std::abs(out.value));
    return out;
}

/// Lag sum with weights paired over (tau, -tau), so that swapping the two points is exact.
inline double lag_sum_2d(const SpectralLagGrid& g, const PrelimitCounts& c)
{
    const long T1 = std::max(c.N, c.Np) - 1, T2 = std::max(c.M, c.Mp) - 1;
    std::vector<double> c1p(T1 + 1), c1m(T1 + 1), c2p(T2 + 1), c2m(T2 + 1);
    for (long t = 0; t <= T1; ++t) {
        c1p[t] = static_cast<double>(lag_weight(c.N, c.Np, t));
        c1m[t] = static_cast<double>(lag_weight(c.N, c.Np, -t));
    }
    for (long t = 0; t <= T2; ++t) {
        c2p[t] = static_cast<double>(lag_weight(c.M, c.Mp, t));
        c2m[t] = static_cast<double>(lag_weight(c.M, c.Mp, -t));
    }
    double total = c1p[0] * c2p[0] * g(0, 0);
    for (long t1 = 1; t1 <= T1; ++t1) total += (c1p[t1] * c2p[0] + c1m[t1] * c2m[0]) * g(t1, 0);
    for (long t2 = 1; t2 <= T2; ++t2) {
        double row = 0.0;
        for (long t1 = -T1; t1 <= T1; ++t1) {
            const double a1 = t1 >= 0 ? c1p[t1] : c1m[-t1];
            const double b1 = t1 >= 0 ? c1m[t1] : c1p[-t1];
            const double e = a1 * c2p[t2] + b1 * c2m[t2];
            if (e != 0.0) row += e * g(t1, t2);
        }
        total += row;
    }
    return total;
}

inline double lag_sum_1d(const SpectralLagLine& r, long N, long Np)
{
    const long T = std::max(N, Np) - 1;
    double total = static_cast<double>(lag_weight(N, Np, 0)) * r(0);
    for (long t = 1; t <= T; ++t)
        total += static_cast<double>(lag_weight(N, Np, t) + lag_weight(N, Np, -t)) * r(t);
    return total;
}

/// Barycentric Chebyshev interpolation of an even function on dyadic intervals of (lo, pi].
class DyadicInterpolant {
public:
    DyadicInterpolant(const std::function<double(double)>& f, double lo, int nodes = 17) : lo_(lo)
    {
        double a = lo;
        while (a < pi) {
            const double b = std::min(pi, 2 * a);
            Piece p;
            p.a = a;
            p.b = b;
            for (int k = 0; k < nodes; ++k) {
                const double x = std::cos(pi * k / (nodes - 1));
                p.x.push_back(0.5 * (a + b) + 0.5 * (b - a) * x);
                p.y.push_back(f(p.x.back()));
                double w = (k == 0 || k == nodes - 1) ? 0.5 : 1.0;
                if (k % 2) w = -w;
                p.w.push_back(w);
            }
            pieces_.push_back(std::move(p));
            if (b >= pi) break;
            a = b;
        }
    }

    double lo() const { return lo_; }

    double operator()(double v) const
    {
        v = std::abs(v);
        std::size_t i = 0;
        while (i + 1 < pieces_.size() && v > pieces_[i].b) ++i;
        const Piece& p = pieces_[i];
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < p.x.size(); ++k) {
            const double d = v - p.x[k];
            if (d == 0.0) return p.y[k];
            const double t = p.w[k] / d;
            num += t * p.y[k];
            den += t;
        }
        return num / den;
    }

private:
    struct Piece {
        double a = 0, b = 0;
        std::vector<double> x, y, w;
    };
    double lo_;
    std::vector<Piece> pieces_;
};

struct LagRoute {
    double value = 0.0;
    double quad_err = 0.0;
    bool ok = true;
};

struct MarginalLine {
    SpectralLagLine line;
    double quad_rel_err = 0.0;  // worst relative error of the sampled marginal
    bool ok = true;
};

using PsiCache = std::map<double, std::pair<double, double>>;

/// Lag line of psi(w) = int Re[D conj D'](s) f(s, w) ds (or f(w, s) when the line runs along u),
/// with psi interpolated away from its singular point.
inline MarginalLine marginal_lag_line(const ValidatedModel& m, const FejerTerms& tq, long G, bool line_on_v,
                                      const QuadratureSpec& q, const PrelimitOptions& opt, PsiCache& psi_cache)
{
    MarginalLine out;
    auto psi_direct = [&](double w) {
        w = std::abs(w);
        auto it = psi_cache.find(w);
        if (it != psi_cache.end()) return it->second.first;
        double val = 0.0, err = 0.0;
        for (int j = 0; j < 3; ++j) {
            if (tq.a[j] == 0) continue;
            const IntegralResult r = fejer_line(
                tq.a[j],
                [&](double s) { return line_on_v ? torus_density(m, s, w) : torus_density(m, w, s); }, q);
            val += tq.s[j] * r.value;
            err += r.err_estimate;
            if (!r.converged) out.ok = false;
        }
        psi_cache.emplace(w, std::make_pair(val, err));
        return val;
    };
    const double h = 2 * pi / static_cast<double>(G);
    const double lo = (static_cast<double>(opt.band) + 0.5) * h;
    const DyadicInterpolant interp(psi_direct, lo);
    auto phi = [&](double w) { return std::abs(w) >= lo ? interp(w) : psi_direct(w); };
    out.line = spectral_lag_line(phi, true, G, opt.grid, opt.band);
    out.ok = out.ok && out.line.ok;
    for (const auto& [w, ve] : psi_cache)
        out.quad_rel_err = std::max(out.quad_rel_err, ve.second / std::max(1e-300, std::abs(ve.first)));
    return out;
}

/// Lag sum along one axis of the Fejer-integrated marginal; the other axis is done by quadrature.
inline LagRoute mixed_route(const ValidatedModel& m, const PrelimitCounts& c, long G, bool fft_on_v,
                            const QuadratureSpec& q, const PrelimitOptions& opt, PsiCache& psi_cache)
{
    const FejerTerms tq = fft_on_v ? fejer_terms(c.N, c.Np) : fejer_terms(c.M, c.Mp);
    const MarginalLine ml = marginal_lag_line(m, tq, G, fft_on_v, q, opt, psi_cache);
    LagRoute out;
    out.value = fft_on_v ? lag_sum_1d(ml.line, c.M, c.Mp) : lag_sum_1d(ml.line, c.N, c.Np);
    out.ok = ml.ok;
    out.quad_err = ml.quad_rel_err * std::abs(out.value);
    return out;
}

inline long fft_size_for(long count, int refine)
{
    return good_fft_size(2L * refine * std::max<long>(count, 1));
}

inline IntegralResult fft_route(const ValidatedModel& m, const PrelimitCounts& c, const QuadratureSpec& q,
                                const PrelimitOptions& opt, std::string& route)
{
    const long L1 = std::max(c.N, c.Np), L2 = std::max(c.M, c.Mp);
    IntegralResult out;
    if (L1 == 0 || L2 == 0) {
        route = "empty";
        return out;
    }
    const int r_hi = opt.grid.refine, r_lo = std::max(1, opt.grid.refine / 2);
    double v_hi = 0.0, v_lo = 0.0, qerr = 0.0;
    bool ok = true;
    if (m.separable()) {
        route = "separable";
        const bool s1 = m.kind() == ModelKind::TypeII;
        auto value_at = [&](int refine) {
            GridOptions go = opt.grid;
            go.refine = std::max(2, refine);
            const SpectralLagLine r1 =
                spectral_lag_line([&m](double u) { return m.factor_u(u); }, s1, fft_size_for(L1, refine), go);
            const SpectralLagLine r2 =
                spectral_lag_line([&m](double v) { return m.factor_v(v); }, s1, fft_size_for(L2, refine), go);
            ok = ok && r1.ok && r2.ok;
            const double a = lag_sum_1d(r1, c.N, c.Np), b = lag_sum_1d(r2, c.M, c.Mp);
            qerr = std::max(qerr, std::abs(a) * r2.err + std::abs(b) * r1.err);
            return a * b;
        };
        v_hi = value_at(r_hi);
        v_lo = value_at(r_lo);
    } else {
        const long G1 = fft_size_for(L1, r_hi), G2 = fft_size_for(L2, r_hi);
        if (static_cast<double>(G1) * static_cast<double>(G2) <= opt.grid_budget) {
            route = "2d";
            auto value_at = [&](int refine) {
                GridOptions go = opt.grid;
                go.refine = std::max(2, refine);
                const auto g = cached_lag_grid(m, fft_size_for(L1, refine), fft_size_for(L2, refine), go);
                ok = ok && g->ok;
                const double v = lag_sum_2d(*g, c);
                qerr = std::max(qerr, g->err * static_cast<double>(L1) * static_cast<double>(L2));
                return v;
            };
            v_hi = value_at(r_hi);
            v_lo = value_at(r_lo);
        } else if (m.separately_even()) {
            route = "mixed";
            const bool fft_on_v = L2 >= L1;
            const long L = fft_on_v ? L2 : L1;
            PsiCache psi_cache;
            QuadratureSpec qq = q;
            qq.rel_tol = std::min(q.rel_tol, 1e-9);
            const LagRoute a = mixed_route(m, c, fft_size_for(L, r_hi), fft_on_v, qq, opt, psi_cache);
            const LagRoute b = mixed_route(m, c, fft_size_for(L, r_lo), fft_on_v, qq, opt, psi_cache);
            v_hi = a.value;
            v_lo = b.value;
            qerr = a.quad_err;
            ok = a.ok && b.ok;
        } else {
            throw Error(ErrorKind::BudgetExceeded,
                        "lag grid " + std::to_string(G1) + " x " + std::to_string(G2) + " exceeds the grid budget");
        }
    }
    out.value = v_hi;
    out.err_estimate = std::abs(v_hi - v_lo) + qerr;
    out.converged = ok;
    return out;
}

}  // namespace detail

inline IntegralResult dirichlet_route(const ValidatedModel& m, const PrelimitCounts& c, const QuadratureSpec& q)
{
    if (c.N == 0 || c.Np == 0 || c.M == 0 || c.Mp == 0) return {};
    if (m.separately_even()) return detail::dirichlet_route_even(m, c, q);
    return detail::dirichlet_route_general(m, c, q);
}

/// Exact finite-n covariance R of the partial sums over K_[nx, my] and K_[nx', my'].
inline PrelimitResult prelimit_routes(const PrelimitQuery& qy, const QuadratureSpec& spec = {},
                                      const PrelimitOptions& opt = {})
{
    spec.check();
    opt.grid.check();
    PrelimitResult res;
    res.counts = prelimit_counts(qy);
    const PrelimitCounts& c = res.counts;
    const bool dirichlet_ok = static_cast<double>(c.n) * static_cast<double>(c.m) <= opt.dirichlet_limit;
    const bool want_d = qy.method != PrelimitMethod::FFTLagSum;
    const bool want_f = qy.method != PrelimitMethod::DirichletQuadrature;
    if (want_d && !dirichlet_ok && !want_f)
        throw Error(ErrorKind::BudgetExceeded, "Dirichlet quadrature is limited to n*m <= " +
                                                   format_double(opt.dirichlet_limit) + "; use the lag-sum route");
    if (want_d && dirichlet_ok) res.dirichlet = dirichlet_route(qy.model, c, spec);
    if (want_f) {
        std::string route;
        res.lag_sum = detail::fft_route(qy.model, c, spec, opt, route);
        res.lag_route = route;
    }
    res.value = res.lag_sum ? *res.lag_sum : *res.dirichlet;
    if (res.dirichlet && res.lag_sum) {
        res.discrepancy = std::abs(res.dirichlet->value - res.lag_sum->value);
        res.agree = res.discrepancy <= res.dirichlet->err_estimate + res.lag_sum->err_estimate;
        res.value.err_estimate = std::max(res.value.err_estimate, res.discrepancy);
    }
    return res;
}

inline PrelimitResult prelimit_cov(const PrelimitQuery& qy, const QuadratureSpec& spec = {},
                                   const PrelimitOptions& opt = {})
{
    PrelimitResult res = prelimit_routes(qy, spec, opt);
    if (res.dirichlet && !res.dirichlet->converged)
        throw Error(ErrorKind::NotConverged, "Dirichlet quadrature did not converge");
    if (res.lag_sum && !res.lag_sum->converged)
        throw Error(ErrorKind::NotConverged, "lag-grid cell quadrature did not converge");
    if (!res.agree)
        throw Error(ErrorKind::MethodDisagreement,
                    "Dirichlet " + format_double(res.dirichlet->value) + " vs lag sum " +
                        format_double(res.lag_sum->value) + " differ by more than the error estimates");
    return res;
}

/// n^{-2H(gamma)} R.
inline PrelimitResult normalized_prelimit(const PrelimitQuery& qy, const QuadratureSpec& spec = {},
                                          const PrelimitOptions& opt = {})
{
    const double H = hurst_exponent(qy.model, qy.gamma).H;
    PrelimitResult res = prelimit_cov(qy, spec, opt);
    const double s = std::pow(static_cast<double>(qy.n), -2 * H);
    auto scale = [s](IntegralResult& r) {
        r.value *= s;
        r.err_estimate *= s;
    };
    scale(res.value);
    if (res.dirichlet) scale(*res.dirichlet);
    if (res.lag_sum) scale(*res.lag_sum);
    res.discrepancy *= s;
    return res;
}

}  // namespace lrdfield
