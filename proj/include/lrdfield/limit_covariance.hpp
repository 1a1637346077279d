#pragma once

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "lrdfield/error.hpp"
#include "lrdfield/geometry.hpp"
#include "lrdfield/quadrature.hpp"
#include "lrdfield/spectral_models.hpp"

namespace lrdfield {

// ---------------------------------------------------------------------------
// Constants

inline double beta_fn(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

/// kappa^2(d) = int |1 - e^{ix}|^2 |x|^{-2-2d} dx, for 0 <= d < 1/2.
inline double kappa_sq(double d)
{
    if (!(d >= 0 && d < 0.5)) throw Error(ErrorKind::ParameterOutOfRange, "kappa_sq needs 0 <= d < 1/2");
    return pi / ((d + 0.5) * std::tgamma(2 * d + 1) * std::cos(pi * d));
}

/// The expression pi / (2 (d+1/2)^2 Gamma(d) cos(pi d)); differs from kappa_sq.
inline double kappa_sq_printed(double d)
{
    if (!(d > 0 && d < 0.5)) throw Error(ErrorKind::ParameterOutOfRange, "kappa_sq_printed needs 0 < d < 1/2");
    return pi / (2 * (d + 0.5) * (d + 0.5) * std::tgamma(d) * std::cos(pi * d));
}

/// rho1^2 = B(1/2, (H1-1)/2) = int (1 + t^2)^{-H1/2} dt, H1 > 1.
inline double rho1_sq(double H1)
{
    if (!(H1 > 1)) throw Error(ErrorKind::ParameterOutOfRange, "rho1_sq needs H1 > 1");
    return beta_fn(0.5, 0.5 * (H1 - 1));
}

/// rho2^2 = (H1/2H2) B(H1/H2, (H1H2 - H1)/2H2), H2 > 1.
inline double rho2_sq(double H1, double H2)
{
    if (!(H2 > 1 && H1 > 0)) throw Error(ErrorKind::ParameterOutOfRange, "rho2_sq needs H2 > 1");
    return H1 / (2 * H2) * beta_fn(H1 / H2, (H1 * H2 - H1) / (2 * H2));
}

/// int (1 + |s|^{2H2/H1})^{-H1/2} ds = (H1/H2) B(H1/2H2, (H1H2 - H1)/2H2), H2 > 1: the constant
/// that the v-integral of h actually produces.
inline double rho2_sq_limit(double H1, double H2)
{
    if (!(H2 > 1 && H1 > 0)) throw Error(ErrorKind::ParameterOutOfRange, "rho2_sq_limit needs H2 > 1");
    return H1 / H2 * beta_fn(H1 / (2 * H2), (H1 * H2 - H1) / (2 * H2));
}

inline double constants_eval(const std::string& name, const std::vector<double>& params)
{
    auto need = [&](std::size_t n) {
        if (params.size() != n)
            throw Error(ErrorKind::ParameterOutOfRange, name + " expects " + std::to_string(n) + " parameter(s)");
    };
    if (name == "rho1_sq") { need(1); return rho1_sq(params[0]); }
    if (name == "rho2_sq") { need(2); return rho2_sq(params[0], params[1]); }
    if (name == "rho2_sq_limit") { need(2); return rho2_sq_limit(params[0], params[1]); }
    if (name == "kappa_sq") { need(1); return kappa_sq(params[0]); }
    if (name == "kappa_sq_printed") { need(1); return kappa_sq_printed(params[0]); }
    throw Error(ErrorKind::ParameterOutOfRange, "unknown constant '" + name + "'");
}

// ---------------------------------------------------------------------------
// Fractional Brownian sheet

namespace detail {

inline void check_hurst(double H, const char* name)
{
    if (!(H > 0 && H <= 1)) throw Error(ErrorKind::ParameterOutOfRange, std::string(name) + " must lie in (0, 1]");
}

inline double pw(double x, double e) { return x == 0.0 ? 0.0 : std::pow(std::abs(x), e); }

/// Covariance of fBm increments over [a,b] and [c,d].
inline double fbm_increment_cov(double H, double a, double b, double c, double d)
{
    const double e = 2 * H;
    return 0.5 * (pw(b - c, e) + pw(a - d, e) - pw(b - d, e) - pw(a - c, e));
}

}  // namespace detail

inline double fbs_cov(double H1, double H2, Point p, Point q)
{
    detail::check_hurst(H1, "H1");
    detail::check_hurst(H2, "H2");
    if (p.x < 0 || p.y < 0 || q.x < 0 || q.y < 0)
        throw Error(ErrorKind::ParameterOutOfRange, "points must lie in the closed quadrant");
    using detail::pw;
    const double cx = pw(p.x, 2 * H1) + pw(q.x, 2 * H1) - pw(p.x - q.x, 2 * H1);
    const double cy = pw(p.y, 2 * H2) + pw(q.y, 2 * H2) - pw(p.y - q.y, 2 * H2);
    return 0.25 * cx * cy;
}

inline double fbs_increment_cov(double H1, double H2, const Rect& K, const Rect& L)
{
    detail::check_hurst(H1, "H1");
    detail::check_hurst(H2, "H2");
    if (K.area() == 0.0 || L.area() == 0.0) return 0.0;
    return detail::fbm_increment_cov(H1, K.x0, K.x1, L.x0, L.x1) *
           detail::fbm_increment_cov(H2, K.y0, K.y1, L.y0, L.y1);
}

/// Signed four-corner expansion V(K) = V(x1,y1) - V(x0,y1) - V(x1,y0) + V(x0,y0).
inline std::array<std::pair<Point, double>, 4> corners(const Rect& K)
{
    return {{{{K.x1, K.y1}, 1.0}, {{K.x0, K.y1}, -1.0}, {{K.x1, K.y0}, -1.0}, {{K.x0, K.y0}, 1.0}}};
}

// ---------------------------------------------------------------------------
// Limit fields

enum class LimitKind { WellBalanced, Plus, Minus, FBSheet, NoTransition };

inline const char* to_string(LimitKind k)
{
    switch (k) {
    case LimitKind::WellBalanced: return "WellBalanced";
    case LimitKind::Plus: return "Plus";
    case LimitKind::Minus: return "Minus";
    case LimitKind::FBSheet: return "FBSheet";
    case LimitKind::NoTransition: return "NoTransition";
    }
    return "?";
}

struct LimitFieldSpec {
    LimitKind kind = LimitKind::FBSheet;
    std::optional<ValidatedModel> source;
    double gamma = 1.0;
    SpectralKernel h;
    /// Plus with H1 > 1 or Minus with H2 > 1: one coordinate enters linearly.
    bool degenerate = false;
    /// Hurst pair of the equivalent fractional Brownian sheet, when one exists.
    std::optional<std::pair<double, double>> fbs_params;
    double amplitude = 1.0;
    /// Normalization exponent H(gamma) of the partial sums (absent for a bare sheet).
    std::optional<double> H;
};

inline LimitFieldSpec fbs_field(double H1, double H2, double amplitude = 1.0)
{
    detail::check_hurst(H1, "H1");
    detail::check_hurst(H2, "H2");
    LimitFieldSpec s;
    s.kind = LimitKind::FBSheet;
    s.fbs_params = std::make_pair(H1, H2);
    s.h = SpectralKernel::power(1.0, 2 * H1 - 1, 2 * H2 - 1);
    s.amplitude = amplitude;
    return s;
}

inline LimitFieldSpec make_limit_field(const ValidatedModel& m, const Number& gamma)
{
    const ScalingRegime reg = hurst_exponent(m, gamma);
    LimitFieldSpec s;
    s.source = m;
    s.gamma = gamma.value;
    s.h = scaling_limit_density(m, gamma).h;
    s.H = reg.H;
    switch (reg.regime) {
    case Regime::Critical: s.kind = LimitKind::WellBalanced; break;
    case Regime::Supercritical: s.kind = LimitKind::Plus; break;
    case Regime::Subcritical: s.kind = LimitKind::Minus; break;
    case Regime::NoTransition: s.kind = LimitKind::NoTransition; break;
    }
    if (m.kind() == ModelKind::TypeI) {
        const double H1 = m->H1, H2 = m->H2, c = m->c;
        if (s.kind == LimitKind::Plus) {
            if (H1 > 1) {
                s.degenerate = true;
                const double dp = H2 * (H1 - 1) / (2 * H1);
                s.h = SpectralKernel::radial(H1, H2, c);
                s.fbs_params = std::make_pair(1.0, dp + 0.5);
            } else {
                s.fbs_params = std::make_pair((1 + H1) / 2, 0.5);
            }
        } else if (s.kind == LimitKind::Minus) {
            if (H2 > 1) {
                s.degenerate = true;
                const double dpp = H1 * (H2 - 1) / (2 * H2);
                s.h = SpectralKernel::radial(H1, H2, c);
                s.fbs_params = std::make_pair(dpp + 0.5, 1.0);
            } else {
                s.fbs_params = std::make_pair(0.5, (1 + H2) / 2);
            }
        }
    } else if (s.h.form == SpectralKernel::Form::PowerProduct) {
        s.fbs_params = std::make_pair((1 + s.h.pu) / 2, (1 + s.h.pv) / 2);
    }
    return s;
}

namespace detail {

inline double sin2_over(double a, double u)
{
    // (1 - cos(a u)) / u^2 = 2 sin^2(a u / 2) / u^2
    if (u == 0.0) return 0.5 * a * a;
    const double s = std::sin(0.5 * a * u);
    return 2.0 * s * s / (u * u);
}

/// int (1 - cos(a u)) |u|^{-2-p} du by quadrature (p in [0, 1)).
inline IntegralResult power_variance_1d(double a, double p, const QuadratureSpec& q)
{
    a = std::abs(a);
    if (a == 0.0) return {};
    Oscillation osc;
    osc.period = 2 * pi / a;
    osc.mean = [p](double u) { return std::pow(std::abs(u), -2.0 - p); };
    return integrate_1d([a, p](double u) { return sin2_over(a, u) * std::pow(std::abs(u), -p); }, p > 0, q, osc,
                        true);
}

struct TermSet {
    std::array<double, 3> a{};
    std::array<double, 3> s{};
};

/// (1-e^{iux})(1-e^{-iux'}) real part = sum_j s_j (1 - cos(a_j u)).
inline TermSet terms(double x, double xp)
{
    return {{x, xp, std::abs(x - xp)}, {1.0, 1.0, -1.0}};
}

inline double linear_combo(const TermSet& t, const std::function<double(double)>& g, double* err,
                           const std::function<double(double)>* gerr)
{
    double v = 0.0;
    for (int j = 0; j < 3; ++j) {
        if (t.a[j] == 0.0) continue;
        v += t.s[j] * g(t.a[j]);
        if (err && gerr) *err += std::abs((*gerr)(t.a[j]));
    }
    return v;
}

/// F(a,b) = iint (1-cos au)(1-cos bv) h(u,v) / (u^2 v^2) for the anisotropic radial kernel.
/// x rounded to 12 significant digits, so that lengths computed along different paths share cache entries.
inline double key_round(double x)
{
    if (x == 0.0 || !std::isfinite(x)) return x;
    const double e = std::pow(10.0, std::floor(std::log10(std::abs(x))) - 11);
    return std::round(x / e) * e;
}

inline IntegralResult radial_variance(const SpectralKernel& k, double a, double b, const QuadratureSpec& q)
{
    a = key_round(std::abs(a));
    b = key_round(std::abs(b));
    if (a == 0.0 || b == 0.0) return {};
    using Key = std::tuple<double, double, double, double, double, double, double, double>;
    static std::map<Key, IntegralResult> cache;
    static std::mutex mu;
    const Key key{k.H1, k.H2, k.c, k.amp, a, b, q.rel_tol, q.ring_base};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    Integrand2D in;
    in.f = [k, a, b](double u, double v) { return sin2_over(a, u) * sin2_over(b, v) * k(u, v); };
    in.mean_u = [k, b](double u, double v) { return sin2_over(b, v) * k(u, v) / (u * u); };
    in.mean_v = [k, a](double u, double v) { return sin2_over(a, u) * k(u, v) / (v * v); };
    in.mean_uv = [k](double u, double v) { return k(u, v) / (u * u * v * v); };
    in.period_u = 2 * pi / a;
    in.period_v = 2 * pi / b;
    in.even_u = in.even_v = true;
    IntegralResult r = integrate_2d(in, SingularSet::origin(), q);
    std::lock_guard<std::mutex> lock(mu);
    cache.emplace(key, r);
    return r;
}

/// 1D degenerate integral: int (1 - cos(b v))/v^2 (int h(u, v) du) dv (Plus) or the
/// mirrored version (Minus), with the inner integral done by quadrature too.
inline IntegralResult degenerate_variance_direct(const SpectralKernel& k, bool plus, double b, const QuadratureSpec& q)
{
    b = std::abs(b);
    if (b == 0.0) return {};
    auto h = [k, plus](double t, double s) { return plus ? k(s, t) : k(t, s); };
    Integrand2D in;
    // Outer variable t carries the oscillation; inner s is integrated out of h.
    in.f = [h, b](double t, double s) { return sin2_over(b, t) * h(t, s); };
    in.mean_u = [h](double t, double s) { return h(t, s) / (t * t); };
    in.period_u = 2 * pi / b;
    in.even_u = in.even_v = true;
    return integrate_2d(in, SingularSet::origin(), q);
}

/// Same integral via its exact scaling in b: int h(t, s) ds is proportional to |t|^alpha, so
/// F(b) = b^{1 - alpha} F(1), with F(1) computed once per kernel.
inline IntegralResult degenerate_variance(const SpectralKernel& k, bool plus, double b, const QuadratureSpec& q)
{
    b = std::abs(b);
    if (b == 0.0) return {};
    if (k.form != SpectralKernel::Form::AnisotropicRadial) return degenerate_variance_direct(k, plus, b, q);
    using Key = std::tuple<double, double, double, double, bool, double, double>;
    static std::map<Key, IntegralResult> cache;
    static std::mutex mu;
    const Key key{k.H1, k.H2, k.c, k.amp, plus, q.rel_tol, q.ring_base};
    IntegralResult base;
    bool found = false;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) {
            base = it->second;
            found = true;
        }
    }
    if (!found) {
        base = degenerate_variance_direct(k, plus, 1.0, q);
        std::lock_guard<std::mutex> lock(mu);
        cache.emplace(key, base);
    }
    const double alpha = plus ? (1 - k.H1) * k.H2 / k.H1 : k.H1 / k.H2 - k.H1;
    const double s = std::pow(b, 1 - alpha);
    base.value *= s;
    base.err_estimate *= s;
    return base;
}

/// Projection evaluation for |au + bv|^{-p}: 2 pi |rho|^{-p} c_p int |tau|^{p-1} Xi(tau) dtau,
/// with Xi(tau) the overlap area of K and L shifted by tau along (a,b)/rho.
inline double linear_form_rect_cov(const SpectralKernel& k, const Rect& K, const Rect& L)
{
    if (K.area() == 0.0 || L.area() == 0.0) return 0.0;
    const double rho = std::hypot(k.a, k.b);
    const double n1 = k.a / rho, n2 = k.b / rho;
    const double p = k.p;
    auto overlap = [](double lo, double hi, double lo2, double hi2) {
        return std::max(0.0, std::min(hi, hi2) - std::max(lo, lo2));
    };
    auto xi = [&](double t) {
        return overlap(K.x0, K.x1, L.x0 + t * n1, L.x1 + t * n1) * overlap(K.y0, K.y1, L.y0 + t * n2, L.y1 + t * n2);
    };
    std::vector<double> br{0.0};
    auto add = [&](double lo, double hi, double lo2, double hi2, double n) {
        if (n == 0.0) return;
        for (double u : {lo, hi})
            for (double w : {lo2, hi2}) br.push_back((u - w) / n);
    };
    add(K.x0, K.x1, L.x0, L.x1, n1);
    add(K.y0, K.y1, L.y0, L.y1, n2);
    std::sort(br.begin(), br.end());
    // Breaks that differ by rounding only would give a sliver interval and an ill-conditioned fit.
    const double merge = 1e-12 * std::max(1.0, std::max(std::abs(br.front()), std::abs(br.back())));
    br.erase(std::unique(br.begin(), br.end(), [merge](double x, double y) { return y - x <= merge; }), br.end());
    // Exact integral of |t|^{p-1} (c0 + c1 t + c2 t^2) over [t0, t1] with 0 not inside.
    auto piece = [p](double t0, double t1, double c0, double c1, double c2) {
        const double sgn = t1 <= 0 ? -1.0 : 1.0;
        const double A = std::abs(t0), B = std::abs(t1);
        const double lo = std::min(A, B), hi = std::max(A, B);
        auto mom = [&](int j) { return (std::pow(hi, p + j) - std::pow(lo, p + j)) / (p + j); };
        // substitute t = sgn * s, s in [lo, hi]
        return c0 * mom(0) + sgn * c1 * mom(1) + c2 * mom(2);
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double t0 = br[i], t1 = br[i + 1];
        const double tm = 0.5 * (t0 + t1);
        const double f0 = xi(t0), fm = xi(tm), f1 = xi(t1);
        if (f0 == 0.0 && fm == 0.0 && f1 == 0.0) continue;
        // Quadratic through three points, expressed in powers of t.
        const double hlen = 0.5 * (t1 - t0);
        const double B1 = (f1 - f0) / (2 * hlen);
        const double B2 = (f1 - 2 * fm + f0) / (2 * hlen * hlen);
        const double c2 = B2;
        const double c1 = B1 - 2 * B2 * tm;
        const double c0 = fm - B1 * tm + B2 * tm * tm;
        total += piece(t0, t1, c0, c1, c2);
    }
    const double cp = 2 * std::tgamma(1 - p) * std::sin(0.5 * pi * p);
    return k.amp * 2 * pi * std::pow(rho, -p) * cp * total;
}

}  // namespace detail

inline IntegralResult limit_cov(const LimitFieldSpec& spec, Point p, Point pp, const QuadratureSpec& q = {})
{
    if (p.x < 0 || p.y < 0 || pp.x < 0 || pp.y < 0)
        throw Error(ErrorKind::ParameterOutOfRange, "points must lie in the closed quadrant");
    q.check();
    const double amp2 = spec.amplitude * spec.amplitude;
    IntegralResult out;
    if (spec.kind == LimitKind::FBSheet) {
        out.value = amp2 * fbs_cov(spec.fbs_params->first, spec.fbs_params->second, p, pp);
        return out;
    }
    const SpectralKernel& k = spec.h;
    if (spec.degenerate) {
        const bool plus = spec.kind == LimitKind::Plus;
        const auto tv = plus ? detail::terms(p.y, pp.y) : detail::terms(p.x, pp.x);
        const double lin = plus ? p.x * pp.x : p.y * pp.y;
        double v = 0.0, e = 0.0;
        bool ok = true;
        for (int j = 0; j < 3; ++j) {
            if (tv.a[j] == 0.0) continue;
            const IntegralResult r = detail::degenerate_variance(k, plus, tv.a[j], q);
            v += tv.s[j] * r.value;
            e += r.err_estimate;
            ok = ok && r.converged;
            out.panels_used += r.panels_used;
        }
        out.value = amp2 * lin * v;
        out.err_estimate = amp2 * std::abs(lin) * e;
        out.converged = ok;
        return out;
    }
    switch (k.form) {
    case SpectralKernel::Form::PowerProduct: {
        auto axis = [&](double x, double xp, double pw, double& err, bool& ok) {
            const auto t = detail::terms(x, xp);
            double v = 0.0;
            for (int j = 0; j < 3; ++j) {
                if (t.a[j] == 0.0) continue;
                const IntegralResult r = detail::power_variance_1d(t.a[j], pw, q);
                v += t.s[j] * r.value;
                err += r.err_estimate;
                ok = ok && r.converged;
            }
            return v;
        };
        double ex = 0.0, ey = 0.0;
        bool ok = true;
        const double vx = axis(p.x, pp.x, k.pu, ex, ok);
        const double vy = axis(p.y, pp.y, k.pv, ey, ok);
        out.value = amp2 * k.amp * vx * vy;
        out.err_estimate = amp2 * k.amp * (std::abs(vx) * ey + std::abs(vy) * ex + ex * ey);
        out.converged = ok;
        return out;
    }
    case SpectralKernel::Form::AnisotropicRadial: {
        const auto tx = detail::terms(p.x, pp.x);
        const auto ty = detail::terms(p.y, pp.y);
        double v = 0.0, e = 0.0;
        bool ok = true;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                if (tx.a[i] == 0.0 || ty.a[j] == 0.0) continue;
                const IntegralResult r = detail::radial_variance(k, tx.a[i], ty.a[j], q);
                v += tx.s[i] * ty.s[j] * r.value;
                e += r.err_estimate;
                ok = ok && r.converged;
                out.panels_used += r.panels_used;
            }
        out.value = amp2 * v;
        out.err_estimate = amp2 * e;
        out.converged = ok;
        return out;
    }
    case SpectralKernel::Form::LinearForm:
        out.value = amp2 * detail::linear_form_rect_cov(k, Rect::from_origin(p), Rect::from_origin(pp));
        out.err_estimate = 1e-12 * std::abs(out.value);
        return out;
    }
    return out;
}

/// Direct two-dimensional quadrature of the spectral integral for a LinearForm kernel.
inline IntegralResult linear_form_cov_quadrature(const SpectralKernel& k, Point p, Point pp, const QuadratureSpec& q)
{
    if (k.form != SpectralKernel::Form::LinearForm)
        throw Error(ErrorKind::ParameterOutOfRange, "LinearForm kernel expected");
    Integrand2D in;
    in.f = [k, p, pp](double u, double v) {
        // Re[(1-e^{iux})(1-e^{-iux'})(1-e^{ivy})(1-e^{-ivy'})] / (u^2 v^2)
        auto re_im = [](double w, double x, double xp) {
            if (w == 0.0) return std::pair<double, double>{x * xp, 0.0};
            const double re = 1 - std::cos(w * x) - std::cos(w * xp) + std::cos(w * (x - xp));
            const double im = std::sin(w * xp) - std::sin(w * x) + std::sin(w * (x - xp));
            return std::pair<double, double>{re / (w * w), im / (w * w)};
        };
        const auto [ru, iu] = re_im(u, p.x, pp.x);
        const auto [rv, iv] = re_im(v, p.y, pp.y);
        return (ru * rv - iu * iv) * k(u, v);
    };
    const double mx = std::max({p.x, pp.x, p.y, pp.y});
    in.period_u = in.period_v = 2 * pi / mx;
    return integrate_2d(in, SingularSet::line(k.a, k.b), q);
}

inline double limit_cov_closed_degenerate(const LimitFieldSpec& spec, Point p, Point pp)
{
    if (!spec.degenerate || !spec.source)
        throw Error(ErrorKind::ParameterOutOfRange, "closed form needs a degenerate Plus/Minus field");
    const auto& m = *spec.source;
    const double H1 = m->H1, H2 = m->H2, c = m->c;
    using detail::pw;
    const double amp2 = spec.amplitude * spec.amplitude;
    if (spec.kind == LimitKind::Plus) {
        const double dp = H2 * (H1 - 1) / (2 * H1);
        const double e = 2 * dp + 1;
        return amp2 * p.x * pp.x * rho1_sq(H1) * std::pow(c, (1 - H1) / 2) * kappa_sq(dp) * 0.5 *
               (pw(p.y, e) + pw(pp.y, e) - pw(p.y - pp.y, e));
    }
    const double dpp = H1 * (H2 - 1) / (2 * H2);
    const double e = 2 * dpp + 1;
    return amp2 * p.y * pp.y * rho2_sq_limit(H1, H2) * std::pow(c, -H1 / (2 * H2)) * kappa_sq(dpp) * 0.5 *
           (pw(p.x, e) + pw(pp.x, e) - pw(p.x - pp.x, e));
}

/// Ratio limit_cov / fbs_cov for a TypeI off-critical field, verified constant over probes.
struct KappaPm {
    double value = 0.0;
    double max_rel_deviation = 0.0;
    std::pair<double, double> fbs_params;
};

inline KappaPm kappa_pm(const ValidatedModel& m, LimitKind side, const QuadratureSpec& q = {}, double tol = 1e-3)
{
    if (m.kind() != ModelKind::TypeI) throw Error(ErrorKind::ParameterOutOfRange, "kappa_pm needs a TypeI model");
    if (side != LimitKind::Plus && side != LimitKind::Minus)
        throw Error(ErrorKind::ParameterOutOfRange, "kappa_pm side must be Plus or Minus");
    const double g0 = m->H1.value / m->H2.value;
    const Number gamma = side == LimitKind::Plus ? Number(2 * g0) : Number(0.5 * g0);
    const LimitFieldSpec spec = make_limit_field(m, gamma);
    const auto [h1, h2] = *spec.fbs_params;
    const std::vector<std::pair<Point, Point>> probes = {
        {{1, 1}, {1, 1}}, {{1, 1}, {2, 3}}, {{0.5, 2}, {1.5, 1}}, {{2, 2}, {3, 0.5}}, {{1, 0.7}, {0.3, 1.2}},
    };
    KappaPm out;
    out.fbs_params = {h1, h2};
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& [a, b] = probes[i];
        const double r = limit_cov(spec, a, b, q).value / fbs_cov(h1, h2, a, b);
        if (i == 0) {
            out.value = r;
        } else {
            out.max_rel_deviation = std::max(out.max_rel_deviation, std::abs(r / out.value - 1));
        }
    }
    if (out.max_rel_deviation > tol)
        throw Error(ErrorKind::RatioNotConstant, "limit_cov / fbs_cov ratio is not constant over the probes");
    return out;
}

}  // namespace lrdfield
