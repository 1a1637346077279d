#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "lrdfield/config.hpp"
#include "lrdfield/error.hpp"

namespace lrdfield {

inline constexpr double pi = std::numbers::pi;

enum class ModelKind { TypeI, TypeII, LinearSingular, WhiteNoise };

inline const char* to_string(ModelKind k)
{
    switch (k) {
    case ModelKind::TypeI: return "TypeI";
    case ModelKind::TypeII: return "TypeII";
    case ModelKind::LinearSingular: return "LinearSingular";
    case ModelKind::WhiteNoise: return "WhiteNoise";
    }
    return "?";
}

/// Bounded nonnegative factor g with g(0,0) = 1.
struct ModulatingFactor {
    enum class Variant { ConstantOne, RaisedCosineTaper };

    Variant variant = Variant::ConstantOne;
    Number width = Number(pi);

    static constexpr double bound = 1.0;

    bool is_constant() const { return variant == Variant::ConstantOne; }

    /// Radial taper 0.5(1 + cos(pi r / width)) for r <= width, zero beyond.
    double operator()(double u, double v) const
    {
        if (variant == Variant::ConstantOne) return 1.0;
        const double r = std::hypot(u, v);
        if (r >= width.value) return 0.0;
        return 0.5 * (1.0 + std::cos(pi * r / width.value));
    }
};

struct SpectralModel {
    ModelKind kind = ModelKind::TypeI;
    Number H1 = 0.6, H2 = 0.8, c = 1.0;
    Number d1 = 0.2, d2 = 0.2;
    Number a = 1.0, b = 1.0, d = 0.2;
    Number level = 1.0;  // WhiteNoise spectral level
    ModulatingFactor g;

    static SpectralModel type_i(Number h1, Number h2, Number c_ = 1.0)
    {
        SpectralModel m;
        m.kind = ModelKind::TypeI;
        m.H1 = h1; m.H2 = h2; m.c = c_;
        return m;
    }
    static SpectralModel type_ii(Number d1_, Number d2_)
    {
        SpectralModel m;
        m.kind = ModelKind::TypeII;
        m.d1 = d1_; m.d2 = d2_;
        return m;
    }
    static SpectralModel linear_singular(Number a_, Number b_, Number d_)
    {
        SpectralModel m;
        m.kind = ModelKind::LinearSingular;
        m.a = a_; m.b = b_; m.d = d_;
        return m;
    }
    static SpectralModel white_noise(Number level_)
    {
        SpectralModel m;
        m.kind = ModelKind::WhiteNoise;
        m.level = level_;
        return m;
    }
};

class ValidatedModel;
ValidatedModel validate(const SpectralModel& model);

/// A model whose invariants have been checked; only `validate` constructs one.
class ValidatedModel {
public:
    const SpectralModel& model() const { return m_; }
    const SpectralModel* operator->() const { return &m_; }
    ModelKind kind() const { return m_.kind; }

    /// Separable density f(u,v) = f1(u) f2(v).
    bool separable() const
    {
        return m_.g.is_constant() && (m_.kind == ModelKind::TypeII || m_.kind == ModelKind::WhiteNoise);
    }
    /// f(-u,v) = f(u,v) and f(u,-v) = f(u,v).
    bool separately_even() const { return m_.kind != ModelKind::LinearSingular; }

    bool in_singular_set(double u, double v) const
    {
        switch (m_.kind) {
        case ModelKind::TypeI: return u == 0.0 && v == 0.0;
        case ModelKind::TypeII: return u == 0.0 || v == 0.0;
        case ModelKind::LinearSingular: return m_.a.value * u + m_.b.value * v == 0.0;
        case ModelKind::WhiteNoise: return false;
        }
        return false;
    }

    /// Density without domain checks; callers guarantee (u,v) is off the singular set.
    double density(double u, double v) const
    {
        const double gv = m_.g(u, v);
        if (gv == 0.0) return 0.0;
        return gv * singular_factor(u, v);
    }

    double singular_factor(double u, double v) const
    {
        switch (m_.kind) {
        case ModelKind::TypeI:
            return std::pow(u * u + m_.c.value * std::pow(std::abs(v), q_), -0.5 * m_.H1.value);
        case ModelKind::TypeII:
            return std::pow(std::abs(u), -2.0 * m_.d1.value) * std::pow(std::abs(v), -2.0 * m_.d2.value);
        case ModelKind::LinearSingular:
            return std::pow(std::abs(m_.a.value * u + m_.b.value * v), -2.0 * m_.d.value);
        case ModelKind::WhiteNoise:
            return m_.level.value;
        }
        return 0.0;
    }

    /// Separable factors of TypeII / WhiteNoise (g constant): f = factor_u(u) factor_v(v).
    double factor_u(double u) const
    {
        if (m_.kind == ModelKind::TypeII) return std::pow(std::abs(u), -2.0 * m_.d1.value);
        return m_.level.value;
    }
    double factor_v(double v) const
    {
        if (m_.kind == ModelKind::TypeII) return std::pow(std::abs(v), -2.0 * m_.d2.value);
        return 1.0;
    }

    /// Exponent 2H2/H1 of the TypeI anisotropy.
    double q() const { return q_; }

private:
    friend ValidatedModel validate(const SpectralModel& model);
    explicit ValidatedModel(const SpectralModel& m) : m_(m)
    {
        if (m_.kind == ModelKind::TypeI) q_ = 2.0 * m_.H2.value / m_.H1.value;
    }

    SpectralModel m_;
    double q_ = 0.0;
};

inline ValidatedModel validate(const SpectralModel& m)
{
    auto require = [](bool ok, const char* name, double value, const char* constraint) {
        if (!ok) throw ConstraintViolation(name, value, constraint);
    };
    auto finite = [&](const Number& x, const char* name) {
        require(std::isfinite(x.value), name, x.value, "finite");
    };
    switch (m.kind) {
    case ModelKind::TypeI:
        finite(m.H1, "H1"); finite(m.H2, "H2"); finite(m.c, "c");
        require(m.H1.value > 0, "H1", m.H1.value, "0 < H1");
        require(m.H1.value <= m.H2.value, "H1", m.H1.value, "H1 <= H2");
        require(m.H1.value * m.H2.value < m.H1.value + m.H2.value, "H1*H2", m.H1.value * m.H2.value,
                "H1H2 < H1+H2");
        require(m.c.value > 0, "c", m.c.value, "c > 0");
        break;
    case ModelKind::TypeII:
        finite(m.d1, "d1"); finite(m.d2, "d2");
        require(m.d1.value > 0 && m.d1.value < 0.5, "d1", m.d1.value, "0 < d1 < 1/2");
        require(m.d2.value > 0 && m.d2.value < 0.5, "d2", m.d2.value, "0 < d2 < 1/2");
        break;
    case ModelKind::LinearSingular:
        finite(m.a, "a"); finite(m.b, "b"); finite(m.d, "d");
        require(m.d.value > 0 && m.d.value < 0.5, "d", m.d.value, "0 < d < 1/2");
        require(m.a.value != 0, "a", m.a.value, "a != 0");
        require(m.b.value != 0, "b", m.b.value, "b != 0");
        break;
    case ModelKind::WhiteNoise:
        finite(m.level, "level");
        require(m.level.value > 0, "level", m.level.value, "level > 0");
        break;
    }
    if (m.g.variant == ModulatingFactor::Variant::RaisedCosineTaper)
        require(m.g.width.value > 0 && m.g.width.value <= pi, "g.width", m.g.width.value, "0 < width <= pi");
    return ValidatedModel(m);
}

/// Density with domain and singular-set checks.
inline double eval_density(const ValidatedModel& m, double u, double v)
{
    if (!(std::abs(u) <= pi && std::abs(v) <= pi))
        throw Error(ErrorKind::OutOfDomain, "(u,v) outside [-pi,pi]^2");
    if (m.in_singular_set(u, v)) throw Error(ErrorKind::SingularPoint, "(u,v) in the singular set");
    return m.density(u, v);
}

/// TypeI scaling function h(u,v) = (u^2 + c|v|^{2H2/H1})^{-H1/2}.
inline double eval_h(const ValidatedModel& m, double u, double v)
{
    if (m.kind() != ModelKind::TypeI) throw Error(ErrorKind::ParameterOutOfRange, "eval_h needs a TypeI model");
    if (u == 0.0 && v == 0.0) throw Error(ErrorKind::SingularPoint, "h is singular at the origin");
    return m.singular_factor(u, v);
}

// ---------------------------------------------------------------------------
// Limit densities

/// Spectral function of a limit field.
struct SpectralKernel {
    enum class Form { PowerProduct, AnisotropicRadial, LinearForm };

    Form form = Form::PowerProduct;
    double amp = 1.0;
    double pu = 0.0, pv = 0.0;          // PowerProduct: amp |u|^{-pu} |v|^{-pv}
    double H1 = 0.0, H2 = 0.0, c = 1.0; // AnisotropicRadial: amp (u^2 + c|v|^{2H2/H1})^{-H1/2}
    double a = 0.0, b = 0.0, p = 0.0;   // LinearForm: amp |au + bv|^{-p}

    static SpectralKernel power(double amp, double pu, double pv)
    {
        SpectralKernel k;
        k.amp = amp; k.pu = pu; k.pv = pv;
        return k;
    }
    static SpectralKernel radial(double h1, double h2, double c)
    {
        SpectralKernel k;
        k.form = Form::AnisotropicRadial;
        k.H1 = h1; k.H2 = h2; k.c = c;
        return k;
    }
    static SpectralKernel linear(double a, double b, double p)
    {
        SpectralKernel k;
        k.form = Form::LinearForm;
        k.a = a; k.b = b; k.p = p;
        return k;
    }

    double operator()(double u, double v) const
    {
        switch (form) {
        case Form::PowerProduct: {
            double r = amp;
            if (pu != 0.0) r *= std::pow(std::abs(u), -pu);
            if (pv != 0.0) r *= std::pow(std::abs(v), -pv);
            return r;
        }
        case Form::AnisotropicRadial:
            return amp * std::pow(u * u + c * std::pow(std::abs(v), 2.0 * H2 / H1), -0.5 * H1);
        case Form::LinearForm:
            return amp * std::pow(std::abs(a * u + b * v), -p);
        }
        return 0.0;
    }

    bool singular_at(double u, double v) const
    {
        switch (form) {
        case Form::PowerProduct: return (pu > 0 && u == 0.0) || (pv > 0 && v == 0.0);
        case Form::AnisotropicRadial: return u == 0.0 && v == 0.0;
        case Form::LinearForm: return a * u + b * v == 0.0;
        }
        return false;
    }

    bool separable() const { return form == Form::PowerProduct; }
};

struct LimitDensity {
    double a_density = 0.0;
    SpectralKernel h;
};

enum class Regime { Subcritical, Critical, Supercritical, NoTransition };

inline const char* to_string(Regime r)
{
    switch (r) {
    case Regime::Subcritical: return "Subcritical";
    case Regime::Critical: return "Critical";
    case Regime::Supercritical: return "Supercritical";
    case Regime::NoTransition: return "NoTransition";
    }
    return "?";
}

struct ScalingRegime {
    double gamma = 1.0;
    std::optional<double> gamma0;
    Regime regime = Regime::NoTransition;
    double H = 0.0;
    double a_density = 0.0;
    /// True when the critical/off-critical decision relied on the floating tolerance.
    bool tolerance_classified = false;
};

inline constexpr double gamma_tolerance = 1e-12;

inline std::optional<double> critical_gamma(const ValidatedModel& m)
{
    switch (m.kind()) {
    case ModelKind::TypeI: return m->H1.value / m->H2.value;
    case ModelKind::LinearSingular: return 1.0;
    default: return std::nullopt;
    }
}

namespace detail {

/// Sign of gamma - gamma0 and whether the floating tolerance decided it.
inline std::pair<int, bool> side_of_critical(const ValidatedModel& m, const Number& gamma)
{
    if (m.kind() == ModelKind::TypeI) {
        const auto& H1 = m->H1;
        const auto& H2 = m->H2;
        if (gamma.exact && H1.exact && H2.exact) {
            using W = __int128;
            // gamma - H1/H2 = (g.num H1.den H2.num - H1.num g.den H2.den) / (...)
            const W lhs = W(gamma.exact->num) * W(H1.exact->den) * W(H2.exact->num);
            const W rhs = W(H1.exact->num) * W(gamma.exact->den) * W(H2.exact->den);
            const int s = lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
            return {s, false};
        }
        const double g0 = H1.value / H2.value;
        if (std::abs(gamma.value - g0) <= gamma_tolerance * std::max(1.0, g0)) return {0, true};
        return {gamma.value < g0 ? -1 : 1, true};
    }
    if (gamma.exact) return {compare(*gamma.exact, Rational{1, 1}), false};
    if (std::abs(gamma.value - 1.0) <= gamma_tolerance) return {0, true};
    return {gamma.value < 1.0 ? -1 : 1, true};
}

inline bool is_one(const Number& x)
{
    if (x.exact) return x.exact->num == x.exact->den;
    return std::abs(x.value - 1.0) <= gamma_tolerance;
}

}  // namespace detail

inline LimitDensity scaling_limit_density(const ValidatedModel& m, const Number& gamma)
{
    if (!(gamma.value > 0)) throw Error(ErrorKind::ParameterOutOfRange, "gamma must be positive");
    const double g = gamma.value;
    switch (m.kind()) {
    case ModelKind::TypeI: {
        const double H1 = m->H1, H2 = m->H2, c = m->c;
        const int side = detail::side_of_critical(m, gamma).first;
        if (side == 0) return {H1, SpectralKernel::radial(H1, H2, c)};
        if (side > 0) return {H1, SpectralKernel::power(1.0, H1, 0.0)};
        return {g * H2, SpectralKernel::power(std::pow(c, -0.5 * H1), 0.0, H2)};
    }
    case ModelKind::TypeII: {
        const double d1 = m->d1, d2 = m->d2;
        return {2 * d1 + 2 * d2 * g, SpectralKernel::power(1.0, 2 * d1, 2 * d2)};
    }
    case ModelKind::LinearSingular: {
        const double a = m->a, b = m->b, d = m->d;
        const int side = detail::side_of_critical(m, gamma).first;
        if (side == 0) return {2 * d, SpectralKernel::linear(a, b, 2 * d)};
        if (side > 0) return {2 * d, SpectralKernel::power(std::pow(std::abs(a), -2 * d), 2 * d, 0.0)};
        return {2 * d * g, SpectralKernel::power(std::pow(std::abs(b), -2 * d), 0.0, 2 * d)};
    }
    case ModelKind::WhiteNoise:
        return {0.0, SpectralKernel::power(m->level.value, 0.0, 0.0)};
    }
    return {};
}

inline ScalingRegime hurst_exponent(const ValidatedModel& m, const Number& gamma)
{
    if (!(gamma.value > 0)) throw Error(ErrorKind::ParameterOutOfRange, "gamma must be positive");
    ScalingRegime r;
    r.gamma = gamma.value;
    r.gamma0 = critical_gamma(m);
    r.a_density = scaling_limit_density(m, gamma).a_density;
    const double g = gamma.value;
    switch (m.kind()) {
    case ModelKind::TypeI: {
        const double H1 = m->H1, H2 = m->H2;
        const auto [side, tol] = detail::side_of_critical(m, gamma);
        r.tolerance_classified = tol;
        if (side == 0) {
            r.regime = Regime::Critical;
            r.H = (H1 + H2 + H1 * H2) / (2 * H2);
        } else if (side > 0) {
            r.regime = Regime::Supercritical;
            if (detail::is_one(m->H1))
                throw Error(ErrorKind::OpenCase, "supercritical limit with H1 = 1 is an open case");
            r.H = H1 < 1 ? (1 + g + H1) / 2 : (g * H1 + g * H1 * H2 - g * H2 + 2 * H1) / (2 * H1);
        } else {
            r.regime = Regime::Subcritical;
            if (detail::is_one(m->H2))
                throw Error(ErrorKind::OpenCase, "subcritical limit with H2 = 1 is an open case");
            r.H = H2 < 1 ? (1 + g + g * H2) / 2 : (H2 + H1 * H2 - H1 + 2 * g * H2) / (2 * H2);
        }
        break;
    }
    case ModelKind::TypeII:
        r.regime = Regime::NoTransition;
        r.H = (1 + g) / 2 + m->d1.value + m->d2.value * g;
        break;
    case ModelKind::LinearSingular: {
        const auto [side, tol] = detail::side_of_critical(m, gamma);
        r.tolerance_classified = tol;
        r.regime = side == 0 ? Regime::Critical : (side > 0 ? Regime::Supercritical : Regime::Subcritical);
        r.H = side >= 0 ? (1 + g) / 2 + m->d.value : (1 + g) / 2 + g * m->d.value;
        break;
    }
    case ModelKind::WhiteNoise:
        r.regime = Regime::NoTransition;
        r.H = (1 + g) / 2;
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline KeyValueConfig to_config(const SpectralModel& m, const std::string& prefix = "")
{
    KeyValueConfig cfg;
    cfg.set(prefix + "kind", to_string(m.kind));
    switch (m.kind) {
    case ModelKind::TypeI:
        cfg.set(prefix + "H1", m.H1.to_string());
        cfg.set(prefix + "H2", m.H2.to_string());
        cfg.set(prefix + "c", m.c.to_string());
        break;
    case ModelKind::TypeII:
        cfg.set(prefix + "d1", m.d1.to_string());
        cfg.set(prefix + "d2", m.d2.to_string());
        break;
    case ModelKind::LinearSingular:
        cfg.set(prefix + "a", m.a.to_string());
        cfg.set(prefix + "b", m.b.to_string());
        cfg.set(prefix + "d", m.d.to_string());
        break;
    case ModelKind::WhiteNoise:
        cfg.set(prefix + "level", m.level.to_string());
        break;
    }
    if (m.g.is_constant()) {
        cfg.set(prefix + "g.variant", "ConstantOne");
    } else {
        cfg.set(prefix + "g.variant", "RaisedCosineTaper");
        cfg.set(prefix + "g.width", m.g.width.to_string());
    }
    return cfg;
}

inline SpectralModel model_from_config(const KeyValueConfig& cfg, const std::string& prefix = "")
{
    SpectralModel m;
    const std::string kind = cfg.get(prefix + "kind");
    auto num = [&](const char* key) { return cfg.number(prefix + key); };
    if (kind == "TypeI") {
        m = SpectralModel::type_i(num("H1"), num("H2"), cfg.has(prefix + "c") ? num("c") : Number(1.0));
    } else if (kind == "TypeII") {
        m = SpectralModel::type_ii(num("d1"), num("d2"));
    } else if (kind == "LinearSingular") {
        m = SpectralModel::linear_singular(num("a"), num("b"), num("d"));
    } else if (kind == "WhiteNoise") {
        m = SpectralModel::white_noise(cfg.has(prefix + "level") ? num("level") : Number(1.0));
    } else {
        throw Error(ErrorKind::ConfigError, "unknown model kind '" + kind + "'");
    }
    const std::string variant = cfg.get_or(prefix + "g.variant", "ConstantOne");
    if (variant == "RaisedCosineTaper") {
        m.g.variant = ModulatingFactor::Variant::RaisedCosineTaper;
        m.g.width = cfg.has(prefix + "g.width") ? num("g.width") : Number(pi);
    } else if (variant != "ConstantOne") {
        throw Error(ErrorKind::ConfigError, "unknown g.variant '" + variant + "'");
    }
    return m;
}

/// Keys a model config may carry under `prefix`.
inline std::set<std::string> model_keys(const std::string& prefix = "")
{
    std::set<std::string> keys;
    for (const char* k : {"kind", "H1", "H2", "c", "d1", "d2", "a", "b", "d", "level", "g.variant", "g.width"})
        keys.insert(prefix + k);
    return keys;
}

/// FNV-1a hash of the canonical serialized model.
inline std::uint64_t model_hash(const SpectralModel& m)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : to_config(m).to_string()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace lrdfield
