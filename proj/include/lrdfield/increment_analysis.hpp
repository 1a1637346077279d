#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lrdfield/error.hpp"
#include "lrdfield/geometry.hpp"
#include "lrdfield/limit_covariance.hpp"

namespace lrdfield {

/// Cov(V(K), V(L)) by the 16-term corner expansion.
inline IntegralResult rect_increment_cov(const LimitFieldSpec& spec, const Rect& K, const Rect& L,
                                         const QuadratureSpec& q = {})
{
    IntegralResult out;
    if (K.area() == 0.0 || L.area() == 0.0) return out;
    if (!spec.degenerate && spec.kind != LimitKind::FBSheet && spec.h.form == SpectralKernel::Form::LinearForm) {
        const double amp2 = spec.amplitude * spec.amplitude;
        out.value = amp2 * detail::linear_form_rect_cov(spec.h, K, L);
        out.err_estimate = 1e-12 * std::abs(out.value);
        return out;
    }
    for (const auto& [p, sp] : corners(K)) {
        if (p.x == 0.0 || p.y == 0.0) continue;
        for (const auto& [pp, spp] : corners(L)) {
            if (pp.x == 0.0 || pp.y == 0.0) continue;
            const IntegralResult r = limit_cov(spec, p, pp, q);
            out.value += sp * spp * r.value;
            out.err_estimate += r.err_estimate;
            out.panels_used += r.panels_used;
            out.converged = out.converged && r.converged;
        }
    }
    return out;
}

inline double radical_inverse(std::uint64_t i, unsigned base)
{
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

/// Halton point i in the first `dim` prime bases.
inline std::vector<double> halton(std::uint64_t i, int dim)
{
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (dim < 1 || dim > 12) throw Error(ErrorKind::ParameterOutOfRange, "halton dimension must be in [1,12]");
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) x[static_cast<std::size_t>(d)] = radical_inverse(i, primes[d]);
    return x;
}

struct ProbeBox {
    double lo = 0.1, hi = 3.0;            // rectangles lie in [lo, hi]^2
    double side_min = 0.2, side_max = 1.5;
    double margin = 0.1;                  // minimum separation gap and distance from the axes
    double lattice = 0.1;                 // corner coordinates snap to this step (0 disables)
};

struct SeparatedPair {
    Rect K, L;
};

struct ShiftPair {
    Rect K;
    double t = 0.0;  // L = K + t * direction
};

struct ProbeSet {
    Line direction;
    std::vector<SeparatedPair> separated;
    std::vector<ShiftPair> shifts;
};

namespace detail {

inline Rect probe_rect(const ProbeBox& b, double ux, double uy, double uw, double uh)
{
    auto snap = [&b](double x) { return b.lattice > 0 ? std::round(x / b.lattice) * b.lattice : x; };
    const double w = snap(b.side_min + uw * (b.side_max - b.side_min));
    const double h = snap(b.side_min + uh * (b.side_max - b.side_min));
    const double x0 = snap(b.lo + ux * (b.hi - b.lo - w));
    const double y0 = snap(b.lo + uy * (b.hi - b.lo - h));
    return Rect::make(x0, y0, x0 + w, y0 + h);
}

/// Shift length whose components along e stay on the lattice, when e is an axis or diagonal.
inline double snap_shift(const ProbeBox& b, Point e, double t)
{
    if (!(b.lattice > 0)) return t;
    const double ax = std::abs(e.x), ay = std::abs(e.y);
    const bool axis = ax < 1e-12 || ay < 1e-12, diagonal = std::abs(ax - ay) < 1e-12;
    if (!axis && !diagonal) return t;
    const double step = b.lattice / std::max(ax, ay);
    return std::max(1.0, std::round(t / step)) * step;
}

inline std::pair<double, double> projection(const Rect& K, Point e)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : {K.x0, K.x1})
        for (double y : {K.y0, K.y1}) {
            const double s = x * e.x + y * e.y;
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    return {lo, hi};
}

inline bool inside(const ProbeBox& b, const Rect& K)
{
    const double eps = 1e-12;
    return K.x0 >= b.lo - eps && K.y0 >= b.lo - eps && K.x1 <= b.hi + eps && K.y1 <= b.hi + eps;
}

}  // namespace detail

/// Quasi-random probes: pairs separated by lines perpendicular to `l`, and shifts along `l`.
inline ProbeSet make_probes(const Line& l, int count = 20, const ProbeBox& box = {}, std::uint64_t start = 1)
{
    if (count < 1) throw Error(ErrorKind::ParameterOutOfRange, "probe count must be positive");
    ProbeSet ps;
    ps.direction = l;
    const Point e = l.direction();
    const std::uint64_t max_tries = 200000;
    for (std::uint64_t i = start; ps.separated.size() < static_cast<std::size_t>(count); ++i) {
        if (i - start > max_tries) throw Error(ErrorKind::IncompleteGrid, "could not place separated probe pairs");
        const auto h = halton(i, 8);
        const Rect K = detail::probe_rect(box, h[0], h[1], h[2], h[3]);
        const Rect L = detail::probe_rect(box, h[4], h[5], h[6], h[7]);
        const auto [k0, k1] = detail::projection(K, e);
        const auto [l0, l1] = detail::projection(L, e);
        if (k1 + box.margin <= l0 || l1 + box.margin <= k0) ps.separated.push_back({K, L});
    }
    for (std::uint64_t i = start; ps.shifts.size() < static_cast<std::size_t>(count); ++i) {
        if (i - start > max_tries) throw Error(ErrorKind::IncompleteGrid, "could not place shift probes");
        const auto h = halton(i, 5);
        const Rect K = detail::probe_rect(box, h[0], h[1], h[2], h[3]);
        const double t = detail::snap_shift(box, e, box.side_min + h[4] * (box.side_max - box.side_min));
        for (double s : {t, -t}) {
            const Rect L = K.shifted(s * e.x, s * e.y);
            if (detail::inside(box, L)) {
                ps.shifts.push_back({K, s});
                break;
            }
        }
    }
    return ps;
}

enum class Verdict { Independent, Invariant, Dependent };

inline const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::Independent: return "Independent";
    case Verdict::Invariant: return "Invariant";
    case Verdict::Dependent: return "Dependent";
    }
    return "?";
}

struct DirectionEvidence {
    Line direction;
    std::vector<double> cross;  // |Cov(V(K), V(L))| / sqrt(Var V(K) Var V(L)) per separated pair
    std::vector<double> shift;  // Var(V(K) - V(K + t l)) / Var V(K) per shift pair
    double max_cross = 0.0;
    double max_shift = 0.0;
};

struct DirectionVerdict {
    Line direction;
    Verdict verdict = Verdict::Dependent;
    DirectionEvidence evidence;
    double tol = 1e-3;
};

inline DirectionEvidence direction_evidence(const LimitFieldSpec& spec, const ProbeSet& probes,
                                            const QuadratureSpec& q = {})
{
    if (probes.separated.size() < 20 || probes.shifts.size() < 20)
        throw Error(ErrorKind::IncompleteGrid, "need at least 20 separated pairs and 20 shift pairs");
    DirectionEvidence ev;
    ev.direction = probes.direction;
    const Point e = probes.direction.direction();
    for (const auto& pr : probes.separated) {
        const double vk = rect_increment_cov(spec, pr.K, pr.K, q).value;
        const double vl = rect_increment_cov(spec, pr.L, pr.L, q).value;
        const double c = rect_increment_cov(spec, pr.K, pr.L, q).value;
        const double scale = std::sqrt(std::abs(vk * vl));
        ev.cross.push_back(scale > 0 ? std::abs(c) / scale : (c == 0.0 ? 0.0 : INFINITY));
    }
    for (const auto& pr : probes.shifts) {
        const Rect L = pr.K.shifted(pr.t * e.x, pr.t * e.y);
        const double vk = rect_increment_cov(spec, pr.K, pr.K, q).value;
        const double vl = rect_increment_cov(spec, L, L, q).value;
        const double c = rect_increment_cov(spec, pr.K, L, q).value;
        const double d = std::max(0.0, vk + vl - 2 * c);
        ev.shift.push_back(vk > 0 ? d / vk : (d == 0.0 ? 0.0 : INFINITY));
    }
    ev.max_cross = *std::max_element(ev.cross.begin(), ev.cross.end());
    ev.max_shift = *std::max_element(ev.shift.begin(), ev.shift.end());
    return ev;
}

inline DirectionVerdict decide(const DirectionEvidence& ev, double tol)
{
    if (!(tol > 0)) throw Error(ErrorKind::ParameterOutOfRange, "tol must be positive");
    const bool indep = ev.max_cross <= tol, inv = ev.max_shift <= tol;
    if (indep && inv)
        throw Error(ErrorKind::AmbiguousVerdict, "both independence and invariance tests pass; enlarge the probe set");
    DirectionVerdict d;
    d.direction = ev.direction;
    d.evidence = ev;
    d.tol = tol;
    d.verdict = indep ? Verdict::Independent : inv ? Verdict::Invariant : Verdict::Dependent;
    return d;
}

inline DirectionVerdict classify_direction(const LimitFieldSpec& spec, const ProbeSet& probes, double tol = 1e-3,
                                           const QuadratureSpec& q = {})
{
    return decide(direction_evidence(spec, probes, q), tol);
}

/// True when h is a function of au + bv alone on `samples` random pairs.
inline bool degeneracy_check(const SpectralKernel& h, const Line& l, int samples = 200, double tol = 1e-9,
                             std::uint64_t seed = 1)
{
    if (samples < 1) throw Error(ErrorKind::ParameterOutOfRange, "samples must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-4.0, 4.0);
    const Point e = l.direction();
    int done = 0;
    for (int tries = 0; done < samples && tries < 100 * samples; ++tries) {
        const double u = U(rng), v = U(rng), t = U(rng);
        const double u2 = u + t * e.x, v2 = v + t * e.y;
        if (h.singular_at(u, v) || h.singular_at(u2, v2)) continue;
        const double a = h(u, v), b = h(u2, v2);
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        ++done;
        if (std::abs(a - b) > tol * std::max({std::abs(a), std::abs(b), 1e-300})) return false;
    }
    return true;
}

/// Directions examined by classify_field: axes, both diagonals, and the model's own line when it has one.
inline std::vector<Line> direction_grid(const ValidatedModel& m)
{
    std::vector<Line> out = {Line::horizontal(), Line::vertical(), Line::make(1, -1), Line::make(1, 1)};
    if (m.kind() == ModelKind::LinearSingular) {
        for (const Line l : {Line::make(m->a.value, m->b.value), Line::make(m->b.value, -m->a.value)}) {
            const bool seen = std::any_of(out.begin(), out.end(), [&](const Line& o) {
                return std::abs(o.a - l.a) < 1e-12 && std::abs(o.b - l.b) < 1e-12;
            });
            if (!seen) out.push_back(l);
        }
    }
    return out;
}

struct GammaVerdicts {
    double gamma = 1.0;
    LimitKind kind = LimitKind::WellBalanced;
    std::vector<DirectionVerdict> verdicts;
    bool all_dependent = true;
    bool degenerate_direction = false;  // some direction is Independent or Invariant
};

struct FieldReport {
    std::optional<double> gamma0;
    std::vector<GammaVerdicts> per_gamma;
    std::vector<Line> directions;
    bool transition = false;       // verdict pattern changes across the grid
    bool type_i_pattern = false;   // dependent in every tested direction at gamma0, degenerate elsewhere
    bool isotropic = false;        // type_i_pattern with gamma0 = 1
    std::string summary;
};

inline FieldReport classify_field(const ValidatedModel& m, const std::vector<Number>& gamma_grid, int probes = 20,
                                  double tol = 1e-3, const QuadratureSpec& q = {})
{
    FieldReport rep;
    rep.gamma0 = critical_gamma(m);
    if (gamma_grid.size() < 2) throw Error(ErrorKind::IncompleteGrid, "gamma grid needs at least two values");
    if (rep.gamma0) {
        bool at = false, below = false, above = false;
        for (const Number& g : gamma_grid) {
            const int side = hurst_exponent(m, g).regime == Regime::Critical     ? 0
                             : hurst_exponent(m, g).regime == Regime::Subcritical ? -1
                                                                                   : 1;
            at |= side == 0;
            below |= side < 0;
            above |= side > 0;
        }
        if (!(at && below && above))
            throw Error(ErrorKind::IncompleteGrid, "gamma grid must contain gamma0 and a value on each side");
    }
    rep.directions = direction_grid(m);
    std::vector<ProbeSet> sets;
    for (const Line& l : rep.directions) sets.push_back(make_probes(l, probes));
    for (const Number& g : gamma_grid) {
        GammaVerdicts gv;
        gv.gamma = g.value;
        const LimitFieldSpec spec = make_limit_field(m, g);
        gv.kind = spec.kind;
        for (const ProbeSet& ps : sets) {
            gv.verdicts.push_back(classify_direction(spec, ps, tol, q));
            if (gv.verdicts.back().verdict != Verdict::Dependent) {
                gv.all_dependent = false;
                gv.degenerate_direction = true;
            }
        }
        rep.per_gamma.push_back(std::move(gv));
    }
    for (std::size_t i = 1; i < rep.per_gamma.size(); ++i)
        for (std::size_t d = 0; d < rep.directions.size(); ++d)
            if (rep.per_gamma[i].verdicts[d].verdict != rep.per_gamma[0].verdicts[d].verdict) rep.transition = true;
    if (rep.gamma0) {
        bool crit_dep = false, others_deg = true;
        for (const auto& gv : rep.per_gamma) {
            if (gv.kind == LimitKind::WellBalanced)
                crit_dep = gv.all_dependent;
            else
                others_deg = others_deg && gv.degenerate_direction;
        }
        rep.type_i_pattern = crit_dep && others_deg;
        rep.isotropic = rep.type_i_pattern && std::abs(*rep.gamma0 - 1.0) < gamma_tolerance;
    }
    if (rep.type_i_pattern)
        rep.summary = std::string("consistent with ") + (rep.isotropic ? "isotropic" : "anisotropic") +
                      " Type I distributional LRD on the tested directions";
    else if (!rep.transition)
        rep.summary = "no change of dependence pattern across the gamma grid";
    else
        rep.summary = "dependence pattern changes across the gamma grid but is not of Type I";
    return rep;
}

}  // namespace lrdfield
