#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lrdfield/error.hpp"
#include "lrdfield/field_synthesis.hpp"
#include "lrdfield/geometry.hpp"
#include "lrdfield/increment_analysis.hpp"
#include "lrdfield/limit_covariance.hpp"
#include "lrdfield/prelimit_covariance.hpp"
#include "lrdfield/spectral_models.hpp"

namespace lrdfield {

/// Sum of sample values over [i0, i1) x [j0, j1) (zero-based cell indices).
inline double block_sum(const LatticeSample& s, long i0, long i1, long j0, long j1)
{
    if (i0 < 0 || j0 < 0 || i1 > s.N1 || j1 > s.N2)
        throw Error(ErrorKind::RectangleExceedsSample, "block [" + std::to_string(i0) + "," + std::to_string(i1) +
                                                           ") x [" + std::to_string(j0) + "," + std::to_string(j1) +
                                                           ") exceeds the " + std::to_string(s.N1) + " x " +
                                                           std::to_string(s.N2) + " sample");
    double total = 0.0;
    for (long i = i0; i < i1; ++i) {
        const double* row = s.values.data() + i * s.N2;
        for (long j = j0; j < j1; ++j) total += row[j];
    }
    return total;
}

/// S_{n,gamma}(x, y): sum over t in [1, floor(n x)] x [1, floor(m y)], m = floor(n^gamma).
inline double partial_sum(const LatticeSample& s, long n, const Number& gamma, double x, double y)
{
    if (!(x >= 0 && y >= 0)) throw Error(ErrorKind::ParameterOutOfRange, "x and y must be nonnegative");
    const long m = scaled_count(n, gamma.value);
    return block_sum(s, 0, snapped_floor(n * x), 0, snapped_floor(m * y));
}

/// Sum over the lattice image of the rectangle K under (x, y) -> (n x, m y).
inline double rect_sum(const LatticeSample& s, long n, long m, const Rect& K)
{
    return block_sum(s, snapped_floor(n * K.x0), snapped_floor(n * K.x1), snapped_floor(m * K.y0),
                     snapped_floor(m * K.y1));
}

struct PointPair {
    Point p{1, 1}, pp{1, 1};
};

struct ExperimentPlan {
    explicit ExperimentPlan(ValidatedModel m) : model(std::move(m)) {}

    ValidatedModel model;
    std::vector<Number> gammas{Number(1.0)};
    std::vector<long> n_list{32, 64, 128, 256};
    std::vector<PointPair> pairs{PointPair{}};
    long replicates = 100;
    std::uint64_t seed = 1;
    SynthesisSpec synthesis;
    double cell_budget = 1 << 20;  // largest N1 * N2 simulated directly; beyond it exponent runs aggregate strips
    int threads = 1;

    void check() const
    {
        if (n_list.empty()) throw Error(ErrorKind::ParameterOutOfRange, "n_list is empty");
        for (std::size_t i = 0; i < n_list.size(); ++i) {
            if (n_list[i] < 1) throw Error(ErrorKind::ParameterOutOfRange, "n values must be positive");
            if (i > 0 && n_list[i] <= n_list[i - 1])
                throw Error(ErrorKind::ParameterOutOfRange, "n_list must be strictly increasing");
        }
        if (replicates < 2) throw Error(ErrorKind::ParameterOutOfRange, "replicates must be >= 2");
        if (gammas.empty()) throw Error(ErrorKind::ParameterOutOfRange, "gamma grid is empty");
        if (threads < 1) throw Error(ErrorKind::ParameterOutOfRange, "threads must be >= 1");
        synthesis.check();
    }
};

/// Replicate r of (n, gamma) gets its own stream, independent of thread scheduling.
inline std::uint64_t replicate_seed(std::uint64_t seed, long n, double gamma, long r)
{
    std::uint64_t gbits;
    std::memcpy(&gbits, &gamma, sizeof gbits);
    return derive_seed(seed, splitmix64(static_cast<std::uint64_t>(n)) ^ gbits, static_cast<std::uint64_t>(r));
}

/// Runs body(r) for r in [0, count) on `threads` workers; results are written by index.
inline void parallel_for(long count, int threads, const std::function<void(long)>& body)
{
    if (threads <= 1 || count <= 1) {
        for (long r = 0; r < count; ++r) body(r);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (long r = w; r < count; r += threads) body(r);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Leave-one-out jackknife for a smooth function of per-replicate vectors.
inline MeanEstimate jackknife(const std::vector<std::vector<double>>& rows,
                              const std::function<double(const std::vector<double>&)>& stat)
{
    const std::size_t R = rows.size(), K = rows.empty() ? 0 : rows[0].size();
    if (R < 2) throw Error(ErrorKind::ParameterOutOfRange, "jackknife needs at least two replicates");
    std::vector<double> total(K, 0.0);
    for (const auto& r : rows)
        for (std::size_t k = 0; k < K; ++k) total[k] += r[k];
    std::vector<double> mean(K);
    for (std::size_t k = 0; k < K; ++k) mean[k] = total[k] / static_cast<double>(R);
    MeanEstimate out;
    out.mean = stat(mean);
    std::vector<double> loo(K);
    double s = 0.0, s2 = 0.0;
    std::vector<double> th(R);
    for (std::size_t i = 0; i < R; ++i) {
        for (std::size_t k = 0; k < K; ++k) loo[k] = (total[k] - rows[i][k]) / static_cast<double>(R - 1);
        th[i] = stat(loo);
        s += th[i];
    }
    const double tbar = s / static_cast<double>(R);
    for (double t : th) s2 += (t - tbar) * (t - tbar);
    out.se = std::sqrt(static_cast<double>(R - 1) / static_cast<double>(R) * s2);
    return out;
}

struct CovEstimate {
    PointPair pair;
    double mean = 0.0;  // n^{-2H} E[S(p) S(p')], known-zero-mean estimator
    double se = 0.0;
};

struct CovFragment {
    long n = 0, m = 0;
    double gamma = 1.0;
    double H = 0.0;
    long N1 = 0, N2 = 0;
    std::vector<CovEstimate> estimates;
    SynthesisReport synthesis;
};

namespace detail {

inline std::pair<long, long> sample_extent(long n, long m, const std::vector<PointPair>& pairs)
{
    long N1 = 1, N2 = 1;
    for (const auto& pr : pairs)
        for (const Point& p : {pr.p, pr.pp}) {
            N1 = std::max(N1, snapped_floor(n * p.x));
            N2 = std::max(N2, snapped_floor(m * p.y));
        }
    return {N1, N2};
}

inline void check_budget(long N1, long N2, double budget)
{
    if (static_cast<double>(N1) * static_cast<double>(N2) > budget)
        throw Error(ErrorKind::BudgetExceeded, "sample " + std::to_string(N1) + " x " + std::to_string(N2) +
                                                   " exceeds the cell budget " + format_double(budget));
}

}  // namespace detail

inline CovFragment mc_normalized_cov(const ExperimentPlan& plan, const Number& gamma, long n)
{
    plan.check();
    CovFragment out;
    out.n = n;
    out.gamma = gamma.value;
    out.m = scaled_count(n, gamma.value);
    out.H = hurst_exponent(plan.model, gamma).H;
    const auto [N1, N2] = detail::sample_extent(n, out.m, plan.pairs);
    detail::check_budget(N1, N2, plan.cell_budget);
    out.N1 = N1;
    out.N2 = N2;
    const CirculantEmbedding emb = circulant_embedding(plan.model, N1, N2, plan.synthesis);
    out.synthesis = emb.report;
    const double scale = std::pow(static_cast<double>(n), -2 * out.H);
    const std::size_t P = plan.pairs.size();
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(plan.replicates), std::vector<double>(P));
    parallel_for(plan.replicates, plan.threads, [&](long r) {
        const LatticeSample s = sample_embedding(emb, replicate_seed(plan.seed, n, gamma.value, r));
        for (std::size_t k = 0; k < P; ++k) {
            const auto& pr = plan.pairs[k];
            const double a = partial_sum(s, n, gamma, pr.p.x, pr.p.y);
            const double b = partial_sum(s, n, gamma, pr.pp.x, pr.pp.y);
            rows[static_cast<std::size_t>(r)][k] = scale * a * b;
        }
    });
    for (std::size_t k = 0; k < P; ++k) {
        const MeanEstimate e = jackknife(rows, [k](const std::vector<double>& v) { return v[k]; });
        out.estimates.push_back({plan.pairs[k], e.mean, e.se});
    }
    return out;
}

// Strip aggregation: the column sums Y(t) = sum_{s < M} X(t, s) form a stationary sequence whose
// autocovariance is a one-dimensional spectral integral, so S(1,1) can be sampled from Y alone.

/// Autocovariance r_Y(0..L) of the sums of the field over M consecutive cells along v (over_v) or u.
inline std::vector<double> aggregated_autocovariance(const ValidatedModel& m, long M, long L, bool over_v,
                                                     const GridOptions& opt = {})
{
    if (M < 1 || L < 0) throw Error(ErrorKind::ParameterOutOfRange, "aggregation needs M >= 1 and L >= 0");
    const long G = detail::good_fft_size(2L * opt.refine * std::max<long>(L, 1));
    std::vector<double> r(static_cast<std::size_t>(L + 1));
    if (m.separable()) {
        const bool s1 = m.kind() == ModelKind::TypeII;
        auto fu = [&m](double u) { return m.factor_u(u); };
        auto fv = [&m](double v) { return m.factor_v(v); };
        const SpectralLagLine kept = over_v ? spectral_lag_line(fu, s1, G, opt) : spectral_lag_line(fv, s1, G, opt);
        const long Ga = detail::good_fft_size(2L * opt.refine * M);
        const SpectralLagLine agg = over_v ? spectral_lag_line(fv, s1, Ga, opt) : spectral_lag_line(fu, s1, Ga, opt);
        if (!kept.ok || !agg.ok) throw Error(ErrorKind::NotConverged, "lag-line cell quadrature did not converge");
        const double w = detail::lag_sum_1d(agg, M, M);
        for (long t = 0; t <= L; ++t) r[static_cast<std::size_t>(t)] = kept(t) * w;
        return r;
    }
    if (!m.separately_even())
        throw Error(ErrorKind::BudgetExceeded, "strip aggregation needs a separately even density");
    PrelimitOptions po;
    po.grid = opt;
    QuadratureSpec q;
    q.rel_tol = 1e-9;
    detail::PsiCache cache;
    const detail::MarginalLine ml = detail::marginal_lag_line(m, detail::fejer_terms(M, M), G, !over_v, q, po, cache);
    if (!ml.ok) throw Error(ErrorKind::NotConverged, "marginal quadrature did not converge");
    for (long t = 0; t <= L; ++t) r[static_cast<std::size_t>(t)] = ml.line(t);
    return r;
}

struct VarianceAtN {
    long n = 0, m = 0;
    double variance = 0.0;  // mean of S(1,1)^2
    double se = 0.0;
    bool aggregated = false;
    SynthesisReport synthesis;
};

struct ExponentReport {
    double gamma = 1.0;
    std::vector<VarianceAtN> points;
    double slope = 0.0, intercept = 0.0, r2 = 0.0, slope_se = 0.0;
    double H_hat = 0.0, H_se = 0.0;
    double H_target = 0.0;
};

/// Replicates of S(1,1) at one n, by direct synthesis or strip aggregation.
inline std::vector<double> unit_sums(const ExperimentPlan& plan, const Number& gamma, long n, VarianceAtN& info)
{
    const long m = scaled_count(n, gamma.value);
    info.n = n;
    info.m = m;
    std::vector<double> sums(static_cast<std::size_t>(plan.replicates));
    if (static_cast<double>(n) * static_cast<double>(m) <= plan.cell_budget) {
        const CirculantEmbedding emb = circulant_embedding(plan.model, n, m, plan.synthesis);
        info.synthesis = emb.report;
        parallel_for(plan.replicates, plan.threads, [&](long r) {
            const LatticeSample s = sample_embedding(emb, replicate_seed(plan.seed, n, gamma.value, r));
            sums[static_cast<std::size_t>(r)] = block_sum(s, 0, n, 0, m);
        });
        return sums;
    }
    info.aggregated = true;
    const bool over_v = m >= n;
    const long keep = over_v ? n : m, agg = over_v ? m : n;
    LineEmbedding emb;
    bool done = false;
    for (int f = 1; f <= plan.synthesis.max_embedding_factor / 2 && !done; f *= 2) {
        const std::vector<double> ry = aggregated_autocovariance(plan.model, agg, f * keep, over_v, plan.synthesis.grid);
        emb = line_embedding(ry, keep);
        done = emb.report.clipped_mass <= plan.synthesis.clip_threshold;
    }
    if (!done && !plan.synthesis.allow_approximate)
        throw Error(ErrorKind::EmbeddingTooSmall,
                    "clipped mass " + format_double(emb.report.clipped_mass) + " in the aggregated embedding");
    emb.report.approximate = !done;
    info.synthesis = emb.report;
    parallel_for(plan.replicates, plan.threads, [&](long r) {
        const std::vector<double> y = sample_line(emb, replicate_seed(plan.seed, n, gamma.value, r));
        double total = 0.0;
        for (double v : y) total += v;
        sums[static_cast<std::size_t>(r)] = total;
    });
    return sums;
}

inline ExponentReport estimate_exponent(const ExperimentPlan& plan, const Number& gamma)
{
    plan.check();
    if (plan.n_list.size() < 3) throw Error(ErrorKind::DegenerateRegression, "need at least three values of n");
    ExponentReport rep;
    rep.gamma = gamma.value;
    rep.H_target = hurst_exponent(plan.model, gamma).H;
    std::vector<double> xs, ys;
    for (long n : plan.n_list) {
        VarianceAtN v;
        const std::vector<double> sums = unit_sums(plan, gamma, n, v);
        std::vector<std::vector<double>> rows;
        for (double s : sums) rows.push_back({s * s});
        const MeanEstimate e = jackknife(rows, [](const std::vector<double>& x) { return x[0]; });
        v.variance = e.mean;
        v.se = e.se;
        if (!(v.variance > 0))
            throw Error(ErrorKind::DegenerateRegression, "nonpositive variance estimate at n = " + std::to_string(n));
        xs.push_back(std::log(static_cast<double>(n)));
        ys.push_back(std::log(v.variance));
        rep.points.push_back(v);
    }
    const double k = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i] / k;
        my += ys[i] / k;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    rep.slope = sxy / sxx;
    rep.intercept = my - rep.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - rep.intercept - rep.slope * xs[i];
        sse += e * e;
    }
    rep.r2 = syy > 0 ? 1 - sse / syy : 1.0;
    rep.slope_se = std::sqrt(sse / (k - 2) / sxx);
    rep.H_hat = rep.slope / 2;
    rep.H_se = rep.slope_se / 2;
    return rep;
}

struct ProfileValue {
    std::string name;
    double rho = 0.0, se = 0.0;
    std::optional<double> limit;  // correlation of the scaling-limit field, when available
};

struct ScanRow {
    double gamma = 1.0;
    long n = 0, m = 0;
    std::string limit_kind;
    std::vector<ProfileValue> profile;
};

struct LevelShift {
    std::string profile;
    double gamma_lo = 0.0, gamma_hi = 0.0;
    double delta = 0.0, pooled_se = 0.0;
};

struct ScanReport {
    std::vector<ScanRow> rows;
    std::vector<LevelShift> shifts;  // grid intervals where a profile moves by more than 3 pooled SE
    std::optional<double> gamma0;
};

/// Correlations of normalized sums at the largest n for each gamma in the plan.
inline ScanReport transition_scan(const ExperimentPlan& plan, bool with_limits = true, const QuadratureSpec& q = {})
{
    plan.check();
    ScanReport rep;
    rep.gamma0 = critical_gamma(plan.model);
    const long n = plan.n_list.back();
    const Rect unit = Rect::make(0, 0, 1, 1);
    struct Probe {
        std::string name;
        Rect K, L;
    };
    const std::vector<Probe> probes = {
        {"rho((1,1),(2,1))", unit, Rect::make(0, 0, 2, 1)},
        {"rho((1,1),(1,2))", unit, Rect::make(0, 0, 1, 2)},
        {"rho_increment_horizontal", unit, Rect::make(1, 0, 2, 1)},
        {"rho_increment_vertical", unit, Rect::make(0, 1, 1, 2)},
    };
    for (const Number& g : plan.gammas) {
        ScanRow row;
        row.gamma = g.value;
        row.n = n;
        row.m = scaled_count(n, g.value);
        const long N1 = 2 * n, N2 = 2 * row.m;
        detail::check_budget(N1, N2, plan.cell_budget);
        const CirculantEmbedding emb = circulant_embedding(plan.model, N1, N2, plan.synthesis);
        // Per replicate: V(K)^2, V(L)^2, V(K)V(L) for each probe.
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(plan.replicates),
                                              std::vector<double>(3 * probes.size()));
        parallel_for(plan.replicates, plan.threads, [&](long r) {
            const LatticeSample s = sample_embedding(emb, replicate_seed(plan.seed, n, g.value, r));
            auto& out = rows[static_cast<std::size_t>(r)];
            for (std::size_t k = 0; k < probes.size(); ++k) {
                const double a = rect_sum(s, n, row.m, probes[k].K), b = rect_sum(s, n, row.m, probes[k].L);
                out[3 * k] = a * a;
                out[3 * k + 1] = b * b;
                out[3 * k + 2] = a * b;
            }
        });
        std::optional<LimitFieldSpec> spec;
        if (with_limits) {
            try {
                spec = make_limit_field(plan.model, g);
                row.limit_kind = to_string(spec->kind);
            } catch (const Error&) {
                spec.reset();
            }
        }
        for (std::size_t k = 0; k < probes.size(); ++k) {
            const MeanEstimate e = jackknife(rows, [k](const std::vector<double>& v) {
                return v[3 * k + 2] / std::sqrt(v[3 * k] * v[3 * k + 1]);
            });
            ProfileValue pv{probes[k].name, e.mean, e.se, std::nullopt};
            if (spec) {
                const double c = rect_increment_cov(*spec, probes[k].K, probes[k].L, q).value;
                const double a = rect_increment_cov(*spec, probes[k].K, probes[k].K, q).value;
                const double b = rect_increment_cov(*spec, probes[k].L, probes[k].L, q).value;
                pv.limit = c / std::sqrt(a * b);
            }
            row.profile.push_back(pv);
        }
        rep.rows.push_back(std::move(row));
    }
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        for (std::size_t k = 0; k < probes.size(); ++k) {
            const ProfileValue &a = rep.rows[i - 1].profile[k], &b = rep.rows[i].profile[k];
            const double pooled = std::sqrt(a.se * a.se + b.se * b.se);
            if (std::abs(b.rho - a.rho) > 3 * pooled)
                rep.shifts.push_back({a.name, rep.rows[i - 1].gamma, rep.rows[i].gamma, b.rho - a.rho, pooled});
        }
    return rep;
}

}  // namespace lrdfield
