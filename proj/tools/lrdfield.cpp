// Command-line front end: lrdfield <subcommand> [--config FILE] [key=value ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrdfield/field_synthesis.hpp"
#include "lrdfield/increment_analysis.hpp"
#include "lrdfield/limit_covariance.hpp"
#include "lrdfield/prelimit_covariance.hpp"
#include "lrdfield/scaling_harness.hpp"
#include "lrdfield/spectral_models.hpp"

#ifndef LRDFIELD_VERSION
#define LRDFIELD_VERSION "0.0.0"
#endif

using namespace lrdfield;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> subcommands = {"validate",   "spectrum",    "limit-cov",       "prelimit-cov",
                                              "converge",   "simulate",    "mc-scaling",      "exponent",
                                              "transition-scan", "classify"};

int exit_code(ErrorKind k)
{
    switch (k) {
    case ErrorKind::NotConverged:
    case ErrorKind::MethodDisagreement:
    case ErrorKind::RatioNotConstant:
    case ErrorKind::EmbeddingTooSmall:
    case ErrorKind::CholeskyFailure:
    case ErrorKind::DegenerateRegression: return 3;
    case ErrorKind::IoError: return 4;
    default: return 2;
    }
}

// Defaults per subcommand; any key outside this set (plus model keys) is rejected.
std::map<std::string, std::string> defaults_for(const std::string& sub)
{
    std::map<std::string, std::string> d = {
        {"output.dir", "."},       {"output.formats", "json,csv"}, {"quad.rel_tol", "1e-7"},
        {"quad.abs_tol", "1e-14"}, {"quad.max_panels", "200000"},  {"quad.ring_base", "2"},
        {"quad.tail_cutoff", "32"}, {"threads", "1"},
    };
    auto add = [&](std::initializer_list<std::pair<const char*, const char*>> kv) {
        for (const auto& [k, v] : kv) d[k] = v;
    };
    if (sub == "validate") add({{"gamma", ""}});
    if (sub == "spectrum") add({{"spectrum.size", "256"}, {"spectrum.extent", "3.141592653589793"}, {"output.formats", "json,csv,pgm"}});
    if (sub == "limit-cov") add({{"gamma", ""}, {"p", "1,1"}, {"pp", "1,1"}});
    if (sub == "prelimit-cov")
        add({{"gamma", "1"}, {"n", "16"}, {"p", "1,1"}, {"pp", "1,1"}, {"method", "Both"}, {"normalize", "true"}});
    if (sub == "converge") add({{"gamma", ""}, {"n_list", "16,64,256,1024"}, {"p", "1,1"}, {"pp", "1,1"}});
    if (sub == "simulate")
        add({{"seed", "1"}, {"N1", "64"}, {"N2", "64"}, {"field", "stationary"}, {"sheet.H1", "0.5"},
             {"sheet.H2", "0.5"}, {"sheet.x_max", "1"}, {"sheet.y_max", "1"}, {"synthesis.clip_threshold", "1e-3"},
             {"synthesis.max_embedding_factor", "8"}, {"synthesis.allow_approximate", "false"},
             {"output.formats", "json,bin"}});
    if (sub == "mc-scaling")
        add({{"gamma", "1"}, {"n_list", "64"}, {"pairs", "1,1:1,1"}, {"replicates", "100"}, {"seed", "1"},
             {"mc.prelimit", "true"}, {"mc.limit", "true"}, {"synthesis.clip_threshold", "1e-3"},
             {"synthesis.max_embedding_factor", "8"}, {"synthesis.allow_approximate", "false"},
             {"budget.cells", "1048576"}});
    if (sub == "exponent")
        add({{"gamma", "1"}, {"n_list", "32,64,128,256"}, {"replicates", "200"}, {"seed", "1"},
             {"synthesis.clip_threshold", "1e-3"}, {"synthesis.max_embedding_factor", "8"},
             {"synthesis.allow_approximate", "false"}, {"budget.cells", "1048576"}});
    if (sub == "transition-scan")
        add({{"gamma_grid", ""}, {"n", "32"}, {"replicates", "200"}, {"seed", "1"}, {"scan.limits", "true"},
             {"synthesis.clip_threshold", "1e-3"}, {"synthesis.max_embedding_factor", "8"},
             {"synthesis.allow_approximate", "false"}, {"budget.cells", "1048576"}});
    if (sub == "classify") add({{"gamma_grid", ""}, {"probes", "20"}, {"tol", "1e-3"}});
    return d;
}

bool needs_model(const std::string& sub) { return sub != "simulate"; }

std::string read_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::IoError, "cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(detail::trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(detail::trim(cur));
    return out;
}

Point parse_point(const std::string& s)
{
    const auto parts = split(s, ',');
    if (parts.size() != 2) throw Error(ErrorKind::ConfigError, "point must be 'x,y': '" + s + "'");
    return {parse_number(parts[0]).value, parse_number(parts[1]).value};
}

std::vector<Number> parse_numbers(const std::string& s)
{
    std::vector<Number> out;
    if (detail::trim(s).empty()) return out;
    for (const auto& p : split(s, ',')) out.push_back(parse_number(p));
    return out;
}

std::vector<long> parse_longs(const std::string& s)
{
    std::vector<long> out;
    for (const auto& x : parse_numbers(s)) {
        if (x.value != std::floor(x.value)) throw Error(ErrorKind::ConfigError, "expected integers: '" + s + "'");
        out.push_back(static_cast<long>(x.value));
    }
    return out;
}

bool parse_bool(const std::string& s)
{
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error(ErrorKind::ConfigError, "expected a boolean: '" + s + "'");
}

struct Run {
    std::string sub;
    KeyValueConfig cfg;
    fs::path out_dir;
    std::set<std::string> formats;
    std::vector<std::string> outputs;
    json result;

    bool want(const std::string& f) const { return formats.count(f) != 0; }
    const std::string& get(const std::string& k) const { return cfg.get(k); }
    Number num(const std::string& k) const { return cfg.number(k); }
    long integer(const std::string& k) const
    {
        const Number x = num(k);
        if (x.value != std::floor(x.value)) throw Error(ErrorKind::ConfigError, k + " must be an integer");
        return static_cast<long>(x.value);
    }
    bool flag(const std::string& k) const { return parse_bool(get(k)); }

    void emit(const std::string& name, const std::string& text)
    {
        write_file(out_dir / name, text);
        outputs.push_back(name);
    }

    QuadratureSpec quad() const
    {
        QuadratureSpec q;
        q.rel_tol = num("quad.rel_tol").value;
        q.abs_tol = num("quad.abs_tol").value;
        q.max_panels = static_cast<std::size_t>(integer("quad.max_panels"));
        q.ring_base = num("quad.ring_base").value;
        q.tail_cutoff = num("quad.tail_cutoff").value;
        q.check();
        return q;
    }

    SynthesisSpec synthesis() const
    {
        SynthesisSpec s;
        s.clip_threshold = num("synthesis.clip_threshold").value;
        s.max_embedding_factor = static_cast<int>(integer("synthesis.max_embedding_factor"));
        s.allow_approximate = flag("synthesis.allow_approximate");
        s.check();
        return s;
    }

    ValidatedModel model() const { return validate(model_from_config(cfg, "model.")); }
};

std::string csv_num(double x) { return std::isfinite(x) ? format_double(x) : (std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf")); }

json jnum(double x)
{
    if (std::isfinite(x)) return x;
    return csv_num(x);
}

json model_json(const ValidatedModel& m)
{
    json j;
    const KeyValueConfig c = to_config(m.model());
    for (const auto& k : c.keys()) j[k] = c.get(k);
    return j;
}

json integral_json(const IntegralResult& r)
{
    return json{{"value", jnum(r.value)}, {"err_estimate", jnum(r.err_estimate)}, {"converged", r.converged}};
}

Number required_gamma(const Run& r, const ValidatedModel& m)
{
    if (!r.get("gamma").empty()) return r.num("gamma");
    if (auto g0 = critical_gamma(m)) return Number(*g0);
    return Number(1.0);
}

// Subcommands.

void cmd_validate(Run& r)
{
    const ValidatedModel m = r.model();
    json j{{"valid", true}, {"model", model_json(m)}};
    if (auto g0 = critical_gamma(m)) j["gamma0"] = *g0;
    else j["gamma0"] = nullptr;
    if (!r.get("gamma").empty()) {
        const ScalingRegime reg = hurst_exponent(m, r.num("gamma"));
        j["gamma"] = reg.gamma;
        j["regime"] = to_string(reg.regime);
        j["H"] = reg.H;
        j["tolerance_classified"] = reg.tolerance_classified;
    }
    r.result = j;
    if (r.want("json")) r.emit("validate.json", j.dump(2) + "\n");
}

void cmd_spectrum(Run& r)
{
    const ValidatedModel m = r.model();
    const long size = r.integer("spectrum.size");
    const double ext = r.num("spectrum.extent").value;
    if (size < 2) throw Error(ErrorKind::ParameterOutOfRange, "spectrum.size must be >= 2");
    if (!(ext > 0 && ext <= pi)) throw Error(ErrorKind::ParameterOutOfRange, "spectrum.extent must be in (0, pi]");
    // Cell centers, so the singular axes and origin are never sampled exactly.
    const double h = 2 * ext / static_cast<double>(size);
    std::vector<double> grid(static_cast<std::size_t>(size * size));
    double fmax = 0.0, fmin = INFINITY;
    long imax = 0, jmax = 0;
    for (long i = 0; i < size; ++i)
        for (long j = 0; j < size; ++j) {
            const double u = -ext + (i + 0.5) * h, v = -ext + (j + 0.5) * h;
            const double f = m.in_singular_set(u, v) ? NAN : m.density(u, v);
            grid[static_cast<std::size_t>(i * size + j)] = f;
            if (std::isfinite(f)) {
                if (f > fmax) {
                    fmax = f;
                    imax = i;
                    jmax = j;
                }
                if (f > 0) fmin = std::min(fmin, f);
            }
        }
    auto f_at = [&m](double u, double v) { return m.in_singular_set(u, v) ? NAN : m.density(u, v); };
    json j{{"model", model_json(m)},
           {"size", size},
           {"extent", ext},
           {"row_coordinate", "u"},
           {"column_coordinate", "v"},
           {"max", jnum(fmax)},
           {"argmax", {{"u", -ext + (imax + 0.5) * h}, {"v", -ext + (jmax + 0.5) * h}}},
           {"min_positive", jnum(fmin)},
           {"signature",
            {{"f(1e-4,1)", jnum(f_at(1e-4, 1))},
             {"f(0.1,1)", jnum(f_at(0.1, 1))},
             {"ratio", jnum(f_at(1e-4, 1) / f_at(0.1, 1))}}}};
    r.result = j;
    if (r.want("csv")) {
        std::string csv;
        for (long i = 0; i < size; ++i) {
            for (long jj = 0; jj < size; ++jj) {
                if (jj) csv += ',';
                csv += csv_num(grid[static_cast<std::size_t>(i * size + jj)]);
            }
            csv += '\n';
        }
        r.emit("spectrum.csv", csv);
    }
    if (r.want("pgm")) {
        const double lo = std::log(fmin), hi = std::log(fmax);
        std::string pgm = "P5\n" + std::to_string(size) + " " + std::to_string(size) + "\n255\n";
        for (long i = 0; i < size; ++i)
            for (long jj = 0; jj < size; ++jj) {
                const double f = grid[static_cast<std::size_t>(i * size + jj)];
                double t = 1.0;
                if (std::isfinite(f) && f > 0 && hi > lo) t = (std::log(f) - lo) / (hi - lo);
                else if (std::isfinite(f) && f <= 0) t = 0.0;
                pgm += static_cast<char>(static_cast<unsigned char>(std::lround(255 * std::clamp(t, 0.0, 1.0))));
            }
        r.emit("spectrum.pgm", pgm);
    }
    if (r.want("json")) r.emit("spectrum.json", j.dump(2) + "\n");
}

void cmd_limit_cov(Run& r)
{
    const ValidatedModel m = r.model();
    const Number g = required_gamma(r, m);
    const Point p = parse_point(r.get("p")), pp = parse_point(r.get("pp"));
    const LimitFieldSpec spec = make_limit_field(m, g);
    const IntegralResult v = limit_cov(spec, p, pp, r.quad());
    if (!v.converged) throw Error(ErrorKind::NotConverged, "limit covariance quadrature did not converge");
    json j{{"model", model_json(m)},   {"gamma", g.value},       {"kind", to_string(spec.kind)},
           {"degenerate", spec.degenerate}, {"H", jnum(spec.H.value_or(NAN))}, {"p", {p.x, p.y}},
           {"pp", {pp.x, pp.y}},       {"covariance", integral_json(v)}};
    if (spec.fbs_params) j["fbs_params"] = {spec.fbs_params->first, spec.fbs_params->second};
    r.result = j;
    if (r.want("csv"))
        r.emit("limit_cov.csv", "x,y,x2,y2,kind,value,err_estimate\n" + csv_num(p.x) + "," + csv_num(p.y) + "," +
                                    csv_num(pp.x) + "," + csv_num(pp.y) + "," + to_string(spec.kind) + "," +
                                    csv_num(v.value) + "," + csv_num(v.err_estimate) + "\n");
    if (r.want("json")) r.emit("limit_cov.json", j.dump(2) + "\n");
}

PrelimitMethod parse_method(const std::string& s)
{
    if (s == "DirichletQuadrature") return PrelimitMethod::DirichletQuadrature;
    if (s == "FFTLagSum") return PrelimitMethod::FFTLagSum;
    if (s == "Both") return PrelimitMethod::Both;
    throw Error(ErrorKind::ConfigError, "method must be DirichletQuadrature, FFTLagSum or Both");
}

void cmd_prelimit_cov(Run& r)
{
    const ValidatedModel m = r.model();
    PrelimitQuery q{m, r.integer("n"), r.num("gamma"), parse_point(r.get("p")), parse_point(r.get("pp")),
                    parse_method(r.get("method"))};
    const bool norm = r.flag("normalize");
    const PrelimitResult res = norm ? normalized_prelimit(q, r.quad()) : prelimit_cov(q, r.quad());
    json j{{"model", model_json(m)},
           {"n", q.n},
           {"gamma", q.gamma.value},
           {"m", res.counts.m},
           {"counts", {{"N", res.counts.N}, {"N2", res.counts.Np}, {"M", res.counts.M}, {"M2", res.counts.Mp}}},
           {"normalized", norm},
           {"method", to_string(q.method)},
           {"value", integral_json(res.value)}};
    if (norm) j["H"] = hurst_exponent(m, q.gamma).H;
    if (res.dirichlet) j["dirichlet"] = integral_json(*res.dirichlet);
    if (res.lag_sum) {
        j["lag_sum"] = integral_json(*res.lag_sum);
        j["lag_route"] = res.lag_route;
    }
    if (res.dirichlet && res.lag_sum) j["discrepancy"] = res.discrepancy;
    r.result = j;
    if (r.want("csv")) {
        std::string csv = "route,value,err_estimate\n";
        if (res.dirichlet)
            csv += "DirichletQuadrature," + csv_num(res.dirichlet->value) + "," + csv_num(res.dirichlet->err_estimate) + "\n";
        if (res.lag_sum)
            csv += "FFTLagSum," + csv_num(res.lag_sum->value) + "," + csv_num(res.lag_sum->err_estimate) + "\n";
        r.emit("prelimit_cov.csv", csv);
    }
    if (r.want("json")) r.emit("prelimit_cov.json", j.dump(2) + "\n");
}

void cmd_converge(Run& r)
{
    const ValidatedModel m = r.model();
    const Number g = required_gamma(r, m);
    const Point p = parse_point(r.get("p")), pp = parse_point(r.get("pp"));
    const std::vector<long> ns = parse_longs(r.get("n_list"));
    if (ns.empty()) throw Error(ErrorKind::ConfigError, "n_list is empty");
    const LimitFieldSpec spec = make_limit_field(m, g);
    const IntegralResult lim = limit_cov(spec, p, pp, r.quad());
    std::string csv = "n,m,normalized,normalized_err,limit,limit_err,abs_error,rel_error\n";
    json rows = json::array();
    for (long n : ns) {
        PrelimitQuery q{m, n, g, p, pp, PrelimitMethod::FFTLagSum};
        const PrelimitResult res = normalized_prelimit(q, r.quad());
        const double ae = std::abs(res.value.value - lim.value), re = ae / std::abs(lim.value);
        csv += std::to_string(n) + "," + std::to_string(res.counts.m) + "," + csv_num(res.value.value) + "," +
               csv_num(res.value.err_estimate) + "," + csv_num(lim.value) + "," + csv_num(lim.err_estimate) + "," +
               csv_num(ae) + "," + csv_num(re) + "\n";
        rows.push_back({{"n", n},
                        {"m", res.counts.m},
                        {"normalized", integral_json(res.value)},
                        {"lag_route", res.lag_route},
                        {"abs_error", ae},
                        {"rel_error", re}});
    }
    json j{{"model", model_json(m)}, {"gamma", g.value},       {"kind", to_string(spec.kind)},
           {"H", jnum(spec.H.value_or(NAN))}, {"p", {p.x, p.y}}, {"pp", {pp.x, pp.y}},
           {"limit", integral_json(lim)}, {"rows", rows}};
    r.result = j;
    if (r.want("csv")) r.emit("converge.csv", csv);
    if (r.want("json")) r.emit("converge.json", j.dump(2) + "\n");
}

void cmd_simulate(Run& r)
{
    const std::uint64_t seed = static_cast<std::uint64_t>(r.integer("seed"));
    const std::string field = r.get("field");
    json j{{"field", field}, {"seed", seed}};
    std::vector<double> values;
    long rows = 0, cols = 0;
    std::uint64_t hash = 0;
    if (field == "stationary") {
        const ValidatedModel m = r.model();
        const LatticeSample s = simulate_stationary(m, r.integer("N1"), r.integer("N2"), seed, r.synthesis());
        j["model"] = model_json(m);
        j["model_hash"] = s.model_hash;
        j["synthesis"] = {{"embedding", {s.report.embedding1, s.report.embedding2}},
                          {"clipped_mass", s.report.clipped_mass},
                          {"approximate", s.report.approximate}};
        values = s.values;
        rows = s.N1;
        cols = s.N2;
        hash = s.model_hash;
    } else if (field == "sheet") {
        const SheetSample s = simulate_fbs(r.num("sheet.H1").value, r.num("sheet.H2").value, r.integer("N1"),
                                           r.integer("N2"), r.num("sheet.x_max").value, r.num("sheet.y_max").value,
                                           seed);
        j["sheet"] = {{"H1", s.H1}, {"H2", s.H2}, {"x_max", s.x_max}, {"y_max", s.y_max}, {"jitter", s.jitter}};
        values = s.values;
        rows = s.n1 + 1;
        cols = s.n2 + 1;
    } else {
        throw Error(ErrorKind::ConfigError, "field must be 'stationary' or 'sheet'");
    }
    j["shape"] = {rows, cols};
    double s1 = 0, s2 = 0;
    for (double v : values) {
        s1 += v;
        s2 += v * v;
    }
    j["mean"] = s1 / static_cast<double>(values.size());
    j["mean_square"] = s2 / static_cast<double>(values.size());
    r.result = j;
    if (r.want("bin"))
        write_grid((r.out_dir / "sample.bin").string(),
                   {static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols), seed, hash, values}),
            r.outputs.push_back("sample.bin");
    if (r.want("csv")) {
        std::string csv;
        for (long i = 0; i < rows; ++i) {
            for (long k = 0; k < cols; ++k) {
                if (k) csv += ',';
                csv += csv_num(values[static_cast<std::size_t>(i * cols + k)]);
            }
            csv += '\n';
        }
        r.emit("sample.csv", csv);
    }
    if (r.want("json")) r.emit("simulate.json", j.dump(2) + "\n");
}

std::vector<PointPair> parse_pairs(const std::string& s)
{
    std::vector<PointPair> out;
    for (const auto& item : split(s, ';')) {
        const auto pts = split(item, ':');
        if (pts.size() != 2) throw Error(ErrorKind::ConfigError, "pair must be 'x,y:x2,y2': '" + item + "'");
        out.push_back({parse_point(pts[0]), parse_point(pts[1])});
    }
    return out;
}

ExperimentPlan make_plan(const Run& r, const ValidatedModel& m)
{
    ExperimentPlan plan{m};
    if (r.cfg.has("n_list")) plan.n_list = parse_longs(r.get("n_list"));
    plan.replicates = r.integer("replicates");
    plan.seed = static_cast<std::uint64_t>(r.integer("seed"));
    plan.synthesis = r.synthesis();
    plan.cell_budget = r.num("budget.cells").value;
    plan.threads = static_cast<int>(r.integer("threads"));
    return plan;
}

void cmd_mc_scaling(Run& r)
{
    const ValidatedModel m = r.model();
    ExperimentPlan plan = make_plan(r, m);
    plan.pairs = parse_pairs(r.get("pairs"));
    const Number g = r.num("gamma");
    plan.gammas = {g};
    plan.check();
    std::optional<LimitFieldSpec> spec;
    if (r.flag("mc.limit")) spec = make_limit_field(m, g);
    std::string csv = "n,m,x,y,x2,y2,mc_mean,mc_se,prelimit,prelimit_err,z_prelimit,limit,limit_err\n";
    json rows = json::array();
    for (long n : plan.n_list) {
        const CovFragment fr = mc_normalized_cov(plan, g, n);
        for (const auto& e : fr.estimates) {
            json row{{"n", n},
                     {"m", fr.m},
                     {"p", {e.pair.p.x, e.pair.p.y}},
                     {"pp", {e.pair.pp.x, e.pair.pp.y}},
                     {"mc_mean", e.mean},
                     {"mc_se", e.se},
                     {"clipped_mass", fr.synthesis.clipped_mass}};
            double pv = NAN, pe = NAN, z = NAN, lv = NAN, le = NAN;
            if (r.flag("mc.prelimit")) {
                PrelimitQuery q{m, n, g, e.pair.p, e.pair.pp, PrelimitMethod::FFTLagSum};
                const PrelimitResult res = normalized_prelimit(q, r.quad());
                pv = res.value.value;
                pe = res.value.err_estimate;
                z = (e.mean - pv) / e.se;
                row["prelimit"] = integral_json(res.value);
                row["z_prelimit"] = jnum(z);
            }
            if (spec) {
                const IntegralResult L = limit_cov(*spec, e.pair.p, e.pair.pp, r.quad());
                lv = L.value;
                le = L.err_estimate;
                row["limit"] = integral_json(L);
            }
            csv += std::to_string(n) + "," + std::to_string(fr.m) + "," + csv_num(e.pair.p.x) + "," +
                   csv_num(e.pair.p.y) + "," + csv_num(e.pair.pp.x) + "," + csv_num(e.pair.pp.y) + "," +
                   csv_num(e.mean) + "," + csv_num(e.se) + "," + csv_num(pv) + "," + csv_num(pe) + "," + csv_num(z) +
                   "," + csv_num(lv) + "," + csv_num(le) + "\n";
            rows.push_back(row);
        }
    }
    json j{{"model", model_json(m)}, {"gamma", g.value}, {"replicates", plan.replicates}, {"seed", plan.seed}, {"rows", rows}};
    r.result = j;
    if (r.want("csv")) r.emit("mc_scaling.csv", csv);
    if (r.want("json")) r.emit("mc_scaling.json", j.dump(2) + "\n");
}

void cmd_exponent(Run& r)
{
    const ValidatedModel m = r.model();
    const ExperimentPlan plan = make_plan(r, m);
    const Number g = r.num("gamma");
    const ExponentReport rep = estimate_exponent(plan, g);
    std::string csv = "n,m,variance,se,aggregated,clipped_mass\n";
    json pts = json::array();
    for (const auto& p : rep.points) {
        csv += std::to_string(p.n) + "," + std::to_string(p.m) + "," + csv_num(p.variance) + "," + csv_num(p.se) + "," +
               (p.aggregated ? "true" : "false") + "," + csv_num(p.synthesis.clipped_mass) + "\n";
        pts.push_back({{"n", p.n},
                       {"m", p.m},
                       {"variance", p.variance},
                       {"se", p.se},
                       {"aggregated", p.aggregated},
                       {"clipped_mass", p.synthesis.clipped_mass}});
    }
    json j{{"model", model_json(m)},
           {"gamma", g.value},
           {"replicates", plan.replicates},
           {"seed", plan.seed},
           {"points", pts},
           {"regression", {{"slope", rep.slope}, {"intercept", rep.intercept}, {"r2", rep.r2}, {"slope_se", rep.slope_se}}},
           {"H_hat", rep.H_hat},
           {"H_se", rep.H_se},
           {"H_target", rep.H_target}};
    r.result = j;
    if (r.want("csv")) r.emit("exponent.csv", csv);
    if (r.want("json")) r.emit("exponent.json", j.dump(2) + "\n");
}

void cmd_transition_scan(Run& r)
{
    const ValidatedModel m = r.model();
    ExperimentPlan plan = make_plan(r, m);
    plan.n_list = {r.integer("n")};
    plan.gammas = parse_numbers(r.get("gamma_grid"));
    if (plan.gammas.empty()) throw Error(ErrorKind::ConfigError, "gamma_grid is required");
    const ScanReport rep = transition_scan(plan, r.flag("scan.limits"), r.quad());
    std::string csv = "gamma,n,m,limit_kind,profile,rho,se,limit_rho\n";
    json rows = json::array();
    for (const auto& row : rep.rows) {
        json prof = json::array();
        for (const auto& p : row.profile) {
            csv += csv_num(row.gamma) + "," + std::to_string(row.n) + "," + std::to_string(row.m) + "," +
                   row.limit_kind + "," + p.name + "," + csv_num(p.rho) + "," + csv_num(p.se) + "," +
                   csv_num(p.limit.value_or(NAN)) + "\n";
            prof.push_back({{"name", p.name}, {"rho", p.rho}, {"se", p.se}, {"limit_rho", jnum(p.limit.value_or(NAN))}});
        }
        rows.push_back({{"gamma", row.gamma}, {"n", row.n}, {"m", row.m}, {"limit_kind", row.limit_kind}, {"profile", prof}});
    }
    json shifts = json::array();
    for (const auto& s : rep.shifts)
        shifts.push_back({{"profile", s.profile},
                          {"gamma_interval", {s.gamma_lo, s.gamma_hi}},
                          {"delta", s.delta},
                          {"pooled_se", s.pooled_se}});
    json j{{"model", model_json(m)}, {"replicates", plan.replicates}, {"seed", plan.seed}, {"rows", rows}, {"level_shifts", shifts}};
    if (rep.gamma0) j["gamma0"] = *rep.gamma0;
    r.result = j;
    if (r.want("csv")) r.emit("transition_scan.csv", csv);
    if (r.want("json")) r.emit("transition_scan.json", j.dump(2) + "\n");
}

json line_json(const Line& l) { return {{"a", l.a}, {"b", l.b}}; }

void cmd_classify(Run& r)
{
    const ValidatedModel m = r.model();
    std::vector<Number> grid = parse_numbers(r.get("gamma_grid"));
    if (grid.empty()) {
        const double g0 = critical_gamma(m).value_or(1.0);
        grid = {Number(g0 / 2), Number(g0), Number(2 * g0)};
    }
    const double tol = r.num("tol").value;
    const FieldReport rep = classify_field(m, grid, static_cast<int>(r.integer("probes")), tol, r.quad());
    std::string csv = "gamma,kind,direction_a,direction_b,verdict,max_cross,max_shift,tol\n";
    json per = json::array();
    for (const auto& gv : rep.per_gamma) {
        json dirs = json::array();
        for (const auto& v : gv.verdicts) {
            csv += csv_num(gv.gamma) + "," + to_string(gv.kind) + "," + csv_num(v.direction.a) + "," +
                   csv_num(v.direction.b) + "," + to_string(v.verdict) + "," + csv_num(v.evidence.max_cross) + "," +
                   csv_num(v.evidence.max_shift) + "," + csv_num(v.tol) + "\n";
            dirs.push_back({{"direction", line_json(v.direction)},
                            {"verdict", to_string(v.verdict)},
                            {"max_cross", v.evidence.max_cross},
                            {"max_shift", v.evidence.max_shift},
                            {"cross", v.evidence.cross},
                            {"shift", v.evidence.shift},
                            {"degenerated_density", degeneracy_check(make_limit_field(m, gv.gamma).h, v.direction)}});
        }
        per.push_back({{"gamma", gv.gamma}, {"kind", to_string(gv.kind)}, {"directions", dirs}});
    }
    json tested = json::array();
    for (const auto& l : rep.directions) tested.push_back(line_json(l));
    json j{{"model", model_json(m)},
           {"tol", tol},
           {"directions_tested", tested},
           {"per_gamma", per},
           {"transition", rep.transition},
           {"type_i_pattern", rep.type_i_pattern},
           {"isotropic", rep.isotropic},
           {"summary", rep.summary}};
    if (rep.gamma0) j["gamma0"] = *rep.gamma0;
    r.result = j;
    if (r.want("csv")) r.emit("classify.csv", csv);
    if (r.want("json")) r.emit("classify.json", j.dump(2) + "\n");
}

void dispatch(Run& r)
{
    const std::string& s = r.sub;
    if (s == "validate") cmd_validate(r);
    else if (s == "spectrum") cmd_spectrum(r);
    else if (s == "limit-cov") cmd_limit_cov(r);
    else if (s == "prelimit-cov") cmd_prelimit_cov(r);
    else if (s == "converge") cmd_converge(r);
    else if (s == "simulate") cmd_simulate(r);
    else if (s == "mc-scaling") cmd_mc_scaling(r);
    else if (s == "exponent") cmd_exponent(r);
    else if (s == "transition-scan") cmd_transition_scan(r);
    else if (s == "classify") cmd_classify(r);
}

std::string timestamp()
{
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Scaling transitions of anisotropic long-range dependent random fields"};
    app.set_version_flag("--version", std::string("lrdfield ") + LRDFIELD_VERSION);
    app.require_subcommand(1);
    bool json_errors = false;
    std::string config_path;
    std::vector<std::string> assignments;
    for (const auto& name : subcommands) {
        CLI::App* sc = app.add_subcommand(name);
        sc->add_option("--config", config_path, "flat key = value config file");
        sc->add_flag("--json", json_errors, "print errors as a JSON object");
        sc->add_option("assignments", assignments, "key=value overrides");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    Run run;
    run.sub = app.get_subcommands().front()->get_name();
    auto fail = [&](int code, const std::string& kind, const std::string& msg) {
        std::cerr << "lrdfield " << run.sub << ": " << kind << ": " << msg << "\n";
        if (json_errors)
            std::cout << json{{"error", {{"kind", kind}, {"message", msg}, {"exit_code", code}}}}.dump() << "\n";
        return code;
    };
    try {
        const auto defaults = defaults_for(run.sub);
        KeyValueConfig cfg;
        for (const auto& [k, v] : defaults) cfg.set(k, v);
        if (!config_path.empty()) cfg.merge(KeyValueConfig::parse(read_file(config_path)));
        for (const auto& a : assignments) {
            const auto eq = a.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "expected key=value, got '" + a + "'");
            cfg.set(detail::trim(a.substr(0, eq)), detail::trim(a.substr(eq + 1)));
        }
        std::set<std::string> allowed;
        for (const auto& [k, v] : defaults) allowed.insert(k);
        if (needs_model(run.sub) || cfg.get("field") == "stationary")
            for (const auto& k : model_keys("model.")) allowed.insert(k);
        cfg.require_known(allowed);
        run.cfg = cfg;
        run.out_dir = cfg.get("output.dir");
        for (const auto& f : split(cfg.get("output.formats"), ','))
            if (!f.empty()) run.formats.insert(f);
        for (const auto& f : run.formats)
            if (f != "json" && f != "csv" && f != "pgm" && f != "bin")
                throw Error(ErrorKind::ConfigError, "unknown output format '" + f + "'");
        std::error_code ec;
        fs::create_directories(run.out_dir, ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create " + run.out_dir.string() + ": " + ec.message());

        const auto t0 = std::chrono::steady_clock::now();
        dispatch(run);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        json resolved;
        for (const auto& k : cfg.keys()) resolved[k] = cfg.get(k);
        write_file(run.out_dir / "resolved.cfg", cfg.to_string());
        json manifest{{"tool", "lrdfield"},
                      {"version", LRDFIELD_VERSION},
                      {"subcommand", run.sub},
                      {"config", resolved},
                      {"config_file", "resolved.cfg"},
                      {"outputs", run.outputs},
                      {"run", {{"timestamp", timestamp()}, {"seconds", secs}}}};
        write_file(run.out_dir / "manifest.json", manifest.dump(2) + "\n");
        std::cout << run.result.dump(2) << "\n";
        return 0;
    } catch (const ConstraintViolation& e) {
        return fail(2, "ConstraintViolation", e.what());
    } catch (const Error& e) {
        return fail(exit_code(e.kind()), to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return fail(3, "InternalError", e.what());
    }
}
