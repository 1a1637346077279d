#include <catch_amalgamated.hpp>

#include <cmath>

#include "lrdfield/increment_analysis.hpp"

using namespace lrdfield;
using Catch::Approx;

namespace {

double fbm_inc(double H, double a, double b, double c, double d)
{
    auto p = [H](double x) { return std::pow(std::abs(x), 2 * H); };
    return 0.5 * (p(b - c) + p(a - d) - p(a - c) - p(b - d));
}

double overlap(double lo, double hi, double lo2, double hi2) { return std::max(0.0, std::min(hi, hi2) - std::max(lo, lo2)); }

// 2 pi |rho|^{-p} c_p int |t|^{p-1} Xi(t) dt, with s = |t|^p removing the endpoint singularity before Simpson.
double linear_form_oracle(double a, double b, double p, const Rect& K, const Rect& L)
{
    const double rho = std::hypot(a, b), n1 = a / rho, n2 = b / rho;
    auto xi = [&](double t) {
        return overlap(K.x0, K.x1, L.x0 + t * n1, L.x1 + t * n1) * overlap(K.y0, K.y1, L.y0 + t * n2, L.y1 + t * n2);
    };
    const double T = 20.0;
    const int n = 400000;
    double total = 0.0;
    for (double sgn : {-1.0, 1.0}) {
        const double S = std::pow(T, p), h = S / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = i * h;
            const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            acc += w * xi(sgn * std::pow(s, 1 / p));
        }
        total += acc * h / 3 / p;
    }
    const double cp = 2 * std::tgamma(1 - p) * std::sin(0.5 * pi * p);
    return 2 * pi * std::pow(rho, -p) * cp * total;
}

Verdict verdict_of(const LimitFieldSpec& s, const Line& l, double tol = 1e-3)
{
    return classify_direction(s, make_probes(l), tol).verdict;
}

}  // namespace

TEST_CASE("zero-area rectangles have zero covariance")
{
    const auto s = fbs_field(0.6, 0.7);
    CHECK(rect_increment_cov(s, Rect::make(1, 1, 1, 2), Rect::make(0, 0, 1, 1)).value == 0.0);
    CHECK(rect_increment_cov(s, Rect::make(0, 0, 1, 1), Rect::make(0.5, 2, 3, 2)).value == 0.0);
}

TEST_CASE("sheet corner expansion equals the product of fBm increments")
{
    const auto s = fbs_field(0.3, 0.85);
    ProbeBox box;
    for (std::uint64_t i = 1; i <= 20; ++i) {
        const auto x = halton(i, 8);
        const Rect K = detail::probe_rect(box, x[0], x[1], x[2], x[3]), L = detail::probe_rect(box, x[4], x[5], x[6], x[7]);
        const double want = fbm_inc(0.3, K.x0, K.x1, L.x0, L.x1) * fbm_inc(0.85, K.y0, K.y1, L.y0, L.y1);
        CHECK(rect_increment_cov(s, K, L).value == Approx(want).epsilon(1e-10).margin(1e-14));
    }
}

TEST_CASE("halton points")
{
    CHECK(radical_inverse(1, 2) == 0.5);
    CHECK(radical_inverse(3, 2) == 0.75);
    CHECK(radical_inverse(5, 3) == Approx(7.0 / 9));
    CHECK_THROWS_AS(halton(1, 13), Error);
}

TEST_CASE("probe sets respect the box and the separation")
{
    for (const Line& l : {Line::horizontal(), Line::vertical(), Line::make(1, -1), Line::make(1, 2)}) {
        const ProbeBox box;
        const auto ps = make_probes(l, 20, box);
        REQUIRE(ps.separated.size() == 20);
        REQUIRE(ps.shifts.size() == 20);
        const Point e = l.direction();
        for (const auto& pr : ps.separated) {
            CHECK(detail::inside(box, pr.K));
            CHECK(detail::inside(box, pr.L));
            const auto [k0, k1] = detail::projection(pr.K, e);
            const auto [l0, l1] = detail::projection(pr.L, e);
            CHECK((k1 + box.margin <= l0 + 1e-12 || l1 + box.margin <= k0 + 1e-12));
        }
        for (const auto& sh : ps.shifts) {
            CHECK(sh.t != 0.0);
            CHECK(detail::inside(box, sh.K.shifted(sh.t * e.x, sh.t * e.y)));
        }
    }
}

TEST_CASE("linear form covariance matches a direct projection integral")
{
    // Includes a pair whose break points coincide up to rounding.
    const auto s = make_limit_field(validate(SpectralModel::linear_singular(1, 1, 0.2)), 1.0);
    const std::vector<std::pair<Rect, Rect>> pairs = {
        {Rect::make(1.5, 0.6, 2.2, 0.9), Rect::make(2.3, 1.7, 2.8, 2.0)},
        {Rect::make(1.5, 0.6, 2.2, 0.9), Rect::make(1.5, 0.6, 2.2, 0.9)},
        {Rect::make(2.1, 2.4, 2.4, 2.7), Rect::make(0.6, 1.2, 0.9, 2.5)},
        {Rect::make(0, 0, 1, 1), Rect::make(0, 0, 2, 0.5)},
    };
    for (const auto& [K, L] : pairs)
        CHECK(rect_increment_cov(s, K, L).value == Approx(linear_form_oracle(1, 1, 0.4, K, L)).epsilon(1e-6));
}

TEST_CASE("increment correlations obey Cauchy-Schwarz")
{
    const auto s = make_limit_field(validate(SpectralModel::linear_singular(1, 1, 0.2)), 1.0);
    for (const Line& l : {Line::make(1, -1), Line::horizontal()}) {
        const auto ev = direction_evidence(s, make_probes(l));
        for (double c : ev.cross) CHECK(c <= 1 + 1e-9);
    }
}

TEST_CASE("well-balanced field correlates horizontally separated squares")
{
    const auto s = make_limit_field(validate(SpectralModel::type_i(0.8, 0.8, 1)), 1.0);
    REQUIRE(s.kind == LimitKind::WellBalanced);
    const double c = rect_increment_cov(s, Rect::make(0, 0, 1, 1), Rect::make(2, 0, 3, 1)).value;
    CHECK(std::abs(c) > 1e-4);
}

TEST_CASE("Brownian coordinate of non-degenerate branches is Independent")
{
    const auto m = validate(SpectralModel::type_i(0.6, 0.8, 1));
    const auto plus = make_limit_field(m, 1.5), minus = make_limit_field(m, 0.375);
    REQUIRE(plus.kind == LimitKind::Plus);
    REQUIRE(minus.kind == LimitKind::Minus);
    // Plus is Brownian in y (pairs separated vertically), Minus in x.
    CHECK(verdict_of(plus, Line::vertical()) == Verdict::Independent);
    CHECK(verdict_of(plus, Line::horizontal()) == Verdict::Dependent);
    CHECK(verdict_of(minus, Line::horizontal()) == Verdict::Independent);
    CHECK(verdict_of(minus, Line::vertical()) == Verdict::Dependent);
}

TEST_CASE("deterministic coordinate of degenerate branches is Invariant")
{
    const auto m = validate(SpectralModel::type_i(1.5, 2.0, 1));
    const auto plus = make_limit_field(m, 1.0), minus = make_limit_field(m, 0.5);
    REQUIRE(plus.degenerate);
    REQUIRE(minus.degenerate);
    CHECK(verdict_of(plus, Line::horizontal()) == Verdict::Invariant);
    CHECK(verdict_of(plus, Line::vertical()) == Verdict::Dependent);
    CHECK(verdict_of(minus, Line::vertical()) == Verdict::Invariant);
    CHECK(verdict_of(minus, Line::horizontal()) == Verdict::Dependent);
}

TEST_CASE("verdicts are stable when the tolerance doubles")
{
    const auto m = validate(SpectralModel::type_i(0.6, 0.8, 1));
    for (const auto& s : {make_limit_field(m, 1.5), make_limit_field(validate(SpectralModel::type_i(1.5, 2.0)), 1.0)})
        for (const Line& l : {Line::horizontal(), Line::vertical()}) {
            const auto ev = direction_evidence(s, make_probes(l));
            CHECK(decide(ev, 1e-3).verdict == decide(ev, 2e-3).verdict);
        }
}

TEST_CASE("decide thresholds")
{
    DirectionEvidence ev;
    ev.max_cross = 5e-4;
    ev.max_shift = 1.0;
    CHECK(decide(ev, 1e-3).verdict == Verdict::Independent);
    ev.max_cross = 0.5;
    ev.max_shift = 1e-5;
    CHECK(decide(ev, 1e-3).verdict == Verdict::Invariant);
    ev.max_shift = 0.5;
    CHECK(decide(ev, 1e-3).verdict == Verdict::Dependent);
    CHECK_THROWS_AS(decide(ev, 0.0), Error);
}

TEST_CASE("degeneracy check on reference kernels")
{
    CHECK(degeneracy_check(SpectralKernel::power(1, 0.6, 0), Line::vertical()));
    CHECK_FALSE(degeneracy_check(SpectralKernel::power(1, 0.6, 0), Line::horizontal()));
    CHECK_FALSE(degeneracy_check(SpectralKernel::radial(0.6, 0.8, 1), Line::vertical()));
    CHECK_FALSE(degeneracy_check(SpectralKernel::radial(0.6, 0.8, 1), Line::horizontal()));
    CHECK(degeneracy_check(SpectralKernel::linear(1, 1, 0.4), Line::make(1, 1)));
    CHECK_FALSE(degeneracy_check(SpectralKernel::linear(1, 1, 0.4), Line::make(1, -1)));
}

TEST_CASE("degeneracy check agrees with the Independent verdict")
{
    const auto ls = make_limit_field(validate(SpectralModel::linear_singular(1, 1, 0.2)), 1.0);
    const auto sheet = fbs_field(0.5, 0.7);
    for (const auto* s : {&ls, &sheet})
        for (const Line& l : {Line::horizontal(), Line::vertical(), Line::make(1, 1), Line::make(1, -1)})
            CHECK(degeneracy_check(s->h, l) == (verdict_of(*s, l) == Verdict::Independent));
}

TEST_CASE("direction grid includes the model line")
{
    const auto g = direction_grid(validate(SpectralModel::linear_singular(1, -2, 0.3)));
    const Line want = Line::make(1, -2);
    bool found = false;
    for (const Line& l : g) found = found || (std::abs(l.a - want.a) < 1e-12 && std::abs(l.b - want.b) < 1e-12);
    CHECK(found);
    CHECK(direction_grid(validate(SpectralModel::type_ii(0.2, 0.4))).size() == 4);
}

TEST_CASE("field classification patterns")
{
    const std::vector<Number> grid = {0.5, 1.0, 2.0};
    const auto t2 = classify_field(validate(SpectralModel::type_ii(0.2, 0.4)), grid);
    CHECK_FALSE(t2.transition);
    CHECK_FALSE(t2.type_i_pattern);
    for (const auto& g : t2.per_gamma) CHECK(g.all_dependent);

    const auto ls = classify_field(validate(SpectralModel::linear_singular(1, 1, 0.2)), grid);
    CHECK(ls.transition);
    CHECK_FALSE(ls.type_i_pattern);

    CHECK_THROWS_AS(classify_field(validate(SpectralModel::type_ii(0.2, 0.4)), {1.0}), Error);
}

TEST_CASE("isotropic TypeI field shows the Type I pattern")
{
    const auto r = classify_field(validate(SpectralModel::type_i(0.8, 0.8, 1)), {0.5, 1.0, 2.0});
    CHECK(r.transition);
    CHECK(r.type_i_pattern);
    CHECK(r.isotropic);
    REQUIRE(r.gamma0.has_value());
    CHECK(*r.gamma0 == Approx(1.0));
}
