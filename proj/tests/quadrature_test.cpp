#include <catch_amalgamated.hpp>

#include <cmath>

#include "lrdfield/limit_covariance.hpp"
#include "lrdfield/quadrature.hpp"

using namespace lrdfield;
using Catch::Approx;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

void check_contract(const IntegralResult& r, const QuadratureSpec& q)
{
    if (r.converged) CHECK(r.err_estimate <= std::max(q.abs_tol, q.rel_tol * std::abs(r.value)));
}

// (1 - cos u)-type integrand over the real line with its oscillation mean supplied.
IntegralResult fejer_1d(double d, const QuadratureSpec& q)
{
    Oscillation osc;
    osc.period = 2 * pi;
    osc.mean = [d](double u) { return 2 * std::pow(std::abs(u), -2 - 2 * d); };
    return integrate_1d(
        [d](double u) {
            const double s = std::sin(0.5 * u);
            return 4 * s * s * std::pow(std::abs(u), -2 - 2 * d);
        },
        d > 0, q, osc, true);
}

// Independent reference: int |1-e^{ix}|^2 |x|^{-2-2d} dx = 2 Gamma(1-2d) sin(pi d) / (d (1 + 2d)).
double kappa_reference(double d) { return 2 * std::tgamma(1 - 2 * d) * std::sin(pi * d) / (d * (1 + 2 * d)); }

}  // namespace

TEST_CASE("separable arctangent integral over the plane")
{
    QuadratureSpec q;
    q.rel_tol = 1e-10;
    Integrand2D in;
    in.f = [](double u, double v) { return 1 / ((1 + u * u) * (1 + v * v)); };
    in.even_u = in.even_v = true;
    const auto r = integrate_2d(in, SingularSet::none(), q);
    CHECK(rel(r.value, pi * pi) <= 1e-8);
    check_contract(r, q);
}

TEST_CASE("Fejer integrals in one and two dimensions")
{
    QuadratureSpec q;
    const auto r1 = fejer_1d(0.0, q);
    CHECK(rel(r1.value, 2 * pi) <= 1e-7);
    check_contract(r1, q);

    Integrand2D in;
    auto F = [](double x) {
        const double s = std::sin(0.5 * x);
        return x == 0.0 ? 1.0 : 4 * s * s / (x * x);
    };
    in.f = [F](double u, double v) { return F(u) * F(v); };
    in.mean_u = [F](double u, double v) { return 2 / (u * u) * F(v); };
    in.mean_v = [F](double u, double v) { return F(u) * 2 / (v * v); };
    in.mean_uv = [](double u, double v) { return 4 / (u * u * v * v); };
    in.period_u = in.period_v = 2 * pi;
    in.even_u = in.even_v = true;
    const auto r2 = integrate_2d(in, SingularSet::none(), q);
    CHECK(rel(r2.value, 4 * pi * pi) <= 1e-6);
}

TEST_CASE("kappa^2 integral matches its gamma-function evaluation")
{
    QuadratureSpec q;
    q.rel_tol = 1e-9;
    for (double d : {0.1, 0.25, 0.4}) {
        const auto r = fejer_1d(d, q);
        CHECK(rel(r.value, kappa_reference(d)) <= 1e-6);
        CHECK(rel(r.value, kappa_sq(d)) <= 1e-6);
    }
}

TEST_CASE("kappa^2 printed closed form differs from the integral")
{
    // pi / (2 (d+1/2)^2 Gamma(d) cos(pi d)) at d = 0.25 is 1.0892, the integral is 6.6843.
    const auto r = fejer_1d(0.25, QuadratureSpec{});
    CHECK(r.value == Approx(6.6843).epsilon(1e-4));
    CHECK(kappa_sq_printed(0.25) == Approx(1.0892).epsilon(1e-4));
    CHECK(rel(r.value, kappa_sq_printed(0.25)) > 1.0);
}

TEST_CASE("beta-type integral equals rho1^2 at H1 = 3")
{
    const auto r = integrate_1d([](double u) { return std::pow(u * u + 1, -1.5); }, false, QuadratureSpec{}, {}, true);
    CHECK(rel(r.value, 2.0) <= 1e-8);
    CHECK(rho1_sq(3) == Approx(2.0).epsilon(1e-14));
}

TEST_CASE("interval with an endpoint singularity")
{
    QuadratureSpec q;
    const auto r = integrate_interval([](double x) { return std::pow(std::abs(x), -0.5); }, 0.0, 1.0, 0.0, q);
    CHECK(rel(r.value, 2.0) <= 1e-7);
    const auto r2 =
        integrate_interval([](double x) { return std::pow(std::abs(x - 0.3), -0.7); }, -1.0, 1.0, 0.3, q);
    CHECK(rel(r2.value, (std::pow(1.3, 0.3) + std::pow(0.7, 0.3)) / 0.3) <= 1e-7);
}

TEST_CASE("line singularity is rotated onto an axis")
{
    Integrand2D in;
    in.f = [](double u, double v) { return std::pow(std::abs(u + v), -0.4) * std::exp(-(u * u + v * v)); };
    const auto r = integrate_2d(in, SingularSet::line(1, 1), QuadratureSpec{});
    const double expected = std::pow(2.0, -0.2) * std::tgamma(0.3) * std::sqrt(pi);
    CHECK(rel(r.value, expected) <= 1e-6);
}

TEST_CASE("origin singularity with the anisotropic radial kernel is stable across ring bases")
{
    const auto k = SpectralKernel::radial(0.6, 0.8, 1.0);
    Integrand2D in;
    in.f = [k](double u, double v) { return k(u, v) / ((1 + u * u) * (1 + v * v)); };
    in.even_u = in.even_v = true;
    QuadratureSpec a, b;
    a.ring_base = 2.0;
    b.ring_base = 3.0;
    a.rel_tol = b.rel_tol = 1e-8;
    const auto ra = integrate_2d(in, SingularSet::origin(), a);
    const auto rb = integrate_2d(in, SingularSet::origin(), b);
    CHECK(std::isfinite(ra.value));
    CHECK(ra.value > 0);
    CHECK(rel(ra.value, rb.value) <= 1e-5);
}

TEST_CASE("axis singularities")
{
    Integrand2D in;
    in.f = [](double u, double v) { return std::pow(std::abs(v), -0.5) * std::exp(-u * u - v * v); };
    in.even_u = in.even_v = true;
    const auto r = integrate_2d(in, SingularSet::u_axis(), QuadratureSpec{});
    CHECK(rel(r.value, std::sqrt(pi) * std::tgamma(0.25)) <= 1e-6);
}

TEST_CASE("specification errors")
{
    QuadratureSpec q;
    q.rel_tol = 1e-13;
    CHECK_THROWS_AS(q.check(), Error);
    QuadratureSpec q2;
    q2.ring_base = 1.0;
    CHECK_THROWS_AS(q2.check(), Error);
    Integrand2D in;
    in.f = [](double, double) { return 1.0; };
    try {
        integrate_2d(in, SingularSet::line(0, 0), QuadratureSpec{});
        FAIL("expected InvalidSingularSet");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidSingularSet);
    }
}

TEST_CASE("panel budget exhaustion reports non-convergence")
{
    QuadratureSpec q;
    q.max_panels = 3;
    q.rel_tol = 1e-12;
    const auto r = integrate_interval([](double x) { return std::sin(40 * x) * std::sin(40 * x); }, 0.0, 10.0,
                                      std::nullopt, q);
    CHECK_FALSE(r.converged);
    CHECK(std::isfinite(r.value));
}

TEST_CASE("tail bound formula")
{
    // int_{|x|>R} C |x|^{-p} dx = 2 C R^{1-p} / (p - 1)
    CHECK(power_law_tail_bound(1, 2.0, 3.0, 4.0) == Approx(2 * 2.0 * std::pow(4.0, -2.0) / 2.0));
}
