#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lrdfield/spectral_models.hpp"

using namespace lrdfield;
using Catch::Approx;

namespace {

ErrorKind kind_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::ConfigError;
}

}  // namespace

TEST_CASE("validate accepts and rejects TypeI parameter sets")
{
    CHECK_NOTHROW(validate(SpectralModel::type_i(0.5, 1.5, 1.0)));
    CHECK(kind_of([] { validate(SpectralModel::type_i(2, 2, 1)); }) == ErrorKind::ConstraintViolation);
    try {
        validate(SpectralModel::type_i(2, 2, 1));
    } catch (const ConstraintViolation& e) {
        CHECK(e.name == "H1*H2");
        CHECK(std::string(e.what()).find("H1") != std::string::npos);
    }
    CHECK(kind_of([] { validate(SpectralModel::type_i(0.9, 0.8, 1)); }) == ErrorKind::ConstraintViolation);
    CHECK(kind_of([] { validate(SpectralModel::type_i(0.5, 0.8, 0)); }) == ErrorKind::ConstraintViolation);
    CHECK(kind_of([] { validate(SpectralModel::type_i(-0.1, 0.8, 1)); }) == ErrorKind::ConstraintViolation);
}

TEST_CASE("validate checks TypeII, LinearSingular and WhiteNoise ranges")
{
    CHECK(kind_of([] { validate(SpectralModel::type_ii(0.6, 0.2)); }) == ErrorKind::ConstraintViolation);
    CHECK(kind_of([] { validate(SpectralModel::type_ii(0.2, 0.0)); }) == ErrorKind::ConstraintViolation);
    CHECK_NOTHROW(validate(SpectralModel::type_ii(0.2, 0.4)));
    CHECK(kind_of([] { validate(SpectralModel::linear_singular(0, 1, 0.2)); }) == ErrorKind::ConstraintViolation);
    CHECK(kind_of([] { validate(SpectralModel::linear_singular(1, 1, 0.5)); }) == ErrorKind::ConstraintViolation);
    CHECK_NOTHROW(validate(SpectralModel::linear_singular(1, -2, 0.3)));
    CHECK(kind_of([] { validate(SpectralModel::white_noise(0)); }) == ErrorKind::ConstraintViolation);
}

TEST_CASE("density values at reference points")
{
    const auto m1 = validate(SpectralModel::type_i(0.5, 1, 1));
    CHECK(eval_density(m1, 1, 0) == Approx(1.0).epsilon(1e-15));
    CHECK(eval_density(m1, 1, 1) == Approx(std::pow(2.0, -0.25)).epsilon(1e-15));
    const auto m2 = validate(SpectralModel::type_ii(0.2, 0.4));
    CHECK(eval_density(m2, 1, 1) == Approx(1.0).epsilon(1e-15));
    CHECK(eval_density(m2, 0.5, 2) == Approx(std::pow(0.5, -0.4) * std::pow(2.0, -0.8)).epsilon(1e-14));
    const auto m3 = validate(SpectralModel::linear_singular(1, -2, 0.3));
    CHECK(eval_density(m3, 1, 1) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("density errors on singular set and outside the torus")
{
    const auto m1 = validate(SpectralModel::type_i(0.5, 1, 1));
    CHECK(kind_of([&] { eval_density(m1, 0, 0); }) == ErrorKind::SingularPoint);
    CHECK(kind_of([&] { eval_density(m1, 4, 0); }) == ErrorKind::OutOfDomain);
    const auto m2 = validate(SpectralModel::type_ii(0.2, 0.4));
    CHECK(kind_of([&] { eval_density(m2, 0, 1); }) == ErrorKind::SingularPoint);
    CHECK(kind_of([&] { eval_density(m2, 1, 0); }) == ErrorKind::SingularPoint);
    const auto m3 = validate(SpectralModel::linear_singular(1, 1, 0.2));
    CHECK(kind_of([&] { eval_density(m3, 0.5, -0.5); }) == ErrorKind::SingularPoint);
}

TEST_CASE("modulating factor is bounded, nonnegative and one at the origin")
{
    for (auto variant : {ModulatingFactor::Variant::ConstantOne, ModulatingFactor::Variant::RaisedCosineTaper}) {
        ModulatingFactor g;
        g.variant = variant;
        g.width = 2.0;
        CHECK(g(0, 0) == 1.0);
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> U(-pi, pi);
        for (int i = 0; i < 500; ++i) {
            const double x = g(U(rng), U(rng));
            CHECK(x >= 0.0);
            CHECK(x <= ModulatingFactor::bound);
        }
    }
}

TEST_CASE("h reference values and scaling identity")
{
    for (auto [H1, H2, c] : {std::tuple{0.6, 0.8, 1.0}, std::tuple{1.5, 2.0, 4.0}, std::tuple{0.3, 0.9, 2.0}}) {
        const auto m = validate(SpectralModel::type_i(H1, H2, c));
        CHECK(eval_h(m, 1, 0) == Approx(1.0).epsilon(1e-15));
        for (double lam : {0.5, 2.0})
            for (auto [u, v] : {std::pair{0.3, 1.2}, std::pair{-2.0, 0.1}, std::pair{1.0, -1.0}})
                CHECK(lam * eval_h(m, std::pow(lam, 1 / H1) * u, std::pow(lam, 1 / H2) * v) ==
                      Approx(eval_h(m, u, v)).epsilon(1e-13));
    }
    const auto m = validate(SpectralModel::type_i(1, 1.5, 4));
    CHECK(eval_h(m, 0, 1) == Approx(0.5).epsilon(1e-15));
    CHECK(kind_of([&] { eval_h(m, 0, 0); }) == ErrorKind::SingularPoint);
}

TEST_CASE("scaling limit density reference values")
{
    const auto m1 = validate(SpectralModel::type_i(0.5, 1, 1));
    const auto L1 = scaling_limit_density(m1, 0.5);
    CHECK(L1.a_density == Approx(0.5));
    CHECK(L1.h(1, 1) == Approx(std::pow(2.0, -0.25)).epsilon(1e-15));
    const auto m2 = validate(SpectralModel::type_ii(0.2, 0.4));
    const auto L2 = scaling_limit_density(m2, 3);
    CHECK(L2.a_density == Approx(2.8).epsilon(1e-14));
    CHECK(L2.h(2, 1) == Approx(std::pow(2.0, -0.4)).epsilon(1e-15));
}

TEST_CASE("scaling limit density is the pointwise limit of the rescaled density")
{
    struct Case {
        SpectralModel m;
        double gamma;
    };
    const std::vector<Case> cases = {
        {SpectralModel::type_i(0.6, 0.8, 1), 0.75},
        {SpectralModel::type_i(0.6, 0.8, 2), 1.5},
        {SpectralModel::type_i(0.6, 0.8, 2), 0.3},
        {SpectralModel::type_ii(0.2, 0.4), 2.0},
        {SpectralModel::linear_singular(1, 2, 0.3), 1.0},
        {SpectralModel::linear_singular(1, 2, 0.3), 2.0},
        {SpectralModel::linear_singular(1, 2, 0.3), 0.5},
    };
    for (const auto& c : cases) {
        const auto m = validate(c.m);
        const auto L = scaling_limit_density(m, c.gamma);
        const double target = L.h(1, 1);
        double prev = INFINITY;
        for (int k = 2; k <= 6; ++k) {
            const double lam = std::pow(10.0, -k);
            const double val = std::pow(lam, L.a_density) * m.density(lam, std::pow(lam, c.gamma));
            const double err = std::abs(val - target);
            CHECK(err <= prev + 1e-13 * target);
            prev = err;
        }
        CHECK(prev <= 1e-2 * target);
    }
}

TEST_CASE("critical gamma by family")
{
    CHECK(*critical_gamma(validate(SpectralModel::type_i(0.5, 1.5))) == Approx(1.0 / 3));
    CHECK_FALSE(critical_gamma(validate(SpectralModel::type_ii(0.2, 0.4))).has_value());
    CHECK(*critical_gamma(validate(SpectralModel::linear_singular(1, -2, 0.3))) == 1.0);
}

TEST_CASE("hurst exponent reference values")
{
    const auto m = validate(SpectralModel::type_i(0.5, 1.5));
    const auto sup = hurst_exponent(m, 1.0);
    CHECK(sup.regime == Regime::Supercritical);
    CHECK(sup.H == Approx(1.25).epsilon(1e-15));
    const auto crit = hurst_exponent(m, Number::rational(1, 3));
    CHECK(crit.regime == Regime::Critical);
    CHECK(crit.H == Approx(11.0 / 12).epsilon(1e-15));
    const auto t2 = hurst_exponent(validate(SpectralModel::type_ii(0.2, 0.4)), 2.0);
    CHECK(t2.regime == Regime::NoTransition);
    CHECK(t2.H == Approx(2.5).epsilon(1e-15));
    CHECK(hurst_exponent(validate(SpectralModel::white_noise(1)), 1.0).H == Approx(1.0));
}

TEST_CASE("exact rational comparison decides the critical point")
{
    const auto m = validate(SpectralModel::type_i(Number::rational(1, 2), Number::rational(3, 2)));
    CHECK(hurst_exponent(m, Number::rational(1, 3)).regime == Regime::Critical);
    CHECK(hurst_exponent(m, Number::rational(333333, 1000000)).regime == Regime::Subcritical);
    const auto dbl = validate(SpectralModel::type_i(0.5, 1.5));
    const auto r = hurst_exponent(dbl, 1.0 / 3);
    CHECK(r.regime == Regime::Critical);
    CHECK(r.tolerance_classified);
}

TEST_CASE("H is continuous across gamma0 for TypeI")
{
    for (auto [H1, H2] : {std::pair{0.6, 0.8}, std::pair{1.5, 2.0}, std::pair{0.4, 1.6}}) {
        const auto m = validate(SpectralModel::type_i(H1, H2));
        const double g0 = H1 / H2;
        const double Hc = hurst_exponent(m, g0).H;
        CHECK(hurst_exponent(m, g0 * (1 + 1e-9)).H == Approx(Hc).epsilon(1e-7));
        CHECK(hurst_exponent(m, g0 * (1 - 1e-9)).H == Approx(Hc).epsilon(1e-7));
    }
}

TEST_CASE("open cases at H1 = 1 or H2 = 1")
{
    const auto m = validate(SpectralModel::type_i(1, 1.5));
    CHECK(kind_of([&] { hurst_exponent(m, 2.0); }) == ErrorKind::OpenCase);
    CHECK_NOTHROW(hurst_exponent(m, 0.2));
    const auto m2 = validate(SpectralModel::type_i(0.5, 1));
    CHECK(kind_of([&] { hurst_exponent(m2, 0.1); }) == ErrorKind::OpenCase);
}

TEST_CASE("config round trip preserves the model")
{
    for (const auto& sm : {SpectralModel::type_i(0.6, 0.8, 2), SpectralModel::type_ii(0.2, 0.4),
                           SpectralModel::linear_singular(1, -2, 0.3), SpectralModel::white_noise(0.25)}) {
        const auto cfg = to_config(sm, "model.");
        const auto back = model_from_config(KeyValueConfig::parse(cfg.to_string()), "model.");
        CHECK(model_hash(back) == model_hash(sm));
        CHECK(to_config(back, "model.").to_string() == cfg.to_string());
    }
    CHECK(model_hash(SpectralModel::type_i(0.6, 0.8)) != model_hash(SpectralModel::type_i(0.6, 0.81)));
}
