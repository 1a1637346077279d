#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lrdfield/field_synthesis.hpp"
#include "lrdfield/limit_covariance.hpp"

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

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("lrdfield_fs_" + name)).string();
}

}  // namespace

TEST_CASE("splitmix64 and seed derivation")
{
    // Reference outputs of the splitmix64 finalizer applied to x + golden gamma.
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
    CHECK(derive_seed(5, 3, 0) == derive_seed(5, 3));
    const auto a = cell_normals(9, 4), b = cell_normals(9, 4);
    CHECK(a == b);
    CHECK(cell_normals(9, 5) != a);
}

TEST_CASE("standard normals from the counter generator")
{
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const auto [z1, z2] = cell_normals(17, static_cast<std::uint64_t>(i));
        for (double z : {z1, z2}) {
            s += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
    }
    const double N = 2.0 * n;
    CHECK(std::abs(s / N) <= 4 / std::sqrt(N));
    CHECK(std::abs(s2 / N - 1) <= 4 * std::sqrt(2 / N));
    CHECK(std::abs(s4 / N - 3) <= 4 * std::sqrt(96 / N));
}

TEST_CASE("white noise autocovariance is a unit spike")
{
    const auto m = validate(SpectralModel::white_noise(1 / (4 * pi * pi)));
    const auto g = autocovariance_grid(m, 6, 6);
    for (long a = -6; a <= 6; ++a)
        for (long b = -6; b <= 6; ++b) CHECK(g(a, b) == Approx(a == 0 && b == 0 ? 1.0 : 0.0).margin(1e-9));
}

TEST_CASE("TypeII autocovariance factorizes")
{
    const auto g = autocovariance_grid(validate(SpectralModel::type_ii(0.2, 0.4)), 12, 12);
    for (long a : {1L, 3L, 12L})
        for (long b : {-2L, 5L, 11L}) CHECK(g(a, b) * g(0, 0) == Approx(g(a, 0) * g(0, b)).epsilon(1e-10));
}

TEST_CASE("TypeI autocovariance decays at the anisotropic rate")
{
    // Rescaling h gives r(t,0) ~ t^{H1 - 1 - H1/H2} and r(0,t) ~ t^{H2 - 1 - H2/H1}.
    const double H1 = 0.6, H2 = 0.8;
    const auto g = autocovariance_grid(validate(SpectralModel::type_i(H1, H2, 1)), 128, 128);
    const double th = std::pow(2.0, H1 - 1 - H1 / H2), tv = std::pow(2.0, H2 - 1 - H2 / H1);
    double prev_h = INFINITY, prev_v = INFINITY;
    for (long t : {8L, 16L, 32L, 64L}) {
        const double dh = std::abs(g(2 * t, 0) / g(t, 0) - th), dv = std::abs(g(0, 2 * t) / g(0, t) - tv);
        CHECK(dh < prev_h);
        CHECK(dv < prev_v);
        prev_h = dh;
        prev_v = dv;
    }
    CHECK(prev_h <= 0.01 * th);
    CHECK(prev_v <= 0.01 * tv);
}

TEST_CASE("autocovariance is even and bounded by r(0)")
{
    for (const auto& sm : {SpectralModel::type_i(0.6, 0.8, 2), SpectralModel::linear_singular(1, -2, 0.3)}) {
        const auto g = autocovariance_grid(validate(sm), 16, 16);
        for (long a = -16; a <= 16; ++a)
            for (long b = -16; b <= 16; ++b) {
                CHECK(g(a, b) == Approx(g(-a, -b)).epsilon(1e-9).margin(1e-12));
                CHECK(std::abs(g(a, b)) <= g(0, 0) * (1 + 1e-9));
            }
    }
}

TEST_CASE("white noise sample has uncorrelated unit-variance cells")
{
    const auto m = validate(SpectralModel::white_noise(1 / (4 * pi * pi)));
    const long N = 320;
    const auto s = simulate_stationary(m, N, N, 3);
    CHECK(s.report.clipped_mass <= 1e-12);
    double v = 0, c1 = 0, c2 = 0;
    for (long i = 0; i + 1 < N; ++i)
        for (long j = 0; j + 1 < N; ++j) {
            const double x = s.values[static_cast<std::size_t>(i * N + j)];
            v += x * x;
            c1 += x * s.values[static_cast<std::size_t>((i + 1) * N + j)];
            c2 += x * s.values[static_cast<std::size_t>(i * N + j + 1)];
        }
    const double cnt = static_cast<double>((N - 1) * (N - 1));
    CHECK(std::abs(v / cnt - 1) <= 3 * std::sqrt(2 / cnt));
    CHECK(std::abs(c1 / cnt) <= 3 / std::sqrt(cnt));
    CHECK(std::abs(c2 / cnt) <= 3 / std::sqrt(cnt));
}

TEST_CASE("samples are deterministic in the seed")
{
    const auto m = validate(SpectralModel::type_i(0.6, 0.8, 1));
    const auto a = simulate_stationary(m, 24, 16, 42), b = simulate_stationary(m, 24, 16, 42);
    const auto c = simulate_stationary(m, 24, 16, 43);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    CHECK(a.model_hash == model_hash(m.model()));
    CHECK(a.seed == 42);
}

TEST_CASE("TypeII sample lag covariance matches the model")
{
    const auto m = validate(SpectralModel::type_ii(0.2, 0.2));
    const long N = 64;
    const auto e = circulant_embedding(m, N, N);
    const auto g = autocovariance_grid(m, 2, 2);
    // Per-replicate statistic: mean over the lattice of X(t) X(t + e1).
    const int reps = 200;
    std::vector<double> stat;
    for (int k = 0; k < reps; ++k) {
        const auto s = sample_embedding(e, derive_seed(77, static_cast<std::uint64_t>(k)));
        double acc = 0;
        for (long i = 0; i + 1 < N; ++i)
            for (long j = 0; j < N; ++j)
                acc += s.values[static_cast<std::size_t>(i * N + j)] * s.values[static_cast<std::size_t>((i + 1) * N + j)];
        stat.push_back(acc / static_cast<double>((N - 1) * N));
    }
    double mean = 0, var = 0;
    for (double x : stat) mean += x / reps;
    for (double x : stat) var += (x - mean) * (x - mean) / (reps - 1);
    CHECK(std::abs(mean - g(1, 0)) <= 3 * std::sqrt(var / reps));
}

TEST_CASE("embedding too small for a strongly singular line")
{
    const auto m = validate(SpectralModel::linear_singular(1, 1, 0.45));
    CHECK(kind_of([&] { circulant_embedding(m, 16, 16); }) == ErrorKind::EmbeddingTooSmall);
    SynthesisSpec spec;
    spec.allow_approximate = true;
    const auto e = circulant_embedding(m, 16, 16, spec);
    CHECK(e.report.approximate);
    CHECK(e.report.clipped_mass > spec.clip_threshold);
    const auto s = sample_embedding(e, 1);
    CHECK(s.report.approximate);
    SynthesisSpec bad;
    bad.clip_threshold = -1;
    CHECK_THROWS_AS(circulant_embedding(m, 16, 16, bad), Error);
}

TEST_CASE("line embedding of fractional Gaussian noise")
{
    const double H = 0.7;
    const long N = 64;
    std::vector<double> r(N + 1);
    for (long k = 0; k <= N; ++k)
        r[k] = 0.5 * (std::pow(k + 1.0, 2 * H) - 2 * std::pow(k, 2 * H) + std::pow(std::abs(k - 1.0), 2 * H));
    const auto e = line_embedding(r, N);
    CHECK(e.report.clipped_mass == 0.0);
    const auto x = sample_line(e, 5);
    CHECK(x.size() == static_cast<std::size_t>(N));
    CHECK(x == sample_line(e, 5));
}

TEST_CASE("fractional Brownian sheet variance at (1,1)")
{
    const int reps = 10000;
    double s = 0, s2 = 0;
    for (int k = 0; k < reps; ++k) {
        const auto b = simulate_fbs(0.7, 0.3, 4, 4, 1.0, 1.0, derive_seed(11, static_cast<std::uint64_t>(k)));
        const double x = b(4, 4);
        s += x;
        s2 += x * x;
    }
    const double v = s2 / reps;
    // Var of a squared normal with variance 1 is 2.
    CHECK(std::abs(v - 1.0) <= 3 * std::sqrt(2.0 / reps));
    CHECK(std::abs(s / reps) <= 3 / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("fractional Brownian sheet vanishes on the axes")
{
    const auto b = simulate_fbs(0.5, 0.9, 6, 5, 2.0, 1.5, 8);
    for (long i = 0; i <= 6; ++i) CHECK(b(i, 0) == 0.0);
    for (long j = 0; j <= 5; ++j) CHECK(b(0, j) == 0.0);
    CHECK(b(6, 5) != 0.0);
}

TEST_CASE("H = 1 sheet direction is rank one")
{
    // With H1 = 1 the field is x B(y) for a fBm B, so each row is a multiple of the last.
    const auto b = simulate_fbs(1.0, 0.6, 5, 7, 1.0, 1.0, 21);
    CHECK(b.jitter == 0.0);
    for (long i = 1; i <= 5; ++i)
        for (long j = 1; j <= 7; ++j) CHECK(b(i, j) == Approx(i / 5.0 * b(5, j)).epsilon(1e-9).margin(1e-12));
}

TEST_CASE("Brownian direction has uncorrelated disjoint increments")
{
    // H1 = 1/2: increments over [0,1] and [1,2] in x, same y-interval, have covariance 0.
    const int reps = 4000;
    double s = 0, s2 = 0;
    for (int k = 0; k < reps; ++k) {
        const auto b = simulate_fbs(0.5, 0.8, 2, 1, 2.0, 1.0, derive_seed(31, static_cast<std::uint64_t>(k)));
        const double d1 = b(1, 1) - b(0, 1), d2 = b(2, 1) - b(1, 1);
        s += d1 * d2;
        s2 += d1 * d1 * d2 * d2;
    }
    const double mean = s / reps, sd = std::sqrt(s2 / reps - mean * mean);
    CHECK(std::abs(mean) <= 3 * sd / std::sqrt(static_cast<double>(reps)));
    CHECK(fbs_cov(0.5, 0.8, {1, 1}, {1, 1}) == Approx(1.0));
}

TEST_CASE("psd factor reproduces the covariance")
{
    const auto C = fbm_grid_cov(0.35, 12, 3.0);
    const auto F = psd_factor(C);
    CHECK((F * F.transpose() - C).cwiseAbs().maxCoeff() <= 1e-12 * C.maxCoeff());
    Eigen::MatrixXd neg = Eigen::MatrixXd::Identity(3, 3);
    neg(2, 2) = -1;
    CHECK(kind_of([&] { psd_factor(neg); }) == ErrorKind::CholeskyFailure);
    CHECK(kind_of([] { simulate_fbs(0.0, 0.5, 2, 2, 1, 1, 0); }) == ErrorKind::ParameterOutOfRange);
}

TEST_CASE("grid file round trip")
{
    const auto s = simulate_stationary(validate(SpectralModel::type_ii(0.2, 0.4)), 9, 7, 123);
    const std::string path = temp_path("roundtrip.bin");
    write_grid(path, to_grid_file(s));
    const auto g = read_grid(path);
    CHECK(g.N1 == 9);
    CHECK(g.N2 == 7);
    CHECK(g.seed == 123);
    CHECK(g.model_hash == s.model_hash);
    CHECK(g.values == s.values);
    CHECK(std::filesystem::file_size(path) == 64 + 8 * 63);
    std::filesystem::remove(path);
}

TEST_CASE("grid file errors")
{
    const std::string path = temp_path("bad.bin");
    {
        std::ofstream f(path, std::ios::binary);
        f << std::string(80, 'x');
    }
    CHECK(kind_of([&] { read_grid(path); }) == ErrorKind::IoError);
    std::filesystem::remove(path);
    CHECK(kind_of([] { read_grid("/nonexistent/dir/none.bin"); }) == ErrorKind::IoError);
    CHECK(kind_of([] { write_grid("/nonexistent/dir/none.bin", GridFile{1, 1, 0, 0, {1.0}}); }) == ErrorKind::IoError);
    const std::string trunc = temp_path("trunc.bin");
    GridFile g{3, 3, 0, 0, std::vector<double>(9, 1.0)};
    write_grid(trunc, g);
    std::filesystem::resize_file(trunc, 64 + 8 * 5);
    CHECK(kind_of([&] { read_grid(trunc); }) == ErrorKind::IoError);
    std::filesystem::remove(trunc);
}
