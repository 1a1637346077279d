#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "lrdfield/error.hpp"
#include "lrdfield/limit_covariance.hpp"
#include "lrdfield/spectral_grid.hpp"
#include "lrdfield/spectral_models.hpp"

namespace lrdfield {

// Counter-based normals: each (seed, stream, index) maps to one N(0,1) draw.

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    return splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Pair of independent standard normals for cell `index` of stream `seed`.
inline std::pair<double, double> cell_normals(std::uint64_t seed, std::uint64_t index)
{
    const std::uint64_t k = splitmix64(seed ^ splitmix64(index));
    const std::uint64_t a = splitmix64(k), b = splitmix64(k + 1);
    const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(2 * pi * u2), r * std::sin(2 * pi * u2)};
}

struct SynthesisSpec {
    double clip_threshold = 1e-3;   // tolerated clipped fraction of the embedding spectrum
    int max_embedding_factor = 8;   // embedding grows from 2N up to this multiple of N
    bool allow_approximate = false; // keep clipped samples above threshold instead of failing
    GridOptions grid;

    void check() const
    {
        if (!(clip_threshold >= 0)) throw Error(ErrorKind::ParameterOutOfRange, "clip_threshold must be >= 0");
        if (max_embedding_factor < 2) throw Error(ErrorKind::ParameterOutOfRange, "max_embedding_factor must be >= 2");
        grid.check();
    }
};

struct SynthesisReport {
    long embedding1 = 0, embedding2 = 0;
    double clipped_mass = 0.0;
    bool approximate = false;
};

struct LatticeSample {
    long N1 = 0, N2 = 0;
    std::vector<double> values;  // row-major, values[t1 * N2 + t2] = X(t1 + 1, t2 + 1)
    std::uint64_t seed = 0;
    std::uint64_t model_hash = 0;
    SynthesisReport report;

    double operator()(long t1, long t2) const { return values[static_cast<std::size_t>(t1 * N2 + t2)]; }
};

/// Square roots of the clipped circulant eigenvalues for one embedding size, shared across replicates.
struct CirculantEmbedding {
    long N1 = 0, N2 = 0, P1 = 0, P2 = 0;
    std::vector<double> sqrt_lambda;  // P1 x P2, scaled by 1 / sqrt(P1 P2)
    SynthesisReport report;
    std::uint64_t model_hash = 0;
};

namespace detail {

inline CirculantEmbedding embed_at(const ValidatedModel& m, long N1, long N2, long P1, long P2,
                                   const GridOptions& opt)
{
    const long L1 = P1 / 2, L2 = P2 / 2;
    const LagGrid r = autocovariance_grid(m, L1, L2, opt);
    std::vector<std::complex<double>> c(static_cast<std::size_t>(P1 * P2));
    auto lag = [](long k, long P) { return k <= P / 2 ? k : k - P; };
    for (long k1 = 0; k1 < P1; ++k1)
        for (long k2 = 0; k2 < P2; ++k2) {
            const long t1 = lag(k1, P1), t2 = lag(k2, P2);
            double v = r(t1, t2);
            // Wrap-around lags are shared by +-P/2; average to keep the base symmetric.
            if (std::abs(t1) == L1 || std::abs(t2) == L2) {
                const long s1 = std::abs(t1) == L1 ? -t1 : t1, s2 = std::abs(t2) == L2 ? -t2 : t2;
                v = 0.5 * (v + r(s1, s2));
                if (std::abs(t1) == L1 && std::abs(t2) == L2) v = 0.25 * (r(t1, t2) + r(-t1, t2) + r(t1, -t2) + r(-t1, -t2));
            }
            c[static_cast<std::size_t>(k1 * P2 + k2)] = v;
        }
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(P1), static_cast<int>(P2),
                                       reinterpret_cast<fftw_complex*>(c.data()),
                                       reinterpret_cast<fftw_complex*>(c.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }
    CirculantEmbedding e;
    e.N1 = N1;
    e.N2 = N2;
    e.P1 = P1;
    e.P2 = P2;
    e.model_hash = model_hash(m.model());
    e.sqrt_lambda.resize(c.size());
    double neg = 0.0, total = 0.0;
    const double scale = 1.0 / static_cast<double>(P1 * P2);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double lam = c[i].real();
        total += std::abs(lam);
        if (lam < 0) neg -= lam;
        e.sqrt_lambda[i] = std::sqrt(std::max(0.0, lam) * scale);
    }
    e.report.embedding1 = P1;
    e.report.embedding2 = P2;
    e.report.clipped_mass = total > 0 ? neg / total : 0.0;
    return e;
}

}  // namespace detail

inline CirculantEmbedding circulant_embedding(const ValidatedModel& m, long N1, long N2, const SynthesisSpec& spec = {})
{
    spec.check();
    if (N1 < 1 || N2 < 1) throw Error(ErrorKind::ParameterOutOfRange, "sample sizes must be positive");
    CirculantEmbedding best;
    for (int f = 2; f <= spec.max_embedding_factor; f *= 2) {
        const long P1 = detail::good_fft_size(f * N1), P2 = detail::good_fft_size(f * N2);
        CirculantEmbedding e = detail::embed_at(m, N1, N2, P1, P2, spec.grid);
        const bool done = e.report.clipped_mass <= spec.clip_threshold;
        if (best.P1 == 0 || e.report.clipped_mass < best.report.clipped_mass) best = std::move(e);
        if (done) return best;
    }
    if (!spec.allow_approximate)
        throw Error(ErrorKind::EmbeddingTooSmall,
                    "clipped mass " + format_double(best.report.clipped_mass) + " exceeds " +
                        format_double(spec.clip_threshold) + " at embedding " + std::to_string(best.P1) + " x " +
                        std::to_string(best.P2) + "; raise max_embedding_factor or allow approximate samples");
    best.report.approximate = true;
    return best;
}

/// One sample from a prepared embedding. The same (embedding, seed) always yields the same values.
inline LatticeSample sample_embedding(const CirculantEmbedding& e, std::uint64_t seed)
{
    std::vector<std::complex<double>> w(e.sqrt_lambda.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto [z1, z2] = cell_normals(seed, i);
        w[i] = e.sqrt_lambda[i] * std::complex<double>(z1, z2);
    }
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(e.P1), static_cast<int>(e.P2),
                                       reinterpret_cast<fftw_complex*>(w.data()),
                                       reinterpret_cast<fftw_complex*>(w.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }
    LatticeSample s;
    s.N1 = e.N1;
    s.N2 = e.N2;
    s.seed = seed;
    s.model_hash = e.model_hash;
    s.report = e.report;
    s.values.resize(static_cast<std::size_t>(e.N1 * e.N2));
    for (long i = 0; i < e.N1; ++i)
        for (long j = 0; j < e.N2; ++j)
            s.values[static_cast<std::size_t>(i * e.N2 + j)] = w[static_cast<std::size_t>(i * e.P2 + j)].real();
    return s;
}

inline LatticeSample simulate_stationary(const ValidatedModel& m, long N1, long N2, std::uint64_t seed,
                                         const SynthesisSpec& spec = {})
{
    return sample_embedding(circulant_embedding(m, N1, N2, spec), seed);
}

/// Circulant embedding of a one-dimensional stationary sequence with autocovariance r(0..L).
struct LineEmbedding {
    long N = 0, P = 0;
    std::vector<double> sqrt_lambda;
    SynthesisReport report;
};

inline LineEmbedding line_embedding(const std::vector<double>& r, long N)
{
    if (N < 1 || static_cast<long>(r.size()) < N) throw Error(ErrorKind::ParameterOutOfRange, "need r(0..N-1)");
    long L = static_cast<long>(r.size()) - 1;
    long P = 2 * L;
    if (P < 2) P = 2;
    std::vector<std::complex<double>> c(static_cast<std::size_t>(P));
    for (long k = 0; k < P; ++k) c[static_cast<std::size_t>(k)] = r[static_cast<std::size_t>(k <= L ? k : P - k)];
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(P), reinterpret_cast<fftw_complex*>(c.data()),
                                       reinterpret_cast<fftw_complex*>(c.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }
    LineEmbedding e;
    e.N = N;
    e.P = P;
    e.sqrt_lambda.resize(c.size());
    double neg = 0.0, total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double lam = c[i].real();
        total += std::abs(lam);
        if (lam < 0) neg -= lam;
        e.sqrt_lambda[i] = std::sqrt(std::max(0.0, lam) / static_cast<double>(P));
    }
    e.report.embedding1 = P;
    e.report.embedding2 = 1;
    e.report.clipped_mass = total > 0 ? neg / total : 0.0;
    return e;
}

inline std::vector<double> sample_line(const LineEmbedding& e, std::uint64_t seed)
{
    std::vector<std::complex<double>> w(e.sqrt_lambda.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto [z1, z2] = cell_normals(seed, i);
        w[i] = e.sqrt_lambda[i] * std::complex<double>(z1, z2);
    }
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(e.P), reinterpret_cast<fftw_complex*>(w.data()),
                                       reinterpret_cast<fftw_complex*>(w.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }
    std::vector<double> out(static_cast<std::size_t>(e.N));
    for (long i = 0; i < e.N; ++i) out[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)].real();
    return out;
}

// Fractional Brownian sheet.

struct SheetSample {
    long n1 = 0, n2 = 0;
    double x_max = 1.0, y_max = 1.0;
    double H1 = 0.5, H2 = 0.5;
    std::uint64_t seed = 0;
    std::vector<double> values;  // (n1 + 1) x (n2 + 1), row-major; values at (i x_max / n1, j y_max / n2)
    double jitter = 0.0;         // diagonal jitter used by the factorization, 0 if none

    double operator()(long i, long j) const { return values[static_cast<std::size_t>(i * (n2 + 1) + j)]; }
};

inline Eigen::MatrixXd fbm_grid_cov(double H, long n, double x_max)
{
    Eigen::MatrixXd C(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            const double s = (i + 1) * x_max / n, t = (j + 1) * x_max / n;
            C(i, j) = 0.5 * (std::pow(s, 2 * H) + std::pow(t, 2 * H) - std::pow(std::abs(s - t), 2 * H));
        }
    return C;
}

/// F with F F^T = C: plain Cholesky, then pivoted LDL^T (exact for low-rank C), then growing jitter.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& C, double* jitter_used = nullptr)
{
    if (jitter_used) *jitter_used = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double scale = C.diagonal().cwiseAbs().maxCoeff();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    if (ldlt.vectorD().allFinite()) {  // info() flags exact zero pivots, which a rank-deficient C has
        Eigen::VectorXd d = ldlt.vectorD();
        if (d.minCoeff() >= -1e-12 * scale) {
            for (Eigen::Index i = 0; i < d.size(); ++i)
                if (d(i) <= 1e-12 * scale) d(i) = 0.0;
            Eigen::MatrixXd L = ldlt.matrixL();
            L = L * d.cwiseSqrt().asDiagonal();
            return ldlt.transpositionsP().transpose() * L;
        }
    }
    for (double eps = 1e-14; eps <= 1e-8; eps *= 10) {
        const Eigen::MatrixXd Cj = C + Eigen::MatrixXd::Identity(C.rows(), C.cols()) * (eps * scale);
        Eigen::LLT<Eigen::MatrixXd> retry(Cj);
        if (retry.info() == Eigen::Success) {
            if (jitter_used) *jitter_used = eps * scale;
            return retry.matrixL();
        }
    }
    throw Error(ErrorKind::CholeskyFailure, "covariance matrix is not numerically positive semidefinite");
}

inline SheetSample simulate_fbs(double H1, double H2, long n1, long n2, double x_max, double y_max, std::uint64_t seed)
{
    detail::check_hurst(H1, "H1");
    detail::check_hurst(H2, "H2");
    if (n1 < 1 || n2 < 1) throw Error(ErrorKind::ParameterOutOfRange, "grid sizes must be positive");
    if (!(x_max > 0 && y_max > 0)) throw Error(ErrorKind::ParameterOutOfRange, "grid extent must be positive");
    double j1 = 0.0, j2 = 0.0;
    const Eigen::MatrixXd F1 = psd_factor(fbm_grid_cov(H1, n1, x_max), &j1);
    const Eigen::MatrixXd F2 = psd_factor(fbm_grid_cov(H2, n2, y_max), &j2);
    Eigen::MatrixXd Z(n1, n2);
    for (long i = 0; i < n1; ++i)
        for (long j = 0; j < n2; ++j) Z(i, j) = cell_normals(seed, static_cast<std::uint64_t>(i * n2 + j)).first;
    const Eigen::MatrixXd B = F1 * Z * F2.transpose();
    SheetSample s;
    s.n1 = n1;
    s.n2 = n2;
    s.x_max = x_max;
    s.y_max = y_max;
    s.H1 = H1;
    s.H2 = H2;
    s.seed = seed;
    s.jitter = std::max(j1, j2);
    s.values.assign(static_cast<std::size_t>((n1 + 1) * (n2 + 1)), 0.0);
    for (long i = 0; i < n1; ++i)
        for (long j = 0; j < n2; ++j) s.values[static_cast<std::size_t>((i + 1) * (n2 + 1) + j + 1)] = B(i, j);
    return s;
}

// Binary grid files: 64-byte header, then little-endian float64 values, row-major.

inline constexpr char grid_magic[8] = {'L', 'R', 'D', 'F', 'G', 'R', 'D', '1'};

struct GridFile {
    std::uint64_t N1 = 0, N2 = 0, seed = 0, model_hash = 0;
    std::vector<double> values;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v)
{
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const char* p)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_grid(const std::string& path, const GridFile& g)
{
    if (g.values.size() != g.N1 * g.N2) throw Error(ErrorKind::ParameterOutOfRange, "grid size mismatch");
    std::string buf(grid_magic, 8);
    detail::put_le<std::uint64_t>(buf, g.N1);
    detail::put_le<std::uint64_t>(buf, g.N2);
    detail::put_le<std::uint64_t>(buf, g.seed);
    detail::put_le<std::uint64_t>(buf, g.model_hash);
    buf.resize(64, '\0');
    buf.reserve(64 + 8 * g.values.size());
    for (double v : g.values) detail::put_le<double>(buf, v);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + path);
}

inline GridFile read_grid(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 64 || std::memcmp(buf.data(), grid_magic, 8) != 0)
        throw Error(ErrorKind::IoError, path + " is not a grid file");
    GridFile g;
    g.N1 = detail::get_le<std::uint64_t>(buf.data() + 8);
    g.N2 = detail::get_le<std::uint64_t>(buf.data() + 16);
    g.seed = detail::get_le<std::uint64_t>(buf.data() + 24);
    g.model_hash = detail::get_le<std::uint64_t>(buf.data() + 32);
    if (buf.size() != 64 + 8 * g.N1 * g.N2) throw Error(ErrorKind::IoError, path + " has a truncated payload");
    g.values.resize(g.N1 * g.N2);
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = detail::get_le<double>(buf.data() + 64 + 8 * i);
    return g;
}

inline GridFile to_grid_file(const LatticeSample& s)
{
    return {static_cast<std::uint64_t>(s.N1), static_cast<std::uint64_t>(s.N2), s.seed, s.model_hash, s.values};
}

}  // namespace lrdfield
