#pragma once

// Linear manifold refinement: s = W (z - mean), fit by PCA or FastICA.

#include "manifold_probe/binary_io.hpp"
#include "manifold_probe/error.hpp"
#include "manifold_probe/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

namespace manifold_probe {

enum class ProjectorKind : std::uint32_t { identity = 0, pca = 1, ica = 2 };
enum class IcaContrast : std::uint32_t { logcosh = 0, cube = 1 };

inline const char* to_string(ProjectorKind kind) {
    switch (kind) {
    case ProjectorKind::identity: return "identity";
    case ProjectorKind::pca: return "pca";
    case ProjectorKind::ica: return "ica";
    }
    return "?";
}

inline const char* to_string(IcaContrast c) { return c == IcaContrast::logcosh ? "logcosh" : "cube"; }

struct FitConfig {
    std::uint32_t max_iterations = 400;
    double tolerance = 1e-4;
    IcaContrast contrast = IcaContrast::logcosh;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_iterations < 1) throw invalid_argument("FitConfig: max_iterations must be >= 1");
        if (!(tolerance > 0)) throw invalid_argument("FitConfig: tolerance must be > 0");
    }

    bool operator==(const FitConfig&) const = default;
};

/// Fitted affine map R^d -> R^d'. Immutable once fitted.
struct LinearProjector {
    ProjectorKind kind = ProjectorKind::identity;
    Eigen::VectorXd mean;                    // d
    Eigen::MatrixXd weights;                 // d' x d; empty for identity
    Eigen::VectorXd explained_variance_ratio; // pca only
    FitConfig fit_config;
    bool converged = true;
    std::uint32_t iterations = 0;

    static LinearProjector identity(Eigen::Index dim) {
        LinearProjector p;
        p.mean = Eigen::VectorXd::Zero(dim);
        return p;
    }

    Eigen::Index input_dim() const noexcept { return mean.size(); }
    Eigen::Index output_dim() const noexcept {
        return kind == ProjectorKind::identity ? mean.size() : weights.rows();
    }
};

namespace detail {

// Top `count` eigenpairs of a symmetric matrix, descending, each eigenvector
// oriented so its largest-magnitude entry is positive.
struct TopEigen {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors; // columns
};

inline TopEigen top_eigenpairs(const Eigen::MatrixXd& sym, Eigen::Index count) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw numerical_error("eigendecomposition failed");
    const Eigen::Index n = sym.rows();
    TopEigen out{Eigen::VectorXd(count), Eigen::MatrixXd(n, count)};
    for (Eigen::Index i = 0; i < count; ++i) {
        out.values(i) = solver.eigenvalues()(n - 1 - i);
        Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - i);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        out.vectors.col(i) = v;
    }
    return out;
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& centered) {
    return (centered.transpose() * centered) / static_cast<double>(centered.rows() - 1);
}

// (W W^T)^{-1/2} W
inline Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w * w.transpose());
    if (solver.info() != Eigen::Success) throw numerical_error("ICA decorrelation failed");
    const Eigen::VectorXd& s = solver.eigenvalues();
    if (s.minCoeff() <= 0) throw numerical_error("ICA decorrelation: singular unmixing matrix");
    const Eigen::MatrixXd& u = solver.eigenvectors();
    return u * s.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose() * w;
}

} // namespace detail

/// PCA onto the top `output_dim` eigenvectors of the 1/(n-1) sample
/// covariance.
inline LinearProjector fit_pca(const Eigen::MatrixXd& data, Eigen::Index output_dim) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (n < 2) throw invalid_argument("fit_pca: need at least 2 samples");
    if (output_dim < 1 || output_dim > std::min(n - 1, d))
        throw invalid_argument("fit_pca: output_dim " + std::to_string(output_dim) + " outside [1, " +
                               std::to_string(std::min(n - 1, d)) + "]");
    if (!data.allFinite()) throw invalid_argument("fit_pca: non-finite input");

    LinearProjector p;
    p.kind = ProjectorKind::pca;
    p.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - p.mean.transpose();
    const Eigen::MatrixXd cov = detail::sample_covariance(centered);
    const double total = cov.trace();
    if (!(total > 0)) throw numerical_error("fit_pca: degenerate data (zero total variance)");

    const auto top = detail::top_eigenpairs(cov, output_dim);
    p.weights = top.vectors.transpose();
    p.explained_variance_ratio = top.values / total;
    return p;
}

/// FastICA: center, PCA-whiten to `output_dim`, then symmetric fixed-point
/// iteration. Non-convergence is reported through `converged`, not thrown.
inline LinearProjector fit_ica(const Eigen::MatrixXd& data, Eigen::Index output_dim, const FitConfig& config = {}) {
    config.validate();
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (output_dim < 1 || output_dim > d || n <= output_dim)
        throw invalid_argument("fit_ica: output_dim " + std::to_string(output_dim) +
                               " requires 1 <= d' <= d and n > d'");
    if (!data.allFinite()) throw invalid_argument("fit_ica: non-finite input");

    LinearProjector p;
    p.kind = ProjectorKind::ica;
    p.fit_config = config;
    p.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - p.mean.transpose();
    const auto top = detail::top_eigenpairs(detail::sample_covariance(centered), output_dim);
    if (!(top.values.minCoeff() > 0)) throw numerical_error("fit_ica: cannot whiten, retained variance is zero");

    // whitening: d' x d
    const Eigen::MatrixXd whitener = top.values.cwiseSqrt().cwiseInverse().asDiagonal() * top.vectors.transpose();
    const Eigen::MatrixXd white = whitener * centered.transpose(); // d' x n

    Xoshiro256 rng(config.seed);
    Eigen::MatrixXd w(output_dim, output_dim);
    for (Eigen::Index i = 0; i < output_dim; ++i)
        for (Eigen::Index j = 0; j < output_dim; ++j) w(i, j) = rng.normal();
    w = detail::symmetric_decorrelation(w);

    const double inv_n = 1.0 / static_cast<double>(n);
    p.converged = false;
    for (std::uint32_t it = 1; it <= config.max_iterations; ++it) {
        const Eigen::MatrixXd u = w * white;
        Eigen::MatrixXd g(u.rows(), u.cols());
        Eigen::VectorXd g_prime_mean(u.rows());
        if (config.contrast == IcaContrast::logcosh) {
            g = u.array().tanh().matrix();
            g_prime_mean = (1.0 - g.array().square()).rowwise().sum().matrix() * inv_n;
        } else {
            g = u.array().cube().matrix();
            g_prime_mean = (3.0 * u.array().square()).rowwise().sum().matrix() * inv_n;
        }
        Eigen::MatrixXd w_next = (g * white.transpose()) * inv_n - g_prime_mean.asDiagonal() * w;
        w_next = detail::symmetric_decorrelation(w_next);

        const Eigen::MatrixXd overlap = (w_next * w.transpose()).cwiseAbs();
        const double change =
            (overlap - Eigen::MatrixXd::Identity(output_dim, output_dim)).cwiseAbs().maxCoeff();
        w = std::move(w_next);
        p.iterations = it;
        if (!w.allFinite()) throw numerical_error("fit_ica: iteration diverged");
        if (change < config.tolerance) {
            p.converged = true;
            break;
        }
    }
    p.weights = w * whitener;
    return p;
}

inline Eigen::VectorXd project(const LinearProjector& p, const Eigen::VectorXd& z) {
    if (z.size() != p.input_dim())
        throw invalid_argument("project: expected dimension " + std::to_string(p.input_dim()) + ", got " +
                               std::to_string(z.size()));
    if (p.kind == ProjectorKind::identity) return z;
    return p.weights * (z - p.mean);
}

/// Row-wise projection of an n x d matrix.
inline Eigen::MatrixXd project_rows(const LinearProjector& p, const Eigen::MatrixXd& rows) {
    if (rows.cols() != p.input_dim())
        throw invalid_argument("project: expected dimension " + std::to_string(p.input_dim()) + ", got " +
                               std::to_string(rows.cols()));
    if (p.kind == ProjectorKind::identity) return rows;
    return (rows.rowwise() - p.mean.transpose()) * p.weights.transpose();
}

inline Eigen::VectorXd explained_variance(const LinearProjector& p) {
    if (p.kind != ProjectorKind::pca) throw invalid_argument("explained_variance: projector is not PCA");
    return p.explained_variance_ratio;
}

// Projector container ("FPJ1"), little-endian. Numeric payload is IEEE-754
// binary64 so cached projectors reproduce freshly fitted ones exactly.
//   magic "FPJ1", version u32, kind u32, input_dim u32, output_dim u32,
//   contrast u32, max_iterations u32, tolerance f64, seed u64,
//   converged u32, iterations u32, ratio_count u32,
//   mean f64[d], weights f64[d' * d] (row-major, absent for identity),
//   ratios f64[ratio_count]
inline constexpr std::uint32_t kProjectorFormatVersion = 1;

inline std::vector<std::uint8_t> encode_projector(const LinearProjector& p) {
    io::ByteWriter w;
    w.raw("FPJ1");
    w.u32(kProjectorFormatVersion);
    w.u32(static_cast<std::uint32_t>(p.kind));
    w.u32(static_cast<std::uint32_t>(p.input_dim()));
    w.u32(static_cast<std::uint32_t>(p.output_dim()));
    w.u32(static_cast<std::uint32_t>(p.fit_config.contrast));
    w.u32(p.fit_config.max_iterations);
    w.f64(p.fit_config.tolerance);
    w.u64(p.fit_config.seed);
    w.u32(p.converged ? 1 : 0);
    w.u32(p.iterations);
    w.u32(static_cast<std::uint32_t>(p.explained_variance_ratio.size()));
    for (Eigen::Index i = 0; i < p.mean.size(); ++i) w.f64(p.mean(i));
    if (p.kind != ProjectorKind::identity)
        for (Eigen::Index r = 0; r < p.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < p.weights.cols(); ++c) w.f64(p.weights(r, c));
    for (Eigen::Index i = 0; i < p.explained_variance_ratio.size(); ++i) w.f64(p.explained_variance_ratio(i));
    return w.take();
}

inline LinearProjector decode_projector(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader in(bytes);
    if (in.raw(4) != "FPJ1") throw data_error("bad projector magic");
    if (in.u32() != kProjectorFormatVersion) throw data_error("unsupported projector version");
    LinearProjector p;
    const auto kind = in.u32();
    if (kind > 2) throw data_error("bad projector kind " + std::to_string(kind));
    p.kind = static_cast<ProjectorKind>(kind);
    const Eigen::Index d = in.u32();
    const Eigen::Index out_dim = in.u32();
    const auto contrast = in.u32();
    if (contrast > 1) throw data_error("bad ICA contrast tag");
    p.fit_config.contrast = static_cast<IcaContrast>(contrast);
    p.fit_config.max_iterations = in.u32();
    p.fit_config.tolerance = in.f64();
    p.fit_config.seed = in.u64();
    p.converged = in.u32() != 0;
    p.iterations = in.u32();
    const Eigen::Index ratios = in.u32();
    if (d == 0 || out_dim == 0 || out_dim > d) throw data_error("bad projector dimensions");
    if (p.kind == ProjectorKind::identity && out_dim != d) throw data_error("identity projector must keep dimension");
    in.require(static_cast<std::size_t>(8 * (d + (p.kind == ProjectorKind::identity ? 0 : out_dim * d) + ratios)));
    p.mean.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) p.mean(i) = in.f64();
    if (p.kind != ProjectorKind::identity) {
        p.weights.resize(out_dim, d);
        for (Eigen::Index r = 0; r < out_dim; ++r)
            for (Eigen::Index c = 0; c < d; ++c) p.weights(r, c) = in.f64();
    }
    p.explained_variance_ratio.resize(ratios);
    for (Eigen::Index i = 0; i < ratios; ++i) p.explained_variance_ratio(i) = in.f64();
    if (in.remaining() != 0) throw data_error("trailing bytes in projector file");
    return p;
}

inline void write_projector(const LinearProjector& p, const std::filesystem::path& path) {
    io::write_file(path, encode_projector(p));
}

inline LinearProjector read_projector(const std::filesystem::path& path) {
    return decode_projector(io::read_file(path));
}

} // namespace manifold_probe
