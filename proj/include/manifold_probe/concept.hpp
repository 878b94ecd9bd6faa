#pragma once

// Concept dictionaries and the classifiers that run on them.
//
// A dictionary holds, per support class, the exemplars, their centroid and a
// shrunk covariance. Covariances come from a ladder: per-class sample
// covariance when the class has enough rows, else the pooled within-class
// covariance, else the identity. The chosen matrix S is then shrunk,
//   cov = (1 - lambda) S + lambda (tr(S) / d') I.

#include "manifold_probe/binary_io.hpp"
#include "manifold_probe/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace manifold_probe {

enum class CovSource : std::uint32_t { per_class = 0, pooled = 1, identity = 2 };
enum class Metric { mahalanobis, euclidean, cosine };
enum class ScoreMode { exemplar, centroid };

inline const char* to_string(CovSource s) {
    switch (s) {
    case CovSource::per_class: return "per_class";
    case CovSource::pooled: return "pooled";
    case CovSource::identity: return "identity";
    }
    return "?";
}

inline const char* to_string(Metric m) {
    switch (m) {
    case Metric::mahalanobis: return "mahalanobis";
    case Metric::euclidean: return "euclidean";
    case Metric::cosine: return "cosine";
    }
    return "?";
}

inline Metric parse_metric(const std::string& s) {
    if (s == "mahalanobis") return Metric::mahalanobis;
    if (s == "euclidean") return Metric::euclidean;
    if (s == "cosine") return Metric::cosine;
    throw invalid_argument("unknown metric '" + s + "'");
}

struct ShrinkageConfig {
    double lambda = 0.5;
    std::size_t pooled_fallback_threshold = 2;   // min rows in a class for its own covariance
    std::size_t identity_fallback_threshold = 2; // min total rows for the pooled covariance

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw invalid_argument("shrinkage lambda must lie in [0, 1]");
        if (pooled_fallback_threshold < 1 || identity_fallback_threshold < 1)
            throw invalid_argument("shrinkage thresholds must be >= 1");
    }

    bool operator==(const ShrinkageConfig&) const = default;
};

/// Which support rows take part where. Variant rows are augmented copies of a
/// support image.
struct VariantUsage {
    bool as_exemplars = true;
    bool in_covariance = true;

    bool operator==(const VariantUsage&) const = default;
};

struct LabeledVectors {
    Eigen::MatrixXd vectors;      // one row per vector
    std::vector<int> labels;      // one per row
    std::vector<bool> is_variant; // empty means every row is an original
};

struct ClassModel {
    int class_label = 0;
    Eigen::MatrixXd exemplars; // n_c x d'
    Eigen::VectorXd centroid;
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd precision;
    Eigen::MatrixXd cholesky_lower; // covariance = L L^T
    double log_det = 0.0;
    double prior = 1.0;
    CovSource cov_source = CovSource::identity;
};

struct ConceptDictionary {
    std::vector<ClassModel> models; // ascending class_label
    Eigen::Index dim = 0;
    ShrinkageConfig shrinkage;

    std::size_t exemplar_count() const noexcept {
        std::size_t n = 0;
        for (const auto& m : models) n += static_cast<std::size_t>(m.exemplars.rows());
        return n;
    }
};

namespace detail {

// Rows sorted lexicographically so downstream sums do not depend on the
// caller's row order.
inline Eigen::MatrixXd canonical_rows(std::vector<Eigen::VectorXd> rows, Eigen::Index dim) {
    std::sort(rows.begin(), rows.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    });
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return out;
}

inline Eigen::MatrixXd scatter(const Eigen::MatrixXd& rows) {
    const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
    return centered.transpose() * centered;
}

} // namespace detail

/// Builds one ClassModel per distinct label. Priors are uniform.
inline ConceptDictionary build_dictionary(const LabeledVectors& support, const ShrinkageConfig& shrinkage = {},
                                          const VariantUsage& usage = {}) {
    shrinkage.validate();
    const Eigen::Index d = support.vectors.cols();
    const auto n = static_cast<std::size_t>(support.vectors.rows());
    if (n == 0 || d == 0) throw invalid_argument("build_dictionary: empty support set");
    if (support.labels.size() != n) throw invalid_argument("build_dictionary: one label per row required");
    if (!support.is_variant.empty() && support.is_variant.size() != n)
        throw invalid_argument("build_dictionary: is_variant must be empty or one flag per row");
    if (!support.vectors.allFinite()) throw invalid_argument("build_dictionary: non-finite support vector");

    struct Rows {
        std::vector<Eigen::VectorXd> exemplars, covariance, originals;
    };
    std::map<int, Rows> by_class;
    for (std::size_t i = 0; i < n; ++i) {
        const bool variant = !support.is_variant.empty() && support.is_variant[i];
        auto& rows = by_class[support.labels[i]];
        Eigen::VectorXd v = support.vectors.row(static_cast<Eigen::Index>(i)).transpose();
        if (!variant) rows.originals.push_back(v);
        if (!variant || usage.as_exemplars) rows.exemplars.push_back(v);
        if (!variant || usage.in_covariance) rows.covariance.push_back(v);
    }
    for (const auto& [label, rows] : by_class)
        if (rows.originals.empty() && rows.exemplars.empty())
            throw invalid_argument("build_dictionary: class " + std::to_string(label) + " has no exemplars");

    ConceptDictionary dict;
    dict.dim = d;
    dict.shrinkage = shrinkage;

    // Pooled within-class covariance, shared by every class that falls back
    // to it. Needs at least one degree of freedom.
    std::size_t total_cov_rows = 0;
    for (const auto& [_, rows] : by_class) total_cov_rows += rows.covariance.size();
    std::optional<Eigen::MatrixXd> pooled;
    auto pooled_cov = [&]() -> const std::optional<Eigen::MatrixXd>& {
        if (!pooled && total_cov_rows >= shrinkage.identity_fallback_threshold &&
            total_cov_rows > by_class.size()) {
            Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
            for (const auto& [_, rows] : by_class)
                if (rows.covariance.size() > 1) acc += detail::scatter(detail::canonical_rows(rows.covariance, d));
            acc /= static_cast<double>(total_cov_rows - by_class.size());
            if (acc.trace() > 0) pooled = std::move(acc);
        }
        return pooled;
    };

    const double prior = 1.0 / static_cast<double>(by_class.size());
    for (auto& [label, rows] : by_class) {
        ClassModel m;
        m.class_label = label;
        m.prior = prior;
        m.exemplars = detail::canonical_rows(rows.exemplars, d);
        m.centroid = m.exemplars.colwise().mean().transpose();

        Eigen::MatrixXd s;
        const std::size_t nc = rows.covariance.size();
        if (nc >= shrinkage.pooled_fallback_threshold && nc >= 2) {
            s = detail::scatter(detail::canonical_rows(rows.covariance, d)) / static_cast<double>(nc - 1);
            m.cov_source = CovSource::per_class;
            if (!(s.trace() > 0)) s.resize(0, 0);
        }
        if (s.size() == 0) {
            if (const auto& p = pooled_cov()) {
                s = *p;
                m.cov_source = CovSource::pooled;
            } else {
                s = Eigen::MatrixXd::Identity(d, d);
                m.cov_source = CovSource::identity;
            }
        }

        const double scale = s.trace() / static_cast<double>(d);
        m.covariance = (1.0 - shrinkage.lambda) * s;
        m.covariance.diagonal().array() += shrinkage.lambda * scale;

        Eigen::LLT<Eigen::MatrixXd> llt(m.covariance);
        if (llt.info() != Eigen::Success)
            throw numerical_error("covariance of class " + std::to_string(label) +
                                  " is not positive-definite (try lambda > 0)");
        m.cholesky_lower = llt.matrixL();
        m.log_det = 2.0 * m.cholesky_lower.diagonal().array().log().sum();
        m.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
        m.precision = 0.5 * (m.precision + m.precision.transpose()).eval();
        if (!m.precision.allFinite() || !std::isfinite(m.log_det))
            throw numerical_error("non-finite precision for class " + std::to_string(label));
        dict.models.push_back(std::move(m));
    }
    return dict;
}

/// sqrt((q - e)^T P (q - e)), clamped at zero.
inline double mahalanobis(const Eigen::VectorXd& query, const Eigen::VectorXd& exemplar,
                          const Eigen::MatrixXd& precision) {
    if (query.size() != exemplar.size() || precision.rows() != query.size() || precision.cols() != query.size())
        throw invalid_argument("mahalanobis: dimension mismatch");
    const Eigen::VectorXd diff = query - exemplar;
    return std::sqrt(std::max(0.0, diff.dot(precision * diff)));
}

/// Distances from each query (row) to each scored point (column), with the
/// class label of every column. Smaller is always closer.
struct DistanceTable {
    Eigen::MatrixXd distances;
    std::vector<int> labels;
};

inline DistanceTable pairwise_distances(const Eigen::MatrixXd& queries, const ConceptDictionary& dict,
                                        Metric metric, ScoreMode mode = ScoreMode::exemplar) {
    if (queries.cols() != dict.dim)
        throw invalid_argument("pairwise_distances: query dimension " + std::to_string(queries.cols()) +
                               " but dictionary dimension " + std::to_string(dict.dim));
    const Eigen::Index nq = queries.rows();
    std::size_t columns = 0;
    for (const auto& m : dict.models) columns += mode == ScoreMode::exemplar ? m.exemplars.rows() : 1;

    DistanceTable table;
    table.distances.resize(nq, static_cast<Eigen::Index>(columns));
    table.labels.reserve(columns);

    Eigen::VectorXd query_norms;
    if (metric == Metric::cosine) {
        query_norms = queries.rowwise().norm();
        if (nq > 0 && !(query_norms.minCoeff() > 0))
            throw invalid_argument("pairwise_distances: zero-norm query under cosine");
    }

    Eigen::Index col = 0;
    for (const auto& m : dict.models) {
        const Eigen::MatrixXd points =
            mode == ScoreMode::exemplar ? m.exemplars : Eigen::MatrixXd(m.centroid.transpose());
        const Eigen::Index np = points.rows();
        switch (metric) {
        case Metric::mahalanobis: {
            // Whiten queries and points together with this class's Cholesky
            // factor; distances are then Euclidean.
            Eigen::MatrixXd stacked(dict.dim, nq + np);
            stacked << queries.transpose(), points.transpose();
            m.cholesky_lower.triangularView<Eigen::Lower>().solveInPlace(stacked);
            for (Eigen::Index j = 0; j < np; ++j)
                for (Eigen::Index i = 0; i < nq; ++i)
                    table.distances(i, col + j) = (stacked.col(i) - stacked.col(nq + j)).norm();
            break;
        }
        case Metric::euclidean:
            for (Eigen::Index j = 0; j < np; ++j)
                for (Eigen::Index i = 0; i < nq; ++i)
                    table.distances(i, col + j) = (queries.row(i) - points.row(j)).norm();
            break;
        case Metric::cosine:
            for (Eigen::Index j = 0; j < np; ++j) {
                const double pn = points.row(j).norm();
                if (!(pn > 0)) throw invalid_argument("pairwise_distances: zero-norm exemplar under cosine");
                for (Eigen::Index i = 0; i < nq; ++i) {
                    const double c = queries.row(i).dot(points.row(j)) / (query_norms(i) * pn);
                    table.distances(i, col + j) = std::max(0.0, 1.0 - c);
                }
            }
            break;
        }
        table.labels.insert(table.labels.end(), static_cast<std::size_t>(np), m.class_label);
        col += np;
    }
    return table;
}

/// Majority vote over the k nearest columns. Neighbors are chosen by
/// (distance, label); vote ties go to the smaller mean neighbor distance,
/// then to the smaller label.
inline int classify_knn(std::span<const double> distances, std::span<const int> labels, std::size_t k) {
    if (distances.empty()) throw invalid_argument("classify_knn: empty distance row");
    if (distances.size() != labels.size()) throw invalid_argument("classify_knn: one label per distance required");
    if (k < 1 || k > distances.size())
        throw invalid_argument("classify_knn: k=" + std::to_string(k) + " outside [1, " +
                               std::to_string(distances.size()) + "]");
    std::vector<std::size_t> idx(distances.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto closer = [&](std::size_t a, std::size_t b) {
        if (distances[a] != distances[b]) return distances[a] < distances[b];
        if (labels[a] != labels[b]) return labels[a] < labels[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);

    struct Vote {
        std::size_t count = 0;
        double sum = 0.0;
    };
    std::map<int, Vote> votes;
    for (std::size_t i = 0; i < k; ++i) {
        auto& v = votes[labels[idx[i]]];
        ++v.count;
        v.sum += distances[idx[i]];
    }
    int best = votes.begin()->first;
    Vote best_vote = votes.begin()->second;
    for (const auto& [label, v] : votes) {
        if (v.count > best_vote.count ||
            (v.count == best_vote.count && v.sum / v.count < best_vote.sum / best_vote.count)) {
            best = label;
            best_vote = v;
        }
    }
    return best;
}

/// Argmin over one distance per class; ties go to the smaller label.
inline int classify_centroid(std::span<const double> distances, std::span<const int> labels) {
    if (distances.empty()) throw invalid_argument("classify_centroid: empty distance row");
    if (distances.size() != labels.size())
        throw invalid_argument("classify_centroid: one label per distance required");
    std::size_t best = 0;
    for (std::size_t i = 1; i < distances.size(); ++i)
        if (distances[i] < distances[best] || (distances[i] == distances[best] && labels[i] < labels[best]))
            best = i;
    return labels[best];
}

struct Posterior {
    Eigen::VectorXd probabilities; // aligned with dict.models
    bool underflow = false;
};

/// p(c | q) proportional to prior_c N(q; centroid_c, cov_c), normalized in
/// log space.
inline Posterior gmm_posterior(const Eigen::VectorXd& query, const ConceptDictionary& dict) {
    if (query.size() != dict.dim) throw invalid_argument("gmm_posterior: dimension mismatch");
    if (dict.models.empty()) throw invalid_argument("gmm_posterior: empty dictionary");
    const auto c = static_cast<Eigen::Index>(dict.models.size());
    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    Eigen::VectorXd logp(c);
    for (Eigen::Index i = 0; i < c; ++i) {
        const auto& m = dict.models[static_cast<std::size_t>(i)];
        const Eigen::VectorXd z = m.cholesky_lower.triangularView<Eigen::Lower>().solve(query - m.centroid);
        logp(i) = std::log(m.prior) - 0.5 * (z.squaredNorm() + m.log_det + static_cast<double>(dict.dim) * log_two_pi);
    }
    Posterior out;
    const double top = logp.maxCoeff();
    if (!std::isfinite(top)) {
        out.probabilities = Eigen::VectorXd::Constant(c, 1.0 / static_cast<double>(c));
        out.underflow = true;
        return out;
    }
    out.probabilities = (logp.array() - top).exp().matrix();
    out.probabilities /= out.probabilities.sum();
    return out;
}

/// Debug dump of a dictionary ("FCD1"): per class the label, cov source,
/// prior, exemplar count, then centroid, exemplars, covariance and precision
/// as little-endian f64.
inline void dump_dictionary(const ConceptDictionary& dict, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.raw("FCD1");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(dict.dim));
    w.u32(static_cast<std::uint32_t>(dict.models.size()));
    w.f64(dict.shrinkage.lambda);
    auto put = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    };
    for (const auto& m : dict.models) {
        w.u32(static_cast<std::uint32_t>(m.class_label));
        w.u32(static_cast<std::uint32_t>(m.cov_source));
        w.f64(m.prior);
        w.u32(static_cast<std::uint32_t>(m.exemplars.rows()));
        put(m.centroid);
        put(m.exemplars);
        put(m.covariance);
        put(m.precision);
    }
    io::write_file(path, w.bytes());
}

} // namespace manifold_probe
