#pragma once

// Experimental protocols: episodic few-shot evaluation, many-way layer
// characterization, and PCA dimension sweeps.

#include "manifold_probe/concept.hpp"
#include "manifold_probe/embedding_store.hpp"
#include "manifold_probe/episodes.hpp"
#include "manifold_probe/error.hpp"
#include "manifold_probe/manifest.hpp"
#include "manifold_probe/reduction.hpp"

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace manifold_probe {

enum class ReductionKind { raw, pca, ica };
enum class ClassifierKind { knn, centroid };

inline const char* to_string(ReductionKind k) {
    switch (k) {
    case ReductionKind::raw: return "raw";
    case ReductionKind::pca: return "pca";
    case ReductionKind::ica: return "ica";
    }
    return "?";
}

inline ReductionKind parse_reduction(const std::string& s) {
    if (s == "raw") return ReductionKind::raw;
    if (s == "pca") return ReductionKind::pca;
    if (s == "ica") return ReductionKind::ica;
    throw invalid_argument("unknown reduction '" + s + "'");
}

inline const char* to_string(ClassifierKind k) { return k == ClassifierKind::knn ? "knn" : "centroid"; }

inline ClassifierKind parse_classifier(const std::string& s) {
    if (s == "knn") return ClassifierKind::knn;
    if (s == "centroid") return ClassifierKind::centroid;
    throw invalid_argument("unknown classifier '" + s + "'");
}

struct ReductionSpec {
    ReductionKind kind = ReductionKind::raw;
    std::uint32_t output_dim = 0; // ignored for raw
    FitConfig ica;

    bool operator==(const ReductionSpec&) const = default;
};

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::knn;
    std::uint32_t k = 5;

    bool operator==(const ClassifierSpec&) const = default;
};

struct PipelineConfig {
    std::uint16_t layer_id = 0;
    ReductionSpec reduction;
    Metric metric = Metric::mahalanobis;
    ClassifierSpec classifier;
    ShrinkageConfig shrinkage;
    VariantUsage variants;
    SamplerConfig sampler;

    void validate() const {
        if (reduction.kind != ReductionKind::raw && reduction.output_dim < 1)
            throw invalid_argument("pipeline: output_dim must be >= 1 for pca/ica");
        if (classifier.kind == ClassifierKind::knn && classifier.k < 1)
            throw invalid_argument("pipeline: knn k must be >= 1");
        if (reduction.kind == ReductionKind::ica) reduction.ica.validate();
        shrinkage.validate();
        sampler.validate();
    }

    /// Canonical one-line text of every field that affects results.
    std::string fingerprint() const {
        std::ostringstream out;
        out << "layer=" << layer_id << ";reduce=" << to_string(reduction.kind);
        if (reduction.kind != ReductionKind::raw) out << ";dim=" << reduction.output_dim;
        if (reduction.kind == ReductionKind::ica)
            out << ";ica_contrast=" << to_string(reduction.ica.contrast) << ";ica_tol=" << reduction.ica.tolerance
                << ";ica_max_iter=" << reduction.ica.max_iterations << ";ica_seed=" << reduction.ica.seed;
        out << ";metric=" << to_string(metric) << ";classifier=" << to_string(classifier.kind);
        if (classifier.kind == ClassifierKind::knn) out << ";k=" << classifier.k;
        out << ";lambda=" << shrinkage.lambda << ";pooled_min=" << shrinkage.pooled_fallback_threshold
            << ";identity_min=" << shrinkage.identity_fallback_threshold
            << ";variant_exemplars=" << variants.as_exemplars << ";variant_covariance=" << variants.in_covariance
            << ";way=" << sampler.way << ";shot=" << sampler.shot << ";query=" << sampler.query_per_class
            << ";variants=" << sampler.include_variants << ";episodes=" << sampler.episode_count
            << ";seed=" << sampler.master_seed;
        return out.str();
    }
};

struct EpisodeResult {
    std::uint64_t episode_index = 0;
    std::uint32_t correct = 0;
    std::uint32_t total = 0;
    double accuracy = 0.0;

    bool operator==(const EpisodeResult&) const = default;
};

/// Accuracies are fractions in [0, 1]; reports render them as percent.
struct EvalSummary {
    double mean_accuracy = 0.0;
    double ci_halfwidth_95 = 0.0;
    std::vector<EpisodeResult> per_episode;
    std::string config_fingerprint;
    double wall_time_seconds = 0.0;
};

/// Normal-approximation interval: mean and z * s / sqrt(n), s the sample
/// standard deviation.
inline std::pair<double, double> confidence_interval(std::span<const double> values, double level = 0.95) {
    if (values.size() < 2) throw invalid_argument("confidence_interval: need at least 2 values");
    if (!(level > 0 && level < 1)) throw invalid_argument("confidence_interval: level must lie in (0, 1)");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
    return {mean, z * sd / std::sqrt(n)};
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = hardware
/// concurrency). The first exception by index is rethrown.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline LinearProjector fit_projector(const Eigen::MatrixXd& train_features, const ReductionSpec& spec) {
    switch (spec.kind) {
    case ReductionKind::raw: return LinearProjector::identity(train_features.cols());
    case ReductionKind::pca: return fit_pca(train_features, spec.output_dim);
    case ReductionKind::ica: return fit_ica(train_features, spec.output_dim, spec.ica);
    }
    throw invalid_argument("unknown reduction");
}

/// Projectors keyed by (embedding content hash, reduction spec), stored under
/// the directory named by MANIFOLD_PROBE_CACHE. Without that variable the
/// cache is a pass-through.
class ProjectorCache {
public:
    ProjectorCache() = default;
    explicit ProjectorCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static ProjectorCache from_env() {
        const char* dir = std::getenv("MANIFOLD_PROBE_CACHE");
        if (dir == nullptr || *dir == '\0') return {};
        return ProjectorCache(dir);
    }

    bool enabled() const noexcept { return dir_.has_value(); }

    static std::uint64_t content_hash(const EmbeddingSet& set) {
        const auto bytes = encode_embedding_file(set.header, set.records);
        return io::fnv1a(bytes.data(), bytes.size());
    }

    LinearProjector get_or_fit(const EmbeddingSet& train, const Eigen::MatrixXd& train_features,
                               const ReductionSpec& spec) const {
        if (spec.kind == ReductionKind::raw || !dir_) return fit_projector(train_features, spec);
        std::ostringstream key;
        key << to_string(spec.kind) << '-' << spec.output_dim;
        if (spec.kind == ReductionKind::ica)
            key << '-' << to_string(spec.ica.contrast) << '-' << spec.ica.max_iterations << '-' << spec.ica.tolerance
                << '-' << spec.ica.seed;
        std::ostringstream name;
        name << std::hex << std::setw(16) << std::setfill('0') << content_hash(train) << '-' << key.str() << ".fpj";
        const auto path = *dir_ / name.str();
        if (std::filesystem::exists(path)) return read_projector(path);
        auto p = fit_projector(train_features, spec);
        std::filesystem::create_directories(*dir_);
        const auto tmp = path.string() + ".tmp";
        write_projector(p, tmp);
        std::filesystem::rename(tmp, path);
        return p;
    }

private:
    std::optional<std::filesystem::path> dir_;
};

namespace detail {

inline LabeledVectors gather_support(const Episode& ep, const Eigen::MatrixXd& features) {
    LabeledVectors s;
    s.vectors.resize(static_cast<Eigen::Index>(ep.support.size()), features.cols());
    s.labels.reserve(ep.support.size());
    s.is_variant.reserve(ep.support.size());
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
        s.vectors.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(ep.support[i].row));
        s.labels.push_back(ep.support[i].label);
        s.is_variant.push_back(ep.support[i].variant_id != 0);
    }
    return s;
}

inline std::pair<std::uint32_t, std::uint32_t> classify_queries(const Episode& ep, const Eigen::MatrixXd& features,
                                                               const ConceptDictionary& dict, Metric metric,
                                                               const ClassifierSpec& classifier) {
    Eigen::MatrixXd queries(static_cast<Eigen::Index>(ep.query.size()), features.cols());
    for (std::size_t i = 0; i < ep.query.size(); ++i)
        queries.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(ep.query[i].row));
    const auto mode = classifier.kind == ClassifierKind::centroid ? ScoreMode::centroid : ScoreMode::exemplar;
    const DistanceTable table = pairwise_distances(queries, dict, metric, mode);
    // Row-major copy so each query's distances are contiguous.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = table.distances;
    const auto width = static_cast<std::size_t>(rows.cols());
    std::uint32_t correct = 0;
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
        const std::span<const double> row(rows.data() + i * width, width);
        const int predicted = classifier.kind == ClassifierKind::knn
                                  ? classify_knn(row, table.labels, std::min<std::size_t>(classifier.k, width))
                                  : classify_centroid(row, table.labels);
        if (predicted == ep.query[i].label) ++correct;
    }
    return {correct, static_cast<std::uint32_t>(ep.query.size())};
}

} // namespace detail

/// Episode over precomputed (already pooled and projected) features, one row
/// per EmbeddingSet record.
inline EpisodeResult run_episode(const Episode& episode, const Eigen::MatrixXd& features, const PipelineConfig& config) {
    if (episode.query.empty()) throw invalid_argument("run_episode: episode has no queries");
    const ConceptDictionary dict = build_dictionary(detail::gather_support(episode, features), config.shrinkage,
                                                    config.variants);
    const auto [correct, total] = detail::classify_queries(episode, features, dict, config.metric, config.classifier);
    return {episode.index, correct, total, static_cast<double>(correct) / static_cast<double>(total)};
}

inline EpisodeResult run_episode(const Episode& episode, const EmbeddingSet& set, const LinearProjector& projector,
                                 const PipelineConfig& config) {
    return run_episode(episode, project_rows(projector, feature_matrix(set)), config);
}

inline EvalSummary summarize(std::vector<EpisodeResult> results, std::string fingerprint) {
    EvalSummary s;
    s.per_episode = std::move(results);
    s.config_fingerprint = std::move(fingerprint);
    std::vector<double> acc;
    acc.reserve(s.per_episode.size());
    for (const auto& r : s.per_episode) acc.push_back(r.accuracy);
    if (acc.size() >= 2) {
        std::tie(s.mean_accuracy, s.ci_halfwidth_95) = confidence_interval(acc);
    } else if (acc.size() == 1) {
        s.mean_accuracy = acc.front();
    }
    return s;
}

/// `episode_count` episodes from derived seeds, evaluated in parallel and
/// reduced in episode order.
inline EvalSummary run_fewshot_eval(const EmbeddingSet& set, const LinearProjector& projector,
                                    const PipelineConfig& config, unsigned threads = 0) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const SetIndex index(set);
    const Eigen::MatrixXd features = project_rows(projector, feature_matrix(set));
    std::vector<EpisodeResult> results(config.sampler.episode_count);
    parallel_for(results.size(), threads, [&](std::size_t i) {
        const Episode ep = sample_episode(index, config.sampler, i);
        results[i] = run_episode(ep, features, config);
    });
    EvalSummary s = summarize(std::move(results), config.fingerprint());
    s.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
}

struct CharacterizationParams {
    CharacterizationConfig split;
    std::uint32_t k = 15;
    Metric metric = Metric::mahalanobis;
    ShrinkageConfig shrinkage;
    VariantUsage variants;
    std::vector<std::uint16_t> layers; // empty: every layer in the manifest
};

struct LayerAccuracy {
    std::uint16_t layer_id = 0;
    std::uint32_t dim = 0; // 0 = raw
    double accuracy = 0.0;
    std::uint32_t correct = 0;
    std::uint32_t total = 0;

    bool operator==(const LayerAccuracy&) const = default;
};

/// Many-way split, dictionary over all support, kNN over every query.
inline LayerAccuracy characterize_features(const SetIndex& index, const Eigen::MatrixXd& features,
                                           const CharacterizationParams& params) {
    const Episode ep = sample_characterization_split(index, params.split);
    const ConceptDictionary dict =
        build_dictionary(detail::gather_support(ep, features), params.shrinkage, params.variants);
    const auto [correct, total] =
        detail::classify_queries(ep, features, dict, params.metric, {ClassifierKind::knn, params.k});
    LayerAccuracy out;
    out.correct = correct;
    out.total = total;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    return out;
}

namespace detail {

inline std::vector<std::uint16_t> selected_layers(const DatasetManifest& manifest,
                                                  const std::vector<std::uint16_t>& wanted) {
    if (wanted.empty()) return manifest.layers();
    std::vector<std::uint16_t> layers = wanted;
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    for (auto l : layers)
        if (!manifest.layer_files.count(l)) throw data_error("missing layer file for layer " + std::to_string(l));
    return layers;
}

} // namespace detail

/// Raw-feature accuracy per layer, ascending layer id. Every layer uses the
/// same split seed, so all layers see the same support and query items.
inline std::vector<LayerAccuracy> run_characterization(const DatasetManifest& manifest,
                                                       const CharacterizationParams& params, unsigned threads = 0) {
    const auto layers = detail::selected_layers(manifest, params.layers);
    std::vector<LayerAccuracy> out(layers.size());
    parallel_for(layers.size(), threads, [&](std::size_t i) {
        const EmbeddingSet set = read_embedding_file(manifest.resolve(layers[i]));
        const SetIndex index(set);
        out[i] = characterize_features(index, feature_matrix(set), params);
        out[i].layer_id = layers[i];
    });
    return out;
}

/// Grid of (layer, dim) accuracies with a PCA projector fit per layer on that
/// layer's file. dim 0 in `dims` means raw features.
inline std::vector<LayerAccuracy> run_dim_sweep(const DatasetManifest& manifest, const std::vector<std::uint16_t>& layers,
                                                const std::vector<std::uint32_t>& dims,
                                                const CharacterizationParams& params,
                                                const ProjectorCache& cache = {}, unsigned threads = 0) {
    if (dims.empty()) throw invalid_argument("dim sweep: no dimensions given");
    const auto chosen = detail::selected_layers(manifest, layers);
    std::vector<LayerAccuracy> out(chosen.size() * dims.size());
    parallel_for(chosen.size(), threads, [&](std::size_t li) {
        const EmbeddingSet set = read_embedding_file(manifest.resolve(chosen[li]));
        const SetIndex index(set);
        const Eigen::MatrixXd raw = feature_matrix(set);
        for (std::size_t di = 0; di < dims.size(); ++di) {
            ReductionSpec spec;
            spec.kind = dims[di] == 0 ? ReductionKind::raw : ReductionKind::pca;
            spec.output_dim = dims[di];
            const LinearProjector p = cache.get_or_fit(set, raw, spec);
            auto& cell = out[li * dims.size() + di];
            cell = characterize_features(index, project_rows(p, raw), params);
            cell.layer_id = chosen[li];
            cell.dim = dims[di];
        }
    });
    return out;
}

} // namespace manifold_probe
