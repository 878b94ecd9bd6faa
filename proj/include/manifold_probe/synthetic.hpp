#pragma once

// Synthetic embedding sets drawn from spherical Gaussian mixtures, for tests,
// demos and protocol sanity checks.

#include "manifold_probe/embedding_store.hpp"
#include "manifold_probe/manifest.hpp"
#include "manifold_probe/rng.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace manifold_probe {

enum class MeanLayout {
    simplex, // class c at separation * e_c (needs classes <= dim); all pairs equidistant
    random   // class means ~ N(0, separation^2 I)
};

struct GmmSpec {
    std::uint32_t classes = 5;
    std::uint32_t items_per_class = 40;
    std::uint32_t dim = 8;
    double separation = 3.0;
    double sigma = 1.0;
    MeanLayout layout = MeanLayout::simplex;
    std::uint16_t variants_per_item = 0;
    double variant_noise = 0.01; // std of the perturbation added to each variant
    std::uint32_t tokens_per_item = 1;
    std::uint16_t layer_id = 1;
    std::uint64_t seed = 0;
};

inline std::vector<std::vector<double>> gmm_means(const GmmSpec& spec) {
    std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
    if (spec.layout == MeanLayout::simplex) {
        if (spec.classes > spec.dim) throw invalid_argument("simplex layout needs classes <= dim");
        for (std::uint32_t c = 0; c < spec.classes; ++c) means[c][c] = spec.separation;
    } else {
        Xoshiro256 rng(splitmix64_mix(spec.seed ^ 0x6D65616E73ULL));
        for (auto& m : means)
            for (auto& v : m) v = spec.separation * rng.normal();
    }
    return means;
}

/// Items get ids c * items_per_class + i. Token-level sets spread each item
/// over `tokens_per_item` rows whose mean is the sampled vector.
inline EmbeddingSet make_gmm_set(const GmmSpec& spec) {
    if (spec.classes == 0 || spec.items_per_class == 0 || spec.dim == 0 || spec.tokens_per_item == 0)
        throw invalid_argument("make_gmm_set: empty specification");
    const auto means = gmm_means(spec);
    Xoshiro256 rng(spec.seed);
    EmbeddingSet set;
    auto& h = set.header;
    h.feature_dim = spec.dim;
    h.class_count = spec.classes;
    h.layer_id = spec.layer_id;
    h.tokens_per_item = spec.tokens_per_item;
    h.flags = spec.variants_per_item > 0 ? kFlagAugmented : 0;
    h.item_count = static_cast<std::uint64_t>(spec.classes) * spec.items_per_class * (1u + spec.variants_per_item);

    auto to_tokens = [&](const std::vector<double>& v) {
        std::vector<float> tokens(static_cast<std::size_t>(spec.tokens_per_item) * spec.dim);
        if (spec.tokens_per_item == 1) {
            for (std::size_t j = 0; j < spec.dim; ++j) tokens[j] = static_cast<float>(v[j]);
            return tokens;
        }
        // Zero-mean token offsets around v.
        std::vector<double> offset_sum(spec.dim, 0.0);
        std::vector<double> offsets(tokens.size());
        for (std::size_t t = 0; t < spec.tokens_per_item; ++t)
            for (std::size_t j = 0; j < spec.dim; ++j) {
                offsets[t * spec.dim + j] = 0.1 * rng.normal();
                offset_sum[j] += offsets[t * spec.dim + j];
            }
        for (std::size_t t = 0; t < spec.tokens_per_item; ++t)
            for (std::size_t j = 0; j < spec.dim; ++j)
                tokens[t * spec.dim + j] = static_cast<float>(
                    v[j] + offsets[t * spec.dim + j] - offset_sum[j] / spec.tokens_per_item);
        return tokens;
    };

    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        for (std::uint32_t i = 0; i < spec.items_per_class; ++i) {
            std::vector<double> x(spec.dim);
            for (std::size_t j = 0; j < spec.dim; ++j) x[j] = means[c][j] + spec.sigma * rng.normal();
            const std::uint64_t item = static_cast<std::uint64_t>(c) * spec.items_per_class + i;
            set.records.push_back({item, c, 0, to_tokens(x)});
            for (std::uint16_t v = 1; v <= spec.variants_per_item; ++v) {
                std::vector<double> y = x;
                for (auto& e : y) e += spec.variant_noise * rng.normal();
                set.records.push_back({item, c, v, to_tokens(y)});
            }
        }
    }
    return set;
}

/// Layer-sweep fixture: layer l carries class separation
///   max_separation / (1 + exp(-growth (l - midpoint)))
/// on the same items, with fresh noise per layer. Writes one file per layer
/// plus `manifest.txt` into `dir`.
struct LayerSweepSpec {
    GmmSpec base;
    std::uint16_t layers = 24;
    double max_separation = 4.0;
    double growth = 0.6;
    double midpoint = 12.0;
    std::string dataset = "synthetic";
};

inline DatasetManifest write_layer_sweep(const LayerSweepSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.dataset_name = spec.dataset;
    m.split = "train";
    m.backbone_name = "synthetic-gmm";
    m.base_dir = dir;
    for (std::uint32_t c = 0; c < spec.base.classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
    for (std::uint16_t l = 1; l <= spec.layers; ++l) {
        GmmSpec g = spec.base;
        g.layer_id = l;
        g.separation = spec.max_separation / (1.0 + std::exp(-spec.growth * (l - spec.midpoint)));
        g.seed = derive_episode_seed(spec.base.seed, l);
        const auto name = spec.dataset + "_l" + std::to_string(l) + ".feb";
        write_embedding_file(make_gmm_set(g), dir / name);
        m.layer_files[l] = name;
    }
    write_manifest(m, dir / "manifest.txt");
    return m;
}

} // namespace manifold_probe
