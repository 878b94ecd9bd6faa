#pragma once

#include "manifold_probe/manifold_probe.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using namespace manifold_probe;

/// Random valid embedding set with scattered item ids, optional variants and
/// token-level payloads.
inline EmbeddingSet random_set(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };
    std::normal_distribution<float> normal(0.0f, 3.0f);
    EmbeddingSet s;
    auto& h = s.header;
    h.feature_dim = static_cast<std::uint32_t>(pick(1, 24));
    h.class_count = static_cast<std::uint32_t>(pick(1, 6));
    h.layer_id = static_cast<std::uint16_t>(pick(1, 40));
    h.tokens_per_item = static_cast<std::uint32_t>(pick(0, 3) == 0 ? pick(2, 5) : 1);
    const bool augmented = pick(0, 1) == 1;
    h.flags = augmented ? kFlagAugmented : 0;
    std::uint64_t next_id = static_cast<std::uint64_t>(pick(0, 1000));
    for (std::uint32_t c = 0; c < h.class_count; ++c) {
        const int items = pick(1, 6);
        for (int i = 0; i < items; ++i) {
            next_id += static_cast<std::uint64_t>(pick(1, 50));
            const int variants = augmented ? pick(0, 3) : 0;
            for (int v = 0; v <= variants; ++v) {
                EmbeddingRecord r{next_id, c, static_cast<std::uint16_t>(v), {}};
                r.tokens.resize(h.payload_floats());
                for (auto& x : r.tokens) x = normal(gen);
                s.records.push_back(std::move(r));
            }
        }
    }
    h.item_count = s.records.size();
    return s;
}

/// Fresh per-test directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("manifold_probe_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(gen);
    return m;
}

} // namespace fixtures
