#pragma once

// Episode sampling. Every draw comes from one xoshiro256** stream seeded per
// episode, in a fixed order:
//   1. classes: partial Fisher-Yates over ascending class ids, first `way` kept
//   2. per sampled class, in episode order: partial Fisher-Yates over that
//      class's original items (ascending item_id), first `shot` are support,
//      the next `query_per_class` are queries.

#include "manifold_probe/embedding_store.hpp"
#include "manifold_probe/error.hpp"
#include "manifold_probe/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace manifold_probe {

/// Per-class item lookup over an EmbeddingSet's records.
class SetIndex {
public:
    struct Item {
        std::uint64_t item_id = 0;
        std::size_t original_row = 0;
        std::vector<std::size_t> variant_rows; // variant_id >= 1, ascending
    };

    explicit SetIndex(const EmbeddingSet& set) : class_count_(set.header.class_count), items_(class_count_) {
        // Records are sorted by (class, item, variant), so items group up.
        for (std::size_t row = 0; row < set.records.size(); ++row) {
            const auto& r = set.records[row];
            auto& items = items_[r.class_label];
            if (r.variant_id == 0) {
                items.push_back(Item{r.item_id, row, {}});
            } else if (!items.empty() && items.back().item_id == r.item_id) {
                items.back().variant_rows.push_back(row);
            }
        }
        variant_ids_.reserve(set.records.size());
        item_ids_.reserve(set.records.size());
        for (const auto& r : set.records) {
            variant_ids_.push_back(r.variant_id);
            item_ids_.push_back(r.item_id);
        }
    }

    std::uint32_t class_count() const noexcept { return class_count_; }
    const std::vector<Item>& items(std::uint32_t class_label) const { return items_.at(class_label); }
    std::uint16_t variant_id(std::size_t row) const { return variant_ids_.at(row); }
    std::uint64_t item_id(std::size_t row) const { return item_ids_.at(row); }

private:
    std::uint32_t class_count_;
    std::vector<std::vector<Item>> items_;
    std::vector<std::uint16_t> variant_ids_;
    std::vector<std::uint64_t> item_ids_;
};

struct EpisodeRow {
    std::size_t row = 0; // index into EmbeddingSet::records
    int label = 0;       // episode-local class, 0..way-1
    std::uint64_t item_id = 0;
    std::uint16_t variant_id = 0;

    bool operator==(const EpisodeRow&) const = default;
};

struct Episode {
    std::uint64_t index = 0;
    std::uint64_t seed = 0;
    std::uint32_t way = 0;
    std::uint32_t shot = 0;
    std::uint32_t query_per_class = 0; // characterization: the base share, some classes get one more
    std::vector<std::uint32_t> class_map;
    std::vector<EpisodeRow> support;
    std::vector<EpisodeRow> query;

    bool operator==(const Episode&) const = default;
};

struct SamplerConfig {
    std::uint32_t way = 5;
    std::uint32_t shot = 5;
    std::uint32_t query_per_class = 15;
    bool include_variants = true;
    std::uint64_t master_seed = 0;
    std::uint32_t episode_count = 600;

    void validate() const {
        if (way < 2) throw invalid_argument("sampler: way must be >= 2");
        if (shot < 1) throw invalid_argument("sampler: shot must be >= 1");
        if (query_per_class < 1) throw invalid_argument("sampler: query_per_class must be >= 1");
        if (episode_count < 1) throw invalid_argument("sampler: episode_count must be >= 1");
    }

    bool operator==(const SamplerConfig&) const = default;
};

namespace detail {

inline void append_support(const SetIndex& index, const SetIndex::Item& item, int label, bool variants,
                           std::vector<EpisodeRow>& out) {
    out.push_back({item.original_row, label, item.item_id, 0});
    if (variants)
        for (std::size_t row : item.variant_rows) out.push_back({row, label, item.item_id, index.variant_id(row)});
}

} // namespace detail

inline Episode sample_episode(const SetIndex& index, const SamplerConfig& config, std::uint64_t episode_index) {
    config.validate();
    Episode ep;
    ep.index = episode_index;
    ep.seed = derive_episode_seed(config.master_seed, episode_index);
    ep.way = config.way;
    ep.shot = config.shot;
    ep.query_per_class = config.query_per_class;
    if (index.class_count() < config.way)
        throw data_error("insufficient classes: need " + std::to_string(config.way) + ", dataset has " +
                         std::to_string(index.class_count()));

    Xoshiro256 rng(ep.seed);
    std::vector<std::uint32_t> classes(index.class_count());
    for (std::uint32_t c = 0; c < classes.size(); ++c) classes[c] = c;
    partial_shuffle(std::span(classes), config.way, rng);
    ep.class_map.assign(classes.begin(), classes.begin() + config.way);

    const std::size_t needed = static_cast<std::size_t>(config.shot) + config.query_per_class;
    for (std::uint32_t local = 0; local < config.way; ++local) {
        const std::uint32_t cls = ep.class_map[local];
        std::vector<SetIndex::Item> items = index.items(cls);
        if (items.size() < needed)
            throw data_error("insufficient images in class " + std::to_string(cls) + ": need " +
                             std::to_string(needed) + ", have " + std::to_string(items.size()));
        partial_shuffle(std::span(items), needed, rng);
        for (std::size_t i = 0; i < config.shot; ++i)
            detail::append_support(index, items[i], static_cast<int>(local), config.include_variants, ep.support);
        for (std::size_t i = config.shot; i < needed; ++i)
            ep.query.push_back({items[i].original_row, static_cast<int>(local), items[i].item_id, 0});
    }
    return ep;
}

inline Episode sample_episode(const EmbeddingSet& set, const SamplerConfig& config, std::uint64_t episode_index) {
    return sample_episode(SetIndex(set), config, episode_index);
}

/// Many-way split used for layer characterization.
struct CharacterizationConfig {
    std::uint32_t support_per_class = 64;
    std::uint32_t query_count = 300;
    bool queries_per_class = false; // false: query_count is a total spread evenly over classes
    std::optional<std::uint32_t> class_subsample;
    bool include_variants = false;
    std::uint64_t seed = 0;

    bool operator==(const CharacterizationConfig&) const = default;
};

/// Draw order: class subsample (if any), then which classes receive the
/// remainder queries, then per class (ascending id) a partial shuffle of its
/// originals.
inline Episode sample_characterization_split(const SetIndex& index, const CharacterizationConfig& config) {
    if (config.support_per_class < 1) throw invalid_argument("characterization: support_per_class must be >= 1");
    if (config.query_count < 1) throw invalid_argument("characterization: query count must be >= 1");
    Xoshiro256 rng(config.seed);

    std::vector<std::uint32_t> classes(index.class_count());
    for (std::uint32_t c = 0; c < classes.size(); ++c) classes[c] = c;
    if (config.class_subsample) {
        const auto s = *config.class_subsample;
        if (s < 2 || s > classes.size())
            throw data_error("class subsample " + std::to_string(s) + " outside [2, " +
                             std::to_string(classes.size()) + "]");
        partial_shuffle(std::span(classes), s, rng);
        classes.resize(s);
        std::sort(classes.begin(), classes.end());
    }
    const auto way = static_cast<std::uint32_t>(classes.size());

    std::vector<std::uint32_t> share(way, config.query_count);
    if (!config.queries_per_class) {
        const std::uint32_t base = config.query_count / way;
        const std::uint32_t extra = config.query_count % way;
        std::fill(share.begin(), share.end(), base);
        std::vector<std::uint32_t> order(way);
        for (std::uint32_t i = 0; i < way; ++i) order[i] = i;
        partial_shuffle(std::span(order), extra, rng);
        for (std::uint32_t i = 0; i < extra; ++i) ++share[order[i]];
    }

    Episode ep;
    ep.index = 0;
    ep.seed = config.seed;
    ep.way = way;
    ep.shot = config.support_per_class;
    ep.query_per_class = config.queries_per_class ? config.query_count : config.query_count / way;
    ep.class_map = classes;
    for (std::uint32_t local = 0; local < way; ++local) {
        std::vector<SetIndex::Item> items = index.items(classes[local]);
        const std::size_t needed = static_cast<std::size_t>(config.support_per_class) + share[local];
        if (items.size() < needed)
            throw data_error("insufficient data in class " + std::to_string(classes[local]) + ": need " +
                             std::to_string(needed) + ", have " + std::to_string(items.size()));
        partial_shuffle(std::span(items), needed, rng);
        for (std::size_t i = 0; i < config.support_per_class; ++i)
            detail::append_support(index, items[i], static_cast<int>(local), config.include_variants, ep.support);
        for (std::size_t i = config.support_per_class; i < needed; ++i)
            ep.query.push_back({items[i].original_row, static_cast<int>(local), items[i].item_id, 0});
    }
    return ep;
}

inline Episode sample_characterization_split(const EmbeddingSet& set, const CharacterizationConfig& config) {
    return sample_characterization_split(SetIndex(set), config);
}

/// Text dump for cross-implementation comparison.
inline std::string dump_episode(const Episode& ep) {
    std::ostringstream out;
    out << "episode " << ep.index << "\n";
    out << "seed " << ep.seed << "\n";
    out << "way " << ep.way << "\n";
    out << "shot " << ep.shot << "\n";
    out << "query_per_class " << ep.query_per_class << "\n";
    out << "class_map";
    for (auto c : ep.class_map) out << ' ' << c;
    out << "\n";
    for (const auto& r : ep.support) out << "support " << r.label << ' ' << r.item_id << ' ' << r.variant_id << "\n";
    for (const auto& r : ep.query) out << "query " << r.label << ' ' << r.item_id << ' ' << r.variant_id << "\n";
    return out.str();
}

} // namespace manifold_probe
