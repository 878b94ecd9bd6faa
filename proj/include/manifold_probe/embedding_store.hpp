#pragma once

// Embedding file format ("FEB1").
//
//   header (34 bytes, little-endian, no padding)
//     magic            4 bytes  "FEB1"
//     format_version   u32      currently 1
//     feature_dim      u32
//     item_count       u64      number of records, variants included
//     class_count      u32
//     layer_id         u16
//     tokens_per_item  u32      1 = pooled, N > 1 = raw tokens
//     flags            u32      bit 0: file contains augmented variants
//   records, sorted by (class_label, item_id, variant_id)
//     item_id          u64
//     class_label      u32
//     variant_id       u16
//     padding          2 zero bytes
//     payload          tokens_per_item * feature_dim f32, row-major

#include "manifold_probe/binary_io.hpp"
#include "manifold_probe/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace manifold_probe {

inline constexpr std::array<char, 4> kEmbeddingMagic{'F', 'E', 'B', '1'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
inline constexpr std::uint32_t kFlagAugmented = 1u << 0;
inline constexpr std::uint32_t kKnownFlags = kFlagAugmented;
inline constexpr std::size_t kHeaderBytes = 34;
inline constexpr std::size_t kRecordPrefixBytes = 16;

struct EmbeddingFileHeader {
    std::array<char, 4> magic = kEmbeddingMagic;
    std::uint32_t format_version = kEmbeddingFormatVersion;
    std::uint32_t feature_dim = 0;
    std::uint64_t item_count = 0;
    std::uint32_t class_count = 0;
    std::uint16_t layer_id = 0;
    std::uint32_t tokens_per_item = 1;
    std::uint32_t flags = 0;

    bool has_variants() const noexcept { return (flags & kFlagAugmented) != 0; }
    std::size_t payload_floats() const noexcept {
        return static_cast<std::size_t>(tokens_per_item) * feature_dim;
    }
    std::size_t record_bytes() const noexcept { return kRecordPrefixBytes + 4 * payload_floats(); }

    bool operator==(const EmbeddingFileHeader&) const = default;
};

struct EmbeddingRecord {
    std::uint64_t item_id = 0;
    std::uint32_t class_label = 0;
    std::uint16_t variant_id = 0;
    std::vector<float> tokens; // tokens_per_item x feature_dim, row-major

    bool operator==(const EmbeddingRecord&) const = default;
};

inline bool record_order(const EmbeddingRecord& a, const EmbeddingRecord& b) noexcept {
    return std::tie(a.class_label, a.item_id, a.variant_id) < std::tie(b.class_label, b.item_id, b.variant_id);
}

/// One (dataset, split, layer) file in memory. Immutable after load.
struct EmbeddingSet {
    EmbeddingFileHeader header;
    std::vector<EmbeddingRecord> records;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return records.size(); }
    std::size_t dim() const noexcept { return header.feature_dim; }

    bool operator==(const EmbeddingSet&) const = default;
};

/// Throws a data error on any header invariant violation.
inline void validate_header(const EmbeddingFileHeader& h) {
    if (h.magic != kEmbeddingMagic)
        throw data_error("bad magic: expected \"FEB1\", got \"" + std::string(h.magic.begin(), h.magic.end()) + "\"");
    if (h.format_version != kEmbeddingFormatVersion)
        throw data_error("unsupported format version " + std::to_string(h.format_version));
    if (h.feature_dim == 0) throw data_error("feature_dim must be > 0");
    if (h.item_count == 0) throw data_error("item_count must be > 0");
    if (h.class_count == 0) throw data_error("class_count must be > 0");
    if (h.layer_id == 0) throw data_error("layer_id must be >= 1");
    if (h.tokens_per_item == 0) throw data_error("tokens_per_item must be >= 1");
    if ((h.flags & ~kKnownFlags) != 0) throw data_error("unknown flag bits set: " + std::to_string(h.flags));
}

namespace detail {

// Checks the record-level invariants shared by reader and writer. Records must
// already be in canonical order.
inline void validate_records(const EmbeddingFileHeader& h, std::span<const EmbeddingRecord> records) {
    if (records.size() != h.item_count)
        throw data_error("record count " + std::to_string(records.size()) + " does not match item_count " +
                         std::to_string(h.item_count));
    std::vector<bool> seen(h.class_count, false);
    std::unordered_map<std::uint64_t, std::uint32_t> item_class;
    item_class.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.tokens.size() != h.payload_floats())
            throw data_error("dimension mismatch in record " + std::to_string(i) + ": expected " +
                             std::to_string(h.payload_floats()) + " floats, got " + std::to_string(r.tokens.size()));
        if (r.class_label >= h.class_count)
            throw data_error("class_label " + std::to_string(r.class_label) + " out of range (class_count " +
                             std::to_string(h.class_count) + ")");
        if (r.variant_id != 0 && !h.has_variants())
            throw data_error("variant_id " + std::to_string(r.variant_id) + " in a file without the augmented flag");
        if (i > 0 && !record_order(records[i - 1], r))
            throw data_error("records not in strictly increasing (class_label, item_id, variant_id) order at record " +
                             std::to_string(i));
        const auto [it, inserted] = item_class.emplace(r.item_id, r.class_label);
        if (!inserted && it->second != r.class_label)
            throw data_error("item_id " + std::to_string(r.item_id) + " appears under two class labels");
        for (float v : r.tokens)
            if (!std::isfinite(v)) throw data_error("non-finite value in record " + std::to_string(i));
        seen[r.class_label] = true;
    }
    // Sorted by class first, so a repeated (item_id, variant_id) within a class
    // is caught by the strict ordering; across classes by item_class.
    for (std::uint32_t c = 0; c < h.class_count; ++c)
        if (!seen[c]) throw data_error("class " + std::to_string(c) + " has no records");
}

} // namespace detail

/// Serializes to the canonical byte image. Records are written in sorted order
/// regardless of input order.
inline std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFileHeader& header,
                                                       std::span<const EmbeddingRecord> records) {
    validate_header(header);
    std::vector<const EmbeddingRecord*> order(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) order[i] = &records[i];
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return record_order(*a, *b); });
    {
        std::vector<EmbeddingRecord> sorted;
        // Validation wants a contiguous sorted view; only copy when needed.
        bool already_sorted = std::is_sorted(records.begin(), records.end(), record_order);
        if (already_sorted) {
            detail::validate_records(header, records);
        } else {
            sorted.reserve(records.size());
            for (auto* r : order) sorted.push_back(*r);
            detail::validate_records(header, sorted);
        }
    }

    io::ByteWriter w;
    w.reserve(kHeaderBytes + records.size() * header.record_bytes());
    w.raw(std::string_view(header.magic.data(), 4));
    w.u32(header.format_version);
    w.u32(header.feature_dim);
    w.u64(header.item_count);
    w.u32(header.class_count);
    w.u16(header.layer_id);
    w.u32(header.tokens_per_item);
    w.u32(header.flags);
    for (auto* r : order) {
        w.u64(r->item_id);
        w.u32(r->class_label);
        w.u16(r->variant_id);
        w.zeros(2);
        for (float v : r->tokens) w.f32(v);
    }
    return w.take();
}

inline void write_embedding_file(const EmbeddingFileHeader& header, std::span<const EmbeddingRecord> records,
                                 const std::filesystem::path& path) {
    io::write_file(path, encode_embedding_file(header, records));
}

inline void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
    write_embedding_file(set.header, set.records, path);
}

inline EmbeddingFileHeader decode_header(io::ByteReader& in) {
    EmbeddingFileHeader h;
    in.require(kHeaderBytes);
    const std::string magic = in.raw(4);
    std::copy(magic.begin(), magic.end(), h.magic.begin());
    h.format_version = in.u32();
    h.feature_dim = in.u32();
    h.item_count = in.u64();
    h.class_count = in.u32();
    h.layer_id = in.u16();
    h.tokens_per_item = in.u32();
    h.flags = in.u32();
    return h;
}

inline EmbeddingSet decode_embedding_file(const std::uint8_t* data, std::size_t size) {
    io::ByteReader in(data, size);
    EmbeddingSet set;
    set.header = decode_header(in);
    const auto& h = set.header;
    validate_header(h);

    // Size check up front so truncation is reported against the whole file.
    const std::size_t record_bytes = h.record_bytes();
    const auto max_records = (std::numeric_limits<std::size_t>::max() - kHeaderBytes) / record_bytes;
    if (h.item_count > max_records) throw data_error("item_count too large for addressable payload");
    const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(h.item_count) * record_bytes;
    if (size < expected)
        throw data_error("truncated payload: expected " + std::to_string(expected) + " bytes, file has " +
                         std::to_string(size));
    if (size > expected)
        throw data_error("trailing bytes: expected " + std::to_string(expected) + " bytes, file has " +
                         std::to_string(size));

    set.records.resize(static_cast<std::size_t>(h.item_count));
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        auto& r = set.records[i];
        r.item_id = in.u64();
        r.class_label = in.u32();
        r.variant_id = in.u16();
        if (in.u16() != 0) throw data_error("non-zero padding in record " + std::to_string(i));
        r.tokens.resize(h.payload_floats());
        for (auto& v : r.tokens) v = in.f32();
    }
    detail::validate_records(h, set.records);
    return set;
}

inline EmbeddingSet decode_embedding_file(const std::vector<std::uint8_t>& bytes) {
    return decode_embedding_file(bytes.data(), bytes.size());
}

inline EmbeddingSet read_embedding_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw data_error("no such file: " + path.string());
    return decode_embedding_file(io::read_file(path));
}

/// Mean over token rows: out[j] = (1/N) sum_i tokens[i][j]. Accumulates in
/// double.
inline std::vector<float> pool_tokens(std::span<const float> tokens, std::size_t rows, std::size_t dim) {
    if (rows == 0 || dim == 0) throw invalid_argument("pool_tokens: empty token matrix");
    if (tokens.size() != rows * dim)
        throw invalid_argument("pool_tokens: expected " + std::to_string(rows * dim) + " values, got " +
                               std::to_string(tokens.size()));
    std::vector<double> acc(dim, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < dim; ++j) acc[j] += tokens[i * dim + j];
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        if (!std::isfinite(acc[j])) throw invalid_argument("pool_tokens: non-finite input");
        out[j] = static_cast<float>(acc[j] / static_cast<double>(rows));
    }
    return out;
}

inline Eigen::VectorXd pool_tokens(const Eigen::MatrixXd& tokens) {
    if (tokens.rows() == 0 || tokens.cols() == 0) throw invalid_argument("pool_tokens: empty token matrix");
    if (!tokens.allFinite()) throw invalid_argument("pool_tokens: non-finite input");
    return tokens.colwise().mean().transpose();
}

/// Token-level set -> pooled set (tokens_per_item = 1). Pooled sets are
/// returned unchanged.
inline EmbeddingSet pool_set(const EmbeddingSet& set) {
    if (set.header.tokens_per_item == 1) return set;
    EmbeddingSet out;
    out.header = set.header;
    out.header.tokens_per_item = 1;
    out.class_names = set.class_names;
    out.records.reserve(set.records.size());
    for (const auto& r : set.records) {
        EmbeddingRecord p{r.item_id, r.class_label, r.variant_id, {}};
        p.tokens = pool_tokens(r.tokens, set.header.tokens_per_item, set.header.feature_dim);
        out.records.push_back(std::move(p));
    }
    return out;
}

/// One pooled row per record, in record order, promoted to double.
inline Eigen::MatrixXd feature_matrix(const EmbeddingSet& set) {
    const auto d = static_cast<Eigen::Index>(set.dim());
    const std::size_t t = set.header.tokens_per_item;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), d);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& r = set.records[i];
        if (t == 1) {
            for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = r.tokens[j];
        } else {
            const auto pooled = pool_tokens(r.tokens, t, set.dim());
            for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = pooled[j];
        }
    }
    return out;
}

} // namespace manifold_probe
