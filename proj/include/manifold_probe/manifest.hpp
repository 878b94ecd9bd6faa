#pragma once

// Dataset manifest: a plain-text sidecar naming one embedding file per layer.
//
//   # comment
//   dataset = cifar_fs
//   split = train
//   backbone = dinov2_vitl14
//   class = apple            (repeated, in label order)
//   layer.22 = cifar_fs_train_l22.feb
//
// Relative layer paths resolve against the manifest's directory. Unknown keys
// are kept verbatim in `extras`.

#include "manifold_probe/embedding_store.hpp"
#include "manifold_probe/error.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace manifold_probe {

struct DatasetManifest {
    std::string dataset_name;
    std::string split;
    std::string backbone_name;
    std::map<std::uint16_t, std::filesystem::path> layer_files;
    std::vector<std::string> class_names;
    std::vector<std::pair<std::string, std::string>> extras;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(std::uint16_t layer) const {
        auto it = layer_files.find(layer);
        if (it == layer_files.end()) throw data_error("manifest has no file for layer " + std::to_string(layer));
        return it->second.is_absolute() ? it->second : base_dir / it->second;
    }

    std::vector<std::uint16_t> layers() const {
        std::vector<std::uint16_t> out;
        for (const auto& [layer, _] : layer_files) out.push_back(layer);
        return out;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

} // namespace detail

inline DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {}) {
    DatasetManifest m;
    m.base_dir = base_dir;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw data_error("manifest line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key == "dataset") {
            m.dataset_name = value;
        } else if (key == "split") {
            m.split = value;
        } else if (key == "backbone") {
            m.backbone_name = value;
        } else if (key == "class") {
            m.class_names.push_back(value);
        } else if (key.rfind("layer.", 0) == 0) {
            unsigned layer = 0;
            const auto digits = std::string_view(key).substr(6);
            const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), layer);
            if (ec != std::errc{} || ptr != digits.data() + digits.size() || layer == 0 || layer > 0xFFFF)
                throw data_error("manifest line " + std::to_string(lineno) + ": bad layer key '" + key + "'");
            if (!m.layer_files.emplace(static_cast<std::uint16_t>(layer), value).second)
                throw data_error("manifest line " + std::to_string(lineno) + ": duplicate layer " +
                                 std::to_string(layer));
        } else {
            m.extras.emplace_back(key, value);
        }
    }
    return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

inline std::string format_manifest(const DatasetManifest& m) {
    std::ostringstream out;
    out << "# manifold-probe dataset manifest\n";
    out << "dataset = " << m.dataset_name << "\n";
    out << "split = " << m.split << "\n";
    out << "backbone = " << m.backbone_name << "\n";
    for (const auto& [k, v] : m.extras) out << k << " = " << v << "\n";
    for (const auto& name : m.class_names) out << "class = " << name << "\n";
    for (const auto& [layer, path] : m.layer_files) out << "layer." << layer << " = " << path.generic_string() << "\n";
    return out.str();
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    io::write_text(path, format_manifest(m));
}

struct LayerCheck {
    std::uint16_t layer_id = 0;
    std::filesystem::path path;
    bool readable = false;
    std::uint32_t class_count = 0;
    std::uint64_t item_count = 0;
    std::uint32_t feature_dim = 0;
    std::uint32_t tokens_per_item = 0;
    std::vector<std::string> problems;
};

struct ValidationReport {
    std::vector<LayerCheck> layers;
    std::vector<std::string> errors; // flattened, prefixed with the layer

    bool ok() const noexcept { return errors.empty(); }
};

/// Reads every layer file and cross-checks them. Never throws for content
/// problems; those land in the report.
inline ValidationReport validate_manifest(const DatasetManifest& manifest) {
    ValidationReport report;
    if (manifest.layer_files.empty()) report.errors.push_back("manifest lists no layer files");

    using Identity = std::tuple<std::uint32_t, std::uint64_t, std::uint16_t>;
    std::optional<std::vector<Identity>> reference_items;
    std::optional<std::uint32_t> reference_classes;
    std::uint16_t reference_layer = 0;

    for (const auto& [layer, rel] : manifest.layer_files) {
        LayerCheck check;
        check.layer_id = layer;
        check.path = manifest.resolve(layer);
        auto flag = [&](const std::string& problem) {
            check.problems.push_back(problem);
            report.errors.push_back("layer " + std::to_string(layer) + ": " + problem);
        };
        if (!std::filesystem::exists(check.path)) {
            flag("missing file " + check.path.string());
            report.layers.push_back(std::move(check));
            continue;
        }
        EmbeddingSet set;
        try {
            set = read_embedding_file(check.path);
        } catch (const Error& e) {
            flag(std::string("unreadable: ") + e.what());
            report.layers.push_back(std::move(check));
            continue;
        }
        check.readable = true;
        check.class_count = set.header.class_count;
        check.item_count = set.header.item_count;
        check.feature_dim = set.header.feature_dim;
        check.tokens_per_item = set.header.tokens_per_item;
        if (set.header.layer_id != layer)
            flag("header layer_id " + std::to_string(set.header.layer_id) + " does not match manifest key");
        if (!manifest.class_names.empty() && manifest.class_names.size() != set.header.class_count)
            flag("class_count " + std::to_string(set.header.class_count) + " but manifest names " +
                 std::to_string(manifest.class_names.size()) + " classes");

        std::vector<Identity> items;
        items.reserve(set.records.size());
        for (const auto& r : set.records) items.emplace_back(r.class_label, r.item_id, r.variant_id);
        if (!reference_classes) {
            reference_classes = set.header.class_count;
            reference_items = std::move(items);
            reference_layer = layer;
        } else {
            if (*reference_classes != set.header.class_count)
                flag("class_count mismatch: " + std::to_string(set.header.class_count) + " vs " +
                     std::to_string(*reference_classes) + " in layer " + std::to_string(reference_layer));
            if (*reference_items != items)
                flag("item set differs from layer " + std::to_string(reference_layer));
        }
        report.layers.push_back(std::move(check));
    }
    return report;
}

} // namespace manifold_probe
