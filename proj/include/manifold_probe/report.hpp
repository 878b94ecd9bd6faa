#pragma once

// Comparison tables in the layout of the published result tables: method
// rows, dataset/shot columns, cells "AA.AA ± C.CC" in percent.

#include "manifold_probe/error.hpp"
#include "manifold_probe/harness.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace manifold_probe {

/// A finished evaluation together with where it came from.
struct SummaryRecord {
    std::string dataset;
    PipelineConfig config;
    EvalSummary summary;
};

/// Rounds to `decimals` places, ties to even, judged on the shortest decimal
/// representation of `value` (so 96.505 is a tie even though its binary value
/// is not exactly that).
inline std::string format_fixed_half_even(double value, int decimals) {
    char buf[400];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
    std::string s(buf, res.ptr);
    bool negative = false;
    if (!s.empty() && s.front() == '-') {
        negative = true;
        s.erase(0, 1);
    }
    const auto dot = s.find('.');
    std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
    if (static_cast<int>(frac.size()) <= decimals) {
        frac.append(static_cast<std::size_t>(decimals) - frac.size(), '0');
    } else {
        const char next = frac[static_cast<std::size_t>(decimals)];
        const bool rest_nonzero =
            frac.find_first_not_of('0', static_cast<std::size_t>(decimals) + 1) != std::string::npos;
        frac.resize(static_cast<std::size_t>(decimals));
        std::string digits = whole + frac;
        const bool last_odd = (digits.back() - '0') % 2 == 1;
        const bool up = next > '5' || (next == '5' && (rest_nonzero || last_odd));
        if (up) {
            int i = static_cast<int>(digits.size()) - 1;
            while (i >= 0 && digits[static_cast<std::size_t>(i)] == '9') digits[static_cast<std::size_t>(i--)] = '0';
            if (i < 0) digits.insert(digits.begin(), '1');
            else ++digits[static_cast<std::size_t>(i)];
        }
        whole = digits.substr(0, digits.size() - static_cast<std::size_t>(decimals));
        frac = digits.substr(digits.size() - static_cast<std::size_t>(decimals));
    }
    std::string out = whole;
    if (decimals > 0) out += "." + frac;
    if (negative && out.find_first_not_of("0.") != std::string::npos) out.insert(out.begin(), '-');
    return out;
}

/// Fractions in, "96.51 ± 0.24" out.
inline std::string format_accuracy_cell(double mean, double halfwidth) {
    return format_fixed_half_even(100.0 * mean, 2) + " ± " + format_fixed_half_even(100.0 * halfwidth, 2);
}

/// Fingerprint of the fields that identify a method row (everything except
/// dataset, layer, shot, and sampling).
inline std::string method_key(const PipelineConfig& c) {
    std::ostringstream out;
    out << "reduce=" << to_string(c.reduction.kind);
    if (c.reduction.kind != ReductionKind::raw) out << ";dim=" << c.reduction.output_dim;
    out << ";metric=" << to_string(c.metric) << ";classifier=" << to_string(c.classifier.kind);
    if (c.classifier.kind == ClassifierKind::knn) out << ";k=" << c.classifier.k;
    out << ";lambda=" << c.shrinkage.lambda << ";variants=" << c.sampler.include_variants;
    return out.str();
}

inline std::string method_label(const PipelineConfig& c) {
    std::string label;
    switch (c.reduction.kind) {
    case ReductionKind::raw: label = "Raw"; break;
    case ReductionKind::pca: label = "PCA " + std::to_string(c.reduction.output_dim); break;
    case ReductionKind::ica: label = "ICA " + std::to_string(c.reduction.output_dim); break;
    }
    if (c.metric != Metric::mahalanobis || c.classifier.kind != ClassifierKind::knn) {
        label += std::string(" (") + to_string(c.metric) + ", " + to_string(c.classifier.kind);
        label += ")";
    }
    return label;
}

struct ReportTable {
    std::vector<std::string> columns;            // "dataset 5w1s"
    std::vector<std::string> row_labels;
    std::vector<std::string> row_keys;
    std::vector<std::vector<std::string>> cells; // "" when absent

    std::string to_csv() const {
        auto quote = [](const std::string& s) {
            if (s.find_first_of(",\"\n") == std::string::npos) return s;
            std::string q = "\"";
            for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            return q + "\"";
        };
        std::ostringstream out;
        out << "method";
        for (const auto& c : columns) out << ',' << quote(c);
        out << "\n";
        for (std::size_t r = 0; r < row_labels.size(); ++r) {
            out << quote(row_labels[r]);
            for (const auto& cell : cells[r]) out << ',' << quote(cell);
            out << "\n";
        }
        return out.str();
    }

    std::string to_text() const {
        // Display width counts code points, so "±" is one column.
        auto width = [](const std::string& s) {
            std::size_t w = 0;
            for (unsigned char ch : s)
                if ((ch & 0xC0) != 0x80) ++w;
            return w;
        };
        std::vector<std::size_t> widths(columns.size() + 1, width("Method"));
        for (const auto& l : row_labels) widths[0] = std::max(widths[0], width(l));
        for (std::size_t c = 0; c < columns.size(); ++c) {
            widths[c + 1] = width(columns[c]);
            for (const auto& row : cells) widths[c + 1] = std::max(widths[c + 1], width(row[c]));
        }
        std::ostringstream out;
        auto pad = [&](const std::string& s, std::size_t w) { out << s << std::string(w - width(s), ' '); };
        pad("Method", widths[0]);
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << "  ";
            pad(columns[c], widths[c + 1]);
        }
        out << "\n";
        for (std::size_t r = 0; r < row_labels.size(); ++r) {
            pad(row_labels[r], widths[0]);
            for (std::size_t c = 0; c < columns.size(); ++c) {
                out << "  ";
                pad(cells[r][c], widths[c + 1]);
            }
            out << "\n";
        }
        return out.str();
    }
};

inline ReportTable generate_report(const std::vector<SummaryRecord>& summaries) {
    if (summaries.empty()) throw invalid_argument("report: no summaries given");

    struct ColumnKey {
        std::string dataset;
        std::uint32_t way, shot;
        auto operator<=>(const ColumnKey&) const = default;
    };
    std::map<ColumnKey, std::size_t> column_index;
    std::map<std::string, std::size_t> row_index;
    for (const auto& s : summaries) {
        column_index.emplace(ColumnKey{s.dataset, s.config.sampler.way, s.config.sampler.shot}, 0);
        row_index.emplace(method_key(s.config), 0);
    }

    ReportTable table;
    for (auto& [key, idx] : column_index) {
        idx = table.columns.size();
        table.columns.push_back(key.dataset + " " + std::to_string(key.way) + "w" + std::to_string(key.shot) + "s");
    }
    for (auto& [key, idx] : row_index) {
        idx = table.row_keys.size();
        table.row_keys.push_back(key);
    }
    table.row_labels.resize(table.row_keys.size());
    table.cells.assign(table.row_keys.size(), std::vector<std::string>(table.columns.size()));
    for (const auto& s : summaries) {
        const auto r = row_index.at(method_key(s.config));
        const auto c = column_index.at(ColumnKey{s.dataset, s.config.sampler.way, s.config.sampler.shot});
        if (!table.cells[r][c].empty())
            throw invalid_argument("report: two summaries for method '" + method_label(s.config) + "' in column " +
                                   table.columns[c]);
        table.row_labels[r] = method_label(s.config);
        table.cells[r][c] = format_accuracy_cell(s.summary.mean_accuracy, s.summary.ci_halfwidth_95);
    }
    return table;
}

} // namespace manifold_probe
