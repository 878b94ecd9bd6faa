#pragma once

// CSV/JSON persistence for evaluation summaries, layer tables and fits.
//   <dataset>_<layer>_<reduction><dim>_<way>w<shot>s.csv   one row per episode
//   <dataset>_<layer>_<reduction><dim>_<way>w<shot>s.json  summary + config

#include "manifold_probe/curvefit.hpp"
#include "manifold_probe/harness.hpp"
#include "manifold_probe/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace manifold_probe {

using nlohmann::json;

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline json to_json(const FitConfig& c) {
    return {{"max_iterations", c.max_iterations},
            {"tolerance", c.tolerance},
            {"contrast", to_string(c.contrast)},
            {"seed", c.seed}};
}

inline FitConfig fit_config_from_json(const json& j) {
    FitConfig c;
    c.max_iterations = j.at("max_iterations").get<std::uint32_t>();
    c.tolerance = j.at("tolerance").get<double>();
    const auto contrast = j.at("contrast").get<std::string>();
    if (contrast == "logcosh") c.contrast = IcaContrast::logcosh;
    else if (contrast == "cube") c.contrast = IcaContrast::cube;
    else throw data_error("unknown ICA contrast '" + contrast + "'");
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json to_json(const ShrinkageConfig& s) {
    return {{"lambda", s.lambda},
            {"pooled_fallback_threshold", s.pooled_fallback_threshold},
            {"identity_fallback_threshold", s.identity_fallback_threshold}};
}

inline ShrinkageConfig shrinkage_from_json(const json& j) {
    return {j.at("lambda").get<double>(), j.at("pooled_fallback_threshold").get<std::size_t>(),
            j.at("identity_fallback_threshold").get<std::size_t>()};
}

inline json to_json(const SamplerConfig& s) {
    return {{"way", s.way},
            {"shot", s.shot},
            {"query_per_class", s.query_per_class},
            {"include_variants", s.include_variants},
            {"master_seed", s.master_seed},
            {"episode_count", s.episode_count}};
}

inline SamplerConfig sampler_from_json(const json& j) {
    SamplerConfig s;
    s.way = j.at("way").get<std::uint32_t>();
    s.shot = j.at("shot").get<std::uint32_t>();
    s.query_per_class = j.at("query_per_class").get<std::uint32_t>();
    s.include_variants = j.at("include_variants").get<bool>();
    s.master_seed = j.at("master_seed").get<std::uint64_t>();
    s.episode_count = j.at("episode_count").get<std::uint32_t>();
    return s;
}

inline json to_json(const PipelineConfig& c) {
    return {{"layer", c.layer_id},
            {"reduction", to_string(c.reduction.kind)},
            {"output_dim", c.reduction.output_dim},
            {"ica", to_json(c.reduction.ica)},
            {"metric", to_string(c.metric)},
            {"classifier", to_string(c.classifier.kind)},
            {"k", c.classifier.k},
            {"shrinkage", to_json(c.shrinkage)},
            {"variant_exemplars", c.variants.as_exemplars},
            {"variant_covariance", c.variants.in_covariance},
            {"sampler", to_json(c.sampler)}};
}

inline PipelineConfig pipeline_from_json(const json& j) {
    PipelineConfig c;
    c.layer_id = j.at("layer").get<std::uint16_t>();
    c.reduction.kind = parse_reduction(j.at("reduction").get<std::string>());
    c.reduction.output_dim = j.at("output_dim").get<std::uint32_t>();
    c.reduction.ica = fit_config_from_json(j.at("ica"));
    c.metric = parse_metric(j.at("metric").get<std::string>());
    c.classifier.kind = parse_classifier(j.at("classifier").get<std::string>());
    c.classifier.k = j.at("k").get<std::uint32_t>();
    c.shrinkage = shrinkage_from_json(j.at("shrinkage"));
    c.variants.as_exemplars = j.at("variant_exemplars").get<bool>();
    c.variants.in_covariance = j.at("variant_covariance").get<bool>();
    c.sampler = sampler_from_json(j.at("sampler"));
    return c;
}

inline std::string artifact_stem(const std::string& dataset, const PipelineConfig& c) {
    std::string reduction = to_string(c.reduction.kind);
    if (c.reduction.kind != ReductionKind::raw) reduction += std::to_string(c.reduction.output_dim);
    return dataset + "_" + std::to_string(c.layer_id) + "_" + reduction + "_" + std::to_string(c.sampler.way) + "w" +
           std::to_string(c.sampler.shot) + "s";
}

inline std::string episodes_csv(const EvalSummary& s) {
    std::ostringstream out;
    out << "episode_index,correct,total,accuracy\n";
    for (const auto& r : s.per_episode)
        out << r.episode_index << ',' << r.correct << ',' << r.total << ',' << format_double(r.accuracy) << "\n";
    return out.str();
}

inline json to_json(const SummaryRecord& rec) {
    json episodes = json::array();
    for (const auto& r : rec.summary.per_episode)
        episodes.push_back({{"episode_index", r.episode_index}, {"correct", r.correct}, {"total", r.total}});
    return {{"dataset", rec.dataset},
            {"mean_accuracy", rec.summary.mean_accuracy},
            {"ci_halfwidth_95", rec.summary.ci_halfwidth_95},
            {"mean_accuracy_percent", 100.0 * rec.summary.mean_accuracy},
            {"ci_halfwidth_95_percent", 100.0 * rec.summary.ci_halfwidth_95},
            {"cell", format_accuracy_cell(rec.summary.mean_accuracy, rec.summary.ci_halfwidth_95)},
            {"episode_count", rec.summary.per_episode.size()},
            {"config_fingerprint", rec.summary.config_fingerprint},
            {"config", to_json(rec.config)},
            {"wall_time_seconds", rec.summary.wall_time_seconds},
            {"per_episode", std::move(episodes)}};
}

/// Per-episode rows are restored from counts, so accuracies and the summary
/// statistics are recomputed exactly as the harness computed them.
inline SummaryRecord summary_from_json(const json& j) {
    SummaryRecord rec;
    rec.dataset = j.at("dataset").get<std::string>();
    rec.config = pipeline_from_json(j.at("config"));
    std::vector<EpisodeResult> results;
    for (const auto& e : j.at("per_episode")) {
        EpisodeResult r;
        r.episode_index = e.at("episode_index").get<std::uint64_t>();
        r.correct = e.at("correct").get<std::uint32_t>();
        r.total = e.at("total").get<std::uint32_t>();
        if (r.total == 0 || r.correct > r.total) throw data_error("bad episode row in summary");
        r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
        results.push_back(r);
    }
    rec.summary = summarize(std::move(results), j.at("config_fingerprint").get<std::string>());
    rec.summary.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    return rec;
}

inline json to_json(const LogisticFit& f) {
    return {{"L", f.params.L},
            {"L_percent", 100.0 * f.params.L},
            {"k", f.params.k},
            {"x0", f.params.x0},
            {"r_squared", f.r_squared},
            {"sse", f.sse},
            {"iterations", f.iterations},
            {"converged", f.converged},
            {"identifiable", f.identifiable},
            {"negative_growth", f.negative_growth}};
}

inline json to_json(const LayerAccuracy& a) {
    return {{"layer", a.layer_id}, {"dim", a.dim}, {"accuracy", a.accuracy}, {"correct", a.correct}, {"total", a.total}};
}

inline std::string layer_table_csv(const std::vector<LayerAccuracy>& rows) {
    std::ostringstream out;
    out << "layer,dim,accuracy,correct,total\n";
    for (const auto& r : rows)
        out << r.layer_id << ',' << r.dim << ',' << format_double(r.accuracy) << ',' << r.correct << ',' << r.total
            << "\n";
    return out.str();
}

/// Long-format plot data: one row per layer with the fitted curve value.
inline std::string layer_curve_csv(const std::string& dataset, const std::vector<LayerAccuracy>& rows,
                                   const std::optional<LogisticFit>& fit) {
    std::ostringstream out;
    out << "dataset,layer,accuracy,fit_value\n";
    for (const auto& r : rows) {
        out << dataset << ',' << r.layer_id << ',' << format_double(r.accuracy) << ',';
        if (fit) out << format_double(fit->params(r.layer_id));
        out << "\n";
    }
    return out.str();
}

} // namespace manifold_probe
