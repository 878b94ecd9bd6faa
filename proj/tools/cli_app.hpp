#pragma once

// manifold-probe command line. `execute` is the whole program minus main(),
// so tests can drive it in-process.

#include "manifold_probe/manifold_probe.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace manifold_probe::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

/// "1..24", "21,22,23", "1..4,8"
inline std::vector<std::uint32_t> parse_range_list(const std::string& text) {
    std::vector<std::uint32_t> out;
    std::stringstream ss(text);
    std::string part;
    auto number = [&](std::string_view s) {
        std::uint32_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) throw invalid_argument("bad number '" + std::string(s) + "' in '" + text + "'");
        return v;
    };
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(number(part));
        } else {
            const auto lo = number(std::string_view(part).substr(0, dots));
            const auto hi = number(std::string_view(part).substr(dots + 2));
            if (lo > hi) throw invalid_argument("empty range '" + part + "'");
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        }
    }
    if (out.empty()) throw invalid_argument("empty list '" + text + "'");
    return out;
}

inline std::vector<std::uint16_t> parse_layers(const std::string& text) {
    std::vector<std::uint16_t> out;
    for (auto v : parse_range_list(text)) {
        if (v < 1 || v > 0xFFFF) throw invalid_argument("layer id " + std::to_string(v) + " out of range");
        out.push_back(static_cast<std::uint16_t>(v));
    }
    return out;
}

struct Options {
    std::string manifest;
    std::string fit_manifest;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;

    // fewshot
    unsigned layer = 0;
    std::uint32_t way = 5, shot = 5, queries = 15, episodes = 600;
    std::string reduce = "raw";
    std::string dims;
    std::string metric = "mahalanobis";
    std::string classifier = "knn";
    std::uint32_t k = 0; // 0: protocol default (5 few-shot, 15 characterization)
    double lambda = 0.5;
    std::size_t pooled_min = 2, identity_min = 2;
    bool no_variants = false;
    bool variants_not_exemplars = false;
    bool variants_not_covariance = false;
    std::string ica_contrast = "logcosh";
    double ica_tol = 1e-4;
    std::uint32_t ica_max_iter = 400;
    bool dump_episodes = false;

    // characterize / dim-sweep
    std::uint32_t support = 64;
    std::uint32_t char_queries = 300;
    bool queries_per_class = false;
    std::optional<std::uint32_t> class_subsample;
    std::string layers;
    bool include_raw = false;

    // fit-logistic / report / replay
    std::string input;
    std::vector<std::string> inputs;
    std::string run_file;

    // synth
    std::uint32_t synth_classes = 20, synth_items = 80, synth_dim = 16, synth_layers = 24;
    std::uint16_t synth_variants = 0;
    std::uint32_t synth_tokens = 1;
    double synth_separation = 4.0;
    std::string synth_name = "synthetic";
};

class App {
public:
    App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int execute(const std::vector<std::string>& args) {
        CLI::App app{"Training-free few-shot evaluation on frozen embeddings", "manifold-probe"};
        app.set_version_flag("--version", kVersion);
        app.option_defaults()->always_capture_default();
        app.require_subcommand(1);
        Options o;

        auto add_common = [&](CLI::App* sub, bool needs_seed) {
            sub->add_option("--out", o.out, "Output directory")->required();
            sub->add_option("--threads", o.threads, "Worker threads (default: all cores)");
            if (needs_seed) sub->add_option("--seed", o.seed, "Master seed; all randomness derives from it")->required();
        };
        auto add_manifest = [&](CLI::App* sub) {
            sub->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
        };
        auto add_classifier = [&](CLI::App* sub) {
            sub->add_option("--metric", o.metric, "mahalanobis | euclidean | cosine")
                ->check(CLI::IsMember({"mahalanobis", "euclidean", "cosine"}));
            sub->add_option("--k", o.k, "Neighbors for kNN");
            sub->add_option("--lambda", o.lambda, "Covariance shrinkage toward scaled identity")->check(CLI::Range(0.0, 1.0));
            sub->add_option("--pooled-min", o.pooled_min, "Min rows per class for a per-class covariance");
            sub->add_option("--identity-min", o.identity_min, "Min support rows for the pooled covariance");
        };

        auto* ingest = app.add_subcommand("ingest", "Validate a manifest and pool token-level files");
        add_manifest(ingest);
        add_common(ingest, false);

        auto* characterize = app.add_subcommand("characterize", "Many-way raw accuracy per layer + logistic fit");
        add_manifest(characterize);
        add_common(characterize, true);
        add_classifier(characterize);
        characterize->add_option("--support", o.support, "Support images per class");
        characterize->add_option("--queries", o.char_queries, "Query images (total unless --queries-per-class)");
        characterize->add_flag("--queries-per-class", o.queries_per_class);
        characterize->add_option("--class-subsample", o.class_subsample, "Randomly keep this many classes");
        characterize->add_option("--layers", o.layers, "Layers, e.g. 1..24 (default: all in manifest)");

        auto* fewshot = app.add_subcommand("fewshot", "Episodic N-way K-shot evaluation");
        add_manifest(fewshot);
        add_common(fewshot, true);
        add_classifier(fewshot);
        fewshot->add_option("--fit-manifest", o.fit_manifest, "Train-split manifest for fitting PCA/ICA")
            ->check(CLI::ExistingFile);
        fewshot->add_option("--layer", o.layer, "Layer id (default: the manifest's only layer)");
        fewshot->add_option("--way", o.way);
        fewshot->add_option("--shot", o.shot);
        fewshot->add_option("--queries", o.queries, "Queries per class");
        fewshot->add_option("--episodes", o.episodes);
        fewshot->add_option("--reduce", o.reduce, "raw | pca | ica")->check(CLI::IsMember({"raw", "pca", "ica"}));
        fewshot->add_option("--dims", o.dims, "Output dimensions for pca/ica, e.g. 512,256,128");
        fewshot->add_option("--classifier", o.classifier, "knn | centroid")->check(CLI::IsMember({"knn", "centroid"}));
        fewshot->add_flag("--no-variants", o.no_variants, "Ignore augmented variants");
        fewshot->add_flag("--variants-not-exemplars", o.variants_not_exemplars, "Variants feed covariance only");
        fewshot->add_flag("--variants-not-covariance", o.variants_not_covariance, "Variants vote but skip covariance");
        fewshot->add_option("--ica-contrast", o.ica_contrast)->check(CLI::IsMember({"logcosh", "cube"}));
        fewshot->add_option("--ica-tol", o.ica_tol);
        fewshot->add_option("--ica-max-iter", o.ica_max_iter);
        fewshot->add_flag("--dump-episodes", o.dump_episodes, "Write the sampled episodes as text");

        auto* fit = app.add_subcommand("fit-logistic", "Fit a logistic curve to a layer,accuracy CSV");
        fit->add_option("--input", o.input, "CSV with 'layer' and 'accuracy' columns")->required()->check(CLI::ExistingFile);
        add_common(fit, false);

        auto* sweep = app.add_subcommand("dim-sweep", "PCA dimension sweep over selected layers");
        add_manifest(sweep);
        add_common(sweep, true);
        add_classifier(sweep);
        sweep->add_option("--layers", o.layers, "Layers, e.g. 21..23")->required();
        sweep->add_option("--dims", o.dims, "Dimensions, e.g. 512,256,128,64")->required();
        sweep->add_flag("--include-raw", o.include_raw, "Add a raw-feature row per layer");
        sweep->add_option("--support", o.support);
        sweep->add_option("--queries", o.char_queries);
        sweep->add_flag("--queries-per-class", o.queries_per_class);
        sweep->add_option("--class-subsample", o.class_subsample);

        auto* report = app.add_subcommand("report", "Comparison tables from fewshot summaries");
        report->add_option("--inputs", o.inputs, "Summary JSON files or directories")->required()->check(CLI::ExistingPath);
        add_common(report, false);

        auto* synth = app.add_subcommand("synth", "Write a synthetic multi-layer GMM dataset");
        add_common(synth, true);
        synth->add_option("--name", o.synth_name);
        synth->add_option("--classes", o.synth_classes);
        synth->add_option("--items", o.synth_items, "Items per class");
        synth->add_option("--dim", o.synth_dim);
        synth->add_option("--layers", o.synth_layers, "Number of layers");
        synth->add_option("--separation", o.synth_separation, "Class separation at the deepest layers");
        synth->add_option("--variants", o.synth_variants, "Augmented variants per item");
        synth->add_option("--tokens", o.synth_tokens, "Tokens per item (1 = pooled)");

        auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run.json");
        replay->add_option("run", o.run_file, "run.json path")->required()->check(CLI::ExistingFile);

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out_ << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out_ << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            out_ << kVersion << "\n";
            return 0;
        } catch (const CLI::ParseError& e) {
            return fail(ErrorKind::invalid_argument, e.what());
        }

        try {
            if (*replay) return run_replay(o);
            CLI::App* sub = app.get_subcommands().front();
            int code = 0;
            if (sub == ingest) code = run_ingest(o);
            else if (sub == characterize) code = run_characterize(o);
            else if (sub == fewshot) code = run_fewshot(o);
            else if (sub == fit) code = run_fit(o);
            else if (sub == sweep) code = run_sweep(o);
            else if (sub == report) code = run_report(o);
            else if (sub == synth) code = run_synth(o);
            else return fail(ErrorKind::invalid_argument, "unknown subcommand");
            write_run_json(o, sub->get_name(), args);
            return code;
        } catch (const Error& e) {
            return fail(e.kind(), e.what());
        } catch (const nlohmann::json::exception& e) {
            return fail(ErrorKind::data, e.what());
        } catch (const fs::filesystem_error& e) {
            return fail(ErrorKind::data, e.what());
        }
    }

    static int exit_code(ErrorKind kind) {
        switch (kind) {
        case ErrorKind::invalid_argument: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numerical: return 4;
        }
        return 1;
    }

private:
    int fail(ErrorKind kind, const std::string& message) {
        std::string one_line = message;
        for (auto& ch : one_line)
            if (ch == '\n' || ch == '\r') ch = ' ';
        err_ << nlohmann::json{{"error", to_string(kind)}, {"exit", exit_code(kind)}, {"message", one_line}}.dump()
             << "\n";
        return exit_code(kind);
    }

    static nlohmann::json resolved(const Options& o) {
        nlohmann::json j{{"manifest", o.manifest},
                         {"fit_manifest", o.fit_manifest},
                         {"out", o.out},
                         {"threads", o.threads},
                         {"layer", o.layer},
                         {"way", o.way},
                         {"shot", o.shot},
                         {"queries", o.queries},
                         {"episodes", o.episodes},
                         {"reduce", o.reduce},
                         {"dims", o.dims},
                         {"metric", o.metric},
                         {"classifier", o.classifier},
                         {"k", o.k},
                         {"lambda", o.lambda},
                         {"pooled_min", o.pooled_min},
                         {"identity_min", o.identity_min},
                         {"no_variants", o.no_variants},
                         {"variants_not_exemplars", o.variants_not_exemplars},
                         {"variants_not_covariance", o.variants_not_covariance},
                         {"ica_contrast", o.ica_contrast},
                         {"ica_tol", o.ica_tol},
                         {"ica_max_iter", o.ica_max_iter},
                         {"dump_episodes", o.dump_episodes},
                         {"support", o.support},
                         {"characterization_queries", o.char_queries},
                         {"queries_per_class", o.queries_per_class},
                         {"layers", o.layers},
                         {"include_raw", o.include_raw},
                         {"input", o.input},
                         {"inputs", o.inputs},
                         {"synth", {{"name", o.synth_name},
                                    {"classes", o.synth_classes},
                                    {"items", o.synth_items},
                                    {"dim", o.synth_dim},
                                    {"layers", o.synth_layers},
                                    {"separation", o.synth_separation},
                                    {"variants", o.synth_variants},
                                    {"tokens", o.synth_tokens}}}};
        j["seed"] = o.seed ? nlohmann::json(*o.seed) : nlohmann::json(nullptr);
        j["class_subsample"] = o.class_subsample ? nlohmann::json(*o.class_subsample) : nlohmann::json(nullptr);
        return j;
    }

    /// Written after the command succeeds, so failed runs leave no run.json.
    void write_run_json(const Options& o, const std::string& subcommand, const std::vector<std::string>& args) {
        nlohmann::json run{{"tool", "manifold-probe"},
                           {"version", kVersion},
                           {"subcommand", subcommand},
                           {"argv", args},
                           {"resolved", resolved(o)}};
        io::write_text(fs::path(o.out) / "run.json", run.dump(2) + "\n");
    }

    unsigned threads(const Options& o) const {
        return o.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : o.threads;
    }

    static ShrinkageConfig shrinkage(const Options& o) { return {o.lambda, o.pooled_min, o.identity_min}; }

    static CharacterizationParams characterization_params(const Options& o) {
        CharacterizationParams p;
        p.split.support_per_class = o.support;
        p.split.query_count = o.char_queries;
        p.split.queries_per_class = o.queries_per_class;
        p.split.class_subsample = o.class_subsample;
        p.split.seed = *o.seed;
        p.k = o.k == 0 ? 15 : o.k;
        p.metric = parse_metric(o.metric);
        p.shrinkage = shrinkage(o);
        return p;
    }

    int run_ingest(const Options& o) {
        const auto manifest = read_manifest(o.manifest);
        const auto report = validate_manifest(manifest);
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : report.layers)
            layers.push_back({{"layer", l.layer_id},
                              {"path", l.path.string()},
                              {"readable", l.readable},
                              {"class_count", l.class_count},
                              {"item_count", l.item_count},
                              {"feature_dim", l.feature_dim},
                              {"tokens_per_item", l.tokens_per_item},
                              {"problems", l.problems}});
        const fs::path out_dir(o.out);
        io::write_text(out_dir / "validation_report.json",
                       nlohmann::json{{"ok", report.ok()}, {"errors", report.errors}, {"layers", layers}}.dump(2) +
                           "\n");
        if (!report.ok()) throw data_error("manifest validation failed: " + report.errors.front());

        DatasetManifest pooled = manifest;
        pooled.base_dir = out_dir;
        std::size_t converted = 0;
        for (const auto& [layer, _] : manifest.layer_files) {
            const auto path = manifest.resolve(layer);
            const EmbeddingSet set = read_embedding_file(path);
            if (set.header.tokens_per_item == 1) {
                pooled.layer_files[layer] = fs::absolute(path);
                continue;
            }
            const auto name = path.stem().string() + "_pooled.feb";
            write_embedding_file(pool_set(set), out_dir / name);
            pooled.layer_files[layer] = name;
            ++converted;
        }
        write_manifest(pooled, out_dir / "manifest.txt");
        out_ << "validated " << report.layers.size() << " layer files, pooled " << converted << "\n";
        return 0;
    }

    int run_characterize(const Options& o) {
        const auto manifest = read_manifest(o.manifest);
        auto params = characterization_params(o);
        if (!o.layers.empty()) params.layers = parse_layers(o.layers);
        const auto rows = run_characterization(manifest, params, threads(o));

        std::optional<LogisticFit> fit;
        if (rows.size() >= 4) {
            std::vector<double> xs, ys;
            for (const auto& r : rows) {
                xs.push_back(r.layer_id);
                ys.push_back(r.accuracy);
            }
            if (*std::min_element(ys.begin(), ys.end()) != *std::max_element(ys.begin(), ys.end()))
                fit = fit_logistic(xs, ys);
        }
        const fs::path out_dir(o.out);
        const std::string stem = manifest.dataset_name.empty() ? "dataset" : manifest.dataset_name;
        io::write_text(out_dir / (stem + "_characterization.csv"), layer_table_csv(rows));
        io::write_text(out_dir / (stem + "_layer_curve.csv"), layer_curve_csv(stem, rows, fit));
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& r : rows) layers.push_back(to_json(r));
        nlohmann::json summary{{"dataset", stem},
                               {"split", manifest.split},
                               {"support_per_class", params.split.support_per_class},
                               {"queries", params.split.query_count},
                               {"queries_per_class", params.split.queries_per_class},
                               {"k", params.k},
                               {"metric", to_string(params.metric)},
                               {"shrinkage", to_json(params.shrinkage)},
                               {"seed", params.split.seed},
                               {"layers", layers}};
        if (params.split.class_subsample) summary["class_subsample"] = *params.split.class_subsample;
        if (fit) summary["logistic_fit"] = to_json(*fit);
        io::write_text(out_dir / (stem + "_characterization.json"), summary.dump(2) + "\n");

        std::size_t best = 0;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].accuracy > rows[best].accuracy) best = i;
        out_ << "characterized " << rows.size() << " layers; best layer " << rows[best].layer_id << " at "
             << format_fixed_half_even(100.0 * rows[best].accuracy, 2) << "%";
        if (fit) out_ << "; logistic R^2 " << fit->r_squared;
        out_ << "\n";
        return 0;
    }

    int run_fewshot(const Options& o) {
        const auto manifest = read_manifest(o.manifest);
        std::uint16_t layer = static_cast<std::uint16_t>(o.layer);
        if (layer == 0) {
            if (manifest.layer_files.size() != 1)
                throw invalid_argument("--layer is required when the manifest lists several layers");
            layer = manifest.layer_files.begin()->first;
        }
        const EmbeddingSet set = pool_set(read_embedding_file(manifest.resolve(layer)));

        PipelineConfig base;
        base.layer_id = layer;
        base.reduction.kind = parse_reduction(o.reduce);
        base.reduction.ica.contrast = o.ica_contrast == "cube" ? IcaContrast::cube : IcaContrast::logcosh;
        base.reduction.ica.tolerance = o.ica_tol;
        base.reduction.ica.max_iterations = o.ica_max_iter;
        base.reduction.ica.seed = *o.seed;
        base.metric = parse_metric(o.metric);
        base.classifier.kind = parse_classifier(o.classifier);
        base.classifier.k = o.k == 0 ? 5 : o.k;
        base.shrinkage = shrinkage(o);
        base.variants.as_exemplars = !o.variants_not_exemplars;
        base.variants.in_covariance = !o.variants_not_covariance;
        base.sampler = {o.way, o.shot, o.queries, !o.no_variants, *o.seed, o.episodes};

        std::vector<std::uint32_t> dims{0};
        if (base.reduction.kind != ReductionKind::raw) {
            if (o.dims.empty()) throw invalid_argument("--dims is required for --reduce " + o.reduce);
            dims = parse_range_list(o.dims);
        }

        std::optional<EmbeddingSet> train;
        Eigen::MatrixXd train_features;
        if (base.reduction.kind != ReductionKind::raw) {
            if (o.fit_manifest.empty()) {
                err_ << "warning: no --fit-manifest; fitting the projector on the evaluation split\n";
                train = set;
            } else {
                train = pool_set(read_embedding_file(read_manifest(o.fit_manifest).resolve(layer)));
            }
            train_features = feature_matrix(*train);
        }
        const auto cache = ProjectorCache::from_env();
        const fs::path out_dir(o.out);
        const std::string dataset = manifest.dataset_name.empty() ? "dataset" : manifest.dataset_name;

        for (auto dim : dims) {
            PipelineConfig cfg = base;
            cfg.reduction.output_dim = dim;
            cfg.validate();
            const LinearProjector projector = cfg.reduction.kind == ReductionKind::raw
                                                  ? LinearProjector::identity(static_cast<Eigen::Index>(set.dim()))
                                                  : cache.get_or_fit(*train, train_features, cfg.reduction);
            if (projector.kind == ProjectorKind::ica && !projector.converged)
                err_ << "warning: ICA did not converge in " << projector.iterations << " iterations\n";
            SummaryRecord rec{dataset, cfg, run_fewshot_eval(set, projector, cfg, threads(o))};
            const std::string stem = artifact_stem(dataset, cfg);
            io::write_text(out_dir / (stem + ".csv"), episodes_csv(rec.summary));
            io::write_text(out_dir / (stem + ".json"), to_json(rec).dump(2) + "\n");
            if (o.dump_episodes) {
                const SetIndex index(set);
                std::string dump;
                for (std::uint32_t i = 0; i < cfg.sampler.episode_count; ++i)
                    dump += dump_episode(sample_episode(index, cfg.sampler, i));
                io::write_text(out_dir / (stem + "_episodes.txt"), dump);
            }
            out_ << stem << ": " << format_accuracy_cell(rec.summary.mean_accuracy, rec.summary.ci_halfwidth_95)
                 << "\n";
        }
        return 0;
    }

    int run_fit(const Options& o) {
        std::ifstream in(o.input);
        std::string line;
        if (!std::getline(in, line)) throw data_error("empty CSV " + o.input);
        std::vector<std::string> header;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) header.push_back(detail::trim(cell));
        }
        const auto col = [&](const std::string& name) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw data_error("CSV lacks a '" + name + "' column");
            return static_cast<std::size_t>(it - header.begin());
        };
        const auto xcol = col("layer");
        const auto ycol = col("accuracy");
        std::vector<double> xs, ys;
        while (std::getline(in, line)) {
            if (detail::trim(line).empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
            if (cells.size() <= std::max(xcol, ycol)) throw data_error("short CSV row: " + line);
            try {
                xs.push_back(std::stod(cells[xcol]));
                ys.push_back(std::stod(cells[ycol]));
            } catch (const std::exception&) {
                throw data_error("non-numeric CSV row: " + line);
            }
        }
        const LogisticFit fit = fit_logistic(xs, ys);
        if (!fit.converged && fit.identifiable) err_ << "warning: logistic fit did not converge\n";
        if (fit.negative_growth) err_ << "warning: fitted growth rate is negative\n";
        io::write_text(fs::path(o.out) / "logistic_fit.json", to_json(fit).dump(2) + "\n");
        out_ << "L=" << fit.params.L << " k=" << fit.params.k << " x0=" << fit.params.x0 << " R^2=" << fit.r_squared
             << "\n";
        return 0;
    }

    int run_sweep(const Options& o) {
        const auto manifest = read_manifest(o.manifest);
        const auto params = characterization_params(o);
        std::vector<std::uint32_t> dims = parse_range_list(o.dims);
        if (o.include_raw) dims.insert(dims.begin(), 0);
        const auto grid =
            run_dim_sweep(manifest, parse_layers(o.layers), dims, params, ProjectorCache::from_env(), threads(o));
        const std::string stem = manifest.dataset_name.empty() ? "dataset" : manifest.dataset_name;
        io::write_text(fs::path(o.out) / (stem + "_dim_sweep.csv"), layer_table_csv(grid));
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : grid) cells.push_back(to_json(c));
        io::write_text(fs::path(o.out) / (stem + "_dim_sweep.json"),
                       nlohmann::json{{"dataset", stem}, {"seed", params.split.seed}, {"grid", cells}}.dump(2) + "\n");
        out_ << "swept " << grid.size() << " (layer, dim) cells\n";
        return 0;
    }

    int run_report(const Options& o) {
        std::vector<fs::path> files;
        for (const auto& in : o.inputs) {
            if (fs::is_directory(in)) {
                for (const auto& e : fs::directory_iterator(in))
                    if (e.path().extension() == ".json") files.push_back(e.path());
            } else {
                files.emplace_back(in);
            }
        }
        std::sort(files.begin(), files.end());
        std::vector<SummaryRecord> summaries;
        for (const auto& f : files) {
            std::ifstream in(f);
            const auto j = nlohmann::json::parse(in);
            if (!j.is_object() || !j.contains("per_episode") || !j.contains("config")) continue;
            summaries.push_back(summary_from_json(j));
        }
        if (summaries.empty()) throw invalid_argument("report: no summary JSON files among the inputs");
        const ReportTable table = generate_report(summaries);
        io::write_text(fs::path(o.out) / "report.csv", table.to_csv());
        io::write_text(fs::path(o.out) / "report.txt", table.to_text());
        out_ << table.to_text();
        return 0;
    }

    int run_synth(const Options& o) {
        LayerSweepSpec spec;
        spec.dataset = o.synth_name;
        spec.layers = static_cast<std::uint16_t>(o.synth_layers);
        spec.max_separation = o.synth_separation;
        spec.midpoint = 0.5 * (o.synth_layers + 1);
        spec.growth = 12.0 / std::max<double>(o.synth_layers, 1.0);
        spec.base.classes = o.synth_classes;
        spec.base.items_per_class = o.synth_items;
        spec.base.dim = o.synth_dim;
        spec.base.layout = o.synth_classes <= o.synth_dim ? MeanLayout::simplex : MeanLayout::random;
        spec.base.variants_per_item = o.synth_variants;
        spec.base.tokens_per_item = o.synth_tokens;
        spec.base.seed = *o.seed;
        if (spec.layers < 1) throw invalid_argument("--layers must be >= 1");
        write_layer_sweep(spec, o.out);
        out_ << "wrote " << spec.layers << " layer files and manifest.txt to " << o.out << "\n";
        return 0;
    }

    int run_replay(const Options& o) {
        std::ifstream in(o.run_file);
        const auto run = nlohmann::json::parse(in);
        const auto argv = run.at("argv").get<std::vector<std::string>>();
        if (!argv.empty() && argv.front() == "replay") throw invalid_argument("refusing to replay a replay");
        return execute(argv);
    }

    std::ostream& out_;
    std::ostream& err_;
};

inline int execute(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return App(out, err).execute(args);
}

} // namespace manifold_probe::cli
