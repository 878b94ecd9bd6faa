#include "cli_app.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace manifold_probe;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::execute(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A small 6-layer dataset written by the synth subcommand.
fs::path synth_dataset(const std::string& name, std::vector<std::string> extra = {}) {
    const auto dir = fixtures::temp_dir(name);
    std::vector<std::string> args{"synth", "--out", (dir / "data").string(), "--seed", "3", "--classes", "8",
                                  "--items", "40", "--dim", "6", "--layers", "6", "--variants", "1"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return dir;
}

} // namespace

TEST(Cli, HelpAndVersion) {
    EXPECT_EQ(run({"--help"}).code, 0);
    const auto v = run({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_EQ(v.out, std::string(cli::kVersion) + "\n");
}

TEST(Cli, BadFlagsExitTwoWithJsonError) {
    const auto dir = fixtures::temp_dir("cli_flags");
    for (const auto& args : std::vector<std::vector<std::string>>{
             {},
             {"frobnicate"},
             {"fewshot", "--manifest", (dir / "nope.txt").string(), "--out", (dir / "o").string(), "--seed", "1"},
             {"fewshot", "--out", (dir / "o").string(), "--seed", "1"},
             {"characterize", "--manifest", (dir / "nope.txt").string(), "--out", (dir / "o").string()},
             {"fewshot", "--lambda", "2"},
         }) {
        const auto r = run(args);
        EXPECT_EQ(r.code, 2);
        const auto j = nlohmann::json::parse(r.err);
        EXPECT_EQ(j["error"], "invalid_argument");
        EXPECT_EQ(j["exit"], 2);
        EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
    }
    EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, FewshotWritesArtifactsAndReplays) {
    const auto dir = synth_dataset("cli_fewshot");
    const auto manifest = (dir / "data" / "manifest.txt").string();
    const auto out = (dir / "fs").string();
    auto r = run({"fewshot", "--manifest", manifest, "--layer", "6", "--episodes", "40", "--seed", "9", "--out", out,
                  "--threads", "2", "--dump-episodes"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto stem = fs::path(out) / "synthetic_6_raw_5w5s";
    ASSERT_TRUE(fs::exists(stem.string() + ".csv"));
    ASSERT_TRUE(fs::exists(stem.string() + ".json"));
    ASSERT_TRUE(fs::exists(stem.string() + "_episodes.txt"));
    const auto run_json = nlohmann::json::parse(slurp(fs::path(out) / "run.json"));
    EXPECT_EQ(run_json["subcommand"], "fewshot");
    EXPECT_EQ(run_json["resolved"]["seed"], 9);
    EXPECT_EQ(run_json["resolved"]["way"], 5);

    const auto csv = slurp(stem.string() + ".csv");
    const auto dump = slurp(stem.string() + "_episodes.txt");
    auto summary = nlohmann::json::parse(slurp(stem.string() + ".json"));
    r = run({"replay", (fs::path(out) / "run.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(stem.string() + ".csv"), csv);
    EXPECT_EQ(slurp(stem.string() + "_episodes.txt"), dump);
    auto again = nlohmann::json::parse(slurp(stem.string() + ".json"));
    summary.erase("wall_time_seconds");
    again.erase("wall_time_seconds");
    EXPECT_EQ(summary, again);

    // Thread count does not change results.
    r = run({"fewshot", "--manifest", manifest, "--layer", "6", "--episodes", "40", "--seed", "9", "--out",
             (dir / "fs1").string(), "--threads", "1"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(slurp(dir / "fs1" / "synthetic_6_raw_5w5s.csv"), csv);
}

TEST(Cli, PcaSweepAndReport) {
    const auto dir = synth_dataset("cli_report");
    const auto manifest = (dir / "data" / "manifest.txt").string();
    const auto out = (dir / "fs").string();
    for (const auto& shot : {"1", "5"}) {
        auto r = run({"fewshot", "--manifest", manifest, "--layer", "5", "--episodes", "20", "--seed", "1", "--shot",
                      shot, "--out", out});
        ASSERT_EQ(r.code, 0) << r.err;
        r = run({"fewshot", "--manifest", manifest, "--fit-manifest", manifest, "--layer", "5", "--episodes", "20",
                 "--seed", "1", "--shot", shot, "--reduce", "pca", "--dims", "4,2", "--out", out});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(r.err, ""); // fit manifest given: no warning
    }
    auto r = run({"report", "--inputs", out, "--out", (dir / "rep").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = slurp(dir / "rep" / "report.txt");
    EXPECT_NE(text.find("PCA 2"), std::string::npos);
    EXPECT_NE(text.find("synthetic 5w1s"), std::string::npos);
    const auto csv = slurp(dir / "rep" / "report.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4); // header + Raw, PCA 4, PCA 2

    r = run({"fewshot", "--manifest", manifest, "--layer", "5", "--seed", "1", "--reduce", "pca", "--out", out});
    EXPECT_EQ(r.code, 2); // --dims missing
}

TEST(Cli, CharacterizeFitAndSweep) {
    const auto dir = synth_dataset("cli_char");
    const auto manifest = (dir / "data" / "manifest.txt").string();
    auto r = run({"characterize", "--manifest", manifest, "--seed", "2", "--support", "10", "--queries", "100",
                  "--out", (dir / "ch").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(dir / "ch" / "synthetic_characterization.json"));
    EXPECT_EQ(j["layers"].size(), 6u);
    EXPECT_TRUE(j.contains("logistic_fit"));
    EXPECT_TRUE(fs::exists(dir / "ch" / "synthetic_layer_curve.csv"));

    r = run({"fit-logistic", "--input", (dir / "ch" / "synthetic_characterization.csv").string(), "--out",
             (dir / "fit").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto fit = nlohmann::json::parse(slurp(dir / "fit" / "logistic_fit.json"));
    EXPECT_EQ(fit["L"], j["logistic_fit"]["L"]);

    r = run({"characterize", "--manifest", manifest, "--seed", "2", "--support", "10", "--queries", "100",
             "--layers", "2..3,6", "--class-subsample", "4", "--out", (dir / "ch2").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "ch2" / "synthetic_characterization.json"))["layers"].size(), 3u);

    r = run({"dim-sweep", "--manifest", manifest, "--seed", "2", "--support", "10", "--queries", "100", "--layers",
             "5..6", "--dims", "4,2", "--include-raw", "--out", (dir / "sw").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "sw" / "synthetic_dim_sweep.json"))["grid"].size(), 6u);

    r = run({"characterize", "--manifest", manifest, "--seed", "2", "--support", "39", "--out",
             (dir / "ch3").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "data");
}

TEST(Cli, IngestPoolsTokenFiles) {
    const auto dir = synth_dataset("cli_ingest", {"--tokens", "3"});
    auto r = run({"ingest", "--manifest", (dir / "data" / "manifest.txt").string(), "--out", (dir / "in").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "in" / "validation_report.json"))["ok"]);
    const auto pooled = read_manifest(dir / "in" / "manifest.txt");
    EXPECT_EQ(read_embedding_file(pooled.resolve(1)).header.tokens_per_item, 1u);

    // Corrupt a layer file: validation fails with a data error.
    auto bytes = io::read_file(dir / "data" / "synthetic_l2.feb");
    bytes.resize(bytes.size() - 3);
    io::write_file(dir / "data" / "synthetic_l2.feb", bytes);
    r = run({"ingest", "--manifest", (dir / "data" / "manifest.txt").string(), "--out", (dir / "in2").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_FALSE(nlohmann::json::parse(slurp(dir / "in2" / "validation_report.json"))["ok"]);
}

TEST(Cli, DegenerateDataIsNumericalError) {
    const auto dir = fixtures::temp_dir("cli_numerical");
    GmmSpec g;
    g.classes = 5;
    g.items_per_class = 20;
    g.dim = 5;
    g.separation = 0;
    g.sigma = 0;
    write_embedding_file(make_gmm_set(g), dir / "flat.feb");
    DatasetManifest m;
    m.dataset_name = "flat";
    m.layer_files[1] = "flat.feb";
    write_manifest(m, dir / "manifest.txt");
    const auto r = run({"fewshot", "--manifest", (dir / "manifest.txt").string(), "--seed", "1", "--reduce", "pca",
                        "--dims", "2", "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 4) << r.err;
    EXPECT_NE(r.err.find("\"numerical\""), std::string::npos);
}

TEST(Cli, RangeLists) {
    EXPECT_EQ(cli::parse_range_list("1..3,7"), (std::vector<std::uint32_t>{1, 2, 3, 7}));
    EXPECT_EQ(cli::parse_range_list("512,256"), (std::vector<std::uint32_t>{512, 256}));
    EXPECT_THROW(cli::parse_range_list("3..1"), Error);
    EXPECT_THROW(cli::parse_range_list("a"), Error);
    EXPECT_THROW(cli::parse_range_list(""), Error);
    EXPECT_THROW(cli::parse_layers("0..2"), Error);
}
