#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace manifold_probe;

namespace {

SummaryRecord record(const std::string& dataset, ReductionKind kind, std::uint32_t dim, std::uint32_t shot,
                     std::vector<std::uint32_t> correct) {
    SummaryRecord r;
    r.dataset = dataset;
    r.config.layer_id = 23;
    r.config.reduction.kind = kind;
    r.config.reduction.output_dim = dim;
    r.config.sampler.shot = shot;
    std::vector<EpisodeResult> eps;
    for (std::size_t i = 0; i < correct.size(); ++i)
        eps.push_back({i, correct[i], 75, correct[i] / 75.0});
    r.summary = summarize(std::move(eps), r.config.fingerprint());
    return r;
}

} // namespace

TEST(Formatting, HalfEvenOnShortestDecimal) {
    EXPECT_EQ(format_fixed_half_even(96.505, 2), "96.50");
    EXPECT_EQ(format_fixed_half_even(96.515, 2), "96.52");
    EXPECT_EQ(format_fixed_half_even(96.5051, 2), "96.51");
    EXPECT_EQ(format_fixed_half_even(0.125, 2), "0.12");
    EXPECT_EQ(format_fixed_half_even(1.005, 2), "1.00");
    EXPECT_EQ(format_fixed_half_even(2.5, 0), "2");
    EXPECT_EQ(format_fixed_half_even(3.5, 0), "4");
    EXPECT_EQ(format_fixed_half_even(99.995, 2), "100.00");
    EXPECT_EQ(format_fixed_half_even(7, 2), "7.00");
    EXPECT_EQ(format_fixed_half_even(-1.235, 2), "-1.24");
    EXPECT_EQ(format_fixed_half_even(-0.001, 2), "0.00");
    EXPECT_EQ(format_accuracy_cell(0.9651, 0.0024), "96.51 ± 0.24");
}

TEST(Report, TableLayout) {
    const std::vector<SummaryRecord> s{
        record("mini", ReductionKind::raw, 0, 5, {70, 72, 74}),
        record("mini", ReductionKind::pca, 128, 5, {60, 61, 62}),
        record("mini", ReductionKind::raw, 0, 1, {40, 50, 60}),
        record("tiered", ReductionKind::raw, 0, 5, {75, 75, 74}),
    };
    const auto t = generate_report(s);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"mini 5w1s", "mini 5w5s", "tiered 5w5s"}));
    ASSERT_EQ(t.row_labels.size(), 2u);
    EXPECT_EQ(t.row_labels[0], "PCA 128");
    EXPECT_EQ(t.row_labels[1], "Raw");
    EXPECT_EQ(t.cells[0][0], "");
    EXPECT_EQ(t.cells[1][1], format_accuracy_cell(s[0].summary.mean_accuracy, s[0].summary.ci_halfwidth_95));
    const auto csv = t.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,mini 5w1s,mini 5w5s,tiered 5w5s");
    const auto text = t.to_text();
    // Every line has the same display width.
    std::vector<std::size_t> widths;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto end = text.find('\n', start);
        std::size_t w = 0;
        for (std::size_t i = start; i < end; ++i)
            if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) ++w;
        widths.push_back(w);
        start = end + 1;
    }
    ASSERT_EQ(widths.size(), 3u);
    EXPECT_EQ(widths[0], widths[1]);
    EXPECT_EQ(widths[1], widths[2]);
}

TEST(Report, LabelsForNonDefaultClassifiersAndDuplicates) {
    auto a = record("d", ReductionKind::ica, 64, 5, {1, 2});
    a.config.metric = Metric::euclidean;
    a.config.classifier.kind = ClassifierKind::centroid;
    EXPECT_EQ(method_label(a.config), "ICA 64 (euclidean, centroid)");
    EXPECT_THROW(generate_report({a, a}), Error);
    EXPECT_THROW(generate_report({}), Error);
    ReportTable t;
    t.columns = {"x,y"};
    t.row_labels = {"a\"b"};
    t.row_keys = {"k"};
    t.cells = {{"1"}};
    EXPECT_EQ(t.to_csv(), "method,\"x,y\"\n\"a\"\"b\",1\n");
}

TEST(ResultsIo, SummaryJsonRoundTrip) {
    auto r = record("mini", ReductionKind::ica, 32, 5, {70, 71, 69, 75});
    r.config.reduction.ica.contrast = IcaContrast::cube;
    r.config.reduction.ica.seed = 77;
    r.config.variants.in_covariance = false;
    r.summary.wall_time_seconds = 1.5;
    const auto back = summary_from_json(json::parse(to_json(r).dump()));
    EXPECT_EQ(back.dataset, r.dataset);
    EXPECT_EQ(back.config.fingerprint(), r.config.fingerprint());
    EXPECT_EQ(back.summary.per_episode, r.summary.per_episode);
    EXPECT_EQ(back.summary.mean_accuracy, r.summary.mean_accuracy);
    EXPECT_EQ(back.summary.ci_halfwidth_95, r.summary.ci_halfwidth_95);
    EXPECT_EQ(back.summary.wall_time_seconds, 1.5);
    auto j = to_json(r);
    j["per_episode"][0]["correct"] = 99;
    EXPECT_THROW(summary_from_json(j), Error);
    j = to_json(r);
    j["config"]["ica"]["contrast"] = "tanh";
    EXPECT_THROW(summary_from_json(j), Error);
}

TEST(ResultsIo, ArtifactNamesAndCsv) {
    const auto r = record("mini", ReductionKind::pca, 128, 1, {1, 2});
    EXPECT_EQ(artifact_stem("mini", r.config), "mini_23_pca128_5w1s");
    EXPECT_EQ(artifact_stem("mini", record("mini", ReductionKind::raw, 0, 5, {1, 2}).config), "mini_23_raw_5w5s");
    const auto csv = episodes_csv(r.summary);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "episode_index,correct,total,accuracy");
    EXPECT_NE(csv.find("\n1,2,75,"), std::string::npos);
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    std::vector<LayerAccuracy> rows{{1, 0, 0.5, 1, 2}, {2, 0, 1.0, 2, 2}};
    EXPECT_EQ(layer_curve_csv("d", rows, std::nullopt), "dataset,layer,accuracy,fit_value\nd,1,0.5,\nd,2,1,\n");
}
