#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace manifold_probe;

namespace {

LabeledVectors random_support(std::mt19937_64& gen, int classes, int per_class, Eigen::Index d, double spread = 3.0) {
    LabeledVectors s;
    s.vectors = fixtures::random_matrix(gen, classes * per_class, d);
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            s.vectors.row(c * per_class + i).array() += spread * c;
            s.labels.push_back(c);
        }
    return s;
}

} // namespace

TEST(Dictionary, OneRowPerClassFallsBackToIdentity) {
    std::mt19937_64 gen(1);
    const auto s = random_support(gen, 5, 1, 4);
    const auto dict = build_dictionary(s);
    ASSERT_EQ(dict.models.size(), 5u);
    for (const auto& m : dict.models) {
        EXPECT_EQ(m.cov_source, CovSource::identity);
        // (1 - lambda) I + lambda (d / d) I = I
        EXPECT_LT((m.covariance - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_DOUBLE_EQ(m.prior, 0.2);
    }
}

TEST(Dictionary, CovarianceLadder) {
    std::mt19937_64 gen(2);
    auto s = random_support(gen, 3, 4, 3);
    EXPECT_EQ(build_dictionary(s).models[0].cov_source, CovSource::per_class);

    ShrinkageConfig high;
    high.pooled_fallback_threshold = 5;
    for (const auto& m : build_dictionary(s, high).models) EXPECT_EQ(m.cov_source, CovSource::pooled);

    // One singleton class among larger ones borrows the pooled covariance.
    s.vectors.conservativeResize(9, Eigen::NoChange);
    s.labels.resize(9);
    const auto dict = build_dictionary(s);
    EXPECT_EQ(dict.models[0].cov_source, CovSource::per_class);
    EXPECT_EQ(dict.models[2].cov_source, CovSource::pooled);

    ShrinkageConfig no_pool;
    no_pool.pooled_fallback_threshold = 5;
    no_pool.identity_fallback_threshold = 100;
    for (const auto& m : build_dictionary(s, no_pool).models) EXPECT_EQ(m.cov_source, CovSource::identity);
}

TEST(Dictionary, ShrinkageMatchesDirectFormula) {
    std::mt19937_64 gen(3);
    const auto s = random_support(gen, 2, 6, 4);
    for (double lambda : {0.0, 0.25, 0.5, 1.0}) {
        ShrinkageConfig cfg;
        cfg.lambda = lambda;
        const auto dict = build_dictionary(s, cfg);
        oracle::Matrix rows;
        for (int i = 0; i < 6; ++i) rows.push_back(oracle::to_matrix(s.vectors.row(i))[0]);
        const auto S = oracle::covariance(rows);
        double tr = 0;
        for (int j = 0; j < 4; ++j) tr += S[j][j];
        const auto& m = dict.models[0];
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                const double expected = (1 - lambda) * S[a][b] + (a == b ? lambda * tr / 4.0 : 0.0);
                EXPECT_NEAR(m.covariance(a, b), expected, 1e-12);
            }
        EXPECT_LT((m.covariance * m.precision - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(m.log_det, std::log(m.covariance.determinant()), 1e-9);
        EXPECT_LT((m.exemplars.colwise().mean().transpose() - m.centroid).norm(), 1e-12);
    }
}

TEST(Dictionary, SingularCovarianceWithoutShrinkageIsNumericalError) {
    LabeledVectors s;
    s.vectors.resize(2, 3);
    s.vectors << 1, 0, 0, 3, 0, 0;
    s.labels = {0, 0};
    ShrinkageConfig cfg;
    cfg.lambda = 0;
    try {
        build_dictionary(s, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numerical);
    }
    cfg.lambda = 0.1;
    EXPECT_NO_THROW(build_dictionary(s, cfg));
}

TEST(Dictionary, InvariantToSupportRowOrder) {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = random_support(gen, 4, 3, 5);
        const auto a = build_dictionary(s);
        std::vector<int> perm(s.labels.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), gen);
        LabeledVectors t;
        t.vectors.resize(s.vectors.rows(), s.vectors.cols());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            t.vectors.row(static_cast<Eigen::Index>(i)) = s.vectors.row(perm[i]);
            t.labels.push_back(s.labels[perm[i]]);
        }
        const auto b = build_dictionary(t);
        for (std::size_t c = 0; c < a.models.size(); ++c) {
            EXPECT_EQ(a.models[c].exemplars, b.models[c].exemplars);
            EXPECT_EQ(a.models[c].covariance, b.models[c].covariance);
            EXPECT_EQ(a.models[c].precision, b.models[c].precision);
        }
    }
}

TEST(Dictionary, VariantUsage) {
    LabeledVectors s;
    s.vectors.resize(4, 2);
    s.vectors << 0, 0, 0.1, 0, 5, 5, 5.1, 5;
    s.labels = {0, 0, 1, 1};
    s.is_variant = {false, true, false, true};
    EXPECT_EQ(build_dictionary(s).exemplar_count(), 4u);
    EXPECT_EQ(build_dictionary(s, {}, {false, true}).exemplar_count(), 2u);
    EXPECT_EQ(build_dictionary(s, {}, {true, true}).models[0].cov_source, CovSource::per_class);
    EXPECT_EQ(build_dictionary(s, {}, {true, false}).models[0].cov_source, CovSource::identity);
}

TEST(Dictionary, ArgumentErrors) {
    LabeledVectors s;
    EXPECT_THROW(build_dictionary(s), Error);
    s.vectors = Eigen::MatrixXd::Zero(2, 2);
    s.labels = {0};
    EXPECT_THROW(build_dictionary(s), Error);
    s.labels = {0, 1};
    ShrinkageConfig bad;
    bad.lambda = 1.5;
    EXPECT_THROW(build_dictionary(s, bad), Error);
}

TEST(Distances, MahalanobisWithIdentityIsEuclidean) {
    std::mt19937_64 gen(5);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd a = fixtures::random_matrix(gen, 6, 1);
        const Eigen::VectorXd b = fixtures::random_matrix(gen, 6, 1);
        EXPECT_NEAR(mahalanobis(a, b, eye), (a - b).norm(), 1e-12);
    }
    EXPECT_THROW(mahalanobis(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), eye), Error);
}

TEST(Distances, TableMatchesPerPairFormulas) {
    std::mt19937_64 gen(6);
    const auto s = random_support(gen, 3, 4, 3);
    const auto dict = build_dictionary(s);
    const Eigen::MatrixXd q = fixtures::random_matrix(gen, 7, 3);
    const auto t = pairwise_distances(q, dict, Metric::mahalanobis);
    ASSERT_EQ(t.distances.cols(), 12);
    Eigen::Index col = 0;
    for (const auto& m : dict.models)
        for (Eigen::Index e = 0; e < m.exemplars.rows(); ++e, ++col) {
            EXPECT_EQ(t.labels[col], m.class_label);
            for (Eigen::Index i = 0; i < q.rows(); ++i)
                EXPECT_NEAR(t.distances(i, col), mahalanobis(q.row(i).transpose(), m.exemplars.row(e).transpose(),
                                                             m.precision),
                            1e-9);
        }
    const auto c = pairwise_distances(q, dict, Metric::euclidean, ScoreMode::centroid);
    ASSERT_EQ(c.distances.cols(), 3);
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        EXPECT_NEAR(c.distances(i, 1), (q.row(i).transpose() - dict.models[1].centroid).norm(), 1e-12);
    EXPECT_THROW(pairwise_distances(Eigen::MatrixXd::Zero(1, 2), dict, Metric::euclidean), Error);
}

TEST(Distances, CosineIsScaleInvariantAndNonNegative) {
    LabeledVectors s;
    s.vectors.resize(2, 2);
    s.vectors << 1, 0, 0, 2;
    s.labels = {0, 1};
    const auto dict = build_dictionary(s);
    Eigen::MatrixXd q(3, 2);
    q << 5, 0, 1, 1, 2, 2;
    const auto t = pairwise_distances(q, dict, Metric::cosine);
    EXPECT_NEAR(t.distances(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(t.distances(0, 1), 1.0, 1e-15);
    EXPECT_NEAR(t.distances(1, 0), t.distances(2, 0), 1e-15);
    EXPECT_GE(t.distances.minCoeff(), 0.0);
    EXPECT_THROW(pairwise_distances(Eigen::MatrixXd::Zero(1, 2), dict, Metric::cosine), Error);
}

TEST(Knn, TieBreaks) {
    // 1-1 vote, equal means: smaller label.
    EXPECT_EQ(classify_knn(std::vector<double>{1, 1, 2, 2}, std::vector<int>{1, 0, 0, 1}, 2), 0);
    // 2-2 vote decided by mean distance.
    EXPECT_EQ(classify_knn(std::vector<double>{1, 2, 1.5, 1.6}, std::vector<int>{0, 0, 1, 1}, 4), 0);
    EXPECT_EQ(classify_knn(std::vector<double>{1, 3, 1.5, 1.6}, std::vector<int>{0, 0, 1, 1}, 4), 1);
    // Equal distances at the k boundary: the smaller label is the neighbor.
    EXPECT_EQ(classify_knn(std::vector<double>{1, 1}, std::vector<int>{4, 2}, 1), 2);
    // Plain majority beats closeness.
    EXPECT_EQ(classify_knn(std::vector<double>{0.1, 0.5, 0.6, 0.2}, std::vector<int>{3, 1, 1, 2}, 4), 1);
    // Three singletons: smallest mean distance.
    EXPECT_EQ(classify_knn(std::vector<double>{0.1, 0.5, 0.6, 0.2}, std::vector<int>{3, 1, 1, 2}, 3), 3);
}

TEST(Knn, ArgumentErrors) {
    EXPECT_THROW(classify_knn(std::vector<double>{}, std::vector<int>{}, 1), Error);
    EXPECT_THROW(classify_knn(std::vector<double>{1}, std::vector<int>{0, 1}, 1), Error);
    EXPECT_THROW(classify_knn(std::vector<double>{1, 2}, std::vector<int>{0, 1}, 3), Error);
    EXPECT_THROW(classify_knn(std::vector<double>{1, 2}, std::vector<int>{0, 1}, 0), Error);
}

TEST(Knn, OneNeighborIsArgminAndAffineTransformsPreserveDecisions) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0, 10);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 3 + trial % 15;
        std::vector<double> d(n);
        std::vector<int> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = u(gen);
            l[i] = lab(gen);
        }
        const std::size_t arg = std::min_element(d.begin(), d.end()) - d.begin();
        EXPECT_EQ(classify_knn(d, l, 1), l[arg]);
        const std::size_t k = 1 + trial % n;
        std::vector<double> t(n);
        const double a = 0.5 + u(gen), b = u(gen);
        for (std::size_t i = 0; i < n; ++i) t[i] = a * d[i] + b;
        EXPECT_EQ(classify_knn(d, l, k), classify_knn(t, l, k));
    }
}

TEST(Centroid, ArgminWithLabelTieBreak) {
    EXPECT_EQ(classify_centroid(std::vector<double>{3, 1, 2}, std::vector<int>{0, 1, 2}), 1);
    EXPECT_EQ(classify_centroid(std::vector<double>{1, 1}, std::vector<int>{5, 3}), 3);
    EXPECT_THROW(classify_centroid(std::vector<double>{}, std::vector<int>{}), Error);
}

TEST(Posterior, SumsToOneAndMatchesCentroidUnderSharedCovariance) {
    std::mt19937_64 gen(8);
    ShrinkageConfig shared;
    shared.pooled_fallback_threshold = 1000; // every class uses the pooled matrix
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_support(gen, 4, 5, 3, 1.0);
        const auto dict = build_dictionary(s, shared);
        const Eigen::MatrixXd q = fixtures::random_matrix(gen, 5, 3) * 2.0;
        const auto t = pairwise_distances(q, dict, Metric::mahalanobis, ScoreMode::centroid);
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const auto post = gmm_posterior(q.row(i).transpose(), dict);
            EXPECT_FALSE(post.underflow);
            EXPECT_NEAR(post.probabilities.sum(), 1.0, 1e-12);
            Eigen::Index arg = 0;
            post.probabilities.maxCoeff(&arg);
            std::vector<double> dist(static_cast<std::size_t>(t.distances.cols()));
            for (Eigen::Index c = 0; c < t.distances.cols(); ++c) dist[c] = t.distances(i, c);
            EXPECT_EQ(dict.models[arg].class_label, classify_centroid(dist, t.labels));
        }
    }
}

TEST(Posterior, UnderflowFallsBackToUniform) {
    LabeledVectors s;
    s.vectors.resize(2, 2);
    s.vectors << 0, 0, 1, 1;
    s.labels = {0, 1};
    const auto dict = build_dictionary(s);
    const auto post = gmm_posterior(Eigen::Vector2d(1e300, 1e300), dict);
    EXPECT_TRUE(post.underflow);
    EXPECT_DOUBLE_EQ(post.probabilities(0), 0.5);
    const auto far = gmm_posterior(Eigen::Vector2d(60, 60), dict); // tiny likelihoods, still normalizable
    EXPECT_FALSE(far.underflow);
    EXPECT_NEAR(far.probabilities.sum(), 1.0, 1e-12);
    EXPECT_GT(far.probabilities(1), far.probabilities(0));
}

TEST(Dictionary, DumpWritesContainer) {
    std::mt19937_64 gen(9);
    const auto dict = build_dictionary(random_support(gen, 2, 3, 2));
    const auto dir = fixtures::temp_dir("dict_dump");
    dump_dictionary(dict, dir / "d.fcd");
    const auto bytes = io::read_file(dir / "d.fcd");
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FCD1");
    // header 4+4+4+4+8, per class 4+4+8+4 + 8*(2 + 3*2 + 4 + 4)
    EXPECT_EQ(bytes.size(), 24u + 2u * (20u + 8u * 16u));
}
