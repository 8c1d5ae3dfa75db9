#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "urbanfuse/graph.hpp"

using namespace urbanfuse;

namespace {

std::vector<TractGeometry> tracts_at(const std::vector<LatLon>& pts) {
    std::vector<TractGeometry> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        TractGeometry t;
        t.tract_id = "t" + std::to_string(i);
        t.centroid = pts[i];
        t.population = 100;
        t.area_sqmi = 1.0;
        out.push_back(t);
    }
    return out;
}

FeatureTable random_features(int n, int f_per_cat, std::mt19937_64& rng) {
    FeatureTable t;
    std::normal_distribution<double> dist;
    std::vector<FeatureCategory> cats = {FeatureCategory::demography, FeatureCategory::land,
                                         FeatureCategory::economy, FeatureCategory::road};
    int f_total = f_per_cat * static_cast<int>(cats.size());
    t.values.resize(n, f_total);
    int col = 0;
    for (FeatureCategory c : cats)
        for (int f = 0; f < f_per_cat; ++f) {
            std::string name = category_to_string(c) + "_" + std::to_string(f);
            t.feature_names.push_back(name);
            t.categories[name] = c;
            for (int i = 0; i < n; ++i) t.values(i, col) = dist(rng);
            ++col;
        }
    for (int i = 0; i < n; ++i) t.tract_ids.push_back("t" + std::to_string(i));
    return t;
}

}  // namespace

TEST(PairwiseDistances, BasicGeometry) {
    auto tracts = tracts_at({{0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}});
    std::vector<std::string> log;
    auto m = pairwise_distances(tracts, &log);
    EXPECT_DOUBLE_EQ(m.d(0, 1), 0.0);             // coincident centroids
    EXPECT_FALSE(log.empty());
    EXPECT_NEAR(m.d(0, 2), 111.195, 0.01);        // one degree of latitude
    EXPECT_DOUBLE_EQ(m.d(0, 0), 0.0);
    EXPECT_TRUE(m.d.isApprox(m.d.transpose()));
}

TEST(PairwiseDistances, CollinearEquallySpaced) {
    auto tracts = tracts_at({{0.0, 0.0}, {0.1, 0.0}, {0.2, 0.0}});
    auto m = pairwise_distances(tracts);
    EXPECT_NEAR(m.d(0, 2), 2.0 * m.d(0, 1), 1e-6 * m.d(0, 2));
}

TEST(DistanceKernel, ThresholdBoundary) {
    Eigen::MatrixXd d(2, 2);
    d << 0, 10, 10, 0;
    auto a = distance_kernel(d, 10.0, 0.3);
    EXPECT_NEAR(a(0, 1), std::exp(-1.0), 1e-12);
    EXPECT_NEAR(a(0, 1), 0.36788, 5e-6);
    d(0, 1) = d(1, 0) = 11.0;
    a = distance_kernel(d, 10.0, 0.3);
    EXPECT_DOUBLE_EQ(a(0, 1), 0.0);  // exp(-1.21) = 0.29820 < 0.3
    EXPECT_DOUBLE_EQ(a(0, 0), 0.0);  // diagonal stays zero regardless of d
}

TEST(DistanceKernel, MonotoneAboveThreshold) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(0.0, 12.0);
    for (int trial = 0; trial < 200; ++trial) {
        double d1 = dist(rng), d2 = dist(rng);
        if (d1 > d2) std::swap(d1, d2);
        Eigen::MatrixXd d(2, 2);
        d << 0, d1, d1, 0;
        double w1 = distance_kernel(d, 10.0, 0.3)(0, 1);
        d(0, 1) = d(1, 0) = d2;
        double w2 = distance_kernel(d, 10.0, 0.3)(0, 1);
        EXPECT_GE(w1, w2);
    }
}

TEST(Pearson, HandComputedCases) {
    Eigen::VectorXd a(3), b(3);
    a << 1, 2, 3;
    b << 3, 2, 1;
    EXPECT_NEAR(pearson_abs(a, a), 1.0, 1e-12);
    EXPECT_NEAR(pearson_abs(a, b), 1.0, 1e-12);  // anti-correlation, magnitude rule
    Eigen::VectorXd c(4), d(4);
    c << 1, 2, 3, 4;
    d << 1, 3, 2, 4;
    EXPECT_NEAR(pearson_abs(c, d), 0.8, 1e-12);
}

TEST(NodeCorrelations, ZeroVarianceNodeLoggedAsZero) {
    FeatureTable t;
    t.tract_ids = {"a", "b", "c"};
    t.feature_names = {"d1", "d2"};
    t.categories = {{"d1", FeatureCategory::demography}, {"d2", FeatureCategory::demography}};
    t.values.resize(3, 2);
    // after z-scoring, node c sits at z = 0 in both columns -> constant vector
    t.values << 1, 30, 3, 10, 2, 20;
    std::vector<std::string> log;
    auto stack = node_correlations(t, {CorrCategory::demography}, &log);
    const auto& corr = stack.matrices.at(CorrCategory::demography);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(corr(2, i), 0.0);
        EXPECT_DOUBLE_EQ(corr(i, 2), 0.0);
    }
    EXPECT_FALSE(log.empty());
    EXPECT_DOUBLE_EQ(corr(0, 0), 1.0);
}

TEST(NodeCorrelations, RequiresTwoColumnsPerCategory) {
    FeatureTable t;
    t.tract_ids = {"a", "b"};
    t.feature_names = {"d1"};
    t.categories = {{"d1", FeatureCategory::demography}};
    t.values.resize(2, 1);
    t.values << 1, 2;
    EXPECT_THROW(node_correlations(t, {CorrCategory::demography}), DataError);
}

TEST(NodeCorrelations, AffineRescalingInvariance) {
    std::mt19937_64 rng(9);
    auto features = random_features(6, 4, rng);
    auto base = node_correlations(features, {CorrCategory::demography, CorrCategory::poi});
    auto scaled = features;
    scaled.values.col(1) = 3.7 * scaled.values.col(1).array() + 42.0;  // rescale one column
    auto after = node_correlations(scaled, {CorrCategory::demography, CorrCategory::poi});
    for (auto cat : {CorrCategory::demography, CorrCategory::poi})
        EXPECT_TRUE(base.matrices.at(cat).isApprox(after.matrices.at(cat), 1e-10));
}

TEST(HomophilyEmbed, HandCases) {
    Eigen::MatrixXd a_d(2, 2), corr(2, 2);
    a_d << 0, 0.4, 0.4, 0;
    corr << 1, 0.5, 0.5, 1;
    CorrelationStack stack;
    stack.tract_ids = {"a", "b"};
    stack.matrices[CorrCategory::demography] = corr;
    auto g = homophily_embed(stack, a_d, 10.0, 0.3);
    EXPECT_NEAR(g.a_prime(0, 1), 0.2, 1e-15);
    EXPECT_DOUBLE_EQ(g.a_prime(0, 0), 0.0);

    // unit correlations leave A_d unchanged
    stack.matrices[CorrCategory::demography] = Eigen::MatrixXd::Ones(2, 2);
    g = homophily_embed(stack, a_d, 10.0, 0.3);
    EXPECT_TRUE(g.a_prime.isApprox(a_d));

    // Hadamard zero absorption
    a_d.setZero();
    g = homophily_embed(stack, a_d, 10.0, 0.3);
    EXPECT_DOUBLE_EQ(g.a_prime.norm(), 0.0);
}

TEST(HomophilyEmbed, NodeOrderMismatchRejected) {
    CorrelationStack stack;
    stack.tract_ids = {"a", "b", "c"};
    stack.matrices[CorrCategory::demography] = Eigen::MatrixXd::Ones(3, 3);
    EXPECT_THROW(homophily_embed(stack, Eigen::MatrixXd::Zero(2, 2), 10.0, 0.3), DataError);
}

// ---------------------------------------------------------------------------
// Properties against the brute-force oracle
// ---------------------------------------------------------------------------

TEST(GraphOracle, SmallInstancesMatchWithinTolerance) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> coord(-0.15, 0.15);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 3 + static_cast<int>(rng() % 4);
        std::vector<LatLon> pts;
        for (int i = 0; i < n; ++i) pts.push_back({41.8 + coord(rng), -87.6 + coord(rng)});
        auto tracts = tracts_at(pts);
        auto features = random_features(n, 3, rng);

        auto dm = pairwise_distances(tracts);
        auto a_d = distance_kernel(dm.d, 10.0, 0.3);
        EXPECT_LT((a_d - oracle::distance_kernel(dm.d, 10.0, 0.3)).cwiseAbs().maxCoeff(), 1e-15);

        std::set<CorrCategory> cats = {CorrCategory::demography, CorrCategory::land,
                                       CorrCategory::poi};
        auto stack = node_correlations(features, cats);
        auto g = homophily_embed(stack, a_d, 10.0, 0.3);

        std::vector<Eigen::MatrixXd> corrs;
        for (auto c : cats) corrs.push_back(stack.matrices.at(c));
        auto ref = oracle::homophily(corrs, a_d);
        EXPECT_LT((g.a_prime - ref).cwiseAbs().maxCoeff(), 1e-12);

        // invariants
        EXPECT_TRUE(g.a_prime.isApprox(g.a_prime.transpose(), 1e-12));
        for (int i = 0; i < n; ++i) {
            EXPECT_DOUBLE_EQ(g.a_prime(i, i), 0.0);
            for (int j = 0; j < n; ++j) {
                EXPECT_GE(g.a_prime(i, j), 0.0);
                EXPECT_LE(g.a_prime(i, j), a_d(i, j) + 1e-15);
                if (a_d(i, j) == 0.0) EXPECT_DOUBLE_EQ(g.a_prime(i, j), 0.0);
            }
        }
    }
}

TEST(GraphOracle, PermutationEquivariance) {
    std::mt19937_64 rng(77);
    int n = 6;
    std::vector<LatLon> pts;
    std::uniform_real_distribution<double> coord(-0.1, 0.1);
    for (int i = 0; i < n; ++i) pts.push_back({41.8 + coord(rng), -87.6 + coord(rng)});
    auto tracts = tracts_at(pts);
    auto features = random_features(n, 3, rng);

    std::vector<int> perm = {3, 1, 5, 0, 4, 2};
    std::vector<TractGeometry> ptracts;
    FeatureTable pfeat = features;
    for (int i = 0; i < n; ++i) {
        ptracts.push_back(tracts[perm[i]]);
        pfeat.tract_ids[i] = features.tract_ids[perm[i]];
        pfeat.values.row(i) = features.values.row(perm[i]);
    }

    std::set<CorrCategory> cats = {CorrCategory::demography, CorrCategory::poi};
    auto build = [&](const std::vector<TractGeometry>& tr, const FeatureTable& ft) {
        auto a_d = distance_kernel(pairwise_distances(tr).d, 10.0, 0.3);
        return homophily_embed(node_correlations(ft, cats), a_d, 10.0, 0.3).a_prime;
    };
    auto base = build(tracts, features);
    auto permuted = build(ptracts, pfeat);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            EXPECT_NEAR(permuted(i, j), base(perm[i], perm[j]), 1e-14);
}

TEST(AdjacencyIo, CsvRoundTripAndManifest) {
    Eigen::MatrixXd a(3, 3);
    a << 0, 0.5, 0.25, 0.5, 0, 0.125, 0.25, 0.125, 0;
    std::vector<std::string> ids = {"x", "y", "z"};
    std::string path = std::string(::getenv("TMPDIR") ? ::getenv("TMPDIR") : "/tmp") +
                       "/uf_adj_test.csv";
    write_adjacency_csv(a, ids, path);
    auto [back, back_ids] = read_adjacency_csv(path);
    EXPECT_EQ(back_ids, ids);
    EXPECT_TRUE(back == a);

    HomophilyGraph g;
    g.tract_ids = ids;
    g.a_dist = a;
    g.a_prime = a;
    g.categories = {CorrCategory::demography};
    write_adjacency_manifest(g, path, path + ".manifest.json");
    std::ifstream in(path + ".manifest.json");
    json m = json::parse(in);
    EXPECT_DOUBLE_EQ(m["sigma"].get<double>(), 10.0);
    EXPECT_EQ(m["categories"][0], "demography");
    EXPECT_EQ(m["content_hash"], file_content_hash(path));
}
