#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "urbanfuse/metrics.hpp"
#include "urbanfuse/zinb.hpp"

using namespace urbanfuse;

namespace {

PredictionFrame frame_from(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat) {
    PredictionFrame f;
    for (int t = 0; t < y.rows(); ++t) f.time_index.push_back(1546300800 + t * 3600ll);
    for (int i = 0; i < y.cols(); ++i) f.tract_ids.push_back("t" + std::to_string(i));
    f.y = y;
    f.yhat = yhat;
    return f;
}

}  // namespace

TEST(Mae, HandCasesAndSubset) {
    Eigen::MatrixXd y(1, 2), yhat(1, 2);
    y << 0, 2;
    yhat << 1, 1;
    auto f = frame_from(y, yhat);
    EXPECT_DOUBLE_EQ(metric_mae(f), 1.0);
    EXPECT_DOUBLE_EQ(metric_mae(f, {"t1"}), 1.0);
    EXPECT_THROW(metric_mae(f, {"absent"}), DataError);

    yhat = y;
    EXPECT_DOUBLE_EQ(metric_mae(frame_from(y, yhat)), 0.0);
}

TEST(Mape, GuardDenominator) {
    Eigen::MatrixXd y(1, 2), yhat(1, 2);
    y << 0, 4;
    yhat << 1, 5;
    auto m = metric_mape_per_tract(frame_from(y, yhat));
    EXPECT_DOUBLE_EQ(m["t0"], 100.0);  // |0-1| / max(0,1) = 1
    EXPECT_DOUBLE_EQ(m["t1"], 25.0);   // |4-5| / 4
    Eigen::MatrixXd same = y;
    auto z = metric_mape_per_tract(frame_from(y, same));
    EXPECT_DOUBLE_EQ(z["t0"], 0.0);
    EXPECT_DOUBLE_EQ(z["t1"], 0.0);
}

TEST(KlDiv, HandCases) {
    Eigen::MatrixXd y(1, 1), yhat(1, 1);
    y << 2;
    yhat << 1;
    EXPECT_NEAR(metric_kl_div(frame_from(y, yhat)), 2.0 * std::log(2.0), 1e-12);
    y << 0;
    yhat << 7;
    EXPECT_DOUBLE_EQ(metric_kl_div(frame_from(y, yhat)), 0.0);  // zero weight
    y << 3;
    yhat << 3;
    EXPECT_NEAR(metric_kl_div(frame_from(y, yhat)), 0.0, 1e-12);
}

TEST(IntervalMetrics, MpiwAndPicp) {
    Eigen::MatrixXd q10(1, 2), q90(1, 2), y(1, 2);
    q10 << 0, 0;
    q90 << 0, 1;
    y << 0, 5;
    EXPECT_DOUBLE_EQ(metric_mpiw(q10, q10), 0.0);   // degenerate interval
    EXPECT_DOUBLE_EQ(metric_mpiw(q10, q90), 0.5);
    EXPECT_DOUBLE_EQ(metric_picp(y, q10, q90), 0.5);  // one of two covered
    Eigen::MatrixXd inside = q10;
    EXPECT_DOUBLE_EQ(metric_picp(inside, q10, q90), 1.0);

    Eigen::MatrixXd bad = q90;
    EXPECT_THROW(metric_mpiw(bad, q10), DataError);  // order violation
}

TEST(TrueZeroRate, HandCases) {
    Eigen::MatrixXd y(1, 3), yhat(1, 3);
    y << 0, 0, 1;
    yhat << 0.2, 0.9, 1.1;  // rounds to 0, 1, 1
    auto r = metric_true_zero_rate(frame_from(y, yhat));
    ASSERT_TRUE(r.has_value());
    EXPECT_DOUBLE_EQ(*r, 0.5);

    y << 0, 0, 0;
    yhat << 0.4, 0.2, 0.0;
    EXPECT_DOUBLE_EQ(*metric_true_zero_rate(frame_from(y, yhat)), 1.0);

    y << 1, 2, 3;
    EXPECT_FALSE(metric_true_zero_rate(frame_from(y, yhat)).has_value());
}

TEST(F1, PerfectAndMicroEqualsOracles) {
    Eigen::MatrixXd y(2, 2), yhat(2, 2);
    y << 0, 1, 2, 0;
    yhat << 0.1, 1.2, 1.9, -0.2;
    auto f = frame_from(y, yhat);
    EXPECT_DOUBLE_EQ(metric_f1(f), 1.0);
    EXPECT_DOUBLE_EQ(metric_f1_macro(f), 1.0);

    yhat << 0.9, 1.2, 1.9, -0.2;  // one miss
    EXPECT_DOUBLE_EQ(metric_f1(frame_from(y, yhat)), 0.75);
}

TEST(MetricOracles, RandomFixturesMatchLoopReferences) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        int t = 10, n = 10;
        Eigen::MatrixXd y(t, n), yhat(t, n), q10(t, n), q90(t, n);
        for (int a = 0; a < t; ++a)
            for (int b = 0; b < n; ++b) {
                y(a, b) = double(rng() % 6) * (unit(rng) < 0.4 ? 0.0 : 1.0);
                yhat(a, b) = 6.0 * unit(rng);
                q10(a, b) = double(rng() % 3);
                q90(a, b) = q10(a, b) + double(rng() % 4);
            }
        auto f = frame_from(y, yhat);
        EXPECT_NEAR(metric_mae(f), oracle::mae(y, yhat), 1e-12);
        EXPECT_NEAR(metric_kl_div(f), oracle::kl_div(y, yhat), 1e-12);
        EXPECT_NEAR(metric_mpiw(q10, q90), oracle::mpiw(q10, q90), 1e-12);
        EXPECT_NEAR(metric_picp(y, q10, q90), oracle::picp(y, q10, q90), 1e-12);
        EXPECT_NEAR(metric_f1(f), oracle::micro_f1(y, yhat), 1e-12);
        auto tz = metric_true_zero_rate(f);
        double tz_ref = oracle::true_zero_rate(y, yhat);
        if (std::isnan(tz_ref)) {
            EXPECT_FALSE(tz.has_value());
        } else {
            EXPECT_NEAR(*tz, tz_ref, 1e-12);
        }
        Eigen::VectorXd mape_ref = oracle::mape_per_tract(y, yhat);
        auto mape = metric_mape_per_tract(f);
        for (int b = 0; b < n; ++b)
            EXPECT_NEAR(mape["t" + std::to_string(b)], mape_ref(b), 1e-12);
    }
}

TEST(MetricOracles, TractReorderingInvariance) {
    std::mt19937_64 rng(6);
    int t = 8, n = 6;
    Eigen::MatrixXd y(t, n), yhat(t, n);
    for (int a = 0; a < t; ++a)
        for (int b = 0; b < n; ++b) {
            y(a, b) = double(rng() % 5);
            yhat(a, b) = double(rng() % 5);
        }
    auto f = frame_from(y, yhat);
    std::vector<int> perm = {4, 2, 0, 5, 1, 3};
    PredictionFrame g = f;
    for (int b = 0; b < n; ++b) {
        g.tract_ids[b] = f.tract_ids[perm[b]];
        g.y.col(b) = f.y.col(perm[b]);
        g.yhat.col(b) = f.yhat.col(perm[b]);
    }
    EXPECT_DOUBLE_EQ(metric_mae(f), metric_mae(g));
    std::set<std::string> subset = {"t0", "t4"};
    EXPECT_DOUBLE_EQ(metric_mae(f, subset), metric_mae(g, subset));
    auto mf = metric_mape_per_tract(f);
    auto mg = metric_mape_per_tract(g);
    EXPECT_EQ(mf, mg);
}

TEST(MetricOracles, SampledZinbCoverageNearNominal) {
    // fine-grained support keeps the discrete 10-90% band close to its
    // nominal 80% mass
    ZinbPoint q{40.0, 0.7, 0.03};
    double lo = static_cast<double>(zinb_quantile(0.1, q));
    double hi = static_cast<double>(zinb_quantile(0.9, q));

    double theory = 0.0;
    for (long long v = static_cast<long long>(lo); v <= static_cast<long long>(hi); ++v)
        theory += zinb_pmf(v, q);
    EXPECT_GE(theory, 0.8);  // discrete quantiles cover at least nominal mass
    EXPECT_LE(theory, 0.86);

    std::mt19937_64 rng(7);
    const int samples = 10000;
    Eigen::MatrixXd y(samples, 1), q10(samples, 1), q90(samples, 1);
    for (int s = 0; s < samples; ++s) {
        y(s, 0) = static_cast<double>(zinb_sample(rng, q));
        q10(s, 0) = lo;
        q90(s, 0) = hi;
    }
    double picp = metric_picp(y, q10, q90);
    EXPECT_NEAR(picp, 0.80, 0.05);
}

TEST(MetricsReport, JsonSerializationWithNulls) {
    Eigen::MatrixXd y(1, 2), yhat(1, 2);
    y << 0, 2;
    yhat << 0.1, 2.2;
    auto rep = evaluate_metrics(frame_from(y, yhat), nullptr, {"t1"});
    json j = rep.to_json();
    EXPECT_TRUE(j["mpiw"].is_null());
    EXPECT_TRUE(j["picp"].is_null());
    EXPECT_DOUBLE_EQ(j["mae_tract"].get<double>(), rep.mae_tract);
    EXPECT_DOUBLE_EQ(j["mape_per_tract"]["t0"].get<double>(),
                     rep.mape_per_tract.at("t0"));
}
