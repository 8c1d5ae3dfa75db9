#pragma once

#include <random>
#include <vector>

#include "urbanfuse/forecast.hpp"

namespace urbanfuse {

// ---------------------------------------------------------------------------
// Historical average: per (tract, time-of-day slot) mean over the train
// range. The slot count is 24h / interval; a daily interval degenerates to
// one slot, i.e. the tract train mean.
// ---------------------------------------------------------------------------

struct HaModel {
    Eigen::MatrixXd slot_means;   // slots x N
    Eigen::VectorXd tract_means;  // fallback for empty slots
    int slots = 1;
    int interval_hours = 1;
    std::vector<std::string> notes;
};

inline int ha_slot_count(int interval_hours) {
    if (interval_hours >= 24 || 24 % interval_hours != 0) return 1;
    return 24 / interval_hours;
}

inline int ha_slot_of(std::int64_t epoch_secs, int interval_hours, int slots) {
    if (slots == 1) return 0;
    std::int64_t hour_of_day = (epoch_secs % 86400 + 86400) % 86400 / 3600;
    return static_cast<int>(hour_of_day) / interval_hours;
}

inline HaModel ha_fit(const ObservationCube& cube, const DatasetSplit& split) {
    if (split.train.size() < 1) throw DataError("historical average needs a train range");
    HaModel m;
    m.interval_hours = cube.interval_hours;
    m.slots = ha_slot_count(cube.interval_hours);
    const int n = cube.N();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m.slots, n);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(m.slots);
    for (int t = split.train.begin; t < split.train.end; ++t) {
        int slot = ha_slot_of(cube.time_index[t], cube.interval_hours, m.slots);
        sums.row(slot) += cube.counts.row(t);
        counts(slot) += 1.0;
    }
    m.tract_means = cube.counts.middleRows(split.train.begin, split.train.size())
                        .colwise()
                        .mean()
                        .transpose();
    m.slot_means.resize(m.slots, n);
    for (int s = 0; s < m.slots; ++s) {
        if (counts(s) > 0) {
            m.slot_means.row(s) = sums.row(s) / counts(s);
        } else {
            m.slot_means.row(s) = m.tract_means.transpose();
            m.notes.push_back("slot " + std::to_string(s) +
                              " empty in train range; fell back to tract means");
        }
    }
    return m;
}

inline PredictionFrame ha_predict(const HaModel& m, const ObservationCube& cube,
                                  const IndexRange& range) {
    PredictionFrame f;
    f.tract_ids = cube.tract_ids;
    f.y.resize(range.size(), cube.N());
    f.yhat.resize(range.size(), cube.N());
    for (int r = 0; r < range.size(); ++r) {
        int t = range.begin + r;
        int slot = ha_slot_of(cube.time_index[t], m.interval_hours, m.slots);
        f.time_index.push_back(cube.time_index[t]);
        f.y.row(r) = cube.counts.row(t);
        f.yhat.row(r) = m.slot_means.row(slot);
    }
    return f;
}

inline PredictionFrame ha_fit_predict(const ObservationCube& cube, const DatasetSplit& split,
                                      const IndexRange& range) {
    return ha_predict(ha_fit(cube, split), cube, range);
}

// ---------------------------------------------------------------------------
// Random forest regression (bagged variance-reduction trees with random
// feature subsets), one independent forest per tract trained on that tract's
// lagged series only.
// ---------------------------------------------------------------------------

struct ForestConfig {
    int trees = 100;
    int min_leaf = 1;
    int mtry = 0;  // 0: max(1, features / 3)
    std::uint64_t seed = 0;
};

class RegressionTree {
public:
    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int> samples,
             int mtry, int min_leaf, std::mt19937_64& rng) {
        nodes_.clear();
        build(x, y, std::move(samples), mtry, min_leaf, rng);
    }

    double predict(const Eigen::RowVectorXd& x) const {
        int node = 0;
        while (nodes_[node].feature >= 0)
            node = x(nodes_[node].feature) <= nodes_[node].threshold ? nodes_[node].left
                                                                     : nodes_[node].right;
        return nodes_[node].value;
    }

private:
    struct Node {
        int feature = -1;  // -1: leaf
        double threshold = 0.0;
        double value = 0.0;
        int left = -1, right = -1;
    };
    std::vector<Node> nodes_;

    int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int> samples,
              int mtry, int min_leaf, std::mt19937_64& rng) {
        int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{});
        double mean = 0.0;
        for (int s : samples) mean += y(s);
        mean /= static_cast<double>(samples.size());
        nodes_[idx].value = mean;

        double sse = 0.0;
        for (int s : samples) sse += (y(s) - mean) * (y(s) - mean);
        if (static_cast<int>(samples.size()) < 2 * min_leaf || sse <= 1e-12) return idx;

        const int n_features = static_cast<int>(x.cols());
        std::vector<int> feats(n_features);
        std::iota(feats.begin(), feats.end(), 0);
        std::shuffle(feats.begin(), feats.end(), rng);
        feats.resize(std::min(mtry, n_features));

        int best_feat = -1;
        double best_thresh = 0.0, best_score = sse;
        for (int f : feats) {
            std::vector<int> order = samples;
            std::sort(order.begin(), order.end(),
                      [&](int a, int b) { return x(a, f) < x(b, f); });
            double left_sum = 0.0, left_sq = 0.0;
            double total_sum = 0.0, total_sq = 0.0;
            for (int s : order) {
                total_sum += y(s);
                total_sq += y(s) * y(s);
            }
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                double yi = y(order[i]);
                left_sum += yi;
                left_sq += yi * yi;
                if (x(order[i], f) == x(order[i + 1], f)) continue;
                int nl = static_cast<int>(i) + 1;
                int nr = static_cast<int>(order.size()) - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                double right_sum = total_sum - left_sum, right_sq = total_sq - left_sq;
                double score = (left_sq - left_sum * left_sum / nl) +
                               (right_sq - right_sum * right_sum / nr);
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feat = f;
                    best_thresh = 0.5 * (x(order[i], f) + x(order[i + 1], f));
                }
            }
        }
        if (best_feat < 0) return idx;

        std::vector<int> left, right;
        for (int s : samples)
            (x(s, best_feat) <= best_thresh ? left : right).push_back(s);
        if (left.empty() || right.empty()) return idx;
        nodes_[idx].feature = best_feat;
        nodes_[idx].threshold = best_thresh;
        nodes_[idx].left = build(x, y, std::move(left), mtry, min_leaf, rng);
        nodes_[idx].right = build(x, y, std::move(right), mtry, min_leaf, rng);
        return idx;
    }
};

class RandomForestRegressor {
public:
    explicit RandomForestRegressor(ForestConfig cfg = {}) : cfg_(cfg) {}

    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
        if (x.rows() != y.size() || x.rows() == 0)
            throw DataError("random forest: empty or mismatched training data");
        const int rows = static_cast<int>(x.rows());
        int mtry = cfg_.mtry > 0 ? cfg_.mtry
                                 : std::max(1, static_cast<int>(x.cols()) / 3);
        trees_.assign(cfg_.trees, RegressionTree{});
        for (int t = 0; t < cfg_.trees; ++t) {
            std::mt19937_64 rng(cfg_.seed * 0x9e3779b97f4a7c15ull + t + 1);
            std::vector<int> bootstrap(rows);
            for (int i = 0; i < rows; ++i)
                bootstrap[i] = static_cast<int>(rng() % rows);
            trees_[t].fit(x, y, std::move(bootstrap), mtry, cfg_.min_leaf, rng);
        }
    }

    double predict(const Eigen::RowVectorXd& x) const {
        double acc = 0.0;
        for (const auto& tree : trees_) acc += tree.predict(x);
        return acc / static_cast<double>(trees_.size());
    }

private:
    ForestConfig cfg_;
    std::vector<RegressionTree> trees_;
};

// Lagged-window supervised set for one tract: rows are train targets, columns
// the preceding `lags` counts of that tract only.
inline PredictionFrame rf_fit_predict(const ObservationCube& cube, const DatasetSplit& split,
                                      const IndexRange& range, int lags = 12,
                                      ForestConfig forest = {}) {
    auto train_targets = window_targets(split.train, lags);
    if (train_targets.empty())
        throw DataError("random forest baseline needs train history of at least lags+1 steps");
    auto eval_targets = window_targets(range, lags);
    if (eval_targets.empty()) throw DataError("evaluation range shorter than the lag window");

    PredictionFrame f;
    f.tract_ids = cube.tract_ids;
    f.y.resize(eval_targets.size(), cube.N());
    f.yhat.resize(eval_targets.size(), cube.N());
    for (std::size_t r = 0; r < eval_targets.size(); ++r)
        f.time_index.push_back(cube.time_index[eval_targets[r]]);

    for (int node = 0; node < cube.N(); ++node) {
        Eigen::MatrixXd x(train_targets.size(), lags);
        Eigen::VectorXd y(train_targets.size());
        for (std::size_t r = 0; r < train_targets.size(); ++r) {
            int t = train_targets[r];
            for (int l = 0; l < lags; ++l) x(static_cast<int>(r), l) = cube.counts(t - lags + l, node);
            y(static_cast<int>(r)) = cube.counts(t, node);
        }
        ForestConfig fc = forest;
        fc.seed = forest.seed ^ (0x51ed2701ull + static_cast<std::uint64_t>(node) * 0x2c1b3c6dull);
        RandomForestRegressor rf(fc);
        rf.fit(x, y);
        for (std::size_t r = 0; r < eval_targets.size(); ++r) {
            int t = eval_targets[r];
            Eigen::RowVectorXd probe(lags);
            for (int l = 0; l < lags; ++l) probe(l) = cube.counts(t - lags + l, node);
            f.y(static_cast<int>(r), node) = cube.counts(t, node);
            f.yhat(static_cast<int>(r), node) = rf.predict(probe);
        }
    }
    return f;
}

}  // namespace urbanfuse
