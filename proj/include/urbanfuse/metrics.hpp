#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "urbanfuse/forecast.hpp"

namespace urbanfuse {

constexpr double kKlEpsilon = 2.2e-16;

// MAE over all (time, tract) cells, optionally restricted to a tract subset.
inline double metric_mae(const PredictionFrame& f,
                         const std::set<std::string>& subset = {}) {
    double acc = 0.0;
    long cells = 0;
    for (int i = 0; i < f.N(); ++i) {
        if (!subset.empty() && !subset.count(f.tract_ids[i])) continue;
        for (int t = 0; t < f.T(); ++t) {
            acc += std::abs(f.y(t, i) - f.yhat(t, i));
            ++cells;
        }
    }
    if (cells == 0) throw DataError("MAE subset is empty");
    return acc / static_cast<double>(cells);
}

// Per-tract MAPE with the max(y, 1) zero guard, in percent.
inline std::map<std::string, double> metric_mape_per_tract(const PredictionFrame& f) {
    std::map<std::string, double> out;
    for (int i = 0; i < f.N(); ++i) {
        double acc = 0.0;
        for (int t = 0; t < f.T(); ++t)
            acc += std::abs(f.y(t, i) - f.yhat(t, i)) / std::max(f.y(t, i), 1.0);
        out[f.tract_ids[i]] = acc / static_cast<double>(f.T()) * 100.0;
    }
    return out;
}

inline double metric_kl_div(const PredictionFrame& f, double eps = kKlEpsilon) {
    double acc = 0.0;
    for (int t = 0; t < f.T(); ++t)
        for (int i = 0; i < f.N(); ++i) {
            double y = f.y(t, i);
            if (y == 0.0) continue;  // zero ground truth carries zero weight
            acc += y * std::log((y + eps) / (f.yhat(t, i) + eps));
        }
    return acc / static_cast<double>(f.T() * f.N());
}

inline double metric_mpiw(const Eigen::MatrixXd& q10, const Eigen::MatrixXd& q90) {
    if (q10.rows() != q90.rows() || q10.cols() != q90.cols())
        throw DataError("MPIW: bound shapes differ");
    double acc = 0.0;
    for (int t = 0; t < q10.rows(); ++t)
        for (int i = 0; i < q10.cols(); ++i) {
            if (q10(t, i) > q90(t, i)) throw DataError("MPIW: quantile order violation");
            acc += q90(t, i) - q10(t, i);
        }
    return acc / static_cast<double>(q10.size());
}

// Fraction of ground-truth cells covered by the predicted [q10, q90] band.
inline double metric_picp(const Eigen::MatrixXd& y, const Eigen::MatrixXd& q10,
                          const Eigen::MatrixXd& q90) {
    if (y.rows() != q10.rows() || y.cols() != q10.cols())
        throw DataError("PICP: shape mismatch");
    double covered = 0.0;
    for (int t = 0; t < y.rows(); ++t)
        for (int i = 0; i < y.cols(); ++i) {
            if (q10(t, i) > q90(t, i)) throw DataError("PICP: quantile order violation");
            if (y(t, i) >= q10(t, i) && y(t, i) <= q90(t, i)) covered += 1.0;
        }
    return covered / static_cast<double>(y.size());
}

// Share of true-zero cells predicted as zero after rounding; null when the
// ground truth has no zero cells.
inline std::optional<double> metric_true_zero_rate(const PredictionFrame& f) {
    double zeros = 0.0, hits = 0.0;
    for (int t = 0; t < f.T(); ++t)
        for (int i = 0; i < f.N(); ++i)
            if (f.y(t, i) == 0.0) {
                zeros += 1.0;
                if (std::llround(f.yhat(t, i)) == 0) hits += 1.0;
            }
    if (zeros == 0.0) return std::nullopt;
    return hits / zeros;
}

// Micro-averaged F1 over integer count classes; with one prediction per cell
// this equals the exact-match rate.
inline double metric_f1(const PredictionFrame& f) {
    double hits = 0.0;
    for (int t = 0; t < f.T(); ++t)
        for (int i = 0; i < f.N(); ++i)
            if (std::llround(f.yhat(t, i)) == std::llround(f.y(t, i))) hits += 1.0;
    return hits / static_cast<double>(f.T() * f.N());
}

// Macro alternative, kept behind its own entry point.
inline double metric_f1_macro(const PredictionFrame& f) {
    std::map<long long, std::array<double, 3>> stats;  // class -> {tp, fp, fn}
    for (int t = 0; t < f.T(); ++t)
        for (int i = 0; i < f.N(); ++i) {
            long long truth = std::llround(f.y(t, i));
            long long pred = std::llround(f.yhat(t, i));
            if (truth == pred) {
                stats[truth][0] += 1.0;
            } else {
                stats[pred][1] += 1.0;
                stats[truth][2] += 1.0;
            }
        }
    double acc = 0.0;
    int classes = 0;
    for (const auto& [cls, s] : stats) {
        double denom = 2.0 * s[0] + s[1] + s[2];
        if (denom == 0.0) continue;
        acc += 2.0 * s[0] / denom;
        ++classes;
    }
    return classes == 0 ? 0.0 : acc / classes;
}

struct MetricsReport {
    std::string dataset, model, variant, split_name = "test";
    double mae_tract = 0.0;
    std::optional<double> mae_downtown;
    std::map<std::string, double> mape_per_tract;
    double kl_div = 0.0;
    std::optional<double> mpiw, picp;
    std::optional<double> true_zero_rate;
    double f1 = 0.0;

    json to_json() const {
        auto opt = [](const std::optional<double>& v) {
            return v ? json(*v) : json(nullptr);
        };
        json mape = json::object();
        for (const auto& [id, v] : mape_per_tract) mape[id] = v;
        return json{{"dataset", dataset},
                    {"model", model},
                    {"variant", variant},
                    {"split", split_name},
                    {"mae_tract", mae_tract},
                    {"mae_downtown", opt(mae_downtown)},
                    {"kl_div", kl_div},
                    {"mpiw", opt(mpiw)},
                    {"picp", opt(picp)},
                    {"true_zero_rate", opt(true_zero_rate)},
                    {"f1", f1},
                    {"mape_per_tract", mape}};
    }
};

// Full suite over a prediction dump; the distribution dump (when present)
// adds MPIW and PICP. Predictions must already be in original units.
inline MetricsReport evaluate_metrics(const PredictionFrame& pred,
                                      const DistributionFrame* dist,
                                      const std::vector<std::string>& downtown) {
    MetricsReport r;
    r.mae_tract = metric_mae(pred);
    if (!downtown.empty())
        r.mae_downtown = metric_mae(pred, {downtown.begin(), downtown.end()});
    r.mape_per_tract = metric_mape_per_tract(pred);
    r.kl_div = metric_kl_div(pred);
    if (dist) {
        r.mpiw = metric_mpiw(dist->q10, dist->q90);
        r.picp = metric_picp(pred.y, dist->q10, dist->q90);
    }
    r.true_zero_rate = metric_true_zero_rate(pred);
    r.f1 = metric_f1(pred);
    return r;
}

inline void write_mape_csv(const MetricsReport& r, const std::string& path) {
    std::ostringstream ss;
    ss << "tract_id,mape\n";
    for (const auto& [id, v] : r.mape_per_tract) ss << id << "," << format_double(v) << "\n";
    write_text_file(path, ss.str());
}

}  // namespace urbanfuse
