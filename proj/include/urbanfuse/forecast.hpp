#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "urbanfuse/cube.hpp"
#include "urbanfuse/nn/core.hpp"

namespace urbanfuse {

// Indices usable as one-step-ahead targets. The input window may reach back
// across the segment's left boundary (that is past data under a
// chronological split); only the target itself must lie in the segment.
inline std::vector<int> window_targets(const IndexRange& seg, int t_in) {
    std::vector<int> out;
    for (int t = std::max(seg.begin, t_in); t < seg.end; ++t) out.push_back(t);
    return out;
}

// Input tensor for one target step: frames [t - t_in, t), channel 0 holds
// normalized counts, optional weather channels are z-scored and broadcast to
// every node.
inline nn::Seq assemble_window(const ObservationCube& cube, int target_t, int t_in,
                               const CountNormalizer* norm, const WeatherSeries* weather,
                               const WeatherNormalizer* wnorm) {
    if (target_t - t_in < 0 || target_t >= cube.T())
        throw DataError("window out of range for target index " + std::to_string(target_t));
    if (weather && weather->time_index != cube.time_index)
        throw DataError("weather clock does not match the observation cube");
    const int n = cube.N();
    const int channels = 1 + (weather ? static_cast<int>(weather->values.cols()) : 0);
    nn::Seq frames;
    for (int t = target_t - t_in; t < target_t; ++t) {
        nn::Mat frame(n, channels);
        for (int i = 0; i < n; ++i)
            frame(i, 0) = norm ? norm->normalize(cube.counts(t, i)) : cube.counts(t, i);
        if (weather) {
            Eigen::RowVectorXd row = weather->values.row(t);
            if (wnorm)
                row = (row.array() - wnorm->mean.transpose().array()) /
                      wnorm->stdev.transpose().array();
            for (int i = 0; i < n; ++i) frame.row(i).tail(channels - 1) = row;
        }
        frames.push_back(frame);
    }
    return frames;
}

// ---------------------------------------------------------------------------
// Model-agnostic dump formats shared by the forecasters, baselines, and the
// metrics suite.
// ---------------------------------------------------------------------------

struct PredictionFrame {
    std::vector<std::int64_t> time_index;  // target timestamps
    std::vector<std::string> tract_ids;
    Eigen::MatrixXd y;     // T x N ground truth, original units
    Eigen::MatrixXd yhat;  // T x N predictions, original units

    int T() const { return static_cast<int>(time_index.size()); }
    int N() const { return static_cast<int>(tract_ids.size()); }
};

struct DistributionFrame {
    std::vector<std::int64_t> time_index;
    std::vector<std::string> tract_ids;
    Eigen::MatrixXd n, p, pi;   // T x N parameter fields
    Eigen::MatrixXd mean;       // T x N predictive mean
    Eigen::MatrixXd q10, q90;   // T x N interval bounds
};

inline void write_predictions_csv(const PredictionFrame& f, const std::string& path) {
    std::ostringstream ss;
    ss << "timestamp,tract_id,y,yhat\n";
    for (int t = 0; t < f.T(); ++t)
        for (int i = 0; i < f.N(); ++i)
            ss << format_rfc3339(f.time_index[t]) << "," << f.tract_ids[i] << ","
               << format_double(f.y(t, i)) << "," << format_double(f.yhat(t, i)) << "\n";
    write_text_file(path, ss.str());
}

inline PredictionFrame read_predictions_csv(const std::string& path) {
    CsvTable csv = read_csv(path);
    std::vector<std::int64_t> times;
    std::vector<std::string> tracts;
    std::map<std::int64_t, int> trow;
    std::map<std::string, int> tcol;
    for (const auto& row : csv.rows) {
        auto ts = parse_rfc3339(row[0]);
        if (!ts) throw DataError("prediction CSV: bad timestamp " + row[0]);
        if (!trow.count(*ts)) {
            trow[*ts] = static_cast<int>(times.size());
            times.push_back(*ts);
        }
        if (!tcol.count(row[1])) {
            tcol[row[1]] = static_cast<int>(tracts.size());
            tracts.push_back(row[1]);
        }
    }
    PredictionFrame f;
    f.time_index = times;
    f.tract_ids = tracts;
    f.y.resize(times.size(), tracts.size());
    f.yhat.resize(times.size(), tracts.size());
    f.y.setConstant(std::numeric_limits<double>::quiet_NaN());
    f.yhat.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : csv.rows) {
        int t = trow[*parse_rfc3339(row[0])];
        int i = tcol[row[1]];
        f.y(t, i) = std::stod(row[2]);
        f.yhat(t, i) = std::stod(row[3]);
    }
    if (f.y.hasNaN() || f.yhat.hasNaN())
        throw DataError("prediction CSV is not a complete (time x tract) grid: " + path);
    return f;
}

inline void write_distribution_csv(const DistributionFrame& f, const std::string& path) {
    std::ostringstream ss;
    ss << "timestamp,tract_id,n,p,pi,mean,q10,q90\n";
    for (std::size_t t = 0; t < f.time_index.size(); ++t)
        for (std::size_t i = 0; i < f.tract_ids.size(); ++i) {
            int ti = static_cast<int>(t), ii = static_cast<int>(i);
            ss << format_rfc3339(f.time_index[t]) << "," << f.tract_ids[i] << ","
               << format_double(f.n(ti, ii)) << "," << format_double(f.p(ti, ii)) << ","
               << format_double(f.pi(ti, ii)) << "," << format_double(f.mean(ti, ii)) << ","
               << format_double(f.q10(ti, ii)) << "," << format_double(f.q90(ti, ii)) << "\n";
        }
    write_text_file(path, ss.str());
}

inline DistributionFrame read_distribution_csv(const std::string& path) {
    CsvTable csv = read_csv(path);
    std::vector<std::int64_t> times;
    std::vector<std::string> tracts;
    std::map<std::int64_t, int> trow;
    std::map<std::string, int> tcol;
    for (const auto& row : csv.rows) {
        auto ts = parse_rfc3339(row[0]);
        if (!ts) throw DataError("distribution CSV: bad timestamp " + row[0]);
        if (!trow.count(*ts)) {
            trow[*ts] = static_cast<int>(times.size());
            times.push_back(*ts);
        }
        if (!tcol.count(row[1])) {
            tcol[row[1]] = static_cast<int>(tracts.size());
            tracts.push_back(row[1]);
        }
    }
    DistributionFrame f;
    f.time_index = times;
    f.tract_ids = tracts;
    for (Eigen::MatrixXd* m : {&f.n, &f.p, &f.pi, &f.mean, &f.q10, &f.q90})
        m->resize(times.size(), tracts.size());
    for (const auto& row : csv.rows) {
        int t = trow[*parse_rfc3339(row[0])];
        int i = tcol[row[1]];
        f.n(t, i) = std::stod(row[2]);
        f.p(t, i) = std::stod(row[3]);
        f.pi(t, i) = std::stod(row[4]);
        f.mean(t, i) = std::stod(row[5]);
        f.q10(t, i) = std::stod(row[6]);
        f.q90(t, i) = std::stod(row[7]);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Training history + checkpoint helpers
// ---------------------------------------------------------------------------

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> lr;
    int best_epoch = -1;
    bool converged = false;
    std::string note;

    json to_json() const {
        return json{{"train_loss", train_loss}, {"val_loss", val_loss},   {"lr", lr},
                    {"best_epoch", best_epoch}, {"converged", converged}, {"note", note}};
    }
};

inline json params_to_json(const std::vector<nn::Param*>& params) {
    json out = json::object();
    for (const nn::Param* p : params) {
        json tensor;
        tensor["rows"] = p->value.rows();
        tensor["cols"] = p->value.cols();
        std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
        tensor["data"] = data;
        out[p->name] = tensor;
    }
    return out;
}

inline void params_from_json(const json& j, const std::vector<nn::Param*>& params) {
    for (nn::Param* p : params) {
        if (!j.contains(p->name)) throw DataError("checkpoint missing tensor " + p->name);
        const json& tensor = j[p->name];
        if (tensor["rows"].get<int>() != p->value.rows() ||
            tensor["cols"].get<int>() != p->value.cols())
            throw DataError("checkpoint shape mismatch for tensor " + p->name);
        auto data = tensor["data"].get<std::vector<double>>();
        std::copy(data.begin(), data.end(), p->value.data());
    }
}

}  // namespace urbanfuse
