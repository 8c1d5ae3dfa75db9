#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "urbanfuse/common.hpp"
#include "urbanfuse/geo.hpp"

namespace urbanfuse {

// T x N integer event counts on a fixed clock. Counts are stored as doubles
// holding integral values so model code can consume them directly.
struct ObservationCube {
    std::vector<std::int64_t> time_index;  // epoch seconds, strictly increasing, constant dt
    std::vector<std::string> tract_ids;    // node order
    Eigen::MatrixXd counts;                // T x N
    int interval_hours = 1;

    int T() const { return static_cast<int>(time_index.size()); }
    int N() const { return static_cast<int>(tract_ids.size()); }

    double zero_rate() const {
        if (counts.size() == 0) return 0.0;
        double zeros = (counts.array() == 0.0).count();
        return zeros / static_cast<double>(counts.size());
    }

    void validate() const {
        if (static_cast<int>(time_index.size()) != counts.rows() ||
            static_cast<int>(tract_ids.size()) != counts.cols())
            throw DataError("observation cube shape mismatch");
        const std::int64_t dt = static_cast<std::int64_t>(interval_hours) * 3600;
        for (std::size_t t = 1; t < time_index.size(); ++t)
            if (time_index[t] - time_index[t - 1] != dt)
                throw DataError("observation cube timestamps are not evenly spaced");
        for (int t = 0; t < counts.rows(); ++t)
            for (int n = 0; n < counts.cols(); ++n) {
                double v = counts(t, n);
                if (v < 0 || v != std::floor(v))
                    throw DataError("observation counts must be nonnegative integers");
            }
    }
};

struct RasterizeReport {
    std::size_t input_rows = 0;
    std::size_t counted = 0;
    std::size_t dropped_outside_window = 0;
    std::size_t dropped_outside_tracts = 0;
    std::size_t rejected_rows = 0;  // unparseable timestamp or malformed cells

    std::size_t dropped() const { return dropped_outside_window + dropped_outside_tracts; }

    json to_json() const {
        return json{{"input_rows", input_rows},
                    {"counted", counted},
                    {"dropped_outside_window", dropped_outside_window},
                    {"dropped_outside_tracts", dropped_outside_tracts},
                    {"rejected_rows", rejected_rows}};
    }
};

// Bins an event CSV (columns: timestamp, then tract_id and/or lat+lon) into a
// cube. Rows with a tract_id use it directly; otherwise the point is matched
// by point-in-polygon. Dropped and rejected rows are tallied, never silently
// lost: counted + dropped + rejected == input rows.
inline ObservationCube rasterize_events(const std::string& events_path,
                                        const std::vector<TractGeometry>& tracts,
                                        int interval_hours, std::int64_t window_start,
                                        std::int64_t window_end,
                                        RasterizeReport* report = nullptr) {
    if (interval_hours <= 0) throw ConfigError("interval must be positive");
    const std::int64_t dt = static_cast<std::int64_t>(interval_hours) * 3600;
    if (window_end <= window_start) throw ConfigError("empty observation window");
    if ((window_end - window_start) % dt != 0)
        throw ConfigError("interval does not divide the observation window evenly");

    CsvTable csv = read_csv(events_path);
    int ts_col = csv.column("timestamp");
    int id_col = csv.column("tract_id");
    int lat_col = csv.column("lat");
    int lon_col = csv.column("lon");
    if (ts_col < 0) throw DataError("events CSV missing timestamp column");
    if (id_col < 0 && (lat_col < 0 || lon_col < 0))
        throw DataError("events CSV needs a tract_id column or lat/lon columns");

    std::map<std::string, int> node_of;
    for (std::size_t i = 0; i < tracts.size(); ++i)
        node_of[tracts[i].tract_id] = static_cast<int>(i);

    ObservationCube cube;
    cube.interval_hours = interval_hours;
    cube.tract_ids = tract_ids(tracts);
    const int T = static_cast<int>((window_end - window_start) / dt);
    cube.time_index.resize(T);
    for (int t = 0; t < T; ++t) cube.time_index[t] = window_start + t * dt;
    cube.counts = Eigen::MatrixXd::Zero(T, static_cast<int>(tracts.size()));

    RasterizeReport rep;
    rep.input_rows = csv.rows.size();
    for (const auto& row : csv.rows) {
        if (static_cast<std::size_t>(ts_col) >= row.size()) {
            ++rep.rejected_rows;
            continue;
        }
        auto ts = parse_rfc3339(row[ts_col]);
        if (!ts) {
            ++rep.rejected_rows;
            continue;
        }
        if (*ts < window_start || *ts >= window_end) {
            ++rep.dropped_outside_window;
            continue;
        }

        int node = -1;
        std::string id = id_col >= 0 && static_cast<std::size_t>(id_col) < row.size()
                             ? trim(row[id_col])
                             : "";
        if (!id.empty()) {
            auto it = node_of.find(id);
            if (it != node_of.end()) node = it->second;
        } else if (lat_col >= 0 && lon_col >= 0 &&
                   static_cast<std::size_t>(std::max(lat_col, lon_col)) < row.size()) {
            try {
                LatLon pt{std::stod(row[lat_col]), std::stod(row[lon_col])};
                for (std::size_t i = 0; i < tracts.size(); ++i)
                    if (!tracts[i].polygon.empty() && point_in_polygon(pt, tracts[i].polygon)) {
                        node = static_cast<int>(i);
                        break;
                    }
            } catch (const std::exception&) {
                ++rep.rejected_rows;
                continue;
            }
        } else {
            ++rep.rejected_rows;
            continue;
        }
        if (node < 0) {
            ++rep.dropped_outside_tracts;
            continue;
        }
        int bin = static_cast<int>((*ts - window_start) / dt);
        cube.counts(bin, node) += 1.0;
        ++rep.counted;
    }
    if (report) *report = rep;
    return cube;
}

// ---------------------------------------------------------------------------
// Weather
// ---------------------------------------------------------------------------

// Column order is fixed; precipitation is the combined rain + snow amount.
inline const std::vector<std::string>& weather_variables() {
    static const std::vector<std::string> v = {"temperature", "humidity", "wind_speed",
                                               "wind_direction", "precipitation"};
    return v;
}

struct WeatherSeries {
    std::vector<std::int64_t> time_index;  // identical to the cube it accompanies
    Eigen::MatrixXd values;                // T x 5

    int T() const { return static_cast<int>(time_index.size()); }
};

// Resamples hourly weather records onto the cube's clock: temperature,
// humidity and wind are bin means, precipitation is the bin sum of
// rain + snow. Bins with no source records are linearly interpolated
// (nearest-filled at the edges) up to `max_gap_bins` consecutive bins.
inline WeatherSeries ingest_weather(const std::string& path, const ObservationCube& target,
                                    int max_gap_bins = 3) {
    CsvTable csv = read_csv(path);
    int ts_col = csv.column("timestamp");
    if (ts_col < 0) throw DataError("weather CSV missing timestamp column");
    std::map<std::string, int> cols;
    for (const char* name :
         {"temperature", "humidity", "wind_speed", "wind_direction", "rain", "snow_depth"}) {
        int c = csv.column(name);
        if (c < 0) throw DataError(std::string("weather CSV missing column ") + name);
        cols[name] = c;
    }

    const int T = target.T();
    const std::int64_t dt = static_cast<std::int64_t>(target.interval_hours) * 3600;
    const std::int64_t start = target.time_index.empty() ? 0 : target.time_index.front();

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(T, 5);
    Eigen::VectorXi hits = Eigen::VectorXi::Zero(T);
    for (const auto& row : csv.rows) {
        auto ts = parse_rfc3339(row[ts_col]);
        if (!ts) throw DataError("weather CSV has unparseable timestamp '" + row[ts_col] + "'");
        if (*ts < start || *ts >= start + T * dt) continue;
        int bin = static_cast<int>((*ts - start) / dt);
        auto val = [&](const char* name) { return std::stod(row[cols[name]]); };
        sums(bin, 0) += val("temperature");
        sums(bin, 1) += val("humidity");
        sums(bin, 2) += val("wind_speed");
        sums(bin, 3) += val("wind_direction");
        sums(bin, 4) += val("rain") + val("snow_depth");
        hits(bin) += 1;
    }

    WeatherSeries w;
    w.time_index = target.time_index;
    w.values.resize(T, 5);
    for (int t = 0; t < T; ++t) {
        if (hits(t) > 0) {
            for (int v = 0; v < 4; ++v) w.values(t, v) = sums(t, v) / hits(t);
            w.values(t, 4) = sums(t, 4);
        } else {
            w.values.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }

    // gap repair
    int t = 0;
    while (t < T) {
        if (!std::isnan(w.values(t, 0))) {
            ++t;
            continue;
        }
        int g0 = t;
        while (t < T && std::isnan(w.values(t, 0))) ++t;
        int g1 = t;  // gap is [g0, g1)
        int len = g1 - g0;
        if (len > max_gap_bins)
            throw DataError("weather coverage gap of " + std::to_string(len) + " bins at " +
                            format_rfc3339(w.time_index[g0]) + " exceeds the imputation limit of " +
                            std::to_string(max_gap_bins));
        if (g0 == 0 && g1 == T) throw DataError("weather file has no usable records in window");
        for (int i = g0; i < g1; ++i) {
            for (int v = 0; v < 5; ++v) {
                if (g0 == 0) {
                    w.values(i, v) = w.values(g1, v);  // leading gap: nearest fill
                } else if (g1 == T) {
                    w.values(i, v) = w.values(g0 - 1, v);  // trailing gap
                } else {
                    double a = w.values(g0 - 1, v), b = w.values(g1, v);
                    double frac = double(i - g0 + 1) / double(len + 1);
                    w.values(i, v) = a + (b - a) * frac;
                }
            }
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Chronological split + normalizers
// ---------------------------------------------------------------------------

struct IndexRange {
    int begin = 0;
    int end = 0;  // half-open
    int size() const { return end - begin; }
};

enum class SplitOrder { train_val_test, train_test_val };

inline SplitOrder split_order_from_string(const std::string& s) {
    std::string l = lower(trim(s));
    if (l == "train-val-test" || l == "train_val_test") return SplitOrder::train_val_test;
    if (l == "train-test-val" || l == "train_test_val") return SplitOrder::train_test_val;
    throw ConfigError("unknown split order: " + s);
}

// Per-dataset z-score over train counts.
struct CountNormalizer {
    double mean = 0.0;
    double stdev = 1.0;

    double normalize(double x) const { return (x - mean) / stdev; }
    double denormalize(double z) const { return z * stdev + mean; }
};

struct WeatherNormalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stdev;

    Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd z = x;
        for (int c = 0; c < z.cols(); ++c)
            z.col(c) = (z.col(c).array() - mean(c)) / stdev(c);
        return z;
    }
};

struct DatasetSplit {
    IndexRange train, validation, test;
    SplitOrder order = SplitOrder::train_val_test;
    CountNormalizer normalizer;

    json to_json() const {
        auto rng = [](const IndexRange& r) { return json{{"begin", r.begin}, {"end", r.end}}; };
        return json{{"train", rng(train)},
                    {"validation", rng(validation)},
                    {"test", rng(test)},
                    {"order", order == SplitOrder::train_val_test ? "train-val-test"
                                                                  : "train-test-val"},
                    {"normalizer", {{"mean", normalizer.mean}, {"stdev", normalizer.stdev}}}};
    }
};

// Contiguous chronological segments with ratios attached to roles
// (train 0.7, test 0.2, validation 0.1 by default). Sizes follow
// floor-then-distribute: train and test floor, validation takes the rest.
inline DatasetSplit chronological_split(const ObservationCube& cube,
                                        double train_ratio = 0.7, double test_ratio = 0.2,
                                        double val_ratio = 0.1,
                                        SplitOrder order = SplitOrder::train_val_test,
                                        int min_horizon = 1) {
    const int T = cube.T();
    if (std::abs(train_ratio + test_ratio + val_ratio - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    if (T < min_horizon + 1)
        throw DataError("time axis too short: T=" + std::to_string(T) +
                        " needs at least horizon+1=" + std::to_string(min_horizon + 1));

    int n_train = static_cast<int>(std::floor(train_ratio * T));
    int n_test = static_cast<int>(std::floor(test_ratio * T));
    int n_val = T - n_train - n_test;
    if (n_train < 1 || n_test < 1 || n_val < 1)
        throw DataError("time axis too short for a 3-way split: T=" + std::to_string(T));

    DatasetSplit s;
    s.order = order;
    s.train = {0, n_train};
    if (order == SplitOrder::train_val_test) {
        s.validation = {n_train, n_train + n_val};
        s.test = {n_train + n_val, T};
    } else {
        s.test = {n_train, n_train + n_test};
        s.validation = {n_train + n_test, T};
    }

    const auto train_block = cube.counts.middleRows(s.train.begin, s.train.size());
    double mean = train_block.mean();
    double var = (train_block.array() - mean).square().sum() /
                 static_cast<double>(train_block.size());
    double sd = std::sqrt(var);
    s.normalizer = {mean, sd > 1e-12 ? sd : 1.0};
    return s;
}

inline WeatherNormalizer fit_weather_normalizer(const WeatherSeries& w, const IndexRange& train) {
    WeatherNormalizer n;
    const auto block = w.values.middleRows(train.begin, train.size());
    n.mean = block.colwise().mean();
    n.stdev.resize(w.values.cols());
    for (int c = 0; c < w.values.cols(); ++c) {
        double sd = std::sqrt((block.col(c).array() - n.mean(c)).square().sum() /
                              static_cast<double>(block.rows()));
        n.stdev(c) = sd > 1e-12 ? sd : 1.0;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Cube I/O: wide CSV (timestamp column + one column per tract) with a JSON
// manifest recording counts, zero rate and content hash.
// ---------------------------------------------------------------------------

inline void write_cube_csv(const ObservationCube& cube, const std::string& path,
                           const RasterizeReport* report = nullptr) {
    std::ostringstream ss;
    ss << "timestamp";
    for (const auto& id : cube.tract_ids) ss << "," << id;
    ss << "\n";
    for (int t = 0; t < cube.T(); ++t) {
        ss << format_rfc3339(cube.time_index[t]);
        for (int n = 0; n < cube.N(); ++n)
            ss << "," << static_cast<long long>(cube.counts(t, n));
        ss << "\n";
    }
    write_text_file(path, ss.str());

    json manifest{{"rows", cube.T()},
                  {"tracts", cube.N()},
                  {"interval_hours", cube.interval_hours},
                  {"zero_rate", cube.zero_rate()},
                  {"total_events", static_cast<long long>(cube.counts.sum())},
                  {"content_hash", file_content_hash(path)}};
    if (report) manifest["ingest"] = report->to_json();
    write_text_file(path + ".manifest.json", manifest.dump(2) + "\n");
}

inline ObservationCube read_cube_csv(const std::string& path, int interval_hours) {
    CsvTable csv = read_csv(path);
    if (csv.header.empty() || csv.header[0] != "timestamp")
        throw DataError("cube CSV must start with a timestamp column: " + path);
    ObservationCube cube;
    cube.interval_hours = interval_hours;
    for (std::size_t i = 1; i < csv.header.size(); ++i) cube.tract_ids.push_back(csv.header[i]);
    const int N = cube.N();
    cube.counts.resize(static_cast<int>(csv.rows.size()), N);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        auto ts = parse_rfc3339(csv.rows[r][0]);
        if (!ts) throw DataError("cube CSV row " + std::to_string(r + 1) + ": bad timestamp");
        cube.time_index.push_back(*ts);
        for (int n = 0; n < N; ++n)
            cube.counts(static_cast<int>(r), n) = std::stod(csv.rows[r][n + 1]);
    }
    cube.validate();
    return cube;
}

inline void write_weather_csv(const WeatherSeries& w, const std::string& path) {
    std::ostringstream ss;
    ss << "timestamp";
    for (const auto& v : weather_variables()) ss << "," << v;
    ss << "\n";
    for (int t = 0; t < w.T(); ++t) {
        ss << format_rfc3339(w.time_index[t]);
        for (int c = 0; c < w.values.cols(); ++c) ss << "," << format_double(w.values(t, c));
        ss << "\n";
    }
    write_text_file(path, ss.str());
}

inline WeatherSeries read_weather_series_csv(const std::string& path) {
    CsvTable csv = read_csv(path);
    WeatherSeries w;
    w.values.resize(static_cast<int>(csv.rows.size()), 5);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        auto ts = parse_rfc3339(csv.rows[r][0]);
        if (!ts) throw DataError("weather series CSV row " + std::to_string(r + 1) +
                                 ": bad timestamp");
        w.time_index.push_back(*ts);
        for (int c = 0; c < 5; ++c)
            w.values(static_cast<int>(r), c) = std::stod(csv.rows[r][c + 1]);
    }
    return w;
}

}  // namespace urbanfuse
