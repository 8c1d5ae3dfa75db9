#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "urbanfuse/baselines.hpp"
#include "urbanfuse/graph.hpp"
#include "urbanfuse/metrics.hpp"
#include "urbanfuse/stgcn.hpp"
#include "urbanfuse/stzinb.hpp"

namespace urbanfuse {

namespace fs = std::filesystem;

struct ExperimentConfig {
    std::string dataset = "dataset";
    std::string model = "stgcn";    // stgcn | stzinb | ha | rf
    std::string variant = "3d";     // 3d | 3d2d | 3d2d1d (graph models only)
    std::uint64_t seed = 0;
    std::string output_dir = "run";

    struct Paths {
        std::string tracts;
        std::string features;
        std::string feature_manifest;
        std::string events;
        std::string cube;            // pre-rasterized alternative to events
        std::string weather;         // raw hourly records
        std::string weather_series;  // resampled alternative
    } paths;

    int interval_hours = 1;
    std::optional<std::int64_t> window_start, window_end;  // required with events

    struct Graph {
        double sigma = 10.0;
        double epsilon_d = 0.3;
        std::set<CorrCategory> categories = {CorrCategory::demography, CorrCategory::land,
                                             CorrCategory::poi};
        bool row_normalize = false;
    } graph;

    struct Split {
        double train = 0.7, test = 0.2, validation = 0.1;
        SplitOrder order = SplitOrder::train_val_test;
    } split;

    StgcnConfig stgcn;
    StzinbConfig stzinb;
    struct Rf {
        int lags = 12;
        int trees = 100;
        int min_leaf = 1;
    } rf;

    bool is_graph_model() const { return model == "stgcn" || model == "stzinb"; }
    bool needs_features() const {
        return is_graph_model() && (variant == "3d2d" || variant == "3d2d1d");
    }
    bool needs_weather() const { return is_graph_model() && variant == "3d2d1d"; }
    int model_horizon() const {
        if (model == "stgcn") return stgcn.input_horizon;
        if (model == "stzinb") return stzinb.input_horizon;
        if (model == "rf") return rf.lags;
        return 1;
    }

    void validate() const {
        if (model != "stgcn" && model != "stzinb" && model != "ha" && model != "rf")
            throw ConfigError("unknown model '" + model + "'");
        if (is_graph_model() && variant != "3d" && variant != "3d2d" && variant != "3d2d1d")
            throw ConfigError("unknown variant '" + variant + "'");
        if (paths.tracts.empty()) throw ConfigError("config needs paths.tracts");
        if (paths.events.empty() == paths.cube.empty())
            throw ConfigError("config needs exactly one of paths.events or paths.cube");
        if (!paths.events.empty() && (!window_start || !window_end))
            throw ConfigError("an events file needs window.start and window.end");
        if (needs_features() && (paths.features.empty() || paths.feature_manifest.empty()))
            throw ConfigError("variant " + variant + " needs feature paths");
        if (needs_weather() && paths.weather.empty() && paths.weather_series.empty())
            throw ConfigError("variant 3d2d1d needs a weather file");
        if (output_dir.empty()) throw ConfigError("config needs output_dir");
        if (std::abs(split.train + split.test + split.validation - 1.0) > 1e-9)
            throw ConfigError("split ratios must sum to 1");
        if (model == "stgcn") stgcn.validate();
        if (model == "stzinb") stzinb.validate();
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c;
        c.dataset = j.value("dataset", c.dataset);
        c.model = lower(j.value("model", c.model));
        c.variant = lower(j.value("variant", c.variant));
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("paths")) {
            const json& p = j["paths"];
            c.paths.tracts = p.value("tracts", "");
            c.paths.features = p.value("features", "");
            c.paths.feature_manifest = p.value("feature_manifest", "");
            c.paths.events = p.value("events", "");
            c.paths.cube = p.value("cube", "");
            c.paths.weather = p.value("weather", "");
            c.paths.weather_series = p.value("weather_series", "");
        }
        c.interval_hours = j.value("interval_hours", c.interval_hours);
        if (j.contains("window")) {
            auto parse = [&](const char* key) -> std::optional<std::int64_t> {
                if (!j["window"].contains(key)) return std::nullopt;
                auto ts = parse_rfc3339(j["window"][key].get<std::string>());
                if (!ts) throw ConfigError(std::string("window.") + key + " is not RFC 3339");
                return ts;
            };
            c.window_start = parse("start");
            c.window_end = parse("end");
        }
        if (j.contains("graph")) {
            const json& g = j["graph"];
            c.graph.sigma = g.value("sigma", c.graph.sigma);
            c.graph.epsilon_d = g.value("epsilon_d", c.graph.epsilon_d);
            c.graph.row_normalize = g.value("row_normalize", c.graph.row_normalize);
            if (g.contains("categories")) {
                c.graph.categories.clear();
                for (const auto& s : g["categories"])
                    c.graph.categories.insert(corr_category_from_string(s.get<std::string>()));
            }
        }
        if (j.contains("split")) {
            const json& s = j["split"];
            c.split.train = s.value("train", c.split.train);
            c.split.test = s.value("test", c.split.test);
            c.split.validation = s.value("validation", c.split.validation);
            if (s.contains("order"))
                c.split.order = split_order_from_string(s["order"].get<std::string>());
        }
        if (j.contains("stgcn")) c.stgcn = StgcnConfig::from_json(j["stgcn"]);
        if (j.contains("stzinb")) c.stzinb = StzinbConfig::from_json(j["stzinb"]);
        if (j.contains("rf")) {
            c.rf.lags = j["rf"].value("lags", c.rf.lags);
            c.rf.trees = j["rf"].value("trees", c.rf.trees);
            c.rf.min_leaf = j["rf"].value("min_leaf", c.rf.min_leaf);
        }
        c.stgcn.seed = c.seed;
        c.stzinb.seed = c.seed;
        return c;
    }

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        json j;
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        return from_json(j);
    }

    std::string label() const {
        if (model == "ha") return "HA";
        if (model == "rf") return "RF";
        return (model == "stgcn" ? std::string("STGCN-") : std::string("STZINB-")) + variant;
    }
};

// ---------------------------------------------------------------------------
// Staged pipeline. Artifacts accumulate in the output directory; a failure
// halts with the stage name while the manifest lists completed stages.
// ---------------------------------------------------------------------------

class ExperimentRun {
public:
    explicit ExperimentRun(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        dir_ = fs::path(cfg_.output_dir);
        fs::create_directories(dir_);
    }

    const ExperimentConfig& config() const { return cfg_; }
    const fs::path& dir() const { return dir_; }
    const std::vector<TractGeometry>& tracts() const { return tracts_; }
    const ObservationCube& cube() const { return cube_; }
    const DatasetSplit& split() const { return split_; }
    bool converged() const { return converged_; }
    const MetricsReport& metrics() const { return metrics_; }

    void stage_ingest() {
        run_stage("ingest", [&] {
            tracts_ = ingest_tracts(cfg_.paths.tracts);
            synthesize_tract_copy();
            if (cfg_.needs_features() || !cfg_.paths.features.empty()) {
                if (cfg_.paths.features.empty()) return;
                features_ = ingest_features(cfg_.paths.features, cfg_.paths.feature_manifest,
                                            tracts_);
                auto log = impute_missing(*features_);
                notes_.insert(notes_.end(), log.begin(), log.end());
            }
        });
    }

    void stage_graph() {
        run_stage("build-graph", [&] {
            auto dm = pairwise_distances(tracts_, &notes_);
            nn::Mat a_dist = distance_kernel(dm.d, cfg_.graph.sigma, cfg_.graph.epsilon_d);
            graph_.tract_ids = dm.tract_ids;
            graph_.a_dist = a_dist;
            graph_.sigma = cfg_.graph.sigma;
            graph_.epsilon_d = cfg_.graph.epsilon_d;
            if (features_) {
                auto stack = node_correlations(*features_, cfg_.graph.categories, &notes_);
                graph_ = homophily_embed(stack, a_dist, cfg_.graph.sigma, cfg_.graph.epsilon_d,
                                         cfg_.graph.row_normalize);
            } else {
                graph_.a_prime = a_dist;
                graph_.categories.clear();
            }
            write_adjacency_csv(graph_.a_dist, graph_.tract_ids, (dir_ / "a_dist.csv").string());
            write_heatmap_grid(graph_.a_dist, (dir_ / "a_dist.heatmap.csv").string());
            if (features_) {
                write_adjacency_csv(graph_.a_prime, graph_.tract_ids,
                                    (dir_ / "a_prime.csv").string());
                write_adjacency_manifest(graph_, (dir_ / "a_prime.csv").string(),
                                         (dir_ / "a_prime.manifest.json").string());
                write_heatmap_grid(graph_.a_prime, (dir_ / "a_prime.heatmap.csv").string());
            }
            HomophilyGraph dist_only = graph_;
            dist_only.a_prime = graph_.a_dist;
            dist_only.categories.clear();
            write_adjacency_manifest(dist_only, (dir_ / "a_dist.csv").string(),
                                     (dir_ / "a_dist.manifest.json").string());
        });
    }

    void stage_prepare() {
        run_stage("prepare", [&] {
            RasterizeReport rep;
            if (!cfg_.paths.events.empty()) {
                cube_ = rasterize_events(cfg_.paths.events, tracts_, cfg_.interval_hours,
                                         *cfg_.window_start, *cfg_.window_end, &rep);
            } else {
                cube_ = read_cube_csv(cfg_.paths.cube, cfg_.interval_hours);
                if (cube_.tract_ids != tract_ids(tracts_))
                    throw DataError("cube tract order does not match the tract file");
                rep.input_rows = rep.counted = static_cast<std::size_t>(cube_.counts.sum());
            }
            cube_.validate();
            write_cube_csv(cube_, (dir_ / "cube.csv").string(), &rep);

            if (!cfg_.paths.weather_series.empty()) {
                weather_ = read_weather_series_csv(cfg_.paths.weather_series);
                if (weather_->time_index != cube_.time_index)
                    throw DataError("weather series clock does not match the cube");
            } else if (!cfg_.paths.weather.empty()) {
                weather_ = ingest_weather(cfg_.paths.weather, cube_);
            }
            if (weather_) write_weather_csv(*weather_, (dir_ / "weather_series.csv").string());

            split_ = chronological_split(cube_, cfg_.split.train, cfg_.split.test,
                                         cfg_.split.validation, cfg_.split.order,
                                         cfg_.model_horizon());
            write_text_file((dir_ / "split.json").string(), split_.to_json().dump(2) + "\n");
        });
    }

    void stage_train() {
        run_stage("train", [&] {
            const WeatherSeries* w = weather_ ? &*weather_ : nullptr;
            try {
                if (cfg_.model == "stgcn") {
                    nn::Mat adj = cfg_.variant == "3d" ? graph_.a_dist : graph_.a_prime;
                    StgcnConfig mc = cfg_.stgcn;
                    mc.seed = cfg_.seed;
                    StgcnForecaster fc(mc, adj, cfg_.needs_weather());
                    history_ = fc.train(cube_, split_, w);
                    predictions_ = fc.predict_range(cube_, split_.test, w);
                    write_text_file((dir_ / "checkpoint.json").string(),
                                    fc.checkpoint().dump() + "\n");
                } else if (cfg_.model == "stzinb") {
                    nn::Mat adj = cfg_.variant == "3d" ? graph_.a_dist : graph_.a_prime;
                    StzinbConfig mc = cfg_.stzinb;
                    mc.seed = cfg_.seed;
                    StzinbForecaster fc(mc, adj, cfg_.needs_weather(), &notes_);
                    history_ = fc.train(cube_, split_, w);
                    distribution_ = fc.predict_distribution(cube_, split_.test, w);
                    predictions_ = fc.predict_range(cube_, split_.test, w);
                    write_distribution_csv(*distribution_, (dir_ / "distribution.csv").string());
                    write_text_file((dir_ / "checkpoint.json").string(),
                                    fc.checkpoint().dump() + "\n");
                } else if (cfg_.model == "ha") {
                    predictions_ = ha_fit_predict(cube_, split_, split_.test);
                } else {
                    ForestConfig forest;
                    forest.trees = cfg_.rf.trees;
                    forest.min_leaf = cfg_.rf.min_leaf;
                    forest.seed = cfg_.seed;
                    predictions_ = rf_fit_predict(cube_, split_, split_.test, cfg_.rf.lags,
                                                  forest);
                }
            } catch (const TrainingError& e) {
                converged_ = false;
                notes_.push_back(std::string("training did not converge: ") + e.what());
                write_null_metrics(e.what());
                return;
            }
            if (predictions_)
                write_predictions_csv(*predictions_, (dir_ / "predictions.csv").string());
            write_text_file((dir_ / "history.json").string(), history_.to_json().dump(2) + "\n");
        });
    }

    void stage_evaluate() {
        run_stage("evaluate", [&] {
            if (!converged_) return;  // the null report is already on disk
            if (!predictions_) throw DataError("evaluate stage reached without predictions");
            metrics_ = evaluate_metrics(*predictions_,
                                        distribution_ ? &*distribution_ : nullptr,
                                        downtown_tracts(tracts_));
            metrics_.dataset = cfg_.dataset;
            metrics_.model = cfg_.model;
            metrics_.variant = cfg_.is_graph_model() ? cfg_.variant : "-";
            json out = metrics_.to_json();
            out["converged"] = true;
            out["label"] = cfg_.label();
            out["seed"] = cfg_.seed;
            write_text_file((dir_ / "metrics.json").string(), out.dump(2) + "\n");
            write_mape_csv(metrics_, (dir_ / "mape.csv").string());
        });
    }

    // Full workflow.
    void run() {
        stage_ingest();
        stage_graph();
        stage_prepare();
        stage_train();
        stage_evaluate();
        finalize_manifest(true, "");
    }

private:
    template <typename Fn>
    void run_stage(const std::string& name, Fn&& fn) {
        try {
            fn();
        } catch (...) {
            finalize_manifest(false, name);
            throw;
        }
        completed_.push_back(name);
    }

    void synthesize_tract_copy() {
        // keep the geometry beside the artifacts for choropleth exports
        std::ifstream in(cfg_.paths.tracts, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        write_text_file((dir_ / "tracts.geojson").string(), ss.str());
    }

    void write_null_metrics(const std::string& reason) {
        json out{{"dataset", cfg_.dataset},
                 {"model", cfg_.model},
                 {"variant", cfg_.is_graph_model() ? cfg_.variant : "-"},
                 {"split", "test"},
                 {"mae_tract", nullptr},
                 {"mae_downtown", nullptr},
                 {"kl_div", nullptr},
                 {"mpiw", nullptr},
                 {"picp", nullptr},
                 {"true_zero_rate", nullptr},
                 {"f1", nullptr},
                 {"mape_per_tract", json::object()},
                 {"converged", false},
                 {"label", cfg_.label()},
                 {"seed", cfg_.seed},
                 {"reason", reason}};
        write_text_file((dir_ / "metrics.json").string(), out.dump(2) + "\n");
    }

    void finalize_manifest(bool ok, const std::string& failed_stage) {
        json m{{"dataset", cfg_.dataset},
               {"model", cfg_.model},
               {"variant", cfg_.is_graph_model() ? cfg_.variant : "-"},
               {"seed", cfg_.seed},
               {"adjacency", cfg_.variant == "3d" || !cfg_.is_graph_model() ? "distance-only"
                                                                            : "homophily"},
               {"stages_completed", completed_},
               {"failed_stage", ok ? json(nullptr) : json(failed_stage)},
               {"converged", converged_},
               {"notes", notes_}};
        for (const char* f : {"cube.csv", "predictions.csv", "metrics.json", "a_dist.csv",
                              "a_prime.csv", "distribution.csv"}) {
            fs::path p = dir_ / f;
            if (fs::exists(p)) m["hashes"][f] = file_content_hash(p.string());
        }
        write_text_file((dir_ / "run_manifest.json").string(), m.dump(2) + "\n");
    }

    ExperimentConfig cfg_;
    fs::path dir_;
    std::vector<TractGeometry> tracts_;
    std::optional<FeatureTable> features_;
    HomophilyGraph graph_;
    ObservationCube cube_;
    std::optional<WeatherSeries> weather_;
    DatasetSplit split_;
    TrainHistory history_;
    std::optional<PredictionFrame> predictions_;
    std::optional<DistributionFrame> distribution_;
    MetricsReport metrics_;
    bool converged_ = true;
    std::vector<std::string> completed_;
    std::vector<std::string> notes_;
};

// ---------------------------------------------------------------------------
// compare: per-tract MAPE difference between two evaluated runs
// ---------------------------------------------------------------------------

inline json load_run_metrics(const std::string& run_dir) {
    fs::path p = fs::path(run_dir) / "metrics.json";
    std::ifstream in(p);
    if (!in) throw DataError("no metrics.json under " + run_dir);
    return json::parse(in);
}

// Delta = MAPE_B - MAPE_A per tract; negative means run B improved on run A.
inline json compare_runs(const std::string& dir_a, const std::string& dir_b,
                         const std::string& out_dir, double low_activity_threshold = 1.0) {
    json ma = load_run_metrics(dir_a);
    json mb = load_run_metrics(dir_b);
    if (ma.value("converged", false) == false || mb.value("converged", false) == false)
        throw DataError("compare needs two converged runs");
    if (ma["dataset"] != mb["dataset"])
        throw DataError("compare: runs evaluated on different datasets");

    const json& mape_a = ma["mape_per_tract"];
    const json& mape_b = mb["mape_per_tract"];
    std::set<std::string> ids_a, ids_b;
    for (auto it = mape_a.begin(); it != mape_a.end(); ++it) ids_a.insert(it.key());
    for (auto it = mape_b.begin(); it != mape_b.end(); ++it) ids_b.insert(it.key());
    if (ids_a != ids_b) throw DataError("compare: tract sets differ between runs");

    // test-period activity from run A's prediction dump
    std::map<std::string, double> activity;
    {
        auto pred = read_predictions_csv((fs::path(dir_a) / "predictions.csv").string());
        for (int i = 0; i < pred.N(); ++i) activity[pred.tract_ids[i]] = pred.y.col(i).sum();
    }

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "tract_id,mape_a,mape_b,delta_mape,low_activity\n";
    json tracts_out = json::object();
    int improved = 0, total = 0;
    for (const std::string& id : ids_a) {
        double a = mape_a[id].get<double>();
        double b = mape_b[id].get<double>();
        double delta = b - a;
        bool low = activity.count(id) && activity[id] <= low_activity_threshold;
        csv << id << "," << format_double(a) << "," << format_double(b) << ","
            << format_double(delta) << "," << (low ? 1 : 0) << "\n";
        tracts_out[id] = json{{"mape_a", a},
                              {"mape_b", b},
                              {"delta_mape", delta},
                              {"low_activity", low}};
        if (delta < 0.0) ++improved;
        ++total;
    }
    write_text_file((fs::path(out_dir) / "delta_mape.csv").string(), csv.str());

    json summary{{"run_a", ma.value("label", dir_a)},
                 {"run_b", mb.value("label", dir_b)},
                 {"dataset", ma["dataset"]},
                 {"improved_fraction_pct", total ? 100.0 * improved / total : 0.0},
                 {"tracts", tracts_out}};
    write_text_file((fs::path(out_dir) / "compare.json").string(), summary.dump(2) + "\n");

    // choropleth export when geometry is available
    fs::path geo = fs::path(dir_a) / "tracts.geojson";
    if (fs::exists(geo)) {
        std::ifstream in(geo);
        json fc = json::parse(in);
        for (auto& feat : fc["features"]) {
            std::string id = feat["properties"]["tract_id"].is_string()
                                 ? feat["properties"]["tract_id"].get<std::string>()
                                 : feat["properties"]["tract_id"].dump();
            if (tracts_out.contains(id))
                for (auto it = tracts_out[id].begin(); it != tracts_out[id].end(); ++it)
                    feat["properties"][it.key()] = it.value();
        }
        write_text_file((fs::path(out_dir) / "delta_mape.geojson").string(), fc.dump(2) + "\n");
    }
    return summary;
}

// ---------------------------------------------------------------------------
// report: assemble evaluated runs into the eight-column comparison table
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& report_column_order() {
    static const std::vector<std::string> cols = {"HA",        "RF",          "STGCN-3d",
                                                  "STGCN-3d2d", "STGCN-3d2d1d", "STZINB-3d",
                                                  "STZINB-3d2d", "STZINB-3d2d1d"};
    return cols;
}

inline json build_report_table(const std::vector<std::string>& run_dirs) {
    static const std::vector<std::pair<std::string, std::string>> rows = {
        {"mae_tract", "MAE (tract)"},       {"mae_downtown", "MAE (downtown)"},
        {"mpiw", "MPIW"},                   {"kl_div", "KL-Div."},
        {"picp", "PICP"},                   {"true_zero_rate", "True-zero rate"},
        {"f1", "F1"}};
    std::map<std::string, json> by_label;
    std::string dataset;
    for (const auto& dir : run_dirs) {
        json m = load_run_metrics(dir);
        by_label[m.value("label", dir)] = m;
        if (dataset.empty()) dataset = m.value("dataset", "");
    }
    json table{{"dataset", dataset}, {"columns", report_column_order()}, {"rows", json::array()}};
    for (const auto& [key, title] : rows) {
        json row{{"metric", title}, {"values", json::array()}};
        for (const std::string& col : report_column_order()) {
            auto it = by_label.find(col);
            if (it == by_label.end() || !it->second.contains(key) || it->second[key].is_null())
                row["values"].push_back(nullptr);
            else
                row["values"].push_back(it->second[key].get<double>());
        }
        table["rows"].push_back(row);
    }
    return table;
}

inline std::string render_report_table(const json& table) {
    std::ostringstream out;
    out << "Performance comparison (" << table.value("dataset", "") << ")\n";
    out << std::left;
    auto cell = [](const json& v) {
        if (v.is_null()) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
        return std::string(buf);
    };
    out << "| " << std::setw(16) << "Metric";
    for (const auto& c : table["columns"]) out << "| " << std::setw(14) << c.get<std::string>();
    out << "|\n";
    for (const auto& row : table["rows"]) {
        out << "| " << std::setw(16) << row["metric"].get<std::string>();
        for (const auto& v : row["values"]) out << "| " << std::setw(14) << cell(v);
        out << "|\n";
    }
    return out.str();
}

inline void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    json table = build_report_table(run_dirs);
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "comparison.json").string(), table.dump(2) + "\n");

    std::ostringstream csv;
    csv << "metric";
    for (const auto& c : table["columns"]) csv << "," << c.get<std::string>();
    csv << "\n";
    for (const auto& row : table["rows"]) {
        csv << row["metric"].get<std::string>();
        for (const auto& v : row["values"])
            csv << "," << (v.is_null() ? std::string("") : format_double(v.get<double>()));
        csv << "\n";
    }
    write_text_file((fs::path(out_dir) / "comparison.csv").string(), csv.str());
    write_text_file((fs::path(out_dir) / "comparison.txt").string(), render_report_table(table));
}

}  // namespace urbanfuse
