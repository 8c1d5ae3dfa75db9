#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "urbanfuse/runner.hpp"

using namespace urbanfuse;

namespace {

// Exit codes: 0 ok, 2 config error, 3 data error, 4 training failure, 1 other.
int guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

struct ConfigOverrides {
    std::string model, variant, output_dir, dataset;
    std::int64_t seed = -1;

    ExperimentConfig load(const std::string& config_path) const {
        ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
        if (!model.empty()) cfg.model = model;
        if (!variant.empty()) cfg.variant = variant;
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (!dataset.empty()) cfg.dataset = dataset;
        if (seed >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.stgcn.seed = cfg.seed;
            cfg.stzinb.seed = cfg.seed;
        }
        return cfg;
    }
};

void add_override_flags(CLI::App* cmd, ConfigOverrides& ov) {
    cmd->add_option("--model", ov.model, "override config model (stgcn|stzinb|ha|rf)");
    cmd->add_option("--variant", ov.variant, "override config variant (3d|3d2d|3d2d1d)");
    cmd->add_option("--output-dir", ov.output_dir, "override config output_dir");
    cmd->add_option("--dataset", ov.dataset, "override config dataset name");
    cmd->add_option("--seed", ov.seed, "override config seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"urbanfuse: homophily-embedded spatio-temporal graph forecasting"};
    app.require_subcommand(1);

    std::string config_path;
    ConfigOverrides ov;

    auto* build_graph = app.add_subcommand(
        "build-graph", "construct and export the distance and homophily adjacencies");
    build_graph->add_option("--config", config_path, "experiment config JSON")->required();
    add_override_flags(build_graph, ov);

    auto* prepare = app.add_subcommand(
        "prepare", "ingest observations/weather, build the cube and the chronological split");
    prepare->add_option("--config", config_path, "experiment config JSON")->required();
    add_override_flags(prepare, ov);

    auto* train = app.add_subcommand(
        "train", "run the full workflow: graph, tensors, training, evaluation");
    train->add_option("--config", config_path, "experiment config JSON")->required();
    add_override_flags(train, ov);

    auto* evaluate = app.add_subcommand("evaluate", "compute the metric suite from dumps");
    std::string pred_path, dist_path, tracts_path, metrics_out = "metrics.json";
    std::string eval_dataset = "dataset", eval_model = "model", eval_variant = "-";
    evaluate->add_option("--predictions", pred_path, "prediction CSV")->required();
    evaluate->add_option("--distribution", dist_path, "distribution CSV (adds MPIW/PICP)");
    evaluate->add_option("--tracts", tracts_path, "tract GeoJSON (for the downtown subset)");
    evaluate->add_option("--out", metrics_out, "output metrics JSON path");
    evaluate->add_option("--dataset", eval_dataset, "dataset name for the report");
    evaluate->add_option("--model", eval_model, "model name for the report");
    evaluate->add_option("--variant", eval_variant, "variant name for the report");

    auto* compare = app.add_subcommand(
        "compare", "per-tract MAPE difference between two evaluated runs");
    std::string dir_a, dir_b, compare_out = "compare";
    compare->add_option("--run-a", dir_a, "baseline run directory")->required();
    compare->add_option("--run-b", dir_b, "candidate run directory")->required();
    compare->add_option("--out", compare_out, "output directory");

    auto* report = app.add_subcommand("report",
                                      "assemble evaluated runs into the comparison table");
    std::vector<std::string> run_dirs;
    std::string report_out = "report";
    report->add_option("--runs", run_dirs, "evaluated run directories")->required();
    report->add_option("--out", report_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (build_graph->parsed())
        return guarded([&] {
            ExperimentRun run(ov.load(config_path));
            run.stage_ingest();
            run.stage_graph();
            std::cout << "adjacency exports written to " << run.dir() << "\n";
        });

    if (prepare->parsed())
        return guarded([&] {
            ExperimentRun run(ov.load(config_path));
            run.stage_ingest();
            run.stage_prepare();
            std::cout << "cube.csv, weather_series.csv and split.json written to " << run.dir()
                      << " (zero rate " << run.cube().zero_rate() << ")\n";
        });

    if (train->parsed())
        return guarded([&] {
            ExperimentRun run(ov.load(config_path));
            run.run();
            if (!run.converged())
                std::cout << "training did not converge; null metrics written to " << run.dir()
                          << "\n";
            else
                std::cout << "run complete: " << run.dir() << " (test MAE "
                          << run.metrics().mae_tract << ")\n";
        });

    if (evaluate->parsed())
        return guarded([&] {
            PredictionFrame pred = read_predictions_csv(pred_path);
            std::optional<DistributionFrame> dist;
            if (!dist_path.empty()) dist = read_distribution_csv(dist_path);
            std::vector<std::string> downtown;
            if (!tracts_path.empty()) downtown = downtown_tracts(ingest_tracts(tracts_path));
            MetricsReport r =
                evaluate_metrics(pred, dist ? &*dist : nullptr, downtown);
            r.dataset = eval_dataset;
            r.model = eval_model;
            r.variant = eval_variant;
            json out = r.to_json();
            out["converged"] = true;
            out["label"] = eval_model + (eval_variant == "-" ? "" : "-" + eval_variant);
            write_text_file(metrics_out, out.dump(2) + "\n");
            std::cout << "metrics written to " << metrics_out << "\n";
        });

    if (compare->parsed())
        return guarded([&] {
            json summary = compare_runs(dir_a, dir_b, compare_out);
            std::cout << "delta-MAPE export written to " << compare_out << " (improved "
                      << summary["improved_fraction_pct"] << "% of tracts)\n";
        });

    if (report->parsed())
        return guarded([&] {
            write_report(run_dirs, report_out);
            std::cout << "comparison table written to " << report_out << "\n";
        });

    return 1;
}
