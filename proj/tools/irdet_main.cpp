#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "irdet/config.hpp"
#include "irdet/errors.hpp"
#include "irdet/harness.hpp"
#include "irdet/io.hpp"

namespace {

irdet::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? irdet::default_run_config() : irdet::load_run_config(path);
}

std::vector<irdet::Sample> pick_test_set(const irdet::RunConfig& cfg,
                                         const std::string& which) {
    const auto films = cfg.experiment.dataset_dir.empty()
                           ? irdet::generate_dataset(cfg.dataset, irdet::default_profile_a(),
                                                     irdet::default_profile_b())
                           : irdet::read_dataset(cfg.experiment.dataset_dir);
    const auto [train_films, test_films] =
        irdet::split_films(films, cfg.experiment.train_fraction, cfg.experiment.split_seed);
    (void)train_films;
    std::vector<irdet::Film> chosen;
    for (const auto& f : test_films) {
        const bool is_a = f.campaign == irdet::Campaign::A;
        if (which == "AB" || (which == "A" && is_a) || (which == "B" && !is_a))
            chosen.push_back(f);
    }
    return irdet::film_samples(chosen);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thermal-event detector: synthetic benchmark, training, evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON run configuration");

    auto* gen = app.add_subcommand("generate", "Render the synthetic dataset to disk");
    std::string gen_out = "dataset";
    gen->add_option("--out", gen_out, "Output directory");

    auto* train = app.add_subcommand("train", "Run the configured scenario");
    auto* experiment = app.add_subcommand("experiment", "Run a grid of scenarios");
    std::vector<std::string> scenarios;
    experiment->add_option("--scenarios", scenarios, "Scenario names (default: full grid)");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
    std::string ckpt_path;
    std::string test_set = "AB";
    eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    eval->add_option("--test-set", test_set, "A, B, or AB")
        ->check(CLI::IsMember({"A", "B", "AB"}));

    auto* report = app.add_subcommand("report", "Summarize an emitted report.json");
    std::string report_json = "report.json";
    report->add_option("--json", report_json, "Path to report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = config_or_default(config_path);
            const auto films = irdet::generate_dataset(cfg.dataset, irdet::default_profile_a(),
                                                       irdet::default_profile_b());
            irdet::write_dataset(films, gen_out);
            std::cout << "wrote " << films.size() << " films to " << gen_out << "\n";
        } else if (train->parsed()) {
            const auto cfg = config_or_default(config_path);
            const auto record = irdet::run_experiment(cfg);
            irdet::emit_report({record}, cfg.experiment.output_dir);
            for (const auto& run : record.seeds)
                std::cout << record.scenario << " seed " << run.seed << ": A " << run.map_a
                          << "  B " << run.map_b << "  AB " << run.map_both << "\n";
        } else if (experiment->parsed()) {
            auto cfg = config_or_default(config_path);
            if (scenarios.empty())
                scenarios = {"supervised_full", "supervised_subset", "supervised_single_campaign",
                             "fine_tune", "ssl_method1", "ssl_method2"};
            std::vector<irdet::RunRecord> records;
            for (const auto& sc : scenarios) {
                cfg.experiment.scenario = sc;
                records.push_back(irdet::run_experiment(cfg));
                std::cout << "finished " << sc << "\n";
            }
            irdet::emit_report(records, cfg.experiment.output_dir);
            std::cout << "report written to " << cfg.experiment.output_dir << "\n";
        } else if (eval->parsed()) {
            const auto cfg = config_or_default(config_path);
            const auto loaded = irdet::load_checkpoint(ckpt_path);
            const auto test = pick_test_set(cfg, test_set);
            const auto outcome =
                irdet::evaluate_model(loaded.params.config(), loaded.params, loaded.stats, test);
            std::cout << "mAP(" << test_set << ") = " << outcome.map << " over " << test.size()
                      << " images\n";
        } else if (report->parsed()) {
            std::ifstream f(report_json);
            if (!f) throw irdet::FormatError("cannot open " + report_json);
            const auto doc = nlohmann::json::parse(f);
            std::map<std::pair<std::string, std::string>, std::pair<double, int>> agg;
            for (const auto& r : doc.at("records")) {
                auto& cell = agg[{r.at("scenario").get<std::string>(),
                                  r.at("test_set").get<std::string>()}];
                cell.first += r.at("map").get<double>();
                cell.second += 1;
            }
            for (const auto& [key, cell] : agg)
                std::cout << key.first << " " << key.second << " mean mAP "
                          << cell.first / cell.second << " (" << cell.second << " runs)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
