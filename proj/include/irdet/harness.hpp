#pragma once

#include <string>
#include <vector>

#include "irdet/config.hpp"
#include "irdet/io.hpp"
#include "irdet/metrics.hpp"

namespace irdet {

enum class Scenario {
    kSupervisedFull,
    kSupervisedSubset,
    kSupervisedSingleCampaign,
    kFineTune,
    kSslMethod1,
    kSslMethod2,
    kCrossCampaignEval,
};

Scenario parse_scenario(const std::string& name); // ConfigError on unknown
std::string scenario_name(Scenario s);

// Leakage guard: training/unlabelled film ids must never appear in the test
// split. Throws ValidationError naming the offending id.
void assert_film_disjoint(const std::vector<int>& train_ids, const std::vector<int>& test_ids);

// Every frame of every film as a labelled sample.
std::vector<Sample> film_samples(const std::vector<Film>& films);

struct EvalOutcome {
    double map = 0.0;
    EvalResult result;
};

EvalOutcome evaluate_model(const DetectorConfig& dcfg, const DetectorParams& params,
                           const NormStats& stats, const std::vector<Sample>& test);

struct SeedRun {
    uint64_t seed = 0;
    double map_a = 0.0, map_b = 0.0, map_both = 0.0;
    EvalResult eval_a, eval_b, eval_both;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
};

struct RunRecord {
    std::string scenario;
    std::string train_sets; // human-readable training data description
    int budget_multiplier = 1;
    uint64_t spec_hash = 0;
    std::string config_snapshot; // canonical config JSON
    std::vector<SeedRun> seeds;
};

// Runs the configured scenario for every seed: builds (or loads) the dataset,
// splits at film level, trains, evaluates the student on the first campaign's
// test films, the second's, and both, and persists a checkpoint per seed that
// reloads to the same combined mAP.
RunRecord run_experiment(const RunConfig& cfg);

// metrics.csv, report.json (per-class AP grids), report.txt, sweep.csv
// (budget multiplier vs second-campaign mAP).
void emit_report(const std::vector<RunRecord>& records, const std::string& dir);

} // namespace irdet
