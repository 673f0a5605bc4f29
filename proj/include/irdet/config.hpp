#pragma once

#include <string>
#include <vector>

#include "irdet/detector.hpp"
#include "irdet/ssl.hpp"
#include "irdet/synthir.hpp"

namespace irdet {

struct ExperimentSettings {
    std::string scenario = "supervised_subset";
    std::vector<uint64_t> seeds = {1, 2, 3};
    double label_percent_a = 1.0;
    double label_percent_b = 0.5;
    int budget_multiplier = 1; // scales the second campaign's label budget
    double train_fraction = 2.0 / 3.0;
    uint64_t split_seed = 77;
    std::string train_campaign = "A"; // single-campaign scenarios
    std::string output_dir = "runs";
    std::string dataset_dir; // empty: generate in memory from the dataset section
};

// One JSON document with sections {dataset, detector, train, ssl, augment,
// experiment}; unknown sections or keys are rejected. The train section is
// the supervised/burn-in phase.
struct RunConfig {
    DatasetSpec dataset;
    DetectorConfig detector;
    SslConfig ssl;
    std::vector<std::string> photometric; // augment.photometric
    ExperimentSettings experiment;
};

RunConfig default_run_config();

// Throws ConfigError with the offending key/value in the message.
RunConfig parse_run_config(const std::string& json_text);

// Reads the file, parses, then applies the IRDET_OUTPUT_DIR environment
// override (the only setting an environment variable may change).
RunConfig load_run_config(const std::string& path);

// Linear batch-size rule: the rate moves proportionally with the batch.
double scaled_learning_rate(double base_lr, int base_batch, int batch);

// Canonical JSON snapshot of a config (round-trips through parse_run_config).
std::string run_config_json(const RunConfig& cfg);

uint64_t fnv1a64(const std::string& bytes);

} // namespace irdet
