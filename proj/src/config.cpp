#include "irdet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "irdet/errors.hpp"

namespace irdet {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kDefaultPhotometric = {"contrast", "brighten", "sharpen",
                                                      "identity"};

void check_known_keys(const json& section, const std::string& name,
                      const std::set<std::string>& known) {
    for (const auto& [key, value] : section.items()) {
        (void)value;
        if (!known.count(key))
            throw ConfigError("unknown key \"" + key + "\" in section \"" + name + "\"");
    }
}

template <typename T>
void read_key(const json& section, const char* key, T& into) {
    if (!section.contains(key)) return;
    try {
        into = section.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for \"" + std::string(key) + "\": " + e.what());
    }
}

void parse_train_section(const json& sec, const std::string& name, TrainConfig& cfg,
                         double base_lr, int base_batch) {
    check_known_keys(sec, name,
                     {"learning_rate", "batch_size", "total_iterations", "scheduler_steps",
                      "scheduler_factor", "weight_decay", "momentum"});
    const bool explicit_lr = sec.contains("learning_rate");
    read_key(sec, "batch_size", cfg.batch_size);
    read_key(sec, "learning_rate", cfg.learning_rate);
    if (!explicit_lr && sec.contains("batch_size"))
        cfg.learning_rate = scaled_learning_rate(base_lr, base_batch, cfg.batch_size);
    read_key(sec, "total_iterations", cfg.total_iterations);
    read_key(sec, "scheduler_steps", cfg.scheduler_steps);
    read_key(sec, "scheduler_factor", cfg.scheduler_factor);
    read_key(sec, "weight_decay", cfg.weight_decay);
    read_key(sec, "momentum", cfg.momentum);
}

void validate_photometric(const std::vector<std::string>& names) {
    validate_augmentation_names(names);
    std::set<std::string> given(names.begin(), names.end());
    const std::set<std::string> fixed(kDefaultPhotometric.begin(), kDefaultPhotometric.end());
    if (given != fixed)
        throw ConfigError("augment.photometric: only the default operation set is supported");
}

} // namespace

double scaled_learning_rate(double base_lr, int base_batch, int batch) {
    if (base_batch <= 0 || batch <= 0)
        throw ConfigError("scaled_learning_rate: batch sizes must be positive");
    return base_lr * static_cast<double>(batch) / static_cast<double>(base_batch);
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.photometric = kDefaultPhotometric;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    check_known_keys(doc, "<root>", {"dataset", "detector", "train", "ssl", "augment",
                                     "experiment"});
    for (const auto& [key, value] : doc.items())
        if (!value.is_object())
            throw ConfigError("section \"" + key + "\" must be an object");

    RunConfig cfg = default_run_config();

    if (doc.contains("dataset")) {
        const json& sec = doc["dataset"];
        check_known_keys(sec, "dataset",
                         {"films_per_campaign", "frames_per_film", "class_frequency_weights",
                          "seed", "events_per_film_lo", "events_per_film_hi", "lifetime_lo",
                          "lifetime_hi", "relabel_fraction", "relabel_from", "relabel_to"});
        read_key(sec, "films_per_campaign", cfg.dataset.films_per_campaign);
        read_key(sec, "frames_per_film", cfg.dataset.frames_per_film);
        read_key(sec, "class_frequency_weights", cfg.dataset.class_frequency_weights);
        read_key(sec, "seed", cfg.dataset.seed);
        read_key(sec, "events_per_film_lo", cfg.dataset.events_per_film_lo);
        read_key(sec, "events_per_film_hi", cfg.dataset.events_per_film_hi);
        read_key(sec, "lifetime_lo", cfg.dataset.lifetime_lo);
        read_key(sec, "lifetime_hi", cfg.dataset.lifetime_hi);
        read_key(sec, "relabel_fraction", cfg.dataset.relabel_fraction);
        read_key(sec, "relabel_from", cfg.dataset.relabel_from);
        read_key(sec, "relabel_to", cfg.dataset.relabel_to);
    }

    if (doc.contains("detector")) {
        const json& sec = doc["detector"];
        check_known_keys(sec, "detector",
                         {"input_height", "input_width", "channels", "kernel", "stride", "pad",
                          "num_classes", "anchor_size", "neg_iou_thresh", "conf_floor",
                          "nms_thresh"});
        read_key(sec, "input_height", cfg.detector.input_height);
        read_key(sec, "input_width", cfg.detector.input_width);
        read_key(sec, "channels", cfg.detector.channels);
        read_key(sec, "kernel", cfg.detector.kernel);
        read_key(sec, "stride", cfg.detector.stride);
        read_key(sec, "pad", cfg.detector.pad);
        read_key(sec, "num_classes", cfg.detector.num_classes);
        read_key(sec, "anchor_size", cfg.detector.anchor_size);
        read_key(sec, "neg_iou_thresh", cfg.detector.neg_iou_thresh);
        read_key(sec, "conf_floor", cfg.detector.conf_floor);
        read_key(sec, "nms_thresh", cfg.detector.nms_thresh);
    }

    if (doc.contains("train"))
        parse_train_section(doc["train"], "train", cfg.ssl.burn_in, TrainConfig{}.learning_rate,
                            TrainConfig{}.batch_size);

    if (doc.contains("ssl")) {
        const json& sec = doc["ssl"];
        check_known_keys(sec, "ssl",
                         {"lambda_unsup", "ema_alpha", "pseudo_conf_thresh", "jitter_count",
                          "jitter_scale", "jitter_var_thresh", "labelled_per_batch",
                          "unlabelled_per_batch", "fine_tune_iterations", "learning_rate",
                          "total_iterations", "scheduler_steps", "scheduler_factor",
                          "weight_decay", "momentum"});
        read_key(sec, "lambda_unsup", cfg.ssl.lambda_unsup);
        read_key(sec, "ema_alpha", cfg.ssl.ema_alpha);
        read_key(sec, "pseudo_conf_thresh", cfg.ssl.pseudo_conf_thresh);
        read_key(sec, "jitter_count", cfg.ssl.jitter_count);
        read_key(sec, "jitter_scale", cfg.ssl.jitter_scale);
        read_key(sec, "jitter_var_thresh", cfg.ssl.jitter_var_thresh);
        read_key(sec, "labelled_per_batch", cfg.ssl.labelled_per_batch);
        read_key(sec, "unlabelled_per_batch", cfg.ssl.unlabelled_per_batch);
        read_key(sec, "fine_tune_iterations", cfg.ssl.fine_tune_iterations);
        const double base_lr = cfg.ssl.ssl.learning_rate;
        const int base_batch = cfg.ssl.ssl.batch_size;
        read_key(sec, "learning_rate", cfg.ssl.ssl.learning_rate);
        read_key(sec, "total_iterations", cfg.ssl.ssl.total_iterations);
        read_key(sec, "scheduler_steps", cfg.ssl.ssl.scheduler_steps);
        read_key(sec, "scheduler_factor", cfg.ssl.ssl.scheduler_factor);
        read_key(sec, "weight_decay", cfg.ssl.ssl.weight_decay);
        read_key(sec, "momentum", cfg.ssl.ssl.momentum);
        cfg.ssl.ssl.batch_size = cfg.ssl.labelled_per_batch + cfg.ssl.unlabelled_per_batch;
        if (!sec.contains("learning_rate") &&
            (sec.contains("labelled_per_batch") || sec.contains("unlabelled_per_batch")))
            cfg.ssl.ssl.learning_rate =
                scaled_learning_rate(base_lr, base_batch, cfg.ssl.ssl.batch_size);
    }

    if (doc.contains("augment")) {
        const json& sec = doc["augment"];
        check_known_keys(sec, "augment", {"photometric"});
        read_key(sec, "photometric", cfg.photometric);
    }

    if (doc.contains("experiment")) {
        const json& sec = doc["experiment"];
        check_known_keys(sec, "experiment",
                         {"scenario", "seeds", "label_percent_a", "label_percent_b",
                          "budget_multiplier", "train_fraction", "split_seed", "train_campaign",
                          "output_dir", "dataset_dir"});
        read_key(sec, "scenario", cfg.experiment.scenario);
        read_key(sec, "seeds", cfg.experiment.seeds);
        read_key(sec, "label_percent_a", cfg.experiment.label_percent_a);
        read_key(sec, "label_percent_b", cfg.experiment.label_percent_b);
        read_key(sec, "budget_multiplier", cfg.experiment.budget_multiplier);
        read_key(sec, "train_fraction", cfg.experiment.train_fraction);
        read_key(sec, "split_seed", cfg.experiment.split_seed);
        read_key(sec, "train_campaign", cfg.experiment.train_campaign);
        read_key(sec, "output_dir", cfg.experiment.output_dir);
        read_key(sec, "dataset_dir", cfg.experiment.dataset_dir);
    }

    validate_photometric(cfg.photometric);
    cfg.ssl.validate();
    if (cfg.experiment.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
    if (cfg.experiment.label_percent_a <= 0.0 || cfg.experiment.label_percent_a > 100.0 ||
        cfg.experiment.label_percent_b <= 0.0 || cfg.experiment.label_percent_b > 100.0)
        throw ConfigError("label percentages must be in (0, 100]");
    if (cfg.experiment.budget_multiplier < 1)
        throw ConfigError("experiment.budget_multiplier must be at least 1");
    if (cfg.experiment.train_campaign != "A" && cfg.experiment.train_campaign != "B")
        throw ConfigError("experiment.train_campaign must be \"A\" or \"B\"");
    if (!(cfg.experiment.train_fraction > 0.0 && cfg.experiment.train_fraction < 1.0))
        throw ConfigError("experiment.train_fraction must be in (0, 1)");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    RunConfig cfg = parse_run_config(ss.str());
    if (const char* dir = std::getenv("IRDET_OUTPUT_DIR"); dir && *dir)
        cfg.experiment.output_dir = dir;
    return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
    ordered_json doc;
    doc["dataset"] = {{"films_per_campaign", cfg.dataset.films_per_campaign},
                      {"frames_per_film", cfg.dataset.frames_per_film},
                      {"class_frequency_weights", cfg.dataset.class_frequency_weights},
                      {"seed", cfg.dataset.seed},
                      {"events_per_film_lo", cfg.dataset.events_per_film_lo},
                      {"events_per_film_hi", cfg.dataset.events_per_film_hi},
                      {"lifetime_lo", cfg.dataset.lifetime_lo},
                      {"lifetime_hi", cfg.dataset.lifetime_hi},
                      {"relabel_fraction", cfg.dataset.relabel_fraction},
                      {"relabel_from", cfg.dataset.relabel_from},
                      {"relabel_to", cfg.dataset.relabel_to}};
    doc["detector"] = {{"input_height", cfg.detector.input_height},
                       {"input_width", cfg.detector.input_width},
                       {"channels", cfg.detector.channels},
                       {"kernel", cfg.detector.kernel},
                       {"stride", cfg.detector.stride},
                       {"pad", cfg.detector.pad},
                       {"num_classes", cfg.detector.num_classes},
                       {"anchor_size", cfg.detector.anchor_size},
                       {"neg_iou_thresh", cfg.detector.neg_iou_thresh},
                       {"conf_floor", cfg.detector.conf_floor},
                       {"nms_thresh", cfg.detector.nms_thresh}};
    doc["train"] = {{"learning_rate", cfg.ssl.burn_in.learning_rate},
                    {"batch_size", cfg.ssl.burn_in.batch_size},
                    {"total_iterations", cfg.ssl.burn_in.total_iterations},
                    {"scheduler_steps", cfg.ssl.burn_in.scheduler_steps},
                    {"scheduler_factor", cfg.ssl.burn_in.scheduler_factor},
                    {"weight_decay", cfg.ssl.burn_in.weight_decay},
                    {"momentum", cfg.ssl.burn_in.momentum}};
    doc["ssl"] = {{"lambda_unsup", cfg.ssl.lambda_unsup},
                  {"ema_alpha", cfg.ssl.ema_alpha},
                  {"pseudo_conf_thresh", cfg.ssl.pseudo_conf_thresh},
                  {"jitter_count", cfg.ssl.jitter_count},
                  {"jitter_scale", cfg.ssl.jitter_scale},
                  {"jitter_var_thresh", cfg.ssl.jitter_var_thresh},
                  {"labelled_per_batch", cfg.ssl.labelled_per_batch},
                  {"unlabelled_per_batch", cfg.ssl.unlabelled_per_batch},
                  {"fine_tune_iterations", cfg.ssl.fine_tune_iterations},
                  {"learning_rate", cfg.ssl.ssl.learning_rate},
                  {"total_iterations", cfg.ssl.ssl.total_iterations},
                  {"scheduler_steps", cfg.ssl.ssl.scheduler_steps},
                  {"scheduler_factor", cfg.ssl.ssl.scheduler_factor},
                  {"weight_decay", cfg.ssl.ssl.weight_decay},
                  {"momentum", cfg.ssl.ssl.momentum}};
    doc["augment"] = {{"photometric", cfg.photometric}};
    doc["experiment"] = {{"scenario", cfg.experiment.scenario},
                         {"seeds", cfg.experiment.seeds},
                         {"label_percent_a", cfg.experiment.label_percent_a},
                         {"label_percent_b", cfg.experiment.label_percent_b},
                         {"budget_multiplier", cfg.experiment.budget_multiplier},
                         {"train_fraction", cfg.experiment.train_fraction},
                         {"split_seed", cfg.experiment.split_seed},
                         {"train_campaign", cfg.experiment.train_campaign},
                         {"output_dir", cfg.experiment.output_dir},
                         {"dataset_dir", cfg.experiment.dataset_dir}};
    return doc.dump(1);
}

} // namespace irdet
