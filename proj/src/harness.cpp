#include "irdet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "irdet/errors.hpp"

namespace irdet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Scenario parse_scenario(const std::string& name) {
    if (name == "supervised_full") return Scenario::kSupervisedFull;
    if (name == "supervised_subset") return Scenario::kSupervisedSubset;
    if (name == "supervised_single_campaign") return Scenario::kSupervisedSingleCampaign;
    if (name == "fine_tune") return Scenario::kFineTune;
    if (name == "ssl_method1") return Scenario::kSslMethod1;
    if (name == "ssl_method2") return Scenario::kSslMethod2;
    if (name == "cross_campaign_eval") return Scenario::kCrossCampaignEval;
    throw ConfigError("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::kSupervisedFull: return "supervised_full";
        case Scenario::kSupervisedSubset: return "supervised_subset";
        case Scenario::kSupervisedSingleCampaign: return "supervised_single_campaign";
        case Scenario::kFineTune: return "fine_tune";
        case Scenario::kSslMethod1: return "ssl_method1";
        case Scenario::kSslMethod2: return "ssl_method2";
        case Scenario::kCrossCampaignEval: return "cross_campaign_eval";
    }
    throw ConfigError("unknown scenario enum value");
}

void assert_film_disjoint(const std::vector<int>& train_ids, const std::vector<int>& test_ids) {
    std::set<int> test(test_ids.begin(), test_ids.end());
    for (int id : train_ids)
        if (test.count(id))
            throw ValidationError("leakage guard: film " + std::to_string(id) +
                                  " appears in both training and test splits");
}

std::vector<Sample> film_samples(const std::vector<Film>& films) {
    std::vector<Sample> out;
    for (const auto& film : films)
        for (std::size_t t = 0; t < film.frames.size(); ++t)
            out.push_back({film.film_id, static_cast<int>(t), film.campaign, film.frames[t],
                           film.annotations[t]});
    return out;
}

EvalOutcome evaluate_model(const DetectorConfig& dcfg, const DetectorParams& params,
                           const NormStats& stats, const std::vector<Sample>& test) {
    std::vector<ImageDets> dets(test.size());
    std::vector<ImageGts> gts(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const HeadOutput head = forward(params, normalize(test[i].image, stats));
        dets[i] = decode(dcfg, head, dcfg.conf_floor, dcfg.nms_thresh);
        gts[i] = test[i].boxes;
    }
    EvalOutcome out;
    out.result = coco_map(dets, gts);
    out.map = out.result.map;
    return out;
}

namespace {

std::vector<int> film_ids(const std::vector<Film>& films) {
    std::vector<int> ids;
    for (const auto& f : films) ids.push_back(f.film_id);
    return ids;
}

std::vector<Film> by_campaign(const std::vector<Film>& films, Campaign c) {
    std::vector<Film> out;
    for (const auto& f : films)
        if (f.campaign == c) out.push_back(f);
    return out;
}

std::vector<Sample> concat(std::vector<Sample> a, const std::vector<Sample>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

struct ScenarioData {
    std::vector<Sample> labelled_a, labelled_b;     // budgeted labels
    std::vector<Sample> unlabelled_b;               // complement within B train films
    std::vector<Sample> full_train;                 // every train frame, labelled
    std::vector<Sample> full_train_campaign;        // train_campaign only
    std::vector<Sample> test_a, test_b;
    std::string budget_text;
};

} // namespace

RunRecord run_experiment(const RunConfig& cfg) {
    const Scenario sc = parse_scenario(cfg.experiment.scenario);
    const std::vector<Film> films =
        cfg.experiment.dataset_dir.empty()
            ? generate_dataset(cfg.dataset, default_profile_a(), default_profile_b())
            : read_dataset(cfg.experiment.dataset_dir);
    const auto [train_films, test_films] =
        split_films(films, cfg.experiment.train_fraction, cfg.experiment.split_seed);
    assert_film_disjoint(film_ids(train_films), film_ids(test_films));

    ScenarioData data;
    data.test_a = film_samples(by_campaign(test_films, Campaign::A));
    data.test_b = film_samples(by_campaign(test_films, Campaign::B));
    const std::vector<Film> train_a_films = by_campaign(train_films, Campaign::A);
    const std::vector<Film> train_b_films = by_campaign(train_films, Campaign::B);

    const double pa = cfg.experiment.label_percent_a;
    const double pb = cfg.experiment.label_percent_b * cfg.experiment.budget_multiplier;
    if (pb > 100.0)
        throw ConfigError("budget multiplier pushes the second campaign's label share over 100%");
    std::tie(data.labelled_a, std::ignore) =
        subsample_labels(train_a_films, pa, derive_seed(cfg.dataset.seed, 201));
    std::tie(data.labelled_b, data.unlabelled_b) =
        subsample_labels(train_b_films, pb, derive_seed(cfg.dataset.seed, 202));
    data.full_train = film_samples(train_films);
    data.full_train_campaign = film_samples(
        by_campaign(train_films, cfg.experiment.train_campaign == "A" ? Campaign::A : Campaign::B));
    {
        std::ostringstream ss;
        ss << "A" << pa << "%+B" << pb << "%";
        data.budget_text = ss.str();
    }

    RunRecord record;
    record.scenario = scenario_name(sc);
    record.budget_multiplier = cfg.experiment.budget_multiplier;
    record.config_snapshot = run_config_json(cfg);
    record.spec_hash = fnv1a64(record.config_snapshot);
    switch (sc) {
        case Scenario::kSupervisedFull: record.train_sets = "A+B full labels"; break;
        case Scenario::kSupervisedSubset: record.train_sets = data.budget_text; break;
        case Scenario::kSupervisedSingleCampaign:
        case Scenario::kCrossCampaignEval:
            record.train_sets = cfg.experiment.train_campaign + " full labels";
            break;
        case Scenario::kFineTune: record.train_sets = data.budget_text + " fine-tuned"; break;
        case Scenario::kSslMethod1: record.train_sets = data.budget_text + " +unlabelled B"; break;
        case Scenario::kSslMethod2:
            record.train_sets = data.budget_text + " fine-tuned +unlabelled B";
            break;
    }

    const std::string run_dir =
        (fs::path(cfg.experiment.output_dir) / record.scenario).string();
    fs::create_directories(run_dir);

    for (const uint64_t seed : cfg.experiment.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        TrainLog log;
        TrainedModel model = [&]() -> TrainedModel {
            switch (sc) {
                case Scenario::kSupervisedFull:
                    return train_burn_in(cfg.detector, data.full_train, cfg.ssl.burn_in, seed,
                                         &log);
                case Scenario::kSupervisedSubset:
                    return train_burn_in(cfg.detector,
                                         concat(data.labelled_a, data.labelled_b),
                                         cfg.ssl.burn_in, seed, &log);
                case Scenario::kSupervisedSingleCampaign:
                case Scenario::kCrossCampaignEval:
                    return train_burn_in(cfg.detector, data.full_train_campaign, cfg.ssl.burn_in,
                                         seed, &log);
                case Scenario::kFineTune: {
                    SslConfig no_ssl = cfg.ssl;
                    no_ssl.ssl.total_iterations = 0;
                    return method2(cfg.detector, data.labelled_a, data.labelled_b,
                                   data.unlabelled_b, no_ssl, seed, &log);
                }
                case Scenario::kSslMethod1:
                    return method1(cfg.detector, concat(data.labelled_a, data.labelled_b),
                                   data.unlabelled_b, cfg.ssl, seed, &log);
                case Scenario::kSslMethod2:
                    return method2(cfg.detector, data.labelled_a, data.labelled_b,
                                   data.unlabelled_b, cfg.ssl, seed, &log);
            }
            throw ConfigError("unknown scenario enum value");
        }();

        SeedRun run;
        run.seed = seed;
        const EvalOutcome ea = evaluate_model(cfg.detector, model.params, model.stats, data.test_a);
        const EvalOutcome eb = evaluate_model(cfg.detector, model.params, model.stats, data.test_b);
        const EvalOutcome eab = evaluate_model(cfg.detector, model.params, model.stats,
                                               concat(data.test_a, data.test_b));
        run.map_a = ea.map;
        run.map_b = eb.map;
        run.map_both = eab.map;
        run.eval_a = ea.result;
        run.eval_b = eb.result;
        run.eval_both = eab.result;

        run.checkpoint_path =
            (fs::path(run_dir) / ("seed_" + std::to_string(seed) + ".ckpt")).string();
        save_checkpoint(run.checkpoint_path, model.params, model.stats);
        const LoadedCheckpoint reloaded = load_checkpoint(run.checkpoint_path);
        const EvalOutcome echeck = evaluate_model(cfg.detector, reloaded.params, reloaded.stats,
                                                  concat(data.test_a, data.test_b));
        if (echeck.map != run.map_both)
            throw ValidationError("checkpoint reload changed the evaluation result");
        write_train_log_csv(
            log, (fs::path(run_dir) / ("seed_" + std::to_string(seed) + "_train.csv")).string());

        run.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        record.seeds.push_back(std::move(run));
    }
    return record;
}

namespace {

ordered_json ap_grid_json(const EvalResult& r) {
    ordered_json grid = ordered_json::array();
    for (Eigen::Index c = 0; c < r.ap.rows(); ++c) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index t = 0; t < r.ap.cols(); ++t) {
            const double v = r.ap(c, t);
            if (std::isnan(v))
                row.push_back(nullptr);
            else
                row.push_back(v);
        }
        grid.push_back(row);
    }
    return grid;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

void emit_report(const std::vector<RunRecord>& records, const std::string& dir) {
    fs::create_directories(dir);
    const std::string json_path = (fs::path(dir) / "report.json").string();

    std::ofstream csv(fs::path(dir) / "metrics.csv");
    csv.precision(9);
    csv << "scenario,seed,train_sets,test_set,map,per_class_ap_json_path\n";
    ordered_json jrecords = ordered_json::array();
    for (const auto& rec : records) {
        for (const auto& run : rec.seeds) {
            const struct {
                const char* name;
                double map;
                const EvalResult* eval;
            } rows[3] = {{"A_test", run.map_a, &run.eval_a},
                         {"B_test", run.map_b, &run.eval_b},
                         {"AB_test", run.map_both, &run.eval_both}};
            for (const auto& row : rows) {
                csv << rec.scenario << ',' << run.seed << ',' << rec.train_sets << ','
                    << row.name << ',' << row.map << ",report.json\n";
                jrecords.push_back({{"scenario", rec.scenario},
                                    {"train_sets", rec.train_sets},
                                    {"budget_multiplier", rec.budget_multiplier},
                                    {"spec_hash", rec.spec_hash},
                                    {"seed", run.seed},
                                    {"test_set", row.name},
                                    {"map", row.map},
                                    {"wall_seconds", run.wall_seconds},
                                    {"checkpoint", run.checkpoint_path},
                                    {"ap", ap_grid_json(*row.eval)}});
            }
        }
    }
    std::ofstream jf(json_path);
    jf << ordered_json{{"records", jrecords}}.dump(1) << '\n';

    std::ofstream txt(fs::path(dir) / "report.txt");
    txt << "scenario                     train data                      "
           "A_test   B_test   AB_test  seeds\n";
    for (const auto& rec : records) {
        std::vector<double> ma, mb, mab;
        for (const auto& run : rec.seeds) {
            ma.push_back(run.map_a);
            mb.push_back(run.map_b);
            mab.push_back(run.map_both);
        }
        char line[256];
        std::snprintf(line, sizeof(line), "%-28s %-30s %8.3f %8.3f %8.3f  %zu\n",
                      rec.scenario.c_str(), rec.train_sets.c_str(), mean_of(ma), mean_of(mb),
                      mean_of(mab), rec.seeds.size());
        txt << line;
    }

    std::ofstream sweep(fs::path(dir) / "sweep.csv");
    sweep.precision(9);
    sweep << "scenario,budget_multiplier,mean_map_b\n";
    for (const auto& rec : records) {
        std::vector<double> mb;
        for (const auto& run : rec.seeds) mb.push_back(run.map_b);
        sweep << rec.scenario << ',' << rec.budget_multiplier << ',' << mean_of(mb) << '\n';
    }
}

} // namespace irdet
