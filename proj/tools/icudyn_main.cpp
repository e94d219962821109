// icudyn: synthetic cohorts, preprocessing, model training and evaluation
// for dynamic ICU mortality-risk prediction, as one deterministic CLI.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icudyn/baselines.hpp"
#include "icudyn/catalog.hpp"
#include "icudyn/checkpoint.hpp"
#include "icudyn/errors.hpp"
#include "icudyn/eval.hpp"
#include "icudyn/io.hpp"
#include "icudyn/model.hpp"
#include "icudyn/parallel.hpp"
#include "icudyn/pipeline.hpp"
#include "icudyn/preprocess.hpp"
#include "icudyn/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kRunManifestVersion = 1;

std::uint64_t env_or(std::uint64_t fallback) {
    const char* env = std::getenv("ICUDYN_SEED");
    if (!env || !*env) return fallback;
    std::uint64_t v = 0;
    const char* last = env + std::string_view(env).size();
    auto [ptr, ec] = std::from_chars(env, last, v);
    if (ec != std::errc{} || ptr != last)
        icudyn::fail_usage("E_SEED", std::string("ICUDYN_SEED is not an integer: '") + env + "'");
    return v;
}

// Explicit --seed beats ICUDYN_SEED beats the config/default value.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           std::uint64_t config_value) {
    if (opt != nullptr && opt->count() > 0) return flag_value;
    return env_or(config_value);
}

ordered_json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) icudyn::fail_data("E_IO", "cannot open " + path);
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        icudyn::fail_data("E_CONFIG", path + ": " + e.what());
    }
}

void reject_unknown_keys(const ordered_json& j, const std::vector<std::string>& known,
                         const std::string& what) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            icudyn::fail_data("E_CONFIG", what + ": unknown key '" + key + "'");
    }
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out, const std::string& what) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        icudyn::fail_data("E_CONFIG", what + ": bad value for '" + key + "'");
    }
}

Eigen::MatrixXd json_matrix(const ordered_json& j, const char* key, const std::string& what) {
    Eigen::MatrixXd m;
    if (!j.contains(key)) return m;
    const auto& rows = j.at(key);
    if (!rows.is_array() || rows.empty() || !rows.front().is_array())
        icudyn::fail_data("E_CONFIG", what + ": '" + key + "' must be an array of rows");
    m.resize(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = rows.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
            icudyn::fail_data("E_CONFIG", what + ": ragged rows in '" + key + "'");
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

Eigen::VectorXd json_vector(const ordered_json& j, const char* key, const std::string& what) {
    Eigen::VectorXd v;
    if (!j.contains(key)) return v;
    const auto& arr = j.at(key);
    if (!arr.is_array()) icudyn::fail_data("E_CONFIG", what + ": '" + key + "' must be an array");
    v.resize(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json vector_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

icudyn::SynthConfig parse_synth_config(const ordered_json& j) {
    const std::string what = "synth config";
    reject_unknown_keys(
        j, {"n_patients", "min_encounters_per_patient", "max_encounters_per_patient",
            "n_physiologic", "n_lab", "n_drug", "n_intervention", "latent_dim", "drift",
            "observation_map", "hazard_state_weights", "hazard_deriv_weights", "hazard_baseline",
            "target_mortality", "hazard_time_ramp_hours", "observation_noise_std",
            "sample_min_minutes", "sample_max_minutes", "sample_gain", "duration_min_hours",
            "duration_max_hours", "euler_step_minutes", "process_noise_base",
            "severity_sd_patient", "severity_sd_encounter", "initial_state_sd", "patient_base_sd",
            "perturb_amplitude", "perturb_ramp_hours", "phys_sample_prob", "lab_sample_prob",
            "drug_base_rate", "intervention_base_rate", "severity_rate_gain", "seed"},
        what);

    icudyn::SynthConfig c;
    maybe(j, "n_patients", c.n_patients, what);
    maybe(j, "min_encounters_per_patient", c.min_encounters_per_patient, what);
    maybe(j, "max_encounters_per_patient", c.max_encounters_per_patient, what);
    maybe(j, "n_physiologic", c.n_physiologic, what);
    maybe(j, "n_lab", c.n_lab, what);
    maybe(j, "n_drug", c.n_drug, what);
    maybe(j, "n_intervention", c.n_intervention, what);
    maybe(j, "latent_dim", c.latent_dim, what);
    c.drift = json_matrix(j, "drift", what);
    c.observation_map = json_matrix(j, "observation_map", what);
    c.hazard_state_weights = json_vector(j, "hazard_state_weights", what);
    c.hazard_deriv_weights = json_vector(j, "hazard_deriv_weights", what);
    maybe(j, "hazard_baseline", c.hazard_baseline, what);
    maybe(j, "target_mortality", c.target_mortality, what);
    maybe(j, "hazard_time_ramp_hours", c.hazard_time_ramp_hours, what);
    maybe(j, "observation_noise_std", c.observation_noise_std, what);
    maybe(j, "sample_min_minutes", c.sample_min_minutes, what);
    maybe(j, "sample_max_minutes", c.sample_max_minutes, what);
    maybe(j, "sample_gain", c.sample_gain, what);
    maybe(j, "duration_min_hours", c.duration_min_hours, what);
    maybe(j, "duration_max_hours", c.duration_max_hours, what);
    maybe(j, "euler_step_minutes", c.euler_step_minutes, what);
    maybe(j, "process_noise_base", c.process_noise_base, what);
    maybe(j, "severity_sd_patient", c.severity_sd_patient, what);
    maybe(j, "severity_sd_encounter", c.severity_sd_encounter, what);
    maybe(j, "initial_state_sd", c.initial_state_sd, what);
    maybe(j, "patient_base_sd", c.patient_base_sd, what);
    maybe(j, "perturb_amplitude", c.perturb_amplitude, what);
    maybe(j, "perturb_ramp_hours", c.perturb_ramp_hours, what);
    maybe(j, "phys_sample_prob", c.phys_sample_prob, what);
    maybe(j, "lab_sample_prob", c.lab_sample_prob, what);
    maybe(j, "drug_base_rate", c.drug_base_rate, what);
    maybe(j, "intervention_base_rate", c.intervention_base_rate, what);
    maybe(j, "severity_rate_gain", c.severity_rate_gain, what);
    maybe(j, "seed", c.seed, what);
    return c;
}

ordered_json synth_config_json(const icudyn::SynthConfig& c) {
    ordered_json j;
    j["n_patients"] = c.n_patients;
    j["min_encounters_per_patient"] = c.min_encounters_per_patient;
    j["max_encounters_per_patient"] = c.max_encounters_per_patient;
    j["n_physiologic"] = c.n_physiologic;
    j["n_lab"] = c.n_lab;
    j["n_drug"] = c.n_drug;
    j["n_intervention"] = c.n_intervention;
    j["latent_dim"] = c.latent_dim;
    if (c.drift.size() != 0) j["drift"] = matrix_json(c.drift);
    if (c.observation_map.size() != 0) j["observation_map"] = matrix_json(c.observation_map);
    if (c.hazard_state_weights.size() != 0)
        j["hazard_state_weights"] = vector_json(c.hazard_state_weights);
    if (c.hazard_deriv_weights.size() != 0)
        j["hazard_deriv_weights"] = vector_json(c.hazard_deriv_weights);
    j["hazard_baseline"] = c.hazard_baseline;
    j["target_mortality"] = c.target_mortality;
    j["hazard_time_ramp_hours"] = c.hazard_time_ramp_hours;
    j["observation_noise_std"] = c.observation_noise_std;
    j["sample_min_minutes"] = c.sample_min_minutes;
    j["sample_max_minutes"] = c.sample_max_minutes;
    j["sample_gain"] = c.sample_gain;
    j["duration_min_hours"] = c.duration_min_hours;
    j["duration_max_hours"] = c.duration_max_hours;
    j["euler_step_minutes"] = c.euler_step_minutes;
    j["process_noise_base"] = c.process_noise_base;
    j["severity_sd_patient"] = c.severity_sd_patient;
    j["severity_sd_encounter"] = c.severity_sd_encounter;
    j["initial_state_sd"] = c.initial_state_sd;
    j["patient_base_sd"] = c.patient_base_sd;
    j["perturb_amplitude"] = c.perturb_amplitude;
    j["perturb_ramp_hours"] = c.perturb_ramp_hours;
    j["phys_sample_prob"] = c.phys_sample_prob;
    j["lab_sample_prob"] = c.lab_sample_prob;
    j["drug_base_rate"] = c.drug_base_rate;
    j["intervention_base_rate"] = c.intervention_base_rate;
    j["severity_rate_gain"] = c.severity_rate_gain;
    j["seed"] = c.seed;
    return j;
}

// Wall time is the single run-dependent field; everything else in the
// manifest (and every other output file) is byte-stable for a fixed input.
class ManifestBuilder {
public:
    ManifestBuilder(std::string command, fs::path out_dir)
        : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
        doc_["tool"] = "icudyn";
        doc_["command"] = std::move(command);
        doc_["format_versions"] =
            ordered_json{{"run_manifest", kRunManifestVersion},
                         {"checkpoint", static_cast<int>(icudyn::kCheckpointVersion)}};
    }

    ordered_json& doc() { return doc_; }

    void add_input(const std::string& path) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(icudyn::fnv1a64_file(path)));
        inputs_.push_back(ordered_json{{"path", path}, {"fnv1a64", buf}});
    }

    void add_output(const std::string& name) { outputs_.push_back(name); }

    fs::path out_path(const std::string& name) const { return out_dir_ / name; }

    void write() {
        doc_["inputs"] = inputs_;
        doc_["outputs"] = outputs_;
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        doc_["wall_time_seconds"] =
            std::chrono::duration_cast<std::chrono::duration<double>>(elapsed).count();
        std::ofstream out(out_dir_ / "run_manifest.json", std::ios::trunc);
        if (!out) icudyn::fail_data("E_IO", "cannot write " + (out_dir_ / "run_manifest.json").string());
        out << doc_.dump(2) << '\n';
    }

private:
    fs::path out_dir_;
    ordered_json doc_;
    ordered_json inputs_ = ordered_json::array();
    ordered_json outputs_ = ordered_json::array();
    std::chrono::steady_clock::time_point start_;
};

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) icudyn::fail_data("E_IO", "cannot create output directory " + out);
    return dir;
}

struct DataArgs {
    std::string events, labels, catalog, split;
};

void add_data_options(CLI::App* cmd, DataArgs& args, bool with_split = true) {
    cmd->add_option("--events", args.events, "events CSV")->required();
    cmd->add_option("--labels", args.labels, "labels CSV")->required();
    cmd->add_option("--catalog", args.catalog, "variable catalog CSV")->required();
    if (with_split) cmd->add_option("--split", args.split, "patient split CSV")->required();
}

struct LoadedData {
    icudyn::VariableCatalog catalog;
    icudyn::Dataset dataset;
    icudyn::SplitAssignment split;
};

LoadedData load_data(const DataArgs& args, ManifestBuilder& manifest, bool with_split = true) {
    manifest.add_input(args.events);
    manifest.add_input(args.labels);
    manifest.add_input(args.catalog);
    if (with_split) manifest.add_input(args.split);

    LoadedData d;
    d.catalog = icudyn::VariableCatalog::load(args.catalog);
    d.dataset = icudyn::assemble_dataset(icudyn::read_events_csv(args.events),
                                         icudyn::read_labels_csv(args.labels), d.catalog);
    if (with_split) d.split = icudyn::read_split_csv(args.split);
    return d;
}

// Holdout matrices with frozen normalization stats, restricted to encounters
// whose data surrounds the observation cutoff, so every model scores the
// same cohort.
struct EvalCohort {
    std::vector<icudyn::EncounterMatrix> matrices;
    std::vector<int> labels;  // 1 = died
};

EvalCohort build_eval_cohort(const LoadedData& d, const icudyn::NormStats& stats,
                             double observe_minutes, int threads) {
    std::vector<const icudyn::EncounterRecord*> holdout;
    for (const auto& enc : d.dataset.encounters)
        if (!d.split.is_train(enc.patient_id)) holdout.push_back(&enc);
    if (holdout.empty()) icudyn::fail_data("E_EMPTY_INPUT", "the split leaves no holdout encounters");

    std::vector<icudyn::EncounterMatrix> all(holdout.size());
    icudyn::parallel_for(holdout.size(), threads, [&](std::size_t i) {
        all[i] = icudyn::build_event_grid(icudyn::apply_norm(holdout[i]->events, stats), d.catalog,
                                          holdout[i]->survived);
    });

    EvalCohort cohort;
    for (auto& m : all) {
        if (m.times.front() > observe_minutes || m.times.back() < observe_minutes) continue;
        cohort.labels.push_back(m.survived ? 0 : 1);
        cohort.matrices.push_back(std::move(m));
    }
    if (cohort.matrices.empty())
        icudyn::fail_data("E_EMPTY_INPUT",
                          "no holdout encounter spans the requested observation window");
    return cohort;
}

std::vector<double> score_checkpoint(const std::string& path, const EvalCohort& cohort,
                                     double observe_minutes, double delta_t_hours, int threads) {
    std::vector<double> scores(cohort.matrices.size());
    switch (icudyn::peek_model_type(path)) {
        case icudyn::ModelType::Rnn: {
            const icudyn::ModelParams params = icudyn::load_rnn_params(path);
            icudyn::parallel_for(scores.size(), threads, [&](std::size_t i) {
                scores[i] =
                    icudyn::predict_at(cohort.matrices[i], observe_minutes, delta_t_hours, params);
            });
            break;
        }
        case icudyn::ModelType::LogisticRegression: {
            const icudyn::LinearModel model = icudyn::load_lr_params(path);
            icudyn::parallel_for(scores.size(), threads, [&](std::size_t i) {
                scores[i] = icudyn::predict_lr(
                    icudyn::extract_static_features(cohort.matrices[i], observe_minutes), model);
            });
            break;
        }
        case icudyn::ModelType::Mlp: {
            const icudyn::MlpModel model = icudyn::load_mlp_params(path);
            icudyn::parallel_for(scores.size(), threads, [&](std::size_t i) {
                scores[i] = icudyn::predict_mlp(
                    icudyn::extract_static_features(cohort.matrices[i], observe_minutes), model);
            });
            break;
        }
    }
    return scores;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const std::string& config_path, const std::string& out,
              const CLI::Option* seed_opt, std::uint64_t seed_flag) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("synth", dir);
    manifest.add_input(config_path);

    icudyn::SynthConfig config = parse_synth_config(load_json(config_path));
    config.seed = resolve_seed(seed_opt, seed_flag, config.seed);
    manifest.doc()["seed"] = config.seed;
    manifest.doc()["config"] = synth_config_json(config);

    const icudyn::SynthCohort cohort = icudyn::generate_cohort(config);

    icudyn::EventList events;
    std::map<std::string, bool> labels;
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> truth;
    std::size_t died = 0;
    for (const auto& enc : cohort.encounters) {
        events.insert(events.end(), enc.events.begin(), enc.events.end());
        labels.emplace(enc.encounter_id, enc.survived);
        truth.emplace_back(enc.encounter_id, enc.true_risk);
        died += enc.survived ? 0 : 1;
    }

    icudyn::write_events_csv(manifest.out_path("events.csv").string(), events);
    icudyn::write_labels_csv(manifest.out_path("labels.csv").string(), labels);
    {
        std::ofstream cat(manifest.out_path("catalog.csv"), std::ios::trunc);
        if (!cat) icudyn::fail_data("E_IO", "cannot write catalog.csv");
        cat << icudyn::synth_catalog_csv(config);
    }
    icudyn::write_ground_truth_csv(manifest.out_path("ground_truth.csv").string(), truth);

    manifest.add_output("events.csv");
    manifest.add_output("labels.csv");
    manifest.add_output("catalog.csv");
    manifest.add_output("ground_truth.csv");
    manifest.doc()["notes"] = ordered_json{
        {"n_encounters", cohort.encounters.size()},
        {"n_events", events.size()},
        {"mortality", static_cast<double>(died) / static_cast<double>(cohort.encounters.size())},
        {"hazard_scale", cohort.hazard_scale}};
    manifest.write();

    std::cout << "synth: " << cohort.encounters.size() << " encounters, " << events.size()
              << " events, " << died << " deaths -> " << out << "\n";
    return 0;
}

int cmd_split(const std::string& events_path, const std::string& labels_path, double fraction,
              const std::string& out, const CLI::Option* seed_opt, std::uint64_t seed_flag) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("split", dir);
    manifest.add_input(events_path);
    // The assignment is by patient id only; a labels file is accepted so the
    // manifest can pin the exact cohort the split belongs to.
    if (!labels_path.empty()) {
        icudyn::read_labels_csv(labels_path);
        manifest.add_input(labels_path);
    }

    const std::uint64_t seed = resolve_seed(seed_opt, seed_flag, 0);
    manifest.doc()["seed"] = seed;
    manifest.doc()["config"] = ordered_json{{"train_fraction", fraction}};

    const icudyn::EventList events = icudyn::read_events_csv(events_path);
    std::vector<std::string> patients;
    patients.reserve(events.size());
    for (const auto& ev : events) patients.push_back(ev.patient_id);
    std::sort(patients.begin(), patients.end());
    patients.erase(std::unique(patients.begin(), patients.end()), patients.end());

    const icudyn::SplitAssignment split = icudyn::split_patients(patients, fraction, seed);
    icudyn::write_split_csv(manifest.out_path("split.csv").string(), split);

    manifest.add_output("split.csv");
    manifest.doc()["notes"] = ordered_json{{"n_patients", patients.size()},
                                           {"n_train_patients", split.train_count()}};
    manifest.write();

    std::cout << "split: " << split.train_count() << "/" << patients.size()
              << " patients to train -> " << out << "\n";
    return 0;
}

int cmd_preprocess(const DataArgs& data, const std::string& out, const std::string& encounter_id,
                   bool snapshot, double window_hours, double step_minutes, int threads) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("preprocess", dir);
    const LoadedData d = load_data(data, manifest);

    manifest.doc()["config"] =
        ordered_json{{"encounter", encounter_id},
                     {"snapshot", snapshot},
                     {"snapshot_window_hours", window_hours},
                     {"snapshot_step_minutes", step_minutes}};

    const icudyn::PreparedData prepared =
        icudyn::prepare_matrices(d.dataset, d.catalog, d.split, threads);
    icudyn::write_norm_stats_csv(manifest.out_path("norm_stats.csv").string(), prepared.stats);
    manifest.add_output("norm_stats.csv");

    if (!encounter_id.empty()) {
        const icudyn::EncounterMatrix* matrix = nullptr;
        for (const auto& m : prepared.train)
            if (m.encounter_id == encounter_id) matrix = &m;
        for (const auto& m : prepared.holdout)
            if (m.encounter_id == encounter_id) matrix = &m;
        if (!matrix)
            icudyn::fail_data("E_UNKNOWN_ENCOUNTER",
                              "encounter '" + encounter_id + "' is not in the dataset");
        const std::string matrix_name = "matrix_" + encounter_id + ".csv";
        icudyn::write_matrix_csv(manifest.out_path(matrix_name).string(), *matrix);
        manifest.add_output(matrix_name);
        if (snapshot) {
            const std::string snap_name = "snapshot_" + encounter_id + ".csv";
            icudyn::write_snapshot_csv(
                manifest.out_path(snap_name).string(),
                icudyn::build_snapshot(*matrix, window_hours * 60.0, step_minutes));
            manifest.add_output(snap_name);
        }
    }

    manifest.doc()["notes"] = ordered_json{{"n_train_encounters", prepared.train.size()},
                                           {"n_holdout_encounters", prepared.holdout.size()},
                                           {"dropped_unknown_events", d.dataset.dropped_unknown},
                                           {"unlabeled_encounters", d.dataset.unlabeled_encounters}};
    manifest.write();

    std::cout << "preprocess: " << prepared.train.size() << " train / " << prepared.holdout.size()
              << " holdout encounters -> " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& model_flag, const std::string& out,
              const CLI::Option* seed_opt, std::uint64_t seed_flag, int threads) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("train", dir);
    manifest.add_input(config_path);

    const ordered_json j = load_json(config_path);
    const std::string what = "train config";
    reject_unknown_keys(j, {"model", "events", "labels", "catalog", "split", "learning_rate",
                            "epochs", "batch_size", "seed", "clip_norm", "momentum",
                            "delta_t_min_hours", "delta_t_max_hours", "hidden_widths",
                            "bptt_truncation", "train_window_hours", "hidden_width",
                            "feature_at_hours"},
                        what);

    std::string model_kind = "rnn";
    maybe(j, "model", model_kind, what);
    if (!model_flag.empty()) model_kind = model_flag;  // --model wins over the config
    if (model_kind != "rnn" && model_kind != "lr" && model_kind != "mlp")
        icudyn::fail_usage("E_USAGE", "model must be rnn, lr, or mlp");

    DataArgs data;
    maybe(j, "events", data.events, what);
    maybe(j, "labels", data.labels, what);
    maybe(j, "catalog", data.catalog, what);
    maybe(j, "split", data.split, what);
    for (const auto& [flag, value] : {std::pair<const char*, const std::string&>{"events", data.events},
                                      {"labels", data.labels},
                                      {"catalog", data.catalog},
                                      {"split", data.split}})
        if (value.empty()) icudyn::fail_data("E_CONFIG", what + ": missing '" + std::string(flag) + "'");

    const LoadedData d = load_data(data, manifest);
    const icudyn::PreparedData prepared =
        icudyn::prepare_matrices(d.dataset, d.catalog, d.split, threads);
    icudyn::write_norm_stats_csv(manifest.out_path("norm_stats.csv").string(), prepared.stats);
    manifest.add_output("norm_stats.csv");

    ordered_json config_snapshot;
    config_snapshot["model"] = model_kind;
    bool diverged = false;
    double initial_loss = 0.0, final_loss = 0.0;
    std::vector<double> epoch_loss;
    std::string ckpt_name = model_kind + ".ckpt";

    if (model_kind == "rnn") {
        icudyn::TrainConfig c;
        maybe(j, "learning_rate", c.learning_rate, what);
        maybe(j, "epochs", c.epochs, what);
        maybe(j, "batch_size", c.batch_size, what);
        maybe(j, "seed", c.seed, what);
        maybe(j, "clip_norm", c.clip_norm, what);
        maybe(j, "momentum", c.momentum, what);
        maybe(j, "delta_t_min_hours", c.delta_t_min_hours, what);
        maybe(j, "delta_t_max_hours", c.delta_t_max_hours, what);
        maybe(j, "hidden_widths", c.hidden_widths, what);
        maybe(j, "bptt_truncation", c.bptt_truncation, what);
        maybe(j, "train_window_hours", c.train_window_hours, what);
        c.seed = resolve_seed(seed_opt, seed_flag, c.seed);
        manifest.doc()["seed"] = c.seed;

        config_snapshot["learning_rate"] = c.learning_rate;
        config_snapshot["epochs"] = c.epochs;
        config_snapshot["batch_size"] = c.batch_size;
        config_snapshot["seed"] = c.seed;
        config_snapshot["clip_norm"] = c.clip_norm;
        config_snapshot["momentum"] = c.momentum;
        config_snapshot["delta_t_min_hours"] = c.delta_t_min_hours;
        config_snapshot["delta_t_max_hours"] = c.delta_t_max_hours;
        config_snapshot["hidden_widths"] = c.hidden_widths;
        config_snapshot["bptt_truncation"] = c.bptt_truncation;
        config_snapshot["train_window_hours"] = c.train_window_hours;

        const icudyn::TrainResult result = icudyn::train(prepared.train, c);
        icudyn::save_params(result.params, manifest.out_path(ckpt_name).string());
        diverged = result.diverged;
        initial_loss = result.initial_loss;
        final_loss = result.final_loss;
        epoch_loss = result.epoch_loss;
    } else {
        icudyn::BaselineConfig c;
        double feature_at_hours = 12.0;
        maybe(j, "learning_rate", c.learning_rate, what);
        maybe(j, "epochs", c.epochs, what);
        maybe(j, "seed", c.seed, what);
        maybe(j, "momentum", c.momentum, what);
        maybe(j, "hidden_width", c.hidden_width, what);
        maybe(j, "feature_at_hours", feature_at_hours, what);
        c.seed = resolve_seed(seed_opt, seed_flag, c.seed);
        manifest.doc()["seed"] = c.seed;

        config_snapshot["learning_rate"] = c.learning_rate;
        config_snapshot["epochs"] = c.epochs;
        config_snapshot["seed"] = c.seed;
        config_snapshot["momentum"] = c.momentum;
        if (model_kind == "mlp") config_snapshot["hidden_width"] = c.hidden_width;
        config_snapshot["feature_at_hours"] = feature_at_hours;

        const double cutoff = feature_at_hours * 60.0;
        std::vector<Eigen::VectorXd> rows;
        std::vector<int> labels;
        for (const auto& m : prepared.train) {
            if (m.times.front() > cutoff) continue;
            rows.push_back(icudyn::extract_static_features(m, cutoff));
            labels.push_back(m.survived ? 0 : 1);
        }
        if (rows.empty())
            icudyn::fail_data("E_EMPTY_INPUT", "no training encounter has data at the cutoff");
        Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();

        if (model_kind == "lr") {
            const icudyn::LinearTrainResult result = icudyn::train_lr(features, labels, c);
            icudyn::save_params(result.model, manifest.out_path(ckpt_name).string());
            diverged = result.diverged;
            epoch_loss = result.epoch_loss;
        } else {
            const icudyn::MlpTrainResult result = icudyn::train_mlp(features, labels, c);
            icudyn::save_params(result.model, manifest.out_path(ckpt_name).string());
            diverged = result.diverged;
            epoch_loss = result.epoch_loss;
        }
        initial_loss = epoch_loss.empty() ? 0.0 : epoch_loss.front();
        final_loss = epoch_loss.empty() ? 0.0 : epoch_loss.back();
    }

    icudyn::write_loss_history_csv(manifest.out_path("loss_history.csv").string(), initial_loss,
                                   epoch_loss);
    manifest.add_output(ckpt_name);
    manifest.add_output(ckpt_name + ".manifest.json");
    manifest.add_output("loss_history.csv");
    manifest.doc()["config"] = config_snapshot;
    manifest.doc()["notes"] =
        ordered_json{{"diverged", diverged},
                     {"initial_loss", initial_loss},
                     {"final_loss", final_loss},
                     {"completed_epochs", epoch_loss.size()},
                     {"n_train_encounters", prepared.train.size()}};
    manifest.write();

    if (diverged)
        std::cerr << "warning: training diverged after " << epoch_loss.size()
                  << " epochs; the checkpoint holds the last stable parameters\n";
    std::cout << "train " << model_kind << ": loss " << initial_loss << " -> " << final_loss
              << " over " << epoch_loss.size() << " epochs -> " << out << "\n";
    return 0;
}

int cmd_evaluate(const DataArgs& data, const std::string& stats_path,
                 const std::vector<std::string>& checkpoints, double observe_hours,
                 double delta_t_hours, int n_boot, const std::string& out,
                 const CLI::Option* seed_opt, std::uint64_t seed_flag, int threads) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("evaluate", dir);
    const LoadedData d = load_data(data, manifest);
    manifest.add_input(stats_path);
    for (const auto& c : checkpoints) manifest.add_input(c);

    const std::uint64_t seed = resolve_seed(seed_opt, seed_flag, 0);
    manifest.doc()["seed"] = seed;
    manifest.doc()["config"] = ordered_json{{"observe_hours", observe_hours},
                                            {"delta_t_hours", delta_t_hours},
                                            {"bootstrap_resamples", n_boot},
                                            {"checkpoints", checkpoints}};

    const icudyn::NormStats stats = icudyn::read_norm_stats_csv(stats_path);
    const double observe_minutes = observe_hours * 60.0;
    const EvalCohort cohort = build_eval_cohort(d, stats, observe_minutes, threads);

    std::vector<icudyn::MetricsRow> rows;
    std::vector<std::pair<std::string, icudyn::RocResult>> curves;
    std::vector<double> reference_scores;
    std::map<std::string, int> name_count;

    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const std::vector<double> scores =
            score_checkpoint(checkpoints[i], cohort, observe_minutes, delta_t_hours, threads);
        std::string name = icudyn::to_string(icudyn::peek_model_type(checkpoints[i]));
        if (++name_count[name] > 1) name += std::to_string(name_count[name]);

        icudyn::MetricsRow row;
        row.model = name;
        row.observe_hours = observe_hours;
        row.delta_t_hours = delta_t_hours;
        const icudyn::RocResult roc = icudyn::roc_auc(scores, cohort.labels);
        row.auc = roc.auc;
        row.n = static_cast<int>(scores.size());
        if (i == 0) {
            reference_scores = scores;
        } else {
            row.p_vs_baseline =
                icudyn::auc_pvalue(scores, reference_scores, cohort.labels, n_boot, seed, threads);
        }
        rows.push_back(row);
        curves.emplace_back(name, roc);
    }

    icudyn::write_metrics_csv(manifest.out_path("metrics.csv").string(), rows);
    icudyn::write_roc_points_csv(manifest.out_path("roc_points.csv").string(), curves);
    manifest.add_output("metrics.csv");
    manifest.add_output("roc_points.csv");
    manifest.doc()["notes"] = ordered_json{{"n_evaluated", cohort.matrices.size()}};
    manifest.write();

    for (const auto& row : rows) {
        std::cout << "evaluate " << row.model << ": auc " << row.auc << " over " << row.n
                  << " encounters";
        if (row.p_vs_baseline >= 0.0) std::cout << " (p=" << row.p_vs_baseline << " vs " << rows.front().model << ")";
        std::cout << "\n";
    }
    return 0;
}

int cmd_sweep(const DataArgs& data, const std::string& stats_path, const std::string& checkpoint,
              const std::vector<double>& hours, double delta_t_hours, const std::string& out,
              int threads) {
    const fs::path dir = ensure_out_dir(out);
    ManifestBuilder manifest("sweep", dir);
    const LoadedData d = load_data(data, manifest);
    manifest.add_input(stats_path);
    manifest.add_input(checkpoint);

    manifest.doc()["config"] = ordered_json{
        {"hours", hours}, {"delta_t_hours", delta_t_hours}, {"checkpoint", checkpoint}};

    if (icudyn::peek_model_type(checkpoint) != icudyn::ModelType::Rnn)
        icudyn::fail_data("E_FORMAT", "sweep needs an rnn checkpoint");
    const icudyn::ModelParams params = icudyn::load_rnn_params(checkpoint);
    const icudyn::NormStats stats = icudyn::read_norm_stats_csv(stats_path);

    std::vector<const icudyn::EncounterRecord*> holdout;
    for (const auto& enc : d.dataset.encounters)
        if (!d.split.is_train(enc.patient_id)) holdout.push_back(&enc);
    if (holdout.empty()) icudyn::fail_data("E_EMPTY_INPUT", "the split leaves no holdout encounters");
    std::vector<icudyn::EncounterMatrix> matrices(holdout.size());
    icudyn::parallel_for(holdout.size(), threads, [&](std::size_t i) {
        matrices[i] = icudyn::build_event_grid(icudyn::apply_norm(holdout[i]->events, stats),
                                               d.catalog, holdout[i]->survived);
    });

    const icudyn::SweepResult sweep =
        icudyn::observation_sweep(params, matrices, hours, delta_t_hours, threads);
    icudyn::write_sweep_csv(manifest.out_path("sweep.csv").string(), "rnn", sweep);
    manifest.add_output("sweep.csv");
    manifest.doc()["notes"] = ordered_json{{"excluded_encounters", sweep.excluded}};
    manifest.write();

    for (const auto& row : sweep.rows)
        std::cout << "sweep " << row.observe_hours << "h: auc " << row.auc << " over "
                  << row.n_encounters << " encounters\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic ICU mortality-risk pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    std::string synth_config, synth_out;
    std::uint64_t synth_seed = 0;
    synth->add_option("--config", synth_config, "synth config JSON")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    const CLI::Option* synth_seed_opt = synth->add_option("--seed", synth_seed, "override the seed");

    // split
    auto* split = app.add_subcommand("split", "patient-level train/holdout split");
    std::string split_events, split_labels, split_out;
    double split_fraction = 0.75;
    std::uint64_t split_seed = 0;
    split->add_option("--events", split_events, "events CSV")->required();
    split->add_option("--labels", split_labels, "labels CSV, recorded in the manifest");
    split->add_option("--fraction", split_fraction, "training fraction (default 0.75)");
    split->add_option("--out", split_out, "output directory")->required();
    const CLI::Option* split_seed_opt = split->add_option("--seed", split_seed, "shuffle seed");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "fit normalization and export matrices");
    DataArgs prep_data;
    std::string prep_out, prep_encounter;
    bool prep_snapshot = false;
    double prep_window = 12.0, prep_step = 5.0;
    int prep_threads = 1;
    add_data_options(prep, prep_data);
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--encounter", prep_encounter, "also export this encounter's event grid");
    prep->add_flag("--snapshot", prep_snapshot, "also export the regular-grid snapshot");
    prep->add_option("--window-hours", prep_window, "snapshot window (default 12)");
    prep->add_option("--step-minutes", prep_step, "snapshot step (default 5)");
    prep->add_option("--threads", prep_threads, "worker threads (default 1)");

    // train
    auto* train = app.add_subcommand("train", "train the rnn or a baseline");
    std::string train_config, train_model, train_out;
    std::uint64_t train_seed = 0;
    int train_threads = 1;
    train->add_option("--config", train_config, "train config JSON")->required();
    train->add_option("--model", train_model, "rnn, lr, or mlp; overrides the config");
    train->add_option("--out", train_out, "output directory")->required();
    const CLI::Option* train_seed_opt = train->add_option("--seed", train_seed, "override the seed");
    train->add_option("--threads", train_threads, "worker threads (default 1)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "holdout AUC and model comparison");
    DataArgs eval_data;
    std::string eval_stats, eval_out;
    std::vector<std::string> eval_ckpts;
    double eval_observe = 12.0, eval_dt = 12.0;
    int eval_boot = 2000, eval_threads = 1;
    std::uint64_t eval_seed = 0;
    add_data_options(eval, eval_data);
    eval->add_option("--stats", eval_stats, "norm_stats.csv from training")->required();
    eval->add_option("--models,--checkpoint", eval_ckpts,
                     "model checkpoints; the first is the comparison reference")
        ->required()
        ->delimiter(',');
    eval->add_option("--observe-hours", eval_observe, "observation window (default 12)");
    eval->add_option("--delta-t", eval_dt, "prediction horizon in hours (default 12)");
    eval->add_option("--bootstrap", eval_boot, "paired bootstrap resamples (default 2000)");
    eval->add_option("--out", eval_out, "output directory")->required();
    const CLI::Option* eval_seed_opt = eval->add_option("--seed", eval_seed, "bootstrap seed");
    eval->add_option("--threads", eval_threads, "worker threads (default 1)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "AUC as a function of observation time");
    DataArgs sweep_data;
    std::string sweep_stats, sweep_ckpt, sweep_out;
    std::vector<double> sweep_hours{1.0, 3.0, 6.0, 9.0, 12.0};
    double sweep_dt = 12.0;
    int sweep_threads = 1;
    add_data_options(sweep, sweep_data);
    sweep->add_option("--stats", sweep_stats, "norm_stats.csv from training")->required();
    sweep->add_option("--checkpoint", sweep_ckpt, "rnn checkpoint")->required();
    sweep->add_option("--hours", sweep_hours, "observation durations (default 1,3,6,9,12)")
        ->delimiter(',');
    sweep->add_option("--delta-t", sweep_dt, "prediction horizon in hours (default 12)");
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep->add_option("--threads", sweep_threads, "worker threads (default 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error E_USAGE: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_config, synth_out, synth_seed_opt, synth_seed);
        if (split->parsed())
            return cmd_split(split_events, split_labels, split_fraction, split_out, split_seed_opt,
                             split_seed);
        if (prep->parsed())
            return cmd_preprocess(prep_data, prep_out, prep_encounter, prep_snapshot, prep_window,
                                  prep_step, prep_threads);
        if (train->parsed())
            return cmd_train(train_config, train_model, train_out, train_seed_opt, train_seed,
                             train_threads);
        if (eval->parsed())
            return cmd_evaluate(eval_data, eval_stats, eval_ckpts, eval_observe, eval_dt,
                                eval_boot, eval_out, eval_seed_opt, eval_seed, eval_threads);
        if (sweep->parsed())
            return cmd_sweep(sweep_data, sweep_stats, sweep_ckpt, sweep_hours, sweep_dt, sweep_out,
                             sweep_threads);
    } catch (const icudyn::Error& e) {
        std::cerr << "error " << e.tag() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error E_INTERNAL: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
