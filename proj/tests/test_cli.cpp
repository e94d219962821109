// Drives the installed executable end to end on a small synthetic cohort.
// Expensive stages run once and are shared by the checks below.

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "icudyn/baselines.hpp"
#include "icudyn/checkpoint.hpp"
#include "icudyn/io.hpp"
#include "support.hpp"

using testsup::CliResult;
using testsup::run_cli;

namespace {

const char* kSynthConfig = R"({
  "n_patients": 30,
  "min_encounters_per_patient": 1,
  "max_encounters_per_patient": 2,
  "n_physiologic": 3,
  "n_lab": 2,
  "n_drug": 2,
  "n_intervention": 1,
  "latent_dim": 4,
  "hazard_state_weights": [0.4, 0.4, 0.0, 0.0],
  "hazard_deriv_weights": [0.0, 0.0, 1.0, 1.0],
  "target_mortality": 0.3,
  "duration_min_hours": 16,
  "duration_max_hours": 26,
  "seed": 5
})";

std::string train_rnn_config(const std::string& synth, const std::string& split) {
    return "{\n"
           "  \"model\": \"rnn\",\n"
           "  \"events\": \"" + synth + "/events.csv\",\n"
           "  \"labels\": \"" + synth + "/labels.csv\",\n"
           "  \"catalog\": \"" + synth + "/catalog.csv\",\n"
           "  \"split\": \"" + split + "/split.csv\",\n"
           "  \"learning_rate\": 0.05,\n"
           "  \"epochs\": 2,\n"
           "  \"batch_size\": 8,\n"
           "  \"hidden_widths\": [6],\n"
           "  \"train_window_hours\": 12,\n"
           "  \"delta_t_min_hours\": 6,\n"
           "  \"delta_t_max_hours\": 12,\n"
           "  \"seed\": 21\n"
           "}\n";
}

std::string train_static_config(const std::string& synth, const std::string& split,
                                const std::string& model, int epochs, int seed) {
    return "{\n"
           "  \"model\": \"" + model + "\",\n"
           "  \"events\": \"" + synth + "/events.csv\",\n"
           "  \"labels\": \"" + synth + "/labels.csv\",\n"
           "  \"catalog\": \"" + synth + "/catalog.csv\",\n"
           "  \"split\": \"" + split + "/split.csv\",\n"
           "  \"learning_rate\": 0.5,\n"
           "  \"epochs\": " + std::to_string(epochs) + ",\n"
           "  \"hidden_width\": 6,\n"
           "  \"feature_at_hours\": 12,\n"
           "  \"seed\": " + std::to_string(seed) + "\n"
           "}\n";
}

// One shared pipeline run; the directory lives for the whole test binary.
struct Pipeline {
    testsup::TempDir dir;
    std::string synth, split, prep, rnn, lr, mlp, eval, sweep;
    std::string first_encounter;

    Pipeline() {
        synth = (dir / "synth").string();
        split = (dir / "split").string();
        prep = (dir / "prep").string();
        rnn = (dir / "rnn").string();
        lr = (dir / "lr").string();
        mlp = (dir / "mlp").string();
        eval = (dir / "eval").string();
        sweep = (dir / "sweep").string();

        testsup::spit(dir / "synth.json", kSynthConfig);
        step({"synth", "--config", (dir / "synth.json").string(), "--out", synth});
        step({"split", "--events", synth + "/events.csv", "--labels", synth + "/labels.csv",
              "--fraction", "0.75", "--out", split, "--seed", "13"});

        const auto labels = icudyn::read_labels_csv(synth + "/labels.csv");
        first_encounter = std::min_element(labels.begin(), labels.end(), [](auto& a, auto& b) {
                              return a.first < b.first;
                          })->first;
        step({"preprocess", "--events", synth + "/events.csv", "--labels", synth + "/labels.csv",
              "--catalog", synth + "/catalog.csv", "--split", split + "/split.csv", "--out", prep,
              "--encounter", first_encounter, "--snapshot"});

        testsup::spit(dir / "rnn.json", train_rnn_config(synth, split));
        step({"train", "--config", (dir / "rnn.json").string(), "--out", rnn});
        testsup::spit(dir / "lr.json", train_static_config(synth, split, "rnn", 50, 22));
        step({"train", "--config", (dir / "lr.json").string(), "--model", "lr", "--out", lr});
        testsup::spit(dir / "mlp.json", train_static_config(synth, split, "mlp", 80, 23));
        step({"train", "--config", (dir / "mlp.json").string(), "--out", mlp});

        step({"evaluate", "--events", synth + "/events.csv", "--labels", synth + "/labels.csv",
              "--catalog", synth + "/catalog.csv", "--split", split + "/split.csv", "--stats",
              rnn + "/norm_stats.csv", "--models",
              rnn + "/rnn.ckpt," + lr + "/lr.ckpt," + mlp + "/mlp.ckpt", "--observe-hours", "12",
              "--delta-t", "6", "--bootstrap", "200", "--seed", "31", "--out", eval});
        step({"sweep", "--events", synth + "/events.csv", "--labels", synth + "/labels.csv",
              "--catalog", synth + "/catalog.csv", "--split", split + "/split.csv", "--stats",
              rnn + "/norm_stats.csv", "--checkpoint", rnn + "/rnn.ckpt", "--hours", "3,6,12",
              "--delta-t", "6", "--out", sweep});
    }

    void step(const std::vector<std::string>& args) {
        const CliResult r = run_cli(args);
        if (r.exit_code != 0)
            throw std::runtime_error("pipeline step '" + args[0] + "' failed:\n" + r.output);
    }
};

const Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string::npos) break;
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("the full pipeline runs and produces the documented files") {
    const auto& p = pipeline();
    for (const char* f : {"/events.csv", "/labels.csv", "/catalog.csv", "/ground_truth.csv",
                          "/run_manifest.json"})
        CHECK(std::filesystem::exists(p.synth + f));
    CHECK(std::filesystem::exists(p.split + "/split.csv"));
    CHECK(std::filesystem::exists(p.prep + "/norm_stats.csv"));
    CHECK(std::filesystem::exists(p.prep + "/matrix_" + p.first_encounter + ".csv"));
    CHECK(std::filesystem::exists(p.prep + "/snapshot_" + p.first_encounter + ".csv"));
    CHECK(std::filesystem::exists(p.rnn + "/rnn.ckpt"));
    CHECK(std::filesystem::exists(p.rnn + "/rnn.ckpt.manifest.json"));
    CHECK(std::filesystem::exists(p.rnn + "/loss_history.csv"));
    CHECK(std::filesystem::exists(p.eval + "/metrics.csv"));
    CHECK(std::filesystem::exists(p.eval + "/roc_points.csv"));
    CHECK(std::filesystem::exists(p.sweep + "/sweep.csv"));

    // The same preprocessing ran in two commands; the stats must agree.
    CHECK(testsup::files_equal(p.prep + "/norm_stats.csv", p.rnn + "/norm_stats.csv"));

    CHECK(icudyn::peek_model_type(p.rnn + "/rnn.ckpt") == icudyn::ModelType::Rnn);
    CHECK(icudyn::peek_model_type(p.lr + "/lr.ckpt") ==
          icudyn::ModelType::LogisticRegression);
    CHECK(icudyn::peek_model_type(p.mlp + "/mlp.ckpt") == icudyn::ModelType::Mlp);

    const auto manifest = testsup::slurp(p.synth + "/run_manifest.json");
    CHECK(manifest.find("\"tool\": \"icudyn\"") != std::string::npos);
    CHECK(manifest.find("\"command\": \"synth\"") != std::string::npos);
    CHECK(manifest.find("fnv1a64") != std::string::npos);
}

TEST_CASE("metrics compare every later model against the first") {
    const auto& p = pipeline();
    const auto lines = lines_of(testsup::slurp(p.eval + "/metrics.csv"));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "model,observe_hours,delta_t_hours,auc,n,p_vs_baseline");
    CHECK(lines[1].substr(0, 4) == "rnn,");
    CHECK(lines[1].back() == ',');  // the reference row has no p-value
    CHECK(lines[2].substr(0, 3) == "lr,");
    CHECK(lines[3].substr(0, 4) == "mlp,");
    for (int i : {2, 3}) {
        const auto comma = lines[i].rfind(',');
        const double pval = std::stod(lines[i].substr(comma + 1));
        CHECK(pval > 0.0);
        CHECK(pval <= 1.0);
    }

    const auto roc = testsup::slurp(p.eval + "/roc_points.csv");
    CHECK(roc.find("rnn,") != std::string::npos);
    CHECK(roc.find("lr,") != std::string::npos);
    CHECK(roc.find("mlp,") != std::string::npos);
}

TEST_CASE("the sweep echoes the requested durations in order") {
    const auto& p = pipeline();
    const auto lines = lines_of(testsup::slurp(p.sweep + "/sweep.csv"));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "model,observe_hours,auc,n_encounters");
    CHECK(lines[1].substr(0, 6) == "rnn,3,");
    CHECK(lines[2].substr(0, 6) == "rnn,6,");
    CHECK(lines[3].substr(0, 7) == "rnn,12,");
}

TEST_CASE("reruns with the same seeds are byte-identical") {
    const auto& p = pipeline();
    testsup::TempDir dir;
    const auto synth2 = (dir / "synth").string();
    testsup::spit(dir / "synth.json", kSynthConfig);
    CliResult r = run_cli({"synth", "--config", (dir / "synth.json").string(), "--out", synth2});
    REQUIRE(r.exit_code == 0);
    CHECK(testsup::files_equal(p.synth + "/events.csv", synth2 + "/events.csv"));
    CHECK(testsup::files_equal(p.synth + "/labels.csv", synth2 + "/labels.csv"));
    CHECK(testsup::files_equal(p.synth + "/ground_truth.csv", synth2 + "/ground_truth.csv"));

    const auto rnn2 = (dir / "rnn").string();
    testsup::spit(dir / "rnn.json", train_rnn_config(p.synth, p.split));
    r = run_cli({"train", "--config", (dir / "rnn.json").string(), "--out", rnn2});
    REQUIRE(r.exit_code == 0);
    CHECK(testsup::files_equal(p.rnn + "/rnn.ckpt", rnn2 + "/rnn.ckpt"));
    CHECK(testsup::files_equal(p.rnn + "/rnn.ckpt.manifest.json",
                               rnn2 + "/rnn.ckpt.manifest.json"));
    CHECK(testsup::files_equal(p.rnn + "/loss_history.csv", rnn2 + "/loss_history.csv"));
}

TEST_CASE("an explicit --seed beats the environment, which beats the config") {
    testsup::TempDir dir;
    testsup::spit(dir / "synth.json", R"({"n_patients": 8, "latent_dim": 3,
        "hazard_state_weights": [0.4, 0.4, 0.0], "hazard_deriv_weights": [0.0, 0.0, 1.0],
        "target_mortality": 0.3, "duration_min_hours": 6, "duration_max_hours": 10, "seed": 5})");
    const auto config = (dir / "synth.json").string();

    auto run = [&](const std::string& name, const std::vector<std::string>& extra,
                   const std::string& env) {
        std::vector<std::string> args{"synth", "--config", config, "--out", (dir / name).string()};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(run_cli(args, env).exit_code == 0);
        return (dir / name).string() + "/events.csv";
    };

    const auto from_env = run("a", {}, "ICUDYN_SEED=99");
    const auto from_flag = run("b", {"--seed", "99"}, "");
    const auto from_config = run("c", {}, "");
    const auto flag_beats_env = run("d", {"--seed", "99"}, "ICUDYN_SEED=123");
    CHECK(testsup::files_equal(from_env, from_flag));
    CHECK(testsup::files_equal(from_flag, flag_beats_env));
    CHECK_FALSE(testsup::files_equal(from_env, from_config));
}

TEST_CASE("usage problems exit with code 2") {
    CHECK(run_cli({}).exit_code == 2);
    CHECK(run_cli({"synth", "--no-such-flag"}).exit_code == 2);
    CHECK(run_cli({"train", "--out", "/tmp/x"}).exit_code == 2);  // --config is required

    testsup::TempDir dir;
    testsup::spit(dir / "synth.json", R"({"n_patients": 2, "latent_dim": 2})");
    const CliResult r = run_cli({"synth", "--config", (dir / "synth.json").string(), "--out",
                                 (dir / "out").string()},
                                "ICUDYN_SEED=banana");
    CHECK(r.exit_code == 2);
    CHECK(r.contains("E_SEED"));
}

TEST_CASE("config mistakes are reported as data errors with the bad key") {
    testsup::TempDir dir;
    const auto out = (dir / "out").string();

    CliResult r = run_cli({"synth", "--config", (dir / "missing.json").string(), "--out", out});
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_IO"));

    testsup::spit(dir / "bad.json", R"({"n_patients": 4, "n_legs": 7})");
    r = run_cli({"synth", "--config", (dir / "bad.json").string(), "--out", out});
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_CONFIG"));
    CHECK(r.contains("n_legs"));

    testsup::spit(dir / "broken.json", "{ not json");
    r = run_cli({"synth", "--config", (dir / "broken.json").string(), "--out", out});
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_CONFIG"));
}

TEST_CASE("degenerate holdout cohorts fail with clear errors") {
    testsup::TempDir dir;
    // Two patients, one per side; both survive, so the holdout has one class.
    testsup::spit(dir / "events.csv",
                  "patient_id,encounter_id,variable,t_minutes,value\n"
                  "p1,p1-E1,hr,0,60\np1,p1-E1,hr,800,65\n"
                  "p2,p2-E1,hr,0,70\np2,p2-E1,hr,800,75\n"
                  "p3,p3-E1,hr,0,80\np3,p3-E1,hr,800,85\n");
    testsup::spit(dir / "labels.csv", "encounter_id,survived\np1-E1,1\np2-E1,1\np3-E1,1\n");
    testsup::spit(dir / "catalog.csv",
                  "raw_name,canonical_name,kind,unit_scale,unit_offset\nhr,hr,physiologic,1,0\n");
    testsup::spit(dir / "split.csv", "patient_id,split\np1,train\np2,holdout\np3,holdout\n");

    icudyn::LinearModel lr;
    lr.w = Eigen::VectorXd::Zero(1);
    icudyn::save_params(lr, (dir / "lr.ckpt").string());

    testsup::spit(dir / "stats.csv", "variable,mean,std,binarized\nhr,0,1,0\n");
    const std::vector<std::string> data{
        "--events", (dir / "events.csv").string(), "--labels", (dir / "labels.csv").string(),
        "--catalog", (dir / "catalog.csv").string(), "--split", (dir / "split.csv").string(),
        "--stats", (dir / "stats.csv").string()};

    std::vector<std::string> args{"evaluate"};
    args.insert(args.end(), data.begin(), data.end());
    args.insert(args.end(), {"--models", (dir / "lr.ckpt").string(), "--bootstrap", "50", "--out",
                             (dir / "eval").string()});
    CliResult r = run_cli(args);
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_SINGLE_CLASS"));

    // The sweep refuses a non-rnn checkpoint before scoring anything.
    std::vector<std::string> sweep_args{"sweep"};
    sweep_args.insert(sweep_args.end(), data.begin(), data.end());
    sweep_args.insert(sweep_args.end(), {"--checkpoint", (dir / "lr.ckpt").string(), "--out",
                                         (dir / "sweep").string()});
    r = run_cli(sweep_args);
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_FORMAT"));
    CHECK(r.contains("sweep needs an rnn checkpoint"));
}

TEST_CASE("preprocess refuses an unknown encounter id") {
    const auto& p = pipeline();
    const CliResult r = run_cli({"preprocess", "--events", p.synth + "/events.csv", "--labels",
                                 p.synth + "/labels.csv", "--catalog", p.synth + "/catalog.csv",
                                 "--split", p.split + "/split.csv", "--out",
                                 (p.dir / "prep2").string(), "--encounter", "no-such-encounter"});
    CHECK(r.exit_code == 3);
    CHECK(r.contains("E_UNKNOWN_ENCOUNTER"));
}

}  // TEST_SUITE
