#include "icudyn/synth.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "icudyn/csv.hpp"
#include "icudyn/errors.hpp"
#include "icudyn/eval.hpp"
#include "icudyn/rng.hpp"

namespace icudyn {

namespace {

// Stream tags for deriving independent child generators from the cohort seed.
constexpr std::uint64_t kDriftStream = 0x64726966ULL;    // latent dynamics
constexpr std::uint64_t kObsMapStream = 0x6f626d61ULL;   // readout map
constexpr std::uint64_t kChannelStream = 0x6368616eULL;  // channel units / aliases
constexpr std::uint64_t kPatientStream = 0x70617469ULL;
constexpr std::uint64_t kEncounterStream = 0x656e6373ULL;

// The first half of the latent dimensions gets fixed process noise; the
// second half is scaled by exp(severity). Severity therefore shows up as
// short-horizon volatility in the observations, not as a level shift.
int volatile_dims_start(int latent_dim) { return (latent_dim + 1) / 2; }

struct ChannelParams {
    std::vector<double> offset;      // per observed channel, canonical units
    std::vector<double> scale;
    std::vector<double> unit_scale;  // ".b" alias: raw = (v - unit_offset) / unit_scale
    std::vector<double> unit_offset;
};

// Channel unit constants are drawn from their own stream so the generator and
// make_synth_catalog agree for any config with the same seed.
ChannelParams derive_channels(const SynthConfig& config) {
    Rng rng(mix_seed(config.seed, kChannelStream));
    ChannelParams ch;
    const int n = config.n_observed();
    ch.offset.reserve(n);
    ch.scale.reserve(n);
    ch.unit_scale.reserve(n);
    ch.unit_offset.reserve(n);
    for (int j = 0; j < n; ++j) {
        ch.offset.push_back(rng.uniform(20.0, 150.0));
        ch.scale.push_back(rng.uniform(2.0, 25.0));
        ch.unit_scale.push_back(rng.uniform(0.05, 4.0));
        ch.unit_offset.push_back(rng.uniform(-20.0, 20.0));
    }
    return ch;
}

std::string two_digit(int i) {
    std::string s = std::to_string(i + 1);
    return s.size() < 2 ? "0" + s : s;
}

std::vector<std::string> canonical_names(const SynthConfig& config) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(config.n_variables()));
    for (int i = 0; i < config.n_physiologic; ++i) names.push_back("phys" + two_digit(i));
    for (int i = 0; i < config.n_lab; ++i) names.push_back("lab" + two_digit(i));
    for (int i = 0; i < config.n_drug; ++i) names.push_back("drug" + two_digit(i));
    for (int i = 0; i < config.n_intervention; ++i) names.push_back("intv" + two_digit(i));
    return names;
}

void validate(const SynthConfig& c) {
    auto bad = [](const std::string& msg) { fail_data("E_CONFIG", msg); };
    if (c.n_patients < 1) bad("n_patients must be >= 1");
    if (c.min_encounters_per_patient < 1 ||
        c.max_encounters_per_patient < c.min_encounters_per_patient)
        bad("encounters per patient must satisfy 1 <= min <= max");
    if (c.n_physiologic < 0 || c.n_lab < 0 || c.n_drug < 0 || c.n_intervention < 0)
        bad("variable counts must be >= 0");
    if (c.n_observed() < 1) bad("at least one physiologic or lab variable is required");
    if (c.latent_dim < 1) bad("latent_dim must be >= 1");
    if (!(c.euler_step_minutes > 0.0) || c.euler_step_minutes > 1.0)
        bad("euler_step_minutes must be in (0, 1]");
    if (!(c.sample_min_minutes > 0.0) || c.sample_max_minutes < c.sample_min_minutes)
        bad("sampling interval must satisfy 0 < min <= max");
    if (!(c.duration_min_hours > 0.0) || c.duration_max_hours < c.duration_min_hours)
        bad("encounter duration must satisfy 0 < min <= max");
    if (c.hazard_baseline < 0.0) bad("hazard_baseline must be >= 0");
    if (c.target_mortality < 0.0 || c.target_mortality >= 1.0)
        bad("target_mortality must be in [0, 1)");
    if (c.hazard_time_ramp_hours < 0.0) bad("hazard_time_ramp_hours must be >= 0");
    if (c.observation_noise_std < 0.0) bad("observation_noise_std must be >= 0");
    if (c.process_noise_base < 0.0) bad("process_noise_base must be >= 0");
    if (c.sample_gain < 0.0) bad("sample_gain must be >= 0");
    if (c.perturb_amplitude < 0.0 || c.perturb_ramp_hours < 0.0)
        bad("perturbation settings must be >= 0");
    for (double p : {c.phys_sample_prob, c.lab_sample_prob})
        if (p < 0.0 || p > 1.0) bad("sampling probabilities must be in [0, 1]");
    if (c.drug_base_rate < 0.0 || c.intervention_base_rate < 0.0)
        bad("administration rates must be >= 0");
}

Eigen::MatrixXd resolve_drift(const SynthConfig& config) {
    Eigen::MatrixXd a;
    if (config.drift.size() == 0) {
        a = make_stable_drift(config.latent_dim, mix_seed(config.seed, kDriftStream));
    } else {
        if (config.drift.rows() != config.latent_dim || config.drift.cols() != config.latent_dim)
            fail_data("E_SHAPE", "drift matrix must be latent_dim x latent_dim");
        a = config.drift;
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> es(a);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double re = es.eigenvalues()(i).real();
        if (re > 1e-9)
            fail_data("E_UNSTABLE", "drift eigenvalue with real part " + std::to_string(re) +
                                        " makes the latent process unstable");
    }
    return a;
}

Eigen::MatrixXd resolve_obs_map(const SynthConfig& config) {
    if (config.observation_map.size() != 0) {
        if (config.observation_map.rows() != config.n_observed() ||
            config.observation_map.cols() != config.latent_dim)
            fail_data("E_SHAPE", "observation map must be (n_physiologic + n_lab) x latent_dim");
        return config.observation_map;
    }
    Rng rng(mix_seed(config.seed, kObsMapStream));
    Eigen::MatrixXd c(config.n_observed(), config.latent_dim);
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        for (Eigen::Index k = 0; k < c.cols(); ++k) c(r, k) = rng.uniform(-1.0, 1.0);
        const double norm = c.row(r).norm();
        if (norm > 1e-12)
            c.row(r) /= norm;
        else
            c(r, 0) = 1.0;
    }
    return c;
}

Eigen::VectorXd resolve_weights(const Eigen::VectorXd& w, int latent_dim, const char* which) {
    if (w.size() == 0) return Eigen::VectorXd::Zero(latent_dim);
    if (w.size() != latent_dim)
        fail_data("E_SHAPE", std::string(which) + " weights must have latent_dim entries");
    return w;
}

// One raw observation in canonical units; the unit alias is applied when the
// final event list is emitted.
struct RawObs {
    int row;  // catalog row
    double t;
    double value;
    bool alias_b;
};

struct StagedEncounter {
    std::string patient_id;
    std::string encounter_id;
    double duration_minutes = 0.0;      // grid-aligned planned stay
    double death_draw = 0.0;            // uniform used for inversion sampling
    std::uint64_t overlay_seed = 0;
    std::vector<double> cum_hazard;     // unscaled, one entry per Euler grid point
    std::vector<RawObs> obs;
};

}  // namespace

Eigen::MatrixXd make_stable_drift(int dim, std::uint64_t seed) {
    if (dim < 1) fail_data("E_CONFIG", "latent dimension must be >= 1");
    Rng rng(seed);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    const int split = volatile_dims_start(dim);
    // Negative diagonal plus a within-block skew part: Re(v* A v) < 0 for any
    // v, so every eigenvalue has a negative real part. The first block decays
    // over hours, the second over minutes.
    for (int i = 0; i < dim; ++i)
        a(i, i) = i < split ? -rng.uniform(0.002, 0.006) : -rng.uniform(0.08, 0.2);
    for (int i = 0; i < dim; ++i) {
        for (int j = i + 1; j < dim; ++j) {
            const bool same_block = (i < split) == (j < split);
            if (!same_block) continue;
            const double s = i < split ? rng.uniform(-0.004, 0.004) : rng.uniform(-0.05, 0.05);
            a(i, j) = s;
            a(j, i) = -s;
        }
    }
    return a;
}

VariableCatalog make_synth_catalog(const SynthConfig& config) {
    validate(config);
    const ChannelParams ch = derive_channels(config);
    const auto names = canonical_names(config);

    VariableCatalog catalog;
    for (int j = 0; j < config.n_observed(); ++j) {
        const VariableKind kind =
            j < config.n_physiologic ? VariableKind::Physiologic : VariableKind::Lab;
        CatalogEntry a{names[static_cast<std::size_t>(j)], kind, 1.0, 0.0};
        catalog.add_entry(names[static_cast<std::size_t>(j)] + ".a", a);
        CatalogEntry b{names[static_cast<std::size_t>(j)], kind, ch.unit_scale[j],
                       ch.unit_offset[j]};
        catalog.add_entry(names[static_cast<std::size_t>(j)] + ".b", b);
    }
    for (int d = 0; d < config.n_drug; ++d) {
        const auto& name = names[static_cast<std::size_t>(config.n_observed() + d)];
        catalog.add_entry(name, CatalogEntry{name, VariableKind::Drug, 1.0, 0.0});
    }
    for (int v = 0; v < config.n_intervention; ++v) {
        const auto& name =
            names[static_cast<std::size_t>(config.n_observed() + config.n_drug + v)];
        catalog.add_entry(name, CatalogEntry{name, VariableKind::Intervention, 1.0, 0.0});
    }
    return catalog;
}

std::string synth_catalog_csv(const SynthConfig& config) {
    validate(config);
    const ChannelParams ch = derive_channels(config);
    const auto names = canonical_names(config);

    std::string out = "raw_name,canonical_name,kind,unit_scale,unit_offset\n";
    auto row = [&out](const std::string& raw, const std::string& canonical, const char* kind,
                      double scale, double offset) {
        out += raw + ',' + canonical + ',' + kind + ',' + csv::format_double(scale) + ',' +
               csv::format_double(offset) + '\n';
    };
    for (int j = 0; j < config.n_observed(); ++j) {
        const auto& name = names[static_cast<std::size_t>(j)];
        const char* kind = j < config.n_physiologic ? "physiologic" : "lab";
        row(name + ".a", name, kind, 1.0, 0.0);
        row(name + ".b", name, kind, ch.unit_scale[j], ch.unit_offset[j]);
    }
    for (int d = 0; d < config.n_drug; ++d) {
        const auto& name = names[static_cast<std::size_t>(config.n_observed() + d)];
        row(name, name, "drug", 1.0, 0.0);
    }
    for (int v = 0; v < config.n_intervention; ++v) {
        const auto& name =
            names[static_cast<std::size_t>(config.n_observed() + config.n_drug + v)];
        row(name, name, "intervention", 1.0, 0.0);
    }
    return out;
}

SynthCohort generate_cohort(const SynthConfig& config) {
    validate(config);

    const Eigen::MatrixXd drift = resolve_drift(config);
    const Eigen::MatrixXd obs_map = resolve_obs_map(config);
    const Eigen::VectorXd w_state =
        resolve_weights(config.hazard_state_weights, config.latent_dim, "hazard state");
    const Eigen::VectorXd w_deriv =
        resolve_weights(config.hazard_deriv_weights, config.latent_dim, "hazard derivative");
    const ChannelParams ch = derive_channels(config);

    const int dim = config.latent_dim;
    const int vol_start = volatile_dims_start(dim);
    const double step = config.euler_step_minutes;
    const double sqrt_step = std::sqrt(step);
    const double ramp_minutes = config.hazard_time_ramp_hours * 60.0;
    const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(dim));

    std::vector<StagedEncounter> staged;
    staged.reserve(static_cast<std::size_t>(config.n_patients) *
                   static_cast<std::size_t>(config.min_encounters_per_patient));

    for (int p = 0; p < config.n_patients; ++p) {
        Rng prng(mix_seed(mix_seed(config.seed, kPatientStream), static_cast<std::uint64_t>(p)));
        Eigen::VectorXd base(dim);
        for (int j = 0; j < dim; ++j) base(j) = config.patient_base_sd * prng.normal();
        const double severity_p = config.severity_sd_patient * prng.normal();
        const int span = config.max_encounters_per_patient - config.min_encounters_per_patient;
        const int n_enc =
            config.min_encounters_per_patient +
            (span > 0 ? static_cast<int>(prng.uniform_int(static_cast<std::uint64_t>(span) + 1))
                      : 0);

        char pid[16];
        std::snprintf(pid, sizeof pid, "P%04d", p + 1);

        for (int e = 0; e < n_enc; ++e) {
            Rng rng(mix_seed(mix_seed(mix_seed(config.seed, kEncounterStream),
                                      static_cast<std::uint64_t>(p)),
                             static_cast<std::uint64_t>(e)));
            StagedEncounter enc;
            enc.patient_id = pid;
            enc.encounter_id = std::string(pid) + "-E" + std::to_string(e + 1);

            const double severity = severity_p + config.severity_sd_encounter * rng.normal();
            const double planned_minutes =
                rng.uniform(config.duration_min_hours, config.duration_max_hours) * 60.0;
            enc.death_draw = rng.uniform();
            enc.overlay_seed = rng.next_u64();

            const auto n_steps = static_cast<std::size_t>(std::ceil(planned_minutes / step));
            enc.duration_minutes = static_cast<double>(n_steps) * step;

            Eigen::VectorXd noise_sd(dim);
            for (int j = 0; j < dim; ++j)
                noise_sd(j) =
                    config.process_noise_base * (j >= vol_start ? std::exp(severity) : 1.0);
            const double admin_boost = std::exp(config.severity_rate_gain * severity);
            const double drug_rate = std::min(0.5, config.drug_base_rate * admin_boost);
            const double intv_rate = std::min(0.5, config.intervention_base_rate * admin_boost);

            Eigen::VectorXd x(dim);
            for (int j = 0; j < dim; ++j) x(j) = config.initial_state_sd * rng.normal();

            enc.cum_hazard.assign(n_steps + 1, 0.0);
            Eigen::VectorXd x_at_last_sample = x;
            double next_sample_t = 0.0;

            for (std::size_t k = 0; k < n_steps; ++k) {
                const double t = static_cast<double>(k) * step;

                if (t >= next_sample_t) {
                    // A bedside sampling moment: each variable reports with
                    // its own probability; administrations are rare events.
                    for (int j = 0; j < config.n_observed(); ++j) {
                        const double prob = j < config.n_physiologic ? config.phys_sample_prob
                                                                     : config.lab_sample_prob;
                        if (rng.uniform() >= prob) continue;
                        const double latent = obs_map.row(j).dot(base + x);
                        const double v =
                            ch.offset[j] +
                            ch.scale[j] *
                                (latent + config.observation_noise_std * rng.normal());
                        enc.obs.push_back(RawObs{j, t, v, rng.uniform() < 0.5});
                    }
                    for (int d = 0; d < config.n_drug; ++d)
                        if (rng.uniform() < drug_rate)
                            enc.obs.push_back(RawObs{config.n_observed() + d, t,
                                                     rng.uniform(1.0, 10.0), false});
                    for (int v = 0; v < config.n_intervention; ++v)
                        if (rng.uniform() < intv_rate)
                            enc.obs.push_back(
                                RawObs{config.n_observed() + config.n_drug + v, t, 1.0, false});

                    // Recent state movement shortens the next interval, so
                    // deteriorating encounters are sampled more often.
                    const double change = (x - x_at_last_sample).norm() * inv_sqrt_dim;
                    const double jitter = rng.uniform(0.85, 1.15);
                    const double interval = std::clamp(
                        config.sample_max_minutes / (1.0 + config.sample_gain * change) * jitter,
                        config.sample_min_minutes, config.sample_max_minutes);
                    x_at_last_sample = x;
                    next_sample_t = t + interval;
                }

                Eigen::VectorXd shock(dim);
                for (int j = 0; j < dim; ++j) shock(j) = noise_sd(j) * rng.normal();
                const Eigen::VectorXd x_next = x + step * (drift * x) + sqrt_step * shock;

                double exponent = w_state.dot(base + x);
                for (int j = 0; j < dim; ++j)
                    exponent += w_deriv(j) * std::abs((x_next(j) - x(j)) / step);
                exponent = std::min(exponent, 30.0);
                double ramp = 1.0;
                if (ramp_minutes > 0.0) {
                    const double r = t / ramp_minutes;
                    ramp = std::min(1.0, r * r);
                }
                enc.cum_hazard[k + 1] =
                    enc.cum_hazard[k] + config.hazard_baseline * std::exp(exponent) * ramp * step;
                x = x_next;
            }
            staged.push_back(std::move(enc));
        }
    }

    // Solve the hazard scale so the expected cohort mortality matches the
    // target. Labels are then drawn by inverting each encounter's cumulative
    // hazard against a uniform that was fixed before simulation.
    double scale = 1.0;
    if (config.target_mortality > 0.0) {
        const auto expected_mortality = [&](double s) {
            double sum = 0.0;
            for (const auto& enc : staged) sum += -std::expm1(-s * enc.cum_hazard.back());
            return sum / static_cast<double>(staged.size());
        };
        double hi = 1.0;
        while (expected_mortality(hi) < config.target_mortality) {
            hi *= 2.0;
            if (hi > 1e18)
                fail_numeric("E_CALIBRATION",
                             "cannot reach target mortality " +
                                 std::to_string(config.target_mortality) +
                                 ": cumulative hazards are too small or zero");
        }
        double lo = 0.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (expected_mortality(mid) < config.target_mortality ? lo : hi) = mid;
        }
        scale = 0.5 * (lo + hi);
    }

    SynthCohort cohort;
    cohort.hazard_scale = scale;
    cohort.encounters.reserve(staged.size());
    const auto names = canonical_names(config);

    for (auto& enc : staged) {
        SynthEncounter out;
        out.patient_id = enc.patient_id;
        out.encounter_id = enc.encounter_id;

        const double total = scale * enc.cum_hazard.back();
        const double threshold = -std::log1p(-enc.death_draw);
        double death_t = -1.0;
        if (threshold <= total) {
            const double target = threshold / scale;
            const auto it =
                std::lower_bound(enc.cum_hazard.begin(), enc.cum_hazard.end(), target);
            const auto k = static_cast<std::size_t>(it - enc.cum_hazard.begin());
            if (k == 0) {
                death_t = 0.0;
            } else {
                const double lo = enc.cum_hazard[k - 1], hi = enc.cum_hazard[k];
                const double frac = hi > lo ? (target - lo) / (hi - lo) : 1.0;
                death_t = (static_cast<double>(k - 1) + frac) * step;
            }
        }
        out.survived = death_t < 0.0;

        if (!out.survived) {
            enc.obs.erase(std::remove_if(enc.obs.begin(), enc.obs.end(),
                                         [&](const RawObs& o) { return o.t > death_t; }),
                          enc.obs.end());
            if (config.perturb_amplitude > 0.0 && config.perturb_ramp_hours > 0.0) {
                // Deterioration overlay: observed channels pick up a growing
                // oscillation over the final hours before death.
                Rng orng(enc.overlay_seed);
                std::vector<double> phase(static_cast<std::size_t>(config.n_observed()));
                for (auto& ph : phase) ph = orng.uniform(0.0, 2.0 * std::numbers::pi);
                const double span = config.perturb_ramp_hours * 60.0;
                const double start = death_t - span;
                for (auto& o : enc.obs) {
                    if (o.row >= config.n_observed() || o.t <= start) continue;
                    const double w = std::min(1.0, (o.t - start) / span);
                    o.value += config.perturb_amplitude * w * ch.scale[o.row] *
                               std::sin(2.0 * std::numbers::pi * o.t / 15.0 +
                                        phase[static_cast<std::size_t>(o.row)]);
                }
            }
        }

        out.events.reserve(enc.obs.size());
        for (const auto& o : enc.obs) {
            MeasurementEvent ev;
            ev.patient_id = enc.patient_id;
            ev.encounter_id = enc.encounter_id;
            ev.t_minutes = o.t;
            if (o.row < config.n_observed() && o.alias_b) {
                ev.variable = names[static_cast<std::size_t>(o.row)] + ".b";
                ev.value = (o.value - ch.unit_offset[o.row]) / ch.unit_scale[o.row];
            } else if (o.row < config.n_observed()) {
                ev.variable = names[static_cast<std::size_t>(o.row)] + ".a";
                ev.value = o.value;
            } else {
                ev.variable = names[static_cast<std::size_t>(o.row)];
                ev.value = o.value;
            }
            out.events.push_back(std::move(ev));
        }

        // Hourly ground-truth risk over the remaining planned stay, from the
        // full latent path regardless of the realised outcome.
        for (double t = 0.0; t <= enc.duration_minutes + 1e-9; t += 60.0) {
            const double pos = t / step;
            const auto k = static_cast<std::size_t>(std::min(
                std::floor(pos), static_cast<double>(enc.cum_hazard.size() - 1)));
            double lam = enc.cum_hazard[k];
            if (k + 1 < enc.cum_hazard.size()) {
                const double frac = pos - static_cast<double>(k);
                lam += frac * (enc.cum_hazard[k + 1] - enc.cum_hazard[k]);
            }
            const double risk = -std::expm1(-scale * (enc.cum_hazard.back() - lam));
            out.true_risk.emplace_back(t, risk);
        }

        enc.cum_hazard.clear();
        enc.cum_hazard.shrink_to_fit();
        cohort.encounters.push_back(std::move(out));
    }
    return cohort;
}

double oracle_auc_bound(const std::vector<SynthEncounter>& cohort, double at_hours) {
    if (at_hours < 0.0) fail_data("E_CONFIG", "oracle hour must be >= 0");
    const double t_target = at_hours * 60.0;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& enc : cohort) {
        if (enc.events.empty() || enc.events.back().t_minutes < t_target) continue;
        // Find the surrounding ground-truth checkpoints and interpolate.
        const auto it = std::lower_bound(
            enc.true_risk.begin(), enc.true_risk.end(), t_target,
            [](const std::pair<double, double>& a, double t) { return a.first < t; });
        double risk;
        if (it == enc.true_risk.end()) {
            risk = enc.true_risk.back().second;
        } else if (it == enc.true_risk.begin() || it->first == t_target) {
            risk = it->second;
        } else {
            const auto prev = std::prev(it);
            const double frac = (t_target - prev->first) / (it->first - prev->first);
            risk = prev->second + frac * (it->second - prev->second);
        }
        scores.push_back(risk);
        labels.push_back(enc.survived ? 0 : 1);
    }
    if (scores.empty())
        fail_data("E_EMPTY_INPUT", "no encounter has data reaching the oracle hour");
    return roc_auc(scores, labels).auc;
}

}  // namespace icudyn
