#pragma once

// Synthetic cohort generator: a linear latent dynamical system with
// per-encounter volatility, a hazard that loads on the state and its
// derivative, adaptive sampling, and a ground-truth risk oracle.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "icudyn/catalog.hpp"
#include "icudyn/events.hpp"

namespace icudyn {

struct SynthConfig {
    int n_patients = 400;
    int min_encounters_per_patient = 1;
    int max_encounters_per_patient = 3;

    int n_physiologic = 8;
    int n_lab = 6;
    int n_drug = 4;
    int n_intervention = 3;

    int latent_dim = 6;
    // Latent drift matrix (per-minute rates); empty = stable default built
    // from the seed. Eigenvalue real parts must be <= 0.
    Eigen::MatrixXd drift;
    // Readout map, (n_physiologic + n_lab) x latent_dim; empty = built from seed.
    Eigen::MatrixXd observation_map;

    // Hazard per minute: baseline * exp(w_state . x + w_deriv . |dx/dt|) * time_ramp.
    Eigen::VectorXd hazard_state_weights;  // empty = zeros
    Eigen::VectorXd hazard_deriv_weights;  // empty = zeros
    double hazard_baseline = 1e-5;
    // When > 0, a multiplicative hazard scale is solved so the expected
    // mortality over the generated cohort equals this rate.
    double target_mortality = 0.05;
    // Suppresses early deaths: hazard is multiplied by min(1, (t/ramp)^2). 0 = off.
    double hazard_time_ramp_hours = 12.0;

    double observation_noise_std = 0.3;
    double sample_min_minutes = 10.0;
    double sample_max_minutes = 60.0;
    double sample_gain = 4.0;  // interval shrink per unit recent state change
    double duration_min_hours = 18.0;
    double duration_max_hours = 96.0;
    double euler_step_minutes = 1.0;  // must be <= 1

    double process_noise_base = 0.15;
    double severity_sd_patient = 0.5;    // log-volatility spread across patients
    double severity_sd_encounter = 0.25; // and across encounters of one patient
    double initial_state_sd = 0.5;
    double patient_base_sd = 0.7;

    // Deterioration overlay on non-survivors' observed channels, ramping in
    // over the last hours before death. 0 disables.
    double perturb_amplitude = 0.6;
    double perturb_ramp_hours = 2.0;

    double phys_sample_prob = 0.9;   // per sampling time, per variable
    double lab_sample_prob = 0.25;
    double drug_base_rate = 0.06;    // administration probability per sampling time
    double intervention_base_rate = 0.03;
    double severity_rate_gain = 0.5; // admin rate multiplier exp(gain * severity)

    std::uint64_t seed = 0;

    int n_observed() const { return n_physiologic + n_lab; }
    int n_variables() const { return n_physiologic + n_lab + n_drug + n_intervention; }
};

struct SynthEncounter {
    std::string patient_id;
    std::string encounter_id;
    EventList events;  // raw names and raw units, ready for the catalog
    bool survived = true;
    // Ground truth for oracle checks only, never fed to models:
    // (t_minutes, probability of death before the end of the encounter).
    std::vector<std::pair<double, double>> true_risk;
};

struct SynthCohort {
    std::vector<SynthEncounter> encounters;
    double hazard_scale = 1.0;  // solved multiplicative scale (1 when not calibrated)
};

SynthCohort generate_cohort(const SynthConfig& config);

// The catalog matching the generator's raw names: physiologic/lab variables
// have two raw aliases (.a in canonical units, .b affinely transformed);
// drugs and interventions map to themselves.
VariableCatalog make_synth_catalog(const SynthConfig& config);
std::string synth_catalog_csv(const SynthConfig& config);

// A stable random drift matrix (all eigenvalue real parts < 0).
Eigen::MatrixXd make_stable_drift(int dim, std::uint64_t seed);

// AUC of the true generating risk at the given hour against the disposition
// labels, over encounters with data reaching that hour. An upper reference
// no model trained on the observations should exceed beyond noise.
double oracle_auc_bound(const std::vector<SynthEncounter>& cohort, double at_hours = 12.0);

}  // namespace icudyn
