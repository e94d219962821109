#pragma once

// Normalization, imputation onto the event grid and the regular snapshot
// grid, and the patient-level train/holdout split.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "icudyn/catalog.hpp"
#include "icudyn/events.hpp"

namespace icudyn {

// Per-variable z-normalization statistics, fitted on the training side only.
struct NormStats {
    struct Entry {
        std::string variable;
        double mean = 0.0;
        double std = 1.0;       // population std; 1 when unobserved or constant
        bool binarized = false; // drugs and interventions
    };
    std::vector<Entry> entries;  // catalog row order
    std::unordered_map<std::string, int> index;

    const Entry* find(const std::string& variable) const {
        auto it = index.find(variable);
        return it == index.end() ? nullptr : &entries[static_cast<std::size_t>(it->second)];
    }
};

// Mean and population standard deviation of every measured value of each
// non-binarized variable. Variables without training observations (or with a
// single repeated value) get mean 0 / std 1 so the transform degrades to
// identity / centering.
NormStats fit_norm_stats(const EventList& train_events, const VariableCatalog& catalog);

// (v - mean) / std for continuous variables; 1.0 for any recorded
// administration of a binarized variable.
EventList apply_norm(EventList events, const NormStats& stats);

// Event-grid matrix: one column per distinct measurement time in the encounter.
struct EncounterMatrix {
    std::string encounter_id;
    std::string patient_id;
    std::vector<std::string> row_vars;
    std::vector<double> times;  // strictly increasing, minutes
    Eigen::MatrixXd values;     // rows x times
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> observed;
    bool survived = true;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

// Places events of one encounter onto the event grid and imputes:
//   - drug/intervention cells without a recorded administration are 0,
//   - physiologic/lab values propagate forward until the next reading,
//   - physiologic/lab cells before the first reading are 0,
//   - never-observed physiologic/lab rows are 0 throughout.
// Duplicate measurements at the same (variable, time): last in input order wins.
EncounterMatrix build_event_grid(const EventList& encounter_events, const VariableCatalog& catalog,
                                 bool survived);

// Regular 5-minute-grid resampling (144 columns over 12 h by default).
struct PatientSnapshot {
    std::vector<std::string> row_vars;
    double grid_step_minutes = 5.0;
    int n_cols = 144;
    Eigen::MatrixXd values;  // rows x n_cols, columns at t = step, 2*step, ..., window
};

// Each cell holds the last *observed* value of its row at or before the grid
// time; cells before a row's first observation (or on never-observed rows)
// are 0.
PatientSnapshot build_snapshot(const EncounterMatrix& matrix, double window_minutes = 720.0,
                               double step_minutes = 5.0);

struct SplitAssignment {
    enum class Side { Train, Holdout };
    std::unordered_map<std::string, Side> sides;  // patient_id -> side
    std::uint64_t seed = 0;
    double train_fraction = 0.75;

    bool is_train(const std::string& patient_id) const;
    std::size_t train_count() const;
};

// Deterministic seeded shuffle of the sorted patient ids; the first
// round(fraction * N) go to the training side. Every encounter of a patient
// follows its patient.
SplitAssignment split_patients(std::vector<std::string> patient_ids, double train_fraction,
                               std::uint64_t seed);

}  // namespace icudyn
