#pragma once

// Discrimination metrics: ROC/AUC, paired-bootstrap AUC comparison, and the
// observation-time sweep.

#include <cstdint>
#include <utility>
#include <vector>

#include "icudyn/model.hpp"

namespace icudyn {

struct RocResult {
    // (fpr, tpr) points, nondecreasing in both coordinates, from (0,0) to (1,1).
    std::vector<std::pair<double, double>> points;
    double auc = 0.0;  // trapezoidal integral of the curve = Mann-Whitney with half-credit ties
};

// Threshold sweep over distinct scores. Requires both classes present.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Two-sided paired-bootstrap p-value for AUC(scores_a) - AUC(scores_b) = 0,
// resampling encounters with replacement. Deterministic per seed.
double auc_pvalue(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                  const std::vector<int>& labels, int n_boot = 2000, std::uint64_t seed = 0,
                  int threads = 1);

struct SweepRow {
    double observe_hours = 0.0;
    double auc = 0.0;
    int n_encounters = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::size_t excluded = 0;  // encounters with less data than the longest window
};

// One AUC per requested observation length, each computed from predict_at
// over the encounters that have at least max(hours) of data.
SweepResult observation_sweep(const ModelParams& params,
                              const std::vector<EncounterMatrix>& encounters,
                              const std::vector<double>& hours, double delta_t_hours,
                              int threads = 1);

}  // namespace icudyn
