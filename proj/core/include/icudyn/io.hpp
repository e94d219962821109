#pragma once

// CSV file formats used between pipeline stages. All writers emit '\n' line
// endings and shortest-round-trip doubles so identical data produces
// identical bytes.

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "icudyn/eval.hpp"
#include "icudyn/events.hpp"
#include "icudyn/preprocess.hpp"

namespace icudyn {

// events.csv: patient_id,encounter_id,variable,t_minutes,value
EventList read_events_csv(const std::string& path);
void write_events_csv(const std::string& path, const EventList& events);

// labels.csv: encounter_id,survived (0/1)
std::unordered_map<std::string, bool> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path, const std::map<std::string, bool>& labels);

// norm_stats.csv: variable,mean,std,binarized
NormStats read_norm_stats_csv(const std::string& path);
void write_norm_stats_csv(const std::string& path, const NormStats& stats);

// split.csv: patient_id,split (train/holdout)
SplitAssignment read_split_csv(const std::string& path);
void write_split_csv(const std::string& path, const SplitAssignment& split);

// Matrix export: header "variable,<t0>,<t1>,..."; one row per variable.
void write_matrix_csv(const std::string& path, const EncounterMatrix& matrix);
void write_snapshot_csv(const std::string& path, const PatientSnapshot& snapshot);

// ground truth sidecar: encounter_id,t_minutes,true_risk
void write_ground_truth_csv(const std::string& path,
                            const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& rows);

// loss_history.csv: epoch,loss (epoch 0 = loss before any update)
void write_loss_history_csv(const std::string& path, double initial_loss,
                            const std::vector<double>& epoch_loss);

struct MetricsRow {
    std::string model;
    double observe_hours = 0.0;
    double delta_t_hours = 0.0;
    double auc = 0.0;
    int n = 0;
    double p_vs_baseline = -1.0;  // < 0 = not applicable (reference model)
};
// metrics.csv: model,observe_hours,delta_t_hours,auc,n,p_vs_baseline
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// roc_points.csv: model,fpr,tpr
void write_roc_points_csv(const std::string& path,
                          const std::vector<std::pair<std::string, RocResult>>& curves);

// sweep.csv: model,observe_hours,auc,n_encounters
void write_sweep_csv(const std::string& path, const std::string& model, const SweepResult& sweep);

}  // namespace icudyn
