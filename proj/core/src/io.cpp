#include "icudyn/io.hpp"

#include <fstream>

#include "icudyn/csv.hpp"
#include "icudyn/errors.hpp"

namespace icudyn {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail_data("E_IO", "cannot write " + path);
    return out;
}

void check_written(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) fail_data("E_IO", "write failed for " + path);
}

void expect_fields(const std::vector<std::string>& fields, std::size_t n,
                   const std::string& path, std::size_t lineno) {
    if (fields.size() != n)
        fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": expected " +
                                 std::to_string(n) + " fields, found " +
                                 std::to_string(fields.size()));
}

}  // namespace

EventList read_events_csv(const std::string& path) {
    EventList events;
    csv::for_each_row(path, [&](std::size_t lineno, const std::vector<std::string>& fields) {
        if (lineno == 1) {
            csv::expect_header(fields, {"patient_id", "encounter_id", "variable", "t_minutes",
                                        "value"}, path);
            return;
        }
        expect_fields(fields, 5, path, lineno);
        MeasurementEvent ev;
        ev.patient_id = fields[0];
        ev.encounter_id = fields[1];
        ev.variable = fields[2];
        ev.t_minutes = csv::parse_double(fields[3], path, lineno);
        ev.value = csv::parse_double(fields[4], path, lineno);
        if (ev.t_minutes < 0.0)
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": negative time");
        events.push_back(std::move(ev));
    });
    return events;
}

void write_events_csv(const std::string& path, const EventList& events) {
    auto out = open_out(path);
    out << "patient_id,encounter_id,variable,t_minutes,value\n";
    for (const auto& ev : events)
        out << csv::quote_if_needed(ev.patient_id) << ',' << csv::quote_if_needed(ev.encounter_id)
            << ',' << csv::quote_if_needed(ev.variable) << ',' << csv::format_double(ev.t_minutes)
            << ',' << csv::format_double(ev.value) << '\n';
    check_written(out, path);
}

std::unordered_map<std::string, bool> read_labels_csv(const std::string& path) {
    std::unordered_map<std::string, bool> labels;
    csv::for_each_row(path, [&](std::size_t lineno, const std::vector<std::string>& fields) {
        if (lineno == 1) {
            csv::expect_header(fields, {"encounter_id", "survived"}, path);
            return;
        }
        expect_fields(fields, 2, path, lineno);
        const long v = csv::parse_long(fields[1], path, lineno);
        if (v != 0 && v != 1)
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": survived must be 0 or 1");
        if (!labels.emplace(fields[0], v == 1).second)
            fail_data("E_DUPLICATE_LABEL",
                      path + ":" + std::to_string(lineno) + ": encounter '" + fields[0] +
                          "' labeled twice");
    });
    if (labels.empty()) fail_data("E_EMPTY_INPUT", path + ": no labels");
    return labels;
}

void write_labels_csv(const std::string& path, const std::map<std::string, bool>& labels) {
    auto out = open_out(path);
    out << "encounter_id,survived\n";
    for (const auto& [id, survived] : labels)
        out << csv::quote_if_needed(id) << ',' << (survived ? '1' : '0') << '\n';
    check_written(out, path);
}

NormStats read_norm_stats_csv(const std::string& path) {
    NormStats stats;
    csv::for_each_row(path, [&](std::size_t lineno, const std::vector<std::string>& fields) {
        if (lineno == 1) {
            csv::expect_header(fields, {"variable", "mean", "std", "binarized"}, path);
            return;
        }
        expect_fields(fields, 4, path, lineno);
        NormStats::Entry e;
        e.variable = fields[0];
        e.mean = csv::parse_double(fields[1], path, lineno);
        e.std = csv::parse_double(fields[2], path, lineno);
        const long b = csv::parse_long(fields[3], path, lineno);
        if (b != 0 && b != 1)
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": binarized must be 0 or 1");
        e.binarized = b == 1;
        if (!e.binarized && e.std <= 0.0)
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": std must be positive");
        if (stats.index.count(e.variable))
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": variable '" + e.variable +
                                     "' listed twice");
        stats.index.emplace(e.variable, stats.entries.size());
        stats.entries.push_back(std::move(e));
    });
    if (stats.entries.empty()) fail_data("E_EMPTY_INPUT", path + ": no normalization entries");
    return stats;
}

void write_norm_stats_csv(const std::string& path, const NormStats& stats) {
    auto out = open_out(path);
    out << "variable,mean,std,binarized\n";
    for (const auto& e : stats.entries)
        out << csv::quote_if_needed(e.variable) << ',' << csv::format_double(e.mean) << ','
            << csv::format_double(e.std) << ',' << (e.binarized ? '1' : '0') << '\n';
    check_written(out, path);
}

SplitAssignment read_split_csv(const std::string& path) {
    SplitAssignment split;
    csv::for_each_row(path, [&](std::size_t lineno, const std::vector<std::string>& fields) {
        if (lineno == 1) {
            csv::expect_header(fields, {"patient_id", "split"}, path);
            return;
        }
        expect_fields(fields, 2, path, lineno);
        SplitAssignment::Side side;
        if (fields[1] == "train")
            side = SplitAssignment::Side::Train;
        else if (fields[1] == "holdout")
            side = SplitAssignment::Side::Holdout;
        else
            fail_data("E_PARSE", path + ":" + std::to_string(lineno) +
                                     ": split must be 'train' or 'holdout'");
        if (!split.sides.emplace(fields[0], side).second)
            fail_data("E_DUPLICATE_PATIENT", path + ":" + std::to_string(lineno) + ": patient '" +
                                                 fields[0] + "' assigned twice");
    });
    if (split.sides.empty()) fail_data("E_EMPTY_INPUT", path + ": empty split");
    return split;
}

void write_split_csv(const std::string& path, const SplitAssignment& split) {
    auto out = open_out(path);
    out << "patient_id,split\n";
    std::map<std::string, SplitAssignment::Side> ordered(split.sides.begin(), split.sides.end());
    for (const auto& [id, side] : ordered)
        out << csv::quote_if_needed(id) << ','
            << (side == SplitAssignment::Side::Train ? "train" : "holdout") << '\n';
    check_written(out, path);
}

void write_matrix_csv(const std::string& path, const EncounterMatrix& matrix) {
    auto out = open_out(path);
    out << "variable";
    for (double t : matrix.times) out << ',' << csv::format_double(t);
    out << '\n';
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        out << csv::quote_if_needed(matrix.row_vars[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < matrix.cols(); ++c)
            out << ',' << csv::format_double(matrix.values(r, c));
        out << '\n';
    }
    check_written(out, path);
}

void write_snapshot_csv(const std::string& path, const PatientSnapshot& snapshot) {
    auto out = open_out(path);
    out << "variable";
    for (int j = 0; j < snapshot.n_cols; ++j)
        out << ',' << csv::format_double(snapshot.grid_step_minutes * (j + 1));
    out << '\n';
    for (Eigen::Index r = 0; r < snapshot.values.rows(); ++r) {
        out << csv::quote_if_needed(snapshot.row_vars[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < snapshot.values.cols(); ++c)
            out << ',' << csv::format_double(snapshot.values(r, c));
        out << '\n';
    }
    check_written(out, path);
}

void write_ground_truth_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& rows) {
    auto out = open_out(path);
    out << "encounter_id,t_minutes,true_risk\n";
    for (const auto& [id, curve] : rows)
        for (const auto& [t, risk] : curve)
            out << csv::quote_if_needed(id) << ',' << csv::format_double(t) << ','
                << csv::format_double(risk) << '\n';
    check_written(out, path);
}

void write_loss_history_csv(const std::string& path, double initial_loss,
                            const std::vector<double>& epoch_loss) {
    auto out = open_out(path);
    out << "epoch,loss\n";
    out << "0," << csv::format_double(initial_loss) << '\n';
    for (std::size_t i = 0; i < epoch_loss.size(); ++i)
        out << (i + 1) << ',' << csv::format_double(epoch_loss[i]) << '\n';
    check_written(out, path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    auto out = open_out(path);
    out << "model,observe_hours,delta_t_hours,auc,n,p_vs_baseline\n";
    for (const auto& r : rows) {
        out << csv::quote_if_needed(r.model) << ',' << csv::format_double(r.observe_hours) << ','
            << csv::format_double(r.delta_t_hours) << ',' << csv::format_double(r.auc) << ','
            << r.n << ',';
        if (r.p_vs_baseline >= 0.0) out << csv::format_double(r.p_vs_baseline);
        out << '\n';
    }
    check_written(out, path);
}

void write_roc_points_csv(const std::string& path,
                          const std::vector<std::pair<std::string, RocResult>>& curves) {
    auto out = open_out(path);
    out << "model,fpr,tpr\n";
    for (const auto& [model, roc] : curves)
        for (const auto& [fpr, tpr] : roc.points)
            out << csv::quote_if_needed(model) << ',' << csv::format_double(fpr) << ','
                << csv::format_double(tpr) << '\n';
    check_written(out, path);
}

void write_sweep_csv(const std::string& path, const std::string& model, const SweepResult& sweep) {
    auto out = open_out(path);
    out << "model,observe_hours,auc,n_encounters\n";
    for (const auto& row : sweep.rows)
        out << csv::quote_if_needed(model) << ',' << csv::format_double(row.observe_hours) << ','
            << csv::format_double(row.auc) << ',' << row.n_encounters << '\n';
    check_written(out, path);
}

}  // namespace icudyn
