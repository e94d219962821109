#include "icudyn/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "icudyn/errors.hpp"
#include "icudyn/rng.hpp"

namespace icudyn {

NormStats fit_norm_stats(const EventList& train_events, const VariableCatalog& catalog) {
    const std::size_t n_rows = catalog.row_count();
    // Welford accumulators, keyed by catalog row.
    std::vector<std::size_t> count(n_rows, 0);
    std::vector<double> mean(n_rows, 0.0), m2(n_rows, 0.0);

    for (const auto& ev : train_events) {
        const int row = catalog.row_of(ev.variable);
        if (row < 0)
            fail_data("E_UNKNOWN_VARIABLE", "event variable '" + ev.variable + "' not in catalog");
        const auto r = static_cast<std::size_t>(row);
        if (is_binarized_kind(catalog.kind_of_row(r))) continue;
        ++count[r];
        const double delta = ev.value - mean[r];
        mean[r] += delta / static_cast<double>(count[r]);
        m2[r] += delta * (ev.value - mean[r]);
    }

    NormStats stats;
    stats.entries.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        NormStats::Entry e;
        e.variable = catalog.canonical_names()[r];
        e.binarized = is_binarized_kind(catalog.kind_of_row(r));
        if (!e.binarized && count[r] > 0) {
            e.mean = mean[r];
            const double var = m2[r] / static_cast<double>(count[r]);  // population variance
            e.std = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        stats.index.emplace(e.variable, static_cast<int>(stats.entries.size()));
        stats.entries.push_back(std::move(e));
    }
    return stats;
}

EventList apply_norm(EventList events, const NormStats& stats) {
    for (auto& ev : events) {
        const NormStats::Entry* e = stats.find(ev.variable);
        if (!e)
            fail_data("E_UNKNOWN_VARIABLE", "variable '" + ev.variable + "' has no normalization stats");
        ev.value = e->binarized ? 1.0 : (ev.value - e->mean) / e->std;
    }
    return events;
}

EncounterMatrix build_event_grid(const EventList& encounter_events, const VariableCatalog& catalog,
                                 bool survived) {
    if (encounter_events.empty())
        fail_data("E_EMPTY_ENCOUNTER", "an encounter with no measurements has no columns");

    EncounterMatrix m;
    m.encounter_id = encounter_events.front().encounter_id;
    m.patient_id = encounter_events.front().patient_id;
    m.survived = survived;
    m.row_vars = catalog.canonical_names();

    // Column times = distinct measurement times.
    m.times.reserve(encounter_events.size());
    for (const auto& ev : encounter_events) {
        if (ev.encounter_id != m.encounter_id)
            fail_data("E_MIXED_ENCOUNTERS", "events from multiple encounters passed to build_event_grid");
        m.times.push_back(ev.t_minutes);
    }
    std::sort(m.times.begin(), m.times.end());
    m.times.erase(std::unique(m.times.begin(), m.times.end()), m.times.end());

    const auto n_rows = static_cast<Eigen::Index>(catalog.row_count());
    const auto n_cols = static_cast<Eigen::Index>(m.times.size());
    m.values = Eigen::MatrixXd::Zero(n_rows, n_cols);
    m.observed = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_rows, n_cols);

    // Group events by row, preserving input order so that the last duplicate
    // at an identical (variable, time) wins.
    std::vector<std::vector<std::pair<double, double>>> row_events(static_cast<std::size_t>(n_rows));
    for (const auto& ev : encounter_events) {
        const int row = catalog.row_of(ev.variable);
        if (row < 0)
            fail_data("E_UNKNOWN_VARIABLE", "event variable '" + ev.variable + "' not in catalog");
        row_events[static_cast<std::size_t>(row)].emplace_back(ev.t_minutes, ev.value);
    }

    for (Eigen::Index r = 0; r < n_rows; ++r) {
        auto& evs = row_events[static_cast<std::size_t>(r)];
        std::stable_sort(evs.begin(), evs.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const bool fill_forward = !is_binarized_kind(catalog.kind_of_row(static_cast<std::size_t>(r)));

        std::size_t k = 0;
        bool seen = false;
        double held = 0.0;
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            const double t = m.times[static_cast<std::size_t>(j)];
            bool observed_here = false;
            while (k < evs.size() && evs[k].first <= t) {
                held = evs[k].second;  // last event at or before t wins
                seen = true;
                observed_here = observed_here || evs[k].first == t;
                ++k;
            }
            if (observed_here) {
                m.values(r, j) = held;
                m.observed(r, j) = 1;
            } else if (fill_forward && seen) {
                m.values(r, j) = held;  // propagate forward until the next reading
            }
            // else: zero — missing drug/intervention, pre-first-observation,
            // or never-observed row.
        }
    }
    return m;
}

PatientSnapshot build_snapshot(const EncounterMatrix& matrix, double window_minutes,
                               double step_minutes) {
    if (step_minutes <= 0.0 || window_minutes <= 0.0)
        fail_data("E_WINDOW_STEP", "snapshot window and step must be positive");
    const double ratio = window_minutes / step_minutes;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9)
        fail_data("E_WINDOW_STEP", "snapshot window must be divisible by the grid step");
    if (matrix.times.empty() || matrix.times.front() > window_minutes)
        fail_data("E_NO_COLUMNS", "encounter " + matrix.encounter_id +
                                      " has no measurement inside the snapshot window");

    PatientSnapshot snap;
    snap.row_vars = matrix.row_vars;
    snap.grid_step_minutes = step_minutes;
    snap.n_cols = static_cast<int>(rounded);
    snap.values = Eigen::MatrixXd::Zero(matrix.rows(), snap.n_cols);

    // Forward fill from actual observations only; imputed grid cells do not
    // propagate (a drug administration marks its own time point, not every
    // later one of the event grid).
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        Eigen::Index k = 0;
        bool seen = false;
        double held = 0.0;
        for (int j = 0; j < snap.n_cols; ++j) {
            const double t = step_minutes * static_cast<double>(j + 1);
            while (k < matrix.cols() && matrix.times[static_cast<std::size_t>(k)] <= t) {
                if (matrix.observed(r, k)) {
                    held = matrix.values(r, k);
                    seen = true;
                }
                ++k;
            }
            if (seen) snap.values(r, j) = held;
        }
    }
    return snap;
}

bool SplitAssignment::is_train(const std::string& patient_id) const {
    auto it = sides.find(patient_id);
    if (it == sides.end())
        fail_data("E_UNKNOWN_PATIENT", "patient '" + patient_id + "' missing from split assignment");
    return it->second == Side::Train;
}

std::size_t SplitAssignment::train_count() const {
    std::size_t n = 0;
    for (const auto& [id, side] : sides)
        if (side == Side::Train) ++n;
    return n;
}

SplitAssignment split_patients(std::vector<std::string> patient_ids, double train_fraction,
                               std::uint64_t seed) {
    if (patient_ids.empty()) fail_data("E_EMPTY_INPUT", "no patients to split");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        fail_data("E_BAD_FRACTION", "train fraction must lie in (0, 1)");

    std::sort(patient_ids.begin(), patient_ids.end());
    if (std::adjacent_find(patient_ids.begin(), patient_ids.end()) != patient_ids.end())
        fail_data("E_DUPLICATE_PATIENT", "patient ids must be distinct");

    Rng rng(seed);
    rng.shuffle(patient_ids);

    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(patient_ids.size())));

    SplitAssignment split;
    split.seed = seed;
    split.train_fraction = train_fraction;
    for (std::size_t i = 0; i < patient_ids.size(); ++i)
        split.sides.emplace(patient_ids[i],
                            i < n_train ? SplitAssignment::Side::Train : SplitAssignment::Side::Holdout);
    return split;
}

}  // namespace icudyn
