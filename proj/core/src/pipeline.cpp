#include "icudyn/pipeline.hpp"

#include <algorithm>
#include <map>

#include "icudyn/errors.hpp"
#include "icudyn/parallel.hpp"

namespace icudyn {

Dataset assemble_dataset(const EventList& raw_events,
                         const std::unordered_map<std::string, bool>& labels,
                         const VariableCatalog& catalog, UnknownPolicy policy) {
    if (raw_events.empty()) fail_data("E_EMPTY_INPUT", "no events");

    AggregateResult aggregated = aggregate(raw_events, catalog, policy);

    // Group by encounter; a std::map keeps the dataset ordered by id no
    // matter how the input file was arranged.
    std::map<std::string, EncounterRecord> grouped;
    for (auto& ev : aggregated.events) {
        auto [it, inserted] = grouped.try_emplace(ev.encounter_id);
        if (inserted) {
            it->second.encounter_id = ev.encounter_id;
            it->second.patient_id = ev.patient_id;
        } else if (it->second.patient_id != ev.patient_id) {
            fail_data("E_MIXED_ENCOUNTERS", "encounter '" + ev.encounter_id +
                                                "' appears under patients '" +
                                                it->second.patient_id + "' and '" + ev.patient_id +
                                                "'");
        }
        it->second.events.push_back(std::move(ev));
    }

    Dataset dataset;
    dataset.dropped_unknown = aggregated.dropped;
    dataset.encounters.reserve(grouped.size());
    for (auto& [id, record] : grouped) {
        const auto label = labels.find(id);
        if (label == labels.end()) {
            ++dataset.unlabeled_encounters;
            continue;
        }
        record.survived = label->second;
        dataset.encounters.push_back(std::move(record));
    }
    if (dataset.encounters.empty())
        fail_data("E_EMPTY_INPUT", "no encounter has both events and a disposition label");
    return dataset;
}

std::vector<std::string> distinct_patients(const Dataset& dataset) {
    std::vector<std::string> ids;
    ids.reserve(dataset.encounters.size());
    for (const auto& e : dataset.encounters) ids.push_back(e.patient_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

PreparedData prepare_matrices(const Dataset& dataset, const VariableCatalog& catalog,
                              const SplitAssignment& split, int threads) {
    EventList train_events;
    std::vector<std::size_t> train_idx, holdout_idx;
    for (std::size_t i = 0; i < dataset.encounters.size(); ++i) {
        const auto& enc = dataset.encounters[i];
        if (split.is_train(enc.patient_id)) {
            train_idx.push_back(i);
            train_events.insert(train_events.end(), enc.events.begin(), enc.events.end());
        } else {
            holdout_idx.push_back(i);
        }
    }
    if (train_idx.empty()) fail_data("E_EMPTY_INPUT", "the split leaves no training encounters");

    PreparedData prepared;
    prepared.stats = fit_norm_stats(train_events, catalog);

    auto build_side = [&](const std::vector<std::size_t>& idx,
                          std::vector<EncounterMatrix>& out) {
        out.resize(idx.size());
        parallel_for(idx.size(), threads, [&](std::size_t k) {
            const auto& enc = dataset.encounters[idx[k]];
            EventList normalized = apply_norm(enc.events, prepared.stats);
            out[k] = build_event_grid(normalized, catalog, enc.survived);
        });
    };
    build_side(train_idx, prepared.train);
    build_side(holdout_idx, prepared.holdout);
    return prepared;
}

}  // namespace icudyn
