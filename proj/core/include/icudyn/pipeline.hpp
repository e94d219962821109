#pragma once

// Shared assembly steps between the CLI commands and the tests: raw events +
// labels + catalog + split -> normalized per-encounter matrices.

#include <string>
#include <unordered_map>
#include <vector>

#include "icudyn/catalog.hpp"
#include "icudyn/events.hpp"
#include "icudyn/preprocess.hpp"

namespace icudyn {

struct EncounterRecord {
    std::string encounter_id;
    std::string patient_id;
    EventList events;  // canonical, time-sorted
    bool survived = true;
};

struct Dataset {
    std::vector<EncounterRecord> encounters;  // sorted by encounter_id
    std::size_t dropped_unknown = 0;          // events with raw names missing from the catalog
    std::size_t unlabeled_encounters = 0;     // excluded for missing disposition
};

// Aggregates raw events through the catalog, attaches labels, and drops
// encounters without disposition. Encounter ids are unique per patient.
Dataset assemble_dataset(const EventList& raw_events,
                         const std::unordered_map<std::string, bool>& labels,
                         const VariableCatalog& catalog,
                         UnknownPolicy policy = UnknownPolicy::Drop);

std::vector<std::string> distinct_patients(const Dataset& dataset);

// Fits normalization on the training side and builds event grids for the
// requested side (or both when side == nullptr).
struct PreparedData {
    NormStats stats;
    std::vector<EncounterMatrix> train;
    std::vector<EncounterMatrix> holdout;
};

PreparedData prepare_matrices(const Dataset& dataset, const VariableCatalog& catalog,
                              const SplitAssignment& split, int threads = 1);

}  // namespace icudyn
