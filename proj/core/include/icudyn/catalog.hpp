#pragma once

// Variable catalog: maps raw EMR names onto canonical variables with a kind
// and an affine unit conversion. The canonical list order defines the row
// order of every matrix downstream.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "icudyn/events.hpp"

namespace icudyn {

enum class VariableKind { Physiologic, Lab, Drug, Intervention };

// Drugs and interventions are recorded as presence/absence.
inline bool is_binarized_kind(VariableKind k) {
    return k == VariableKind::Drug || k == VariableKind::Intervention;
}

const char* to_string(VariableKind k);
std::optional<VariableKind> parse_variable_kind(const std::string& s);

struct CatalogEntry {
    std::string canonical;
    VariableKind kind = VariableKind::Physiologic;
    double unit_scale = 1.0;  // canonical value = raw * unit_scale + unit_offset
    double unit_offset = 0.0;
};

class VariableCatalog {
public:
    VariableCatalog() = default;

    // Catalog CSV: raw_name,canonical_name,kind,unit_scale,unit_offset
    static VariableCatalog load(const std::string& path);
    static VariableCatalog from_csv_text(const std::string& text, const std::string& source_name);

    void add_entry(const std::string& raw_name, CatalogEntry entry, std::size_t lineno = 0,
                   const std::string& source = "<memory>");

    const CatalogEntry* find(const std::string& raw_name) const;

    std::size_t row_count() const { return canonical_.size(); }
    const std::vector<std::string>& canonical_names() const { return canonical_; }

    // -1 when the canonical name is unknown.
    int row_of(const std::string& canonical_name) const;
    VariableKind kind_of_row(std::size_t row) const { return row_kinds_.at(row); }

private:
    std::unordered_map<std::string, CatalogEntry> entries_;      // raw name -> entry
    std::vector<std::string> canonical_;                         // row order = first appearance
    std::unordered_map<std::string, int> row_index_;
    std::vector<VariableKind> row_kinds_;
};

enum class UnknownPolicy { Drop, Error };

struct AggregateResult {
    EventList events;
    std::size_t dropped = 0;  // unknown raw names removed under UnknownPolicy::Drop
};

// Renames events to canonical variables and applies the unit conversion.
// Events are sorted by time within each encounter if they are not already;
// relative order of events at equal timestamps is preserved.
AggregateResult aggregate(EventList events, const VariableCatalog& catalog,
                          UnknownPolicy policy = UnknownPolicy::Drop);

}  // namespace icudyn
