#include "icudyn/catalog.hpp"

#include <algorithm>
#include <cmath>

#include "icudyn/csv.hpp"
#include "icudyn/errors.hpp"

namespace icudyn {

const char* to_string(VariableKind k) {
    switch (k) {
        case VariableKind::Physiologic: return "physiologic";
        case VariableKind::Lab: return "lab";
        case VariableKind::Drug: return "drug";
        case VariableKind::Intervention: return "intervention";
    }
    return "?";
}

std::optional<VariableKind> parse_variable_kind(const std::string& s) {
    if (s == "physiologic") return VariableKind::Physiologic;
    if (s == "lab") return VariableKind::Lab;
    if (s == "drug") return VariableKind::Drug;
    if (s == "intervention") return VariableKind::Intervention;
    return std::nullopt;
}

void VariableCatalog::add_entry(const std::string& raw_name, CatalogEntry entry, std::size_t lineno,
                                const std::string& source) {
    const std::string where = source + ":" + std::to_string(lineno);
    if (raw_name.empty()) fail_data("E_PARSE", where + ": empty raw name");
    if (entry.canonical.empty()) fail_data("E_PARSE", where + ": empty canonical name");
    if (entry.unit_scale == 0.0) fail_data("E_PARSE", where + ": unit_scale must be nonzero");
    if (entries_.count(raw_name))
        fail_data("E_DUPLICATE_RAW", where + ": duplicate raw name '" + raw_name + "'");

    auto it = row_index_.find(entry.canonical);
    if (it == row_index_.end()) {
        row_index_.emplace(entry.canonical, static_cast<int>(canonical_.size()));
        canonical_.push_back(entry.canonical);
        row_kinds_.push_back(entry.kind);
    } else if (row_kinds_[static_cast<std::size_t>(it->second)] != entry.kind) {
        fail_data("E_CONFLICTING_KIND", where + ": canonical '" + entry.canonical +
                                            "' registered with conflicting kinds");
    }
    entries_.emplace(raw_name, std::move(entry));
}

VariableCatalog VariableCatalog::from_csv_text(const std::string& text, const std::string& source_name) {
    VariableCatalog catalog;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (pos > text.size()) break;
            continue;
        }
        auto fields = csv::split_line(line);
        if (!saw_header) {
            csv::expect_header(fields, {"raw_name", "canonical_name", "kind", "unit_scale", "unit_offset"},
                               source_name);
            saw_header = true;
            continue;
        }
        if (fields.size() != 5)
            fail_data("E_PARSE", source_name + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                                     std::to_string(fields.size()));
        auto kind = parse_variable_kind(fields[2]);
        if (!kind)
            fail_data("E_PARSE", source_name + ":" + std::to_string(lineno) + ": unknown kind '" +
                                     fields[2] + "'");
        CatalogEntry entry;
        entry.canonical = fields[1];
        entry.kind = *kind;
        entry.unit_scale = fields[3].empty() ? 1.0 : csv::parse_double(fields[3], source_name, lineno);
        entry.unit_offset = fields[4].empty() ? 0.0 : csv::parse_double(fields[4], source_name, lineno);
        catalog.add_entry(fields[0], std::move(entry), lineno, source_name);
    }
    return catalog;
}

VariableCatalog VariableCatalog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("E_IO", "cannot open catalog " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_csv_text(text, path);
}

const CatalogEntry* VariableCatalog::find(const std::string& raw_name) const {
    auto it = entries_.find(raw_name);
    return it == entries_.end() ? nullptr : &it->second;
}

int VariableCatalog::row_of(const std::string& canonical_name) const {
    auto it = row_index_.find(canonical_name);
    return it == row_index_.end() ? -1 : it->second;
}

AggregateResult aggregate(EventList events, const VariableCatalog& catalog, UnknownPolicy policy) {
    AggregateResult result;
    result.events.reserve(events.size());
    for (auto& ev : events) {
        const CatalogEntry* entry = catalog.find(ev.variable);
        if (!entry) {
            if (policy == UnknownPolicy::Error)
                fail_data("E_UNKNOWN_VARIABLE", "unknown raw variable '" + ev.variable +
                                                    "' in encounter " + ev.encounter_id);
            ++result.dropped;
            continue;
        }
        MeasurementEvent out = std::move(ev);
        out.variable = entry->canonical;
        out.value = out.value * entry->unit_scale + entry->unit_offset;
        result.events.push_back(std::move(out));
    }

    // Sort by time within each encounter only if needed; stable so ties keep
    // their input order.
    bool sorted = true;
    {
        std::unordered_map<std::string, double> last_t;
        for (const auto& ev : result.events) {
            auto [it, inserted] = last_t.emplace(ev.encounter_id, ev.t_minutes);
            if (!inserted) {
                if (ev.t_minutes < it->second) {
                    sorted = false;
                    break;
                }
                it->second = ev.t_minutes;
            }
        }
    }
    if (!sorted) {
        std::stable_sort(result.events.begin(), result.events.end(),
                         [](const MeasurementEvent& a, const MeasurementEvent& b) {
                             if (a.encounter_id != b.encounter_id) return a.encounter_id < b.encounter_id;
                             return a.t_minutes < b.t_minutes;
                         });
    }
    return result;
}

}  // namespace icudyn
