#pragma once

#include <string>
#include <vector>

namespace icudyn {

// One raw observation: a variable measured at some minute of an encounter.
struct MeasurementEvent {
    std::string patient_id;
    std::string encounter_id;
    std::string variable;   // raw name before aggregation, canonical after
    double t_minutes = 0.0; // minutes since encounter start, >= 0
    double value = 0.0;

    bool operator==(const MeasurementEvent&) const = default;
};

using EventList = std::vector<MeasurementEvent>;

}  // namespace icudyn
