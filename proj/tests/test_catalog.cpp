#include <string>
#include <vector>

#include "doctest.h"
#include "icudyn/catalog.hpp"
#include "icudyn/csv.hpp"
#include "icudyn/errors.hpp"
#include "support.hpp"

using icudyn::CatalogEntry;
using icudyn::Error;
using icudyn::EventList;
using icudyn::MeasurementEvent;
using icudyn::UnknownPolicy;
using icudyn::VariableCatalog;
using icudyn::VariableKind;

namespace {

const char* kHeader = "raw_name,canonical_name,kind,unit_scale,unit_offset\n";

MeasurementEvent ev(const char* variable, double t, double value, const char* enc = "e1") {
    return {"p1", enc, variable, t, value};
}

}  // namespace

TEST_SUITE("catalog") {

TEST_CASE("two raw aliases collapse onto one canonical row") {
    const std::string text = std::string(kHeader) +
                             "SBP-invasive,systolic_bp,physiologic,,\n"
                             "SBP-cuff,systolic_bp,physiologic,,\n";
    const auto catalog = VariableCatalog::from_csv_text(text, "test.csv");
    CHECK(catalog.row_count() == 1);
    CHECK(catalog.canonical_names() == std::vector<std::string>{"systolic_bp"});
    CHECK(catalog.find("SBP-invasive") != nullptr);
    CHECK(catalog.find("SBP-cuff") != nullptr);
    CHECK(catalog.row_of("systolic_bp") == 0);
}

TEST_CASE("empty file gives an empty catalog") {
    CHECK(VariableCatalog::from_csv_text("", "empty.csv").row_count() == 0);
    CHECK(VariableCatalog::from_csv_text(kHeader, "header-only.csv").row_count() == 0);
}

TEST_CASE("fahrenheit to celsius affine conversion") {
    const std::string text = std::string(kHeader) + "temp_F,temperature,lab," +
                             icudyn::csv::format_double(5.0 / 9.0) + "," +
                             icudyn::csv::format_double(-160.0 / 9.0) + "\n";
    const auto catalog = VariableCatalog::from_csv_text(text, "test.csv");
    const auto result = icudyn::aggregate({ev("temp_F", 0.0, 98.6)}, catalog);
    REQUIRE(result.events.size() == 1);
    CHECK(result.events[0].variable == "temperature");
    CHECK(std::abs(result.events[0].value - 37.0) <= 1e-9);
}

TEST_CASE("blank scale and offset default to identity") {
    const auto catalog =
        VariableCatalog::from_csv_text(std::string(kHeader) + "hr,heart_rate,physiologic,,\n", "t");
    const auto* entry = catalog.find("hr");
    REQUIRE(entry != nullptr);
    CHECK(entry->unit_scale == 1.0);
    CHECK(entry->unit_offset == 0.0);
    CHECK(entry->kind == VariableKind::Physiologic);
}

TEST_CASE("aggregate maps aliases and preserves values") {
    VariableCatalog catalog;
    catalog.add_entry("SBP-invasive", {"systolic_bp", VariableKind::Physiologic, 1.0, 0.0});
    catalog.add_entry("SBP-cuff", {"systolic_bp", VariableKind::Physiologic, 1.0, 0.0});

    const auto result =
        icudyn::aggregate({ev("SBP-invasive", 0.0, 120.0), ev("SBP-cuff", 5.0, 118.0)}, catalog);
    REQUIRE(result.events.size() == 2);
    CHECK(result.events[0].variable == "systolic_bp");
    CHECK(result.events[1].variable == "systolic_bp");
    CHECK(result.events[0].value == 120.0);
    CHECK(result.events[1].value == 118.0);
    CHECK(result.dropped == 0);
}

TEST_CASE("aggregate of nothing is nothing") {
    VariableCatalog catalog;
    CHECK(icudyn::aggregate({}, catalog).events.empty());
}

TEST_CASE("unknown raw names: drop removes, error throws") {
    VariableCatalog catalog;
    catalog.add_entry("hr", {"heart_rate", VariableKind::Physiologic, 1.0, 0.0});

    EventList events;
    for (int i = 0; i < 10; ++i) events.push_back(ev("hr", i, 60.0 + i));
    events.insert(events.begin() + 4, ev("mystery", 3.5, 1.0));

    const auto dropped = icudyn::aggregate(events, catalog, UnknownPolicy::Drop);
    CHECK(dropped.events.size() == events.size() - 1);
    CHECK(dropped.dropped == 1);

    CHECK_THROWS_WITH_AS(icudyn::aggregate(events, catalog, UnknownPolicy::Error),
                         doctest::Contains("mystery"), Error);
    try {
        icudyn::aggregate(events, catalog, UnknownPolicy::Error);
    } catch (const Error& e) {
        CHECK(e.tag() == "E_UNKNOWN_VARIABLE");
        CHECK(e.exit_code() == 3);
    }
}

TEST_CASE("aggregate sorts by time within an encounter, stably") {
    VariableCatalog catalog;
    catalog.add_entry("a", {"a", VariableKind::Physiologic, 1.0, 0.0});
    catalog.add_entry("b", {"b", VariableKind::Lab, 1.0, 0.0});

    // Out of order, with two distinct variables sharing t=5.
    EventList events = {ev("a", 10.0, 1.0), ev("a", 5.0, 2.0), ev("b", 5.0, 3.0), ev("a", 0.0, 4.0)};
    const auto result = icudyn::aggregate(events, catalog);
    REQUIRE(result.events.size() == 4);
    CHECK(result.events[0].t_minutes == 0.0);
    CHECK(result.events[1].t_minutes == 5.0);
    CHECK(result.events[2].t_minutes == 5.0);
    CHECK(result.events[3].t_minutes == 10.0);
    // Ties keep input order: "a" came before "b" at t=5.
    CHECK(result.events[1].variable == "a");
    CHECK(result.events[2].variable == "b");
}

TEST_CASE("aggregation is idempotent when canonical names alias themselves") {
    VariableCatalog catalog;
    catalog.add_entry("HR-monitor", {"heart_rate", VariableKind::Physiologic, 2.0, -1.0});
    catalog.add_entry("heart_rate", {"heart_rate", VariableKind::Physiologic, 1.0, 0.0});

    const EventList events = {ev("HR-monitor", 0.0, 30.0), ev("HR-monitor", 10.0, 31.0)};
    const auto once = icudyn::aggregate(events, catalog);
    const auto twice = icudyn::aggregate(once.events, catalog);
    CHECK(once.events == twice.events);
}

TEST_CASE("row indices are stable across identical catalog files") {
    const std::string text = std::string(kHeader) +
                             "hr,heart_rate,physiologic,,\n"
                             "sbp,systolic_bp,physiologic,,\n"
                             "lactate,lactate,lab,,\n"
                             "epi,epinephrine,drug,,\n";
    const auto a = VariableCatalog::from_csv_text(text, "a.csv");
    const auto b = VariableCatalog::from_csv_text(text, "b.csv");
    CHECK(a.canonical_names() == b.canonical_names());
    for (const auto& name : a.canonical_names()) CHECK(a.row_of(name) == b.row_of(name));
    // File order defines row order.
    CHECK(a.row_of("heart_rate") == 0);
    CHECK(a.row_of("systolic_bp") == 1);
    CHECK(a.row_of("lactate") == 2);
    CHECK(a.row_of("epinephrine") == 3);
    CHECK(a.kind_of_row(3) == VariableKind::Drug);
    CHECK(icudyn::is_binarized_kind(a.kind_of_row(3)));
    CHECK_FALSE(icudyn::is_binarized_kind(a.kind_of_row(2)));
}

TEST_CASE("duplicate raw name is rejected") {
    const std::string text = std::string(kHeader) +
                             "hr,heart_rate,physiologic,,\n"
                             "hr,pulse,physiologic,,\n";
    try {
        VariableCatalog::from_csv_text(text, "dup.csv");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_DUPLICATE_RAW");
        CHECK(std::string(e.what()).find("dup.csv:3") != std::string::npos);
    }
}

TEST_CASE("conflicting kinds for one canonical variable are rejected") {
    const std::string text = std::string(kHeader) +
                             "epi-iv,epinephrine,drug,,\n"
                             "epi-lab,epinephrine,lab,,\n";
    try {
        VariableCatalog::from_csv_text(text, "conflict.csv");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "E_CONFLICTING_KIND");
    }
}

TEST_CASE("parse failures carry the file name and line number") {
    SUBCASE("unknown kind") {
        const std::string text = std::string(kHeader) + "hr,heart_rate,vital,,\n";
        try {
            VariableCatalog::from_csv_text(text, "bad.csv");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.tag() == "E_PARSE");
            CHECK(std::string(e.what()).find("bad.csv:2") != std::string::npos);
        }
    }
    SUBCASE("zero unit scale") {
        const std::string text = std::string(kHeader) + "hr,heart_rate,physiologic,0,\n";
        CHECK_THROWS_AS(VariableCatalog::from_csv_text(text, "bad.csv"), Error);
    }
    SUBCASE("wrong field count") {
        const std::string text = std::string(kHeader) + "hr,heart_rate\n";
        CHECK_THROWS_AS(VariableCatalog::from_csv_text(text, "bad.csv"), Error);
    }
    SUBCASE("wrong header") {
        CHECK_THROWS_AS(VariableCatalog::from_csv_text("a,b,c,d,e\n", "bad.csv"), Error);
    }
}

TEST_CASE("catalog file round trip through disk") {
    testsup::TempDir dir;
    const std::string text = std::string(kHeader) +
                             "hr,heart_rate,physiologic,,\n"
                             "dopamine,dopamine,drug,,\n";
    testsup::spit(dir / "catalog.csv", text);
    const auto catalog = VariableCatalog::load((dir / "catalog.csv").string());
    CHECK(catalog.row_count() == 2);
    CHECK(catalog.row_of("dopamine") == 1);

    CHECK_THROWS_AS(VariableCatalog::load((dir / "missing.csv").string()), Error);
}

}  // TEST_SUITE
