#include <gtest/gtest.h>

#include "dsm/scenario.hpp"

using namespace dsm;

namespace {

json minimal() {
    return json::parse(R"({
      "name": "tiny",
      "time_grid": {"slot_minutes": 15, "horizon_slots": 8},
      "actors": {
        "customers": [{"id": "c1", "token": "t1",
                       "devices": [{"id": "w", "kind": "deferrable", "power_kw": 2, "duration_slots": 2}]}]
      }
    })");
}

std::string error_of(const json& j) {
    try {
        scenario_from_json(j);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        return e.what();
    }
    ADD_FAILURE() << "scenario was accepted";
    return "";
}

}  // namespace

TEST(Scenario, MinimalLoads) {
    const auto s = scenario_from_json(minimal());
    EXPECT_EQ(s.customers.size(), 1u);
    EXPECT_EQ(s.grid.horizon_slots, 8);
    EXPECT_EQ(s.run_id(), "tiny-seed0");
    EXPECT_EQ(s.quote_base.size(), 8u);
}

TEST(Scenario, UnknownSegmentMemberNamed) {
    auto j = minimal();
    j["segments"] = json::parse(R"([{"id": "s1", "capacity_kw": 10, "members": ["c1", "ghost"]}])");
    const auto msg = error_of(j);
    EXPECT_NE(msg.find("segments[0].members[1]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("ghost"), std::string::npos) << msg;
}

TEST(Scenario, ShortPvSeries) {
    auto j = minimal();
    j["actors"]["customers"][0]["pv_kw"] = {1, 2, 3};
    const auto msg = error_of(j);
    EXPECT_NE(msg.find("actors.customers[0].pv_kw"), std::string::npos) << msg;
    EXPECT_NE(msg.find("shorter than the horizon"), std::string::npos) << msg;
}

TEST(Scenario, HeaterThatCannotHoldItsBand) {
    // +1.0 degC per on-slot against a 1.4 degC loss at 19 degC with 5 degC outside.
    auto j = minimal();
    j["series"] = json::parse(R"({"outdoor": {"outdoor": 5}})");
    j["actors"]["customers"][0]["devices"].push_back(json::parse(
        R"({"id": "h", "kind": "thermostatic", "rated_power_kw": 2, "t_min": 19, "t_max": 22, "t0": 21,
            "alpha": 0.1, "beta": 2})"));
    const auto msg = error_of(j);
    EXPECT_NE(msg.find("devices[1]"), std::string::npos) << msg;
    j["actors"]["customers"][0]["devices"][1]["beta"] = 4;
    EXPECT_NO_THROW(scenario_from_json(j));
}

TEST(Scenario, DuplicateTokensAndBadReferences) {
    auto j = minimal();
    j["actors"]["retailers"] = json::parse(R"([{"id": "r1", "token": "t1"}])");
    EXPECT_NE(error_of(j).find("duplicate token"), std::string::npos);

    j = minimal();
    j["subscriptions"] = json::parse(R"([{"customer": "c1", "programme": "none"}])");
    EXPECT_NE(error_of(j).find("subscriptions[0].programme"), std::string::npos);

    j = minimal();
    j["overrides"] = json::parse(R"([{"customer": "c1"}])");
    EXPECT_NE(error_of(j).find("overrides[0]"), std::string::npos);
}

TEST(Scenario, MissingFileAndMalformedJson) {
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), Error);
}

TEST(Scenario, ShippedScenariosLoad) {
    for (const char* name : {"grid_overload.json", "retailer_arbitrage.json"}) {
        EXPECT_NO_THROW(load_scenario(std::string(DSM_SOURCE_DIR) + "/scenarios/" + name)) << name;
    }
}
