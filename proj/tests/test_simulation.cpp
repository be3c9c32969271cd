#include <gtest/gtest.h>

#include <thread>

#include "dsm/simulation.hpp"

using namespace dsm;

namespace {

Scenario shipped(const std::string& name) { return load_scenario(std::string(DSM_SOURCE_DIR) + "/scenarios/" + name); }

std::string run_log(Scenario sc) {
    Simulation sim(std::move(sc));
    sim.run();
    return export_jsonl(sim.ordered_log());
}

Scenario quiescent() {
    return scenario_from_json(json::parse(R"({
      "name": "quiet",
      "time_grid": {"slot_minutes": 15, "horizon_slots": 12},
      "actors": {
        "grid_operators": [{"id": "dso", "token": "t-dso"}],
        "customers": [{"id": "c1", "token": "t1",
                       "devices": [{"id": "w", "kind": "deferrable", "power_kw": 2, "duration_slots": 2}]}]
      },
      "segments": [{"id": "s1", "capacity_kw": 10, "members": ["c1"]}]
    })"));
}

}  // namespace

TEST(Simulation, QuiescentRunLeavesSchedulesAlone) {
    Simulation sim(quiescent());
    const auto baseline = sim.site("c1").baseline();
    sim.run();
    EXPECT_EQ(sim.site("c1").schedule(), baseline);
    const auto m = sim.metrics();
    EXPECT_EQ(m.segments.at("s1").violations, 0);
    EXPECT_EQ(m.total_payouts_cents, 0);
    EXPECT_EQ(m.total_incentives_cents, 0);
    EXPECT_TRUE(m.requests.empty());
}

TEST(Simulation, OverloadTriggersDecreaseOfExcess) {
    Simulation sim(shipped("grid_overload.json"));
    sim.run();
    const auto reqs = sim.b2b().requests();
    ASSERT_EQ(reqs.size(), 1u);
    EXPECT_EQ(reqs[0].requester, "dso");
    EXPECT_EQ(reqs[0].direction, Direction::Decrease);
    EXPECT_EQ(reqs[0].target, PowerProfile::from_kw(sim.grid(), 12, {6}));
    EXPECT_EQ(reqs[0].state, RequestState::Settled);
}

TEST(Simulation, SameSeedSameLogDifferentSeedDifferentLog) {
    auto sc = shipped("retailer_arbitrage.json");
    const auto a = run_log(sc);
    EXPECT_EQ(a, run_log(sc));
    sc.seed += 1;
    EXPECT_NE(a, run_log(sc));
}

TEST(Simulation, PhasesNeverGoBackwardsWithinASlot) {
    Simulation sim(shipped("retailer_arbitrage.json"));
    sim.run();
    const auto log = sim.ordered_log();
    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_FALSE(log[i].time < log[i - 1].time);
    EXPECT_EQ(log.back().type, "RunCompleted");
    EXPECT_EQ(log.back().payload["event_count"], log.size() - 1);
}

TEST(Simulation, NoSignalWithoutActiveSubscription) {
    Simulation sim(shipped("retailer_arbitrage.json"));
    sim.run();
    std::map<CustomerId, ActorId> manager_of;
    for (const auto& e : sim.ordered_log()) {
        if (e.type == "Subscription") {
            if (e.payload["status"] == "Active") manager_of[e.payload["customer_id"]] = e.payload["manager_id"];
            else manager_of.erase(e.payload["customer_id"].get<std::string>());
        }
        if (e.type == "DsmSignal") {
            auto it = manager_of.find(e.payload["customer_id"]);
            ASSERT_NE(it, manager_of.end());
            EXPECT_EQ(it->second, e.payload["manager_id"]);
        }
    }
}

TEST(Simulation, MetricsArePureFunctionOfTheLog) {
    Simulation sim(shipped("retailer_arbitrage.json"));
    sim.run();
    const auto direct = to_json(sim.metrics()).dump();
    const auto replayed = to_json(compute_metrics(parse_jsonl(export_jsonl(sim.ordered_log())))).dump();
    EXPECT_EQ(direct, replayed);
    auto truncated = sim.ordered_log();
    truncated.pop_back();
    EXPECT_THROW(compute_metrics(truncated), Error);
}

namespace {

struct CountingGate : OverrideGate {
    int waits = 0;
    void wait(Simulation& sim, int) override {
        ++waits;
        EXPECT_TRUE(sim.paused());
    }
};

}  // namespace

TEST(Simulation, GateWithoutInputMatchesBatch) {
    const auto batch = run_log(shipped("grid_overload.json"));
    Simulation sim(shipped("grid_overload.json"));
    CountingGate gate;
    sim.set_gate(&gate);
    sim.run();
    EXPECT_EQ(gate.waits, sim.grid().horizon_slots);
    EXPECT_EQ(export_jsonl(sim.ordered_log()), batch);
}

TEST(Simulation, CancelledSubscriberGetsNoFurtherSignals) {
    auto sc = shipped("grid_overload.json");
    Simulation sim(std::move(sc));
    const auto sub = sim.b2c().active_subscription("home-3");
    ASSERT_TRUE(sub.has_value());
    sim.b2c().unsubscribe(*sim.identities().find("home-3"), sub->subscription_id);
    sim.run();
    EXPECT_TRUE(sim.site("home-3").signals().empty());
    EXPECT_FALSE(sim.site("home-1").signals().empty());
}
