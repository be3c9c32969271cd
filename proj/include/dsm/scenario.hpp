#pragma once

// Scenario files: actors, sites, grid segments, exogenous series and scripts.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsm/b2c_market.hpp"
#include "dsm/core.hpp"
#include "dsm/devices.hpp"
#include "dsm/dsm_manager.hpp"
#include "dsm/eecs.hpp"

namespace dsm {

struct ActorSpec {
    ActorId id;
    std::string token;
};

// Random shortages: each slot, with the given probability, ask for a constant
// shift of [min_kw, max_kw] over [min_slots, max_slots] slots.
struct ShortageConfig {
    std::int64_t probability_ppm = 0;
    int min_kw = 1;
    int max_kw = 1;
    int min_slots = 1;
    int max_slots = 1;
    Direction direction = Direction::Decrease;
    std::optional<Money> budget_cap;
};

struct RetailerSpec {
    ActorId id;
    std::string token;
    std::optional<ShortageConfig> shortage;
};

struct ManagerSpec {
    ActorId id;
    std::string token;
    ManagerPolicy policy;
    std::vector<Programme> programmes;
};

struct CustomerSpec {
    CustomerId id;
    std::string token;
    std::vector<Device> devices;
    PowerProfile pv;
    SitePrefs prefs;
};

struct SubscriptionSpec {
    CustomerId customer;
    ProgrammeId programme;
};

struct SegmentSpec {
    SegmentId id;
    Milliwatts capacity = 0;
    std::vector<CustomerId> members;  // sorted
    ActorId operator_id;
};

struct PortfolioSpec {
    std::string id;
    ActorId retailer;
    std::vector<CustomerId> members;  // sorted
};

struct TriggerSpec {
    int at_slot = 0;
    ActorId retailer;
    std::string scope;
    Direction direction = Direction::Decrease;
    PowerProfile target;
    std::optional<Money> budget_cap;
};

// customer "*" matches every customer. on_arrival overrides each signal in
// the slot it arrives; at_slot overrides whatever is active at that slot.
struct OverrideSpec {
    std::string customer;
    std::optional<int> at_slot;
    bool on_arrival = false;
};

struct Scenario {
    std::string name = "scenario";
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::size_t exact_threshold = 24;
    int trigger_lead_slots = 4;
    bool dsm_enabled = true;
    Tariff default_tariff{25, {}};
    std::string admin_token = "admin-token";

    std::vector<ActorSpec> grid_operators;
    std::vector<RetailerSpec> retailers;
    std::vector<ManagerSpec> managers;
    std::vector<CustomerSpec> customers;
    std::vector<SubscriptionSpec> subscriptions;
    std::vector<SegmentSpec> segments;
    std::vector<PortfolioSpec> portfolios;

    std::vector<CentsPerKwh> quote_base;  // one per slot
    CentsPerKwh quote_jitter = 0;
    OutdoorSeries outdoor;

    std::vector<TriggerSpec> triggers;
    std::vector<OverrideSpec> overrides;

    std::string run_id() const { return name + "-seed" + std::to_string(seed); }
};

// Validates eagerly; errors name the offending field, e.g. "segments[0].members[2]".
Scenario scenario_from_json(const json& j);
Scenario load_scenario(const std::string& path);

}  // namespace dsm
