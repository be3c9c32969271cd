#pragma once

// Run metrics, recomputed from the exported event log alone.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/platform.hpp"

namespace dsm {

struct SegmentMetrics {
    Milliwatts capacity = 0;
    std::vector<Milliwatts> load;  // metered net load per slot
    Milliwatts peak = 0;
    int violations = 0;  // slots with load > capacity
};

struct RequestMetrics {
    RequestId request_id;
    ActorId requester;
    std::string requester_role;
    std::string outcome;
    std::int64_t clearing_price_cents = 0;
    std::optional<std::int64_t> exchange_cost_cents;
    std::int64_t channel_cost_cents = 0;
    std::int64_t target_mw_minutes = 0;
    std::int64_t delivered_mw_minutes = 0;
    std::int64_t payout_cents = 0;
    std::int64_t credits_cents = 0;
    bool settled = false;
};

struct Metrics {
    std::string run_id;
    TimeGrid grid;
    std::map<SegmentId, SegmentMetrics> segments;
    std::int64_t total_incentives_cents = 0;
    std::int64_t total_payouts_cents = 0;
    std::int64_t retailer_cost_cents = 0;
    std::int64_t retailer_exchange_only_cents = 0;
    std::vector<RequestMetrics> requests;
    std::size_t event_count = 0;
};

// Throws Error(Validation) on a log without its setup header or completion trailer.
Metrics compute_metrics(const std::vector<Event>& ordered_log);

nlohmann::ordered_json to_json(const Metrics& m);
std::string metrics_csv(const Metrics& m);

}  // namespace dsm
