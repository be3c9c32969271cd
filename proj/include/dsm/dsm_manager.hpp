#pragma once

// Demand-side manager agent: estimates contracted flexibility, bids it on the
// B2B market, dispatches signals to winning customers and reports delivery.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsm/b2b_market.hpp"
#include "dsm/b2c_market.hpp"
#include "dsm/eecs.hpp"

namespace dsm {

struct ManagerPolicy {
    // Fractions held in parts per million to keep offer arithmetic integral.
    std::int64_t margin_ppm = 200'000;
    std::int64_t max_offer_fraction_ppm = 900'000;
};

json to_json(const ManagerPolicy& p);
ManagerPolicy manager_policy_from_json(const json& j);

// What a manager may see of the customer sites it serves.
class SiteAccess {
public:
    virtual ~SiteAccess() = default;
    virtual std::vector<CustomerId> scope_members(const std::string& scope) const = 0;
    virtual PowerProfile query_flexibility(const CustomerId& c, int first, int last, Direction dir) const = 0;
    virtual std::optional<SignalResponse> signal_response(const CustomerId& c, const SignalId& id) const = 0;
    // Metered device load (net + pv) for the slot, if it has been metered.
    virtual std::optional<Milliwatts> metered_load(const CustomerId& c, int slot) const = 0;
};

struct FlexibilityEstimate {
    RequestId request_id;
    std::map<CustomerId, PowerProfile> per_customer;
    PowerProfile aggregate;
    Money incentive_cost;
};

// Splits supply across customers in proportion to their flexibility, slot by
// slot, largest remainder first (ties by customer id). Exact in milliwatts.
std::map<CustomerId, PowerProfile> allocate_supply(const PowerProfile& supply,
                                                   const std::map<CustomerId, PowerProfile>& flexibility);

struct FulfillmentReport {
    RequestId request_id;
    PowerProfile delivered;
    std::map<SignalId, Energy> per_signal;
};

class DsmManager {
public:
    DsmManager(Principal self, ManagerPolicy policy, Broker& broker, B2cMarket& b2c, B2bMarket& b2b,
               const SiteAccess& sites);

    const ActorId& id() const { return self_.actor_id; }
    const Principal& principal() const { return self_; }
    const ManagerPolicy& policy() const { return policy_; }

    void watch_scope(const std::string& scope);
    // New requests seen on watched scopes since the last poll, in log order.
    std::vector<ShiftRequest> poll_requests();

    FlexibilityEstimate estimate_flexibility(const ShiftRequest& r) const;
    std::optional<Offer> build_offer(const FlexibilityEstimate& e, const ShiftRequest& r) const;

    // Estimate, build and place. Remembers the allocation for dispatch.
    std::optional<OfferId> bid(const ShiftRequest& r);

    std::vector<DsmSignal> dispatch_signals(const RequestId& request, const Offer& accepted);
    std::vector<DsmSignal> dispatched(const RequestId& request) const;

    FulfillmentReport report_fulfillment(const RequestId& request);

private:
    CentsPerKwh rate_for(const CustomerId& c) const;
    int signals_today(const CustomerId& c, int slot) const;

    Principal self_;
    ManagerPolicy policy_;
    Broker& broker_;
    B2cMarket& b2c_;
    B2bMarket& b2b_;
    const SiteAccess& sites_;
    std::vector<SubscriptionHandle> watches_;
    std::map<OfferId, std::map<CustomerId, PowerProfile>> allocations_;
    std::map<RequestId, std::vector<DsmSignal>> signals_;
    std::map<std::pair<CustomerId, int>, int> daily_count_;
};

}  // namespace dsm
