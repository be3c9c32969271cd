#pragma once

// Flexibility requests from retailers and grid operators: sealed offers,
// clearing, the offers-versus-exchange decision and settlement.

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dsm/clearing.hpp"
#include "dsm/core.hpp"
#include "dsm/platform.hpp"

namespace dsm {

enum class RequestState { Published, Bidding, Cleared, AcceptedOffers, WentToExchange, Rejected, Dispatched, Settled };

std::string_view to_string(RequestState s);

struct ShiftRequest {
    RequestId request_id;
    ActorId requester;
    Role requester_role = Role::Retailer;
    Direction direction = Direction::Decrease;
    std::string scope;  // segment id or portfolio tag
    PowerProfile target;
    LogicalTime bid_deadline;
    std::optional<Money> budget_cap;
    RequestState state = RequestState::Published;
};

json to_json(const ShiftRequest& r);
ShiftRequest shift_request_from_json(const json& j, const TimeGrid& grid);

struct AcceptanceDecision {
    RequestId request_id;
    RequestState outcome = RequestState::Rejected;
    bool feasible = false;
    Money clearing_price;
    std::optional<Money> exchange_cost;  // retailers only
    Money channel_cost;                  // what the requester actually pays
};

json to_json(const AcceptanceDecision& d);

struct SettlementRecord {
    RequestId request_id;
    std::map<ActorId, PowerProfile> delivered;
    std::map<ActorId, Energy> offered;
    std::map<ActorId, Money> offer_price;
    std::map<ActorId, Money> payouts;
    PowerProfile shortfall;
    Money total_payout;
};

json to_json(const SettlementRecord& s);

// sum_t target(t) * slot_hours * quote(t), half-to-even to cents.
Money exchange_cost(const PowerProfile& target, const std::vector<CentsPerKwh>& quotes);

// price * min(delivered, offered) / offered, half-to-even; 0 when nothing was offered.
Money fulfillment_payout(Money price, Energy offered, Energy delivered);

class B2bMarket {
public:
    B2bMarket(Broker& broker, Principal marketplace, TimeGrid grid,
              std::size_t exact_threshold = kDefaultExactThreshold)
        : broker_(broker), marketplace_(std::move(marketplace)), grid_(grid), exact_threshold_(exact_threshold) {}

    const TimeGrid& grid() const { return grid_; }

    RequestId submit_request(const Principal& requester, ShiftRequest r);
    OfferId place_offer(const Principal& manager, Offer o);
    ClearingResult clear_request(const RequestId& id);
    AcceptanceDecision decide_acceptance(const RequestId& id, const std::vector<CentsPerKwh>& quotes);
    void mark_dispatched(const RequestId& id);
    SettlementRecord settle_request(const RequestId& id, const std::map<ActorId, PowerProfile>& delivered);

    std::optional<ShiftRequest> find(const RequestId& id) const;
    std::vector<ShiftRequest> requests() const;
    std::vector<Offer> offers_of(const RequestId& id) const;
    std::vector<Offer> accepted_offers(const RequestId& id) const;
    std::optional<ClearingResult> clearing(const RequestId& id) const;
    std::optional<AcceptanceDecision> decision(const RequestId& id) const;
    std::optional<SettlementRecord> settlement(const RequestId& id) const;

    // Bidding requests whose deadline has been reached, in id order.
    std::vector<RequestId> due_for_clearing(LogicalTime now) const;

    // State, clearing, decision and settlement in one document.
    json request_view(const RequestId& id) const;

private:
    struct Entry {
        ShiftRequest request;
        std::vector<Offer> offers;
        std::optional<ClearingResult> clearing;
        std::optional<AcceptanceDecision> decision;
        std::optional<SettlementRecord> settlement;
    };

    Entry& entry(const RequestId& id);
    const Entry& entry(const RequestId& id) const;

    Broker& broker_;
    Principal marketplace_;
    TimeGrid grid_;
    std::size_t exact_threshold_;
    mutable std::mutex mutex_;
    std::map<RequestId, Entry> entries_;
    int next_request_ = 1;
};

}  // namespace dsm
