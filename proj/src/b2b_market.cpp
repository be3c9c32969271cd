#include "dsm/b2b_market.hpp"

#include <algorithm>
#include <cstdio>

namespace dsm {

namespace {
constexpr std::string_view kStateNames[] = {"Published", "Bidding",        "Cleared",  "AcceptedOffers",
                                            "WentToExchange", "Rejected", "Dispatched", "Settled"};
}

std::string_view to_string(RequestState s) { return kStateNames[static_cast<int>(s)]; }

json to_json(const ShiftRequest& r) {
    json j{{"request_id", r.request_id},
           {"requester", r.requester},
           {"requester_role", std::string(to_string(r.requester_role))},
           {"direction", std::string(to_string(r.direction))},
           {"scope", r.scope},
           {"target", to_json(r.target)},
           {"bid_deadline", to_json(r.bid_deadline)},
           {"state", std::string(to_string(r.state))}};
    j["budget_cap_cents"] = r.budget_cap ? json(r.budget_cap->cents) : json(nullptr);
    return j;
}

ShiftRequest shift_request_from_json(const json& j, const TimeGrid& grid) {
    ShiftRequest r;
    try {
        r.request_id = j.value("request_id", std::string());
        r.direction = direction_from_string(j.at("direction").get<std::string>());
        r.scope = j.at("scope").get<std::string>();
        r.target = profile_from_json(j.at("target"), grid);
        if (j.contains("bid_deadline")) r.bid_deadline = logical_time_from_json(j.at("bid_deadline"));
        if (j.contains("budget_cap_cents") && !j.at("budget_cap_cents").is_null()) {
            r.budget_cap = Money{j.at("budget_cap_cents").get<std::int64_t>()};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, std::string("request: ") + e.what());
    }
    return r;
}

json to_json(const AcceptanceDecision& d) {
    json j{{"request_id", d.request_id},
           {"outcome", std::string(to_string(d.outcome))},
           {"feasible", d.feasible},
           {"clearing_price_cents", d.clearing_price.cents},
           {"channel_cost_cents", d.channel_cost.cents}};
    j["exchange_cost_cents"] = d.exchange_cost ? json(d.exchange_cost->cents) : json(nullptr);
    return j;
}

json to_json(const SettlementRecord& s) {
    json managers = json::array();
    for (const auto& [m, payout] : s.payouts) {
        const auto d = s.delivered.find(m);
        const PowerProfile delivered = d == s.delivered.end() ? PowerProfile(s.shortfall.grid()) : d->second;
        managers.push_back({{"manager_id", m},
                            {"delivered", to_json(delivered)},
                            {"delivered_mw_minutes", energy_of(delivered).mw_minutes},
                            {"offered_mw_minutes", s.offered.at(m).mw_minutes},
                            {"offer_price_cents", s.offer_price.at(m).cents},
                            {"payout_cents", payout.cents}});
    }
    return json{{"request_id", s.request_id},
                {"managers", std::move(managers)},
                {"shortfall", to_json(s.shortfall)},
                {"total_payout_cents", s.total_payout.cents}};
}

Money exchange_cost(const PowerProfile& target, const std::vector<CentsPerKwh>& quotes) {
    __int128 sum = 0;
    for (int t = target.start_slot(); t < target.end_slot(); ++t) {
        if (t < 0 || t >= static_cast<int>(quotes.size())) {
            throw Error(ErrorKind::Validation, "exchange quotes do not cover slot " + std::to_string(t));
        }
        sum += static_cast<__int128>(target.at(t)) * target.grid().slot_minutes * quotes[static_cast<std::size_t>(t)];
    }
    return {round_half_even(sum, 60'000'000)};
}

Money fulfillment_payout(Money price, Energy offered, Energy delivered) {
    if (offered.mw_minutes <= 0) return {};
    const std::int64_t d = std::clamp<std::int64_t>(delivered.mw_minutes, 0, offered.mw_minutes);
    return {round_half_even(static_cast<__int128>(price.cents) * d, offered.mw_minutes)};
}

B2bMarket::Entry& B2bMarket::entry(const RequestId& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorKind::NotFound, "unknown request '" + id + "'");
    return it->second;
}

const B2bMarket::Entry& B2bMarket::entry(const RequestId& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorKind::NotFound, "unknown request '" + id + "'");
    return it->second;
}

RequestId B2bMarket::submit_request(const Principal& requester, ShiftRequest r) {
    if (requester.role != Role::Retailer && requester.role != Role::GridOperator) {
        throw Error(ErrorKind::Access, "only retailers and grid operators may submit requests");
    }
    if (!(r.target.grid() == grid_)) throw Error(ErrorKind::GridMismatch, "request.target: grid mismatch");
    if (r.target.empty() || r.target.all_zero()) throw Error(ErrorKind::Validation, "request.target: must not be empty");
    if (r.target.end_slot() > grid_.horizon_slots) throw Error(ErrorKind::Validation, "request.target: beyond the horizon");
    if (r.scope.empty()) throw Error(ErrorKind::Validation, "request.scope: must not be empty");
    if (r.budget_cap && r.budget_cap->cents < 0) throw Error(ErrorKind::Validation, "request.budget_cap: must be non-negative");
    if (!(broker_.clock() < r.bid_deadline)) throw Error(ErrorKind::Validation, "request.bid_deadline: must lie in the future");
    r.requester = requester.actor_id;
    r.requester_role = requester.role;
    {
        std::lock_guard lock(mutex_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "req-%04d", next_request_++);
        r.request_id = buf;
        r.state = RequestState::Bidding;
        entries_[r.request_id].request = r;
    }
    broker_.publish(requester, "requests." + r.scope, "ShiftRequest", to_json(r));
    return r.request_id;
}

OfferId B2bMarket::place_offer(const Principal& manager, Offer o) {
    if (manager.role != Role::DsmManager) throw Error(ErrorKind::Access, "only demand-side managers may place offers");
    {
        std::lock_guard lock(mutex_);
        auto& e = entry(o.request_id);
        if (e.request.state != RequestState::Bidding) {
            throw Error(ErrorKind::State, "request '" + o.request_id + "' is not accepting offers");
        }
        if (!(broker_.clock() < e.request.bid_deadline)) {
            throw Error(ErrorKind::Deadline, "bid deadline for '" + o.request_id + "' has passed");
        }
        if (!(o.supply.grid() == grid_)) throw Error(ErrorKind::GridMismatch, "offer.supply: grid mismatch");
        if (o.supply.empty() || o.supply.all_zero()) throw Error(ErrorKind::Validation, "offer.supply: must not be empty");
        if (o.supply.start_slot() < e.request.target.start_slot() || o.supply.end_slot() > e.request.target.end_slot()) {
            throw Error(ErrorKind::Validation, "offer.supply: window outside the request's target window");
        }
        if (o.price.cents < 0) throw Error(ErrorKind::Validation, "offer.price: must be non-negative");
        char buf[16];
        std::snprintf(buf, sizeof buf, ".o%03zu", e.offers.size() + 1);
        o.offer_id = o.request_id + buf;
        o.manager_id = manager.actor_id;
        e.offers.push_back(o);
    }
    broker_.publish(manager, "offers." + o.request_id, "Offer", to_json(o));
    return o.offer_id;
}

ClearingResult B2bMarket::clear_request(const RequestId& id) {
    ClearingResult result;
    {
        std::lock_guard lock(mutex_);
        auto& e = entry(id);
        if (e.request.state != RequestState::Bidding) throw Error(ErrorKind::State, "request '" + id + "' is not in Bidding");
        if (broker_.clock() < e.request.bid_deadline) {
            throw Error(ErrorKind::State, "request '" + id + "' cannot clear before its bid deadline");
        }
        ClearingInstance inst{id, e.request.target, e.offers, e.request.budget_cap};
        result = clear_offers(inst, exact_threshold_);
        e.clearing = result;
        e.request.state = RequestState::Cleared;
    }
    broker_.publish(marketplace_, "market.clearings", "ClearingResult", to_json(result));
    return result;
}

AcceptanceDecision B2bMarket::decide_acceptance(const RequestId& id, const std::vector<CentsPerKwh>& quotes) {
    AcceptanceDecision d;
    {
        std::lock_guard lock(mutex_);
        auto& e = entry(id);
        if (e.request.state != RequestState::Cleared) throw Error(ErrorKind::State, "request '" + id + "' is not Cleared");
        d.request_id = id;
        d.feasible = e.clearing->feasible;
        d.clearing_price = e.clearing->total_price;
        if (e.request.requester_role == Role::Retailer) {
            const Money exch = exchange_cost(e.request.target, quotes);
            d.exchange_cost = exch;
            // The exchange is always available to a retailer; offers win ties.
            if (d.feasible && d.clearing_price <= exch) {
                d.outcome = RequestState::AcceptedOffers;
                d.channel_cost = d.clearing_price;
            } else {
                d.outcome = RequestState::WentToExchange;
                d.channel_cost = exch;
            }
        } else {
            d.outcome = d.feasible ? RequestState::AcceptedOffers : RequestState::Rejected;
            d.channel_cost = d.feasible ? d.clearing_price : Money{};
        }
        e.decision = d;
        e.request.state = d.outcome;
    }
    broker_.publish(marketplace_, "market.clearings", "AcceptanceDecision", to_json(d));
    return d;
}

void B2bMarket::mark_dispatched(const RequestId& id) {
    std::lock_guard lock(mutex_);
    auto& e = entry(id);
    if (e.request.state != RequestState::AcceptedOffers) {
        throw Error(ErrorKind::State, "request '" + id + "' has no accepted offers to dispatch");
    }
    e.request.state = RequestState::Dispatched;
}

SettlementRecord B2bMarket::settle_request(const RequestId& id, const std::map<ActorId, PowerProfile>& delivered) {
    SettlementRecord s;
    {
        std::lock_guard lock(mutex_);
        auto& e = entry(id);
        if (e.request.state == RequestState::Settled) throw Error(ErrorKind::Duplicate, "request '" + id + "' already settled");
        if (e.request.state != RequestState::Dispatched) throw Error(ErrorKind::State, "request '" + id + "' is not Dispatched");
        if (broker_.clock().slot < e.request.target.end_slot() - 1) {
            throw Error(ErrorKind::State, "request '" + id + "' delivery window has not elapsed");
        }
        s.request_id = id;
        const auto& selected = e.clearing->selected;
        for (const auto& o : e.offers) {
            if (!std::binary_search(selected.begin(), selected.end(), o.offer_id)) continue;
            s.offered[o.manager_id] += energy_of(o.supply);
            s.offer_price[o.manager_id] += o.price;
        }
        PowerProfile sum(grid_);
        for (const auto& [m, offered] : s.offered) {
            auto it = delivered.find(m);
            const PowerProfile d = it == delivered.end() ? PowerProfile(grid_) : it->second;
            s.delivered[m] = d;
            sum = profile_add(sum, d);
            const Money payout = fulfillment_payout(s.offer_price[m], offered, energy_of(d));
            s.payouts[m] = payout;
            s.total_payout += payout;
        }
        s.shortfall = profile_min(profile_sub_clamped(e.request.target, sum), e.request.target);
        s.shortfall = s.shortfall.slice(e.request.target.start_slot(), e.request.target.end_slot());
        e.settlement = s;
        e.request.state = RequestState::Settled;
    }
    broker_.publish(marketplace_, "market.settlements", "Settlement", to_json(s));
    return s;
}

std::optional<ShiftRequest> B2bMarket::find(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.request;
}

std::vector<ShiftRequest> B2bMarket::requests() const {
    std::lock_guard lock(mutex_);
    std::vector<ShiftRequest> out;
    for (const auto& [id, e] : entries_) out.push_back(e.request);
    return out;
}

std::vector<Offer> B2bMarket::offers_of(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    return entry(id).offers;
}

std::vector<Offer> B2bMarket::accepted_offers(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    const auto& e = entry(id);
    std::vector<Offer> out;
    if (!e.clearing || !e.decision || e.decision->outcome != RequestState::AcceptedOffers) return out;
    for (const auto& o : e.offers) {
        if (std::binary_search(e.clearing->selected.begin(), e.clearing->selected.end(), o.offer_id)) out.push_back(o);
    }
    return out;
}

std::optional<ClearingResult> B2bMarket::clearing(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    return entry(id).clearing;
}

std::optional<AcceptanceDecision> B2bMarket::decision(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    return entry(id).decision;
}

std::optional<SettlementRecord> B2bMarket::settlement(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    return entry(id).settlement;
}

std::vector<RequestId> B2bMarket::due_for_clearing(LogicalTime now) const {
    std::lock_guard lock(mutex_);
    std::vector<RequestId> out;
    for (const auto& [id, e] : entries_) {
        if (e.request.state == RequestState::Bidding && !(now < e.request.bid_deadline)) out.push_back(id);
    }
    return out;
}

json B2bMarket::request_view(const RequestId& id) const {
    std::lock_guard lock(mutex_);
    const auto& e = entry(id);
    json j{{"request", to_json(e.request)}, {"offer_count", e.offers.size()}};
    j["clearing"] = e.clearing ? to_json(*e.clearing) : json(nullptr);
    j["decision"] = e.decision ? to_json(*e.decision) : json(nullptr);
    j["settlement"] = e.settlement ? to_json(*e.settlement) : json(nullptr);
    return j;
}

}  // namespace dsm
