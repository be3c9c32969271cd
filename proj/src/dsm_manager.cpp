#include "dsm/dsm_manager.hpp"

#include <algorithm>
#include <cmath>

namespace dsm {

json to_json(const ManagerPolicy& p) {
    return json{{"margin_fraction", static_cast<double>(p.margin_ppm) / 1e6},
                {"max_offer_fraction", static_cast<double>(p.max_offer_fraction_ppm) / 1e6}};
}

ManagerPolicy manager_policy_from_json(const json& j) {
    ManagerPolicy p;
    if (j.contains("margin_fraction")) p.margin_ppm = std::llround(j.at("margin_fraction").get<double>() * 1e6);
    if (j.contains("max_offer_fraction")) {
        p.max_offer_fraction_ppm = std::llround(j.at("max_offer_fraction").get<double>() * 1e6);
    }
    if (p.margin_ppm < 0) throw Error(ErrorKind::Validation, "policy.margin_fraction: must be non-negative");
    if (p.max_offer_fraction_ppm < 0 || p.max_offer_fraction_ppm > 1'000'000) {
        throw Error(ErrorKind::Validation, "policy.max_offer_fraction: must lie within [0, 1]");
    }
    return p;
}

std::map<CustomerId, PowerProfile> allocate_supply(const PowerProfile& supply,
                                                   const std::map<CustomerId, PowerProfile>& flexibility) {
    std::map<CustomerId, std::vector<Milliwatts>> shares;
    for (const auto& [c, f] : flexibility) shares[c].assign(static_cast<std::size_t>(supply.length()), 0);
    for (int t = supply.start_slot(); t < supply.end_slot(); ++t) {
        const Milliwatts s = supply.at(t);
        __int128 total = 0;
        for (const auto& [c, f] : flexibility) total += f.at(t);
        if (s == 0 || total == 0) continue;
        struct Part {
            __int128 remainder;
            CustomerId customer;
        };
        std::vector<Part> parts;
        Milliwatts given = 0;
        const auto i = static_cast<std::size_t>(t - supply.start_slot());
        for (const auto& [c, f] : flexibility) {
            const __int128 num = static_cast<__int128>(s) * f.at(t);
            const auto base = static_cast<Milliwatts>(num / total);
            shares[c][i] = base;
            given += base;
            parts.push_back({num % total, c});
        }
        std::stable_sort(parts.begin(), parts.end(),
                         [](const Part& a, const Part& b) { return a.remainder > b.remainder; });
        for (std::size_t k = 0; given < s && k < parts.size(); ++k, ++given) shares[parts[k].customer][i] += 1;
    }
    std::map<CustomerId, PowerProfile> out;
    for (auto& [c, v] : shares) out.emplace(c, PowerProfile(supply.grid(), supply.start_slot(), std::move(v)));
    return out;
}

DsmManager::DsmManager(Principal self, ManagerPolicy policy, Broker& broker, B2cMarket& b2c, B2bMarket& b2b,
                       const SiteAccess& sites)
    : self_(std::move(self)), policy_(policy), broker_(broker), b2c_(b2c), b2b_(b2b), sites_(sites) {}

void DsmManager::watch_scope(const std::string& scope) {
    watches_.push_back(broker_.subscribe(self_, "requests." + scope));
}

std::vector<ShiftRequest> DsmManager::poll_requests() {
    std::vector<Event> events;
    for (const auto& h : watches_) {
        for (auto& e : broker_.poll(h)) events.push_back(std::move(e));
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return a.payload.at("request_id").get<std::string>() < b.payload.at("request_id").get<std::string>();
    });
    std::vector<ShiftRequest> out;
    for (const auto& e : events) {
        if (e.type != "ShiftRequest") continue;
        auto r = shift_request_from_json(e.payload, b2b_.grid());
        r.requester = e.payload.at("requester").get<std::string>();
        r.requester_role = role_from_string(e.payload.at("requester_role").get<std::string>());
        out.push_back(std::move(r));
    }
    return out;
}

CentsPerKwh DsmManager::rate_for(const CustomerId& c) const {
    auto sub = b2c_.active_subscription(c);
    if (!sub || sub->manager_id != self_.actor_id) return 0;
    auto prog = b2c_.find_programme(sub->programme_id);
    return prog ? prog->incentive_rate : 0;
}

int DsmManager::signals_today(const CustomerId& c, int slot) const {
    auto it = daily_count_.find({c, slot / b2b_.grid().slots_per_day()});
    return it == daily_count_.end() ? 0 : it->second;
}

FlexibilityEstimate DsmManager::estimate_flexibility(const ShiftRequest& r) const {
    FlexibilityEstimate e;
    e.request_id = r.request_id;
    e.aggregate = PowerProfile::zeros(r.target.grid(), r.target.start_slot(), r.target.length());
    const auto members = sites_.scope_members(r.scope);
    const int day_slot = r.target.start_slot();
    for (const auto& c : b2c_.subscribers_of(self_.actor_id)) {
        if (!std::binary_search(members.begin(), members.end(), c)) continue;
        auto sub = b2c_.active_subscription(c);
        auto prog = sub ? b2c_.find_programme(sub->programme_id) : std::nullopt;
        if (!prog) continue;
        if (signals_today(c, day_slot) >= prog->max_signals_per_day) continue;
        PowerProfile flex = sites_.query_flexibility(c, r.target.start_slot(), r.target.end_slot(), r.direction);
        if (flex.empty() || flex.all_zero()) continue;
        e.aggregate = profile_add(e.aggregate, flex);
        e.incentive_cost += cost_of(prog->incentive_rate, energy_of(flex));
        e.per_customer.emplace(c, std::move(flex));
    }
    return e;
}

std::optional<Offer> DsmManager::build_offer(const FlexibilityEstimate& e, const ShiftRequest& r) const {
    std::vector<Milliwatts> supply;
    for (int t = r.target.start_slot(); t < r.target.end_slot(); ++t) {
        const auto offered =
            static_cast<Milliwatts>(static_cast<__int128>(e.aggregate.at(t)) * policy_.max_offer_fraction_ppm / 1'000'000);
        supply.push_back(std::min(offered, r.target.at(t)));
    }
    PowerProfile sup(r.target.grid(), r.target.start_slot(), std::move(supply));
    if (sup.all_zero()) return std::nullopt;
    // Price each customer's share at its programme rate, then add the margin, rounding up once.
    __int128 cost = 0;
    for (const auto& [c, share] : allocate_supply(sup, e.per_customer)) {
        cost += static_cast<__int128>(rate_for(c)) * energy_of(share).mw_minutes;
    }
    Offer o;
    o.request_id = r.request_id;
    o.manager_id = self_.actor_id;
    o.supply = std::move(sup);
    o.price = {ceil_div(cost * (1'000'000 + policy_.margin_ppm), static_cast<__int128>(60'000'000) * 1'000'000)};
    return o;
}

std::optional<OfferId> DsmManager::bid(const ShiftRequest& r) {
    const auto estimate = estimate_flexibility(r);
    auto offer = build_offer(estimate, r);
    if (!offer) return std::nullopt;
    auto shares = allocate_supply(offer->supply, estimate.per_customer);
    const OfferId id = b2b_.place_offer(self_, *offer);
    allocations_[id] = std::move(shares);
    return id;
}

std::vector<DsmSignal> DsmManager::dispatch_signals(const RequestId& request, const Offer& accepted) {
    auto req = b2b_.find(request);
    if (!req) throw Error(ErrorKind::NotFound, "unknown request '" + request + "'");
    auto it = allocations_.find(accepted.offer_id);
    if (it == allocations_.end()) throw Error(ErrorKind::NotFound, "no allocation for offer '" + accepted.offer_id + "'");
    std::vector<DsmSignal> out;
    for (const auto& [c, share] : it->second) {
        if (share.all_zero()) continue;
        if (!b2c_.may_signal(self_.actor_id, c)) continue;  // cancelled since bidding: shortfall accepted
        DsmSignal s;
        s.signal_id = accepted.offer_id + "." + c;
        s.request_id = request;
        s.manager_id = self_.actor_id;
        s.customer_id = c;
        s.direction = req->direction;
        s.requested = share;
        s.incentive_rate = rate_for(c);
        s.issued_at = broker_.clock();
        b2c_.register_signal({s.signal_id, request, self_.actor_id, c, s.incentive_rate});
        broker_.publish(self_, "signals." + c, "DsmSignal", to_json(s));
        daily_count_[{c, share.start_slot() / b2b_.grid().slots_per_day()}] += 1;
        signals_[request].push_back(s);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<DsmSignal> DsmManager::dispatched(const RequestId& request) const {
    auto it = signals_.find(request);
    return it == signals_.end() ? std::vector<DsmSignal>{} : it->second;
}

FulfillmentReport DsmManager::report_fulfillment(const RequestId& request) {
    FulfillmentReport rep;
    rep.request_id = request;
    auto req = b2b_.find(request);
    if (!req) throw Error(ErrorKind::NotFound, "unknown request '" + request + "'");
    const TimeGrid& grid = req->target.grid();
    rep.delivered = PowerProfile::zeros(grid, req->target.start_slot(), req->target.length());
    for (const auto& s : dispatched(request)) {
        std::vector<Milliwatts> got;
        auto resp = sites_.signal_response(s.customer_id, s.signal_id);
        const bool applied = resp && !resp->baseline_snapshot.power.empty();
        for (int t = s.requested.start_slot(); t < s.requested.end_slot(); ++t) {
            Milliwatts d = 0;
            if (applied) {
                auto metered = sites_.metered_load(s.customer_id, t);
                if (!metered) {
                    broker_.publish(self_, "system.warnings", "MissingMeterData",
                                    json{{"customer_id", s.customer_id}, {"slot", t}, {"signal_id", s.signal_id}});
                } else {
                    const Milliwatts base = resp->baseline_snapshot.total(t);
                    const Milliwatts diff = s.direction == Direction::Decrease ? base - *metered : *metered - base;
                    d = std::clamp<Milliwatts>(diff, 0, s.requested.at(t));
                }
            }
            got.push_back(d);
        }
        PowerProfile p(grid, s.requested.start_slot(), std::move(got));
        rep.per_signal[s.signal_id] = energy_of(p);
        rep.delivered = profile_add(rep.delivered, p);
    }
    return rep;
}

}  // namespace dsm
