#include "dsm/simulation.hpp"

#include <algorithm>
#include <set>

namespace dsm {

namespace {

// Uniform draw in [0, n) from the raw 64-bit stream; the modulo bias is
// irrelevant here and keeps the sequence identical across standard libraries.
std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

}  // namespace

Simulation::Simulation(Scenario scenario)
    : scenario_(std::move(scenario)), run_id_(scenario_.run_id()), rng_(scenario_.seed) {
    broker_ = std::make_shared<Broker>(run_id_);
    devices_ = std::make_unique<DeviceRegistry>(identities_, scenario_.grid);
    admin_ = Principal{"admin", Role::Admin, scenario_.admin_token};
    setup();
}

Simulation::~Simulation() = default;

void Simulation::set_clock(Phase phase) { broker_->set_clock({slot_, phase}); }

void Simulation::warn(const Principal& who, const std::string& type, json payload) {
    broker_->publish(who, "system.warnings", type, std::move(payload));
}

void Simulation::setup() {
    const auto& sc = scenario_;
    const TimeGrid& grid = sc.grid;
    broker_->set_clock({0, Phase::Setup});

    identities_.register_principal(admin_);
    auto add = [&](const ActorId& id, Role role, const std::string& token) {
        Principal p{id, role, token};
        identities_.register_principal(p);
        principals_[id] = p;
    };
    for (const auto& g : sc.grid_operators) add(g.id, Role::GridOperator, g.token);
    for (const auto& r : sc.retailers) add(r.id, Role::Retailer, r.token);
    for (const auto& m : sc.managers) add(m.id, Role::DsmManager, m.token);
    for (const auto& c : sc.customers) add(c.id, Role::Customer, c.token);

    b2c_ = std::make_unique<B2cMarket>(*broker_, admin_);
    b2b_ = std::make_unique<B2bMarket>(*broker_, admin_, grid, sc.exact_threshold);

    // Exchange quotes are drawn up front so that the stream does not depend on what happens later.
    for (int t = 0; t < grid.horizon_slots; ++t) {
        CentsPerKwh q = sc.quote_base[static_cast<std::size_t>(t)];
        if (sc.quote_jitter > 0) {
            q += static_cast<CentsPerKwh>(draw(rng_, static_cast<std::uint64_t>(2 * sc.quote_jitter + 1))) - sc.quote_jitter;
        }
        quotes_.push_back(std::max<CentsPerKwh>(0, q));
    }

    broker_->publish(admin_, "scenario.setup", "Scenario",
                     json{{"name", sc.name},
                          {"run_id", run_id_},
                          {"seed", sc.seed},
                          {"time_grid", to_json(grid)},
                          {"dsm_enabled", sc.dsm_enabled},
                          {"trigger_lead_slots", sc.trigger_lead_slots},
                          {"exact_threshold", sc.exact_threshold}});
    for (const auto& seg : sc.segments) {
        broker_->publish(admin_, "scenario.setup", "Segment",
                         json{{"segment_id", seg.id},
                              {"capacity_mw", seg.capacity},
                              {"members", seg.members},
                              {"operator", seg.operator_id}});
    }
    for (const auto& p : sc.portfolios) {
        broker_->publish(admin_, "scenario.setup", "Portfolio",
                         json{{"portfolio_id", p.id}, {"retailer", p.retailer}, {"members", p.members}});
    }

    for (const auto& m : sc.managers) {
        const auto& who = principals_.at(m.id);
        for (const auto& prog : m.programmes) b2c_->publish_programme(who, prog);
        auto mgr = std::make_unique<DsmManager>(who, m.policy, *broker_, *b2c_, *b2b_, *this);
        for (const auto& seg : sc.segments) mgr->watch_scope(seg.id);
        for (const auto& p : sc.portfolios) mgr->watch_scope(p.id);
        managers_.emplace(m.id, std::move(mgr));
    }

    std::map<CustomerId, Tariff> tariffs;
    for (const auto& sub : sc.subscriptions) {
        b2c_->subscribe(principals_.at(sub.customer), sub.programme);
        tariffs[sub.customer] = b2c_->find_programme(sub.programme)->tariff;
    }

    for (const auto& c : sc.customers) {
        for (const auto& d : c.devices) devices_->register_device(c.id, d);
        CustomerSite site;
        site.customer_id = c.id;
        site.devices = c.devices;
        site.pv = c.pv;
        site.prefs = c.prefs;
        auto t = tariffs.find(c.id);
        site.tariff = t == tariffs.end() ? sc.default_tariff : t->second;
        site.outdoor = sc.outdoor;
        json devs = json::array();
        for (const auto& d : c.devices) devs.push_back(to_json(d));
        broker_->publish(admin_, "scenario.setup", "Customer", json{{"customer_id", c.id}, {"devices", devs}});
        sites_.emplace(c.id, std::make_unique<Eecs>(std::move(site), grid, broker_.get()));
        signal_feeds_[c.id] = broker_->subscribe(principals_.at(c.id), "signals." + c.id);
    }
}

Eecs& Simulation::site(const CustomerId& c) {
    auto it = sites_.find(c);
    if (it == sites_.end()) throw Error(ErrorKind::NotFound, "unknown customer '" + c + "'");
    return *it->second;
}

const Eecs& Simulation::site(const CustomerId& c) const {
    auto it = sites_.find(c);
    if (it == sites_.end()) throw Error(ErrorKind::NotFound, "unknown customer '" + c + "'");
    return *it->second;
}

std::vector<CustomerId> Simulation::customers() const {
    std::vector<CustomerId> out;
    for (const auto& [id, s] : sites_) out.push_back(id);
    return out;
}

DsmManager& Simulation::manager(const ActorId& id) {
    auto it = managers_.find(id);
    if (it == managers_.end()) throw Error(ErrorKind::NotFound, "unknown manager '" + id + "'");
    return *it->second;
}

const SegmentSpec& Simulation::segment(const SegmentId& seg) const {
    for (const auto& s : scenario_.segments) {
        if (s.id == seg) return s;
    }
    throw Error(ErrorKind::NotFound, "unknown segment '" + seg + "'");
}

Milliwatts Simulation::segment_load(const SegmentId& seg, int slot) const {
    Milliwatts sum = 0;
    for (const auto& c : segment(seg).members) {
        const auto& s = site(c);
        sum += s.schedule().total(slot) - s.site().pv.at(slot);
    }
    return sum;
}

std::vector<CustomerId> Simulation::scope_members(const std::string& scope) const {
    for (const auto& s : scenario_.segments) {
        if (s.id == scope) return s.members;
    }
    for (const auto& p : scenario_.portfolios) {
        if (p.id == scope) return p.members;
    }
    return {};
}

PowerProfile Simulation::query_flexibility(const CustomerId& c, int first, int last, Direction dir) const {
    return site(c).query_flexibility(first, last, dir);
}

std::optional<SignalResponse> Simulation::signal_response(const CustomerId& c, const SignalId& id) const {
    return site(c).response(id);
}

std::optional<Milliwatts> Simulation::metered_load(const CustomerId& c, int slot) const {
    auto r = site(c).reading(slot);
    if (!r) return std::nullopt;
    return r->net + r->pv;
}

void Simulation::phase_exogenous() {
    set_clock(Phase::Exogenous);
    for (auto& [id, s] : sites_) s->set_clock(slot_);
    broker_->publish(admin_, "sim.clock", "SlotStarted", json{{"slot", slot_}});
    broker_->publish(admin_, "market.exchange", "ExchangeQuote",
                     json{{"slot", slot_}, {"quote_ct_per_kwh", quotes_[static_cast<std::size_t>(slot_)]}});
    json temps = json::object();
    for (const auto& [name, values] : scenario_.outdoor) temps[name] = values[static_cast<std::size_t>(slot_)];
    broker_->publish(admin_, "env.weather", "Weather", json{{"slot", slot_}, {"outdoor_c", temps}});
}

void Simulation::phase_trigger() {
    set_clock(Phase::Trigger);
    if (!scenario_.dsm_enabled) return;
    const LogicalTime deadline{slot_, Phase::Clearing};
    const int ahead = slot_ + scenario_.trigger_lead_slots;
    // Grid operators watch their segments one lead time ahead (perfect foresight of committed schedules).
    std::vector<const SegmentSpec*> segs;
    for (const auto& s : scenario_.segments) segs.push_back(&s);
    std::sort(segs.begin(), segs.end(), [](const SegmentSpec* a, const SegmentSpec* b) { return a->id < b->id; });
    if (ahead < grid().horizon_slots) {
        for (const auto* seg : segs) {
            if (seg->operator_id.empty()) continue;
            const Milliwatts load = segment_load(seg->id, ahead);
            if (load <= seg->capacity) continue;
            ShiftRequest r;
            r.direction = Direction::Decrease;
            r.scope = seg->id;
            r.target = PowerProfile(grid(), ahead, {load - seg->capacity});
            r.bid_deadline = deadline;
            b2b_->submit_request(principals_.at(seg->operator_id), r);
        }
    }
    std::vector<const RetailerSpec*> retailers;
    for (const auto& r : scenario_.retailers) retailers.push_back(&r);
    std::sort(retailers.begin(), retailers.end(),
              [](const RetailerSpec* a, const RetailerSpec* b) { return a->id < b->id; });
    for (const auto* ret : retailers) {
        for (const auto& trig : scenario_.triggers) {
            if (trig.retailer != ret->id || trig.at_slot != slot_) continue;
            ShiftRequest r;
            r.direction = trig.direction;
            r.scope = trig.scope;
            r.target = trig.target;
            r.bid_deadline = deadline;
            r.budget_cap = trig.budget_cap;
            b2b_->submit_request(principals_.at(ret->id), r);
        }
        if (!ret->shortage) continue;
        const auto& cfg = *ret->shortage;
        if (draw(rng_, 1'000'000) >= static_cast<std::uint64_t>(cfg.probability_ppm)) continue;
        const int kw = cfg.min_kw + static_cast<int>(draw(rng_, static_cast<std::uint64_t>(cfg.max_kw - cfg.min_kw + 1)));
        const int len =
            cfg.min_slots + static_cast<int>(draw(rng_, static_cast<std::uint64_t>(cfg.max_slots - cfg.min_slots + 1)));
        const int first = std::max(ahead, slot_ + 1);
        if (first + len > grid().horizon_slots) continue;
        std::string scope;
        for (const auto& p : scenario_.portfolios) {
            if (p.retailer == ret->id) {
                scope = p.id;
                break;
            }
        }
        ShiftRequest r;
        r.direction = cfg.direction;
        r.scope = scope;
        r.target = PowerProfile(grid(), first, std::vector<Milliwatts>(static_cast<std::size_t>(len), kw_to_mw(kw)));
        r.bid_deadline = deadline;
        r.budget_cap = cfg.budget_cap;
        b2b_->submit_request(principals_.at(ret->id), r);
    }
}

void Simulation::phase_bidding() {
    set_clock(Phase::Bidding);
    for (auto& [id, mgr] : managers_) {
        for (const auto& r : mgr->poll_requests()) {
            try {
                mgr->bid(r);
            } catch (const Error& e) {
                warn(mgr->principal(), "OfferFailed",
                     json{{"request_id", r.request_id}, {"reason", std::string(e.what())}});
            }
        }
    }
}

void Simulation::phase_clearing() {
    set_clock(Phase::Clearing);
    decided_this_slot_.clear();
    for (const auto& id : b2b_->due_for_clearing(broker_->clock())) {
        b2b_->clear_request(id);
        b2b_->decide_acceptance(id, quotes_);
        decided_this_slot_.push_back(id);
    }
}

void Simulation::phase_dispatch() {
    set_clock(Phase::Dispatch);
    for (const auto& id : decided_this_slot_) {
        auto d = b2b_->decision(id);
        if (!d || d->outcome != RequestState::AcceptedOffers) continue;
        for (const auto& offer : b2b_->accepted_offers(id)) {
            try {
                manager(offer.manager_id).dispatch_signals(id, offer);
            } catch (const Error& e) {
                // Offers placed by hand through the API carry no site allocation.
                warn(admin_, "DispatchFailed", json{{"offer_id", offer.offer_id}, {"reason", std::string(e.what())}});
            }
        }
        b2b_->mark_dispatched(id);
    }
}

void Simulation::phase_scheduling() {
    set_clock(Phase::Scheduling);
    arrived_this_slot_.clear();
    for (auto& [c, feed] : signal_feeds_) {
        for (const auto& e : broker_->poll(feed)) {
            if (e.type != "DsmSignal") continue;
            const auto sig = signal_from_json(e.payload, grid());
            if (!b2c_->may_signal(sig.manager_id, c)) {
                warn(principals_.at(c), "SignalRejected",
                     json{{"signal_id", sig.signal_id}, {"customer_id", c}, {"reason", "no active subscription"}});
                continue;
            }
            site(c).receive_signal(sig);
            arrived_this_slot_.emplace_back(c, sig.signal_id);
        }
    }
}

void Simulation::phase_scripted_overrides() {
    set_clock(Phase::Override);
    auto matches = [](const OverrideSpec& o, const CustomerId& c) { return o.customer == "*" || o.customer == c; };
    for (const auto& o : scenario_.overrides) {
        if (!o.on_arrival) continue;
        for (const auto& [c, sig] : arrived_this_slot_) {
            if (matches(o, c)) site(c).override_signal(principals_.at(c), sig);
        }
    }
    for (const auto& o : scenario_.overrides) {
        if (!o.at_slot || *o.at_slot != slot_) continue;
        for (auto& [c, s] : sites_) {
            if (!matches(o, c)) continue;
            for (const auto& r : s->responses()) {
                if (r.status == SignalStatus::Overridden) continue;
                auto sig = s->signal(r.signal_id);
                if (sig->requested.end_slot() <= s->now()) continue;
                s->override_signal(principals_.at(c), r.signal_id);
            }
        }
    }
}

void Simulation::phase_apply_pending() {
    set_clock(Phase::Override);
    for (auto& [c, s] : sites_) {
        for (const auto& id : s->pending_signals()) s->apply_pending(id);
    }
}

void Simulation::phase_metering() {
    set_clock(Phase::Metering);
    for (auto& [c, s] : sites_) s->meter_slot(slot_);
}

void Simulation::phase_settlement() {
    set_clock(Phase::Settlement);
    for (const auto& r : b2b_->requests()) {
        if (r.state != RequestState::Dispatched || r.target.end_slot() - 1 > slot_) continue;
        std::map<ActorId, PowerProfile> delivered;
        std::map<SignalId, Energy> per_signal;
        std::set<ActorId> winners;
        for (const auto& o : b2b_->accepted_offers(r.request_id)) winners.insert(o.manager_id);
        for (const auto& m : winners) {
            auto rep = manager(m).report_fulfillment(r.request_id);
            delivered[m] = rep.delivered;
            per_signal.insert(rep.per_signal.begin(), rep.per_signal.end());
        }
        b2b_->settle_request(r.request_id, delivered);
        for (const auto& [sig, energy] : per_signal) b2c_->credit_incentive(sig, energy);
    }
}

void Simulation::step_slot() {
    {
        auto guard = lock();
        if (finished_ || slot_ >= grid().horizon_slots) return;
        phase_exogenous();
        phase_trigger();
        phase_bidding();
        phase_clearing();
        phase_dispatch();
        phase_scheduling();
        phase_scripted_overrides();
        paused_ = gate_ != nullptr;
    }
    if (gate_) gate_->wait(*this, slot_);
    auto guard = lock();
    paused_ = false;
    phase_apply_pending();
    phase_metering();
    phase_settlement();
    ++slot_;
}

void Simulation::run() {
    while (slot_ < grid().horizon_slots) step_slot();
    auto guard = lock();
    if (finished_) return;
    broker_->set_clock({grid().horizon_slots, Phase::Setup});
    broker_->publish(admin_, "sim.clock", "RunCompleted",
                     json{{"run_id", run_id_}, {"event_count", broker_->size()}});
    finished_ = true;
}

Metrics Simulation::metrics() const { return compute_metrics(broker_->ordered_log()); }

}  // namespace dsm
