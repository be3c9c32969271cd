#include "dsm/b2c_market.hpp"

#include <cstdio>

namespace dsm {

json to_json(const Programme& p) {
    return json{{"programme_id", p.programme_id},
                {"manager_id", p.manager_id},
                {"tariff", to_json(p.tariff)},
                {"incentive_rate_ct_per_kwh", p.incentive_rate},
                {"max_signals_per_day", p.max_signals_per_day},
                {"description", p.description}};
}

Programme programme_from_json(const json& j, const TimeGrid& grid) {
    Programme p;
    p.programme_id = j.at("programme_id").get<std::string>();
    p.manager_id = j.value("manager_id", std::string());
    p.tariff = j.contains("tariff") ? tariff_from_json(j.at("tariff"), grid) : Tariff{};
    p.incentive_rate = j.at("incentive_rate_ct_per_kwh").get<CentsPerKwh>();
    p.max_signals_per_day = j.value("max_signals_per_day", 4);
    p.description = j.value("description", std::string());
    return p;
}

namespace {
std::string_view to_string(SubscriptionStatus s) { return s == SubscriptionStatus::Active ? "Active" : "Cancelled"; }
}

json to_json(const Subscription& s) {
    json j{{"subscription_id", s.subscription_id},
           {"customer_id", s.customer_id},
           {"programme_id", s.programme_id},
           {"manager_id", s.manager_id},
           {"start_slot", s.start_slot},
           {"status", std::string(to_string(s.status))}};
    j["cancelled_at"] = s.cancelled_at ? json(*s.cancelled_at) : json(nullptr);
    return j;
}

json to_json(const CreditLedgerEntry& e) {
    return json{{"customer_id", e.customer_id},
                {"signal_id", e.signal_id},
                {"request_id", e.request_id},
                {"delivered_kwh", e.delivered.kwh()},
                {"delivered_mw_minutes", e.delivered.mw_minutes},
                {"incentive_rate_ct_per_kwh", e.incentive_rate},
                {"credit_cents", e.credit.cents}};
}

ProgrammeId B2cMarket::publish_programme(const Principal& manager, Programme p) {
    if (manager.role != Role::DsmManager) {
        throw Error(ErrorKind::Access, "only demand-side managers may publish programmes");
    }
    if (p.incentive_rate < 0) throw Error(ErrorKind::Validation, "programme.incentive_rate: must be non-negative");
    if (p.max_signals_per_day < 0) throw Error(ErrorKind::Validation, "programme.max_signals_per_day: must be non-negative");
    if (p.tariff.flat < 0) throw Error(ErrorKind::Validation, "programme.tariff: prices must be non-negative");
    for (auto v : p.tariff.per_slot) {
        if (v < 0) throw Error(ErrorKind::Validation, "programme.tariff: prices must be non-negative");
    }
    p.manager_id = manager.actor_id;
    {
        std::lock_guard lock(mutex_);
        if (p.programme_id.empty()) {
            p.programme_id = "prog-" + manager.actor_id + "-" + std::to_string(programmes_.size() + 1);
        }
        if (programmes_.count(p.programme_id)) {
            throw Error(ErrorKind::Conflict, "programme '" + p.programme_id + "' already exists");
        }
        programmes_.emplace(p.programme_id, p);
    }
    broker_.publish(manager, "market.programmes", "Programme", to_json(p));
    return p.programme_id;
}

std::vector<Programme> B2cMarket::list_programmes() const {
    std::lock_guard lock(mutex_);
    std::vector<Programme> out;
    for (const auto& [id, p] : programmes_) out.push_back(p);
    return out;
}

std::optional<Programme> B2cMarket::find_programme(const ProgrammeId& id) const {
    std::lock_guard lock(mutex_);
    auto it = programmes_.find(id);
    if (it == programmes_.end()) return std::nullopt;
    return it->second;
}

Subscription B2cMarket::subscribe(const Principal& customer, const ProgrammeId& programme_id) {
    if (customer.role != Role::Customer) throw Error(ErrorKind::Access, "only customers may subscribe");
    Subscription s;
    {
        std::lock_guard lock(mutex_);
        auto prog = programmes_.find(programme_id);
        if (prog == programmes_.end()) throw Error(ErrorKind::NotFound, "unknown programme '" + programme_id + "'");
        for (const auto& [id, existing] : subscriptions_) {
            if (existing.customer_id == customer.actor_id && existing.status == SubscriptionStatus::Active) {
                throw Error(ErrorKind::Conflict, "customer already has an active subscription (" + id + ")");
            }
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "sub-%04d", next_subscription_++);
        s.subscription_id = buf;
        s.customer_id = customer.actor_id;
        s.programme_id = programme_id;
        s.manager_id = prog->second.manager_id;
        s.start_slot = broker_.clock().slot;
        subscriptions_.emplace(s.subscription_id, s);
    }
    broker_.publish(customer, "contracts." + s.manager_id, "Subscription", to_json(s));
    return s;
}

Subscription B2cMarket::unsubscribe(const Principal& customer, const std::string& subscription_id) {
    Subscription s;
    {
        std::lock_guard lock(mutex_);
        auto it = subscriptions_.find(subscription_id);
        if (it == subscriptions_.end()) throw Error(ErrorKind::NotFound, "unknown subscription '" + subscription_id + "'");
        if (customer.role != Role::Admin && it->second.customer_id != customer.actor_id) {
            throw Error(ErrorKind::Access, "subscription '" + subscription_id + "' belongs to another customer");
        }
        if (it->second.status == SubscriptionStatus::Cancelled) return it->second;
        it->second.status = SubscriptionStatus::Cancelled;
        it->second.cancelled_at = broker_.clock().slot;
        s = it->second;
    }
    broker_.publish(customer, "contracts." + s.manager_id, "Subscription", to_json(s));
    return s;
}

std::optional<Subscription> B2cMarket::active_subscription(const CustomerId& customer) const {
    std::lock_guard lock(mutex_);
    for (const auto& [id, s] : subscriptions_) {
        if (s.customer_id == customer && s.status == SubscriptionStatus::Active) return s;
    }
    return std::nullopt;
}

std::vector<Subscription> B2cMarket::subscriptions_of(const CustomerId& customer) const {
    std::lock_guard lock(mutex_);
    std::vector<Subscription> out;
    for (const auto& [id, s] : subscriptions_) {
        if (s.customer_id == customer) out.push_back(s);
    }
    return out;
}

std::vector<CustomerId> B2cMarket::subscribers_of(const ActorId& manager) const {
    std::lock_guard lock(mutex_);
    std::vector<CustomerId> out;
    for (const auto& [id, s] : subscriptions_) {
        if (s.manager_id == manager && s.status == SubscriptionStatus::Active) out.push_back(s.customer_id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool B2cMarket::may_signal(const ActorId& manager, const CustomerId& customer) const {
    auto s = active_subscription(customer);
    return s && s->manager_id == manager;
}

void B2cMarket::register_signal(const SignalTerms& terms) {
    std::lock_guard lock(mutex_);
    if (signals_.count(terms.signal_id)) throw Error(ErrorKind::Duplicate, "signal '" + terms.signal_id + "' already registered");
    signals_.emplace(terms.signal_id, terms);
}

std::optional<SignalTerms> B2cMarket::signal_terms(const SignalId& id) const {
    std::lock_guard lock(mutex_);
    auto it = signals_.find(id);
    if (it == signals_.end()) return std::nullopt;
    return it->second;
}

CreditLedgerEntry B2cMarket::credit_incentive(const SignalId& signal_id, Energy delivered) {
    if (delivered.mw_minutes < 0) throw Error(ErrorKind::Validation, "delivered energy must be non-negative");
    CreditLedgerEntry e;
    {
        std::lock_guard lock(mutex_);
        auto it = signals_.find(signal_id);
        if (it == signals_.end()) throw Error(ErrorKind::NotFound, "unknown signal '" + signal_id + "'");
        if (credited_.count(signal_id)) throw Error(ErrorKind::Duplicate, "signal '" + signal_id + "' already settled");
        e.customer_id = it->second.customer_id;
        e.signal_id = signal_id;
        e.request_id = it->second.request_id;
        e.delivered = delivered;
        e.incentive_rate = it->second.incentive_rate;
        e.credit = cost_of(e.incentive_rate, delivered);
        credited_.emplace(signal_id, ledger_.size());
        ledger_.push_back(e);
        balances_[e.customer_id] += e.credit;
    }
    broker_.publish(marketplace_, "credits." + e.customer_id, "CreditLedgerEntry", to_json(e));
    return e;
}

Money B2cMarket::balance(const CustomerId& customer) const {
    std::lock_guard lock(mutex_);
    auto it = balances_.find(customer);
    return it == balances_.end() ? Money{} : it->second;
}

std::vector<CreditLedgerEntry> B2cMarket::ledger() const {
    std::lock_guard lock(mutex_);
    return ledger_;
}

}  // namespace dsm
