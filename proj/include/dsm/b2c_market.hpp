#pragma once

// Programme catalogue, customer contracts and incentive crediting.

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/platform.hpp"

namespace dsm {

struct Programme {
    ProgrammeId programme_id;
    ActorId manager_id;
    Tariff tariff;
    CentsPerKwh incentive_rate = 0;
    int max_signals_per_day = 4;
    std::string description;
};

json to_json(const Programme& p);
Programme programme_from_json(const json& j, const TimeGrid& grid);

enum class SubscriptionStatus { Active, Cancelled };

struct Subscription {
    std::string subscription_id;
    CustomerId customer_id;
    ProgrammeId programme_id;
    ActorId manager_id;
    int start_slot = 0;
    SubscriptionStatus status = SubscriptionStatus::Active;
    std::optional<int> cancelled_at;
};

json to_json(const Subscription& s);

struct CreditLedgerEntry {
    CustomerId customer_id;
    SignalId signal_id;
    RequestId request_id;
    Energy delivered;
    CentsPerKwh incentive_rate = 0;
    Money credit;
};

json to_json(const CreditLedgerEntry& e);

// What the marketplace needs to know about a dispatched signal to settle it.
struct SignalTerms {
    SignalId signal_id;
    RequestId request_id;
    ActorId manager_id;
    CustomerId customer_id;
    CentsPerKwh incentive_rate = 0;
};

class B2cMarket {
public:
    B2cMarket(Broker& broker, Principal marketplace) : broker_(broker), marketplace_(std::move(marketplace)) {}

    ProgrammeId publish_programme(const Principal& manager, Programme p);
    std::vector<Programme> list_programmes() const;
    std::optional<Programme> find_programme(const ProgrammeId& id) const;

    Subscription subscribe(const Principal& customer, const ProgrammeId& programme_id);
    Subscription unsubscribe(const Principal& customer, const std::string& subscription_id);

    std::optional<Subscription> active_subscription(const CustomerId& customer) const;
    std::vector<Subscription> subscriptions_of(const CustomerId& customer) const;
    // Customers with an Active subscription to any of the manager's programmes, ascending.
    std::vector<CustomerId> subscribers_of(const ActorId& manager) const;
    bool may_signal(const ActorId& manager, const CustomerId& customer) const;

    void register_signal(const SignalTerms& terms);
    std::optional<SignalTerms> signal_terms(const SignalId& id) const;

    // credit = rate x delivered, half-to-even to cents; once per signal.
    CreditLedgerEntry credit_incentive(const SignalId& signal_id, Energy delivered);

    Money balance(const CustomerId& customer) const;
    std::vector<CreditLedgerEntry> ledger() const;

private:
    Broker& broker_;
    Principal marketplace_;
    mutable std::mutex mutex_;
    std::map<ProgrammeId, Programme> programmes_;
    std::map<std::string, Subscription> subscriptions_;
    std::map<SignalId, SignalTerms> signals_;
    std::map<SignalId, std::size_t> credited_;
    std::vector<CreditLedgerEntry> ledger_;
    std::map<CustomerId, Money> balances_;
    int next_subscription_ = 1;
};

}  // namespace dsm
