#pragma once

// Local stand-ins for the platform enablers: identity and access control,
// a topic-based publish/subscribe broker with a durable ordered log, and a
// device registry.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/devices.hpp"

namespace dsm {

enum class Role { Customer, DsmManager, Retailer, GridOperator, Admin };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct Principal {
    ActorId actor_id;
    Role role = Role::Customer;
    std::string token;
};

class IdentityRegistry {
public:
    void register_principal(const Principal& p);

    // Unknown or empty tokens fail with the same message.
    Principal authenticate(std::string_view token) const;

    std::optional<Principal> find(const ActorId& id) const;
    bool is_customer(const ActorId& id) const;
    std::vector<Principal> all() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, ActorId, std::less<>> by_token_;
    std::map<ActorId, Principal> by_actor_;
};

enum class Action { Publish, Subscribe };

// Topic families. Qualified families carry a suffix after the first dot,
// e.g. signals.c1 or requests.seg1.
enum class TopicKind {
    Requests,           // requests.<scope>
    Offers,             // offers.<request>
    Signals,            // signals.<customer>
    Responses,          // responses.<customer>
    Telemetry,          // telemetry.<customer>
    Contracts,          // contracts.<manager>
    Credits,            // credits.<customer>
    MarketProgrammes,   // market.programmes
    MarketClearings,    // market.clearings
    MarketSettlements,  // market.settlements
    MarketExchange,     // market.exchange
    Weather,            // env.weather
    SimClock,           // sim.clock
    Warnings,           // system.warnings
    ScenarioSetup,      // scenario.setup
};

struct TopicName {
    TopicKind kind;
    std::string qualifier;
};

// Throws Error(Topic) for names matching no declared pattern.
TopicName parse_topic(std::string_view name);

bool authorize(const Principal& p, std::string_view topic, Action action);

struct Event {
    std::string topic;
    std::uint64_t seq = 0;
    LogicalTime time;
    ActorId publisher;
    std::string type;
    json payload;
};

// Field order: topic, seq, t_slot, phase, publisher, type, payload.
nlohmann::ordered_json to_json(const Event& e);
Event event_from_json(const json& j);

// Canonical log order: (logical time, topic, sequence number).
bool log_order_less(const Event& a, const Event& b);

struct SubscriptionHandle {
    std::uint64_t id = 0;
};

class Broker {
public:
    explicit Broker(std::string run_id = "run") : run_id_(std::move(run_id)) {}

    const std::string& run_id() const { return run_id_; }

    void set_clock(LogicalTime t);
    LogicalTime clock() const;

    std::uint64_t publish(const Principal& p, const std::string& topic, const std::string& type, json payload);

    SubscriptionHandle subscribe(const Principal& p, const std::string& topic);
    std::vector<Event> poll(SubscriptionHandle h);

    // Events in global append order, starting at `cursor`.
    std::vector<Event> read_from(std::size_t cursor) const;
    std::size_t size() const;

    // All events in canonical log order.
    std::vector<Event> ordered_log() const;

private:
    struct Subscription {
        std::string topic;
        std::size_t next = 0;  // index into the topic's event list
    };

    std::string run_id_;
    mutable std::mutex mutex_;
    LogicalTime clock_{};
    std::map<std::string, std::vector<Event>> topics_;
    std::vector<Event> global_;
    std::map<std::uint64_t, Subscription> subscriptions_;
    std::uint64_t next_subscription_ = 1;
};

// JSON-lines export, one event per line.
std::string export_jsonl(const std::vector<Event>& ordered);
std::vector<Event> parse_jsonl(const std::string& text);

class RunStore {
public:
    void add(std::shared_ptr<const Broker> broker);
    std::string export_log(const std::string& run_id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const Broker>> runs_;
};

struct DeviceRecord {
    std::string device_id;
    CustomerId customer_id;
    Device device;
};

class DeviceRegistry {
public:
    DeviceRegistry(const IdentityRegistry& identities, TimeGrid grid) : identities_(identities), grid_(grid) {}

    DeviceRecord register_device(const CustomerId& owner, const Device& descriptor);
    std::vector<DeviceRecord> devices_of(const CustomerId& owner) const;

private:
    const IdentityRegistry& identities_;
    TimeGrid grid_;
    mutable std::mutex mutex_;
    std::map<std::pair<CustomerId, std::string>, DeviceRecord> records_;
};

}  // namespace dsm
