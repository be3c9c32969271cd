#include "dsm/platform.hpp"

#include <algorithm>
#include <sstream>

namespace dsm {

namespace {
constexpr std::string_view kRoleNames[] = {"Customer", "DsmManager", "Retailer", "GridOperator", "Admin"};
}

std::string_view to_string(Role r) { return kRoleNames[static_cast<int>(r)]; }

Role role_from_string(std::string_view s) {
    for (int i = 0; i < 5; ++i) {
        if (kRoleNames[i] == s) return static_cast<Role>(i);
    }
    throw Error(ErrorKind::Validation, "role: unknown role '" + std::string(s) + "'");
}

void IdentityRegistry::register_principal(const Principal& p) {
    std::lock_guard lock(mutex_);
    if (p.actor_id.empty()) throw Error(ErrorKind::Validation, "principal.actor_id: must not be empty");
    if (p.token.empty()) throw Error(ErrorKind::Validation, "principal '" + p.actor_id + "'.token: must not be empty");
    if (by_actor_.count(p.actor_id)) throw Error(ErrorKind::Conflict, "principal '" + p.actor_id + "' already registered");
    if (by_token_.count(p.token)) throw Error(ErrorKind::Conflict, "principal '" + p.actor_id + "'.token: already in use");
    by_token_.emplace(p.token, p.actor_id);
    by_actor_.emplace(p.actor_id, p);
}

Principal IdentityRegistry::authenticate(std::string_view token) const {
    std::lock_guard lock(mutex_);
    auto it = token.empty() ? by_token_.end() : by_token_.find(token);
    if (it == by_token_.end()) throw Error(ErrorKind::Authentication, "authentication failed");
    return by_actor_.at(it->second);
}

std::optional<Principal> IdentityRegistry::find(const ActorId& id) const {
    std::lock_guard lock(mutex_);
    auto it = by_actor_.find(id);
    if (it == by_actor_.end()) return std::nullopt;
    return it->second;
}

bool IdentityRegistry::is_customer(const ActorId& id) const {
    auto p = find(id);
    return p && p->role == Role::Customer;
}

std::vector<Principal> IdentityRegistry::all() const {
    std::lock_guard lock(mutex_);
    std::vector<Principal> out;
    for (const auto& [id, p] : by_actor_) out.push_back(p);
    return out;
}

TopicName parse_topic(std::string_view name) {
    struct Fixed {
        std::string_view name;
        TopicKind kind;
    };
    static constexpr Fixed fixed[] = {
        {"market.programmes", TopicKind::MarketProgrammes}, {"market.clearings", TopicKind::MarketClearings},
        {"market.settlements", TopicKind::MarketSettlements}, {"market.exchange", TopicKind::MarketExchange},
        {"env.weather", TopicKind::Weather}, {"sim.clock", TopicKind::SimClock},
        {"system.warnings", TopicKind::Warnings}, {"scenario.setup", TopicKind::ScenarioSetup},
    };
    for (const auto& f : fixed) {
        if (f.name == name) return {f.kind, ""};
    }
    struct Family {
        std::string_view prefix;
        TopicKind kind;
    };
    static constexpr Family families[] = {
        {"requests.", TopicKind::Requests}, {"offers.", TopicKind::Offers},
        {"signals.", TopicKind::Signals}, {"responses.", TopicKind::Responses},
        {"telemetry.", TopicKind::Telemetry}, {"contracts.", TopicKind::Contracts},
        {"credits.", TopicKind::Credits},
    };
    for (const auto& f : families) {
        if (name.size() > f.prefix.size() && name.substr(0, f.prefix.size()) == f.prefix) {
            auto q = name.substr(f.prefix.size());
            if (q.find_first_of(" \t\n") == std::string_view::npos) return {f.kind, std::string(q)};
        }
    }
    throw Error(ErrorKind::Topic, "unknown topic '" + std::string(name) + "'");
}

bool authorize(const Principal& p, std::string_view topic, Action action) {
    TopicName t;
    try {
        t = parse_topic(topic);
    } catch (const Error&) {
        return false;
    }
    const Role r = p.role;
    const bool admin = r == Role::Admin;
    const bool pub = action == Action::Publish;
    const bool own = t.qualifier == p.actor_id;
    switch (t.kind) {
    case TopicKind::Requests:
        return pub ? (r == Role::Retailer || r == Role::GridOperator || admin) : (r == Role::DsmManager || admin);
    case TopicKind::Offers:
        return pub ? r == Role::DsmManager : admin;
    case TopicKind::Signals:
        return pub ? (r == Role::DsmManager || admin) : ((r == Role::Customer && own) || admin);
    case TopicKind::Responses:
        return pub ? ((r == Role::Customer && own) || admin)
                   : ((r == Role::Customer && own) || r == Role::DsmManager || admin);
    case TopicKind::Telemetry:
        return pub ? ((r == Role::Customer && own) || admin)
                   : ((r == Role::Customer && own) || r == Role::DsmManager || r == Role::GridOperator || admin);
    case TopicKind::Contracts:
        return pub ? (r == Role::Customer || admin) : ((r == Role::DsmManager && own) || admin);
    case TopicKind::Credits:
        return pub ? admin : ((r == Role::Customer && own) || admin);
    case TopicKind::MarketProgrammes:
        return pub ? (r == Role::DsmManager || admin) : true;
    case TopicKind::MarketClearings:
    case TopicKind::MarketSettlements:
        return pub ? admin : r != Role::Customer;
    case TopicKind::MarketExchange:
    case TopicKind::Weather:
    case TopicKind::SimClock:
        return pub ? admin : true;
    case TopicKind::Warnings:
        return pub ? true : admin;
    case TopicKind::ScenarioSetup:
        return admin;
    }
    return false;
}

nlohmann::ordered_json to_json(const Event& e) {
    nlohmann::ordered_json j;
    j["topic"] = e.topic;
    j["seq"] = e.seq;
    j["t_slot"] = e.time.slot;
    j["phase"] = std::string(to_string(e.time.phase));
    j["publisher"] = e.publisher;
    j["type"] = e.type;
    j["payload"] = e.payload;
    return j;
}

Event event_from_json(const json& j) {
    Event e;
    e.topic = j.at("topic").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.time = {j.at("t_slot").get<int>(), phase_from_string(j.at("phase").get<std::string>())};
    e.publisher = j.at("publisher").get<std::string>();
    e.type = j.at("type").get<std::string>();
    e.payload = j.at("payload");
    return e;
}

bool log_order_less(const Event& a, const Event& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.topic != b.topic) return a.topic < b.topic;
    return a.seq < b.seq;
}

void Broker::set_clock(LogicalTime t) {
    std::lock_guard lock(mutex_);
    clock_ = t;
}

LogicalTime Broker::clock() const {
    std::lock_guard lock(mutex_);
    return clock_;
}

std::uint64_t Broker::publish(const Principal& p, const std::string& topic, const std::string& type, json payload) {
    parse_topic(topic);
    if (!authorize(p, topic, Action::Publish)) {
        throw Error(ErrorKind::Access, "'" + p.actor_id + "' may not publish on " + topic);
    }
    std::lock_guard lock(mutex_);
    auto& events = topics_[topic];
    Event e{topic, events.size() + 1, clock_, p.actor_id, type, std::move(payload)};
    events.push_back(e);
    global_.push_back(std::move(e));
    return events.size();
}

SubscriptionHandle Broker::subscribe(const Principal& p, const std::string& topic) {
    parse_topic(topic);
    if (!authorize(p, topic, Action::Subscribe)) {
        throw Error(ErrorKind::Access, "'" + p.actor_id + "' may not subscribe to " + topic);
    }
    std::lock_guard lock(mutex_);
    const auto id = next_subscription_++;
    subscriptions_[id] = Subscription{topic, topics_[topic].size()};
    return {id};
}

std::vector<Event> Broker::poll(SubscriptionHandle h) {
    std::lock_guard lock(mutex_);
    auto it = subscriptions_.find(h.id);
    if (it == subscriptions_.end()) throw Error(ErrorKind::NotFound, "unknown subscription");
    auto& sub = it->second;
    const auto& events = topics_[sub.topic];
    std::vector<Event> out(events.begin() + static_cast<std::ptrdiff_t>(sub.next), events.end());
    sub.next = events.size();
    return out;
}

std::vector<Event> Broker::read_from(std::size_t cursor) const {
    std::lock_guard lock(mutex_);
    if (cursor >= global_.size()) return {};
    return {global_.begin() + static_cast<std::ptrdiff_t>(cursor), global_.end()};
}

std::size_t Broker::size() const {
    std::lock_guard lock(mutex_);
    return global_.size();
}

std::vector<Event> Broker::ordered_log() const {
    std::vector<Event> out;
    {
        std::lock_guard lock(mutex_);
        out = global_;
    }
    std::stable_sort(out.begin(), out.end(), log_order_less);
    return out;
}

std::string export_jsonl(const std::vector<Event>& ordered) {
    std::string out;
    for (const auto& e : ordered) {
        out += to_json(e).dump();
        out += '\n';
    }
    return out;
}

std::vector<Event> parse_jsonl(const std::string& text) {
    std::vector<Event> out;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(event_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Validation, "event log line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void RunStore::add(std::shared_ptr<const Broker> broker) {
    std::lock_guard lock(mutex_);
    runs_[broker->run_id()] = std::move(broker);
}

std::string RunStore::export_log(const std::string& run_id) const {
    std::shared_ptr<const Broker> b;
    {
        std::lock_guard lock(mutex_);
        auto it = runs_.find(run_id);
        if (it == runs_.end()) throw Error(ErrorKind::NotFound, "unknown run '" + run_id + "'");
        b = it->second;
    }
    return export_jsonl(b->ordered_log());
}

DeviceRecord DeviceRegistry::register_device(const CustomerId& owner, const Device& descriptor) {
    if (!identities_.is_customer(owner)) throw Error(ErrorKind::NotFound, "unknown customer '" + owner + "'");
    validate_device(descriptor, grid_);
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(owner, descriptor.device_id);
    if (records_.count(key)) {
        throw Error(ErrorKind::Conflict, "device '" + descriptor.device_id + "' already registered for " + owner);
    }
    DeviceRecord rec{descriptor.device_id, owner, descriptor};
    records_.emplace(key, rec);
    return rec;
}

std::vector<DeviceRecord> DeviceRegistry::devices_of(const CustomerId& owner) const {
    std::lock_guard lock(mutex_);
    std::vector<DeviceRecord> out;
    for (auto it = records_.lower_bound({owner, ""}); it != records_.end() && it->first.first == owner; ++it) {
        out.push_back(it->second);
    }
    return out;
}

}  // namespace dsm
