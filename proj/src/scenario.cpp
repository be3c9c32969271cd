#include "dsm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dsm {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw Error(ErrorKind::Validation, field + ": " + why);
}

std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

template <class T>
T get(const json& j, const char* key, const std::string& field) {
    if (!j.contains(key)) fail(field + "." + key, "missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(field + "." + key, "wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& field) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return get<T>(j, key, field);
}

std::optional<Money> money_or_null(const json& j, const char* key, const std::string& field) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const auto v = get<std::int64_t>(j, key, field);
    if (v < 0) fail(field + "." + key, "must be non-negative");
    return Money{v};
}

// A number is a constant series; an array must cover the horizon.
std::vector<double> series(const json& j, const std::string& field, int horizon) {
    if (j.is_number()) return std::vector<double>(static_cast<std::size_t>(horizon), j.get<double>());
    if (!j.is_array()) fail(field, "expected a number or an array");
    if (static_cast<int>(j.size()) < horizon) {
        fail(field, "series shorter than the horizon (" + std::to_string(j.size()) + " < " + std::to_string(horizon) + ")");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail(at(field, i), "expected a number");
        out.push_back(j[i].get<double>());
    }
    return out;
}

template <class F>
auto guarded(const std::string& field, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Validation) throw;
        throw Error(ErrorKind::Validation, field + ": " + e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, field + ": " + e.what());
    }
}

std::vector<std::string> id_list(const json& j, const char* key, const std::string& field) {
    if (!j.contains(key)) fail(field + "." + key, "missing");
    if (!j.at(key).is_array()) fail(field + "." + key, "expected an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.at(key).size(); ++i) {
        const auto& v = j.at(key)[i];
        if (!v.is_string()) fail(at(field + "." + key, i), "expected a string");
        out.push_back(v.get<std::string>());
    }
    return out;
}

const json& array_or_empty(const json& j, const char* key) {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_array()) fail(key, "expected an array");
    return j.at(key);
}

}  // namespace

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) fail("scenario", "expected an object");
    Scenario s;
    s.name = get_or<std::string>(j, "name", "scenario", "scenario");
    if (j.contains("time_grid")) s.grid = guarded("time_grid", [&] { return time_grid_from_json(j.at("time_grid")); });
    const int H = s.grid.horizon_slots;
    s.seed = get_or<std::uint64_t>(j, "seed", 0, "scenario");
    s.exact_threshold = get_or<std::size_t>(j, "exact_threshold", 24, "scenario");
    s.trigger_lead_slots = get_or<int>(j, "trigger_lead_slots", 4, "scenario");
    if (s.trigger_lead_slots < 0) fail("trigger_lead_slots", "must be non-negative");
    s.dsm_enabled = get_or<bool>(j, "dsm_enabled", true, "scenario");
    s.admin_token = get_or<std::string>(j, "admin_token", "admin-token", "scenario");
    if (j.contains("default_tariff")) {
        s.default_tariff = guarded("default_tariff", [&] { return tariff_from_json(j.at("default_tariff"), s.grid); });
    }

    std::set<std::string> actor_ids;
    std::set<std::string> tokens{s.admin_token};
    auto claim = [&](const std::string& id, const std::string& token, const std::string& field) {
        if (id.empty()) fail(field + ".id", "must not be empty");
        if (!actor_ids.insert(id).second) fail(field + ".id", "duplicate actor id '" + id + "'");
        if (token.empty()) fail(field + ".token", "must not be empty");
        if (!tokens.insert(token).second) fail(field + ".token", "duplicate token");
    };

    const json actors = j.contains("actors") ? j.at("actors") : json::object();
    {
        const auto& arr = array_or_empty(actors, "grid_operators");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("actors.grid_operators", i);
            ActorSpec a{get<std::string>(arr[i], "id", f), get<std::string>(arr[i], "token", f)};
            claim(a.id, a.token, f);
            s.grid_operators.push_back(a);
        }
    }
    {
        const auto& arr = array_or_empty(actors, "retailers");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("actors.retailers", i);
            RetailerSpec r{get<std::string>(arr[i], "id", f), get<std::string>(arr[i], "token", f), std::nullopt};
            claim(r.id, r.token, f);
            if (arr[i].contains("shortage") && !arr[i].at("shortage").is_null()) {
                const auto& sj = arr[i].at("shortage");
                const auto sf = f + ".shortage";
                ShortageConfig c;
                const double prob = get<double>(sj, "probability", sf);
                if (prob < 0.0 || prob > 1.0) fail(sf + ".probability", "must lie within [0, 1]");
                c.probability_ppm = std::llround(prob * 1e6);
                c.min_kw = get<int>(sj, "min_kw", sf);
                c.max_kw = get<int>(sj, "max_kw", sf);
                c.min_slots = get_or<int>(sj, "min_slots", 1, sf);
                c.max_slots = get_or<int>(sj, "max_slots", c.min_slots, sf);
                if (c.min_kw <= 0 || c.max_kw < c.min_kw) fail(sf + ".max_kw", "need 0 < min_kw <= max_kw");
                if (c.min_slots <= 0 || c.max_slots < c.min_slots) fail(sf + ".max_slots", "need 0 < min_slots <= max_slots");
                c.direction = guarded(sf + ".direction", [&] {
                    return direction_from_string(get_or<std::string>(sj, "direction", "Decrease", sf));
                });
                c.budget_cap = money_or_null(sj, "budget_cap_cents", sf);
                r.shortage = c;
            }
            s.retailers.push_back(r);
        }
    }
    std::set<ProgrammeId> programme_ids;
    {
        const auto& arr = array_or_empty(actors, "managers");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("actors.managers", i);
            ManagerSpec m{get<std::string>(arr[i], "id", f), get<std::string>(arr[i], "token", f), {}, {}};
            claim(m.id, m.token, f);
            if (arr[i].contains("policy")) {
                m.policy = guarded(f + ".policy", [&] { return manager_policy_from_json(arr[i].at("policy")); });
            }
            const auto& progs = array_or_empty(arr[i], "programmes");
            for (std::size_t k = 0; k < progs.size(); ++k) {
                const auto pf = at(f + ".programmes", k);
                auto p = guarded(pf, [&] { return programme_from_json(progs[k], s.grid); });
                p.manager_id = m.id;
                if (p.incentive_rate < 0) fail(pf + ".incentive_rate_ct_per_kwh", "must be non-negative");
                if (p.max_signals_per_day < 0) fail(pf + ".max_signals_per_day", "must be non-negative");
                if (!programme_ids.insert(p.programme_id).second) {
                    fail(pf + ".programme_id", "duplicate programme '" + p.programme_id + "'");
                }
                m.programmes.push_back(std::move(p));
            }
            s.managers.push_back(std::move(m));
        }
    }

    const json series_j = j.contains("series") ? j.at("series") : json::object();
    if (series_j.contains("outdoor")) {
        const auto& o = series_j.at("outdoor");
        if (!o.is_object()) fail("series.outdoor", "expected an object of named series");
        for (const auto& [name, values] : o.items()) s.outdoor[name] = series(values, "series.outdoor." + name, H);
    }
    {
        const json q = series_j.contains("exchange_quotes") ? series_j.at("exchange_quotes") : json{{"base_ct", 30}};
        if (!q.contains("base_ct")) fail("series.exchange_quotes.base_ct", "missing");
        for (double v : series(q.at("base_ct"), "series.exchange_quotes.base_ct", H)) {
            if (v < 0) fail("series.exchange_quotes.base_ct", "prices must be non-negative");
            s.quote_base.push_back(std::llround(v));
        }
        s.quote_jitter = get_or<CentsPerKwh>(q, "jitter_ct", 0, "series.exchange_quotes");
        if (s.quote_jitter < 0) fail("series.exchange_quotes.jitter_ct", "must be non-negative");
    }

    std::set<CustomerId> customer_ids;
    {
        const auto& arr = array_or_empty(actors, "customers");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("actors.customers", i);
            CustomerSpec c;
            c.id = get<std::string>(arr[i], "id", f);
            c.token = get<std::string>(arr[i], "token", f);
            claim(c.id, c.token, f);
            customer_ids.insert(c.id);
            const auto& devs = array_or_empty(arr[i], "devices");
            std::set<std::string> dev_ids;
            for (std::size_t k = 0; k < devs.size(); ++k) {
                const auto df = at(f + ".devices", k);
                auto d = guarded(df, [&] { return device_from_json(devs[k], s.grid); });
                if (!dev_ids.insert(d.device_id).second) fail(df + ".id", "duplicate device id '" + d.device_id + "'");
                if (const auto* h = std::get_if<ThermostaticHeater>(&d.spec)) {
                    auto it = s.outdoor.find(h->outdoor_series);
                    if (it == s.outdoor.end()) fail(df + ".outdoor_series", "unknown series '" + h->outdoor_series + "'");
                    // The heater must be able to hold t_min against the coldest hour.
                    const double gain = h->beta * mw_to_kw(h->rated_power) * s.grid.slot_hours();
                    for (int t = 0; t < H; ++t) {
                        const double loss = h->alpha * (h->t_min - it->second[static_cast<std::size_t>(t)]);
                        if (gain + 1e-9 < loss) fail(df + ".rated_power_kw", "cannot hold t_min at slot " + std::to_string(t));
                    }
                }
                c.devices.push_back(std::move(d));
            }
            c.pv = PowerProfile(s.grid);
            if (arr[i].contains("pv_kw") && !arr[i].at("pv_kw").is_null()) {
                const auto values = series(arr[i].at("pv_kw"), f + ".pv_kw", H);
                for (double v : values) {
                    if (v < 0) fail(f + ".pv_kw", "generation must be non-negative");
                }
                c.pv = PowerProfile::from_kw(s.grid, 0, std::vector<double>(values.begin(), values.begin() + H));
            }
            if (arr[i].contains("prefs")) {
                const auto& pj = arr[i].at("prefs");
                c.prefs.comfort_weight = get_or<CentsPerKwh>(pj, "comfort_weight", 1, f + ".prefs");
                c.prefs.auto_accept = get_or<bool>(pj, "auto_accept", true, f + ".prefs");
                if (c.prefs.comfort_weight < 0) fail(f + ".prefs.comfort_weight", "must be non-negative");
            }
            s.customers.push_back(std::move(c));
        }
    }

    {
        const auto& arr = array_or_empty(j, "subscriptions");
        std::set<CustomerId> seen;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("subscriptions", i);
            SubscriptionSpec sub{get<std::string>(arr[i], "customer", f), get<std::string>(arr[i], "programme", f)};
            if (!customer_ids.count(sub.customer)) fail(f + ".customer", "unknown customer '" + sub.customer + "'");
            if (!programme_ids.count(sub.programme)) fail(f + ".programme", "unknown programme '" + sub.programme + "'");
            if (!seen.insert(sub.customer).second) fail(f + ".customer", "customer already subscribed");
            s.subscriptions.push_back(sub);
        }
    }

    std::set<std::string> scopes;
    std::set<ActorId> operator_ids;
    for (const auto& g : s.grid_operators) operator_ids.insert(g.id);
    {
        const auto& arr = array_or_empty(j, "segments");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("segments", i);
            SegmentSpec seg;
            seg.id = get<std::string>(arr[i], "id", f);
            const double cap = get<double>(arr[i], "capacity_kw", f);
            if (cap <= 0) fail(f + ".capacity_kw", "must be positive");
            seg.capacity = kw_to_mw(cap);
            const auto members = id_list(arr[i], "members", f);
            for (std::size_t k = 0; k < members.size(); ++k) {
                if (!customer_ids.count(members[k])) fail(at(f + ".members", k), "unknown customer '" + members[k] + "'");
            }
            seg.members = members;
            std::sort(seg.members.begin(), seg.members.end());
            seg.operator_id = get_or<std::string>(arr[i], "operator", "", f);
            if (seg.operator_id.empty() && !s.grid_operators.empty()) seg.operator_id = s.grid_operators.front().id;
            if (!seg.operator_id.empty() && !operator_ids.count(seg.operator_id)) {
                fail(f + ".operator", "unknown grid operator '" + seg.operator_id + "'");
            }
            if (!scopes.insert(seg.id).second) fail(f + ".id", "duplicate scope '" + seg.id + "'");
            s.segments.push_back(std::move(seg));
        }
    }
    std::set<ActorId> retailer_ids;
    for (const auto& r : s.retailers) retailer_ids.insert(r.id);
    {
        const auto& arr = array_or_empty(j, "portfolios");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("portfolios", i);
            PortfolioSpec p;
            p.id = get<std::string>(arr[i], "id", f);
            p.retailer = get<std::string>(arr[i], "retailer", f);
            if (!retailer_ids.count(p.retailer)) fail(f + ".retailer", "unknown retailer '" + p.retailer + "'");
            const auto members = id_list(arr[i], "members", f);
            for (std::size_t k = 0; k < members.size(); ++k) {
                if (!customer_ids.count(members[k])) fail(at(f + ".members", k), "unknown customer '" + members[k] + "'");
            }
            p.members = members;
            std::sort(p.members.begin(), p.members.end());
            if (!scopes.insert(p.id).second) fail(f + ".id", "duplicate scope '" + p.id + "'");
            s.portfolios.push_back(std::move(p));
        }
    }
    for (std::size_t i = 0; i < s.retailers.size(); ++i) {
        if (!s.retailers[i].shortage) continue;
        const bool owns = std::any_of(s.portfolios.begin(), s.portfolios.end(),
                                      [&](const PortfolioSpec& p) { return p.retailer == s.retailers[i].id; });
        if (!owns) fail(at("actors.retailers", i) + ".shortage", "retailer owns no portfolio");
    }

    {
        const auto& arr = array_or_empty(j, "triggers");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("triggers", i);
            TriggerSpec t;
            t.at_slot = get<int>(arr[i], "at_slot", f);
            if (t.at_slot < 0 || t.at_slot >= H) fail(f + ".at_slot", "outside the horizon");
            t.retailer = get<std::string>(arr[i], "retailer", f);
            if (!retailer_ids.count(t.retailer)) fail(f + ".retailer", "unknown retailer '" + t.retailer + "'");
            t.scope = get<std::string>(arr[i], "scope", f);
            if (!scopes.count(t.scope)) fail(f + ".scope", "unknown scope '" + t.scope + "'");
            t.direction = guarded(f + ".direction", [&] {
                return direction_from_string(get_or<std::string>(arr[i], "direction", "Decrease", f));
            });
            if (!arr[i].contains("target")) fail(f + ".target", "missing");
            t.target = guarded(f + ".target", [&] { return profile_from_json(arr[i].at("target"), s.grid); });
            if (t.target.empty() || t.target.all_zero()) fail(f + ".target", "must not be empty");
            if (t.target.start_slot() <= t.at_slot) fail(f + ".target", "window must start after at_slot");
            t.budget_cap = money_or_null(arr[i], "budget_cap_cents", f);
            s.triggers.push_back(std::move(t));
        }
    }
    {
        const auto& arr = array_or_empty(j, "overrides");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto f = at("overrides", i);
            OverrideSpec o;
            o.customer = get<std::string>(arr[i], "customer", f);
            if (o.customer != "*" && !customer_ids.count(o.customer)) {
                fail(f + ".customer", "unknown customer '" + o.customer + "'");
            }
            if (arr[i].contains("at_slot") && !arr[i].at("at_slot").is_null()) o.at_slot = get<int>(arr[i], "at_slot", f);
            o.on_arrival = get_or<bool>(arr[i], "on_arrival", false, f);
            if (!o.at_slot && !o.on_arrival) fail(f, "needs at_slot or on_arrival");
            s.overrides.push_back(o);
        }
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Validation, "scenario: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, std::string("scenario: malformed JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace dsm
