#include "dsm/eecs.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace dsm {

Milliwatts Schedule::total(int slot) const {
    Milliwatts sum = 0;
    for (const auto& d : power) sum += d[static_cast<std::size_t>(slot)];
    return sum;
}

std::vector<Milliwatts> Schedule::totals() const {
    std::vector<Milliwatts> out(power.empty() ? 0 : power.front().size(), 0);
    for (const auto& d : power) {
        for (std::size_t t = 0; t < d.size(); ++t) out[t] += d[t];
    }
    return out;
}

std::int64_t Schedule::device_mw_slots(std::size_t device) const {
    std::int64_t sum = 0;
    for (auto v : power[device]) sum += v;
    return sum;
}

json to_json(const Schedule& s, const TimeGrid& grid) {
    json devices = json::array();
    for (std::size_t i = 0; i < s.power.size(); ++i) {
        devices.push_back({{"id", s.device_ids[i]}, {"profile", to_json(PowerProfile(grid, 0, s.power[i]))}});
    }
    return json{{"committed_at", to_json(s.committed_at)}, {"devices", std::move(devices)}};
}

std::vector<double> simulate_temperatures(const ThermostaticHeater& h, const std::vector<Milliwatts>& power,
                                          const std::vector<double>& outdoor, const TimeGrid& grid) {
    std::vector<double> temps;
    temps.reserve(power.size() + 1);
    double temp = h.t0;
    temps.push_back(temp);
    for (std::size_t t = 0; t < power.size(); ++t) {
        const double out = outdoor.empty() ? temp : outdoor[std::min(t, outdoor.size() - 1)];
        temp = temp + h.alpha * (out - temp) + h.beta * mw_to_kw(power[t]) * grid.slot_hours();
        temps.push_back(temp);
    }
    return temps;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr __int128 kUnboundedRate = static_cast<__int128>(1) << 62;
constexpr Milliwatts kNoCap = std::numeric_limits<Milliwatts>::max() / 4;
constexpr double kTempEps = 1e-9;

using Trace = std::vector<Milliwatts>;

// Re-planning context shared by all devices of one site during one pass.
struct Plan {
    const CustomerSite* site = nullptr;
    const TimeGrid* grid = nullptr;
    int horizon = 0;
    int now = 0;
    bool baseline = false;
    Direction dir = Direction::Decrease;
    int w_first = 0;
    int w_last = 0;
    __int128 rate = 0;
    CentsPerKwh comfort = 0;
    std::vector<Milliwatts> rem;
    std::vector<char> no_inc;
    std::vector<char> no_dec;
    std::vector<Milliwatts> pv;

    bool in_window(int t) const { return t >= w_first && t < w_last; }
};

Plan make_plan(const CustomerSite& site, const TimeGrid& grid, int now) {
    Plan p;
    p.site = &site;
    p.grid = &grid;
    p.horizon = grid.horizon_slots;
    p.now = now;
    p.rem.assign(static_cast<std::size_t>(p.horizon), 0);
    p.no_inc.assign(static_cast<std::size_t>(p.horizon), 0);
    p.no_dec.assign(static_cast<std::size_t>(p.horizon), 0);
    p.pv.assign(static_cast<std::size_t>(p.horizon), 0);
    for (int t = 0; t < p.horizon; ++t) p.pv[static_cast<std::size_t>(t)] = site.pv.at(t);
    p.comfort = site.prefs.comfort_weight;
    return p;
}

// A signal window forbids moving load into it (Decrease) or out of it (Increase).
void constrain_window(Plan& p, Direction dir, int first, int last) {
    for (int t = std::max(0, first); t < std::min(last, p.horizon); ++t) {
        auto& flag = dir == Direction::Decrease ? p.no_inc : p.no_dec;
        flag[static_cast<std::size_t>(t)] = 1;
    }
}

// Objective of one device drawing x at slot t, doubled so the comfort half-term stays integral:
// 2 * tariff * max(0, net) - 2 * rate * credited + comfort * |x - cur|.
__int128 slot_cost(const Plan& p, int t, Milliwatts others, Milliwatts cur, Milliwatts x) {
    const auto ts = static_cast<std::size_t>(t);
    const __int128 net = static_cast<__int128>(others) + x - p.pv[ts];
    __int128 c = 2 * static_cast<__int128>(p.site->tariff.at(t)) * std::max<__int128>(0, net);
    if (p.rate > 0 && p.in_window(t)) {
        const Milliwatts moved = p.dir == Direction::Decrease ? std::max<Milliwatts>(0, cur - x)
                                                              : std::max<Milliwatts>(0, x - cur);
        c -= 2 * p.rate * std::min(p.rem[ts], moved);
    }
    c += static_cast<__int128>(p.comfort) * (x > cur ? x - cur : cur - x);
    return c;
}

__int128 trace_cost(const Plan& p, const Trace& others, const Trace& cur, const Trace& cand) {
    __int128 sum = 0;
    for (int t = 0; t < p.horizon; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        sum += slot_cost(p, t, others[ts], cur[ts], cand[ts]);
    }
    return sum;
}

bool permitted(const Plan& p, const Trace& cur, const Trace& cand) {
    if (p.baseline) return true;
    for (int t = 0; t < p.horizon; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        if (t < p.now) {
            if (cand[ts] != cur[ts]) return false;
            continue;
        }
        if (cand[ts] > cur[ts] && p.no_inc[ts]) return false;
        if (cand[ts] < cur[ts] && p.no_dec[ts]) return false;
    }
    return true;
}

int first_on(const Trace& tr) {
    for (std::size_t t = 0; t < tr.size(); ++t) {
        if (tr[t] > 0) return static_cast<int>(t);
    }
    return -1;
}

Trace plan_deferrable(const Plan& p, const DeferrableLoad& d, const Trace& others, const Trace& cur) {
    const int cur_start = first_on(cur);
    if (!p.baseline && cur_start >= 0 && cur_start < p.now) return cur;  // already running or done
    std::optional<Trace> best;
    __int128 best_cost = 0;
    int best_dev = 0;
    for (int s = std::max(d.earliest_start, p.now); s + d.duration <= d.deadline; ++s) {
        Trace cand(static_cast<std::size_t>(p.horizon), 0);
        for (int t = s; t < s + d.duration; ++t) cand[static_cast<std::size_t>(t)] = d.power;
        if (!permitted(p, cur, cand)) continue;
        const __int128 cost = trace_cost(p, others, cur, cand);
        const int dev = cur_start < 0 ? 0 : std::abs(s - cur_start);
        if (!best || cost < best_cost || (cost == best_cost && dev < best_dev)) {
            best = std::move(cand);
            best_cost = cost;
            best_dev = dev;
        }
    }
    return best ? *best : cur;
}

Trace plan_interruptible(const Plan& p, const DeferrableLoad& d, const Trace& others, const Trace& cur) {
    int need = d.duration;
    for (int t = d.earliest_start; t < std::min(p.now, d.deadline); ++t) {
        if (cur[static_cast<std::size_t>(t)] > 0) --need;
    }
    struct Slot {
        __int128 weight;
        bool was_on;
        int t;
    };
    std::vector<Slot> free;
    Trace cand = cur;
    int forced = 0;
    for (int t = std::max(d.earliest_start, p.now); t < d.deadline; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const bool on = cur[ts] > 0;
        const bool can_on = p.baseline || on || !p.no_inc[ts];
        const bool can_off = p.baseline || !on || !p.no_dec[ts];
        if (!can_off) {
            ++forced;
            continue;
        }
        cand[ts] = 0;
        if (!can_on) continue;
        const __int128 w = slot_cost(p, t, others[ts], cur[ts], d.power) - slot_cost(p, t, others[ts], cur[ts], 0);
        free.push_back({w, on, t});
    }
    const int pick = need - forced;
    if (pick < 0 || pick > static_cast<int>(free.size())) return cur;
    std::sort(free.begin(), free.end(), [](const Slot& a, const Slot& b) {
        if (a.weight != b.weight) return a.weight < b.weight;
        if (a.was_on != b.was_on) return a.was_on;
        return a.t < b.t;
    });
    for (int i = 0; i < pick; ++i) cand[static_cast<std::size_t>(free[static_cast<std::size_t>(i)].t)] = d.power;
    return cand;
}

Trace plan_ev(const Plan& p, const EvCharger& ev, const Trace& others, const Trace& cur) {
    const int lo = std::max(ev.arrival_slot, p.baseline ? 0 : p.now);
    const int hi = ev.departure_slot;
    Trace x = cur;
    if (p.baseline) {
        std::int64_t left = ev.required_energy.mw_minutes / p.grid->slot_minutes;
        std::fill(x.begin(), x.end(), 0);
        for (int t = ev.arrival_slot; t < hi && left > 0; ++t) {
            const Milliwatts v = std::min(ev.max_power, left);
            x[static_cast<std::size_t>(t)] = v;
            left -= v;
        }
    }
    if (lo >= hi) return x;

    std::vector<Milliwatts> floor_(static_cast<std::size_t>(p.horizon), 0);
    std::vector<Milliwatts> ceil_(static_cast<std::size_t>(p.horizon), ev.max_power);
    std::vector<std::vector<Milliwatts>> bps(static_cast<std::size_t>(p.horizon));
    for (int t = lo; t < hi; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        if (!p.baseline && p.no_dec[ts]) floor_[ts] = std::min(cur[ts], ev.max_power);
        if (!p.baseline && p.no_inc[ts]) ceil_[ts] = std::min(cur[ts], ev.max_power);
        auto& b = bps[ts];
        b = {floor_[ts], ceil_[ts], cur[ts], p.pv[ts] - others[ts]};
        if (p.rate > 0 && p.in_window(t)) {
            b.push_back(cur[ts] - p.rem[ts]);
            b.push_back(cur[ts] + p.rem[ts]);
        }
        for (auto& v : b) v = std::clamp(v, floor_[ts], ceil_[ts]);
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
    }
    auto g = [&](int t, Milliwatts v) {
        const auto ts = static_cast<std::size_t>(t);
        return slot_cost(p, t, others[ts], cur[ts], v);
    };
    // Move energy from the slot with the largest marginal saving to the one
    // with the smallest marginal cost, one linear segment at a time.
    for (int iter = 0; iter < 50 * p.horizon; ++iter) {
        __int128 best_gain = 0;
        int best_a = -1;
        int best_b = -1;
        std::vector<__int128> left(static_cast<std::size_t>(hi), 0);
        std::vector<__int128> right(static_cast<std::size_t>(hi), 0);
        for (int t = lo; t < hi; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            if (x[ts] > floor_[ts]) left[ts] = g(t, x[ts]) - g(t, x[ts] - 1);
            if (x[ts] < ceil_[ts]) right[ts] = g(t, x[ts] + 1) - g(t, x[ts]);
        }
        for (int a = lo; a < hi; ++a) {
            const auto as = static_cast<std::size_t>(a);
            if (x[as] <= floor_[as]) continue;
            for (int b = lo; b < hi; ++b) {
                const auto bs = static_cast<std::size_t>(b);
                if (a == b || x[bs] >= ceil_[bs]) continue;
                const __int128 gain = left[as] - right[bs];
                if (gain > best_gain) {
                    best_gain = gain;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (best_a < 0) break;
        const auto as = static_cast<std::size_t>(best_a);
        const auto bs = static_cast<std::size_t>(best_b);
        Milliwatts prev = floor_[as];
        for (auto v : bps[as]) {
            if (v < x[as]) prev = std::max(prev, v);
        }
        Milliwatts next = ceil_[bs];
        for (auto v : bps[bs]) {
            if (v > x[bs]) next = std::min(next, v);
        }
        const Milliwatts delta = std::min(x[as] - prev, next - x[bs]);
        if (delta <= 0) break;
        x[as] -= delta;
        x[bs] += delta;
    }
    return x;
}

const std::vector<double>& outdoor_of(const CustomerSite& site, const ThermostaticHeater& h) {
    static const std::vector<double> none;
    auto it = site.outdoor.find(h.outdoor_series);
    return it == site.outdoor.end() ? none : it->second;
}

Trace bang_bang(const ThermostaticHeater& h, const std::vector<double>& outdoor, const TimeGrid& grid) {
    Trace tr(static_cast<std::size_t>(grid.horizon_slots), 0);
    const double gain = h.beta * mw_to_kw(h.rated_power) * grid.slot_hours();
    double temp = h.t0;
    for (std::size_t t = 0; t < tr.size(); ++t) {
        const double out = outdoor.empty() ? temp : outdoor[std::min(t, outdoor.size() - 1)];
        const double drift = temp + h.alpha * (out - temp);
        if (drift < h.t_min) {
            tr[t] = h.rated_power;
            temp = drift + gain;
        } else {
            temp = drift;
        }
    }
    return tr;
}

// Re-establishes the comfort band (or the reference trace, where that was
// already outside it) by switching the latest unlocked slot before the first
// violation.
bool repair_heater(const Plan& p, const ThermostaticHeater& h, const std::vector<double>& outdoor, const Trace& cur,
                   const std::vector<double>& ref, const std::vector<char>& locked, Trace& cand, bool enforce_perm) {
    for (int iter = 0; iter < 4 * p.horizon; ++iter) {
        const auto temps = simulate_temperatures(h, cand, outdoor, *p.grid);
        int k = -1;
        bool cold = false;
        for (int i = p.now + 1; i <= p.horizon; ++i) {
            const auto is = static_cast<std::size_t>(i);
            if (temps[is] < std::min(h.t_min, ref[is]) - kTempEps) {
                k = i;
                cold = true;
                break;
            }
            if (temps[is] > std::max(h.t_max, ref[is]) + kTempEps) {
                k = i;
                break;
            }
        }
        if (k < 0) return true;
        int v = -1;
        for (int s = k - 1; s >= p.now; --s) {
            const auto ss = static_cast<std::size_t>(s);
            if (locked[ss]) continue;
            if (cold && cand[ss] == 0 && (!enforce_perm || cur[ss] > 0 || !p.no_inc[ss])) {
                v = s;
                break;
            }
            if (!cold && cand[ss] > 0 && (!enforce_perm || cur[ss] == 0 || !p.no_dec[ss])) {
                v = s;
                break;
            }
        }
        if (v < 0) return false;
        cand[static_cast<std::size_t>(v)] = cold ? h.rated_power : 0;
    }
    return false;
}

Trace plan_heater(const Plan& p, const CustomerSite& site, const ThermostaticHeater& h, const Trace& others,
                  const Trace& cur) {
    const auto& outdoor = outdoor_of(site, h);
    if (p.baseline) return bang_bang(h, outdoor, *p.grid);
    if (p.rate <= 0 || p.w_first >= p.w_last) return cur;
    const auto ref = simulate_temperatures(h, cur, outdoor, *p.grid);
    std::vector<char> locked(static_cast<std::size_t>(p.horizon), 0);
    for (int t = std::max(0, p.w_first); t < std::min(p.w_last, p.horizon); ++t) locked[static_cast<std::size_t>(t)] = 1;
    Trace best = cur;
    __int128 best_cost = trace_cost(p, others, cur, cur);
    for (int t = std::max(p.w_first, p.now); t < std::min(p.w_last, p.horizon); ++t) {
        const auto ts = static_cast<std::size_t>(t);
        Trace trial = best;
        if (p.dir == Direction::Decrease) {
            if (trial[ts] == 0 || (cur[ts] > 0 && p.no_dec[ts])) continue;
            trial[ts] = 0;
        } else {
            if (trial[ts] > 0 || (cur[ts] == 0 && p.no_inc[ts])) continue;
            trial[ts] = h.rated_power;
        }
        if (!repair_heater(p, h, outdoor, cur, ref, locked, trial, true)) continue;
        if (!permitted(p, cur, trial)) continue;
        const __int128 cost = trace_cost(p, others, cur, trial);
        if (cost < best_cost) {
            best = std::move(trial);
            best_cost = cost;
        }
    }
    return best;
}

Trace fixed_trace(const FixedLoad& f, int horizon) {
    Trace tr(static_cast<std::size_t>(horizon), 0);
    for (int t = 0; t < horizon; ++t) tr[static_cast<std::size_t>(t)] = f.profile.at(t);
    return tr;
}

Trace plan_device(const Plan& p, const Device& dev, const Trace& others, const Trace& cur) {
    return std::visit(overloaded{
                          [&](const DeferrableLoad& d) {
                              return d.interruptible ? plan_interruptible(p, d, others, cur)
                                                     : plan_deferrable(p, d, others, cur);
                          },
                          [&](const ThermostaticHeater& h) { return plan_heater(p, *p.site, h, others, cur); },
                          [&](const EvCharger& ev) { return plan_ev(p, ev, others, cur); },
                          [&](const FixedLoad& f) { return p.baseline ? fixed_trace(f, p.horizon) : cur; },
                      },
                      dev.spec);
}

// Re-plans every device in site order; each device sees the others as fixed
// and only the requested shift not yet claimed by earlier devices.
void replan(Plan& p, Schedule& s) {
    auto totals = s.totals();
    for (std::size_t i = 0; i < s.power.size(); ++i) {
        Trace others(totals.size());
        for (std::size_t t = 0; t < totals.size(); ++t) others[t] = totals[t] - s.power[i][t];
        const Trace cur = s.power[i];
        Trace next = plan_device(p, p.site->devices[i], others, cur);
        for (std::size_t t = 0; t < totals.size(); ++t) {
            totals[t] = others[t] + next[t];
            if (!p.baseline && p.in_window(static_cast<int>(t))) {
                const Milliwatts moved = p.dir == Direction::Decrease ? std::max<Milliwatts>(0, cur[t] - next[t])
                                                                      : std::max<Milliwatts>(0, next[t] - cur[t]);
                p.rem[t] -= std::min(p.rem[t], moved);
            }
        }
        s.power[i] = std::move(next);
    }
}

PowerProfile window_delta(const Schedule& before, const Schedule& after, Direction dir, int first, int last,
                          const TimeGrid& grid) {
    std::vector<Milliwatts> out;
    for (int t = first; t < last; ++t) {
        const Milliwatts b = before.total(t);
        const Milliwatts a = after.total(t);
        out.push_back(dir == Direction::Decrease ? std::max<Milliwatts>(0, b - a) : std::max<Milliwatts>(0, a - b));
    }
    return PowerProfile(grid, first, std::move(out));
}

// Override repair: restore the device's energy or comfort band after elapsed
// slots diverged from the snapshot. Returns nullopt if no repair exists.
std::optional<Trace> repair_override(const Plan& p, const CustomerSite& site, const Device& dev, const Trace& actual,
                                     const Trace& snapshot) {
    Trace cand = actual;
    for (int t = p.now; t < p.horizon; ++t) cand[static_cast<std::size_t>(t)] = snapshot[static_cast<std::size_t>(t)];
    return std::visit(
        overloaded{
            [&](const DeferrableLoad& d) -> std::optional<Trace> {
                if (!d.interruptible) {
                    const int ran = first_on(actual);
                    if (ran >= 0 && ran < p.now) return actual;
                    const int want = first_on(snapshot);
                    if (want >= p.now) return cand;
                    std::optional<int> best;
                    for (int s = std::max(d.earliest_start, p.now); s + d.duration <= d.deadline; ++s) {
                        if (!best || std::abs(s - want) < std::abs(*best - want)) best = s;
                    }
                    if (!best) return std::nullopt;
                    std::fill(cand.begin() + p.now, cand.end(), 0);
                    for (int t = *best; t < *best + d.duration; ++t) cand[static_cast<std::size_t>(t)] = d.power;
                    return cand;
                }
                int on = 0;
                for (auto v : cand) on += v > 0 ? 1 : 0;
                for (int t = std::min(d.deadline, p.horizon) - 1; t >= p.now && on > d.duration; --t) {
                    if (cand[static_cast<std::size_t>(t)] > 0) {
                        cand[static_cast<std::size_t>(t)] = 0;
                        --on;
                    }
                }
                for (int t = std::max(d.earliest_start, p.now); t < d.deadline && on < d.duration; ++t) {
                    if (cand[static_cast<std::size_t>(t)] == 0) {
                        cand[static_cast<std::size_t>(t)] = d.power;
                        ++on;
                    }
                }
                if (on != d.duration) return std::nullopt;
                return cand;
            },
            [&](const EvCharger& ev) -> std::optional<Trace> {
                const std::int64_t need = ev.required_energy.mw_minutes / p.grid->slot_minutes;
                std::int64_t have = 0;
                for (auto v : cand) have += v;
                for (int t = ev.departure_slot - 1; t >= p.now && have > need; --t) {
                    auto& v = cand[static_cast<std::size_t>(t)];
                    const Milliwatts cut = std::min<std::int64_t>(v, have - need);
                    v -= cut;
                    have -= cut;
                }
                for (int t = std::max(ev.arrival_slot, p.now); t < ev.departure_slot && have < need; ++t) {
                    auto& v = cand[static_cast<std::size_t>(t)];
                    const Milliwatts add = std::min<std::int64_t>(ev.max_power - v, need - have);
                    v += add;
                    have += add;
                }
                if (have != need) return std::nullopt;
                return cand;
            },
            [&](const ThermostaticHeater& h) -> std::optional<Trace> {
                const auto& outdoor = outdoor_of(site, h);
                const auto ref = simulate_temperatures(h, actual, outdoor, *p.grid);
                std::vector<char> unlocked(static_cast<std::size_t>(p.horizon), 0);
                if (!repair_heater(p, h, outdoor, actual, ref, unlocked, cand, false)) return std::nullopt;
                return cand;
            },
            [&](const FixedLoad&) -> std::optional<Trace> { return cand; },
        },
        dev.spec);
}

}  // namespace

Schedule compute_baseline_schedule(const CustomerSite& site, const TimeGrid& grid) {
    Schedule s;
    for (const auto& d : site.devices) {
        s.device_ids.push_back(d.device_id);
        s.power.emplace_back(static_cast<std::size_t>(grid.horizon_slots), 0);
    }
    Plan p = make_plan(site, grid, 0);
    p.baseline = true;
    p.comfort = 0;
    replan(p, s);
    return s;
}

json to_json(const DsmSignal& s) {
    return json{{"signal_id", s.signal_id},
                {"request_id", s.request_id},
                {"manager_id", s.manager_id},
                {"customer_id", s.customer_id},
                {"direction", std::string(to_string(s.direction))},
                {"requested", to_json(s.requested)},
                {"incentive_rate_ct_per_kwh", s.incentive_rate},
                {"issued_at", to_json(s.issued_at)}};
}

DsmSignal signal_from_json(const json& j, const TimeGrid& grid) {
    DsmSignal s;
    s.signal_id = j.at("signal_id").get<std::string>();
    s.request_id = j.value("request_id", std::string());
    s.manager_id = j.value("manager_id", std::string());
    s.customer_id = j.at("customer_id").get<std::string>();
    s.direction = direction_from_string(j.at("direction").get<std::string>());
    s.requested = profile_from_json(j.at("requested"), grid);
    s.incentive_rate = j.value("incentive_rate_ct_per_kwh", CentsPerKwh{0});
    if (j.contains("issued_at")) s.issued_at = logical_time_from_json(j.at("issued_at"));
    return s;
}

std::string_view to_string(SignalStatus s) {
    switch (s) {
    case SignalStatus::Pending: return "Pending";
    case SignalStatus::AutoAccepted: return "AutoAccepted";
    case SignalStatus::PartiallyMet: return "PartiallyMet";
    case SignalStatus::Overridden: return "Overridden";
    }
    return "Pending";
}

json to_json(const SignalResponse& r, const TimeGrid& grid) {
    json j{{"signal_id", r.signal_id},
           {"customer_id", r.customer_id},
           {"status", std::string(to_string(r.status))},
           {"planned_delta", to_json(r.planned_delta)},
           {"credit_eligible_mw_minutes", r.credit_eligible.mw_minutes}};
    if (!r.baseline_snapshot.power.empty()) {
        j["baseline_total"] = to_json(PowerProfile(grid, 0, r.baseline_snapshot.totals()));
    }
    j["overridden_at"] = r.overridden_at ? json(*r.overridden_at) : json(nullptr);
    return j;
}

json to_json(const MeterReading& m) {
    json devices = json::object();
    for (const auto& [id, mw] : m.devices) devices[id] = mw;
    return json{{"customer_id", m.customer_id},
                {"slot", m.slot},
                {"devices_mw", std::move(devices)},
                {"pv_mw", m.pv},
                {"net_mw", m.net}};
}

Eecs::Eecs(CustomerSite site, TimeGrid grid, Broker* broker)
    : site_(std::move(site)), grid_(grid), broker_(broker) {
    self_ = Principal{site_.customer_id, Role::Customer, ""};
    for (const auto& d : site_.devices) {
        validate_device(d, grid_);
        if (const auto* h = std::get_if<ThermostaticHeater>(&d.spec)) {
            auto it = site_.outdoor.find(h->outdoor_series);
            if (it == site_.outdoor.end() || static_cast<int>(it->second.size()) < grid_.horizon_slots) {
                throw Error(ErrorKind::Validation, "device '" + d.device_id + "'.outdoor_series: series '" +
                                                       h->outdoor_series + "' missing or shorter than the horizon");
            }
        }
    }
    baseline_ = compute_baseline_schedule(site_, grid_);
    schedule_ = baseline_;
}

Schedule Eecs::schedule() const {
    std::lock_guard lock(mutex_);
    return schedule_;
}

Schedule Eecs::baseline() const {
    std::lock_guard lock(mutex_);
    return baseline_;
}

int Eecs::now_locked() const { return std::max(clock_, metered_through_ + 1); }

int Eecs::now() const {
    std::lock_guard lock(mutex_);
    return now_locked();
}

void Eecs::set_clock(int slot) {
    std::lock_guard lock(mutex_);
    clock_ = slot;
}

PowerProfile Eecs::query_flexibility(int first, int last, Direction dir) const {
    std::lock_guard lock(mutex_);
    first = std::max(first, 0);
    last = std::min(last, grid_.horizon_slots);
    if (first >= last) return PowerProfile(grid_);
    Plan p = make_plan(site_, grid_, now_locked());
    for (const auto& [id, a] : applied_) {
        if (a.response.status == SignalStatus::Overridden || a.response.status == SignalStatus::Pending) continue;
        if (a.signal.requested.end_slot() <= p.now) continue;
        constrain_window(p, a.signal.direction, a.signal.requested.start_slot(), a.signal.requested.end_slot());
    }
    p.dir = dir;
    p.w_first = first;
    p.w_last = last;
    p.rate = kUnboundedRate;
    for (int t = first; t < last; ++t) p.rem[static_cast<std::size_t>(t)] = kNoCap;
    constrain_window(p, dir, first, last);
    Schedule trial = schedule_;
    replan(p, trial);
    return window_delta(schedule_, trial, dir, first, last, grid_);
}

SignalResponse Eecs::apply_locked(const DsmSignal& sig) {
    if (sig.customer_id != site_.customer_id) {
        throw Error(ErrorKind::Access, "signal '" + sig.signal_id + "' is addressed to another customer");
    }
    if (sig.requested.empty() || sig.requested.end_slot() > grid_.horizon_slots) {
        throw Error(ErrorKind::Validation, "signal.requested: window must be non-empty and within the horizon");
    }
    const int first = sig.requested.start_slot();
    const int last = sig.requested.end_slot();
    Plan p = make_plan(site_, grid_, now_locked());
    for (const auto& [id, a] : applied_) {
        if (id == sig.signal_id) continue;
        if (a.response.status == SignalStatus::Overridden || a.response.status == SignalStatus::Pending) continue;
        if (a.signal.requested.end_slot() <= p.now) continue;
        constrain_window(p, a.signal.direction, a.signal.requested.start_slot(), a.signal.requested.end_slot());
    }
    p.dir = sig.direction;
    p.w_first = first;
    p.w_last = last;
    p.rate = sig.incentive_rate;
    for (int t = first; t < last; ++t) p.rem[static_cast<std::size_t>(t)] = sig.requested.at(t);
    constrain_window(p, sig.direction, first, last);

    SignalResponse r;
    r.signal_id = sig.signal_id;
    r.customer_id = site_.customer_id;
    r.baseline_snapshot = schedule_;
    Schedule next = schedule_;
    replan(p, next);
    next.committed_at = sig.issued_at;
    r.planned_delta = window_delta(schedule_, next, sig.direction, first, last, grid_);
    bool short_somewhere = false;
    std::int64_t eligible = 0;
    for (int t = first; t < last; ++t) {
        const Milliwatts d = r.planned_delta.at(t);
        if (d < sig.requested.at(t)) short_somewhere = true;
        eligible += std::min(d, sig.requested.at(t));
    }
    r.credit_eligible = {eligible * grid_.slot_minutes};
    r.status = short_somewhere ? SignalStatus::PartiallyMet : SignalStatus::AutoAccepted;
    schedule_ = std::move(next);

    auto& slot = applied_[sig.signal_id];
    slot.signal = sig;
    slot.response = r;
    slot.order = next_order_++;
    return r;
}

void Eecs::publish_response(const SignalResponse& r) {
    if (broker_) broker_->publish(self_, "responses." + site_.customer_id, "SignalResponse", to_json(r, grid_));
}

SignalResponse Eecs::receive_signal(const DsmSignal& sig) {
    SignalResponse r;
    {
        std::lock_guard lock(mutex_);
        if (applied_.count(sig.signal_id)) throw Error(ErrorKind::Duplicate, "signal '" + sig.signal_id + "' already received");
        if (site_.prefs.auto_accept) {
            r = apply_locked(sig);
        } else {
            if (sig.customer_id != site_.customer_id) {
                throw Error(ErrorKind::Access, "signal '" + sig.signal_id + "' is addressed to another customer");
            }
            r.signal_id = sig.signal_id;
            r.customer_id = site_.customer_id;
            r.status = SignalStatus::Pending;
            r.planned_delta = PowerProfile::zeros(grid_, sig.requested.start_slot(), sig.requested.length());
            auto& slot = applied_[sig.signal_id];
            slot.signal = sig;
            slot.response = r;
            slot.order = next_order_++;
            pending_.push_back(sig.signal_id);
        }
    }
    publish_response(r);
    return r;
}

SignalResponse Eecs::apply_signal(const DsmSignal& sig) {
    SignalResponse r;
    {
        std::lock_guard lock(mutex_);
        if (applied_.count(sig.signal_id)) throw Error(ErrorKind::Duplicate, "signal '" + sig.signal_id + "' already received");
        r = apply_locked(sig);
    }
    publish_response(r);
    return r;
}

std::optional<SignalResponse> Eecs::apply_pending(const SignalId& id) {
    SignalResponse r;
    {
        std::lock_guard lock(mutex_);
        auto it = std::find(pending_.begin(), pending_.end(), id);
        if (it == pending_.end()) return std::nullopt;
        pending_.erase(it);
        const std::size_t order = applied_.at(id).order;
        const DsmSignal sig = applied_.at(id).signal;
        r = apply_locked(sig);
        applied_.at(id).order = order;
    }
    publish_response(r);
    return r;
}

std::vector<SignalId> Eecs::pending_signals() const {
    std::lock_guard lock(mutex_);
    return pending_;
}

SignalResponse Eecs::override_signal(const Principal& who, const SignalId& id) {
    std::vector<SignalResponse> changed;
    SignalResponse result;
    {
        std::lock_guard lock(mutex_);
        auto it = applied_.find(id);
        if (it == applied_.end()) throw Error(ErrorKind::NotFound, "unknown signal '" + id + "'");
        if (who.role != Role::Admin && who.actor_id != site_.customer_id) {
            throw Error(ErrorKind::Access, "signal '" + id + "' belongs to another customer");
        }
        auto& target = it->second;
        if (target.response.status == SignalStatus::Overridden) return target.response;
        const int now = now_locked();
        if (target.signal.requested.end_slot() <= now) {
            throw Error(ErrorKind::State, "signal '" + id + "' window has already elapsed");
        }
        if (target.response.status == SignalStatus::Pending) {
            pending_.erase(std::remove(pending_.begin(), pending_.end(), id), pending_.end());
            target.response.status = SignalStatus::Overridden;
            target.response.overridden_at = now;
            changed.push_back(target.response);
            result = target.response;
        } else {
            const Schedule& snap = target.response.baseline_snapshot;
            Plan p = make_plan(site_, grid_, now);
            Schedule next = schedule_;
            for (std::size_t i = 0; i < next.power.size(); ++i) {
                auto repaired = repair_override(p, site_, site_.devices[i], schedule_.power[i], snap.power[i]);
                if (repaired) next.power[i] = std::move(*repaired);
            }
            next.committed_at = LogicalTime{now, Phase::Override};
            schedule_ = std::move(next);
            for (auto& [other_id, a] : applied_) {
                if (a.response.status == SignalStatus::Overridden || a.response.status == SignalStatus::Pending) continue;
                if (other_id != id && a.order < target.order) continue;
                a.response.status = SignalStatus::Overridden;
                a.response.overridden_at = now;
                changed.push_back(a.response);
            }
            result = target.response;
        }
    }
    for (const auto& r : changed) publish_response(r);
    return result;
}

MeterReading Eecs::meter_slot(int slot) {
    MeterReading m;
    {
        std::lock_guard lock(mutex_);
        if (slot < 0 || slot >= grid_.horizon_slots) throw Error(ErrorKind::Validation, "meter: slot outside the horizon");
        if (slot <= metered_through_) throw Error(ErrorKind::State, "meter: slot " + std::to_string(slot) + " already metered");
        m.customer_id = site_.customer_id;
        m.slot = slot;
        Milliwatts load = 0;
        for (std::size_t i = 0; i < schedule_.power.size(); ++i) {
            const Milliwatts v = schedule_.power[i][static_cast<std::size_t>(slot)];
            m.devices.emplace_back(schedule_.device_ids[i], v);
            load += v;
        }
        m.pv = site_.pv.at(slot);
        m.net = load - m.pv;
        readings_[slot] = m;
        metered_through_ = slot;
    }
    if (broker_) broker_->publish(self_, "telemetry." + site_.customer_id, "MeterReading", to_json(m));
    return m;
}

std::optional<MeterReading> Eecs::reading(int slot) const {
    std::lock_guard lock(mutex_);
    auto it = readings_.find(slot);
    if (it == readings_.end()) return std::nullopt;
    return it->second;
}

int Eecs::metered_through() const {
    std::lock_guard lock(mutex_);
    return metered_through_;
}

std::optional<DsmSignal> Eecs::signal(const SignalId& id) const {
    std::lock_guard lock(mutex_);
    auto it = applied_.find(id);
    if (it == applied_.end()) return std::nullopt;
    return it->second.signal;
}

std::optional<SignalResponse> Eecs::response(const SignalId& id) const {
    std::lock_guard lock(mutex_);
    auto it = applied_.find(id);
    if (it == applied_.end()) return std::nullopt;
    return it->second.response;
}

std::vector<SignalResponse> Eecs::responses() const {
    std::lock_guard lock(mutex_);
    std::vector<SignalResponse> out;
    for (const auto& [id, a] : applied_) out.push_back(a.response);
    return out;
}

std::vector<DsmSignal> Eecs::signals() const {
    std::lock_guard lock(mutex_);
    std::vector<DsmSignal> out;
    for (const auto& [id, a] : applied_) out.push_back(a.signal);
    return out;
}

std::vector<double> Eecs::temperature_trace(std::size_t device) const {
    std::lock_guard lock(mutex_);
    const auto* h = std::get_if<ThermostaticHeater>(&site_.devices.at(device).spec);
    if (!h) throw Error(ErrorKind::Validation, "device '" + site_.devices[device].device_id + "' is not thermostatic");
    return simulate_temperatures(*h, schedule_.power[device], outdoor_of(site_, *h), grid_);
}

}  // namespace dsm
