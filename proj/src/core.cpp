#include "dsm/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dsm {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Access: return "access";
    case ErrorKind::Authentication: return "authentication";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Duplicate: return "duplicate";
    case ErrorKind::State: return "state";
    case ErrorKind::Deadline: return "deadline";
    case ErrorKind::GridMismatch: return "grid_mismatch";
    case ErrorKind::Topic: return "topic";
    }
    return "unknown";
}

std::string_view to_string(Direction d) {
    return d == Direction::Decrease ? "Decrease" : "Increase";
}

Direction direction_from_string(std::string_view s) {
    if (s == "Decrease") return Direction::Decrease;
    if (s == "Increase") return Direction::Increase;
    throw Error(ErrorKind::Validation, "direction: expected Decrease or Increase, got '" + std::string(s) + "'");
}

namespace {
constexpr std::string_view kPhaseNames[] = {
    "setup", "exogenous", "trigger", "bidding", "clearing",
    "dispatch", "scheduling", "override", "metering", "settlement",
};
}

std::string_view to_string(Phase p) {
    return kPhaseNames[static_cast<int>(p)];
}

Phase phase_from_string(std::string_view s) {
    for (int i = 0; i < 10; ++i) {
        if (kPhaseNames[i] == s) return static_cast<Phase>(i);
    }
    throw Error(ErrorKind::Validation, "phase: unknown phase '" + std::string(s) + "'");
}

json to_json(const LogicalTime& t) {
    return json{{"slot", t.slot}, {"phase", std::string(to_string(t.phase))}};
}

LogicalTime logical_time_from_json(const json& j) {
    return {j.at("slot").get<int>(), phase_from_string(j.at("phase").get<std::string>())};
}

void TimeGrid::validate() const {
    if (slot_minutes <= 0 || 60 % slot_minutes != 0) {
        throw Error(ErrorKind::Validation, "time_grid.slot_minutes: must be a positive divisor of 60");
    }
    if (horizon_slots <= 0) {
        throw Error(ErrorKind::Validation, "time_grid.horizon_slots: must be positive");
    }
}

Milliwatts kw_to_mw(double kw) { return std::llround(kw * 1.0e6); }
double mw_to_kw(Milliwatts mw) { return static_cast<double>(mw) / 1.0e6; }

Energy Energy::from_kwh(double kwh) { return {std::llround(kwh * 6.0e7)}; }

std::string Money::str() const {
    char buf[48];
    const std::int64_t a = cents < 0 ? -cents : cents;
    std::snprintf(buf, sizeof buf, "%sEUR %lld.%02lld", cents < 0 ? "-" : "",
                  static_cast<long long>(a / 100), static_cast<long long>(a % 100));
    return buf;
}

std::int64_t round_half_even(__int128 num, __int128 den) {
    if (den < 0) { num = -num; den = -den; }
    __int128 q = num / den;
    __int128 r = num % den;
    if (r < 0) { r += den; q -= 1; }  // floor division
    const __int128 twice = 2 * r;
    if (twice > den || (twice == den && (q % 2 != 0))) q += 1;
    return static_cast<std::int64_t>(q);
}

std::int64_t ceil_div(__int128 num, __int128 den) {
    if (den < 0) { num = -num; den = -den; }
    __int128 q = num / den;
    if (num % den != 0 && num > 0) q += 1;
    return static_cast<std::int64_t>(q);
}

Money cost_of(CentsPerKwh rate, Energy e) {
    // cents = rate * mW*min / (1e6 mW/kW * 60 min/h)
    return {round_half_even(static_cast<__int128>(rate) * e.mw_minutes, 60'000'000)};
}

PowerProfile::PowerProfile(TimeGrid grid, int start_slot, std::vector<Milliwatts> values)
    : grid_(grid), start_(start_slot), values_(std::move(values)) {
    if (start_ < 0) {
        throw Error(ErrorKind::Validation, "profile.start_slot: must be non-negative");
    }
    for (auto v : values_) {
        if (v < 0) throw Error(ErrorKind::Validation, "profile.values: power must be non-negative");
    }
}

PowerProfile PowerProfile::from_kw(TimeGrid grid, int start_slot, const std::vector<double>& kw) {
    std::vector<Milliwatts> mw;
    mw.reserve(kw.size());
    for (double v : kw) mw.push_back(kw_to_mw(v));
    return PowerProfile(grid, start_slot, std::move(mw));
}

PowerProfile PowerProfile::zeros(TimeGrid grid, int start_slot, int length) {
    return PowerProfile(grid, start_slot, std::vector<Milliwatts>(static_cast<std::size_t>(std::max(0, length)), 0));
}

Milliwatts PowerProfile::at(int slot) const {
    return contains(slot) ? values_[static_cast<std::size_t>(slot - start_)] : 0;
}

void PowerProfile::set(int slot, Milliwatts mw) {
    if (mw < 0) throw Error(ErrorKind::Validation, "profile: power must be non-negative");
    if (empty()) {
        start_ = slot;
        values_.assign(1, mw);
        return;
    }
    if (slot < start_) {
        values_.insert(values_.begin(), static_cast<std::size_t>(start_ - slot), 0);
        start_ = slot;
    } else if (slot >= end_slot()) {
        values_.resize(static_cast<std::size_t>(slot - start_ + 1), 0);
    }
    values_[static_cast<std::size_t>(slot - start_)] = mw;
}

bool PowerProfile::all_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](Milliwatts v) { return v == 0; });
}

Milliwatts PowerProfile::peak() const {
    return values_.empty() ? 0 : *std::max_element(values_.begin(), values_.end());
}

PowerProfile PowerProfile::slice(int first, int last) const {
    std::vector<Milliwatts> out;
    for (int t = first; t < last; ++t) out.push_back(at(t));
    return PowerProfile(grid_, first, std::move(out));
}

bool operator==(const PowerProfile& a, const PowerProfile& b) {
    if (!(a.grid_ == b.grid_)) return false;
    if (a.empty() && b.empty()) return true;
    const int lo = std::min(a.empty() ? b.start_ : a.start_, b.empty() ? a.start_ : b.start_);
    const int hi = std::max(a.end_slot(), b.end_slot());
    for (int t = lo; t < hi; ++t) {
        if (a.at(t) != b.at(t)) return false;
    }
    return true;
}

namespace {

void require_same_grid(const PowerProfile& a, const PowerProfile& b) {
    if (!(a.grid() == b.grid())) {
        throw Error(ErrorKind::GridMismatch, "profiles are defined on different time grids");
    }
}

template <typename Op>
PowerProfile combine_union(const PowerProfile& a, const PowerProfile& b, Op op) {
    require_same_grid(a, b);
    if (a.empty() && b.empty()) return PowerProfile(a.grid());
    const int lo = a.empty() ? b.start_slot() : b.empty() ? a.start_slot() : std::min(a.start_slot(), b.start_slot());
    const int hi = std::max(a.end_slot(), b.end_slot());
    std::vector<Milliwatts> out;
    out.reserve(static_cast<std::size_t>(hi - lo));
    for (int t = lo; t < hi; ++t) out.push_back(op(a.at(t), b.at(t)));
    return PowerProfile(a.grid(), lo, std::move(out));
}

}  // namespace

PowerProfile profile_add(const PowerProfile& a, const PowerProfile& b) {
    return combine_union(a, b, [](Milliwatts x, Milliwatts y) { return x + y; });
}

PowerProfile profile_sub_clamped(const PowerProfile& a, const PowerProfile& b) {
    return combine_union(a, b, [](Milliwatts x, Milliwatts y) { return std::max<Milliwatts>(0, x - y); });
}

PowerProfile profile_min(const PowerProfile& a, const PowerProfile& b) {
    require_same_grid(a, b);
    std::vector<Milliwatts> out;
    for (int t = a.start_slot(); t < a.end_slot(); ++t) out.push_back(std::min(a.at(t), b.at(t)));
    return PowerProfile(a.grid(), a.start_slot(), std::move(out));
}

bool profile_covers(const PowerProfile& supply, const PowerProfile& target) {
    require_same_grid(supply, target);
    for (int t = target.start_slot(); t < target.end_slot(); ++t) {
        if (supply.at(t) < target.at(t)) return false;
    }
    return true;
}

Energy energy_of(const PowerProfile& p) {
    std::int64_t sum = 0;
    for (auto v : p.values()) sum += v;
    return {sum * p.grid().slot_minutes};
}

json to_json(const PowerProfile& p) {
    json values = json::array();
    for (auto v : p.values()) values.push_back(mw_to_kw(v));
    return json{{"start_slot", p.start_slot()}, {"values", std::move(values)}};
}

PowerProfile profile_from_json(const json& j, TimeGrid grid) {
    if (!j.is_object()) throw Error(ErrorKind::Validation, "profile: expected an object {start_slot, values}");
    std::vector<double> kw;
    if (j.contains("values")) {
        for (const auto& v : j.at("values")) {
            if (!v.is_number()) throw Error(ErrorKind::Validation, "profile.values: expected numbers");
            kw.push_back(v.get<double>());
        }
    }
    const int start = j.value("start_slot", 0);
    auto p = PowerProfile::from_kw(grid, start, kw);
    if (p.end_slot() > grid.horizon_slots) {
        throw Error(ErrorKind::Validation, "profile: window extends past the horizon");
    }
    return p;
}

CentsPerKwh Tariff::at(int slot) const {
    if (per_slot.empty()) return flat;
    if (slot < 0 || slot >= static_cast<int>(per_slot.size())) return per_slot.back();
    return per_slot[static_cast<std::size_t>(slot)];
}

json to_json(const Tariff& t) {
    if (t.per_slot.empty()) return json{{"flat", t.flat}};
    return json{{"per_slot", t.per_slot}};
}

Tariff tariff_from_json(const json& j, const TimeGrid& grid) {
    Tariff t;
    if (j.is_number()) {
        t.flat = j.get<CentsPerKwh>();
    } else if (j.contains("per_slot")) {
        t.per_slot = j.at("per_slot").get<std::vector<CentsPerKwh>>();
        if (static_cast<int>(t.per_slot.size()) < grid.horizon_slots) {
            throw Error(ErrorKind::Validation, "tariff.per_slot: shorter than the horizon");
        }
    } else {
        t.flat = j.at("flat").get<CentsPerKwh>();
    }
    if (t.flat < 0) throw Error(ErrorKind::Validation, "tariff: prices must be non-negative");
    for (auto v : t.per_slot) {
        if (v < 0) throw Error(ErrorKind::Validation, "tariff.per_slot: prices must be non-negative");
    }
    return t;
}

json to_json(const TimeGrid& g) {
    return json{{"slot_minutes", g.slot_minutes}, {"horizon_slots", g.horizon_slots}};
}

TimeGrid time_grid_from_json(const json& j) {
    TimeGrid g;
    g.slot_minutes = j.value("slot_minutes", 15);
    g.horizon_slots = j.at("horizon_slots").get<int>();
    g.validate();
    return g;
}

}  // namespace dsm
