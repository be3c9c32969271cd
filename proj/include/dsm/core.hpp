#pragma once

// Shared vocabulary for every marketplace actor: discrete time grid,
// integer power/energy/money arithmetic, identifiers and the error type.

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dsm {

using json = nlohmann::json;

enum class ErrorKind {
    Validation,
    Access,
    Authentication,
    NotFound,
    Conflict,
    Duplicate,
    State,
    Deadline,
    GridMismatch,
    Topic,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

using ActorId = std::string;
using CustomerId = std::string;
using SegmentId = std::string;
using RequestId = std::string;
using OfferId = std::string;
using SignalId = std::string;
using ProgrammeId = std::string;

enum class Direction { Decrease, Increase };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

// Phases of one simulated slot, in execution order. Setup is used for
// events emitted while a scenario is being installed.
enum class Phase : int {
    Setup = 0,
    Exogenous = 1,
    Trigger = 2,
    Bidding = 3,
    Clearing = 4,
    Dispatch = 5,
    Scheduling = 6,
    Override = 7,
    Metering = 8,
    Settlement = 9,
};

std::string_view to_string(Phase p);
Phase phase_from_string(std::string_view s);

struct LogicalTime {
    int slot = 0;
    Phase phase = Phase::Setup;

    friend auto operator<=>(const LogicalTime&, const LogicalTime&) = default;
};

json to_json(const LogicalTime& t);
LogicalTime logical_time_from_json(const json& j);

struct TimeGrid {
    int slot_minutes = 15;
    int horizon_slots = 96;

    double slot_hours() const { return slot_minutes / 60.0; }
    int slots_per_day() const { return 24 * 60 / slot_minutes; }
    void validate() const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

using Milliwatts = std::int64_t;

Milliwatts kw_to_mw(double kw);
double mw_to_kw(Milliwatts mw);

// Energy in milliwatt-minutes: exact for any slot length that divides an hour.
struct Energy {
    std::int64_t mw_minutes = 0;

    static Energy from_kwh(double kwh);
    double kwh() const { return static_cast<double>(mw_minutes) / 6.0e7; }

    friend Energy operator+(Energy a, Energy b) { return {a.mw_minutes + b.mw_minutes}; }
    friend Energy operator-(Energy a, Energy b) { return {a.mw_minutes - b.mw_minutes}; }
    Energy& operator+=(Energy o) { mw_minutes += o.mw_minutes; return *this; }
    friend auto operator<=>(const Energy&, const Energy&) = default;
};

struct Money {
    std::int64_t cents = 0;

    friend Money operator+(Money a, Money b) { return {a.cents + b.cents}; }
    friend Money operator-(Money a, Money b) { return {a.cents - b.cents}; }
    Money& operator+=(Money o) { cents += o.cents; return *this; }
    friend auto operator<=>(const Money&, const Money&) = default;

    std::string str() const;
};

// Prices and rates are integer euro-cents per kWh.
using CentsPerKwh = std::int64_t;

std::int64_t round_half_even(__int128 numerator, __int128 denominator);
std::int64_t ceil_div(__int128 numerator, __int128 denominator);

// rate x energy, rounded half-to-even to whole cents.
Money cost_of(CentsPerKwh rate, Energy e);

// Per-slot power values on a window [start_slot, start_slot + values.size()).
// Slots outside the window read as zero.
class PowerProfile {
public:
    PowerProfile() = default;
    explicit PowerProfile(TimeGrid grid) : grid_(grid) {}
    PowerProfile(TimeGrid grid, int start_slot, std::vector<Milliwatts> values);

    static PowerProfile from_kw(TimeGrid grid, int start_slot, const std::vector<double>& kw);
    static PowerProfile zeros(TimeGrid grid, int start_slot, int length);

    const TimeGrid& grid() const { return grid_; }
    bool empty() const { return values_.empty(); }
    int start_slot() const { return start_; }
    int end_slot() const { return start_ + static_cast<int>(values_.size()); }
    int length() const { return static_cast<int>(values_.size()); }
    bool contains(int slot) const { return slot >= start_ && slot < end_slot(); }

    Milliwatts at(int slot) const;
    void set(int slot, Milliwatts mw);
    std::span<const Milliwatts> values() const { return values_; }

    bool all_zero() const;
    Milliwatts peak() const;

    // Same values on [first, last).
    PowerProfile slice(int first, int last) const;

    friend bool operator==(const PowerProfile& a, const PowerProfile& b);

private:
    TimeGrid grid_{};
    int start_ = 0;
    std::vector<Milliwatts> values_;
};

PowerProfile profile_add(const PowerProfile& a, const PowerProfile& b);
bool profile_covers(const PowerProfile& supply, const PowerProfile& target);
Energy energy_of(const PowerProfile& p);

// max(0, a - b) pointwise over the union window.
PowerProfile profile_sub_clamped(const PowerProfile& a, const PowerProfile& b);
// min(a, b) pointwise over a's window.
PowerProfile profile_min(const PowerProfile& a, const PowerProfile& b);

// Energy price in cents/kWh: either flat or one value per slot.
struct Tariff {
    CentsPerKwh flat = 0;
    std::vector<CentsPerKwh> per_slot;

    CentsPerKwh at(int slot) const;
};

json to_json(const Tariff& t);
Tariff tariff_from_json(const json& j, const TimeGrid& grid);

json to_json(const PowerProfile& p);
PowerProfile profile_from_json(const json& j, TimeGrid grid);

json to_json(const TimeGrid& g);
TimeGrid time_grid_from_json(const json& j);

}  // namespace dsm
