#pragma once

// Per-customer energy-efficiency control: baseline scheduling, flexibility
// queries, signal response, overrides and metering.

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/devices.hpp"
#include "dsm/platform.hpp"

namespace dsm {

struct SitePrefs {
    // Cents/kWh charged against every kWh moved away from the current schedule.
    CentsPerKwh comfort_weight = 1;
    bool auto_accept = true;
};

using OutdoorSeries = std::map<std::string, std::vector<double>>;

struct CustomerSite {
    CustomerId customer_id;
    std::vector<Device> devices;
    PowerProfile pv;
    SitePrefs prefs;
    Tariff tariff;
    OutdoorSeries outdoor;
};

struct Schedule {
    std::vector<std::string> device_ids;
    std::vector<std::vector<Milliwatts>> power;  // [device][slot], full horizon
    LogicalTime committed_at;

    Milliwatts total(int slot) const;
    std::vector<Milliwatts> totals() const;
    // Sum of the device's per-slot power, in mW-slots.
    std::int64_t device_mw_slots(std::size_t device) const;
    friend bool operator==(const Schedule& a, const Schedule& b) { return a.power == b.power; }
};

json to_json(const Schedule& s, const TimeGrid& grid);

// Room temperature at the start of every slot 0..H for a heater running the given trace.
std::vector<double> simulate_temperatures(const ThermostaticHeater& h, const std::vector<Milliwatts>& power,
                                          const std::vector<double>& outdoor, const TimeGrid& grid);

// Deterministic schedule minimising tariff cost: deferrable and EV loads at
// their cheapest feasible position (earliest on ties), heaters bang-bang.
Schedule compute_baseline_schedule(const CustomerSite& site, const TimeGrid& grid);

struct DsmSignal {
    SignalId signal_id;
    RequestId request_id;
    ActorId manager_id;
    CustomerId customer_id;
    Direction direction = Direction::Decrease;
    PowerProfile requested;
    CentsPerKwh incentive_rate = 0;
    LogicalTime issued_at;
};

json to_json(const DsmSignal& s);
DsmSignal signal_from_json(const json& j, const TimeGrid& grid);

enum class SignalStatus { Pending, AutoAccepted, PartiallyMet, Overridden };

std::string_view to_string(SignalStatus s);

struct SignalResponse {
    SignalId signal_id;
    CustomerId customer_id;
    SignalStatus status = SignalStatus::Pending;
    PowerProfile planned_delta;
    Schedule baseline_snapshot;
    // Energy of min(requested, planned_delta): the part the signal pays for.
    Energy credit_eligible;
    std::optional<int> overridden_at;
};

json to_json(const SignalResponse& r, const TimeGrid& grid);

struct MeterReading {
    CustomerId customer_id;
    int slot = 0;
    std::vector<std::pair<std::string, Milliwatts>> devices;
    Milliwatts pv = 0;
    Milliwatts net = 0;  // devices - pv, negative when exporting
};

json to_json(const MeterReading& m);

// One agent per site. All mutations serialize on the site's mutex.
class Eecs {
public:
    Eecs(CustomerSite site, TimeGrid grid, Broker* broker = nullptr);

    const CustomerSite& site() const { return site_; }
    const TimeGrid& grid() const { return grid_; }
    const CustomerId& customer_id() const { return site_.customer_id; }

    Schedule schedule() const;
    Schedule baseline() const;

    // First slot that may still change: the clock slot, or after the last metered slot.
    int now() const;
    void set_clock(int slot);

    // Per-slot power this site could shed (Decrease) or add (Increase) in
    // [first, last) without breaking a device constraint.
    PowerProfile query_flexibility(int first, int last, Direction dir) const;

    // Applies immediately when prefs.auto_accept, otherwise records the
    // signal as Pending until apply_pending or override_signal.
    SignalResponse receive_signal(const DsmSignal& signal);
    SignalResponse apply_signal(const DsmSignal& signal);
    std::optional<SignalResponse> apply_pending(const SignalId& id);
    std::vector<SignalId> pending_signals() const;

    // Reverts every not-yet-metered slot to the signal's snapshot. Signals
    // applied after this one on the same site are overridden with it.
    SignalResponse override_signal(const Principal& who, const SignalId& id);

    MeterReading meter_slot(int slot);
    std::optional<MeterReading> reading(int slot) const;
    int metered_through() const;

    std::optional<DsmSignal> signal(const SignalId& id) const;
    std::optional<SignalResponse> response(const SignalId& id) const;
    std::vector<SignalResponse> responses() const;
    std::vector<DsmSignal> signals() const;

    std::vector<double> temperature_trace(std::size_t device) const;

private:
    struct Applied {
        DsmSignal signal;
        SignalResponse response;
        std::size_t order = 0;
    };

    SignalResponse apply_locked(const DsmSignal& signal);
    void publish_response(const SignalResponse& r);
    int now_locked() const;

    CustomerSite site_;
    TimeGrid grid_;
    Broker* broker_;
    Principal self_;
    mutable std::mutex mutex_;
    Schedule baseline_;
    Schedule schedule_;
    int clock_ = 0;
    int metered_through_ = -1;
    std::map<int, MeterReading> readings_;
    std::map<SignalId, Applied> applied_;
    std::vector<SignalId> pending_;
    std::size_t next_order_ = 0;
};

}  // namespace dsm
