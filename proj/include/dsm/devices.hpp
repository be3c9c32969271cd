#pragma once

#include <string>
#include <variant>

#include "dsm/core.hpp"

namespace dsm {

// Runs `duration` slots inside [earliest_start, deadline). deadline is the
// finish-by slot, i.e. the first slot the device may no longer occupy.
struct DeferrableLoad {
    Milliwatts power = 0;
    int duration = 1;
    int earliest_start = 0;
    int deadline = 0;
    bool interruptible = false;
};

// First-order room model: T(t+1) = T(t) + alpha * (T_out(t) - T(t)) + beta * P(t) * dt,
// P in kW, dt in hours, beta in degC per kWh.
struct ThermostaticHeater {
    Milliwatts rated_power = 0;
    double t_min = 19.0;
    double t_max = 22.0;
    double t0 = 20.0;
    double alpha = 0.1;
    double beta = 1.0;
    std::string outdoor_series = "outdoor";
};

// Charges between arrival_slot and departure_slot (exclusive), any power in
// [0, max_power] per slot.
struct EvCharger {
    Energy required_energy;
    int arrival_slot = 0;
    int departure_slot = 0;
    Milliwatts max_power = 0;
};

struct FixedLoad {
    PowerProfile profile;
};

using DeviceSpec = std::variant<DeferrableLoad, ThermostaticHeater, EvCharger, FixedLoad>;

struct Device {
    std::string device_id;
    DeviceSpec spec;
};

std::string_view kind_name(const DeviceSpec& spec);

// Throws Error(Validation) naming the offending field.
void validate_device(const Device& device, const TimeGrid& grid);

json to_json(const Device& device);
Device device_from_json(const json& j, const TimeGrid& grid);

}  // namespace dsm
