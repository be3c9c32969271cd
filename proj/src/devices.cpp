#include "dsm/devices.hpp"

#include <cmath>

namespace dsm {

namespace {

[[noreturn]] void invalid(const Device& d, const std::string& field, const std::string& why) {
    throw Error(ErrorKind::Validation, "device '" + d.device_id + "'." + field + ": " + why);
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

}  // namespace

std::string_view kind_name(const DeviceSpec& spec) {
    return std::visit(overloaded{
                          [](const DeferrableLoad&) { return std::string_view("deferrable"); },
                          [](const ThermostaticHeater&) { return std::string_view("thermostatic"); },
                          [](const EvCharger&) { return std::string_view("ev_charger"); },
                          [](const FixedLoad&) { return std::string_view("fixed"); },
                      },
                      spec);
}

void validate_device(const Device& d, const TimeGrid& grid) {
    if (d.device_id.empty()) throw Error(ErrorKind::Validation, "device.id: must not be empty");
    std::visit(
        overloaded{
            [&](const DeferrableLoad& x) {
                if (x.power <= 0) invalid(d, "power_kw", "must be positive");
                if (x.duration <= 0) invalid(d, "duration_slots", "must be positive");
                if (x.earliest_start < 0) invalid(d, "earliest_start", "must be non-negative");
                if (x.earliest_start + x.duration > x.deadline)
                    invalid(d, "deadline", "earliest_start + duration exceeds deadline");
                if (x.deadline > grid.horizon_slots) invalid(d, "deadline", "beyond the horizon");
            },
            [&](const ThermostaticHeater& x) {
                if (x.rated_power <= 0) invalid(d, "rated_power_kw", "must be positive");
                if (!(x.t_min < x.t_max)) invalid(d, "t_max", "must exceed t_min");
                if (x.t0 < x.t_min || x.t0 > x.t_max) invalid(d, "t0", "must lie within [t_min, t_max]");
                if (x.alpha < 0.0 || x.alpha > 1.0) invalid(d, "alpha", "must lie within [0, 1]");
                if (x.beta <= 0.0) invalid(d, "beta", "must be positive");
                if (x.outdoor_series.empty()) invalid(d, "outdoor_series", "must name a series");
                // One on-slot must not be able to carry the room across the whole band.
                if (x.beta * mw_to_kw(x.rated_power) * grid.slot_hours() > x.t_max - x.t_min + 1e-9)
                    invalid(d, "beta", "heat gain per slot exceeds the comfort band");
            },
            [&](const EvCharger& x) {
                if (x.max_power <= 0) invalid(d, "max_power_kw", "must be positive");
                if (x.arrival_slot < 0) invalid(d, "arrival_slot", "must be non-negative");
                if (x.departure_slot <= x.arrival_slot) invalid(d, "departure_slot", "must be after arrival_slot");
                if (x.departure_slot > grid.horizon_slots) invalid(d, "departure_slot", "beyond the horizon");
                if (x.required_energy.mw_minutes < 0) invalid(d, "required_kwh", "must be non-negative");
                const std::int64_t cap =
                    x.max_power * grid.slot_minutes * static_cast<std::int64_t>(x.departure_slot - x.arrival_slot);
                if (x.required_energy.mw_minutes > cap)
                    invalid(d, "required_kwh", "exceeds max_power over the charging window");
            },
            [&](const FixedLoad& x) {
                if (!(x.profile.grid() == grid)) invalid(d, "profile", "grid mismatch");
                if (x.profile.end_slot() > grid.horizon_slots) invalid(d, "profile", "beyond the horizon");
            },
        },
        d.spec);
}

json to_json(const Device& d) {
    json j{{"id", d.device_id}, {"kind", std::string(kind_name(d.spec))}};
    std::visit(overloaded{
                   [&](const DeferrableLoad& x) {
                       j["power_kw"] = mw_to_kw(x.power);
                       j["duration_slots"] = x.duration;
                       j["earliest_start"] = x.earliest_start;
                       j["deadline"] = x.deadline;
                       j["interruptible"] = x.interruptible;
                   },
                   [&](const ThermostaticHeater& x) {
                       j["rated_power_kw"] = mw_to_kw(x.rated_power);
                       j["t_min"] = x.t_min;
                       j["t_max"] = x.t_max;
                       j["t0"] = x.t0;
                       j["alpha"] = x.alpha;
                       j["beta"] = x.beta;
                       j["outdoor_series"] = x.outdoor_series;
                   },
                   [&](const EvCharger& x) {
                       j["required_kwh"] = x.required_energy.kwh();
                       j["arrival_slot"] = x.arrival_slot;
                       j["departure_slot"] = x.departure_slot;
                       j["max_power_kw"] = mw_to_kw(x.max_power);
                   },
                   [&](const FixedLoad& x) { j["profile"] = to_json(x.profile); },
               },
               d.spec);
    return j;
}

Device device_from_json(const json& j, const TimeGrid& grid) {
    Device d;
    try {
        d.device_id = j.at("id").get<std::string>();
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "deferrable") {
            DeferrableLoad x;
            x.power = kw_to_mw(j.at("power_kw").get<double>());
            x.duration = j.at("duration_slots").get<int>();
            x.earliest_start = j.value("earliest_start", 0);
            x.deadline = j.value("deadline", grid.horizon_slots);
            x.interruptible = j.value("interruptible", false);
            d.spec = x;
        } else if (kind == "thermostatic") {
            ThermostaticHeater x;
            x.rated_power = kw_to_mw(j.at("rated_power_kw").get<double>());
            x.t_min = j.at("t_min").get<double>();
            x.t_max = j.at("t_max").get<double>();
            x.t0 = j.at("t0").get<double>();
            x.alpha = j.at("alpha").get<double>();
            x.beta = j.at("beta").get<double>();
            x.outdoor_series = j.value("outdoor_series", std::string("outdoor"));
            d.spec = x;
        } else if (kind == "ev_charger") {
            EvCharger x;
            // Required energy is held as a whole number of mW-slots so that
            // integer per-slot schedules can meet it exactly.
            const double mw_slots = j.at("required_kwh").get<double>() * 6.0e7 / grid.slot_minutes;
            x.required_energy = {std::llround(mw_slots) * grid.slot_minutes};
            x.arrival_slot = j.value("arrival_slot", 0);
            x.departure_slot = j.at("departure_slot").get<int>();
            x.max_power = kw_to_mw(j.at("max_power_kw").get<double>());
            d.spec = x;
        } else if (kind == "fixed") {
            d.spec = FixedLoad{profile_from_json(j.at("profile"), grid)};
        } else {
            throw Error(ErrorKind::Validation, "device '" + d.device_id + "'.kind: unknown kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, std::string("device: ") + e.what());
    }
    validate_device(d, grid);
    return d;
}

}  // namespace dsm
