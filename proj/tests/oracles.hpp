#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They share no code with the implementation beyond the data types.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dsm/clearing.hpp"
#include "dsm/devices.hpp"

namespace oracle {

struct Choice {
    bool feasible = false;
    std::vector<std::string> ids;  // sorted
    std::int64_t price = 0;
};

// Every subset of the offers, keeping the cheapest covering one within the
// budget; ties go to fewer offers, then to the smaller sorted id list.
inline Choice brute_force_clear(const dsm::ClearingInstance& in) {
    Choice best;
    const std::size_t n = in.offers.size();
    const int first = in.target.start_slot();
    const int last = in.target.end_slot();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        std::int64_t price = 0;
        std::vector<std::string> ids;
        std::vector<std::int64_t> cover(static_cast<std::size_t>(last - first), 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(mask >> i & 1)) continue;
            price += in.offers[i].price.cents;
            ids.push_back(in.offers[i].offer_id);
            for (int t = first; t < last; ++t) cover[static_cast<std::size_t>(t - first)] += in.offers[i].supply.at(t);
        }
        bool ok = true;
        for (int t = first; t < last; ++t) ok = ok && cover[static_cast<std::size_t>(t - first)] >= in.target.at(t);
        if (!ok) continue;
        if (in.budget_cap && price > in.budget_cap->cents) continue;
        std::sort(ids.begin(), ids.end());
        const bool better = !best.feasible || price < best.price ||
                            (price == best.price && ids.size() < best.ids.size()) ||
                            (price == best.price && ids.size() == best.ids.size() && ids < best.ids);
        if (better) best = {true, ids, price};
    }
    return best;
}

// Random clearing instance: 3..12 offers over 1..4 slots, whole-kW values so
// that price ties and exact covers actually occur.
inline dsm::ClearingInstance random_instance(std::mt19937_64& rng, bool with_cap) {
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
    dsm::TimeGrid grid{15, 16};
    const int len = pick(1, 4);
    const int start = pick(0, 16 - len);
    std::vector<dsm::Milliwatts> target;
    for (int i = 0; i < len; ++i) target.push_back(dsm::kw_to_mw(pick(1, 10)));
    dsm::ClearingInstance in;
    in.request_id = "req";
    in.target = dsm::PowerProfile(grid, start, target);
    const int n = pick(3, 12);
    for (int k = 0; k < n; ++k) {
        const int a = start + pick(0, len - 1);
        const int b = pick(a + 1, start + len);
        std::vector<dsm::Milliwatts> v;
        for (int t = a; t < b; ++t) v.push_back(dsm::kw_to_mw(pick(1, 8)));
        char id[8];
        std::snprintf(id, sizeof id, "o%02d", k + 1);
        in.offers.push_back({id, "req", "m" + std::to_string(k % 3), dsm::PowerProfile(grid, a, v), {pick(1, 12) * 25}});
    }
    if (with_cap) in.budget_cap = dsm::Money{pick(2, 20) * 50};
    return in;
}

// T(t+1) = T(t) + alpha (T_out(t) - T(t)) + beta P(t) dt, stepped literally.
inline std::vector<double> step_heater(double t0, double alpha, double beta, const std::vector<double>& outdoor,
                                       const std::vector<double>& kw, double slot_hours) {
    std::vector<double> temps{t0};
    for (std::size_t t = 0; t < kw.size(); ++t) {
        const double cur = temps.back();
        temps.push_back(cur + alpha * (outdoor[t] - cur) + beta * kw[t] * slot_hours);
    }
    return temps;
}

}  // namespace oracle
