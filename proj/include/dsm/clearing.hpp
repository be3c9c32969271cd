#pragma once

// Winner determination for flexibility requests: choose the cheapest set of
// atomic, pay-as-bid offers whose summed supply covers the target profile.

#include <cstddef>
#include <optional>
#include <vector>

#include "dsm/core.hpp"

namespace dsm {

struct Offer {
    OfferId offer_id;
    RequestId request_id;
    ActorId manager_id;
    PowerProfile supply;
    Money price;
};

json to_json(const Offer& o);
Offer offer_from_json(const json& j, const TimeGrid& grid);

enum class ClearingMethod { Exact, Greedy };

std::string_view to_string(ClearingMethod m);

struct ClearingInstance {
    RequestId request_id;
    PowerProfile target;
    std::vector<Offer> offers;
    std::optional<Money> budget_cap;
};

struct ClearingResult {
    RequestId request_id;
    std::vector<OfferId> selected;  // ascending
    Money total_price;
    PowerProfile coverage;
    bool feasible = false;
    ClearingMethod method = ClearingMethod::Exact;
};

json to_json(const ClearingResult& r);
ClearingResult clearing_result_from_json(const json& j, const TimeGrid& grid);

inline constexpr std::size_t kDefaultExactThreshold = 24;

// Minimum total price, ties broken by fewer offers and then by the
// lexicographically smallest sorted offer-id list. Uses branch-and-bound
// when offers.size() <= exact_threshold, the greedy heuristic otherwise.
ClearingResult clear_offers(const ClearingInstance& instance,
                            std::size_t exact_threshold = kDefaultExactThreshold);

ClearingResult clear_exact(const ClearingInstance& instance);

// Cheapest price per uncovered kWh first, then one pass dropping redundant
// offers in descending price order.
ClearingResult clear_greedy(const ClearingInstance& instance);

// Standalone instance files: {time_grid?, request_id?, target, offers[], budget_cap_cents?}.
ClearingInstance clearing_instance_from_json(const json& j);
json to_json(const ClearingInstance& instance);

}  // namespace dsm
