#include "dsm/clearing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dsm {

std::string_view to_string(ClearingMethod m) { return m == ClearingMethod::Exact ? "Exact" : "Greedy"; }

json to_json(const Offer& o) {
    return json{{"offer_id", o.offer_id},
                {"request_id", o.request_id},
                {"manager_id", o.manager_id},
                {"supply", to_json(o.supply)},
                {"price_cents", o.price.cents}};
}

Offer offer_from_json(const json& j, const TimeGrid& grid) {
    Offer o;
    o.offer_id = j.at("offer_id").get<std::string>();
    o.request_id = j.value("request_id", std::string());
    o.manager_id = j.value("manager_id", std::string());
    o.supply = profile_from_json(j.at("supply"), grid);
    o.price = {j.at("price_cents").get<std::int64_t>()};
    if (o.price.cents < 0) throw Error(ErrorKind::Validation, "offer '" + o.offer_id + "'.price_cents: must be non-negative");
    return o;
}

json to_json(const ClearingResult& r) {
    return json{{"request_id", r.request_id},
                {"selected", r.selected},
                {"total_price_cents", r.total_price.cents},
                {"coverage", to_json(r.coverage)},
                {"feasible", r.feasible},
                {"method", std::string(to_string(r.method))}};
}

ClearingResult clearing_result_from_json(const json& j, const TimeGrid& grid) {
    ClearingResult r;
    r.request_id = j.at("request_id").get<std::string>();
    r.selected = j.at("selected").get<std::vector<OfferId>>();
    r.total_price = {j.at("total_price_cents").get<std::int64_t>()};
    r.coverage = profile_from_json(j.at("coverage"), grid);
    r.feasible = j.at("feasible").get<bool>();
    r.method = j.at("method").get<std::string>() == "Exact" ? ClearingMethod::Exact : ClearingMethod::Greedy;
    return r;
}

namespace {

// Offers restricted to the target window, supply clipped at the target so
// sums stay small; a set covers iff its clipped sum covers.
struct Prepared {
    int start = 0;
    std::vector<Milliwatts> target;
    std::vector<const Offer*> offers;  // sorted by id, useful supply only
    std::vector<std::vector<Milliwatts>> supply;
};

Prepared prepare(const ClearingInstance& in) {
    Prepared p;
    p.start = in.target.start_slot();
    p.target.assign(in.target.values().begin(), in.target.values().end());
    std::vector<const Offer*> sorted;
    for (const auto& o : in.offers) sorted.push_back(&o);
    std::sort(sorted.begin(), sorted.end(), [](const Offer* a, const Offer* b) { return a->offer_id < b->offer_id; });
    for (const Offer* o : sorted) {
        if (!(o->supply.grid() == in.target.grid())) {
            throw Error(ErrorKind::GridMismatch, "offer '" + o->offer_id + "' uses a different time grid");
        }
        std::vector<Milliwatts> s(p.target.size());
        bool useful = false;
        for (std::size_t k = 0; k < s.size(); ++k) {
            s[k] = std::min(o->supply.at(p.start + static_cast<int>(k)), p.target[k]);
            useful = useful || s[k] > 0;
        }
        // An offer contributing nothing never appears in an optimal set:
        // it cannot lower the price and it raises the offer count.
        if (!useful) continue;
        p.offers.push_back(o);
        p.supply.push_back(std::move(s));
    }
    return p;
}

ClearingResult assemble(const ClearingInstance& in, const std::vector<const Offer*>& chosen, ClearingMethod method) {
    ClearingResult r;
    r.request_id = in.request_id;
    r.method = method;
    r.feasible = true;
    r.coverage = PowerProfile(in.target.grid());
    for (const Offer* o : chosen) {
        r.selected.push_back(o->offer_id);
        r.total_price += o->price;
        r.coverage = profile_add(r.coverage, o->supply);
    }
    std::sort(r.selected.begin(), r.selected.end());
    return r;
}

ClearingResult infeasible(const ClearingInstance& in, ClearingMethod method) {
    ClearingResult r;
    r.request_id = in.request_id;
    r.method = method;
    r.feasible = false;
    r.coverage = PowerProfile(in.target.grid());
    return r;
}

class BranchAndBound {
public:
    BranchAndBound(const Prepared& p, std::optional<Money> cap) : p_(p), cap_(cap) {
        const std::size_t n = p.offers.size(), slots = p.target.size();
        suffix_.assign(n + 1, std::vector<Milliwatts>(slots, 0));
        for (std::size_t i = n; i-- > 0;) {
            for (std::size_t k = 0; k < slots; ++k) suffix_[i][k] = suffix_[i + 1][k] + p.supply[i][k];
        }
        // Per slot, offers ordered by price per unit of supply in that slot.
        by_ratio_.resize(slots);
        for (std::size_t k = 0; k < slots; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                if (p.supply[i][k] > 0) by_ratio_[k].push_back(i);
            }
            std::sort(by_ratio_[k].begin(), by_ratio_[k].end(), [&](std::size_t a, std::size_t b) {
                const __int128 lhs = static_cast<__int128>(p.offers[a]->price.cents) * p.supply[b][k];
                const __int128 rhs = static_cast<__int128>(p.offers[b]->price.cents) * p.supply[a][k];
                return lhs != rhs ? lhs < rhs : a < b;
            });
        }
    }

    void seed(const std::vector<std::size_t>& indices) {
        std::int64_t price = 0;
        for (auto i : indices) price += p_.offers[i]->price.cents;
        if (cap_ && price > cap_->cents) return;
        consider(indices, price);
    }

    std::optional<std::vector<std::size_t>> solve() {
        std::vector<Milliwatts> cov(p_.target.size(), 0);
        std::vector<std::size_t> chosen;
        dfs(0, cov, 0, chosen);
        if (!found_) return std::nullopt;
        return best_;
    }

private:
    bool covers(const std::vector<Milliwatts>& cov) const {
        for (std::size_t k = 0; k < cov.size(); ++k) {
            if (cov[k] < p_.target[k]) return false;
        }
        return true;
    }

    std::vector<OfferId> ids(const std::vector<std::size_t>& idx) const {
        std::vector<OfferId> out;
        for (auto i : idx) out.push_back(p_.offers[i]->offer_id);
        std::sort(out.begin(), out.end());
        return out;
    }

    void consider(const std::vector<std::size_t>& chosen, std::int64_t price) {
        if (found_) {
            if (price > best_price_) return;
            if (price == best_price_) {
                if (chosen.size() > best_.size()) return;
                if (chosen.size() == best_.size() && !(ids(chosen) < ids(best_))) return;
            }
        }
        found_ = true;
        best_ = chosen;
        best_price_ = price;
    }

    // Lower bound on the additional price needed: the fractional cover cost
    // of the worst single slot, using only offers from index `from` onwards.
    std::int64_t lower_bound(std::size_t from, const std::vector<Milliwatts>& cov) const {
        double bound = 0.0;
        for (std::size_t k = 0; k < cov.size(); ++k) {
            Milliwatts need = p_.target[k] - cov[k];
            if (need <= 0) continue;
            double cost = 0.0;
            for (auto i : by_ratio_[k]) {
                if (i < from) continue;
                const Milliwatts s = p_.supply[i][k];
                const double price = static_cast<double>(p_.offers[i]->price.cents);
                if (s >= need) {
                    cost += price * static_cast<double>(need) / static_cast<double>(s);
                    need = 0;
                    break;
                }
                cost += price;
                need -= s;
            }
            bound = std::max(bound, cost);
        }
        // Completions have integer prices, so the bound may be rounded up;
        // the small slack absorbs floating-point error in the sum.
        return static_cast<std::int64_t>(std::ceil(bound - 1e-6));
    }

    void dfs(std::size_t i, std::vector<Milliwatts>& cov, std::int64_t price, std::vector<std::size_t>& chosen) {
        if (covers(cov)) {
            // Extending a covering set only adds price or offers.
            if (!cap_ || price <= cap_->cents) consider(chosen, price);
            return;
        }
        if (i == p_.offers.size()) return;
        for (std::size_t k = 0; k < cov.size(); ++k) {
            if (cov[k] + suffix_[i][k] < p_.target[k]) return;
        }
        const std::int64_t lb = price + lower_bound(i, cov);
        if (cap_ && lb > cap_->cents) return;
        if (found_) {
            if (lb > best_price_) return;
            if (lb == best_price_ && chosen.size() + 1 > best_.size()) return;
        }

        const Offer* o = p_.offers[i];
        for (std::size_t k = 0; k < cov.size(); ++k) cov[k] += p_.supply[i][k];
        chosen.push_back(i);
        dfs(i + 1, cov, price + o->price.cents, chosen);
        chosen.pop_back();
        for (std::size_t k = 0; k < cov.size(); ++k) cov[k] -= p_.supply[i][k];

        dfs(i + 1, cov, price, chosen);
    }

    const Prepared& p_;
    std::optional<Money> cap_;
    std::vector<std::vector<Milliwatts>> suffix_;
    std::vector<std::vector<std::size_t>> by_ratio_;
    bool found_ = false;
    std::vector<std::size_t> best_;
    std::int64_t best_price_ = 0;
};

std::optional<std::vector<std::size_t>> greedy_indices(const Prepared& p) {
    const std::size_t n = p.offers.size();
    std::vector<Milliwatts> deficit = p.target;
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> chosen;
    auto uncovered = [&] { return std::any_of(deficit.begin(), deficit.end(), [](Milliwatts d) { return d > 0; }); };
    while (uncovered()) {
        std::optional<std::size_t> pick;
        Milliwatts pick_useful = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            Milliwatts useful = 0;
            for (std::size_t k = 0; k < deficit.size(); ++k) useful += std::min(p.supply[i][k], std::max<Milliwatts>(0, deficit[k]));
            if (useful == 0) continue;
            if (!pick) {
                pick = i;
                pick_useful = useful;
                continue;
            }
            // price_i / useful_i < price_pick / useful_pick, lower id on ties
            const __int128 lhs = static_cast<__int128>(p.offers[i]->price.cents) * pick_useful;
            const __int128 rhs = static_cast<__int128>(p.offers[*pick]->price.cents) * useful;
            if (lhs < rhs) {
                pick = i;
                pick_useful = useful;
            }
        }
        if (!pick) return std::nullopt;
        taken[*pick] = true;
        chosen.push_back(*pick);
        for (std::size_t k = 0; k < deficit.size(); ++k) deficit[k] -= p.supply[*pick][k];
    }

    // Redundancy elimination, most expensive first.
    std::vector<std::size_t> order = chosen;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto pa = p.offers[a]->price.cents, pb = p.offers[b]->price.cents;
        return pa != pb ? pa > pb : p.offers[a]->offer_id > p.offers[b]->offer_id;
    });
    std::vector<Milliwatts> cov(p.target.size(), 0);
    for (auto i : chosen) {
        for (std::size_t k = 0; k < cov.size(); ++k) cov[k] += p.supply[i][k];
    }
    std::vector<bool> keep(n, false);
    for (auto i : chosen) keep[i] = true;
    for (auto i : order) {
        bool redundant = true;
        for (std::size_t k = 0; k < cov.size(); ++k) {
            if (cov[k] - p.supply[i][k] < p.target[k]) {
                redundant = false;
                break;
            }
        }
        if (redundant) {
            keep[i] = false;
            for (std::size_t k = 0; k < cov.size(); ++k) cov[k] -= p.supply[i][k];
        }
    }
    std::vector<std::size_t> out;
    for (auto i : chosen) {
        if (keep[i]) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void validate_instance(const ClearingInstance& in) {
    for (const auto& o : in.offers) {
        if (o.price.cents < 0) throw Error(ErrorKind::Validation, "offer '" + o.offer_id + "': negative price");
        if (!o.supply.empty() && (o.supply.start_slot() < in.target.start_slot() || o.supply.end_slot() > in.target.end_slot())) {
            throw Error(ErrorKind::Validation, "offer '" + o.offer_id + "': supply window outside the target window");
        }
    }
}

std::vector<const Offer*> to_offers(const Prepared& p, const std::vector<std::size_t>& idx) {
    std::vector<const Offer*> out;
    for (auto i : idx) out.push_back(p.offers[i]);
    return out;
}

}  // namespace

ClearingResult clear_exact(const ClearingInstance& in) {
    validate_instance(in);
    const Prepared p = prepare(in);
    BranchAndBound bb(p, in.budget_cap);
    if (auto g = greedy_indices(p)) bb.seed(*g);
    auto best = bb.solve();
    if (!best) return infeasible(in, ClearingMethod::Exact);
    return assemble(in, to_offers(p, *best), ClearingMethod::Exact);
}

ClearingResult clear_greedy(const ClearingInstance& in) {
    validate_instance(in);
    const Prepared p = prepare(in);
    auto chosen = greedy_indices(p);
    if (!chosen) return infeasible(in, ClearingMethod::Greedy);
    auto r = assemble(in, to_offers(p, *chosen), ClearingMethod::Greedy);
    if (in.budget_cap && r.total_price > *in.budget_cap) return infeasible(in, ClearingMethod::Greedy);
    return r;
}

ClearingResult clear_offers(const ClearingInstance& in, std::size_t exact_threshold) {
    return in.offers.size() <= exact_threshold ? clear_exact(in) : clear_greedy(in);
}

ClearingInstance clearing_instance_from_json(const json& j) {
    try {
        if (!j.is_object()) throw Error(ErrorKind::Validation, "instance: expected a JSON object");
        TimeGrid grid;
        if (j.contains("time_grid")) {
            grid = time_grid_from_json(j.at("time_grid"));
        }
        ClearingInstance in;
        in.request_id = j.value("request_id", std::string("instance"));
        in.target = profile_from_json(j.at("target"), grid);
        if (in.target.empty()) throw Error(ErrorKind::Validation, "instance.target: must not be empty");
        for (const auto& o : j.value("offers", json::array())) {
            in.offers.push_back(offer_from_json(o, grid));
            if (in.offers.back().request_id.empty()) in.offers.back().request_id = in.request_id;
        }
        if (j.contains("budget_cap_cents") && !j.at("budget_cap_cents").is_null()) {
            in.budget_cap = Money{j.at("budget_cap_cents").get<std::int64_t>()};
        }
        validate_instance(in);
        return in;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, std::string("instance: ") + e.what());
    }
}

json to_json(const ClearingInstance& in) {
    json offers = json::array();
    for (const auto& o : in.offers) offers.push_back(to_json(o));
    json j{{"time_grid", to_json(in.target.grid())},
           {"request_id", in.request_id},
           {"target", to_json(in.target)},
           {"offers", std::move(offers)}};
    j["budget_cap_cents"] = in.budget_cap ? json(in.budget_cap->cents) : json(nullptr);
    return j;
}

}  // namespace dsm
