#include "dsm/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace dsm {

namespace {

std::int64_t target_energy(const json& target, const TimeGrid& grid) {
    return energy_of(profile_from_json(target, grid)).mw_minutes;
}

}  // namespace

Metrics compute_metrics(const std::vector<Event>& log) {
    if (log.empty()) throw Error(ErrorKind::Validation, "log: empty");
    auto hit = std::find_if(log.begin(), log.end(), [](const Event& e) { return e.topic == "scenario.setup"; });
    if (hit == log.end() || hit->type != "Scenario") {
        throw Error(ErrorKind::Validation, "log: missing scenario header");
    }
    const Event& head = *hit;
    const Event& tail = log.back();
    if (tail.topic != "sim.clock" || tail.type != "RunCompleted" ||
        tail.payload.value("event_count", std::size_t{0}) + 1 != log.size()) {
        throw Error(ErrorKind::Validation, "log: truncated (no matching completion record)");
    }

    Metrics m;
    m.run_id = head.payload.at("run_id").get<std::string>();
    m.grid = time_grid_from_json(head.payload.at("time_grid"));
    m.event_count = log.size();
    const auto H = static_cast<std::size_t>(m.grid.horizon_slots);

    std::map<CustomerId, std::vector<SegmentId>> segment_of;
    std::map<RequestId, RequestMetrics> requests;
    std::map<std::string, RequestId> signal_request;

    for (const auto& e : log) {
        const auto& p = e.payload;
        if (e.type == "Segment") {
            auto& seg = m.segments[p.at("segment_id").get<std::string>()];
            seg.capacity = p.at("capacity_mw").get<Milliwatts>();
            seg.load.assign(H, 0);
            for (const auto& c : p.at("members")) segment_of[c.get<std::string>()].push_back(p.at("segment_id"));
        } else if (e.type == "MeterReading") {
            const auto slot = p.at("slot").get<std::size_t>();
            const auto net = p.at("net_mw").get<Milliwatts>();
            auto it = segment_of.find(p.at("customer_id").get<std::string>());
            if (it == segment_of.end() || slot >= H) continue;
            for (const auto& seg : it->second) m.segments[seg].load[slot] += net;
        } else if (e.type == "ShiftRequest") {
            auto& r = requests[p.at("request_id").get<std::string>()];
            r.request_id = p.at("request_id");
            r.requester = p.at("requester");
            r.requester_role = p.at("requester_role");
            r.outcome = p.at("state");
            r.target_mw_minutes = target_energy(p.at("target"), m.grid);
        } else if (e.type == "AcceptanceDecision") {
            auto& r = requests[p.at("request_id").get<std::string>()];
            r.outcome = p.at("outcome");
            r.clearing_price_cents = p.at("clearing_price_cents");
            r.channel_cost_cents = p.at("channel_cost_cents");
            if (!p.at("exchange_cost_cents").is_null()) r.exchange_cost_cents = p.at("exchange_cost_cents").get<std::int64_t>();
        } else if (e.type == "Settlement") {
            auto& r = requests[p.at("request_id").get<std::string>()];
            r.settled = true;
            r.outcome = "Settled";
            r.payout_cents = p.at("total_payout_cents");
            for (const auto& mg : p.at("managers")) r.delivered_mw_minutes += mg.at("delivered_mw_minutes").get<std::int64_t>();
            m.total_payouts_cents += r.payout_cents;
        } else if (e.type == "CreditLedgerEntry") {
            const auto credit = p.at("credit_cents").get<std::int64_t>();
            m.total_incentives_cents += credit;
            auto it = requests.find(p.at("request_id").get<std::string>());
            if (it != requests.end()) it->second.credits_cents += credit;
        }
    }
    for (auto& [id, seg] : m.segments) {
        seg.peak = seg.load.empty() ? 0 : *std::max_element(seg.load.begin(), seg.load.end());
        seg.violations = static_cast<int>(std::count_if(seg.load.begin(), seg.load.end(),
                                                        [&](Milliwatts v) { return v > seg.capacity; }));
    }
    for (auto& [id, r] : requests) {
        if (r.exchange_cost_cents) {
            m.retailer_cost_cents += r.channel_cost_cents;
            m.retailer_exchange_only_cents += *r.exchange_cost_cents;
        }
        m.requests.push_back(r);
    }
    return m;
}

nlohmann::ordered_json to_json(const Metrics& m) {
    using oj = nlohmann::ordered_json;
    oj segs = oj::object();
    for (const auto& [id, s] : m.segments) {
        segs[id] = oj{{"capacity_mw", s.capacity},
                      {"peak_mw", s.peak},
                      {"violations", s.violations},
                      {"load_mw", s.load}};
    }
    oj reqs = oj::array();
    for (const auto& r : m.requests) {
        oj x{{"request_id", r.request_id},
             {"requester", r.requester},
             {"requester_role", r.requester_role},
             {"outcome", r.outcome},
             {"clearing_price_cents", r.clearing_price_cents}};
        x["exchange_cost_cents"] = r.exchange_cost_cents ? oj(*r.exchange_cost_cents) : oj(nullptr);
        x["channel_cost_cents"] = r.channel_cost_cents;
        x["target_mw_minutes"] = r.target_mw_minutes;
        x["delivered_mw_minutes"] = r.delivered_mw_minutes;
        // Parts per million, integral so reports stay byte-stable.
        x["fulfillment_ppm"] = r.target_mw_minutes > 0
                                   ? round_half_even(static_cast<__int128>(r.delivered_mw_minutes) * 1'000'000,
                                                     r.target_mw_minutes)
                                   : 0;
        x["payout_cents"] = r.payout_cents;
        x["credits_cents"] = r.credits_cents;
        x["settled"] = r.settled;
        reqs.push_back(std::move(x));
    }
    return oj{{"run_id", m.run_id},
              {"slot_minutes", m.grid.slot_minutes},
              {"horizon_slots", m.grid.horizon_slots},
              {"event_count", m.event_count},
              {"segments", std::move(segs)},
              {"total_incentives_cents", m.total_incentives_cents},
              {"total_payouts_cents", m.total_payouts_cents},
              {"retailer_cost_cents", m.retailer_cost_cents},
              {"retailer_exchange_only_cents", m.retailer_exchange_only_cents},
              {"requests", std::move(reqs)}};
}

std::string metrics_csv(const Metrics& m) {
    std::ostringstream out;
    out << "slot,segment,load_mw,capacity_mw,over_capacity\n";
    for (int t = 0; t < m.grid.horizon_slots; ++t) {
        for (const auto& [id, s] : m.segments) {
            const Milliwatts v = s.load[static_cast<std::size_t>(t)];
            out << t << ',' << id << ',' << v << ',' << s.capacity << ',' << (v > s.capacity ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

}  // namespace dsm
