#include <gtest/gtest.h>

#include <random>

#include "dsm/dsm_manager.hpp"

using namespace dsm;

namespace {

const TimeGrid kGrid{15, 96};
const Principal kAdmin{"market", Role::Admin, "tok-admin"};
const Principal kDso{"dso", Role::GridOperator, "tok-dso"};
const Principal kM1{"m1", Role::DsmManager, "tok-m1"};

PowerProfile kw(int start, std::vector<double> v) { return PowerProfile::from_kw(kGrid, start, v); }

struct FakeSites : SiteAccess {
    std::vector<CustomerId> members;
    std::map<CustomerId, PowerProfile> flex;
    std::map<SignalId, SignalResponse> responses;
    std::map<std::pair<CustomerId, int>, Milliwatts> meter;

    std::vector<CustomerId> scope_members(const std::string&) const override { return members; }
    PowerProfile query_flexibility(const CustomerId& c, int first, int last, Direction) const override {
        auto it = flex.find(c);
        return it == flex.end() ? PowerProfile(kGrid) : it->second.slice(first, last);
    }
    std::optional<SignalResponse> signal_response(const CustomerId&, const SignalId& id) const override {
        auto it = responses.find(id);
        if (it == responses.end()) return std::nullopt;
        return it->second;
    }
    std::optional<Milliwatts> metered_load(const CustomerId& c, int slot) const override {
        auto it = meter.find({c, slot});
        if (it == meter.end()) return std::nullopt;
        return it->second;
    }
};

struct Manager : ::testing::Test {
    Broker broker;
    B2cMarket b2c{broker, kAdmin};
    B2bMarket b2b{broker, kAdmin, kGrid};
    FakeSites sites;
    DsmManager mgr{kM1, ManagerPolicy{200'000, 900'000}, broker, b2c, b2b, sites};

    void SetUp() override {
        Programme p;
        p.programme_id = "flex";
        p.incentive_rate = 10;
        b2c.publish_programme(kM1, p);
        broker.set_clock({30, Phase::Trigger});
    }

    void customer(const std::string& id, PowerProfile flex, bool subscribed = true) {
        sites.members.push_back(id);
        std::sort(sites.members.begin(), sites.members.end());
        sites.flex[id] = std::move(flex);
        if (subscribed) b2c.subscribe({id, Role::Customer, "tok-" + id}, "flex");
    }

    ShiftRequest request(std::vector<double> target) {
        ShiftRequest r;
        r.scope = "seg1";
        r.target = kw(40, target);
        r.bid_deadline = {30, Phase::Clearing};
        r.request_id = b2b.submit_request(kDso, r);
        return *b2b.find(r.request_id);
    }

    // Runs bid -> clear -> accept -> dispatch and returns the accepted offer.
    Offer win(const ShiftRequest& r) {
        broker.set_clock({30, Phase::Bidding});
        EXPECT_TRUE(mgr.bid(r).has_value());
        broker.set_clock({30, Phase::Clearing});
        b2b.clear_request(r.request_id);
        b2b.decide_acceptance(r.request_id, std::vector<CentsPerKwh>(96, 0));
        broker.set_clock({30, Phase::Dispatch});
        return b2b.accepted_offers(r.request_id).front();
    }

    void respond(const DsmSignal& s, const std::vector<double>& baseline_kw) {
        SignalResponse r;
        r.signal_id = s.signal_id;
        r.customer_id = s.customer_id;
        r.status = SignalStatus::AutoAccepted;
        r.baseline_snapshot.device_ids = {"d"};
        std::vector<Milliwatts> base(96, 0);
        for (std::size_t i = 0; i < baseline_kw.size(); ++i) base[40 + i] = kw_to_mw(baseline_kw[i]);
        r.baseline_snapshot.power = {base};
        sites.responses[s.signal_id] = r;
    }
};

}  // namespace

TEST_F(Manager, EmptyScopeHasNoFlexibility) {
    const auto e = mgr.estimate_flexibility(request({6, 6}));
    EXPECT_TRUE(e.aggregate.all_zero());
    EXPECT_EQ(e.incentive_cost.cents, 0);
    EXPECT_FALSE(mgr.build_offer(e, request({6, 6})).has_value());
}

TEST_F(Manager, OneWasherAndAdditivity) {
    customer("c1", kw(40, {2, 2}));
    auto e = mgr.estimate_flexibility(request({6, 6}));
    EXPECT_EQ(e.aggregate, kw(40, {2, 2}));
    EXPECT_EQ(e.incentive_cost.cents, 10);
    customer("c2", kw(40, {2, 2}));
    e = mgr.estimate_flexibility(request({6, 6}));
    EXPECT_EQ(e.aggregate, kw(40, {4, 4}));
    EXPECT_EQ(e.incentive_cost.cents, 20);
}

TEST_F(Manager, UnsubscribedCustomersAreIgnored) {
    customer("c1", kw(40, {2, 2}), false);
    EXPECT_TRUE(mgr.estimate_flexibility(request({6, 6})).aggregate.all_zero());
}

TEST_F(Manager, OfferPriceExample) {
    customer("c1", kw(40, {2, 2}));
    const auto r = request({6, 6});
    const auto o = mgr.build_offer(mgr.estimate_flexibility(r), r);
    ASSERT_TRUE(o.has_value());
    EXPECT_EQ(o->supply, kw(40, {1.8, 1.8}));
    EXPECT_DOUBLE_EQ(energy_of(o->supply).kwh(), 0.9);
    EXPECT_EQ(o->price.cents, 11);
}

TEST_F(Manager, SupplyCappedAtTarget) {
    customer("c1", kw(40, {8, 8}));
    const auto r = request({1, 6});
    const auto o = mgr.build_offer(mgr.estimate_flexibility(r), r);
    EXPECT_EQ(o->supply, kw(40, {1, 6}));
}

TEST_F(Manager, PriceCoversIncentiveCost) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 40; ++i) {
        const std::string id = "c" + std::to_string(i);
        customer(id, PowerProfile(kGrid, 40, {static_cast<Milliwatts>(rng() % 5'000'000),
                                              static_cast<Milliwatts>(rng() % 5'000'000)}));
        const auto r = request({static_cast<double>(1 + rng() % 20), static_cast<double>(1 + rng() % 20)});
        const auto e = mgr.estimate_flexibility(r);
        const auto o = mgr.build_offer(e, r);
        if (!o) continue;
        Money owed{0};
        for (const auto& [c, share] : allocate_supply(o->supply, e.per_customer)) owed += cost_of(10, energy_of(share));
        EXPECT_GE(o->price.cents, owed.cents);
    }
}

TEST(Allocation, ProportionalAndExact) {
    EXPECT_EQ(allocate_supply(kw(40, {1.8}), {{"a", kw(40, {2})}}).at("a"), kw(40, {1.8}));
    const auto two = allocate_supply(kw(40, {1.8}), {{"a", kw(40, {2})}, {"b", kw(40, {2})}});
    EXPECT_EQ(two.at("a"), kw(40, {0.9}));
    EXPECT_EQ(two.at("b"), kw(40, {0.9}));
    // 1 mW cannot be split: the remainder goes to the first id.
    const auto odd = allocate_supply(PowerProfile(kGrid, 0, {1}), {{"b", kw(0, {1})}, {"a", kw(0, {1})}});
    EXPECT_EQ(odd.at("a").at(0), 1);
    EXPECT_EQ(odd.at("b").at(0), 0);
}

TEST(Allocation, ConservesSupplyOnRandomInputs) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 500; ++i) {
        std::map<CustomerId, PowerProfile> flex;
        const int n = 1 + static_cast<int>(rng() % 6);
        PowerProfile agg(kGrid, 10, {0, 0, 0});
        for (int k = 0; k < n; ++k) {
            PowerProfile f(kGrid, 10, {static_cast<Milliwatts>(rng() % 7'000'000), static_cast<Milliwatts>(rng() % 7'000'000),
                                       static_cast<Milliwatts>(rng() % 7'000'000)});
            agg = profile_add(agg, f);
            flex.emplace("c" + std::to_string(k), f);
        }
        std::vector<Milliwatts> s;
        for (int t = 10; t < 13; ++t) s.push_back(agg.at(t) == 0 ? 0 : static_cast<Milliwatts>(rng() % agg.at(t)));
        const PowerProfile supply(kGrid, 10, s);
        PowerProfile sum(kGrid, 10, {0, 0, 0});
        for (const auto& [c, share] : allocate_supply(supply, flex)) {
            sum = profile_add(sum, share);
            for (int t = 10; t < 13; ++t) EXPECT_LE(share.at(t), flex.at(c).at(t));
        }
        EXPECT_EQ(sum, supply);
    }
}

TEST_F(Manager, DispatchSkipsCustomersWhoCancelled) {
    customer("c1", kw(40, {1}));
    customer("c2", kw(40, {1}));
    const auto r = request({1.6});
    broker.set_clock({30, Phase::Bidding});
    mgr.bid(r);
    b2c.unsubscribe({"c1", Role::Customer, "tok-c1"}, b2c.active_subscription("c1")->subscription_id);
    broker.set_clock({30, Phase::Clearing});
    b2b.clear_request(r.request_id);
    b2b.decide_acceptance(r.request_id, std::vector<CentsPerKwh>(96, 0));
    broker.set_clock({30, Phase::Dispatch});
    const auto sent = mgr.dispatch_signals(r.request_id, b2b.accepted_offers(r.request_id).front());
    ASSERT_EQ(sent.size(), 1u);
    EXPECT_EQ(sent[0].customer_id, "c2");
    EXPECT_EQ(sent[0].requested, kw(40, {0.8}));
    EXPECT_EQ(sent[0].signal_id, r.request_id + ".o001.c2");
}

TEST_F(Manager, FulfillmentAllComplyNoneComplyHalfComply) {
    customer("c1", kw(40, {2, 2}));
    customer("c2", kw(40, {2, 2}));
    const auto r = request({3, 3});
    const auto offer = win(r);
    const auto sent = mgr.dispatch_signals(r.request_id, offer);
    ASSERT_EQ(sent.size(), 2u);
    for (const auto& s : sent) respond(s, {2, 2});

    // Both dropped to zero.
    for (const auto& c : {"c1", "c2"}) {
        sites.meter[{c, 40}] = 0;
        sites.meter[{c, 41}] = 0;
    }
    auto rep = mgr.report_fulfillment(r.request_id);
    EXPECT_EQ(rep.delivered, offer.supply);

    // Nobody moved.
    for (const auto& c : {"c1", "c2"}) {
        sites.meter[{c, 40}] = kw_to_mw(2);
        sites.meter[{c, 41}] = kw_to_mw(2);
    }
    EXPECT_TRUE(mgr.report_fulfillment(r.request_id).delivered.all_zero());

    // Only c2 moved.
    sites.meter[{"c2", 40}] = 0;
    sites.meter[{"c2", 41}] = 0;
    rep = mgr.report_fulfillment(r.request_id);
    EXPECT_EQ(rep.delivered, kw(40, {1.5, 1.5}));
    EXPECT_EQ(energy_of(rep.delivered).mw_minutes * 2, energy_of(offer.supply).mw_minutes);
}

TEST_F(Manager, MissingMeterDataCountsZeroAndWarns) {
    customer("c1", kw(40, {2}));
    const auto r = request({1});
    const auto sent = mgr.dispatch_signals(r.request_id, win(r));
    respond(sent[0], {2});
    const auto before = broker.size();
    EXPECT_TRUE(mgr.report_fulfillment(r.request_id).delivered.all_zero());
    const auto events = broker.read_from(before);
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].type, "MissingMeterData");
}
