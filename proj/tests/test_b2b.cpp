#include <gtest/gtest.h>

#include <random>

#include "dsm/b2b_market.hpp"

using namespace dsm;

namespace {

const TimeGrid kGrid{15, 96};
const Principal kAdmin{"market", Role::Admin, "tok-admin"};
const Principal kRetailer{"r1", Role::Retailer, "tok-r1"};
const Principal kDso{"dso", Role::GridOperator, "tok-dso"};
const Principal kM1{"m1", Role::DsmManager, "tok-m1"};
const Principal kM2{"m2", Role::DsmManager, "tok-m2"};

struct B2b : ::testing::Test {
    Broker broker;
    B2bMarket market{broker, kAdmin, kGrid};

    void SetUp() override { broker.set_clock({30, Phase::Trigger}); }

    RequestId request(const Principal& who, std::vector<double> kw, int start = 40) {
        ShiftRequest r;
        r.scope = "seg1";
        r.target = PowerProfile::from_kw(kGrid, start, kw);
        r.bid_deadline = {30, Phase::Clearing};
        return market.submit_request(who, r);
    }

    OfferId bid(const Principal& m, const RequestId& id, std::vector<double> kw, std::int64_t cents, int start = 40) {
        broker.set_clock({30, Phase::Bidding});
        return market.place_offer(m, {"", id, m.actor_id, PowerProfile::from_kw(kGrid, start, kw), {cents}});
    }

    void to_clearing() { broker.set_clock({30, Phase::Clearing}); }
};

std::vector<CentsPerKwh> flat_quotes(CentsPerKwh q) { return std::vector<CentsPerKwh>(96, q); }

}  // namespace

TEST_F(B2b, SubmitPublishesAndAssignsIds) {
    auto h = broker.subscribe(kM1, "requests.seg1");
    const auto id = request(kDso, {6});
    EXPECT_EQ(id, "req-0001");
    EXPECT_EQ(market.find(id)->state, RequestState::Bidding);
    EXPECT_EQ(broker.poll(h).size(), 1u);

    ShiftRequest inc;
    inc.direction = Direction::Increase;
    inc.scope = "portfolio";
    inc.target = PowerProfile::from_kw(kGrid, 50, {3});
    inc.bid_deadline = {30, Phase::Clearing};
    EXPECT_EQ(market.find(market.submit_request(kRetailer, inc))->state, RequestState::Bidding);
}

TEST_F(B2b, SubmitRejectsCustomersAndPastDeadlines) {
    try {
        request({"c1", Role::Customer, "tok-c1"}, {6});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Access);
    }
    ShiftRequest r;
    r.scope = "seg1";
    r.target = PowerProfile::from_kw(kGrid, 40, {1});
    r.bid_deadline = {29, Phase::Clearing};
    EXPECT_THROW(market.submit_request(kDso, r), Error);
}

TEST_F(B2b, OfferValidation) {
    const auto id = request(kDso, {6});
    EXPECT_EQ(bid(kM1, id, {6}, 100), "req-0001.o001");
    EXPECT_THROW(bid(kM1, id, {6}, 100, 39), Error);
    EXPECT_THROW(bid(kRetailer, id, {6}, 100), Error);
    broker.set_clock({30, Phase::Clearing});
    try {
        market.place_offer(kM2, {"", id, "m2", PowerProfile::from_kw(kGrid, 40, {6}), {90}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Deadline);
    }
}

TEST_F(B2b, RetailerGoesToCheaperExchange) {
    const auto id = request(kRetailer, {10});
    bid(kM1, id, {6}, 300);
    bid(kM2, id, {5}, 200);
    to_clearing();
    EXPECT_EQ(market.clear_request(id).total_price.cents, 500);
    const auto d = market.decide_acceptance(id, flat_quotes(180));
    EXPECT_EQ(d.exchange_cost->cents, 450);
    EXPECT_EQ(d.outcome, RequestState::WentToExchange);
    EXPECT_EQ(d.channel_cost.cents, 450);
    EXPECT_TRUE(market.accepted_offers(id).empty());
}

TEST_F(B2b, RetailerAcceptsCheaperOffers) {
    const auto id = request(kRetailer, {10});
    bid(kM1, id, {6}, 300);
    bid(kM2, id, {5}, 200);
    to_clearing();
    market.clear_request(id);
    const auto d = market.decide_acceptance(id, flat_quotes(250));
    EXPECT_EQ(d.exchange_cost->cents, 625);
    EXPECT_EQ(d.outcome, RequestState::AcceptedOffers);
    EXPECT_EQ(d.channel_cost.cents, 500);
    EXPECT_EQ(market.accepted_offers(id).size(), 2u);
}

TEST_F(B2b, EqualCostPrefersOffers) {
    const auto id = request(kRetailer, {10});
    bid(kM1, id, {10}, 500);
    to_clearing();
    market.clear_request(id);
    EXPECT_EQ(market.decide_acceptance(id, flat_quotes(200)).outcome, RequestState::AcceptedOffers);
}

TEST_F(B2b, GridOperatorInfeasibleIsRejected) {
    const auto id = request(kDso, {10});
    bid(kM1, id, {4}, 100);
    to_clearing();
    EXPECT_FALSE(market.clear_request(id).feasible);
    const auto d = market.decide_acceptance(id, flat_quotes(1000));
    EXPECT_EQ(d.outcome, RequestState::Rejected);
    EXPECT_FALSE(d.exchange_cost.has_value());
}

TEST(Payout, Examples) {
    const Energy offered = Energy::from_kwh(2.5);
    EXPECT_EQ(fulfillment_payout({200}, offered, offered).cents, 200);
    EXPECT_EQ(fulfillment_payout({200}, offered, Energy::from_kwh(1.25)).cents, 100);
    EXPECT_EQ(fulfillment_payout({200}, offered, Energy{0}).cents, 0);
    EXPECT_EQ(fulfillment_payout({200}, offered, Energy::from_kwh(5)).cents, 200);
}

TEST(Payout, BoundedByPrice) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        const Money price{static_cast<std::int64_t>(rng() % 10'000)};
        const Energy offered{static_cast<std::int64_t>(1 + rng() % 1'000'000'000)};
        const Energy delivered{static_cast<std::int64_t>(rng() % 2'000'000'000)};
        const auto p = fulfillment_payout(price, offered, delivered);
        EXPECT_GE(p.cents, 0);
        EXPECT_LE(p.cents, price.cents);
    }
}

TEST_F(B2b, SettlementPaysPerManagerAndRejectsRepeats) {
    const auto id = request(kDso, {10});
    bid(kM1, id, {6}, 300);
    bid(kM2, id, {5}, 200);
    to_clearing();
    market.clear_request(id);
    market.decide_acceptance(id, flat_quotes(0));
    market.mark_dispatched(id);
    broker.set_clock({41, Phase::Settlement});
    const auto s = market.settle_request(id, {{"m1", PowerProfile::from_kw(kGrid, 40, {3})},
                                              {"m2", PowerProfile::from_kw(kGrid, 40, {0})}});
    EXPECT_EQ(s.payouts.at("m1").cents, 150);
    EXPECT_EQ(s.payouts.at("m2").cents, 0);
    EXPECT_EQ(s.total_payout.cents, 150);
    EXPECT_EQ(s.shortfall, PowerProfile::from_kw(kGrid, 40, {7}));
    EXPECT_EQ(market.find(id)->state, RequestState::Settled);
    try {
        market.settle_request(id, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Duplicate);
    }
}

TEST_F(B2b, SettleBeforeDispatchIsAStateError) {
    const auto id = request(kDso, {10});
    try {
        market.settle_request(id, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::State);
    }
}

TEST(ExchangeCost, SumsPerSlot) {
    std::vector<CentsPerKwh> q(96, 0);
    q[40] = 100;
    q[41] = 300;
    EXPECT_EQ(exchange_cost(PowerProfile::from_kw(kGrid, 40, {4, 2}), q).cents, 250);
}
