#include <gtest/gtest.h>

#include <random>

#include "dsm/clearing.hpp"
#include "oracles.hpp"

using namespace dsm;

namespace {

const TimeGrid kGrid{15, 96};

Offer offer(const std::string& id, int start, std::vector<double> kw, std::int64_t cents) {
    return {id, "req", "m", PowerProfile::from_kw(kGrid, start, kw), {cents}};
}

ClearingInstance three_offers() {
    ClearingInstance in;
    in.request_id = "req";
    in.target = PowerProfile::from_kw(kGrid, 40, {10});
    in.offers = {offer("o1", 40, {6}, 300), offer("o2", 40, {5}, 200), offer("o3", 40, {10}, 600)};
    return in;
}

ClearingInstance two_slot() {
    ClearingInstance in;
    in.request_id = "req";
    in.target = PowerProfile::from_kw(kGrid, 10, {4, 4});
    in.offers = {offer("o1", 10, {4}, 100), offer("o2", 10, {4, 4}, 300), offer("o3", 11, {4}, 150)};
    return in;
}

}  // namespace

TEST(Clearing, ThreeOfferExample) {
    const auto r = clear_offers(three_offers());
    EXPECT_TRUE(r.feasible);
    EXPECT_EQ(r.selected, (std::vector<OfferId>{"o1", "o2"}));
    EXPECT_EQ(r.total_price.cents, 500);
    EXPECT_EQ(r.method, ClearingMethod::Exact);
    const auto o = oracle::brute_force_clear(three_offers());
    EXPECT_EQ(o.ids, r.selected);
    EXPECT_EQ(o.price, 500);
}

TEST(Clearing, TwoSlotExample) {
    const auto r = clear_offers(two_slot());
    EXPECT_EQ(r.selected, (std::vector<OfferId>{"o1", "o3"}));
    EXPECT_EQ(r.total_price.cents, 250);
    EXPECT_TRUE(profile_covers(r.coverage, two_slot().target));
}

TEST(Clearing, NoOffersIsInfeasible) {
    auto in = three_offers();
    in.offers.clear();
    const auto r = clear_offers(in);
    EXPECT_FALSE(r.feasible);
    EXPECT_TRUE(r.selected.empty());
    EXPECT_EQ(r.total_price.cents, 0);
}

TEST(Clearing, SingleExactCover) {
    ClearingInstance in;
    in.request_id = "req";
    in.target = PowerProfile::from_kw(kGrid, 3, {2, 2});
    in.offers = {offer("only", 3, {2, 2}, 75)};
    in.budget_cap = Money{75};
    const auto r = clear_offers(in);
    EXPECT_TRUE(r.feasible);
    EXPECT_EQ(r.selected, (std::vector<OfferId>{"only"}));
    EXPECT_EQ(r.total_price.cents, 75);
}

TEST(Clearing, BudgetCapMakesInfeasible) {
    auto in = three_offers();
    in.budget_cap = Money{499};
    EXPECT_FALSE(clear_offers(in).feasible);
    EXPECT_FALSE(oracle::brute_force_clear(in).feasible);
}

TEST(Clearing, TieBreakFewerOffersThenIds) {
    ClearingInstance in;
    in.request_id = "req";
    in.target = PowerProfile::from_kw(kGrid, 0, {4});
    in.offers = {offer("a", 0, {2}, 100), offer("b", 0, {2}, 100), offer("c", 0, {4}, 200), offer("d", 0, {4}, 200)};
    EXPECT_EQ(clear_offers(in).selected, (std::vector<OfferId>{"c"}));
}

TEST(Clearing, MatchesBruteForceOnRandomInstances) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        const auto in = oracle::random_instance(rng, i % 2 == 1);
        const auto r = clear_offers(in);
        const auto o = oracle::brute_force_clear(in);
        ASSERT_EQ(r.feasible, o.feasible) << to_json(in).dump();
        if (!o.feasible) continue;
        EXPECT_EQ(r.total_price.cents, o.price) << to_json(in).dump();
        EXPECT_EQ(r.selected, o.ids) << to_json(in).dump();
        EXPECT_TRUE(profile_covers(r.coverage, in.target));
    }
}

TEST(Clearing, AddingAnOfferNeverRaisesThePrice) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        auto in = oracle::random_instance(rng, false);
        const auto before = clear_exact(in);
        auto extra = oracle::random_instance(rng, false).offers.front();
        extra.offer_id = "zz";
        extra.supply = PowerProfile(in.target.grid(), in.target.start_slot(),
                                    std::vector<Milliwatts>(static_cast<std::size_t>(in.target.length()),
                                                            extra.supply.peak()));
        in.offers.push_back(extra);
        const auto after = clear_exact(in);
        if (before.feasible) {
            EXPECT_TRUE(after.feasible);
            EXPECT_LE(after.total_price.cents, before.total_price.cents);
        }
    }
}

TEST(Clearing, GreedyNeverUnderCovers) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 300; ++i) {
        const auto in = oracle::random_instance(rng, false);
        const auto g = clear_greedy(in);
        if (g.feasible) {
            EXPECT_TRUE(profile_covers(g.coverage, in.target));
            EXPECT_EQ(g.method, ClearingMethod::Greedy);
        }
        EXPECT_EQ(g.feasible, oracle::brute_force_clear(in).feasible);
    }
}

TEST(Clearing, ThresholdSelectsMethod) {
    std::mt19937_64 rng(17);
    auto in = oracle::random_instance(rng, false);
    EXPECT_EQ(clear_offers(in, in.offers.size()).method, ClearingMethod::Exact);
    EXPECT_EQ(clear_offers(in, in.offers.size() - 1).method, ClearingMethod::Greedy);
}

TEST(Clearing, InstanceJsonRoundTrip) {
    auto in = three_offers();
    in.budget_cap = Money{900};
    const auto back = clearing_instance_from_json(to_json(in));
    EXPECT_EQ(back.offers.size(), 3u);
    EXPECT_EQ(back.target, in.target);
    EXPECT_EQ(back.budget_cap->cents, 900);
    EXPECT_THROW(clearing_instance_from_json(json{{"offers", json::array()}}), Error);
}
