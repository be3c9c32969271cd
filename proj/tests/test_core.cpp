#include <gtest/gtest.h>

#include <random>

#include "dsm/core.hpp"

using namespace dsm;

namespace {

const TimeGrid kGrid{15, 96};

PowerProfile kw(int start, std::vector<double> values) { return PowerProfile::from_kw(kGrid, start, values); }

PowerProfile random_profile(std::mt19937_64& rng) {
    if (rng() % 6 == 0) return PowerProfile(kGrid);
    const int len = 1 + static_cast<int>(rng() % 6);
    const int start = static_cast<int>(rng() % 20);
    std::vector<Milliwatts> v;
    for (int i = 0; i < len; ++i) v.push_back(static_cast<Milliwatts>(rng() % 20'000'001));
    return PowerProfile(kGrid, start, v);
}

}  // namespace

TEST(ProfileAdd, PointwiseAndIdentity) {
    EXPECT_EQ(profile_add(kw(5, {2.0}), kw(5, {3.0})), kw(5, {5.0}));
    EXPECT_EQ(profile_add(kw(5, {2.0}), PowerProfile(kGrid)), kw(5, {2.0}));
    EXPECT_EQ(profile_add(kw(5, {2.0}), kw(6, {1.0})), kw(5, {2.0, 1.0}));
}

TEST(ProfileAdd, RejectsGridMismatch) {
    const PowerProfile other = PowerProfile::from_kw(TimeGrid{30, 48}, 5, {1.0});
    try {
        profile_add(kw(5, {2.0}), other);
        FAIL() << "expected a grid mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
    }
}

TEST(ProfileCovers, Examples) {
    EXPECT_TRUE(profile_covers(kw(5, {11}), kw(5, {10})));
    EXPECT_FALSE(profile_covers(kw(5, {10}), kw(5, {10, 4})));
    EXPECT_TRUE(profile_covers(kw(5, {10, 4}), kw(5, {10, 4})));
}

TEST(EnergyOf, Examples) {
    EXPECT_DOUBLE_EQ(energy_of(kw(0, {2.0, 2.0})).kwh(), 1.0);
    EXPECT_EQ(energy_of(PowerProfile(kGrid)).mw_minutes, 0);
    EXPECT_DOUBLE_EQ(energy_of(kw(0, {10.0})).kwh(), 2.5);
}

TEST(ProfileAlgebra, RandomizedLaws) {
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 500; ++i) {
        const auto a = random_profile(rng);
        const auto b = random_profile(rng);
        const auto c = random_profile(rng);
        EXPECT_EQ(profile_add(a, b), profile_add(b, a));
        EXPECT_EQ(profile_add(profile_add(a, b), c), profile_add(a, profile_add(b, c)));
        EXPECT_EQ(profile_add(a, PowerProfile(kGrid)), a);
        EXPECT_EQ(energy_of(profile_add(a, b)), energy_of(a) + energy_of(b));
    }
}

TEST(ProfileCovers, TransitiveOnSharedWindow) {
    std::mt19937_64 rng(99);
    int checked = 0;
    for (int i = 0; i < 20000; ++i) {
        std::vector<Milliwatts> x(3), y(3), z(3);
        for (int k = 0; k < 3; ++k) {
            x[k] = static_cast<Milliwatts>(rng() % 5);
            y[k] = static_cast<Milliwatts>(rng() % 5);
            z[k] = static_cast<Milliwatts>(rng() % 5);
        }
        PowerProfile a(kGrid, 4, x), b(kGrid, 4, y), c(kGrid, 4, z);
        if (profile_covers(a, b) && profile_covers(b, c)) {
            ++checked;
            EXPECT_TRUE(profile_covers(a, c));
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(Rounding, HalfEven) {
    EXPECT_EQ(round_half_even(5, 2), 2);
    EXPECT_EQ(round_half_even(7, 2), 4);
    EXPECT_EQ(round_half_even(-5, 2), -2);
    EXPECT_EQ(round_half_even(10, 3), 3);
    EXPECT_EQ(ceil_div(108, 10), 11);
    EXPECT_EQ(ceil_div(110, 10), 11);
}

TEST(CostOf, IncentiveExamples) {
    EXPECT_EQ(cost_of(10, Energy::from_kwh(0.5)).cents, 5);
    EXPECT_EQ(cost_of(10, Energy{0}).cents, 0);
    // 1.25 ct rounds half-to-even down to 1.
    EXPECT_EQ(cost_of(10, Energy::from_kwh(0.125)).cents, 1);
    EXPECT_EQ(cost_of(10, Energy::from_kwh(0.375)).cents, 4);
}

TEST(CostOf, MonotoneInEnergy) {
    std::int64_t prev = 0;
    for (std::int64_t e = 0; e < 3'000'000'000; e += 7'777'777) {
        const auto c = cost_of(13, Energy{e}).cents;
        EXPECT_GE(c, prev);
        prev = c;
    }
}

TEST(Json, ProfileRoundTrip) {
    const auto p = kw(7, {1.5, 0.0, 2.25});
    EXPECT_EQ(profile_from_json(to_json(p), kGrid), p);
    EXPECT_THROW(profile_from_json(json{{"start_slot", 95}, {"values", {1, 2}}}, kGrid), Error);
}

TEST(TimeGrid, RejectsSlotsThatDoNotDivideAnHour) {
    EXPECT_THROW((time_grid_from_json(json{{"slot_minutes", 7}, {"horizon_slots", 10}})), Error);
    EXPECT_NO_THROW((time_grid_from_json(json{{"slot_minutes", 30}, {"horizon_slots", 10}})));
}
