#include <gtest/gtest.h>

#include <map>
#include <random>

#include "dsm/platform.hpp"

using namespace dsm;

namespace {

Principal customer(const std::string& id) { return {id, Role::Customer, "tok-" + id}; }
const Principal kOperator{"dso", Role::GridOperator, "tok-dso"};
const Principal kManager{"m1", Role::DsmManager, "tok-m1"};
const Principal kAdmin{"admin", Role::Admin, "tok-admin"};

}  // namespace

TEST(Identity, Authenticate) {
    IdentityRegistry ids;
    ids.register_principal(customer("c1"));
    EXPECT_EQ(ids.authenticate("tok-c1").role, Role::Customer);
    for (const char* bad : {"nope", ""}) {
        try {
            ids.authenticate(bad);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Authentication);
        }
    }
}

TEST(Identity, DuplicateTokenRejected) {
    IdentityRegistry ids;
    ids.register_principal(customer("c1"));
    EXPECT_THROW(ids.register_principal({"c2", Role::Customer, "tok-c1"}), Error);
}

TEST(Acl, Examples) {
    EXPECT_TRUE(authorize(customer("c1"), "signals.c1", Action::Subscribe));
    EXPECT_FALSE(authorize(customer("c1"), "signals.c2", Action::Subscribe));
    EXPECT_TRUE(authorize(kOperator, "requests.seg1", Action::Publish));
    EXPECT_FALSE(authorize(customer("c1"), "requests.seg1", Action::Publish));
    EXPECT_FALSE(authorize(customer("c1"), "market.clearings", Action::Subscribe));
    EXPECT_FALSE(authorize(kManager, "bogus.topic", Action::Publish));
}

TEST(Broker, SequenceStartsAtOneAndFifo) {
    Broker b;
    auto h = b.subscribe(customer("c1"), "signals.c1");
    EXPECT_EQ(b.publish(kManager, "signals.c1", "DsmSignal", json{{"n", 1}}), 1u);
    EXPECT_EQ(b.publish(kManager, "signals.c1", "DsmSignal", json{{"n", 2}}), 2u);
    const auto got = b.poll(h);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].seq, 1u);
    EXPECT_EQ(got[1].seq, 2u);
}

TEST(Broker, UnauthorizedPublishAppendsNothing) {
    Broker b;
    try {
        b.publish(customer("c1"), "signals.c2", "DsmSignal", json::object());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Access);
    }
    EXPECT_EQ(b.size(), 0u);
}

TEST(Broker, DeliversOnlyAfterSubscribing) {
    Broker b;
    b.publish(kManager, "signals.c1", "DsmSignal", json{{"n", 1}});
    auto h = b.subscribe(customer("c1"), "signals.c1");
    b.publish(kManager, "signals.c1", "DsmSignal", json{{"n", 2}});
    auto got = b.poll(h);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].payload["n"], 2);
    EXPECT_TRUE(b.poll(h).empty());
}

TEST(Broker, FanOut) {
    Broker b;
    auto h1 = b.subscribe(kManager, "requests.seg1");
    auto h2 = b.subscribe(kAdmin, "requests.seg1");
    b.publish(kOperator, "requests.seg1", "ShiftRequest", json::object());
    EXPECT_EQ(b.poll(h1).size(), 1u);
    EXPECT_EQ(b.poll(h2).size(), 1u);
}

TEST(Broker, OrderedLogSortsByTimeTopicSeq) {
    Broker b;
    b.set_clock({1, Phase::Dispatch});
    b.publish(kManager, "signals.c2", "DsmSignal", json::object());
    b.set_clock({1, Phase::Bidding});
    b.publish(kAdmin, "sim.clock", "Tick", json::object());
    b.publish(kAdmin, "market.exchange", "Quote", json::object());
    const auto log = b.ordered_log();
    ASSERT_EQ(log.size(), 3u);
    EXPECT_EQ(log[0].topic, "market.exchange");
    EXPECT_EQ(log[1].topic, "sim.clock");
    EXPECT_EQ(log[2].topic, "signals.c2");
}

TEST(Export, JsonlRoundTripAndFieldOrder) {
    Broker b("run-x");
    b.set_clock({3, Phase::Metering});
    b.publish(customer("c1"), "telemetry.c1", "MeterReading", json{{"b", 1}, {"a", 2}});
    const auto text = export_jsonl(b.ordered_log());
    EXPECT_EQ(text.rfind("{\"topic\":\"telemetry.c1\",\"seq\":1,\"t_slot\":3,\"phase\":", 0), 0u);
    EXPECT_EQ(export_jsonl(parse_jsonl(text)), text);
    EXPECT_EQ(export_jsonl({}), "");
}

// Random interleavings of publishes, subscribes and polls by principals of
// every role, checked against a model of the topic lists.
TEST(Broker, RandomizedInterleavingsKeepFifoExactlyOnceAndAcl) {
    std::mt19937_64 rng(2024);
    const std::vector<Principal> who = {customer("c1"), customer("c2"), kOperator, kManager, kAdmin,
                                        {"r1", Role::Retailer, "tok-r1"}};
    const std::vector<std::string> topics = {"signals.c1", "signals.c2", "requests.seg1", "telemetry.c1",
                                             "responses.c2", "market.clearings", "system.warnings", "credits.c1"};
    Broker b;
    struct Sub {
        SubscriptionHandle h;
        std::string topic;
        std::uint64_t next_expected;
    };
    std::vector<Sub> subs;
    std::map<std::string, std::uint64_t> published;
    int denied = 0;
    for (int op = 0; op < 3000; ++op) {
        const auto& p = who[rng() % who.size()];
        const auto& topic = topics[rng() % topics.size()];
        switch (rng() % 3) {
        case 0:
            if (authorize(p, topic, Action::Publish)) {
                EXPECT_EQ(b.publish(p, topic, "E", json{{"op", op}}), ++published[topic]);
            } else {
                ++denied;
                EXPECT_THROW(b.publish(p, topic, "E", json::object()), Error);
            }
            break;
        case 1:
            if (authorize(p, topic, Action::Subscribe)) {
                subs.push_back({b.subscribe(p, topic), topic, published[topic] + 1});
            } else {
                EXPECT_THROW(b.subscribe(p, topic), Error);
            }
            break;
        default:
            if (subs.empty()) break;
            auto& s = subs[rng() % subs.size()];
            for (const auto& e : b.poll(s.h)) {
                EXPECT_EQ(e.topic, s.topic);
                EXPECT_EQ(e.seq, s.next_expected);
                ++s.next_expected;
            }
            EXPECT_EQ(s.next_expected, published[s.topic] + 1);
        }
    }
    EXPECT_GT(denied, 100);
    IdentityRegistry ids;
    for (const auto& p : who) ids.register_principal(p);
    for (const auto& e : b.ordered_log()) {
        auto p = ids.find(e.publisher);
        ASSERT_TRUE(p.has_value());
        EXPECT_TRUE(authorize(*p, e.topic, Action::Publish));
    }
}

TEST(DeviceRegistry, ValidatesDescriptors) {
    IdentityRegistry ids;
    ids.register_principal(customer("c1"));
    DeviceRegistry reg(ids, TimeGrid{15, 96});
    EXPECT_NO_THROW(reg.register_device("c1", {"washer", DeferrableLoad{kw_to_mw(2), 2, 36, 48, false}}));
    EvCharger ev;
    ev.required_energy = Energy::from_kwh(8);
    ev.departure_slot = 60;
    ev.max_power = kw_to_mw(11);
    EXPECT_NO_THROW(reg.register_device("c1", {"ev", ev}));
    EXPECT_THROW(reg.register_device("c1", {"bad", DeferrableLoad{kw_to_mw(2), 4, 36, 38, false}}), Error);
    EXPECT_THROW(reg.register_device("c1", {"washer", DeferrableLoad{kw_to_mw(2), 2, 36, 48, false}}), Error);
    EXPECT_THROW(reg.register_device("ghost", {"x", DeferrableLoad{kw_to_mw(2), 2, 36, 48, false}}), Error);
    EXPECT_EQ(reg.devices_of("c1").size(), 2u);
}
