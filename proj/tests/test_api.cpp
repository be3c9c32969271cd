#include <gtest/gtest.h>

#include <thread>

#include "dsm/api.hpp"
#include "httplib.h"

using namespace dsm;
using namespace std::chrono_literals;

namespace {

httplib::Headers bearer(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

// A live interactive run of the shipped overload scenario behind a real socket.
struct Api : ::testing::Test {
    Simulation sim{load_scenario(std::string(DSM_SOURCE_DIR) + "/scenarios/grid_overload.json")};
    InteractiveGate gate;
    httplib::Server server;
    ApiService api{sim, &gate};
    std::thread http;
    std::thread clock;
    int port = 0;

    void SetUp() override {
        sim.set_gate(&gate);
        api.stream_poll = 5ms;
        api.install(server);
        port = server.bind_to_any_port("127.0.0.1");
        http = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
        clock = std::thread([this] { sim.run(); });
    }

    void TearDown() override {
        gate.release_all();
        clock.join();
        server.stop();
        http.join();
    }

    httplib::Client client() { return httplib::Client("127.0.0.1", port); }

    int wait_for_pause() {
        for (int i = 0; i < 2000; ++i) {
            if (auto s = gate.held_slot()) return *s;
            std::this_thread::sleep_for(1ms);
        }
        ADD_FAILURE() << "clock never paused";
        return -1;
    }

    // Resumes until the clock is held at `slot`.
    void advance_to(int slot) {
        for (;;) {
            const int s = wait_for_pause();
            if (s >= slot || s < 0) return;
            auto r = client().Post("/api/sim/resume", bearer("admin-token"), "", "application/json");
            ASSERT_EQ(r->status, 200);
            while (gate.held_slot() == s) std::this_thread::sleep_for(1ms);
        }
    }

    void finish() {
        for (;;) {
            {
                auto g = sim.lock();
                if (sim.finished()) return;
            }
            gate.resume();
            std::this_thread::sleep_for(1ms);
        }
    }
};

}  // namespace

TEST_F(Api, CatalogueIsPublic) {
    auto r = client().Get("/api/programmes");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    const auto body = json::parse(r->body);
    ASSERT_EQ(body.size(), 1u);
    EXPECT_EQ(body[0]["programme_id"], "north-flex");
}

TEST_F(Api, MissingTokenIs401WrongRoleIs403) {
    auto c = client();
    EXPECT_EQ(c.Post("/api/subscriptions", R"({"programme_id":"north-flex"})", "application/json")->status, 401);
    EXPECT_EQ(c.Post("/api/requests", bearer("bogus"), "{}", "application/json")->status, 401);
    const std::string req = R"({"direction":"Decrease","scope":"feeder-a","target":{"start_slot":20,"values":[1]}})";
    EXPECT_EQ(c.Post("/api/requests", bearer("tok-home-1"), req, "application/json")->status, 403);
    EXPECT_EQ(c.Get("/api/segments/feeder-a/load", bearer("tok-home-1"))->status, 403);
    EXPECT_EQ(c.Get("/api/customers/home-2/schedule", bearer("tok-home-1"))->status, 403);
    EXPECT_EQ(c.Post("/api/sim/resume", bearer("tok-home-1"), "", "application/json")->status, 403);
}

TEST_F(Api, SubscriptionConflictAndCancel) {
    auto c = client();
    auto r = c.Post("/api/subscriptions", bearer("tok-feeder-base"), R"({"programme_id":"north-flex"})", "application/json");
    ASSERT_EQ(r->status, 201);
    const auto id = json::parse(r->body)["subscription_id"].get<std::string>();
    EXPECT_EQ(c.Post("/api/subscriptions", bearer("tok-feeder-base"), R"({"programme_id":"north-flex"})",
                     "application/json")->status, 409);
    auto view = json::parse(c.Get("/api/customers/feeder-base/signals", bearer("tok-feeder-base"))->body);
    EXPECT_TRUE(view["eligible"].get<bool>());
    EXPECT_EQ(c.Delete("/api/subscriptions/" + id, bearer("tok-feeder-base"))->status, 200);
    view = json::parse(c.Get("/api/customers/feeder-base/signals", bearer("tok-feeder-base"))->body);
    EXPECT_FALSE(view["eligible"].get<bool>());
}

TEST_F(Api, OverrideDuringPauseZeroesDelivery) {
    advance_to(8);
    auto c = client();
    const auto view = json::parse(c.Get("/api/customers/home-1/signals", bearer("tok-home-1"))->body);
    ASSERT_EQ(view["signals"].size(), 1u);
    const auto id = view["signals"][0]["signal"]["signal_id"].get<std::string>();
    EXPECT_EQ(view["signals"][0]["response"]["status"], "AutoAccepted");

    EXPECT_EQ(c.Post("/api/signals/" + id + "/override", bearer("tok-home-2"), "", "application/json")->status, 403);
    auto r = c.Post("/api/signals/" + id + "/override", bearer("tok-home-1"), "", "application/json");
    ASSERT_EQ(r->status, 200) << r->body;
    EXPECT_EQ(json::parse(r->body)["status"], "Overridden");

    const auto sched = json::parse(c.Get("/api/customers/home-1/schedule", bearer("tok-home-1"))->body);
    EXPECT_EQ(sched["schedule"]["devices"], sched["baseline"]["devices"]);

    finish();
    EXPECT_EQ(c.Post("/api/signals/" + id + "/override", bearer("tok-home-1"), "", "application/json")->status, 409);
    const auto req = json::parse(c.Get("/api/requests/req-0001", bearer("tok-dso"))->body);
    const auto& mgr = req["settlement"]["managers"][0];
    // Four of five washers still moved: 4.8 of 6 kW for one slot.
    EXPECT_EQ(mgr["delivered_mw_minutes"], 4'800'000 * 15);
    EXPECT_EQ(req["request"]["state"], "Settled");
    EXPECT_EQ(c.Get("/api/metrics", bearer("tok-dso"))->status, 200);
}

TEST_F(Api, OverrideAtALaterPauseBeforeTheWindow) {
    advance_to(9);
    auto c = client();
    const auto id = json::parse(c.Get("/api/customers/home-1/signals", bearer("tok-home-1"))->body)["signals"][0]["signal"]
                        ["signal_id"].get<std::string>();
    advance_to(10);
    // The window starts at slot 12, so a later pause still accepts the override.
    EXPECT_EQ(c.Post("/api/signals/" + id + "/override", bearer("tok-home-1"), "", "application/json")->status, 200);
}

TEST_F(Api, PollStreamFiltersByRole) {
    advance_to(9);
    auto c = client();
    auto r = c.Get("/api/stream?poll=1&cursor=0&token=tok-home-1");
    ASSERT_EQ(r->status, 200);
    const auto body = json::parse(r->body);
    EXPECT_GT(body["next_cursor"].get<std::size_t>(), 0u);
    bool saw_signal = false;
    for (const auto& e : body["events"]) {
        const auto topic = e["topic"].get<std::string>();
        EXPECT_TRUE(authorize({"home-1", Role::Customer, ""}, topic, Action::Subscribe)) << topic;
        saw_signal = saw_signal || topic == "signals.home-1";
    }
    EXPECT_TRUE(saw_signal);
    const auto again = json::parse(
        c.Get("/api/stream?poll=1&token=tok-home-1&cursor=" + std::to_string(body["next_cursor"].get<std::size_t>()))->body);
    EXPECT_TRUE(again["events"].empty());
}

TEST_F(Api, EventStreamDeliversEachEventOnceInOrder) {
    auto c = client();
    std::string buffer;
    std::vector<std::size_t> ids;
    auto r = c.Get("/api/stream?token=admin-token", [&](const char* data, size_t n) {
        buffer.append(data, n);
        std::size_t pos;
        while ((pos = buffer.find("\n\n")) != std::string::npos) {
            const auto frame = buffer.substr(0, pos);
            buffer.erase(0, pos + 2);
            ids.push_back(std::stoull(frame.substr(4, frame.find('\n') - 4)));
        }
        if (ids.size() >= 40) return false;
        gate.resume();
        return true;
    });
    ASSERT_GE(ids.size(), 40u);
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], i);
}

TEST_F(Api, StateAndSegmentLoad) {
    advance_to(3);
    auto c = client();
    const auto st = json::parse(c.Get("/api/sim/state", bearer("tok-dso"))->body);
    EXPECT_TRUE(st["paused"].get<bool>());
    EXPECT_EQ(st["slot"], 3);
    const auto load = json::parse(c.Get("/api/segments/feeder-a/load", bearer("tok-dso"))->body);
    EXPECT_EQ(load["capacity_mw"], 50'000'000);
    EXPECT_EQ(load["planned_mw"][12], 56'000'000);
    EXPECT_TRUE(load["metered_mw"][12].is_null());
    EXPECT_EQ(c.Get("/api/segments/nowhere/load", bearer("tok-dso"))->status, 404);
    EXPECT_EQ(c.Get("/api/metrics", bearer("tok-dso"))->status, 409);
    const auto devices = json::parse(c.Get("/api/customers/home-1/devices", bearer("tok-home-1"))->body);
    EXPECT_EQ(devices[0]["id"], "washer");
}
