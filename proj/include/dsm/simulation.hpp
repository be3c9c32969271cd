#pragma once

// Discrete-time driver: installs a scenario and advances every slot through
// the fixed phase order, from exogenous updates to settlement.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "dsm/b2b_market.hpp"
#include "dsm/b2c_market.hpp"
#include "dsm/dsm_manager.hpp"
#include "dsm/eecs.hpp"
#include "dsm/metrics.hpp"
#include "dsm/platform.hpp"
#include "dsm/scenario.hpp"

namespace dsm {

class Simulation;

// Called in the override phase of every slot with the world unlocked, so a
// human can override signals before they are metered.
class OverrideGate {
public:
    virtual ~OverrideGate() = default;
    virtual void wait(Simulation& sim, int slot) = 0;
};

class Simulation : public SiteAccess {
public:
    explicit Simulation(Scenario scenario);
    ~Simulation() override;

    const Scenario& scenario() const { return scenario_; }
    const TimeGrid& grid() const { return scenario_.grid; }
    const std::string& run_id() const { return run_id_; }

    void set_gate(OverrideGate* gate) { gate_ = gate; }

    // Serializes world access between the clock loop and API handlers.
    std::unique_lock<std::mutex> lock() const { return std::unique_lock(world_); }

    int slot() const { return slot_; }
    bool finished() const { return finished_; }
    // True while the clock loop waits in the override phase.
    bool paused() const { return paused_; }

    // Steps one slot; takes the world lock itself.
    void step_slot();
    // Steps to the horizon and writes the completion record.
    void run();

    Broker& broker() { return *broker_; }
    const Broker& broker() const { return *broker_; }
    std::shared_ptr<const Broker> broker_ptr() const { return broker_; }
    IdentityRegistry& identities() { return identities_; }
    DeviceRegistry& devices() { return *devices_; }
    B2cMarket& b2c() { return *b2c_; }
    B2bMarket& b2b() { return *b2b_; }
    const Principal& admin() const { return admin_; }

    Eecs& site(const CustomerId& c);
    const Eecs& site(const CustomerId& c) const;
    std::vector<CustomerId> customers() const;
    DsmManager& manager(const ActorId& id);

    std::vector<CentsPerKwh> quotes() const { return quotes_; }
    Milliwatts segment_load(const SegmentId& seg, int slot) const;
    const SegmentSpec& segment(const SegmentId& seg) const;

    // Log of the run so far, in canonical order.
    std::vector<Event> ordered_log() const { return broker_->ordered_log(); }
    Metrics metrics() const;

    // SiteAccess
    std::vector<CustomerId> scope_members(const std::string& scope) const override;
    PowerProfile query_flexibility(const CustomerId& c, int first, int last, Direction dir) const override;
    std::optional<SignalResponse> signal_response(const CustomerId& c, const SignalId& id) const override;
    std::optional<Milliwatts> metered_load(const CustomerId& c, int slot) const override;

private:
    void setup();
    void set_clock(Phase phase);
    void phase_exogenous();
    void phase_trigger();
    void phase_bidding();
    void phase_clearing();
    void phase_dispatch();
    void phase_scheduling();
    void phase_scripted_overrides();
    void phase_apply_pending();
    void phase_metering();
    void phase_settlement();
    void warn(const Principal& who, const std::string& type, json payload);

    Scenario scenario_;
    std::string run_id_;
    mutable std::mutex world_;
    std::shared_ptr<Broker> broker_;
    IdentityRegistry identities_;
    std::unique_ptr<DeviceRegistry> devices_;
    Principal admin_;
    std::unique_ptr<B2cMarket> b2c_;
    std::unique_ptr<B2bMarket> b2b_;
    std::map<CustomerId, std::unique_ptr<Eecs>> sites_;
    std::map<CustomerId, SubscriptionHandle> signal_feeds_;
    std::map<ActorId, std::unique_ptr<DsmManager>> managers_;
    std::map<ActorId, Principal> principals_;
    std::vector<CentsPerKwh> quotes_;
    std::mt19937_64 rng_;
    std::vector<RequestId> decided_this_slot_;
    std::vector<std::pair<CustomerId, SignalId>> arrived_this_slot_;
    OverrideGate* gate_ = nullptr;
    int slot_ = 0;
    bool finished_ = false;
    bool paused_ = false;
};

}  // namespace dsm
