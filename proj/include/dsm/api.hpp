#pragma once

// HTTP+JSON surface over a running simulation. Handlers only authenticate,
// translate and call into the modules; every mutation goes through them.

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>

#include "dsm/simulation.hpp"

namespace httplib {
class Server;
}

namespace dsm {

// Holds the clock in the override phase until resume() (or the optional
// auto-resume timeout) releases it.
class InteractiveGate : public OverrideGate {
public:
    explicit InteractiveGate(std::chrono::milliseconds auto_resume = std::chrono::milliseconds{0})
        : auto_resume_(auto_resume) {}

    void wait(Simulation& sim, int slot) override;

    // False when the clock is not currently held.
    bool resume();
    std::optional<int> held_slot() const;
    // Unblocks any wait for good, e.g. on shutdown.
    void release_all();

private:
    std::chrono::milliseconds auto_resume_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::optional<int> held_;
    bool resume_ = false;
    bool released_ = false;
};

int http_status(ErrorKind kind);

class ApiService {
public:
    ApiService(Simulation& sim, InteractiveGate* gate) : sim_(sim), gate_(gate) {}

    void install(httplib::Server& server);

    // Stream frames are polled at this interval when idle.
    std::chrono::milliseconds stream_poll{50};

private:
    Simulation& sim_;
    InteractiveGate* gate_;
};

}  // namespace dsm
