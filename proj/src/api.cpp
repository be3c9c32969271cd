#include "dsm/api.hpp"

#include <thread>

#include "httplib.h"

namespace dsm {

void InteractiveGate::wait(Simulation&, int slot) {
    std::unique_lock lock(mutex_);
    if (released_) return;
    held_ = slot;
    resume_ = false;
    auto done = [&] { return resume_ || released_; };
    if (auto_resume_.count() > 0) {
        cv_.wait_for(lock, auto_resume_, done);
    } else {
        cv_.wait(lock, done);
    }
    held_.reset();
}

bool InteractiveGate::resume() {
    std::lock_guard lock(mutex_);
    if (!held_) return false;
    resume_ = true;
    cv_.notify_all();
    return true;
}

std::optional<int> InteractiveGate::held_slot() const {
    std::lock_guard lock(mutex_);
    return held_;
}

void InteractiveGate::release_all() {
    std::lock_guard lock(mutex_);
    released_ = true;
    cv_.notify_all();
}

int http_status(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Validation:
    case ErrorKind::GridMismatch:
    case ErrorKind::Topic:
        return 400;
    case ErrorKind::Authentication:
        return 401;
    case ErrorKind::Access:
        return 403;
    case ErrorKind::NotFound:
        return 404;
    case ErrorKind::Conflict:
    case ErrorKind::Duplicate:
    case ErrorKind::State:
    case ErrorKind::Deadline:
        return 409;
    }
    return 500;
}

namespace {

using httplib::Request;
using httplib::Response;

void send(Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        send(res, http_status(e.kind()), json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}});
    } catch (const json::exception& e) {
        send(res, 400, json{{"error", "Validation"}, {"message", std::string("malformed body: ") + e.what()}});
    }
}

json body_of(const Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

void require(bool ok, const std::string& why) {
    if (!ok) throw Error(ErrorKind::Access, why);
}

bool is_b2b_role(Role r) { return r != Role::Customer; }

}  // namespace

void ApiService::install(httplib::Server& server) {
    auto authenticate = [this](const Request& req) {
        std::string token;
        const auto header = req.get_header_value("Authorization");
        if (header.rfind("Bearer ", 0) == 0) {
            token = header.substr(7);
        } else if (req.has_param("token")) {
            token = req.get_param_value("token");
        }
        return sim_.identities().authenticate(token);
    };
    auto self_or_admin = [](const Principal& p, const std::string& customer) {
        require(p.role == Role::Admin || (p.role == Role::Customer && p.actor_id == customer),
                "customers may only read their own site");
    };

    server.Get("/api/programmes", [this](const Request&, Response& res) {
        guarded(res, [&] {
            json out = json::array();
            for (const auto& p : sim_.b2c().list_programmes()) out.push_back(to_json(p));
            send(res, 200, out);
        });
    });

    server.Post("/api/subscriptions", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            const auto body = body_of(req);
            auto guard = sim_.lock();
            const auto sub = sim_.b2c().subscribe(who, body.at("programme_id").get<std::string>());
            send(res, 201, to_json(sub));
        });
    });

    server.Delete(R"(/api/subscriptions/([^/]+))", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            auto guard = sim_.lock();
            send(res, 200, to_json(sim_.b2c().unsubscribe(who, req.matches[1])));
        });
    });

    server.Get(R"(/api/customers/([^/]+)/devices)", [this, authenticate, self_or_admin](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            const std::string c = req.matches[1];
            self_or_admin(who, c);
            json out = json::array();
            for (const auto& rec : sim_.devices().devices_of(c)) out.push_back(to_json(rec.device));
            send(res, 200, out);
        });
    });

    server.Get(R"(/api/customers/([^/]+)/schedule)", [this, authenticate, self_or_admin](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            const std::string c = req.matches[1];
            self_or_admin(who, c);
            auto guard = sim_.lock();
            const auto& site = sim_.site(c);
            const auto sched = site.schedule();
            json temps = json::object();
            for (std::size_t i = 0; i < site.site().devices.size(); ++i) {
                if (std::holds_alternative<ThermostaticHeater>(site.site().devices[i].spec)) {
                    temps[site.site().devices[i].device_id] = site.temperature_trace(i);
                }
            }
            send(res, 200,
                 json{{"customer_id", c},
                      {"now", site.now()},
                      {"metered_through", site.metered_through()},
                      {"baseline", to_json(site.baseline(), sim_.grid())},
                      {"schedule", to_json(sched, sim_.grid())},
                      {"temperatures", temps}});
        });
    });

    server.Get(R"(/api/customers/([^/]+)/signals)", [this, authenticate, self_or_admin](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            const std::string c = req.matches[1];
            self_or_admin(who, c);
            auto guard = sim_.lock();
            const auto& site = sim_.site(c);
            json sigs = json::array();
            for (const auto& s : site.signals()) {
                auto r = site.response(s.signal_id);
                sigs.push_back(json{{"signal", to_json(s)}, {"response", r ? to_json(*r, sim_.grid()) : json(nullptr)}});
            }
            const auto sub = sim_.b2c().active_subscription(c);
            send(res, 200,
                 json{{"customer_id", c},
                      {"subscription", sub ? to_json(*sub) : json(nullptr)},
                      {"eligible", sub.has_value()},
                      {"balance_cents", sim_.b2c().balance(c).cents},
                      {"signals", sigs}});
        });
    });

    server.Post(R"(/api/signals/([^/]+)/override)", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            const std::string id = req.matches[1];
            auto guard = sim_.lock();
            if (!sim_.paused()) throw Error(ErrorKind::State, "overrides are accepted only while the clock is paused");
            for (const auto& c : sim_.customers()) {
                auto& site = sim_.site(c);
                if (!site.signal(id)) continue;
                send(res, 200, to_json(site.override_signal(who, id), sim_.grid()));
                return;
            }
            throw Error(ErrorKind::NotFound, "unknown signal '" + id + "'");
        });
    });

    server.Post("/api/requests", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            auto body = body_of(req);
            auto guard = sim_.lock();
            if (!body.contains("bid_deadline")) {
                body["bid_deadline"] = to_json(LogicalTime{sim_.slot() + 1, Phase::Clearing});
            }
            const auto id = sim_.b2b().submit_request(who, shift_request_from_json(body, sim_.grid()));
            send(res, 201, sim_.b2b().request_view(id));
        });
    });

    server.Post(R"(/api/requests/([^/]+)/offers)", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            auto body = body_of(req);
            body["request_id"] = std::string(req.matches[1]);
            if (!body.contains("manager_id")) body["manager_id"] = who.actor_id;
            if (!body.contains("offer_id")) body["offer_id"] = "";
            auto guard = sim_.lock();
            const auto id = sim_.b2b().place_offer(who, offer_from_json(body, sim_.grid()));
            send(res, 201, json{{"offer_id", id}});
        });
    });

    server.Get(R"(/api/requests/([^/]+))", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            require(is_b2b_role(who.role), "customers have no access to the flexibility market");
            auto guard = sim_.lock();
            send(res, 200, sim_.b2b().request_view(req.matches[1]));
        });
    });

    server.Get(R"(/api/segments/([^/]+)/load)", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            require(is_b2b_role(who.role), "segment loads are visible to market participants only");
            auto guard = sim_.lock();
            const auto& seg = sim_.segment(req.matches[1]);
            json planned = json::array();
            json metered = json::array();
            for (int t = 0; t < sim_.grid().horizon_slots; ++t) {
                planned.push_back(sim_.segment_load(seg.id, t));
                Milliwatts sum = 0;
                bool complete = true;
                for (const auto& c : seg.members) {
                    auto r = sim_.site(c).reading(t);
                    if (!r) {
                        complete = false;
                        break;
                    }
                    sum += r->net;
                }
                metered.push_back(complete ? json(sum) : json(nullptr));
            }
            send(res, 200,
                 json{{"segment_id", seg.id},
                      {"capacity_mw", seg.capacity},
                      {"members", seg.members},
                      {"planned_mw", planned},
                      {"metered_mw", metered}});
        });
    });

    server.Get("/api/metrics", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            require(is_b2b_role(who.role), "metrics are visible to market participants only");
            auto guard = sim_.lock();
            if (!sim_.finished()) throw Error(ErrorKind::State, "the run has not finished");
            res.status = 200;
            res.set_content(to_json(sim_.metrics()).dump(), "application/json");
        });
    });

    server.Post("/api/sim/resume", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            require(who.role == Role::Admin, "only the operator console may resume the clock");
            if (!gate_ || !gate_->resume()) throw Error(ErrorKind::State, "the clock is not paused");
            send(res, 200, json{{"resumed", true}});
        });
    });

    server.Get("/api/sim/state", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            authenticate(req);
            auto guard = sim_.lock();
            send(res, 200,
                 json{{"run_id", sim_.run_id()},
                      {"slot", sim_.slot()},
                      {"clock", to_json(sim_.broker().clock())},
                      {"paused", sim_.paused()},
                      {"finished", sim_.finished()},
                      {"horizon_slots", sim_.grid().horizon_slots},
                      {"event_count", sim_.broker().size()}});
        });
    });

    // One JSON event per frame. ?poll=1 returns a batch and the next cursor
    // instead of holding the connection open.
    server.Get("/api/stream", [this, authenticate](const Request& req, Response& res) {
        guarded(res, [&] {
            const auto who = authenticate(req);
            std::size_t cursor = 0;
            if (req.has_param("cursor")) cursor = std::stoull(req.get_param_value("cursor"));
            if (req.has_header("Last-Event-ID")) cursor = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
            auto visible = [who](const Event& e) { return authorize(who, e.topic, Action::Subscribe); };
            auto broker = sim_.broker_ptr();
            if (req.has_param("poll")) {
                auto events = nlohmann::ordered_json::array();
                const auto all = broker->read_from(cursor);
                for (const auto& e : all) {
                    if (visible(e)) events.push_back(to_json(e));
                }
                nlohmann::ordered_json out{{"events", std::move(events)}, {"next_cursor", cursor + all.size()}};
                res.status = 200;
                res.set_content(out.dump(), "application/json");
                return;
            }
            auto next = std::make_shared<std::size_t>(cursor);
            auto sim = &sim_;
            const auto idle = stream_poll;
            res.set_chunked_content_provider(
                "text/event-stream", [broker, next, visible, sim, idle](std::size_t, httplib::DataSink& sink) {
                    const auto batch = broker->read_from(*next);
                    for (const auto& e : batch) {
                        const auto index = (*next)++;
                        if (!visible(e)) continue;
                        const std::string frame =
                            "id: " + std::to_string(index) + "\nevent: " + e.type + "\ndata: " + to_json(e).dump() + "\n\n";
                        if (!sink.write(frame.data(), frame.size())) return false;
                    }
                    if (batch.empty()) {
                        bool done;
                        {
                            auto guard = sim->lock();
                            done = sim->finished() && broker->size() == *next;
                        }
                        if (done) {
                            sink.done();
                            return true;
                        }
                        std::this_thread::sleep_for(idle);
                    }
                    return sink.is_writable();
                });
        });
    });
}

}  // namespace dsm
