// dsm: batch simulation, interactive service, one-shot clearing and log replay.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dsm/api.hpp"
#include "dsm/clearing.hpp"
#include "dsm/metrics.hpp"
#include "dsm/simulation.hpp"
#include "httplib.h"

namespace fs = std::filesystem;
using namespace dsm;

namespace {

constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Validation, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_metrics(const fs::path& dir, const Metrics& m) {
    write_file(dir / "metrics.json", to_json(m).dump(2) + "\n");
    write_file(dir / "metrics.csv", metrics_csv(m));
}

int cmd_simulate(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    Scenario sc;
    try {
        sc = load_scenario(scenario_path);
    } catch (const Error& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitUsage;
    }
    if (seed) sc.seed = *seed;
    Simulation sim(std::move(sc));
    sim.run();
    fs::create_directories(out_dir);
    const auto log = sim.ordered_log();
    write_file(fs::path(out_dir) / "events.jsonl", export_jsonl(log));
    const auto m = compute_metrics(log);
    write_metrics(out_dir, m);
    int violations = 0;
    for (const auto& [id, s] : m.segments) violations += s.violations;
    std::cout << sim.run_id() << ": " << log.size() << " events, " << m.requests.size() << " requests, " << violations
              << " capacity violations\n";
    return 0;
}

int cmd_clear(const std::string& path, bool as_json) {
    ClearingInstance in;
    try {
        in = clearing_instance_from_json(json::parse(read_file(path)));
    } catch (const Error& e) {
        std::cerr << "invalid instance: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "invalid instance: malformed JSON: " << e.what() << "\n";
        return kExitUsage;
    }
    const auto r = clear_offers(in);
    if (as_json) {
        std::cout << to_json(r).dump() << "\n";
        return 0;
    }
    if (!r.feasible) {
        std::cout << "infeasible\n";
        return 0;
    }
    std::cout << "selected:";
    for (const auto& id : r.selected) std::cout << ' ' << id;
    std::cout << "\ntotal_price_cents: " << r.total_price.cents << "\nmethod: " << to_string(r.method) << "\n";
    return 0;
}

int cmd_replay(const std::string& log_path, const std::string& out_dir) {
    Metrics m;
    try {
        m = compute_metrics(parse_jsonl(read_file(log_path)));
    } catch (const Error& e) {
        std::cerr << "cannot replay: " << e.what() << "\n";
        return kExitUsage;
    }
    if (out_dir.empty()) {
        std::cout << to_json(m).dump(2) << "\n";
    } else {
        fs::create_directories(out_dir);
        write_metrics(out_dir, m);
    }
    return 0;
}

httplib::Server* g_server = nullptr;
InteractiveGate* g_gate = nullptr;

void on_signal(int) {
    if (g_gate) g_gate->release_all();
    if (g_server) g_server->stop();
}

int cmd_serve(const std::string& scenario_path, const std::string& host, int port, const std::string& mode,
              int auto_resume_ms) {
    Scenario sc;
    try {
        sc = load_scenario(scenario_path);
    } catch (const Error& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitUsage;
    }
    Simulation sim(std::move(sc));
    InteractiveGate gate{std::chrono::milliseconds(auto_resume_ms)};
    if (mode == "interactive") sim.set_gate(&gate);
    httplib::Server server;
    ApiService api(sim, &gate);
    api.install(server);
    if (!server.bind_to_port(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    g_server = &server;
    g_gate = &gate;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread clock([&] { sim.run(); });
    std::cerr << "serving " << sim.run_id() << " on " << host << ":" << port << " (" << mode << ")\n";
    server.listen_after_bind();
    gate.release_all();
    clock.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-marketplace demand-side management simulator"};
    app.require_subcommand(1);

    auto* simulate = app.add_subcommand("simulate", "Run a scenario in batch mode");
    std::string scenario_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    simulate->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    simulate->add_option("--seed", seed, "Override the scenario seed");
    simulate->add_option("--out", out_dir, "Output directory for events.jsonl, metrics.json, metrics.csv");

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a live run");
    std::string host = "127.0.0.1", mode = "interactive";
    int port = 8080, auto_resume_ms = 0;
    serve->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");
    serve->add_option("--mode", mode, "interactive pauses every slot for overrides; batch runs straight through")
        ->check(CLI::IsMember({"interactive", "batch"}));
    serve->add_option("--auto-resume-ms", auto_resume_ms, "Resume a paused slot after this many ms (0 waits)");

    auto* clear = app.add_subcommand("clear", "Clear one offer set and print the selection");
    std::string instance_path;
    bool as_json = false;
    clear->add_option("instance", instance_path, "Clearing instance JSON file")->required();
    clear->add_flag("--json", as_json, "Print the full result as JSON");

    auto* replay = app.add_subcommand("replay", "Recompute metrics from an exported event log");
    std::string log_path, replay_out;
    replay->add_option("--log", log_path, "events.jsonl from a previous run")->required();
    replay->add_option("--out", replay_out, "Write metrics.json and metrics.csv here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(scenario_path, seed, out_dir);
        if (*serve) return cmd_serve(scenario_path, host, port, mode, auto_resume_ms);
        if (*clear) return cmd_clear(instance_path, as_json);
        if (*replay) return cmd_replay(log_path, replay_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
