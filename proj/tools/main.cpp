#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tfl/scenario.hpp"

namespace {

using tfl::scenario::Backend;
using tfl::scenario::ScenarioConfig;

ScenarioConfig load_config(const std::string& path, std::uint64_t seed) {
    ScenarioConfig config = ScenarioConfig::defaults();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw tfl::scenario::ScenarioError("cannot read config: " + path);
        config = ScenarioConfig::from_json(nlohmann::json::parse(in));
    }
    config.master_seed = seed;
    return config;
}

Backend parse_backend(const std::string& name) {
    if (name == "loopback") return Backend::loopback;
    if (name == "tcp") return Backend::tcp;
    throw tfl::scenario::ScenarioError("unknown transport: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trusted federated learning demo"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 42;
    std::string transport = "loopback";
    std::string dataset;
    std::string out_dir;
    app.add_option("--config", config_path, "scenario config (JSON)");
    app.add_option("--seed", seed, "master random seed");
    app.add_option("--transport", transport, "loopback or tcp")
        ->check(CLI::IsMember({"loopback", "tcp"}));
    app.add_option("--dataset", dataset, "training CSV (last column = label)");
    app.add_option("--out", out_dir, "artifact output directory");

    auto* demo = app.add_subcommand("run-demo", "run the six-party healthcare scenario");
    auto* malicious =
        app.add_subcommand("run-malicious", "run the scenario with malicious agents");
    auto* scan = app.add_subcommand("scan-capture", "scan an exported capture for needles");
    std::string capture_path;
    std::vector<std::string> needles;
    scan->add_option("capture", capture_path, "capture.ndjson path")->required();
    scan->add_option("needle", needles, "plaintext strings to search for");
    auto* rep = app.add_subcommand("report", "summarize artifacts from a previous run");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        ScenarioConfig config = load_config(config_path, seed);
        if (!dataset.empty()) config.dataset_path = dataset;

        if (demo->parsed()) {
            auto outcome = tfl::scenario::run_demo(config, parse_backend(transport), out_dir);
            for (const auto& r : outcome.federation.rounds)
                std::printf("round %d: accuracy %.4f (tp=%llu fp=%llu tn=%llu fn=%llu)\n",
                            r.round, tfl::fl::accuracy(r.matrix),
                            (unsigned long long)r.matrix.tp, (unsigned long long)r.matrix.fp,
                            (unsigned long long)r.matrix.tn, (unsigned long long)r.matrix.fn);
            std::printf("capture: %zu frames, %zu bytes; leak hits: %zu\n",
                        outcome.capture_frames, outcome.capture_bytes,
                        outcome.leak_hits.size());
            if (outcome.exit_code != 0)
                std::fprintf(stderr, "failed: %s\n", outcome.failed_stage.c_str());
            return outcome.exit_code;
        }
        if (malicious->parsed()) {
            auto outcome =
                tfl::scenario::run_malicious(config, parse_backend(transport), out_dir);
            for (const auto& line : outcome.rejections) std::puts(line.c_str());
            std::printf("no-credential rejected: %s\n",
                        outcome.no_credential_rejected ? "yes" : "no");
            std::printf("self-signed rejected: %s\n",
                        outcome.self_signed_rejected ? "yes" : "no");
            std::printf("revoked hospital excluded: %s\n",
                        outcome.revoked_hospital_excluded ? "yes" : "no");
            std::printf("federation rounds completed: %zu\n", outcome.federation_rounds);
            if (outcome.exit_code != 0)
                std::fprintf(stderr, "failed: %s\n", outcome.failed_stage.c_str());
            return outcome.exit_code;
        }
        if (scan->parsed()) {
            auto hits = tfl::scenario::scan_capture_file(capture_path, needles);
            for (const auto& h : hits)
                std::printf("needle %zu found in frame %zu\n", h.needle_index, h.frame_index);
            std::printf("%zu hit(s)\n", hits.size());
            return hits.empty() ? 0 : 1;
        }
        if (rep->parsed()) {
            if (out_dir.empty())
                throw tfl::scenario::ScenarioError("report requires --out <dir>");
            std::cout << tfl::scenario::report(config, out_dir);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
