#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfl/agent.hpp"
#include "tfl/federation.hpp"
#include "tfl/transport.hpp"

namespace tfl::scenario {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : ScenarioError {
    using ScenarioError::ScenarioError;
};

enum class Backend { loopback, tcp };

inline constexpr std::string_view kHospitalSchemaId = "verified-hospital-v1";
inline constexpr std::string_view kResearcherSchemaId = "audited-researcher-coordinator-v1";

struct ScenarioConfig {
    std::vector<agent::AgentConfig> agents;  // six-party healthcare topology
    std::string dataset_path;                // optional CSV; synthetic otherwise
    std::size_t synthetic_rows = 1290;
    std::size_t synthetic_dims = 8;
    double synthetic_separation = 10.0;
    std::uint64_t master_seed = 42;

    static ScenarioConfig defaults();
    void validate() const;  // throws ScenarioError

    nlohmann::json to_json() const;
    static ScenarioConfig from_json(const nlohmann::json& j);

    const agent::AgentConfig& agent_named(const std::string& name) const;
};

struct DemoOutcome {
    int exit_code = 0;
    std::string failed_stage;
    fl::FederationReport federation;
    std::size_t validation_rows = 0;
    std::vector<transport::ScanHit> leak_hits;
    std::size_t capture_frames = 0;
    std::size_t capture_bytes = 0;
};

// Full healthcare run: issuance, mutual trust, federation, artifact emission
// (rounds.csv, capture.ndjson, trust.log under out_dir) and the capture leak
// scan. out_dir empty means no files are written.
DemoOutcome run_demo(const ScenarioConfig& config, Backend backend,
                     const std::string& out_dir);

struct MaliciousOutcome {
    int exit_code = 0;
    std::string failed_stage;
    bool no_credential_rejected = false;
    bool self_signed_rejected = false;
    bool self_signed_failed_issuer_check = false;
    bool revoked_hospital_excluded = false;
    std::size_t federation_rounds = 0;  // includes round 0
    std::vector<std::string> rejections;
};

// Demo topology plus a no-credential agent, a self-signed-credential agent,
// and a hospital revoked mid-scenario.
MaliciousOutcome run_malicious(const ScenarioConfig& config, Backend backend,
                               const std::string& out_dir);

struct AgentTraffic {
    std::string name;
    std::size_t bytes_sent = 0;
    std::size_t bytes_received = 0;
    std::size_t messages_sent = 0;
    std::size_t messages_received = 0;
};

// Human-readable summary from the artifacts under out_dir; totals equal the
// capture sums. Throws MissingArtifact.
std::string report(const ScenarioConfig& config, const std::string& out_dir);

std::vector<AgentTraffic> traffic_from_capture_lines(const ScenarioConfig& config,
                                                     const std::string& capture_lines);

// Offline scan of an exported capture file for plaintext needles.
std::vector<transport::ScanHit> scan_capture_file(const std::string& path,
                                                  const std::vector<std::string>& needles);

}  // namespace tfl::scenario
