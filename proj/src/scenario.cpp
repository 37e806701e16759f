#include "tfl/scenario.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

namespace tfl::scenario {

namespace {

cred::CredentialSchema hospital_schema() {
    return {std::string(kHospitalSchemaId), "Verified Hospital", "1.0",
            {"name", "status", "issued_at"}};
}

cred::CredentialSchema researcher_schema() {
    return {std::string(kResearcherSchemaId), "Audited Researcher-Coordinator", "1.0",
            {"name", "status", "issued_at"}};
}

constexpr std::string_view kIssuedAt = "2021-03-01T00:00:00Z";
constexpr std::string_view kNhsRegistry = "nhs-trust-registry";
constexpr std::string_view kRegulatorRegistry = "regulator-registry";
constexpr std::string_view kExtraRegistry = "unaffiliated-registry";

const std::vector<std::string> kHospitals = {"Hospital 1", "Hospital 2", "Hospital 3"};

}  // namespace

ScenarioConfig ScenarioConfig::defaults() {
    ScenarioConfig config;
    // Port assignments follow the healthcare deployment table.
    config.agents = {
        {"Hospital 1", "127.0.0.1", 8050, 8051, 8052},
        {"Hospital 2", "127.0.0.1", 8060, 8061, 8062},
        {"Hospital 3", "127.0.0.1", 8070, 8071, 8072},
        {"Researcher", "127.0.0.1", 8040, 8041, 8042},
        {"NHS Trust", "127.0.0.1", 8020, 8021, 8022},
        {"Regulator", "127.0.0.1", 8030, 8031, 8032},
    };
    return config;
}

void ScenarioConfig::validate() const {
    std::set<std::uint16_t> ports;
    for (const auto& a : agents) {
        if (!a.ports_distinct())
            throw ScenarioError("agent " + a.name + " reuses a port internally");
        for (std::uint16_t p : {a.http_port, a.admin_port, a.webhook_port})
            if (!ports.insert(p).second)
                throw ScenarioError("duplicate port " + std::to_string(p) + " in config");
    }
    for (const auto& required :
         {"NHS Trust", "Regulator", "Researcher", "Hospital 1", "Hospital 2", "Hospital 3"}) {
        bool found = std::any_of(agents.begin(), agents.end(),
                                 [&](const auto& a) { return a.name == required; });
        if (!found) throw ScenarioError(std::string("missing agent: ") + required);
    }
    if (dataset_path.empty() &&
        (synthetic_rows == 0 || synthetic_dims == 0 || synthetic_separation < 0.0))
        throw ScenarioError("no dataset path and no usable synthetic parameters");
}

nlohmann::json ScenarioConfig::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : agents) {
        list.push_back({{"name", a.name},
                        {"host", a.host},
                        {"http_port", a.http_port},
                        {"admin_port", a.admin_port},
                        {"webhook_port", a.webhook_port}});
    }
    return {{"agents", list},
            {"dataset", dataset_path},
            {"synthetic",
             {{"rows", synthetic_rows},
              {"dims", synthetic_dims},
              {"separation", synthetic_separation}}},
            {"master_seed", master_seed}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    ScenarioConfig config = defaults();
    if (j.contains("agents")) {
        config.agents.clear();
        for (const auto& a : j.at("agents")) {
            config.agents.push_back({a.at("name").get<std::string>(),
                                     a.value("host", std::string("127.0.0.1")),
                                     a.at("http_port").get<std::uint16_t>(),
                                     a.at("admin_port").get<std::uint16_t>(),
                                     a.at("webhook_port").get<std::uint16_t>()});
        }
    }
    config.dataset_path = j.value("dataset", std::string());
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        config.synthetic_rows = s.value("rows", config.synthetic_rows);
        config.synthetic_dims = s.value("dims", config.synthetic_dims);
        config.synthetic_separation = s.value("separation", config.synthetic_separation);
    }
    config.master_seed = j.value("master_seed", config.master_seed);
    return config;
}

const agent::AgentConfig& ScenarioConfig::agent_named(const std::string& name) const {
    for (const auto& a : agents)
        if (a.name == name) return a;
    throw ScenarioError("no agent named " + name);
}

namespace {

bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (!pred()) {
        if (std::chrono::steady_clock::now() >= deadline) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return true;
}

// The six-party topology plus its ledger, registries and transport.
struct Stack {
    const ScenarioConfig& config;
    std::unique_ptr<transport::Transport> transport;
    did::PublicLedger ledger;
    agent::RegistryStore registries;
    std::map<std::string, std::unique_ptr<agent::Agent>> agents;

    Stack(const ScenarioConfig& cfg, Backend backend) : config(cfg) {
        if (backend == Backend::loopback)
            transport = std::make_unique<transport::LoopbackTransport>();
        else
            transport = std::make_unique<transport::TcpTransport>();

        registries.emplace(kNhsRegistry,
                           cred::RevocationRegistry{std::string(kNhsRegistry), {}});
        registries.emplace(kRegulatorRegistry,
                           cred::RevocationRegistry{std::string(kRegulatorRegistry), {}});
        registries.emplace(kExtraRegistry,
                           cred::RevocationRegistry{std::string(kExtraRegistry), {}});

        for (const auto& a : config.agents) {
            agents[a.name] = std::make_unique<agent::Agent>(a, *transport, &ledger,
                                                            &registries);
            agents[a.name]->start();
        }
        agents["NHS Trust"]->register_public_did();
        agents["NHS Trust"]->make_issuable(hospital_schema(),
                                           &registries.at(std::string(kNhsRegistry)));
        agents["Regulator"]->register_public_did();
        agents["Regulator"]->make_issuable(researcher_schema(),
                                           &registries.at(std::string(kRegulatorRegistry)));
    }

    agent::Agent& at(const std::string& name) { return *agents.at(name); }

    // DID exchange: inviter creates the invitation, acceptor initiates.
    std::pair<std::string, std::string> connect(agent::Agent& inviter,
                                                agent::Agent& acceptor) {
        auto invitation = inviter.create_invitation();
        std::string acceptor_conn = acceptor.accept_invitation(invitation);
        bool done = wait_until(
            [&] {
                auto record = acceptor.connection(acceptor_conn);
                auto inviter_conn =
                    inviter.find_connection_to(acceptor.config().http_endpoint());
                return record && record->state >= agent::ConnState::active &&
                       inviter_conn.has_value();
            },
            std::chrono::seconds(5));
        if (!done) throw ScenarioError("DID exchange timed out");
        return {*inviter.find_connection_to(acceptor.config().http_endpoint()),
                acceptor_conn};
    }

    void issue(agent::Agent& issuer, agent::Agent& holder, const std::string& schema_id,
               const std::map<std::string, std::string>& attributes,
               std::optional<std::string> expiry_iso = std::nullopt) {
        auto [issuer_conn, holder_conn] = connect(issuer, holder);
        const std::size_t before = holder.credentials().size();
        nlohmann::json params{{"connection_id", issuer_conn},
                              {"schema_id", schema_id},
                              {"attributes", attributes}};
        if (expiry_iso) params["expiry"] = *expiry_iso;
        auto response = issuer.admin_command({{"command", "issue_credential"},
                                              {"params", params}});
        if (!response.value("ok", false))
            throw ScenarioError("credential issuance failed: " + response.dump());
        if (!wait_until([&] { return holder.credentials().size() > before; },
                        std::chrono::seconds(5)))
            throw ScenarioError("credential never arrived at " + holder.config().name);
    }

    agent::TrustPolicy researcher_policy() {
        return {std::string(kHospitalSchemaId),
                {at("NHS Trust").public_did().str()},
                {"name", "status"}};
    }

    agent::TrustPolicy hospital_policy() {
        return {std::string(kResearcherSchemaId),
                {at("Regulator").public_did().str()},
                {"name", "status"}};
    }

    // Credential issuance for the regular six-party topology.
    void issue_all_credentials() {
        issue(at("Regulator"), at("Researcher"), std::string(kResearcherSchemaId),
              {{"name", "Researcher"},
               {"status", "audited"},
               {"issued_at", std::string(kIssuedAt)}});
        for (const auto& name : kHospitals) {
            issue(at("NHS Trust"), at(name), std::string(kHospitalSchemaId),
                  {{"name", name},
                   {"status", "verified"},
                   {"issued_at", std::string(kIssuedAt)}});
        }
    }

    std::vector<std::string> credential_attribute_values() const {
        std::vector<std::string> values = {"Researcher", "audited", "verified",
                                           std::string(kIssuedAt)};
        for (const auto& name : kHospitals) values.push_back(name);
        return values;
    }
};

void write_artifacts(const std::string& out_dir, const fl::FederationReport& federation,
                     const transport::CaptureLog& capture,
                     const std::vector<std::string>& trust_log) {
    if (out_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::ofstream rounds(fs::path(out_dir) / "rounds.csv");
    rounds << "round,tp,fp,tn,fn,accuracy\n";
    for (const auto& r : federation.rounds) {
        char acc[32];
        std::snprintf(acc, sizeof(acc), "%.6f", fl::accuracy(r.matrix));
        rounds << r.round << ',' << r.matrix.tp << ',' << r.matrix.fp << ','
               << r.matrix.tn << ',' << r.matrix.fn << ',' << acc << '\n';
    }

    std::ofstream cap(fs::path(out_dir) / "capture.ndjson");
    cap << capture.export_lines();

    std::ofstream trust(fs::path(out_dir) / "trust.log");
    for (const auto& line : trust_log) trust << line << '\n';
}

std::vector<Bytes> leak_needles(const Stack& stack, const fl::FederationReport& federation) {
    std::vector<Bytes> needles;
    for (const auto& value : stack.credential_attribute_values())
        needles.push_back(to_bytes(value));
    for (const auto& r : federation.rounds)
        needles.push_back(fl::serialize_model(r.model));
    return needles;
}

}  // namespace

DemoOutcome run_demo(const ScenarioConfig& config, Backend backend,
                     const std::string& out_dir) {
    DemoOutcome outcome;
    std::vector<std::string> trust_log;
    try {
        config.validate();
    } catch (const std::exception& e) {
        outcome.exit_code = 2;
        outcome.failed_stage = std::string("config: ") + e.what();
        return outcome;
    }

    try {
        Stack stack(config, backend);
        stack.issue_all_credentials();

        std::vector<std::string> hospital_conns;
        for (const auto& name : kHospitals) {
            // The hospital initiates DID exchange with the researcher.
            stack.connect(stack.at("Researcher"), stack.at(name));
            auto [researcher_trusts, hospital_trusts] = agent::establish_trust(
                stack.at("Researcher"), stack.at(name), stack.researcher_policy(),
                stack.hospital_policy());
            trust_log.push_back(name + ": researcher_trusts=" +
                                (researcher_trusts ? "true" : "false") +
                                " hospital_trusts=" + (hospital_trusts ? "true" : "false"));
            if (!researcher_trusts || !hospital_trusts)
                throw ScenarioError("trust establishment failed with " + name);
            hospital_conns.push_back(
                *stack.at("Researcher")
                     .find_connection_to(stack.at(name).config().http_endpoint()));
        }

        fl::Dataset full = config.dataset_path.empty()
                               ? fl::synthetic_dataset(config.master_seed,
                                                       config.synthetic_rows,
                                                       config.synthetic_dims,
                                                       config.synthetic_separation)
                               : fl::load_csv(config.dataset_path);
        auto [training, validation] =
            fl::partition_dataset(full, kHospitals.size(), config.master_seed);
        for (std::size_t i = 0; i < kHospitals.size(); ++i) {
            fl::TrainConfig cfg;
            cfg.seed = config.master_seed + i + 1;
            stack.at(kHospitals[i]).set_training_data(training[i], cfg);
        }

        fl::ModelParams model;
        model.weights.assign(validation.dim(), 0.0);
        outcome.validation_rows = validation.rows();
        outcome.federation = fl::run_federation(stack.at("Researcher"), hospital_conns,
                                                model, validation);
        if (!outcome.federation.complete)
            throw ScenarioError("federation aborted: " + outcome.federation.failure);

        outcome.leak_hits = transport::scan_capture(stack.transport->capture(),
                                                    leak_needles(stack, outcome.federation));
        outcome.capture_frames = stack.transport->capture().frame_count();
        outcome.capture_bytes = stack.transport->capture().total_bytes();

        write_artifacts(out_dir, outcome.federation, stack.transport->capture(), trust_log);

        if (!outcome.leak_hits.empty()) {
            outcome.exit_code = 1;
            outcome.failed_stage = "leak-scan: plaintext found in capture";
        }
    } catch (const std::exception& e) {
        outcome.exit_code = 1;
        if (outcome.failed_stage.empty())
            outcome.failed_stage = std::string("run: ") + e.what();
    }
    return outcome;
}

MaliciousOutcome run_malicious(const ScenarioConfig& config, Backend backend,
                               const std::string& out_dir) {
    MaliciousOutcome outcome;
    std::vector<std::string> trust_log;
    try {
        config.validate();
        Stack stack(config, backend);
        stack.issue_all_credentials();

        // Hospital 3's credential is revoked before trust establishment.
        auto hospital3_creds = stack.at("Hospital 3").credentials();
        cred::revoke(stack.registries.at(std::string(kNhsRegistry)),
                     hospital3_creds.at(0).revocation_id);

        std::vector<std::string> trusted_conns;
        for (const auto& name : kHospitals) {
            stack.connect(stack.at("Researcher"), stack.at(name));
            auto [researcher_trusts, hospital_trusts] = agent::establish_trust(
                stack.at("Researcher"), stack.at(name), stack.researcher_policy(),
                stack.hospital_policy());
            auto conn = *stack.at("Researcher")
                             .find_connection_to(stack.at(name).config().http_endpoint());
            if (researcher_trusts && hospital_trusts) {
                trusted_conns.push_back(conn);
            } else {
                trust_log.push_back(name + ": rejected");
                if (name == "Hospital 3") {
                    auto result = stack.at("Researcher").last_verification(conn);
                    outcome.revoked_hospital_excluded =
                        result && !result->not_revoked && !result->overall();
                    outcome.rejections.push_back(
                        "Hospital 3 rejected: not_revoked=false (credential revoked)");
                }
            }
        }

        // (a) Agent holding no credential at all.
        agent::AgentConfig nocred_cfg{"Mallory-NoCredential", "127.0.0.1", 8080, 8081, 8082};
        agent::Agent nocred(nocred_cfg, *stack.transport, &stack.ledger, &stack.registries);
        nocred.start();
        {
            auto [researcher_conn, _] = stack.connect(stack.at("Researcher"), nocred);
            stack.at("Researcher").set_trust_policy(stack.researcher_policy());
            bool trusted = stack.at("Researcher").request_proof(researcher_conn);
            auto record = stack.at("Researcher").connection(researcher_conn);
            outcome.no_credential_rejected =
                !trusted && record && record->state == agent::ConnState::active;
            outcome.rejections.push_back(
                "Mallory-NoCredential rejected: no proof produced (connection stays active)");
        }

        // (b) Agent presenting a self-signed credential.
        agent::AgentConfig selfsigned_cfg{"Mallory-SelfSigned", "127.0.0.1", 8090, 8091,
                                          8092};
        agent::Agent selfsigned(selfsigned_cfg, *stack.transport, &stack.ledger,
                                &stack.registries);
        selfsigned.start();
        selfsigned.register_public_did();
        {
            auto secret = cred::LinkSecret::random();
            auto credential = cred::issue_credential(
                selfsigned.public_keys(), selfsigned.public_did(), hospital_schema(),
                {{"name", "Mallory General"},
                 {"status", "verified"},
                 {"issued_at", std::string(kIssuedAt)}},
                cred::commit_link_secret(secret), std::nullopt,
                stack.registries.at(std::string(kExtraRegistry)));
            selfsigned.store_credential(credential, secret);

            auto [researcher_conn, _] = stack.connect(stack.at("Researcher"), selfsigned);
            stack.at("Researcher").set_trust_policy(stack.researcher_policy());
            bool trusted = stack.at("Researcher").request_proof(researcher_conn);
            auto result = stack.at("Researcher").last_verification(researcher_conn);
            auto record = stack.at("Researcher").connection(researcher_conn);
            outcome.self_signed_rejected =
                !trusted && record && record->state == agent::ConnState::active;
            outcome.self_signed_failed_issuer_check = result && !result->issuer_authorized;
            outcome.rejections.push_back(
                "Mallory-SelfSigned rejected: issuer_authorized=false (self-signed VC)");
        }

        // Federation proceeds with the remaining trusted hospitals only.
        fl::Dataset full = fl::synthetic_dataset(config.master_seed, config.synthetic_rows,
                                                 config.synthetic_dims,
                                                 config.synthetic_separation);
        auto [training, validation] =
            fl::partition_dataset(full, kHospitals.size(), config.master_seed);
        for (std::size_t i = 0; i < 2; ++i) {
            fl::TrainConfig cfg;
            cfg.seed = config.master_seed + i + 1;
            stack.at(kHospitals[i]).set_training_data(training[i], cfg);
        }
        fl::ModelParams model;
        model.weights.assign(validation.dim(), 0.0);
        auto federation = fl::run_federation(stack.at("Researcher"), trusted_conns, model,
                                             validation);
        outcome.federation_rounds = federation.rounds.size();

        for (const auto& line : outcome.rejections) trust_log.push_back(line);
        write_artifacts(out_dir, federation, stack.transport->capture(), trust_log);
    } catch (const std::exception& e) {
        outcome.exit_code = 1;
        outcome.failed_stage = std::string("run: ") + e.what();
    }
    return outcome;
}

std::vector<AgentTraffic> traffic_from_capture_lines(const ScenarioConfig& config,
                                                     const std::string& capture_lines) {
    std::map<std::string, std::string> endpoint_to_name;
    for (const auto& a : config.agents)
        endpoint_to_name[a.http_endpoint().str()] = a.name;

    std::map<std::string, AgentTraffic> traffic;
    auto entry = [&](const std::string& endpoint) -> AgentTraffic& {
        auto it = endpoint_to_name.find(endpoint);
        const std::string name = it == endpoint_to_name.end() ? endpoint : it->second;
        auto& t = traffic[name];
        t.name = name;
        return t;
    };

    std::istringstream in(capture_lines);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        std::size_t c3 = line.find(',', c2 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
            continue;
        const std::string src = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string dst = line.substr(c2 + 1, c3 - c2 - 1);
        const std::size_t frame_size = base64url_decode(line.substr(c3 + 1)).size();

        auto& sender = entry(src);
        sender.bytes_sent += frame_size;
        sender.messages_sent += 1;
        auto& receiver = entry(dst);
        receiver.bytes_received += frame_size;
        receiver.messages_received += 1;
    }
    std::vector<AgentTraffic> out;
    for (auto& [_, t] : traffic) out.push_back(t);
    return out;
}

std::string report(const ScenarioConfig& config, const std::string& out_dir) {
    namespace fs = std::filesystem;
    auto read_file = [](const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw MissingArtifact("missing artifact: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string capture = read_file(fs::path(out_dir) / "capture.ndjson");
    const std::string rounds = read_file(fs::path(out_dir) / "rounds.csv");

    std::ostringstream out;
    out << "=== Accuracy per round ===\n" << rounds << '\n';
    out << "=== Traffic per agent ===\n";
    std::size_t total = 0;
    for (const auto& t : traffic_from_capture_lines(config, capture)) {
        out << t.name << ": sent " << t.bytes_sent << " B / " << t.messages_sent
            << " msgs, received " << t.bytes_received << " B / " << t.messages_received
            << " msgs\n";
        total += t.bytes_sent;
    }
    out << "total capture bytes: " << total << '\n';
    return out.str();
}

std::vector<transport::ScanHit> scan_capture_file(const std::string& path,
                                                  const std::vector<std::string>& needles) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing capture file: " + path);

    std::vector<transport::ScanHit> hits;
    std::string line;
    std::size_t frame_index = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto last_comma = line.rfind(',');
        if (last_comma == std::string::npos) continue;
        Bytes frame = base64url_decode(line.substr(last_comma + 1));
        for (std::size_t n = 0; n < needles.size(); ++n) {
            if (needles[n].empty()) continue;
            auto it = std::search(frame.begin(), frame.end(), needles[n].begin(),
                                  needles[n].end());
            if (it != frame.end()) hits.push_back({n, frame_index});
        }
        ++frame_index;
    }
    return hits;
}

}  // namespace tfl::scenario
