#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tfl/scenario.hpp"

using namespace tfl;
using namespace tfl::scenario;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("default config is valid and carries the published port plan") {
    auto config = ScenarioConfig::defaults();
    CHECK_NOTHROW(config.validate());
    CHECK(config.agent_named("NHS Trust").http_port == 8020);
    CHECK(config.agent_named("Regulator").http_port == 8030);
    CHECK(config.agent_named("Researcher").http_port == 8040);
    CHECK(config.agent_named("Hospital 1").http_port == 8050);
    CHECK(config.agent_named("Hospital 2").webhook_port == 8062);
    CHECK(config.agent_named("Hospital 3").admin_port == 8071);
    CHECK_THROWS_AS(config.agent_named("Hospital 4"), ScenarioError);
}

TEST_CASE("config validation rejects port collisions and missing agents") {
    auto config = ScenarioConfig::defaults();
    config.agents[0].http_port = config.agents[1].http_port;
    CHECK_THROWS_AS(config.validate(), ScenarioError);

    config = ScenarioConfig::defaults();
    config.agents[0].admin_port = config.agents[0].http_port;
    CHECK_THROWS_AS(config.validate(), ScenarioError);

    config = ScenarioConfig::defaults();
    config.agents.erase(config.agents.begin());  // drops Hospital 1
    CHECK_THROWS_AS(config.validate(), ScenarioError);

    config = ScenarioConfig::defaults();
    config.synthetic_rows = 0;
    CHECK_THROWS_AS(config.validate(), ScenarioError);
}

TEST_CASE("config json roundtrip") {
    auto config = ScenarioConfig::defaults();
    config.master_seed = 7;
    config.synthetic_rows = 500;
    config.dataset_path = "/tmp/x.csv";
    auto restored = ScenarioConfig::from_json(config.to_json());
    CHECK(restored.to_json() == config.to_json());
    CHECK(restored.master_seed == 7);
    CHECK(restored.agent_named("Regulator").admin_port == 8031);
}

TEST_CASE("demo run completes with clean capture and full artifacts") {
    TempDir dir("tfl-scenario-demo");
    auto config = ScenarioConfig::defaults();
    auto outcome = run_demo(config, Backend::loopback, dir.str());

    CHECK(outcome.exit_code == 0);
    CHECK(outcome.failed_stage.empty());
    REQUIRE(outcome.federation.rounds.size() == 4);
    CHECK(outcome.federation.complete);
    CHECK(outcome.validation_rows == 322);
    for (const auto& round : outcome.federation.rounds)
        CHECK(round.matrix.total() == outcome.validation_rows);
    CHECK(outcome.leak_hits.empty());
    CHECK(outcome.capture_frames > 0);

    CHECK(std::filesystem::exists(dir.path / "rounds.csv"));
    CHECK(std::filesystem::exists(dir.path / "capture.ndjson"));
    CHECK(std::filesystem::exists(dir.path / "trust.log"));

    std::ifstream rounds(dir.path / "rounds.csv");
    std::string line;
    std::getline(rounds, line);
    CHECK(line == "round,tp,fp,tn,fn,accuracy");
    std::size_t data_lines = 0;
    while (std::getline(rounds, line))
        if (!line.empty()) ++data_lines;
    CHECK(data_lines == 4);
}

TEST_CASE("demo run is reproducible for a fixed seed") {
    auto config = ScenarioConfig::defaults();
    auto a = run_demo(config, Backend::loopback, "");
    auto b = run_demo(config, Backend::loopback, "");
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    REQUIRE(a.federation.rounds.size() == b.federation.rounds.size());
    for (std::size_t i = 0; i < a.federation.rounds.size(); ++i) {
        CHECK(a.federation.rounds[i].matrix == b.federation.rounds[i].matrix);
        CHECK(a.federation.rounds[i].model == b.federation.rounds[i].model);
    }
}

TEST_CASE("demo can read its dataset from csv") {
    const std::string path = "/tmp/tfl-scenario-data.csv";
    {
        auto data = fl::synthetic_dataset(11, 120, 3, 10.0);
        std::ofstream out(path);
        out << "f1,f2,f3,label\n";
        for (std::size_t i = 0; i < data.rows(); ++i)
            out << data.features[i][0] << ',' << data.features[i][1] << ','
                << data.features[i][2] << ',' << data.labels[i] << '\n';
    }
    auto config = ScenarioConfig::defaults();
    config.dataset_path = path;
    auto outcome = run_demo(config, Backend::loopback, "");
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.validation_rows == 30);  // floor(120/4)
    std::filesystem::remove(path);
}

TEST_CASE("malicious agents are each rejected for the right reason") {
    auto config = ScenarioConfig::defaults();
    auto outcome = run_malicious(config, Backend::loopback, "");
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.failed_stage.empty());
    CHECK(outcome.no_credential_rejected);
    CHECK(outcome.self_signed_rejected);
    CHECK(outcome.self_signed_failed_issuer_check);
    CHECK(outcome.revoked_hospital_excluded);
    // Round 0 plus the two remaining honest hospitals.
    CHECK(outcome.federation_rounds == 3);
    CHECK(outcome.rejections.size() == 3);
}

TEST_CASE("report aggregates the artifacts it finds on disk") {
    TempDir dir("tfl-scenario-report");
    auto config = ScenarioConfig::defaults();
    auto outcome = run_demo(config, Backend::loopback, dir.str());
    REQUIRE(outcome.exit_code == 0);

    auto text = report(config, dir.str());
    CHECK(text.find("round,tp,fp,tn,fn,accuracy") != std::string::npos);
    CHECK(text.find("Researcher") != std::string::npos);
    CHECK(text.find("NHS Trust") != std::string::npos);
    CHECK(text.find("total capture bytes: " +
                     std::to_string(outcome.capture_bytes)) != std::string::npos);

    CHECK_THROWS_AS(report(config, "/tmp/does-not-exist-at-all"), MissingArtifact);
}

TEST_CASE("traffic accounting matches the capture totals") {
    auto config = ScenarioConfig::defaults();
    TempDir dir("tfl-scenario-traffic");
    auto outcome = run_demo(config, Backend::loopback, dir.str());
    REQUIRE(outcome.exit_code == 0);

    std::ifstream in(dir.path / "capture.ndjson");
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto traffic = traffic_from_capture_lines(config, buffer.str());

    std::size_t sent = 0, received = 0, messages = 0;
    for (const auto& t : traffic) {
        sent += t.bytes_sent;
        received += t.bytes_received;
        messages += t.messages_sent;
    }
    CHECK(sent == outcome.capture_bytes);
    CHECK(received == outcome.capture_bytes);
    CHECK(messages == outcome.capture_frames);
}

TEST_CASE("offline capture scan finds planted plaintext") {
    TempDir dir("tfl-scenario-scan");
    std::filesystem::create_directories(dir.path);
    auto file = dir.path / "capture.ndjson";
    {
        std::ofstream out(file);
        out << "1,host:1,host:2," << base64url_encode(to_bytes("nothing here")) << '\n';
        out << "2,host:1,host:2," << base64url_encode(to_bytes("the secret value"))
            << '\n';
    }
    auto hits = scan_capture_file(file.string(), {"secret value", "absent"});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].needle_index == 0);
    CHECK(hits[0].frame_index == 1);
    CHECK(scan_capture_file(file.string(), {"absent"}).empty());
    CHECK_THROWS_AS(scan_capture_file("/tmp/no-such-capture.ndjson", {"x"}),
                    MissingArtifact);
}

TEST_CASE("demo produces identical results over tcp") {
    auto config = ScenarioConfig::defaults();
    auto loopback = run_demo(config, Backend::loopback, "");
    auto tcp = run_demo(config, Backend::tcp, "");
    REQUIRE(loopback.exit_code == 0);
    REQUIRE(tcp.exit_code == 0);
    REQUIRE(tcp.federation.rounds.size() == loopback.federation.rounds.size());
    for (std::size_t i = 0; i < tcp.federation.rounds.size(); ++i) {
        CHECK(tcp.federation.rounds[i].model == loopback.federation.rounds[i].model);
        CHECK(tcp.federation.rounds[i].matrix == loopback.federation.rounds[i].matrix);
    }
}
