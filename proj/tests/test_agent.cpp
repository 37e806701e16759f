#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include <httplib.h>

#include "tfl/agent.hpp"
#include "tfl/controller.hpp"

using namespace tfl;
using namespace tfl::agent;

namespace {

struct World {
    transport::LoopbackTransport transport;
    did::PublicLedger ledger;
    RegistryStore registries;

    World() {
        registries.emplace("reg-1", cred::RevocationRegistry{"reg-1", {}});
    }

    std::unique_ptr<Agent> spawn(const std::string& name, std::uint16_t base_port) {
        AgentConfig cfg{name, "127.0.0.1", base_port,
                        static_cast<std::uint16_t>(base_port + 1),
                        static_cast<std::uint16_t>(base_port + 2)};
        auto agent = std::make_unique<Agent>(cfg, transport, &ledger, &registries);
        agent->start();
        return agent;
    }
};

cred::CredentialSchema schema() {
    return {"verified-hospital-v1", "Verified Hospital", "1.0",
            {"name", "status", "issued_at"}};
}

std::map<std::string, std::string> attrs(const std::string& name) {
    return {{"name", name}, {"status", "verified"},
            {"issued_at", "2021-03-01T00:00:00Z"}};
}

TrustPolicy policy_for(const Agent& issuer) {
    return {"verified-hospital-v1", {issuer.public_did().str()}, {"name", "status"}};
}

// DID exchange; returns (inviter connection id, acceptor connection id).
std::pair<std::string, std::string> connect(Agent& inviter, Agent& acceptor) {
    auto invitation = inviter.create_invitation();
    auto acceptor_conn = acceptor.accept_invitation(invitation);
    auto inviter_conn = inviter.find_connection_to(acceptor.config().http_endpoint());
    REQUIRE(inviter_conn);
    return {*inviter_conn, acceptor_conn};
}

void issue_to(Agent& issuer, Agent& holder, const std::string& holder_name) {
    auto [issuer_conn, holder_conn] = connect(issuer, holder);
    auto response = issuer.admin_command(
        {{"command", "issue_credential"},
         {"params", {{"connection_id", issuer_conn},
                     {"schema_id", "verified-hospital-v1"},
                     {"attributes", attrs(holder_name)}}}});
    REQUIRE(response.value("ok", false));
    REQUIRE(holder.credentials().size() == 1);
}

std::size_t count_events(const Agent& agent, const std::string& topic) {
    auto events = agent.events();
    return std::count_if(events.begin(), events.end(),
                         [&](const WebhookEvent& e) { return e.topic == topic; });
}

std::size_t count_errors(const Agent& agent) {
    auto events = agent.events();
    return std::count_if(events.begin(), events.end(), [](const WebhookEvent& e) {
        return e.payload.contains("error");
    });
}

}  // namespace

TEST_CASE("DID exchange walks the full state machine") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);

    auto [alice_conn, bob_conn] = connect(*alice, *bob);
    CHECK(alice->connection(alice_conn)->state == ConnState::active);
    CHECK(bob->connection(bob_conn)->state == ConnState::active);

    // Pairwise DIDs point at each other and never touch the ledger.
    auto a_record = *alice->connection(alice_conn);
    auto b_record = *bob->connection(bob_conn);
    CHECK(a_record.their_did == b_record.my_did);
    CHECK(b_record.their_did == a_record.my_did);
    CHECK(a_record.my_did.method == "peer");
    CHECK_THROWS_AS(w.ledger.resolve(a_record.my_did), did::NotFound);

    // Exactly one connection event per state transition, no errors.
    // Inviter: requested, responded, active. Acceptor: requested, responded,
    // active.
    CHECK(count_events(*alice, "connection") == 3);
    CHECK(count_events(*bob, "connection") == 3);
    CHECK(count_errors(*alice) == 0);
    CHECK(count_errors(*bob) == 0);
}

TEST_CASE("invitation tokens are single-use") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);
    auto carol = w.spawn("carol", 9300);

    auto invitation = alice->create_invitation();
    bob->accept_invitation(invitation);
    CHECK(alice->connections().size() == 1);

    std::size_t errors_before = count_errors(*alice);
    carol->accept_invitation(invitation);  // replayed token
    CHECK(count_errors(*alice) > errors_before);
    // The replay created no second active connection at the inviter.
    auto records = alice->connections();
    CHECK(std::count_if(records.begin(), records.end(), [](const auto& r) {
              return r.state == ConnState::active;
          }) == 1);
}

TEST_CASE("credential offer-request-issue round") {
    World w;
    auto issuer = w.spawn("issuer", 9100);
    auto holder = w.spawn("holder", 9200);
    issuer->register_public_did();
    issuer->make_issuable(schema(), &w.registries.at("reg-1"));

    issue_to(*issuer, *holder, "St Elsewhere");

    auto credential = holder->credentials().at(0);
    CHECK(credential.schema_id == "verified-hospital-v1");
    CHECK(credential.issuer_did == issuer->public_did());
    CHECK(credential.attributes == attrs("St Elsewhere"));
    CHECK(credential.registry_id == "reg-1");
    // Offer received, then stored: two credential events at the holder.
    CHECK(count_events(*holder, "credential") == 2);
}

TEST_CASE("mutual trust through proof exchange") {
    World w;
    auto issuer = w.spawn("issuer", 9100);
    auto alice = w.spawn("alice", 9200);
    auto bob = w.spawn("bob", 9300);
    issuer->register_public_did();
    issuer->make_issuable(schema(), &w.registries.at("reg-1"));
    issue_to(*issuer, *alice, "Alice Hospital");
    issue_to(*issuer, *bob, "Bob Hospital");

    connect(*alice, *bob);
    auto [alice_ok, bob_ok] =
        establish_trust(*alice, *bob, policy_for(*issuer), policy_for(*issuer));
    CHECK(alice_ok);
    CHECK(bob_ok);

    auto alice_conn = *alice->find_connection_to(bob->config().http_endpoint());
    auto bob_conn = *bob->find_connection_to(alice->config().http_endpoint());
    CHECK(alice->connection(alice_conn)->state == ConnState::trusted);
    CHECK(bob->connection(bob_conn)->state == ConnState::trusted);
    CHECK(alice->trusted_connections() == std::vector<std::string>{alice_conn});
    CHECK(alice->last_verification(alice_conn)->overall());
}

TEST_CASE("proof request against an empty wallet is declined, not trusted") {
    World w;
    auto issuer = w.spawn("issuer", 9100);
    auto verifier = w.spawn("verifier", 9200);
    auto mallory = w.spawn("mallory", 9300);
    issuer->register_public_did();
    verifier->set_trust_policy(policy_for(*issuer));

    auto [verifier_conn, _] = connect(*verifier, *mallory);
    CHECK_FALSE(verifier->request_proof(verifier_conn));
    CHECK(verifier->connection(verifier_conn)->state == ConnState::active);
    CHECK_FALSE(verifier->last_verification(verifier_conn).has_value());
}

TEST_CASE("silent peer leads to a proof timeout on a synchronous transport") {
    World w;
    auto issuer = w.spawn("issuer", 9100);
    auto verifier = w.spawn("verifier", 9200);
    auto mallory = w.spawn("mallory", 9300);
    issuer->register_public_did();
    issuer->make_issuable(schema(), &w.registries.at("reg-1"));
    issue_to(*issuer, *mallory, "Mallory");
    mallory->set_ignore_proof_requests(true);
    verifier->set_trust_policy(policy_for(*issuer));

    auto [verifier_conn, _] = connect(*verifier, *mallory);
    CHECK_FALSE(verifier->request_proof(verifier_conn));
    auto events = verifier->events();
    CHECK(std::any_of(events.begin(), events.end(), [](const WebhookEvent& e) {
        return e.topic == "proof" && e.payload.value("status", "") == "timeout";
    }));
}

TEST_CASE("model exchange requires a trusted connection") {
    World w;
    auto issuer = w.spawn("issuer", 9100);
    auto researcher = w.spawn("researcher", 9200);
    auto hospital = w.spawn("hospital", 9300);
    issuer->register_public_did();
    issuer->make_issuable(schema(), &w.registries.at("reg-1"));
    issue_to(*issuer, *researcher, "Researcher");
    issue_to(*issuer, *hospital, "Hospital");

    auto [r_conn, h_conn] = connect(*researcher, *hospital);

    fl::ModelParams model;
    model.weights = {0.0, 0.0};
    CHECK_THROWS_AS(researcher->send_model(r_conn, model), UntrustedConnection);

    establish_trust(*researcher, *hospital, policy_for(*issuer), policy_for(*issuer));
    auto data = fl::synthetic_dataset(1, 64, 2, 10.0);
    hospital->set_training_data(data, fl::TrainConfig{});

    researcher->send_model(r_conn, model);
    auto trained = researcher->wait_model(r_conn, std::chrono::seconds(1));
    REQUIRE(trained);
    CHECK(*trained != model);
    // The reply matches local training bit for bit.
    CHECK(*trained == fl::train_local(model, data, fl::TrainConfig{}));
}

TEST_CASE("replayed envelopes are dropped") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);
    auto [alice_conn, bob_conn] = connect(*alice, *bob);

    alice->send_basic_message(alice_conn, "hello once");
    CHECK(count_events(*bob, "basicmessage") == 1);

    // Replay the captured frame verbatim.
    auto records = w.transport.capture().snapshot();
    auto last = records.back();
    std::size_t errors_before = count_errors(*bob);
    w.transport.send(last.source, last.destination, last.frame);
    CHECK(count_events(*bob, "basicmessage") == 1);  // not delivered twice
    CHECK(count_errors(*bob) == errors_before + 1);
}

TEST_CASE("frames from unknown senders are dropped with an error event") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);
    auto eve = w.spawn("eve", 9300);
    connect(*alice, *bob);

    // Eve fabricates an envelope to bob without any invitation pending.
    auto keys = crypto::random_keypair();
    auto env = crypto::seal(keys, crypto::random_keypair().agreement_public,
                            to_bytes("{\"type\":\"basicmessage\"}"));
    std::size_t errors_before = count_errors(*bob);
    w.transport.send(eve->config().http_endpoint(), bob->config().http_endpoint(),
                     env.canonical());
    CHECK(count_errors(*bob) == errors_before + 1);
}

TEST_CASE("garbage frames never crash the agent") {
    World w;
    auto bob = w.spawn("bob", 9200);
    transport::Endpoint from{"127.0.0.1", 9999};
    CHECK_NOTHROW(w.transport.send(from, bob->config().http_endpoint(),
                                   to_bytes("definitely not an envelope")));
    CHECK_NOTHROW(w.transport.send(from, bob->config().http_endpoint(), Bytes{}));
    CHECK(count_errors(*bob) == 2);
}

TEST_CASE("admin surface mirrors the programmatic API") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);

    auto created = alice->admin_command({{"command", "create_invitation"}});
    REQUIRE(created.value("ok", false));
    auto accepted = bob->admin_command(
        {{"command", "accept_invitation"},
         {"params", {{"invitation", created.at("invitation")}}}});
    REQUIRE(accepted.value("ok", false));

    auto list = alice->admin_command({{"command", "list_connections"}});
    REQUIRE(list.value("ok", false));
    REQUIRE(list.at("connections").size() == 1);
    CHECK(list.at("connections").at(0).at("state") == "active");

    auto unknown = alice->admin_command({{"command", "frobnicate"}});
    CHECK(unknown.value("error", "") == "UnknownCommand");

    auto failed = alice->admin_command(
        {{"command", "request_proof"}, {"params", {{"connection_id", "nope"}}}});
    CHECK(failed.value("error", "") == "CommandFailed");
}

TEST_CASE("http controller drives the agent and receives its webhooks") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);
    HttpController alice_controller(*alice);
    HttpController bob_controller(*bob);

    auto post = [](const Agent& agent, const nlohmann::json& request) {
        httplib::Client client(agent.config().host,
                               agent.config().admin_port);
        auto res = client.Post("/admin", request.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        return nlohmann::json::parse(res->body);
    };

    auto created = post(*alice, {{"command", "create_invitation"}});
    REQUIRE(created.value("ok", false));
    auto accepted = post(*bob, {{"command", "accept_invitation"},
                                {"params", {{"invitation", created.at("invitation")}}}});
    REQUIRE(accepted.value("ok", false));

    auto list = post(*alice, {{"command", "list_connections"}});
    REQUIRE(list.at("connections").size() == 1);
    CHECK(list.at("connections").at(0).at("state") == "active");

    auto trusted = post(*alice, {{"command", "get_trusted"}});
    CHECK(trusted.at("trusted").empty());

    auto unknown = post(*alice, {{"command", "frobnicate"}});
    CHECK(unknown.value("error", "") == "UnknownCommand");

    // Every event the agent recorded arrived at the controller over HTTP.
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (bob_controller.delivered().size() < bob->events().size() &&
           std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    auto delivered = bob_controller.delivered();
    auto recorded = bob->events();
    REQUIRE(delivered.size() == recorded.size());
    for (std::size_t i = 0; i < delivered.size(); ++i) {
        CHECK(delivered[i].topic == recorded[i].topic);
        CHECK(delivered[i].payload == recorded[i].payload);
    }
}

TEST_CASE("webhook sink sees every recorded event") {
    World w;
    auto alice = w.spawn("alice", 9100);
    auto bob = w.spawn("bob", 9200);
    std::vector<WebhookEvent> seen;
    bob->set_webhook_sink([&](const WebhookEvent& e) { seen.push_back(e); });

    auto [alice_conn, bob_conn] = connect(*alice, *bob);
    alice->send_basic_message(alice_conn, "ping");

    auto recorded = bob->events();
    REQUIRE(seen.size() == recorded.size());
    for (std::size_t i = 0; i < seen.size(); ++i) {
        CHECK(seen[i].topic == recorded[i].topic);
        CHECK(seen[i].payload == recorded[i].payload);
    }
    CHECK(seen.back().topic == "basicmessage");
    CHECK(seen.back().payload.value("content", "") == "ping");
}
