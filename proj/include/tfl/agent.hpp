#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfl/credentials.hpp"
#include "tfl/crypto.hpp"
#include "tfl/did.hpp"
#include "tfl/fl.hpp"
#include "tfl/transport.hpp"

namespace tfl::agent {

struct AgentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownCommand : AgentError {
    using AgentError::AgentError;
};
struct UntrustedConnection : AgentError {
    using AgentError::AgentError;
};

enum class ConnState { invited, requested, responded, active, trusted };
std::string to_string(ConnState state);

struct TrustPolicy {
    std::string required_schema_id;
    std::set<std::string> required_issuer_dids;  // rendered DID strings, non-empty
    std::vector<std::string> requested_attributes;
};

struct AgentConfig {
    std::string name;
    std::string host = "127.0.0.1";
    std::uint16_t http_port = 0;
    std::uint16_t admin_port = 0;
    std::uint16_t webhook_port = 0;

    bool ports_distinct() const {
        return http_port != admin_port && http_port != webhook_port &&
               admin_port != webhook_port;
    }
    transport::Endpoint http_endpoint() const { return {host, http_port}; }
};

struct WebhookEvent {
    std::string topic;  // connection, credential, proof, basicmessage, model
    nlohmann::json payload;
};

struct Invitation {
    std::string token;  // one-time
    nlohmann::json inviter_document;
    transport::Endpoint endpoint;

    nlohmann::json to_json() const;
    static Invitation from_json(const nlohmann::json& j);
};

struct ConnectionRecord {
    std::string connection_id;
    did::Did my_did;
    did::Did their_did;
    ConnState state = ConnState::invited;
    transport::Endpoint their_endpoint;
};

// Shared lookup for revocation registries, standing in for registries
// published on the ledger.
using RegistryStore = std::map<std::string, cred::RevocationRegistry>;

// Protocol-speaking runtime: one logical message loop, driven through the
// transport handler and admin commands.
class Agent {
  public:
    Agent(AgentConfig config, transport::Transport& transport, did::PublicLedger* ledger,
          const RegistryStore* registries);
    ~Agent();

    Agent(const Agent&) = delete;
    Agent& operator=(const Agent&) = delete;

    void start();  // bind the agent-to-agent endpoint

    const AgentConfig& config() const { return config_; }
    const did::Did& public_did() const { return public_did_; }
    const crypto::KeyPair& public_keys() const { return public_keys_; }

    // Issuer role
    void register_public_did();  // writes the public DID document to the ledger
    void make_issuable(const cred::CredentialSchema& schema, cred::RevocationRegistry* registry);

    // Holder / verifier roles
    void set_trust_policy(TrustPolicy policy);
    void store_credential(const cred::Credential& credential, const cred::LinkSecret& secret);
    std::vector<cred::Credential> credentials() const;

    // Hospital role
    void set_training_data(fl::Dataset data, fl::TrainConfig cfg);

    // Connection protocol
    Invitation create_invitation();
    std::string accept_invitation(const Invitation& invitation);

    // Proof exchange: sends a proof request built from the trust policy and
    // waits for the outcome (bounded by the proof timeout).
    bool request_proof(const std::string& connection_id);

    // Model exchange (trust-gated)
    void send_model(const std::string& connection_id, const fl::ModelParams& model);
    std::optional<fl::ModelParams> wait_model(const std::string& connection_id,
                                              std::chrono::milliseconds timeout);

    void send_basic_message(const std::string& connection_id, const std::string& text);

    // Controller surface
    nlohmann::json admin_command(const nlohmann::json& request);
    void set_webhook_sink(std::function<void(const WebhookEvent&)> sink);
    std::vector<WebhookEvent> events() const;

    // Queries
    std::vector<ConnectionRecord> connections() const;
    std::optional<ConnectionRecord> connection(const std::string& connection_id) const;
    std::vector<std::string> trusted_connections() const;
    std::optional<std::string> find_connection_to(const transport::Endpoint& endpoint) const;
    std::optional<cred::VerificationResult> last_verification(
        const std::string& connection_id) const;

    void set_proof_timeout(std::chrono::milliseconds timeout) { proof_timeout_ = timeout; }
    // When set, proof requests are silently ignored (malicious / stalled peer).
    void set_ignore_proof_requests(bool ignore) { ignore_proof_requests_ = ignore; }

  private:
    struct Connection;

    void handle_frame(std::span<const std::uint8_t> frame);
    void dispatch(Connection& conn, const nlohmann::json& message);
    void send_message(Connection& conn, const nlohmann::json& message);
    void transition(Connection& conn, ConnState next);
    void emit(const std::string& topic, nlohmann::json payload);
    Connection* find_by_hint(const std::string& hint);
    Connection& require_connection(const std::string& connection_id);
    std::string new_connection_id();

    void on_connection_request(Connection& conn, const nlohmann::json& message,
                               const crypto::PublicKey& sender);
    void on_connection_response(Connection& conn, const nlohmann::json& message);
    void on_connection_ack(Connection& conn);
    void on_credential_offer(Connection& conn, const nlohmann::json& message);
    void on_credential_request(Connection& conn, const nlohmann::json& message);
    void on_credential_issue(Connection& conn, const nlohmann::json& message);
    void on_proof_request(Connection& conn, const nlohmann::json& message);
    void on_proof_presentation(Connection& conn, const nlohmann::json& message);
    void on_model(Connection& conn, const nlohmann::json& message);
    void on_model_result(Connection& conn, const nlohmann::json& message);

    void offer_credential(const std::string& connection_id, const std::string& schema_id,
                          const std::map<std::string, std::string>& attributes,
                          std::optional<std::int64_t> expiry);
    cred::VerificationResult verify_against_registry(const cred::ProofRequest& request,
                                                     const cred::ProofPresentation& pres);

    AgentConfig config_;
    transport::Transport& transport_;
    did::PublicLedger* ledger_;
    const RegistryStore* registries_;
    std::unique_ptr<transport::Listener> listener_;

    crypto::KeyPair public_keys_;
    did::Did public_did_;
    did::DidDocument public_document_;

    mutable std::recursive_mutex mutex_;
    std::map<std::string, std::unique_ptr<Connection>> connections_;
    std::map<std::string, std::string> hint_to_connection_;
    std::map<std::string, std::string> pending_invitations_;  // token -> connection_id

    struct WalletEntry {
        cred::Credential credential;
        cred::LinkSecret secret;
    };
    std::vector<WalletEntry> wallet_;
    std::map<std::string, cred::LinkSecret> pending_link_secrets_;  // schema -> secret

    struct IssuableSchema {
        cred::CredentialSchema schema;
        cred::RevocationRegistry* registry;
    };
    std::map<std::string, IssuableSchema> issuable_;
    // (connection_id, schema_id) -> offered attributes + expiry
    std::map<std::string, std::pair<std::map<std::string, std::string>,
                                    std::optional<std::int64_t>>>
        pending_offers_;

    std::optional<TrustPolicy> policy_;
    std::optional<fl::Dataset> training_data_;
    fl::TrainConfig training_config_;

    std::vector<WebhookEvent> events_;
    std::function<void(const WebhookEvent&)> webhook_sink_;

    std::chrono::milliseconds proof_timeout_{5000};
    bool ignore_proof_requests_ = false;
    std::uint64_t next_connection_ = 0;
};

// Mutual trust establishment: the initiator requests and verifies first, then
// the responder. The two verifications are independent.
std::pair<bool, bool> establish_trust(Agent& initiator, Agent& responder,
                                      const TrustPolicy& initiator_policy,
                                      const TrustPolicy& responder_policy);

}  // namespace tfl::agent
