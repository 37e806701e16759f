#include "tfl/agent.hpp"

#include <sodium.h>

#include <algorithm>
#include <ctime>
#include <thread>

namespace tfl::agent {

namespace {

std::string random_token() {
    std::array<std::uint8_t, 16> buf{};
    randombytes_buf(buf.data(), buf.size());
    return hex_encode(buf);
}

transport::Endpoint parse_endpoint(const std::string& rendered) {
    auto colon = rendered.rfind(':');
    if (colon == std::string::npos) throw AgentError("malformed endpoint: " + rendered);
    return {rendered.substr(0, colon),
            static_cast<std::uint16_t>(std::stoi(rendered.substr(colon + 1)))};
}

}  // namespace

std::string to_string(ConnState state) {
    switch (state) {
        case ConnState::invited: return "invited";
        case ConnState::requested: return "requested";
        case ConnState::responded: return "responded";
        case ConnState::active: return "active";
        case ConnState::trusted: return "trusted";
    }
    return "unknown";
}

nlohmann::json Invitation::to_json() const {
    return {{"token", token},
            {"inviter_document", inviter_document},
            {"endpoint", endpoint.str()}};
}

Invitation Invitation::from_json(const nlohmann::json& j) {
    return {j.at("token").get<std::string>(), j.at("inviter_document"),
            parse_endpoint(j.at("endpoint").get<std::string>())};
}

struct Agent::Connection {
    ConnectionRecord record;
    crypto::KeyPair my_keys;
    did::DidDocument my_document;
    did::DidDocument their_document;
    crypto::PublicKey their_signing{};
    crypto::PublicKey their_agreement{};
    bool have_their_keys = false;
    std::set<std::string> seen_nonces;

    std::optional<cred::ProofRequest> outstanding_request;
    std::optional<cred::VerificationResult> last_verification;
    bool proof_completed = false;
    bool proof_ok = false;

    std::deque<fl::ModelParams> received_models;
};

Agent::Agent(AgentConfig config, transport::Transport& transport, did::PublicLedger* ledger,
             const RegistryStore* registries)
    : config_(std::move(config)),
      transport_(transport),
      ledger_(ledger),
      registries_(registries) {
    if (!config_.ports_distinct())
        throw AgentError("http, admin and webhook ports must be distinct");
    public_keys_ = crypto::random_keypair();
    auto [id, doc] = did::create_did("tfl", public_keys_, config_.http_endpoint().str());
    public_did_ = id;
    public_document_ = doc;
}

Agent::~Agent() = default;

void Agent::start() {
    listener_ = transport_.bind(config_.http_endpoint(),
                                [this](std::span<const std::uint8_t> frame) {
                                    handle_frame(frame);
                                });
}

void Agent::register_public_did() {
    if (!ledger_) throw AgentError("agent has no ledger to register with");
    ledger_->register_did(public_document_);
}

void Agent::make_issuable(const cred::CredentialSchema& schema,
                          cred::RevocationRegistry* registry) {
    std::lock_guard lock(mutex_);
    issuable_[schema.schema_id] = {schema, registry};
}

void Agent::set_trust_policy(TrustPolicy policy) {
    if (policy.required_issuer_dids.empty())
        throw AgentError("trust policy requires at least one issuer DID");
    std::lock_guard lock(mutex_);
    policy_ = std::move(policy);
}

void Agent::store_credential(const cred::Credential& credential,
                             const cred::LinkSecret& secret) {
    std::lock_guard lock(mutex_);
    wallet_.push_back({credential, secret});
}

std::vector<cred::Credential> Agent::credentials() const {
    std::lock_guard lock(mutex_);
    std::vector<cred::Credential> out;
    for (const auto& entry : wallet_) out.push_back(entry.credential);
    return out;
}

void Agent::set_training_data(fl::Dataset data, fl::TrainConfig cfg) {
    std::lock_guard lock(mutex_);
    training_data_ = std::move(data);
    training_config_ = cfg;
}

std::string Agent::new_connection_id() {
    return config_.name + "-conn-" + std::to_string(next_connection_++);
}

void Agent::emit(const std::string& topic, nlohmann::json payload) {
    WebhookEvent event{topic, std::move(payload)};
    events_.push_back(event);
    if (webhook_sink_) webhook_sink_(event);
}

void Agent::set_webhook_sink(std::function<void(const WebhookEvent&)> sink) {
    std::lock_guard lock(mutex_);
    webhook_sink_ = std::move(sink);
}

std::vector<WebhookEvent> Agent::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

void Agent::transition(Connection& conn, ConnState next) {
    conn.record.state = next;
    emit("connection", {{"connection_id", conn.record.connection_id},
                        {"state", to_string(next)},
                        {"their_did", conn.record.their_did.str()}});
}

Invitation Agent::create_invitation() {
    std::lock_guard lock(mutex_);
    auto keys = crypto::random_keypair();
    auto [id, doc] = did::create_peer_did(keys, config_.http_endpoint().str());

    auto conn = std::make_unique<Connection>();
    conn->record.connection_id = new_connection_id();
    conn->record.my_did = id;
    conn->record.state = ConnState::invited;
    conn->my_keys = keys;
    conn->my_document = doc;

    Invitation invitation{random_token(), doc.to_json(), config_.http_endpoint()};
    pending_invitations_[invitation.token] = conn->record.connection_id;
    connections_[conn->record.connection_id] = std::move(conn);
    return invitation;
}

std::string Agent::accept_invitation(const Invitation& invitation) {
    std::lock_guard lock(mutex_);
    auto their_doc = did::DidDocument::from_json(invitation.inviter_document);
    if (!their_doc.structurally_valid() || !their_doc.self_certifies())
        throw AgentError("invitation carries an invalid DID document");
    auto their_signing = their_doc.signing_key();
    auto their_agreement = their_doc.agreement_key();
    if (!their_signing || !their_agreement)
        throw AgentError("invitation document lacks usable keys");

    auto keys = crypto::random_keypair();
    auto [id, doc] = did::create_peer_did(keys, config_.http_endpoint().str());

    auto conn = std::make_unique<Connection>();
    conn->record.connection_id = new_connection_id();
    conn->record.my_did = id;
    conn->record.their_did = their_doc.id;
    conn->record.their_endpoint = invitation.endpoint;
    conn->record.state = ConnState::invited;
    conn->my_keys = keys;
    conn->my_document = doc;
    conn->their_document = their_doc;
    conn->their_signing = *their_signing;
    conn->their_agreement = *their_agreement;
    conn->have_their_keys = true;

    Connection& ref = *conn;
    const std::string connection_id = ref.record.connection_id;
    hint_to_connection_[crypto::key_hint(*their_signing)] = connection_id;
    connections_[connection_id] = std::move(conn);

    // Transition before sending: on a synchronous transport the peer's
    // response is handled inside send_message.
    transition(ref, ConnState::requested);
    try {
        send_message(ref, {{"type", "connection_request"},
                           {"token", invitation.token},
                           {"document", ref.my_document.to_json()}});
    } catch (const transport::TransportError& e) {
        emit("connection", {{"connection_id", connection_id},
                            {"error", std::string("connection failure: ") + e.what()}});
        throw;
    }
    return connection_id;
}

void Agent::send_message(Connection& conn, const nlohmann::json& message) {
    if (!conn.have_their_keys) throw AgentError("peer keys unknown");
    Bytes plaintext = to_bytes(message.dump());
    auto env = crypto::seal(conn.my_keys, conn.their_agreement, plaintext);
    transport_.send(config_.http_endpoint(), conn.record.their_endpoint, env.canonical());
}

Agent::Connection* Agent::find_by_hint(const std::string& hint) {
    auto it = hint_to_connection_.find(hint);
    if (it == hint_to_connection_.end()) return nullptr;
    auto conn = connections_.find(it->second);
    return conn == connections_.end() ? nullptr : conn->second.get();
}

Agent::Connection& Agent::require_connection(const std::string& connection_id) {
    auto it = connections_.find(connection_id);
    if (it == connections_.end()) throw AgentError("unknown connection: " + connection_id);
    return *it->second;
}

void Agent::handle_frame(std::span<const std::uint8_t> frame) {
    std::lock_guard lock(mutex_);

    crypto::EncryptedEnvelope env;
    try {
        env = crypto::EncryptedEnvelope::from_canonical(frame);
    } catch (const crypto::CryptoError& e) {
        emit("connection", {{"error", std::string("malformed envelope: ") + e.what()}});
        return;
    }

    Connection* conn = find_by_hint(env.sender_hint);
    Bytes plaintext;
    crypto::PublicKey sender{};

    if (conn) {
        sender = conn->their_signing;
        try {
            plaintext = crypto::open(conn->my_keys, sender, env);
        } catch (const crypto::CryptoError& e) {
            emit("connection", {{"connection_id", conn->record.connection_id},
                                {"error", std::string("envelope rejected: ") + e.what()}});
            return;
        }
        const std::string nonce_id = hex_encode(env.nonce);
        if (!conn->seen_nonces.insert(nonce_id).second) {
            emit("connection", {{"connection_id", conn->record.connection_id},
                                {"error", "replayed nonce rejected"}});
            return;
        }
    } else {
        // First contact: only a connection request against a pending
        // invitation may arrive from an unknown sender.
        Bytes hint_key;
        try {
            hint_key = base64url_decode(env.sender_hint);
        } catch (...) {
            emit("connection", {{"error", "undecodable sender hint"}});
            return;
        }
        if (hint_key.size() != sender.size()) {
            emit("connection", {{"error", "sender hint has wrong length"}});
            return;
        }
        std::copy(hint_key.begin(), hint_key.end(), sender.begin());
        for (const auto& [token, connection_id] : pending_invitations_) {
            auto it = connections_.find(connection_id);
            if (it == connections_.end()) continue;
            try {
                plaintext = crypto::open(it->second->my_keys, sender, env);
                conn = it->second.get();
                break;
            } catch (const crypto::CryptoError&) {
                continue;
            }
        }
        if (!conn) {
            emit("connection", {{"error", "envelope from unknown sender dropped"}});
            return;
        }
    }

    nlohmann::json message = nlohmann::json::parse(plaintext.begin(), plaintext.end(),
                                                   nullptr, false);
    if (message.is_discarded() || !message.is_object() || !message.contains("type")) {
        emit("connection", {{"connection_id", conn->record.connection_id},
                            {"error", "garbage payload dropped"}});
        return;
    }

    try {
        if (message["type"] == "connection_request") {
            on_connection_request(*conn, message, sender);
        } else {
            dispatch(*conn, message);
        }
    } catch (const std::exception& e) {
        emit("connection", {{"connection_id", conn->record.connection_id},
                            {"error", std::string("message handling failed: ") + e.what()}});
    }
}

void Agent::dispatch(Connection& conn, const nlohmann::json& message) {
    const std::string type = message.at("type").get<std::string>();
    if (type == "connection_response") {
        on_connection_response(conn, message);
    } else if (type == "connection_ack") {
        on_connection_ack(conn);
    } else if (type == "credential_offer") {
        on_credential_offer(conn, message);
    } else if (type == "credential_request") {
        on_credential_request(conn, message);
    } else if (type == "credential_issue") {
        on_credential_issue(conn, message);
    } else if (type == "proof_request") {
        on_proof_request(conn, message);
    } else if (type == "proof_presentation") {
        on_proof_presentation(conn, message);
    } else if (type == "proof_decline") {
        conn.proof_completed = true;
        conn.proof_ok = false;
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "declined"},
                       {"reason", message.value("reason", "")}});
    } else if (type == "model") {
        on_model(conn, message);
    } else if (type == "model_result") {
        on_model_result(conn, message);
    } else if (type == "basicmessage") {
        emit("basicmessage", {{"connection_id", conn.record.connection_id},
                              {"content", message.value("content", "")}});
    } else {
        emit("connection", {{"connection_id", conn.record.connection_id},
                            {"error", "unknown message type: " + type}});
    }
}

void Agent::on_connection_request(Connection& conn, const nlohmann::json& message,
                                  const crypto::PublicKey& sender) {
    const std::string token = message.at("token").get<std::string>();
    auto pending = pending_invitations_.find(token);
    if (pending == pending_invitations_.end() ||
        pending->second != conn.record.connection_id) {
        emit("connection", {{"connection_id", conn.record.connection_id},
                            {"error", "invitation token invalid or already used"}});
        return;
    }
    pending_invitations_.erase(pending);  // one-time token

    auto their_doc = did::DidDocument::from_json(message.at("document"));
    auto their_signing = their_doc.signing_key();
    auto their_agreement = their_doc.agreement_key();
    auto endpoint = their_doc.agent_endpoint();
    if (!their_doc.structurally_valid() || !their_doc.self_certifies() || !their_signing ||
        !their_agreement || !endpoint || *their_signing != sender) {
        emit("connection", {{"connection_id", conn.record.connection_id},
                            {"error", "connection request document rejected"}});
        return;
    }

    conn.their_document = their_doc;
    conn.record.their_did = their_doc.id;
    conn.record.their_endpoint = parse_endpoint(*endpoint);
    conn.their_signing = *their_signing;
    conn.their_agreement = *their_agreement;
    conn.have_their_keys = true;
    hint_to_connection_[crypto::key_hint(*their_signing)] = conn.record.connection_id;

    transition(conn, ConnState::requested);
    transition(conn, ConnState::responded);
    send_message(conn, {{"type", "connection_response"},
                        {"document", conn.my_document.to_json()}});
}

void Agent::on_connection_response(Connection& conn, const nlohmann::json& message) {
    if (conn.record.state != ConnState::requested) {
        emit("connection", {{"connection_id", conn.record.connection_id},
                            {"error", "unexpected connection response"}});
        return;
    }
    auto their_doc = did::DidDocument::from_json(message.at("document"));
    if (their_doc.id != conn.record.their_did) {
        emit("connection", {{"connection_id", conn.record.connection_id},
                            {"error", "connection response DID mismatch"}});
        return;
    }
    transition(conn, ConnState::responded);
    transition(conn, ConnState::active);
    send_message(conn, {{"type", "connection_ack"}});
}

void Agent::on_connection_ack(Connection& conn) {
    if (conn.record.state == ConnState::responded) transition(conn, ConnState::active);
}

void Agent::offer_credential(const std::string& connection_id, const std::string& schema_id,
                             const std::map<std::string, std::string>& attributes,
                             std::optional<std::int64_t> expiry) {
    Connection& conn = require_connection(connection_id);
    auto it = issuable_.find(schema_id);
    if (it == issuable_.end()) throw AgentError("agent cannot issue schema " + schema_id);
    pending_offers_[connection_id + "/" + schema_id] = {attributes, expiry};
    nlohmann::json offer{{"type", "credential_offer"},
                         {"schema", it->second.schema.to_json()}};
    send_message(conn, offer);
}

void Agent::on_credential_offer(Connection& conn, const nlohmann::json& message) {
    auto schema = cred::CredentialSchema::from_json(message.at("schema"));
    auto secret = cred::LinkSecret::random();
    pending_link_secrets_[schema.schema_id] = secret;
    emit("credential", {{"connection_id", conn.record.connection_id},
                        {"status", "offer_received"},
                        {"schema_id", schema.schema_id}});
    send_message(conn, {{"type", "credential_request"},
                        {"schema_id", schema.schema_id},
                        {"link_commitment",
                         base64url_encode(cred::commit_link_secret(secret))}});
}

void Agent::on_credential_request(Connection& conn, const nlohmann::json& message) {
    const std::string schema_id = message.at("schema_id").get<std::string>();
    auto issuable = issuable_.find(schema_id);
    auto offer = pending_offers_.find(conn.record.connection_id + "/" + schema_id);
    if (issuable == issuable_.end() || offer == pending_offers_.end()) {
        emit("credential", {{"connection_id", conn.record.connection_id},
                            {"status", "request_rejected"},
                            {"schema_id", schema_id}});
        return;
    }
    Bytes raw = base64url_decode(message.at("link_commitment").get<std::string>());
    if (raw.size() != 32) throw AgentError("malformed link commitment");
    cred::GroupElement commitment{};
    std::copy(raw.begin(), raw.end(), commitment.begin());

    auto credential = cred::issue_credential(public_keys_, public_did_,
                                             issuable->second.schema, offer->second.first,
                                             commitment, offer->second.second,
                                             *issuable->second.registry);
    pending_offers_.erase(offer);
    emit("credential", {{"connection_id", conn.record.connection_id},
                        {"status", "issued"},
                        {"schema_id", schema_id},
                        {"revocation_id", credential.revocation_id}});
    send_message(conn, {{"type", "credential_issue"}, {"credential", credential.to_json()}});
}

void Agent::on_credential_issue(Connection& conn, const nlohmann::json& message) {
    auto credential = cred::Credential::from_json(message.at("credential"));
    auto pending = pending_link_secrets_.find(credential.schema_id);
    if (pending == pending_link_secrets_.end()) {
        emit("credential", {{"connection_id", conn.record.connection_id},
                            {"status", "unsolicited_credential_dropped"}});
        return;
    }
    auto expected = cred::commit_link_secret(pending->second);
    if (expected != credential.link_commitment) {
        emit("credential", {{"connection_id", conn.record.connection_id},
                            {"status", "commitment_mismatch"}});
        return;
    }
    wallet_.push_back({credential, pending->second});
    pending_link_secrets_.erase(pending);
    emit("credential", {{"connection_id", conn.record.connection_id},
                        {"status", "stored"},
                        {"schema_id", credential.schema_id}});
}

void Agent::on_proof_request(Connection& conn, const nlohmann::json& message) {
    if (ignore_proof_requests_) {
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "ignored"}});
        return;
    }
    auto request = cred::ProofRequest::from_json(message.at("request"));
    auto entry = std::find_if(wallet_.begin(), wallet_.end(), [&](const WalletEntry& e) {
        return e.credential.schema_id == request.requested_schema_id;
    });
    if (entry == wallet_.end()) {
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "no_matching_credential"}});
        send_message(conn, {{"type", "proof_decline"},
                            {"reason", "no matching credential"}});
        return;
    }
    try {
        auto presentation = cred::present_proof(entry->credential, entry->secret, request);
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "presented"},
                       {"schema_id", request.requested_schema_id}});
        send_message(conn, {{"type", "proof_presentation"},
                            {"presentation", presentation.to_json()},
                            {"nonce", base64url_encode(request.verifier_nonce)}});
    } catch (const cred::CredentialError& e) {
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "presentation_failed"},
                       {"reason", e.what()}});
        send_message(conn, {{"type", "proof_decline"}, {"reason", e.what()}});
    }
}

cred::VerificationResult Agent::verify_against_registry(const cred::ProofRequest& request,
                                                        const cred::ProofPresentation& pres) {
    if (!ledger_) return {};
    if (registries_) {
        auto it = registries_->find(pres.registry_id);
        if (it != registries_->end())
            return cred::verify_presentation(*ledger_, it->second, request, pres,
                                             std::time(nullptr));
    }
    // Unknown registry fails closed on the revocation check.
    cred::RevocationRegistry unknown{"unknown-registry", {}};
    return cred::verify_presentation(*ledger_, unknown, request, pres, std::time(nullptr));
}

void Agent::on_proof_presentation(Connection& conn, const nlohmann::json& message) {
    if (!conn.outstanding_request) {
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "unsolicited_presentation_dropped"}});
        return;
    }
    const std::string nonce = message.value("nonce", "");
    if (nonce != base64url_encode(conn.outstanding_request->verifier_nonce)) {
        emit("proof", {{"connection_id", conn.record.connection_id},
                       {"status", "nonce_mismatch"}});
        return;
    }
    auto presentation = cred::ProofPresentation::from_json(message.at("presentation"));
    auto result = verify_against_registry(*conn.outstanding_request, presentation);
    conn.last_verification = result;
    conn.proof_completed = true;
    conn.proof_ok = result.overall();
    conn.outstanding_request.reset();

    emit("proof", {{"connection_id", conn.record.connection_id},
                   {"status", result.overall() ? "verified" : "rejected"},
                   {"result", result.to_json()}});
    // The only path to trusted runs through an overall-true verification.
    if (result.overall() && conn.record.state == ConnState::active)
        transition(conn, ConnState::trusted);
}

bool Agent::request_proof(const std::string& connection_id) {
    {
        std::lock_guard lock(mutex_);
        Connection& conn = require_connection(connection_id);
        if (conn.record.state != ConnState::active && conn.record.state != ConnState::trusted)
            throw AgentError("connection not active: " + connection_id);
        if (!policy_) throw AgentError("no trust policy configured");
        auto request = cred::ProofRequest::make(policy_->required_schema_id,
                                                policy_->requested_attributes,
                                                policy_->required_issuer_dids);
        conn.outstanding_request = request;
        conn.proof_completed = false;
        conn.proof_ok = false;
        try {
            send_message(conn, {{"type", "proof_request"}, {"request", request.to_json()}});
        } catch (const transport::TransportError& e) {
            emit("proof", {{"connection_id", connection_id},
                           {"status", "send_failed"},
                           {"reason", e.what()}});
            return false;
        }
    }

    const auto deadline = std::chrono::steady_clock::now() + proof_timeout_;
    for (;;) {
        {
            std::lock_guard lock(mutex_);
            Connection& conn = require_connection(connection_id);
            if (conn.proof_completed) return conn.proof_ok;
            if (transport_.synchronous() || std::chrono::steady_clock::now() >= deadline) {
                conn.outstanding_request.reset();
                emit("proof", {{"connection_id", connection_id}, {"status", "timeout"}});
                return false;
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

void Agent::send_model(const std::string& connection_id, const fl::ModelParams& model) {
    std::lock_guard lock(mutex_);
    Connection& conn = require_connection(connection_id);
    // Trust gate: model bytes never leave for a non-trusted connection.
    if (conn.record.state != ConnState::trusted)
        throw UntrustedConnection("refusing to send model over non-trusted connection " +
                                  connection_id);
    send_message(conn, {{"type", "model"},
                        {"model", base64url_encode(fl::serialize_model(model))}});
}

void Agent::on_model(Connection& conn, const nlohmann::json& message) {
    if (!training_data_) {
        emit("model", {{"connection_id", conn.record.connection_id},
                       {"status", "no_training_data"}});
        return;
    }
    auto model = fl::deserialize_model(
        base64url_decode(message.at("model").get<std::string>()));
    auto trained = fl::train_local(model, *training_data_, training_config_);
    emit("model", {{"connection_id", conn.record.connection_id}, {"status", "trained"}});
    send_message(conn, {{"type", "model_result"},
                        {"model", base64url_encode(fl::serialize_model(trained))}});
}

void Agent::on_model_result(Connection& conn, const nlohmann::json& message) {
    auto model = fl::deserialize_model(
        base64url_decode(message.at("model").get<std::string>()));
    conn.received_models.push_back(std::move(model));
    emit("model", {{"connection_id", conn.record.connection_id}, {"status", "received"}});
}

std::optional<fl::ModelParams> Agent::wait_model(const std::string& connection_id,
                                                 std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        {
            std::lock_guard lock(mutex_);
            Connection& conn = require_connection(connection_id);
            if (!conn.received_models.empty()) {
                auto model = conn.received_models.front();
                conn.received_models.pop_front();
                return model;
            }
            if (transport_.synchronous() || std::chrono::steady_clock::now() >= deadline)
                return std::nullopt;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

void Agent::send_basic_message(const std::string& connection_id, const std::string& text) {
    std::lock_guard lock(mutex_);
    Connection& conn = require_connection(connection_id);
    send_message(conn, {{"type", "basicmessage"}, {"content", text}});
}

std::vector<ConnectionRecord> Agent::connections() const {
    std::lock_guard lock(mutex_);
    std::vector<ConnectionRecord> out;
    for (const auto& [_, conn] : connections_) out.push_back(conn->record);
    return out;
}

std::optional<ConnectionRecord> Agent::connection(const std::string& connection_id) const {
    std::lock_guard lock(mutex_);
    auto it = connections_.find(connection_id);
    if (it == connections_.end()) return std::nullopt;
    return it->second->record;
}

std::vector<std::string> Agent::trusted_connections() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, conn] : connections_)
        if (conn->record.state == ConnState::trusted) out.push_back(id);
    return out;
}

std::optional<std::string> Agent::find_connection_to(
    const transport::Endpoint& endpoint) const {
    std::lock_guard lock(mutex_);
    for (const auto& [id, conn] : connections_)
        if (conn->record.their_endpoint == endpoint &&
            (conn->record.state == ConnState::active ||
             conn->record.state == ConnState::trusted))
            return id;
    return std::nullopt;
}

std::optional<cred::VerificationResult> Agent::last_verification(
    const std::string& connection_id) const {
    std::lock_guard lock(mutex_);
    auto it = connections_.find(connection_id);
    if (it == connections_.end()) return std::nullopt;
    return it->second->last_verification;
}

nlohmann::json Agent::admin_command(const nlohmann::json& request) {
    try {
        const std::string command = request.at("command").get<std::string>();
        const nlohmann::json params = request.value("params", nlohmann::json::object());

        if (command == "list_connections") {
            nlohmann::json list = nlohmann::json::array();
            for (const auto& record : connections()) {
                list.push_back({{"connection_id", record.connection_id},
                                {"my_did", record.my_did.str()},
                                {"their_did", record.their_did.str()},
                                {"state", to_string(record.state)},
                                {"their_endpoint", record.their_endpoint.str()}});
            }
            return {{"ok", true}, {"connections", list}};
        }
        if (command == "create_invitation") {
            return {{"ok", true}, {"invitation", create_invitation().to_json()}};
        }
        if (command == "accept_invitation") {
            auto id = accept_invitation(Invitation::from_json(params.at("invitation")));
            return {{"ok", true}, {"connection_id", id}};
        }
        if (command == "issue_credential") {
            std::optional<std::int64_t> expiry;
            if (params.contains("expiry"))
                expiry = cred::iso8601_parse(params.at("expiry").get<std::string>());
            std::lock_guard lock(mutex_);
            offer_credential(params.at("connection_id").get<std::string>(),
                             params.at("schema_id").get<std::string>(),
                             params.at("attributes").get<std::map<std::string, std::string>>(),
                             expiry);
            return {{"ok", true}};
        }
        if (command == "request_proof") {
            const std::string id = params.at("connection_id").get<std::string>();
            bool trusted = request_proof(id);
            nlohmann::json response{{"ok", true}, {"trusted", trusted}};
            if (auto result = last_verification(id)) response["result"] = result->to_json();
            return response;
        }
        if (command == "send_model") {
            auto model = fl::deserialize_model(
                base64url_decode(params.at("model").get<std::string>()));
            send_model(params.at("connection_id").get<std::string>(), model);
            return {{"ok", true}};
        }
        if (command == "get_trusted") {
            return {{"ok", true}, {"trusted", trusted_connections()}};
        }
        return {{"error", "UnknownCommand"}, {"command", command}};
    } catch (const std::exception& e) {
        return {{"error", "CommandFailed"}, {"detail", e.what()}};
    }
}

std::pair<bool, bool> establish_trust(Agent& initiator, Agent& responder,
                                      const TrustPolicy& initiator_policy,
                                      const TrustPolicy& responder_policy) {
    initiator.set_trust_policy(initiator_policy);
    responder.set_trust_policy(responder_policy);

    auto initiator_conn = initiator.find_connection_to(responder.config().http_endpoint());
    auto responder_conn = responder.find_connection_to(initiator.config().http_endpoint());
    if (!initiator_conn || !responder_conn) return {false, false};

    // The initiator verifies first; both directions always run and are
    // reported independently.
    bool initiator_trusts = initiator.request_proof(*initiator_conn);
    bool responder_trusts = responder.request_proof(*responder_conn);
    return {initiator_trusts, responder_trusts};
}

}  // namespace tfl::agent
