#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfl/crypto.hpp"

namespace tfl::did {

struct DidError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicateDid : DidError {
    using DidError::DidError;
};
struct NotFound : DidError {
    using DidError::DidError;
};

// Self-certifying identifier: the identifier is derived from the signing key.
struct Did {
    std::string method;
    std::string identifier;

    std::string str() const { return "did:" + method + ":" + identifier; }
    auto operator<=>(const Did&) const = default;
};

inline constexpr std::string_view kSigningKeyType = "Ed25519VerificationKey2018";
inline constexpr std::string_view kAgreementKeyType = "X25519KeyAgreementKey2019";
inline constexpr std::string_view kAgentServiceType = "AgentService";

struct PublicKeyEntry {
    std::string id;
    std::string type;  // opaque key type tag
    Bytes key;
};

struct ServiceEntry {
    std::string id;
    std::string type;
    std::string endpoint;
};

struct DidDocument {
    Did id;
    std::vector<PublicKeyEntry> public_keys;
    std::vector<std::string> authentication;  // key ids
    std::vector<ServiceEntry> services;

    nlohmann::json to_json() const;
    static DidDocument from_json(const nlohmann::json& j);

    // Every authentication entry references a listed key, and at least one
    // AgentService endpoint exists.
    bool structurally_valid() const;
    // identifier == encode(hash(signing key)) for the authentication key.
    bool self_certifies() const;

    std::optional<crypto::PublicKey> signing_key() const;
    std::optional<crypto::PublicKey> agreement_key() const;
    std::optional<std::string> agent_endpoint() const;
};

// identifier = base58 of the first 16 bytes of sha256(signing_public)
std::string derive_identifier(const crypto::PublicKey& signing_public);

std::pair<Did, DidDocument> create_peer_did(const crypto::KeyPair& keys,
                                            const std::string& endpoint);
std::pair<Did, DidDocument> create_did(const std::string& method,
                                       const crypto::KeyPair& keys,
                                       const std::string& endpoint);

// In-memory stand-in for the public development ledger. Entries are never
// overwritten; writes are serialized, reads may be concurrent.
class PublicLedger {
  public:
    void register_did(const DidDocument& doc);  // throws DuplicateDid
    DidDocument resolve(const Did& did) const;  // throws NotFound
    std::vector<std::string> audit_log() const;
    std::size_t size() const;

  private:
    mutable std::mutex mutex_;
    std::map<std::string, DidDocument> entries_;
    std::vector<std::string> audit_log_;
};

// Per-agent pairwise store; entries are created only during DID exchange.
class PeerDidStore {
  public:
    void put(const DidDocument& doc);
    DidDocument resolve(const Did& did) const;  // throws NotFound
    bool contains(const Did& did) const;
    std::size_t size() const;

  private:
    std::map<std::string, DidDocument> entries_;
};

}  // namespace tfl::did
