#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfl/crypto.hpp"
#include "tfl/did.hpp"

namespace tfl::cred {

struct CredentialError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaMismatch : CredentialError {
    using CredentialError::CredentialError;
};
struct UnknownAttribute : CredentialError {
    using CredentialError::CredentialError;
};
struct CommitmentMismatch : CredentialError {
    using CredentialError::CredentialError;
};

using Scalar = std::array<std::uint8_t, 32>;
using GroupElement = std::array<std::uint8_t, 32>;
using Nonce32 = std::array<std::uint8_t, 32>;

struct CredentialSchema {
    std::string schema_id;
    std::string name;
    std::string version;
    std::vector<std::string> attribute_names;  // non-empty, unique

    bool valid() const;
    nlohmann::json to_json() const;
    static CredentialSchema from_json(const nlohmann::json& j);
};

// Holder-private. Never serialized; only its Pedersen commitment appears in
// credentials and presentations.
struct LinkSecret {
    Scalar secret{};
    Scalar blinding{};  // per-credential blinding nonce

    static LinkSecret random();
};

// C = secret * G + blinding * H over ristretto255.
GroupElement commit_link_secret(const LinkSecret& secret);

struct Credential {
    std::string schema_id;
    did::Did issuer_did;
    std::map<std::string, std::string> attributes;
    std::map<std::string, std::string> salts;  // per-attribute, hex
    GroupElement link_commitment{};
    std::string revocation_id;
    std::string registry_id;
    std::optional<std::int64_t> expiry;  // unix seconds, serialized ISO-8601
    crypto::Signature issuer_signature;

    // The issuer signs salted attribute digests, not raw values, so the
    // signature stays checkable under partial disclosure.
    Bytes signing_payload() const;
    nlohmann::json to_json() const;
    static Credential from_json(const nlohmann::json& j);
};

struct ProofRequest {
    std::string requested_schema_id;
    std::vector<std::string> requested_attributes;
    Nonce32 verifier_nonce{};  // fresh per request
    std::set<std::string> required_issuer_dids;  // rendered DID strings

    static ProofRequest make(std::string schema_id,
                             std::vector<std::string> attributes,
                             std::set<std::string> issuer_dids);
    nlohmann::json to_json() const;
    static ProofRequest from_json(const nlohmann::json& j);
};

// Schnorr proof of knowledge of (secret, blinding) behind the commitment,
// challenge bound to the verifier nonce.
struct LinkProof {
    GroupElement nonce_commitment{};  // T = k1*G + k2*H
    Scalar response_secret{};         // k1 + c*secret
    Scalar response_blinding{};       // k2 + c*blinding
};

struct ProofPresentation {
    std::string schema_id;
    did::Did issuer_did;
    std::map<std::string, std::string> revealed;        // name -> value
    std::map<std::string, std::string> revealed_salts;  // name -> hex salt
    std::map<std::string, std::string> attribute_digests;  // every name -> hex
    GroupElement link_commitment{};
    std::string revocation_id;
    std::string registry_id;
    std::optional<std::int64_t> expiry;
    crypto::Signature issuer_signature;
    LinkProof link_proof;

    nlohmann::json to_json() const;
    static ProofPresentation from_json(const nlohmann::json& j);
};

// Grow-only set standing in for a cryptographic accumulator.
struct RevocationRegistry {
    std::string registry_id;
    std::set<std::string> revoked;

    void revoke(const std::string& revocation_id);  // idempotent
    bool is_revoked(const std::string& revocation_id) const;
};

// The five checks a verifier runs, each computed independently.
struct VerificationResult {
    bool issuer_resolvable = false;   // 1: DID resolves, signature verifies
    bool link_secret_proven = false;  // 2: zero-knowledge proof valid
    bool issuer_authorized = false;   // 3: issuer in the trusted set
    bool not_revoked = false;         // 4: revocation id absent from registry
    bool attributes_valid = false;    // 5: expiry + requested attributes met

    bool overall() const {
        return issuer_resolvable && link_secret_proven && issuer_authorized &&
               not_revoked && attributes_valid;
    }
    nlohmann::json to_json() const;
};

Credential issue_credential(const crypto::KeyPair& issuer_keys, const did::Did& issuer_did,
                            const CredentialSchema& schema,
                            const std::map<std::string, std::string>& attributes,
                            const GroupElement& link_commitment,
                            std::optional<std::int64_t> expiry,
                            RevocationRegistry& registry);

ProofPresentation present_proof(const Credential& cred, const LinkSecret& secret,
                                const ProofRequest& request);

// Never throws; failures are encoded in the result. The verifier consults
// only the ledger, the registry, the request and the presentation.
VerificationResult verify_presentation(const did::PublicLedger& ledger,
                                       const RevocationRegistry& registry,
                                       const ProofRequest& request,
                                       const ProofPresentation& pres,
                                       std::int64_t now) noexcept;

void revoke(RevocationRegistry& registry, const std::string& revocation_id);

std::string attribute_digest(const std::string& salt_hex, const std::string& name,
                             const std::string& value);

std::string iso8601_format(std::int64_t unix_seconds);
std::int64_t iso8601_parse(const std::string& text);

}  // namespace tfl::cred
