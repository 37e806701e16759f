#include "tfl/credentials.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdio>
#include <ctime>

namespace tfl::cred {

namespace {

constexpr std::string_view kGeneratorDomain = "tfl/pedersen/generator-h/v1";
constexpr std::string_view kChallengeDomain = "tfl/link-proof/challenge/v1";

// Second Pedersen generator with unknown discrete log relative to the base.
const GroupElement& generator_h() {
    static const GroupElement h = [] {
        std::array<std::uint8_t, 64> seed{};
        crypto_hash_sha512(seed.data(),
                           reinterpret_cast<const unsigned char*>(kGeneratorDomain.data()),
                           kGeneratorDomain.size());
        GroupElement out{};
        crypto_core_ristretto255_from_hash(out.data(), seed.data());
        return out;
    }();
    return h;
}

bool pedersen_eval(GroupElement& out, const Scalar& a, const Scalar& b) {
    GroupElement ag{}, bh{};
    if (crypto_scalarmult_ristretto255_base(ag.data(), a.data()) != 0) return false;
    if (crypto_scalarmult_ristretto255(bh.data(), b.data(), generator_h().data()) != 0)
        return false;
    return crypto_core_ristretto255_add(out.data(), ag.data(), bh.data()) == 0;
}

Scalar challenge_scalar(const GroupElement& commitment, const GroupElement& nonce_commitment,
                        const Nonce32& verifier_nonce) {
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    crypto_hash_sha512_update(&st,
                              reinterpret_cast<const unsigned char*>(kChallengeDomain.data()),
                              kChallengeDomain.size());
    crypto_hash_sha512_update(&st, commitment.data(), commitment.size());
    crypto_hash_sha512_update(&st, nonce_commitment.data(), nonce_commitment.size());
    crypto_hash_sha512_update(&st, verifier_nonce.data(), verifier_nonce.size());
    std::array<std::uint8_t, 64> digest{};
    crypto_hash_sha512_final(&st, digest.data());
    Scalar c{};
    crypto_core_ristretto255_scalar_reduce(c.data(), digest.data());
    return c;
}

LinkProof prove_link_secret(const LinkSecret& secret, const GroupElement& commitment,
                            const Nonce32& verifier_nonce) {
    Scalar k1{}, k2{};
    crypto_core_ristretto255_scalar_random(k1.data());
    crypto_core_ristretto255_scalar_random(k2.data());
    LinkProof proof;
    if (!pedersen_eval(proof.nonce_commitment, k1, k2))
        throw CredentialError("link proof nonce commitment failed");
    Scalar c = challenge_scalar(commitment, proof.nonce_commitment, verifier_nonce);
    Scalar cs{}, cb{};
    crypto_core_ristretto255_scalar_mul(cs.data(), c.data(), secret.secret.data());
    crypto_core_ristretto255_scalar_mul(cb.data(), c.data(), secret.blinding.data());
    crypto_core_ristretto255_scalar_add(proof.response_secret.data(), k1.data(), cs.data());
    crypto_core_ristretto255_scalar_add(proof.response_blinding.data(), k2.data(), cb.data());
    return proof;
}

bool verify_link_proof(const GroupElement& commitment, const LinkProof& proof,
                       const Nonce32& verifier_nonce) noexcept {
    Scalar c = challenge_scalar(commitment, proof.nonce_commitment, verifier_nonce);
    GroupElement lhs{};
    if (!pedersen_eval(lhs, proof.response_secret, proof.response_blinding)) return false;
    GroupElement c_commit{}, rhs{};
    if (crypto_scalarmult_ristretto255(c_commit.data(), c.data(), commitment.data()) != 0)
        return false;
    if (crypto_core_ristretto255_add(rhs.data(), proof.nonce_commitment.data(),
                                     c_commit.data()) != 0)
        return false;
    return sodium_memcmp(lhs.data(), rhs.data(), lhs.size()) == 0;
}

std::string random_token(std::size_t bytes = 16) {
    Bytes buf(bytes);
    randombytes_buf(buf.data(), buf.size());
    return hex_encode(buf);
}

template <typename T>
std::array<std::uint8_t, 32> decode32(const nlohmann::json& j, const char* key) {
    Bytes raw = base64url_decode(j.at(key).get<std::string>());
    if (raw.size() != 32) throw CredentialError("field has wrong length");
    std::array<std::uint8_t, 32> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

did::Did parse_did(const std::string& rendered) {
    auto first = rendered.find(':');
    auto second = rendered.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos)
        throw CredentialError("malformed DID: " + rendered);
    return did::Did{rendered.substr(first + 1, second - first - 1),
                    rendered.substr(second + 1)};
}

}  // namespace

bool CredentialSchema::valid() const {
    if (attribute_names.empty()) return false;
    auto names = attribute_names;
    std::sort(names.begin(), names.end());
    return std::adjacent_find(names.begin(), names.end()) == names.end();
}

nlohmann::json CredentialSchema::to_json() const {
    return {{"schema_id", schema_id},
            {"name", name},
            {"version", version},
            {"attribute_names", attribute_names}};
}

CredentialSchema CredentialSchema::from_json(const nlohmann::json& j) {
    return {j.at("schema_id").get<std::string>(), j.at("name").get<std::string>(),
            j.at("version").get<std::string>(),
            j.at("attribute_names").get<std::vector<std::string>>()};
}

LinkSecret LinkSecret::random() {
    LinkSecret s;
    crypto_core_ristretto255_scalar_random(s.secret.data());
    crypto_core_ristretto255_scalar_random(s.blinding.data());
    return s;
}

GroupElement commit_link_secret(const LinkSecret& secret) {
    GroupElement out{};
    if (!pedersen_eval(out, secret.secret, secret.blinding))
        throw CredentialError("commitment evaluation failed (degenerate scalar)");
    return out;
}

std::string attribute_digest(const std::string& salt_hex, const std::string& name,
                             const std::string& value) {
    auto digest = sha256(salt_hex + "|" + name + "=" + value);
    return hex_encode(digest);
}

std::string iso8601_format(std::int64_t unix_seconds) {
    std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::int64_t iso8601_parse(const std::string& text) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi, &s) != 6)
        throw CredentialError("invalid ISO-8601 timestamp: " + text);
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = s;
    return static_cast<std::int64_t>(timegm(&tm));
}

Bytes Credential::signing_payload() const {
    nlohmann::json digests = nlohmann::json::object();
    for (const auto& [name, value] : attributes)
        digests[name] = attribute_digest(salts.at(name), name, value);
    nlohmann::json j{{"attribute_digests", digests},
                     {"expiry", expiry ? nlohmann::json(iso8601_format(*expiry))
                                       : nlohmann::json(nullptr)},
                     {"issuer_did", issuer_did.str()},
                     {"link_commitment", base64url_encode(link_commitment)},
                     {"registry_id", registry_id},
                     {"revocation_id", revocation_id},
                     {"schema_id", schema_id}};
    return to_bytes(j.dump());
}

nlohmann::json Credential::to_json() const {
    return {{"schema_id", schema_id},
            {"issuer_did", issuer_did.str()},
            {"attributes", attributes},
            {"salts", salts},
            {"link_commitment", base64url_encode(link_commitment)},
            {"revocation_id", revocation_id},
            {"registry_id", registry_id},
            {"expiry", expiry ? nlohmann::json(iso8601_format(*expiry))
                              : nlohmann::json(nullptr)},
            {"issuer_signature", base64url_encode(issuer_signature.bytes)}};
}

Credential Credential::from_json(const nlohmann::json& j) {
    Credential c;
    c.schema_id = j.at("schema_id").get<std::string>();
    c.issuer_did = parse_did(j.at("issuer_did").get<std::string>());
    c.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
    c.salts = j.at("salts").get<std::map<std::string, std::string>>();
    c.link_commitment = decode32<GroupElement>(j, "link_commitment");
    c.revocation_id = j.at("revocation_id").get<std::string>();
    c.registry_id = j.at("registry_id").get<std::string>();
    if (!j.at("expiry").is_null()) c.expiry = iso8601_parse(j.at("expiry").get<std::string>());
    Bytes sig = base64url_decode(j.at("issuer_signature").get<std::string>());
    if (sig.size() != c.issuer_signature.bytes.size())
        throw CredentialError("signature has wrong length");
    std::copy(sig.begin(), sig.end(), c.issuer_signature.bytes.begin());
    return c;
}

ProofRequest ProofRequest::make(std::string schema_id, std::vector<std::string> attributes,
                                std::set<std::string> issuer_dids) {
    ProofRequest r;
    r.requested_schema_id = std::move(schema_id);
    r.requested_attributes = std::move(attributes);
    r.required_issuer_dids = std::move(issuer_dids);
    randombytes_buf(r.verifier_nonce.data(), r.verifier_nonce.size());
    return r;
}

nlohmann::json ProofRequest::to_json() const {
    return {{"requested_schema_id", requested_schema_id},
            {"requested_attributes", requested_attributes},
            {"verifier_nonce", base64url_encode(verifier_nonce)},
            {"required_issuer_dids", required_issuer_dids}};
}

ProofRequest ProofRequest::from_json(const nlohmann::json& j) {
    ProofRequest r;
    r.requested_schema_id = j.at("requested_schema_id").get<std::string>();
    r.requested_attributes = j.at("requested_attributes").get<std::vector<std::string>>();
    r.verifier_nonce = decode32<Nonce32>(j, "verifier_nonce");
    r.required_issuer_dids = j.at("required_issuer_dids").get<std::set<std::string>>();
    return r;
}

nlohmann::json ProofPresentation::to_json() const {
    return {{"schema_id", schema_id},
            {"issuer_did", issuer_did.str()},
            {"revealed", revealed},
            {"revealed_salts", revealed_salts},
            {"attribute_digests", attribute_digests},
            {"link_commitment", base64url_encode(link_commitment)},
            {"revocation_id", revocation_id},
            {"registry_id", registry_id},
            {"expiry", expiry ? nlohmann::json(iso8601_format(*expiry))
                              : nlohmann::json(nullptr)},
            {"issuer_signature", base64url_encode(issuer_signature.bytes)},
            {"link_proof",
             {{"nonce_commitment", base64url_encode(link_proof.nonce_commitment)},
              {"response_secret", base64url_encode(link_proof.response_secret)},
              {"response_blinding", base64url_encode(link_proof.response_blinding)}}}};
}

ProofPresentation ProofPresentation::from_json(const nlohmann::json& j) {
    ProofPresentation p;
    p.schema_id = j.at("schema_id").get<std::string>();
    p.issuer_did = parse_did(j.at("issuer_did").get<std::string>());
    p.revealed = j.at("revealed").get<std::map<std::string, std::string>>();
    p.revealed_salts = j.at("revealed_salts").get<std::map<std::string, std::string>>();
    p.attribute_digests = j.at("attribute_digests").get<std::map<std::string, std::string>>();
    p.link_commitment = decode32<GroupElement>(j, "link_commitment");
    p.revocation_id = j.at("revocation_id").get<std::string>();
    p.registry_id = j.at("registry_id").get<std::string>();
    if (!j.at("expiry").is_null()) p.expiry = iso8601_parse(j.at("expiry").get<std::string>());
    Bytes sig = base64url_decode(j.at("issuer_signature").get<std::string>());
    if (sig.size() != p.issuer_signature.bytes.size())
        throw CredentialError("signature has wrong length");
    std::copy(sig.begin(), sig.end(), p.issuer_signature.bytes.begin());
    const auto& lp = j.at("link_proof");
    p.link_proof.nonce_commitment = decode32<GroupElement>(lp, "nonce_commitment");
    p.link_proof.response_secret = decode32<Scalar>(lp, "response_secret");
    p.link_proof.response_blinding = decode32<Scalar>(lp, "response_blinding");
    return p;
}

void RevocationRegistry::revoke(const std::string& revocation_id) {
    revoked.insert(revocation_id);
}

bool RevocationRegistry::is_revoked(const std::string& revocation_id) const {
    return revoked.contains(revocation_id);
}

void revoke(RevocationRegistry& registry, const std::string& revocation_id) {
    registry.revoke(revocation_id);
}

nlohmann::json VerificationResult::to_json() const {
    return {{"issuer_resolvable", issuer_resolvable},
            {"link_secret_proven", link_secret_proven},
            {"issuer_authorized", issuer_authorized},
            {"not_revoked", not_revoked},
            {"attributes_valid", attributes_valid},
            {"overall", overall()}};
}

Credential issue_credential(const crypto::KeyPair& issuer_keys, const did::Did& issuer_did,
                            const CredentialSchema& schema,
                            const std::map<std::string, std::string>& attributes,
                            const GroupElement& link_commitment,
                            std::optional<std::int64_t> expiry,
                            RevocationRegistry& registry) {
    if (!schema.valid()) throw SchemaMismatch("schema has no usable attribute names");
    if (attributes.size() != schema.attribute_names.size())
        throw SchemaMismatch("attribute count does not match schema");
    for (const auto& name : schema.attribute_names)
        if (!attributes.contains(name))
            throw SchemaMismatch("missing schema attribute: " + name);

    Credential cred;
    cred.schema_id = schema.schema_id;
    cred.issuer_did = issuer_did;
    cred.attributes = attributes;
    for (const auto& [name, _] : attributes) cred.salts[name] = random_token();
    cred.link_commitment = link_commitment;
    cred.revocation_id = random_token();
    cred.registry_id = registry.registry_id;
    cred.expiry = expiry;
    cred.issuer_signature = crypto::sign(issuer_keys.signing_secret, cred.signing_payload());
    return cred;
}

ProofPresentation present_proof(const Credential& cred, const LinkSecret& secret,
                                const ProofRequest& request) {
    GroupElement recomputed = commit_link_secret(secret);
    if (sodium_memcmp(recomputed.data(), cred.link_commitment.data(), recomputed.size()) != 0)
        throw CommitmentMismatch("link secret does not open the credential's commitment");
    for (const auto& name : request.requested_attributes)
        if (!cred.attributes.contains(name))
            throw UnknownAttribute("credential lacks requested attribute: " + name);

    ProofPresentation pres;
    pres.schema_id = cred.schema_id;
    pres.issuer_did = cred.issuer_did;
    for (const auto& [name, value] : cred.attributes)
        pres.attribute_digests[name] = attribute_digest(cred.salts.at(name), name, value);
    for (const auto& name : request.requested_attributes) {
        pres.revealed[name] = cred.attributes.at(name);
        pres.revealed_salts[name] = cred.salts.at(name);
    }
    pres.link_commitment = cred.link_commitment;
    pres.revocation_id = cred.revocation_id;
    pres.registry_id = cred.registry_id;
    pres.expiry = cred.expiry;
    pres.issuer_signature = cred.issuer_signature;
    pres.link_proof = prove_link_secret(secret, cred.link_commitment, request.verifier_nonce);
    return pres;
}

namespace {

// Rebuild the issuer-signed payload from presentation data. Revealed values
// must hash back to their signed digests.
std::optional<Bytes> reconstruct_signing_payload(const ProofPresentation& pres) {
    nlohmann::json digests = nlohmann::json::object();
    for (const auto& [name, digest] : pres.attribute_digests) digests[name] = digest;
    for (const auto& [name, value] : pres.revealed) {
        auto salt = pres.revealed_salts.find(name);
        auto signed_digest = pres.attribute_digests.find(name);
        if (salt == pres.revealed_salts.end() ||
            signed_digest == pres.attribute_digests.end() ||
            attribute_digest(salt->second, name, value) != signed_digest->second) {
            return std::nullopt;
        }
    }
    nlohmann::json j{{"attribute_digests", digests},
                     {"expiry", pres.expiry ? nlohmann::json(iso8601_format(*pres.expiry))
                                            : nlohmann::json(nullptr)},
                     {"issuer_did", pres.issuer_did.str()},
                     {"link_commitment", base64url_encode(pres.link_commitment)},
                     {"registry_id", pres.registry_id},
                     {"revocation_id", pres.revocation_id},
                     {"schema_id", pres.schema_id}};
    return to_bytes(j.dump());
}

}  // namespace

VerificationResult verify_presentation(const did::PublicLedger& ledger,
                                       const RevocationRegistry& registry,
                                       const ProofRequest& request,
                                       const ProofPresentation& pres,
                                       std::int64_t now) noexcept {
    VerificationResult result;

    // Check 1: issuer DID resolves on the ledger and the signature verifies.
    try {
        did::DidDocument doc = ledger.resolve(pres.issuer_did);
        auto key = doc.signing_key();
        auto payload = reconstruct_signing_payload(pres);
        result.issuer_resolvable =
            key && payload && crypto::verify(*key, *payload, pres.issuer_signature);
    } catch (...) {
        result.issuer_resolvable = false;
    }

    // Check 2: the holder proves knowledge of the committed link secret.
    result.link_secret_proven =
        verify_link_proof(pres.link_commitment, pres.link_proof, request.verifier_nonce);

    // Check 3: the issuing DID has the authority to issue this credential.
    result.issuer_authorized = request.required_issuer_dids.contains(pres.issuer_did.str());

    // Check 4: the credential has not been revoked.
    result.not_revoked = pres.registry_id == registry.registry_id &&
                         !registry.is_revoked(pres.revocation_id);

    // Check 5: attributes meet the authorisation criteria.
    bool schema_ok = pres.schema_id == request.requested_schema_id;
    bool attrs_ok = std::all_of(request.requested_attributes.begin(),
                                request.requested_attributes.end(),
                                [&](const auto& n) { return pres.revealed.contains(n); });
    bool unexpired = !pres.expiry || now < *pres.expiry;
    result.attributes_valid = schema_ok && attrs_ok && unexpired;

    return result;
}

}  // namespace tfl::cred
