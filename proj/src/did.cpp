#include "tfl/did.hpp"

#include <algorithm>

namespace tfl::did {

std::string derive_identifier(const crypto::PublicKey& signing_public) {
    auto digest = sha256(signing_public);
    return base58_encode(std::span<const std::uint8_t>(digest).first(16));
}

std::pair<Did, DidDocument> create_did(const std::string& method,
                                       const crypto::KeyPair& keys,
                                       const std::string& endpoint) {
    if (endpoint.empty()) throw DidError("service endpoint must be non-empty");

    Did id{method, derive_identifier(keys.signing_public)};
    DidDocument doc;
    doc.id = id;
    const std::string base = id.str();
    doc.public_keys.push_back({base + "#keys-1", std::string(kSigningKeyType),
                               Bytes(keys.signing_public.begin(), keys.signing_public.end())});
    doc.public_keys.push_back({base + "#keys-2", std::string(kAgreementKeyType),
                               Bytes(keys.agreement_public.begin(), keys.agreement_public.end())});
    doc.authentication.push_back(base + "#keys-1");
    doc.services.push_back({base + "#agent", std::string(kAgentServiceType), endpoint});
    return {id, doc};
}

std::pair<Did, DidDocument> create_peer_did(const crypto::KeyPair& keys,
                                            const std::string& endpoint) {
    return create_did("peer", keys, endpoint);
}

nlohmann::json DidDocument::to_json() const {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& k : public_keys) {
        keys.push_back({{"id", k.id},
                        {"type", k.type},
                        {"controller", id.str()},
                        {"publicKeyBase58", base58_encode(k.key)}});
    }
    nlohmann::json svc = nlohmann::json::array();
    for (const auto& s : services) {
        svc.push_back({{"id", s.id}, {"type", s.type}, {"serviceEndpoint", s.endpoint}});
    }
    return nlohmann::json{{"id", id.str()},
                          {"publicKey", keys},
                          {"authentication", authentication},
                          {"service", svc}};
}

DidDocument DidDocument::from_json(const nlohmann::json& j) {
    DidDocument doc;
    const std::string rendered = j.at("id").get<std::string>();
    auto first = rendered.find(':');
    auto second = rendered.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos ||
        rendered.substr(0, first) != "did") {
        throw DidError("malformed DID string: " + rendered);
    }
    doc.id = Did{rendered.substr(first + 1, second - first - 1), rendered.substr(second + 1)};
    for (const auto& k : j.at("publicKey")) {
        doc.public_keys.push_back({k.at("id").get<std::string>(),
                                   k.at("type").get<std::string>(),
                                   base58_decode(k.at("publicKeyBase58").get<std::string>())});
    }
    doc.authentication = j.at("authentication").get<std::vector<std::string>>();
    for (const auto& s : j.at("service")) {
        doc.services.push_back({s.at("id").get<std::string>(),
                                s.at("type").get<std::string>(),
                                s.at("serviceEndpoint").get<std::string>()});
    }
    return doc;
}

bool DidDocument::structurally_valid() const {
    if (public_keys.empty() || authentication.empty()) return false;
    for (const auto& a : authentication) {
        bool found = std::any_of(public_keys.begin(), public_keys.end(),
                                 [&](const auto& k) { return k.id == a; });
        if (!found) return false;
    }
    return std::any_of(services.begin(), services.end(),
                       [](const auto& s) { return s.type == kAgentServiceType; });
}

bool DidDocument::self_certifies() const {
    auto key = signing_key();
    if (!key) return false;
    return id.identifier == derive_identifier(*key);
}

std::optional<crypto::PublicKey> DidDocument::signing_key() const {
    for (const auto& k : public_keys) {
        if (k.type == kSigningKeyType && k.key.size() == 32) {
            crypto::PublicKey pk{};
            std::copy(k.key.begin(), k.key.end(), pk.begin());
            return pk;
        }
    }
    return std::nullopt;
}

std::optional<crypto::PublicKey> DidDocument::agreement_key() const {
    for (const auto& k : public_keys) {
        if (k.type == kAgreementKeyType && k.key.size() == 32) {
            crypto::PublicKey pk{};
            std::copy(k.key.begin(), k.key.end(), pk.begin());
            return pk;
        }
    }
    return std::nullopt;
}

std::optional<std::string> DidDocument::agent_endpoint() const {
    for (const auto& s : services)
        if (s.type == kAgentServiceType) return s.endpoint;
    return std::nullopt;
}

void PublicLedger::register_did(const DidDocument& doc) {
    if (!doc.structurally_valid() || !doc.self_certifies())
        throw DidError("document fails validity or self-certification checks");
    std::lock_guard lock(mutex_);
    const std::string key = doc.id.str();
    if (entries_.contains(key)) throw DuplicateDid("DID already registered: " + key);
    entries_.emplace(key, doc);
    audit_log_.push_back(key);
}

DidDocument PublicLedger::resolve(const Did& did) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(did.str());
    if (it == entries_.end()) throw NotFound("unknown DID: " + did.str());
    if (!it->second.self_certifies())
        throw NotFound("stored document fails self-certification: " + did.str());
    return it->second;
}

std::vector<std::string> PublicLedger::audit_log() const {
    std::lock_guard lock(mutex_);
    return audit_log_;
}

std::size_t PublicLedger::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void PeerDidStore::put(const DidDocument& doc) {
    entries_[doc.id.str()] = doc;
}

DidDocument PeerDidStore::resolve(const Did& did) const {
    auto it = entries_.find(did.str());
    if (it == entries_.end()) throw NotFound("unknown peer DID: " + did.str());
    return it->second;
}

bool PeerDidStore::contains(const Did& did) const {
    return entries_.contains(did.str());
}

std::size_t PeerDidStore::size() const {
    return entries_.size();
}

}  // namespace tfl::did
