#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "tfl/credentials.hpp"

using namespace tfl;
using namespace tfl::cred;

namespace {

crypto::KeyPair keys_from(std::uint64_t value) {
    std::mt19937_64 rng(value);
    Bytes seed(crypto::kSeedBytes);
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    return crypto::generate_keypair(seed);
}

CredentialSchema hospital_schema() {
    return {"verified-hospital-v1", "Verified Hospital", "1.0",
            {"name", "status", "issued_at"}};
}

std::map<std::string, std::string> hospital_attrs() {
    return {{"name", "St Elsewhere"},
            {"status", "verified"},
            {"issued_at", "2021-03-01T00:00:00Z"}};
}

// Everything a verification scenario needs: a ledger-registered issuer, a
// registry, one issued credential and the holder's secret.
struct Fixture {
    crypto::KeyPair issuer_keys = keys_from(100);
    did::PublicLedger ledger;
    did::Did issuer_did;
    RevocationRegistry registry{"registry-1", {}};
    LinkSecret secret = LinkSecret::random();
    Credential credential;

    explicit Fixture(std::optional<std::int64_t> expiry = std::nullopt) {
        auto [id, doc] = did::create_did("tfl", issuer_keys, "127.0.0.1:9100");
        issuer_did = id;
        ledger.register_did(doc);
        credential = issue_credential(issuer_keys, issuer_did, hospital_schema(),
                                      hospital_attrs(), commit_link_secret(secret),
                                      expiry, registry);
    }

    ProofRequest request(std::vector<std::string> attrs = {"name", "status"}) const {
        return ProofRequest::make("verified-hospital-v1", std::move(attrs),
                                  {issuer_did.str()});
    }

    VerificationResult verify(const ProofRequest& req, const ProofPresentation& pres,
                              std::int64_t now = 1'614'556'800) const {
        return verify_presentation(ledger, registry, req, pres, now);
    }
};

}  // namespace

TEST_CASE("iso8601 roundtrip with a fixed known vector") {
    CHECK(iso8601_format(1614556800) == "2021-03-01T00:00:00Z");
    CHECK(iso8601_parse("2021-03-01T00:00:00Z") == 1614556800);
    for (std::int64_t t : {0LL, 951868800LL, 4102444800LL})
        CHECK(iso8601_parse(iso8601_format(t)) == t);
}

TEST_CASE("link secret commitments are deterministic and collision-free") {
    auto secret = LinkSecret::random();
    CHECK(commit_link_secret(secret) == commit_link_secret(secret));

    std::set<GroupElement> commitments;
    for (int i = 0; i < 1000; ++i) commitments.insert(commit_link_secret(LinkSecret::random()));
    CHECK(commitments.size() == 1000);

    // Blinding alone changes the commitment (hiding).
    auto reblinded = secret;
    reblinded.blinding[0] ^= 1;
    CHECK(commit_link_secret(secret) != commit_link_secret(reblinded));
}

TEST_CASE("attribute digest depends on salt, name and value") {
    auto base = attribute_digest("aa", "name", "x");
    CHECK(base == attribute_digest("aa", "name", "x"));
    CHECK(base != attribute_digest("ab", "name", "x"));
    CHECK(base != attribute_digest("aa", "mane", "x"));
    CHECK(base != attribute_digest("aa", "name", "y"));
}

TEST_CASE("schema validation and json roundtrip") {
    auto schema = hospital_schema();
    CHECK(schema.valid());
    CHECK(CredentialSchema::from_json(schema.to_json()).to_json() == schema.to_json());
    schema.attribute_names = {"a", "a"};
    CHECK_FALSE(schema.valid());
    schema.attribute_names = {};
    CHECK_FALSE(schema.valid());
}

TEST_CASE("issuance rejects attribute sets that do not match the schema") {
    Fixture fx;
    auto attrs = hospital_attrs();
    attrs.erase("status");
    CHECK_THROWS_AS(issue_credential(fx.issuer_keys, fx.issuer_did, hospital_schema(),
                                     attrs, commit_link_secret(fx.secret), std::nullopt,
                                     fx.registry),
                    SchemaMismatch);
    attrs = hospital_attrs();
    attrs["extra"] = "nope";
    CHECK_THROWS_AS(issue_credential(fx.issuer_keys, fx.issuer_did, hospital_schema(),
                                     attrs, commit_link_secret(fx.secret), std::nullopt,
                                     fx.registry),
                    SchemaMismatch);
}

TEST_CASE("credential json roundtrip preserves the signature") {
    Fixture fx(std::optional<std::int64_t>{4102444800});
    auto restored = Credential::from_json(fx.credential.to_json());
    CHECK(restored.to_json() == fx.credential.to_json());
    CHECK(crypto::verify(fx.issuer_keys.signing_public, restored.signing_payload(),
                         restored.issuer_signature));
}

TEST_CASE("honest presentation passes all five checks") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto result = fx.verify(req, pres);
    CHECK(result.issuer_resolvable);
    CHECK(result.link_secret_proven);
    CHECK(result.issuer_authorized);
    CHECK(result.not_revoked);
    CHECK(result.attributes_valid);
    CHECK(result.overall());
}

TEST_CASE("presentation reveals only the requested attributes") {
    Fixture fx;
    auto req = fx.request({"status"});
    auto pres = present_proof(fx.credential, fx.secret, req);
    CHECK(pres.revealed.size() == 1);
    CHECK(pres.revealed.count("status") == 1);
    CHECK(pres.revealed.count("name") == 0);

    // Hidden values never appear in the serialized presentation.
    auto text = pres.to_json().dump();
    CHECK(text.find("St Elsewhere") == std::string::npos);

    // Partial disclosure keeps the issuer signature checkable.
    CHECK(fx.verify(req, pres).overall());
}

TEST_CASE("check 1 fails: tampered revealed value") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    pres.revealed["status"] = "revoked-and-proud";
    auto result = fx.verify(req, pres);
    CHECK_FALSE(result.issuer_resolvable);
    CHECK_FALSE(result.overall());
    // Independent checks stay green.
    CHECK(result.link_secret_proven);
    CHECK(result.not_revoked);
}

TEST_CASE("check 1 fails: issuer unknown to the ledger") {
    Fixture fx;
    did::PublicLedger empty;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto result = verify_presentation(empty, fx.registry, req, pres, 1614556800);
    CHECK_FALSE(result.issuer_resolvable);
    CHECK(result.link_secret_proven);
}

TEST_CASE("check 2 fails: forged link proof") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    pres.link_proof.response_secret[0] ^= 1;
    auto result = fx.verify(req, pres);
    CHECK_FALSE(result.link_secret_proven);
    CHECK(result.issuer_resolvable);
    CHECK(result.issuer_authorized);
    CHECK(result.not_revoked);
    CHECK(result.attributes_valid);
    CHECK_FALSE(result.overall());
}

TEST_CASE("check 2 fails: proof bound to a different nonce") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto other = fx.request();  // fresh nonce
    REQUIRE(other.verifier_nonce != req.verifier_nonce);
    auto result = fx.verify(other, pres);
    CHECK_FALSE(result.link_secret_proven);
}

TEST_CASE("check 3 fails: issuer not in the trusted set") {
    Fixture fx;
    auto req = fx.request();
    req.required_issuer_dids = {"did:tfl:someoneelse"};
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto result = fx.verify(req, pres);
    CHECK_FALSE(result.issuer_authorized);
    CHECK(result.issuer_resolvable);
    CHECK(result.link_secret_proven);
    CHECK(result.not_revoked);
    CHECK(result.attributes_valid);
}

TEST_CASE("check 4 fails: revoked credential") {
    Fixture fx;
    revoke(fx.registry, fx.credential.revocation_id);
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto result = fx.verify(req, pres);
    CHECK_FALSE(result.not_revoked);
    CHECK(result.issuer_resolvable);
    CHECK(result.link_secret_proven);
    CHECK(result.issuer_authorized);
    CHECK(result.attributes_valid);
}

TEST_CASE("check 4 fails: presentation names a foreign registry") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    RevocationRegistry other{"registry-2", {}};
    auto result = verify_presentation(fx.ledger, other, req, pres, 1614556800);
    CHECK_FALSE(result.not_revoked);
}

TEST_CASE("check 5 fails: expired credential") {
    Fixture fx(std::optional<std::int64_t>{1614556800});
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto result = fx.verify(req, pres, 1614556800 + 1);
    CHECK_FALSE(result.attributes_valid);
    CHECK(result.issuer_resolvable);
    CHECK(result.link_secret_proven);
    CHECK(result.issuer_authorized);
    CHECK(result.not_revoked);

    // Before expiry the same presentation verifies.
    CHECK(fx.verify(req, pres, 1614556800 - 1).overall());
}

TEST_CASE("check 5 fails: schema mismatch in the presentation") {
    Fixture fx;
    auto req = fx.request();
    auto pres = present_proof(fx.credential, fx.secret, req);
    pres.schema_id = "some-other-schema";
    auto result = fx.verify(req, pres);
    CHECK_FALSE(result.attributes_valid);
    CHECK_FALSE(result.issuer_resolvable);  // schema id is under the signature
}

TEST_CASE("presenting with the wrong link secret is refused at the holder") {
    Fixture fx;
    auto wrong = LinkSecret::random();
    CHECK_THROWS_AS(present_proof(fx.credential, wrong, fx.request()),
                    CommitmentMismatch);
}

TEST_CASE("requesting an attribute outside the schema is refused") {
    Fixture fx;
    CHECK_THROWS_AS(present_proof(fx.credential, fx.secret,
                                  fx.request({"name", "shoe_size"})),
                    UnknownAttribute);
}

TEST_CASE("revocation registry is grow-only and idempotent") {
    RevocationRegistry reg{"r", {}};
    CHECK_FALSE(reg.is_revoked("x"));
    reg.revoke("x");
    reg.revoke("x");
    CHECK(reg.is_revoked("x"));
    CHECK(reg.revoked.size() == 1);
}

TEST_CASE("verification never throws on malformed presentations") {
    Fixture fx;
    auto req = fx.request();
    ProofPresentation garbage;  // all fields empty / zero
    auto result = fx.verify(req, garbage);
    CHECK_FALSE(result.overall());
    CHECK_FALSE(result.issuer_resolvable);
    CHECK_FALSE(result.link_secret_proven);
}

TEST_CASE("proof request and presentation json roundtrips") {
    Fixture fx;
    auto req = fx.request();
    CHECK(ProofRequest::from_json(req.to_json()).to_json() == req.to_json());
    auto pres = present_proof(fx.credential, fx.secret, req);
    auto restored = ProofPresentation::from_json(pres.to_json());
    CHECK(restored.to_json() == pres.to_json());
    CHECK(fx.verify(req, restored).overall());
}
