#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "tfl/crypto.hpp"

using namespace tfl;
using namespace tfl::crypto;

namespace {

Bytes seed_from(std::uint64_t value) {
    std::mt19937_64 rng(value);
    Bytes seed(kSeedBytes);
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    return seed;
}

}  // namespace

TEST_CASE("keypair generation is deterministic in the seed") {
    auto a = generate_keypair(seed_from(7));
    auto b = generate_keypair(seed_from(7));
    CHECK(a.signing_public == b.signing_public);
    CHECK(a.signing_secret == b.signing_secret);
    CHECK(a.agreement_public == b.agreement_public);
    CHECK(a.agreement_secret == b.agreement_secret);

    auto c = generate_keypair(seed_from(8));
    CHECK(a.signing_public != c.signing_public);
}

TEST_CASE("keypair generation rejects wrong seed lengths") {
    CHECK_THROWS_AS(generate_keypair(Bytes(16)), std::invalid_argument);
    CHECK_THROWS_AS(generate_keypair(Bytes(33)), std::invalid_argument);
    CHECK_THROWS_AS(generate_keypair(Bytes{}), std::invalid_argument);
}

TEST_CASE("10k distinct seeds yield 10k distinct key pairs") {
    std::set<std::array<std::uint8_t, 32>> signing, agreement;
    for (std::uint64_t i = 0; i < 10'000; ++i) {
        auto keys = generate_keypair(seed_from(i));
        signing.insert(keys.signing_public);
        agreement.insert(keys.agreement_public);
    }
    CHECK(signing.size() == 10'000);
    CHECK(agreement.size() == 10'000);
}

TEST_CASE("sign/verify roundtrip and tamper rejection") {
    auto keys = generate_keypair(seed_from(1));
    Bytes message = to_bytes("the quick brown fox");
    auto sig = sign(keys.signing_secret, message);
    CHECK(verify(keys.signing_public, message, sig));

    Bytes other = message;
    other[0] ^= 1;
    CHECK_FALSE(verify(keys.signing_public, other, sig));

    auto bad_sig = sig;
    bad_sig.bytes[10] ^= 1;
    CHECK_FALSE(verify(keys.signing_public, message, bad_sig));

    auto wrong = generate_keypair(seed_from(2));
    CHECK_FALSE(verify(wrong.signing_public, message, sig));
}

TEST_CASE("seal/open roundtrip across sizes") {
    auto alice = generate_keypair(seed_from(10));
    auto bob = generate_keypair(seed_from(11));
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{64},
                          std::size_t{4096}}) {
        Bytes plaintext(n);
        std::mt19937_64 rng(n);
        for (auto& b : plaintext) b = static_cast<std::uint8_t>(rng());
        auto env = seal(alice, bob.agreement_public, plaintext);
        auto opened = open(bob, alice.signing_public, env);
        CHECK(opened == plaintext);
    }
}

TEST_CASE("envelope hides the plaintext") {
    auto alice = generate_keypair(seed_from(20));
    auto bob = generate_keypair(seed_from(21));
    Bytes plaintext = to_bytes("super secret attribute value");
    auto env = seal(alice, bob.agreement_public, plaintext);
    Bytes canonical = env.canonical();
    auto it = std::search(canonical.begin(), canonical.end(), plaintext.begin(),
                          plaintext.end());
    CHECK(it == canonical.end());
}

TEST_CASE("canonical encoding roundtrips and sorts keys") {
    auto alice = generate_keypair(seed_from(30));
    auto bob = generate_keypair(seed_from(31));
    auto env = seal(alice, bob.agreement_public, to_bytes("payload"));
    auto restored = EncryptedEnvelope::from_canonical(env.canonical());
    CHECK(restored.canonical() == env.canonical());

    auto j = nlohmann::json::parse(env.canonical());
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(keys == std::vector<std::string>{"ciphertext", "nonce", "sender_hint",
                                           "signature"});
}

TEST_CASE("sender hint binds to the signing key") {
    auto alice = generate_keypair(seed_from(40));
    auto bob = generate_keypair(seed_from(41));
    auto eve = generate_keypair(seed_from(42));
    auto env = seal(alice, bob.agreement_public, to_bytes("hello"));
    CHECK(env.sender_hint == key_hint(alice.signing_public));
    // Open with the wrong expected sender must fail even though the envelope
    // is otherwise intact.
    CHECK_THROWS_AS(open(bob, eve.signing_public, env), CryptoError);
}

TEST_CASE("opening with the wrong recipient key fails") {
    auto alice = generate_keypair(seed_from(50));
    auto bob = generate_keypair(seed_from(51));
    auto eve = generate_keypair(seed_from(52));
    auto env = seal(alice, bob.agreement_public, to_bytes("for bob only"));
    CHECK_THROWS_AS(open(eve, alice.signing_public, env), CryptoError);
}

TEST_CASE("1000 randomized seal/open roundtrips") {
    std::mt19937_64 rng(777);
    for (int i = 0; i < 1000; ++i) {
        auto sender = generate_keypair(seed_from(rng()));
        auto receiver = generate_keypair(seed_from(rng()));
        Bytes plaintext(rng() % 512);
        for (auto& b : plaintext) b = static_cast<std::uint8_t>(rng());
        auto env = seal(sender, receiver.agreement_public, plaintext);
        CHECK(open(receiver, sender.signing_public, env) == plaintext);
    }
}

TEST_CASE("every single-byte tamper of a sealed envelope is detected") {
    auto alice = generate_keypair(seed_from(60));
    auto bob = generate_keypair(seed_from(61));
    Bytes plaintext(256);
    std::mt19937_64 rng(62);
    for (auto& b : plaintext) b = static_cast<std::uint8_t>(rng());
    auto env = seal(alice, bob.agreement_public, plaintext);
    Bytes canonical = env.canonical();

    std::size_t detected = 0;
    for (std::size_t pos = 0; pos < canonical.size(); ++pos) {
        Bytes mutated = canonical;
        mutated[pos] ^= 0x01;
        try {
            auto parsed = EncryptedEnvelope::from_canonical(mutated);
            auto opened = open(bob, alice.signing_public, parsed);
            // Opening may only succeed if the tamper did not survive
            // normalization; the recovered plaintext must then be intact.
            if (opened == plaintext && parsed.canonical() == canonical) ++detected;
        } catch (const CryptoError&) {
            ++detected;
        }
    }
    CHECK(detected == canonical.size());
}

TEST_CASE("replayed and truncated envelopes are rejected as malformed") {
    CHECK_THROWS_AS(EncryptedEnvelope::from_canonical(to_bytes("not json")),
                    CryptoError);
    CHECK_THROWS_AS(EncryptedEnvelope::from_canonical(to_bytes("{}")), CryptoError);
    CHECK_THROWS_AS(EncryptedEnvelope::from_canonical(
                        to_bytes(R"({"ciphertext":"x","nonce":"y"})")),
                    CryptoError);
}

TEST_CASE("oversized plaintext is refused") {
    auto alice = generate_keypair(seed_from(70));
    auto bob = generate_keypair(seed_from(71));
    Bytes huge(kMaxPlaintext + 1);
    CHECK_THROWS_AS(seal(alice, bob.agreement_public, huge), CryptoError);
}
