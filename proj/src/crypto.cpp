#include "tfl/crypto.hpp"

#include <sodium.h>

#include <mutex>

#include <nlohmann/json.hpp>

namespace tfl::crypto {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw CryptoError("libsodium initialization failed");
    });
}

std::array<std::uint8_t, 64> expand_signing_secret(const SecretKey& seed) {
    std::array<std::uint8_t, 64> sk{};
    PublicKey pk{};
    crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
    return sk;
}

}  // namespace

KeyPair generate_keypair(std::span<const std::uint8_t> seed) {
    ensure_sodium();
    if (seed.size() != kSeedBytes)
        throw std::invalid_argument("keypair seed must be exactly 32 bytes");
    KeyPair kp{};
    std::array<std::uint8_t, 64> sk{};
    std::copy(seed.begin(), seed.end(), kp.signing_secret.begin());
    crypto_sign_seed_keypair(kp.signing_public.data(), sk.data(), seed.data());
    if (crypto_sign_ed25519_sk_to_curve25519(kp.agreement_secret.data(), sk.data()) != 0 ||
        crypto_sign_ed25519_pk_to_curve25519(kp.agreement_public.data(),
                                             kp.signing_public.data()) != 0) {
        throw CryptoError("ed25519 to x25519 conversion failed");
    }
    return kp;
}

KeyPair random_keypair() {
    ensure_sodium();
    SecretKey seed{};
    randombytes_buf(seed.data(), seed.size());
    return generate_keypair(seed);
}

Signature sign(const SecretKey& signing_secret, std::span<const std::uint8_t> message) {
    ensure_sodium();
    auto sk = expand_signing_secret(signing_secret);
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                         sk.data());
    return sig;
}

bool verify(const PublicKey& signing_public, std::span<const std::uint8_t> message,
            const Signature& sig) noexcept {
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       signing_public.data()) == 0;
}

std::string key_hint(const PublicKey& signing_public) {
    return base64url_encode(signing_public);
}

namespace {

Bytes signed_portion(const EncryptedEnvelope& env) {
    Bytes buf;
    buf.reserve(env.nonce.size() + env.ciphertext.size());
    buf.insert(buf.end(), env.nonce.begin(), env.nonce.end());
    buf.insert(buf.end(), env.ciphertext.begin(), env.ciphertext.end());
    return buf;
}

}  // namespace

EncryptedEnvelope seal(const KeyPair& sender, const PublicKey& recipient_agreement,
                       std::span<const std::uint8_t> plaintext) {
    ensure_sodium();
    if (plaintext.size() > kMaxPlaintext)
        throw CryptoError("plaintext exceeds 16 MiB limit");

    EncryptedEnvelope env;
    env.sender_hint = key_hint(sender.signing_public);
    randombytes_buf(env.nonce.data(), env.nonce.size());

    env.ciphertext.resize(plaintext.size() + crypto_box_MACBYTES);
    if (crypto_box_easy(env.ciphertext.data(), plaintext.data(), plaintext.size(),
                        env.nonce.data(), recipient_agreement.data(),
                        sender.agreement_secret.data()) != 0) {
        throw CryptoError("encryption failed");
    }
    env.signature = sign(sender.signing_secret, signed_portion(env));
    return env;
}

Bytes open(const KeyPair& recipient, const PublicKey& sender_signing,
           const EncryptedEnvelope& env) {
    ensure_sodium();
    if (env.sender_hint != key_hint(sender_signing))
        throw BadSignature("sender hint does not match expected sender");
    if (!verify(sender_signing, signed_portion(env), env.signature))
        throw BadSignature("envelope signature invalid");
    if (env.ciphertext.size() < crypto_box_MACBYTES)
        throw DecryptFailure("ciphertext too short");

    PublicKey sender_agreement{};
    if (crypto_sign_ed25519_pk_to_curve25519(sender_agreement.data(),
                                             sender_signing.data()) != 0)
        throw BadSignature("sender public key not convertible");

    Bytes plaintext(env.ciphertext.size() - crypto_box_MACBYTES);
    if (crypto_box_open_easy(plaintext.data(), env.ciphertext.data(),
                             env.ciphertext.size(), env.nonce.data(),
                             sender_agreement.data(),
                             recipient.agreement_secret.data()) != 0) {
        throw DecryptFailure("authenticated decryption failed");
    }
    return plaintext;
}

Bytes EncryptedEnvelope::canonical() const {
    // nlohmann::json objects keep keys sorted, matching the canonical form.
    nlohmann::json j{
        {"ciphertext", base64url_encode(ciphertext)},
        {"nonce", base64url_encode(nonce)},
        {"sender_hint", sender_hint},
        {"signature", base64url_encode(signature.bytes)},
    };
    return to_bytes(j.dump());
}

EncryptedEnvelope EncryptedEnvelope::from_canonical(std::span<const std::uint8_t> data) {
    nlohmann::json j = nlohmann::json::parse(data.begin(), data.end(), nullptr, false);
    if (!j.is_object() || !j.contains("ciphertext") || !j.contains("nonce") ||
        !j.contains("sender_hint") || !j.contains("signature") ||
        !j["ciphertext"].is_string() || !j["nonce"].is_string() ||
        !j["sender_hint"].is_string() || !j["signature"].is_string()) {
        throw MalformedEnvelope("envelope is not a well-formed canonical map");
    }
    EncryptedEnvelope env;
    try {
        env.sender_hint = j["sender_hint"].get<std::string>();
        Bytes nonce = base64url_decode(j["nonce"].get<std::string>());
        Bytes sig = base64url_decode(j["signature"].get<std::string>());
        env.ciphertext = base64url_decode(j["ciphertext"].get<std::string>());
        if (nonce.size() != kNonceBytes || sig.size() != env.signature.bytes.size())
            throw MalformedEnvelope("envelope field has wrong length");
        std::copy(nonce.begin(), nonce.end(), env.nonce.begin());
        std::copy(sig.begin(), sig.end(), env.signature.bytes.begin());
    } catch (const std::invalid_argument&) {
        throw MalformedEnvelope("envelope field is not valid base64url");
    }
    return env;
}

}  // namespace tfl::crypto
