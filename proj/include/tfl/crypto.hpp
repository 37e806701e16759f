#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "tfl/encoding.hpp"

namespace tfl::crypto {

inline constexpr std::size_t kSeedBytes = 32;
inline constexpr std::size_t kNonceBytes = 24;
inline constexpr std::size_t kMaxPlaintext = 16 * 1024 * 1024;

struct CryptoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Signature does not verify: sender impersonation or envelope tamper.
struct BadSignature : CryptoError {
    using CryptoError::CryptoError;
};
// AEAD authentication failed during decryption.
struct DecryptFailure : CryptoError {
    using CryptoError::CryptoError;
};
struct MalformedEnvelope : CryptoError {
    using CryptoError::CryptoError;
};

using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 32>;

struct KeyPair {
    SecretKey signing_secret;    // Ed25519 seed
    PublicKey signing_public;    // Ed25519 public key
    SecretKey agreement_secret;  // X25519 secret key
    PublicKey agreement_public;  // X25519 public key
};

struct Signature {
    std::array<std::uint8_t, 64> bytes{};
};

// Signed-then-encrypted wire unit. The signature covers nonce || ciphertext
// so a nonce cannot be spliced onto a foreign ciphertext.
struct EncryptedEnvelope {
    std::string sender_hint;  // base64url of the sender's signing public key
    std::array<std::uint8_t, kNonceBytes> nonce{};
    Bytes ciphertext;
    Signature signature;

    // Canonical encoding: sorted-key UTF-8 JSON, values base64url without
    // padding. This byte string is what transport carries.
    Bytes canonical() const;
    static EncryptedEnvelope from_canonical(std::span<const std::uint8_t> data);
};

// Deterministic: same 32-byte seed yields the same keypair.
KeyPair generate_keypair(std::span<const std::uint8_t> seed);
KeyPair random_keypair();

Signature sign(const SecretKey& signing_secret, std::span<const std::uint8_t> message);
bool verify(const PublicKey& signing_public, std::span<const std::uint8_t> message,
            const Signature& sig) noexcept;

EncryptedEnvelope seal(const KeyPair& sender, const PublicKey& recipient_agreement,
                       std::span<const std::uint8_t> plaintext);

// Signature check precedes decryption. Throws BadSignature / DecryptFailure.
Bytes open(const KeyPair& recipient, const PublicKey& sender_signing,
           const EncryptedEnvelope& env);

std::string key_hint(const PublicKey& signing_public);

}  // namespace tfl::crypto
