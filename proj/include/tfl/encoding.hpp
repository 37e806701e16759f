#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tfl {

using Bytes = std::vector<std::uint8_t>;

// base64url without padding (RFC 4648 §5)
std::string base64url_encode(std::span<const std::uint8_t> data);
Bytes base64url_decode(std::string_view text);  // throws std::invalid_argument

// Bitcoin-alphabet base58
std::string base58_encode(std::span<const std::uint8_t> data);
Bytes base58_decode(std::string_view text);  // throws std::invalid_argument

std::string hex_encode(std::span<const std::uint8_t> data);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);
std::array<std::uint8_t, 32> sha256(std::string_view data);

Bytes to_bytes(std::string_view s);
std::string to_string(std::span<const std::uint8_t> b);

}  // namespace tfl
