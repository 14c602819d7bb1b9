#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace patch_actor {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a over raw bytes; used for content digests and for deriving
/// deterministic per-key noise (e.g. oracle score flips).
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a(s.data(), s.size(), h);
}

/// Folds a double's exact bit pattern into a digest, so points that differ
/// by any amount, however small, hash differently.
inline std::uint64_t fnv1a_bits(double value, std::uint64_t h = kFnvOffset) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof bits);
    return fnv1a(&bits, sizeof bits, h);
}

} // namespace patch_actor
