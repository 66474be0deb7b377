#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace surveyforge {

// FNV-1a, used everywhere a stable cross-platform 64-bit hash is needed:
// mock script keys, entropy-cache keys, artifact integrity, child seeds.
inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = kFnvOffsetBasis) {
    std::uint64_t h = seed;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

// 16 lowercase hex digits, zero padded.
std::string hash_hex(std::uint64_t value);

inline std::string content_hash(std::string_view data) {
    return hash_hex(fnv1a64(data));
}

// Hash of a file's raw bytes; throws IntegrityError when unreadable.
std::string file_hash(const std::filesystem::path& path);

}  // namespace surveyforge
