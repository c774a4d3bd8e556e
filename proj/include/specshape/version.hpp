#pragma once

#include <cstdint>
#include <string>

namespace specshape {

inline constexpr const char* kVersion = "0.1.0";

/// FNV-1a over a string; hex-encoded form is stamped into every output file
/// so results can be traced back to the exact configuration that made them.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value);

} // namespace specshape
