#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace har {

/// Error type thrown by all modules. Carries a plain message; callers that
/// need structured context (line numbers, ids) get it embedded in the text.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// 64-bit FNV-1a. Used for config fingerprints and for deriving
/// per-query sub-seeds; stable across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

inline std::uint64_t mix_seed(std::uint64_t base, std::string_view tag) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>(base >> (8 * i));
  return fnv1a64(tag, fnv1a64(std::string_view(buf, 8)));
}

inline std::uint64_t mix_seed(std::uint64_t base, std::string_view tag,
                              std::int64_t n) {
  return mix_seed(base, std::string(tag) + "#" + std::to_string(n));
}

std::string to_hex(std::uint64_t v);

}  // namespace har
