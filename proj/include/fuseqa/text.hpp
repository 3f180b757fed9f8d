#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fuseqa::text {

// NFC, Unicode case-fold, trim, collapse runs of whitespace to one space.
std::string normalize(std::string_view s);

// Normalizes then splits on spaces.
std::vector<std::string> tokenize(std::string_view s);

// tokenize() with leading/trailing ASCII punctuation stripped from every
// token; tokens that become empty are dropped. Used for entity grounding and
// the hashing encoders so "shop?" matches the entity "shop".
std::vector<std::string> word_tokens(std::string_view s);

// Splits a line on TAB without normalizing. A trailing '\r' is stripped.
std::vector<std::string> split_tabs(std::string_view line);

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace fuseqa::text
