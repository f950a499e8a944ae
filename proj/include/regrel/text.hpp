#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace regrel {

struct TokenizerOptions {
    bool lowercase = true;
    std::set<std::string> stopwords;  // compared after lowercasing
};

/// Splits UTF-8 text on every code point that is not a Unicode letter or digit.
/// Invalid byte sequences act as separators. No stemming.
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options = {});

/// 64-bit FNV-1a. Stable across platforms, used for feature hashing and digests.
std::uint64_t fnv1a64(std::string_view bytes);

/// 16 hex digits of fnv1a64.
std::string hex_digest(std::string_view bytes);

std::size_t word_count(std::string_view text);

/// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

}  // namespace regrel
