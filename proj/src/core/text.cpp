#include "regrel/text.hpp"

#include <cctype>
#include <cstdio>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace regrel {

std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options)
{
    std::vector<std::string> tokens;
    std::string current;

    auto flush = [&] {
        if (!current.empty()) {
            if (!options.stopwords.contains(current)) {
                tokens.push_back(std::move(current));
            }
            current.clear();
        }
    };

    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t offset = 0;
    while (offset < length) {
        UChar32 cp = 0;
        U8_NEXT(bytes, offset, length, cp);
        if (cp < 0 || !u_isalnum(cp)) {
            flush();
            continue;
        }
        if (options.lowercase) {
            cp = u_tolower(cp);
        }
        char buffer[U8_MAX_LENGTH];
        int32_t written = 0;
        UBool error = false;
        U8_APPEND(reinterpret_cast<uint8_t*>(buffer), written, U8_MAX_LENGTH, cp, error);
        if (!error) {
            current.append(buffer, static_cast<std::size_t>(written));
        }
    }
    flush();
    return tokens;
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex_digest(std::string_view bytes)
{
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return out;
}

std::size_t word_count(std::string_view text)
{
    std::size_t count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

std::string normalize_whitespace(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(c));
    }
    return out;
}

}  // namespace regrel
