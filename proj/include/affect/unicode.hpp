#pragma once

// Small UTF-8 helpers: decoding with lossy replacement, and the handful of
// character classes the tokenizer needs. Case folding covers Latin-1,
// Latin Extended-A, Greek and Cyrillic, which is enough for the corpora this
// project targets (English, Polish, Portuguese).

#include <string>
#include <string_view>
#include <vector>

namespace affect::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

// Decodes s; each invalid or truncated sequence becomes one U+FFFD.
std::vector<char32_t> decode(std::string_view s);
std::string encode(char32_t cp);
std::string encode(const std::vector<char32_t>& cps);

// Re-encodes s with invalid sequences replaced by U+FFFD.
std::string sanitize(std::string_view s);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view s);

bool is_space(char32_t cp);
bool is_punct(char32_t cp);

}  // namespace affect::utf8
