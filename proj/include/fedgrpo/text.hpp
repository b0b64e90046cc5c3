#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fedgrpo {

// Splits on whitespace; '+', '-' and '*' are standalone tokens even when
// glued to operands, so "3+5 mod 7" -> {"3", "+", "5", "mod", "7"}.
std::vector<std::string> tokenize(const std::string& text);

// Canonical question form: tokens joined by single spaces. Questions that
// differ only in whitespace (or operator spacing) canonicalize identically.
std::string canonicalize_question(const std::string& question);

// Canonical answer form: trimmed; integers lose leading zeros and a '+'
// sign, "-0" becomes "0". Non-integer text is returned trimmed as-is.
std::string canonicalize_answer(const std::string& answer);

// Strict integer parse of a trimmed candidate ("01" -> 1, "banana" -> none).
std::optional<long long> parse_integer_answer(const std::string& text);

}  // namespace fedgrpo
