#include "fedgrpo/text.hpp"

#include <cctype>
#include <cstdlib>

namespace fedgrpo {

namespace {

bool is_operator_char(char c) {
    return c == '+' || c == '-' || c == '*';
}

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_operator_char(c)) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            current.push_back(c);
        }
    }
    flush();
    return tokens;
}

std::string canonicalize_question(const std::string& question) {
    std::string out;
    for (const std::string& tok : tokenize(question)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

std::string canonicalize_answer(const std::string& answer) {
    std::string t = trim(answer);
    auto parsed = parse_integer_answer(t);
    if (!parsed) return t;
    return std::to_string(*parsed);
}

std::optional<long long> parse_integer_answer(const std::string& text) {
    std::string t = trim(text);
    if (t.empty()) return std::nullopt;
    std::size_t i = 0;
    if (t[0] == '+' || t[0] == '-') i = 1;
    if (i == t.size()) return std::nullopt;
    for (std::size_t j = i; j < t.size(); ++j) {
        if (!std::isdigit(static_cast<unsigned char>(t[j]))) return std::nullopt;
    }
    errno = 0;
    char* end = nullptr;
    long long value = std::strtoll(t.c_str(), &end, 10);
    if (errno != 0 || end != t.c_str() + t.size()) return std::nullopt;
    return value;
}

}  // namespace fedgrpo
