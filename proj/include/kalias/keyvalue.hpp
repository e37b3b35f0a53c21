#pragma once

// Line-oriented "key = value" text files with '#' comments. Used for system
// definitions, spectrum files and experiment configs.

#include <charconv>
#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kalias/basis.hpp"
#include "kalias/error.hpp"

namespace kalias {

struct KeyValue {
    int line = 0;
    std::string key;
    std::string value;

    [[noreturn]] void fail(const std::string& msg) const {
        const std::string where = line > 0 ? "line " + std::to_string(line) + " (" + key + ")" : key;
        throw Error(ErrorKind::Config, where + ": " + msg);
    }
};

inline std::vector<KeyValue> parse_key_values(std::string_view text) {
    std::vector<KeyValue> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        ++line_no;
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::Config,
                        "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        KeyValue kv{line_no, std::string(detail::trim(line.substr(0, eq))),
                    std::string(detail::trim(line.substr(eq + 1)))};
        if (kv.key.empty()) {
            throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
        }
        out.push_back(std::move(kv));
    }
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Config, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Splits on any of `seps`, trimming pieces and dropping empty ones.
inline std::vector<std::string> split_list(std::string_view s, std::string_view seps = ",; \t") {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < s.size()) {
        const auto stop = s.find_first_of(seps, start);
        const auto piece = detail::trim(s.substr(start, stop == s.npos ? s.npos : stop - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (stop == s.npos) break;
        start = stop + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    s = detail::trim(s);
    if (s == "inf" || s == "+inf") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    if (s == "-inf") {
        out = -std::numeric_limits<double>::infinity();
        return true;
    }
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline double parse_double_or(const KeyValue& kv, std::string_view s) {
    double v = 0.0;
    if (!parse_double(s, v)) kv.fail("'" + std::string(s) + "' is not a number");
    return v;
}

inline std::vector<double> parse_doubles(const KeyValue& kv) {
    std::vector<double> out;
    for (const auto& tok : split_list(kv.value)) out.push_back(parse_double_or(kv, tok));
    return out;
}

/// "0.1+3i", "-1", "4i", "-1-4i".
inline bool parse_complex(std::string_view s, std::complex<double>& out) {
    s = detail::trim(s);
    if (s.empty()) return false;
    if (s.back() != 'i') {
        double re = 0.0;
        if (!parse_double(s, re)) return false;
        out = {re, 0.0};
        return true;
    }
    s.remove_suffix(1);
    // Find the sign separating real and imaginary parts (not an exponent sign).
    std::size_t split = std::string_view::npos;
    for (std::size_t i = s.size(); i-- > 1;) {
        if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
            split = i;
            break;
        }
    }
    double re = 0.0;
    double im = 0.0;
    std::string_view im_part = split == std::string_view::npos ? s : s.substr(split);
    if (split != std::string_view::npos && !parse_double(s.substr(0, split), re)) return false;
    if (im_part.empty() || im_part == "+") {
        im = 1.0;
    } else if (im_part == "-") {
        im = -1.0;
    } else if (!parse_double(im_part, im)) {
        return false;
    }
    out = {re, im};
    return true;
}

inline std::vector<std::complex<double>> parse_complex_list(const KeyValue& kv) {
    std::vector<std::complex<double>> out;
    for (const auto& tok : split_list(kv.value, ",;")) {
        std::complex<double> z;
        if (!parse_complex(tok, z)) kv.fail("'" + tok + "' is not a complex number");
        out.push_back(z);
    }
    return out;
}

inline long long parse_integer(const KeyValue& kv) {
    long long v = 0;
    const std::string_view s = detail::trim(kv.value);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) kv.fail("'" + kv.value + "' is not an integer");
    return v;
}

} // namespace kalias
