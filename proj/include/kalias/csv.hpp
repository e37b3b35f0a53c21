#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace kalias {

/// Shortest round-trip text for a double, independent of the C locale.
/// Infinities print as "inf"/"-inf".
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

} // namespace kalias
