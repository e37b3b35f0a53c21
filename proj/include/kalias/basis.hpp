#pragma once

// Scalar basis functions over R^n: monomials x^s and rationals x_l / (1 + x_k^p).
// Both vector-field terms and dictionary observables are built from these.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kalias/error.hpp"

namespace kalias {

struct Monomial {
    std::vector<int> exponents;

    bool operator==(const Monomial&) const = default;
};

/// x_numerator / (1 + x_denominator^power), indices 0-based.
struct Rational {
    int numerator = 0;
    int denominator = 0;
    int power = 1;

    bool operator==(const Rational&) const = default;
};

inline constexpr double pole_threshold = 1e-12;

namespace detail {

inline double ipow(double x, int p) {
    double r = 1.0;
    double base = x;
    while (p > 0) {
        if (p & 1) r *= base;
        base *= base;
        p >>= 1;
    }
    return r;
}

} // namespace detail

class BasisFn {
public:
    static BasisFn monomial(std::vector<int> exponents) {
        for (int e : exponents) {
            if (e < 0) throw Error(ErrorKind::BadParams, "negative monomial exponent");
        }
        return BasisFn(Monomial{std::move(exponents)});
    }

    static BasisFn rational(int dim, int numerator, int denominator, int power) {
        if (power < 1 || numerator < 0 || numerator >= dim || denominator < 0 ||
            denominator >= dim) {
            throw Error(ErrorKind::BadParams, "rational basis needs p >= 1 and valid coordinates");
        }
        return BasisFn(Rational{numerator, denominator, power}, dim);
    }

    /// Coordinate observable g(x) = x_k.
    static BasisFn coordinate(int dim, int k) {
        std::vector<int> e(static_cast<std::size_t>(dim), 0);
        e[static_cast<std::size_t>(k)] = 1;
        return monomial(std::move(e));
    }

    int dim() const { return dim_; }
    bool is_monomial() const { return std::holds_alternative<Monomial>(kind_); }
    bool is_rational() const { return std::holds_alternative<Rational>(kind_); }
    const Monomial& as_monomial() const { return std::get<Monomial>(kind_); }
    const Rational& as_rational() const { return std::get<Rational>(kind_); }

    int degree() const {
        if (is_monomial()) {
            int d = 0;
            for (int e : as_monomial().exponents) d += e;
            return d;
        }
        return 1;
    }

    /// State index k when this is exactly g(x) = x_k, else -1.
    int coordinate_index() const {
        if (!is_monomial()) return -1;
        const auto& e = as_monomial().exponents;
        int found = -1;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] == 0) continue;
            if (e[i] != 1 || found >= 0) return -1;
            found = static_cast<int>(i);
        }
        return found;
    }

    double eval(std::span<const double> x) const {
        if (is_monomial()) {
            const auto& e = as_monomial().exponents;
            double v = 1.0;
            for (std::size_t i = 0; i < e.size(); ++i) {
                if (e[i] != 0) v *= detail::ipow(x[i], e[i]);
            }
            return v;
        }
        const auto& r = as_rational();
        return x[static_cast<std::size_t>(r.numerator)] / denominator(x, r);
    }

    /// Writes the gradient into `out` (length dim).
    void gradient(std::span<const double> x, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        if (is_monomial()) {
            const auto& e = as_monomial().exponents;
            for (std::size_t j = 0; j < e.size(); ++j) {
                if (e[j] == 0) continue;
                double v = e[j] * detail::ipow(x[j], e[j] - 1);
                for (std::size_t i = 0; i < e.size(); ++i) {
                    if (i != j && e[i] != 0) v *= detail::ipow(x[i], e[i]);
                }
                out[j] = v;
            }
            return;
        }
        const auto& r = as_rational();
        const auto l = static_cast<std::size_t>(r.numerator);
        const auto k = static_cast<std::size_t>(r.denominator);
        const double d = denominator(x, r);
        out[l] += 1.0 / d;
        out[k] -= x[l] * r.power * detail::ipow(x[k], r.power - 1) / (d * d);
    }

    std::string label() const {
        if (is_rational()) {
            const auto& r = as_rational();
            std::string s = "x" + std::to_string(r.numerator + 1) + "/(1+x" +
                            std::to_string(r.denominator + 1);
            if (r.power != 1) s += "^" + std::to_string(r.power);
            return s + ")";
        }
        std::string s;
        const auto& e = as_monomial().exponents;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] == 0) continue;
            if (!s.empty()) s += "*";
            s += "x" + std::to_string(i + 1);
            if (e[i] != 1) s += "^" + std::to_string(e[i]);
        }
        return s.empty() ? "1" : s;
    }

    bool operator==(const BasisFn& other) const {
        return dim_ == other.dim_ && kind_ == other.kind_;
    }

private:
    explicit BasisFn(Monomial m) : dim_(static_cast<int>(m.exponents.size())), kind_(std::move(m)) {}
    BasisFn(Rational r, int dim) : dim_(dim), kind_(r) {}

    static double denominator(std::span<const double> x, const Rational& r) {
        const double d = 1.0 + detail::ipow(x[static_cast<std::size_t>(r.denominator)], r.power);
        if (std::abs(d) < pole_threshold) {
            throw Error(ErrorKind::PoleHit, "denominator 1+x" + std::to_string(r.denominator + 1) +
                                                "^" + std::to_string(r.power) + " vanishes");
        }
        return d;
    }

    int dim_ = 0;
    std::variant<Monomial, Rational> kind_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Parses "x<k>" or "x<k>^<p>" into (0-based k, p).
inline std::pair<int, int> parse_power(std::string_view tok, int dim, std::string_view whole) {
    auto fail = [&]() -> Error {
        return Error(ErrorKind::Config, "cannot parse basis function '" + std::string(whole) + "'");
    };
    tok = trim(tok);
    if (tok.size() < 2 || tok[0] != 'x') throw fail();
    tok.remove_prefix(1);
    const auto caret = tok.find('^');
    const std::string_view idx_part = tok.substr(0, caret);
    int idx = 0;
    auto [p1, ec1] = std::from_chars(idx_part.data(), idx_part.data() + idx_part.size(), idx);
    if (ec1 != std::errc{} || p1 != idx_part.data() + idx_part.size()) throw fail();
    int power = 1;
    if (caret != std::string_view::npos) {
        const std::string_view pw = tok.substr(caret + 1);
        auto [p2, ec2] = std::from_chars(pw.data(), pw.data() + pw.size(), power);
        if (ec2 != std::errc{} || p2 != pw.data() + pw.size()) throw fail();
    }
    if (idx < 1 || idx > dim || power < 0) throw fail();
    return {idx - 1, power};
}

} // namespace detail

/// Inverse of BasisFn::label(): "1", "x1", "x1^2*x2", "x2/(1+x1^2)".
inline BasisFn parse_basis(std::string_view text, int dim) {
    const std::string_view s = detail::trim(text);
    const auto slash = s.find('/');
    if (slash != std::string_view::npos) {
        const auto [num, num_pow] = detail::parse_power(s.substr(0, slash), dim, s);
        std::string_view rest = detail::trim(s.substr(slash + 1));
        if (num_pow != 1 || rest.size() < 5 || rest.substr(0, 3) != "(1+" || rest.back() != ')') {
            throw Error(ErrorKind::Config, "cannot parse basis function '" + std::string(s) + "'");
        }
        rest = rest.substr(3, rest.size() - 4);
        const auto [den, p] = detail::parse_power(rest, dim, s);
        if (p < 1) throw Error(ErrorKind::Config, "rational power must be >= 1 in '" + std::string(s) + "'");
        return BasisFn::rational(dim, num, den, p);
    }
    std::vector<int> e(static_cast<std::size_t>(dim), 0);
    if (s == "1") return BasisFn::monomial(std::move(e));
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto star = s.find('*', start);
        const auto factor = s.substr(start, star == std::string_view::npos ? s.npos : star - start);
        const auto [k, p] = detail::parse_power(factor, dim, s);
        e[static_cast<std::size_t>(k)] += p;
        if (star == std::string_view::npos) break;
        start = star + 1;
    }
    return BasisFn::monomial(std::move(e));
}

} // namespace kalias
