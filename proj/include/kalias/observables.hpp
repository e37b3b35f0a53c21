#pragma once

// Observable dictionaries and lifting of snapshot pairs into X_lift / Y_lift.

#include <optional>
#include <string>
#include <vector>

#include "kalias/basis.hpp"
#include "kalias/dynamics.hpp"
#include "kalias/linalg.hpp"
#include "kalias/parallel.hpp"

namespace kalias {

struct Dictionary {
    int dim = 0;
    std::vector<BasisFn> basis;
    /// state_indices[k] = position of the coordinate observable x_k.
    std::vector<int> state_indices;
    /// Largest total degree among the monomials.
    int degree = 0;
    std::optional<int> rational_cap;
    bool include_constant = false;
    /// Short identifier used in CSV output; never contains commas.
    std::string label;

    Eigen::Index size() const { return static_cast<Eigen::Index>(basis.size()); }

    /// Semicolon separated basis labels; parse_dictionary() reads it back.
    std::string to_text() const {
        std::string s;
        for (const auto& b : basis) {
            if (!s.empty()) s += "; ";
            s += b.label();
        }
        return s;
    }

    int index_of(const BasisFn& fn) const {
        for (std::size_t i = 0; i < basis.size(); ++i)
            if (basis[i] == fn) return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

// Exponent vectors of total degree d in descending lexicographic order
// (x1^d first).
inline void exponents_of_degree(int n, int d, std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
    const int slot = static_cast<int>(prefix.size());
    if (slot == n - 1) {
        prefix.push_back(d);
        out.push_back(prefix);
        prefix.pop_back();
        return;
    }
    for (int e = d; e >= 0; --e) {
        prefix.push_back(e);
        exponents_of_degree(n, d - e, prefix, out);
        prefix.pop_back();
    }
}

inline void finish_dictionary(Dictionary& dict) {
    dict.state_indices.assign(static_cast<std::size_t>(dict.dim), -1);
    dict.degree = 0;
    for (std::size_t i = 0; i < dict.basis.size(); ++i) {
        const auto& b = dict.basis[i];
        if (b.dim() != dict.dim) {
            throw Error(ErrorKind::ShapeMismatch, "basis function '" + b.label() + "' has the wrong dimension");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (dict.basis[j] == b) throw Error(ErrorKind::DuplicateBasis, "'" + b.label() + "' appears twice");
        }
        if (b.is_monomial()) dict.degree = std::max(dict.degree, b.degree());
        if (const int k = b.coordinate_index(); k >= 0) dict.state_indices[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
    for (int k = 0; k < dict.dim; ++k) {
        if (dict.state_indices[static_cast<std::size_t>(k)] < 0) {
            throw Error(ErrorKind::MissingStateObservable,
                        "dictionary lacks the coordinate observable x" + std::to_string(k + 1));
        }
    }
}

} // namespace detail

/// Graded-lexicographic monomials of total degree <= m, optionally with the
/// constant, followed by x_l/(1+x_k^p) for every (p <= P, k, l).
inline Dictionary build_dictionary(int n, int m, bool include_constant = false,
                                   std::optional<int> rational_cap = std::nullopt) {
    if (n < 1 || m < 1) throw Error(ErrorKind::BadParams, "dictionary needs n >= 1 and m >= 1");
    if (rational_cap && *rational_cap < 1) throw Error(ErrorKind::BadParams, "rational cap P must be >= 1");
    Dictionary dict;
    dict.dim = n;
    dict.include_constant = include_constant;
    dict.rational_cap = rational_cap;
    std::vector<int> prefix;
    for (int d = include_constant ? 0 : 1; d <= m; ++d) {
        std::vector<std::vector<int>> exps;
        detail::exponents_of_degree(n, d, prefix, exps);
        for (auto& e : exps) dict.basis.push_back(BasisFn::monomial(std::move(e)));
    }
    if (rational_cap) {
        for (int p = 1; p <= *rational_cap; ++p)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) dict.basis.push_back(BasisFn::rational(n, l, k, p));
    }
    detail::finish_dictionary(dict);
    dict.label = "m=" + std::to_string(m);
    if (rational_cap) dict.label += " P=" + std::to_string(*rational_cap);
    if (include_constant) dict.label += " const";
    return dict;
}

inline Dictionary custom_dictionary(std::vector<BasisFn> basis) {
    if (basis.empty()) throw Error(ErrorKind::MissingStateObservable, "empty dictionary");
    Dictionary dict;
    dict.dim = basis.front().dim();
    dict.basis = std::move(basis);
    detail::finish_dictionary(dict);
    for (const auto& b : dict.basis) {
        if (b.degree() == 0) dict.include_constant = true;
    }
    std::string label;
    for (const auto& b : dict.basis) label += (label.empty() ? "" : ";") + b.label();
    dict.label = label;
    return dict;
}

/// Reads either a builder spec ("m=7", "m=1 P=2", "m=2 const") or an explicit
/// basis list ("x1; x2; x1^2").
inline Dictionary parse_dictionary(std::string_view text, int dim) {
    const auto spec = detail::trim(text);
    if (spec.starts_with("m=")) {
        int m = 0;
        std::optional<int> cap;
        bool constant = false;
        for (const auto& tok : split_list(spec, " \t")) {
            KeyValue kv{0, "dictionary", tok};
            if (tok.starts_with("m=")) {
                kv.value = tok.substr(2);
                m = static_cast<int>(parse_integer(kv));
            } else if (tok.starts_with("P=")) {
                kv.value = tok.substr(2);
                cap = static_cast<int>(parse_integer(kv));
            } else if (tok == "const") {
                constant = true;
            } else {
                throw Error(ErrorKind::Config, "unknown dictionary option '" + tok + "'");
            }
        }
        return build_dictionary(dim, m, constant, cap);
    }
    std::vector<BasisFn> basis;
    for (const auto& tok : split_list(spec, ";,")) basis.push_back(parse_basis(tok, dim));
    return custom_dictionary(std::move(basis));
}

inline void evaluate_dictionary_into(const Dictionary& dict, std::span<const double> x, std::span<double> out) {
    for (std::size_t j = 0; j < dict.basis.size(); ++j) out[j] = dict.basis[j].eval(x);
}

inline Vector evaluate_dictionary(const Dictionary& dict, const Vector& x) {
    if (x.size() != dict.dim) throw Error(ErrorKind::ShapeMismatch, "state size does not match dictionary");
    Vector out(dict.size());
    evaluate_dictionary_into(dict, {x.data(), static_cast<std::size_t>(x.size())},
                             {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

/// N x n matrix of basis gradients at x.
inline Matrix dictionary_jacobian(const Dictionary& dict, const Vector& x) {
    if (x.size() != dict.dim) throw Error(ErrorKind::ShapeMismatch, "state size does not match dictionary");
    Matrix jac(dict.size(), dict.dim);
    std::vector<double> grad(static_cast<std::size_t>(dict.dim));
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (Eigen::Index j = 0; j < dict.size(); ++j) {
        dict.basis[static_cast<std::size_t>(j)].gradient(xs, grad);
        for (int i = 0; i < dict.dim; ++i) jac(j, i) = grad[static_cast<std::size_t>(i)];
    }
    return jac;
}

/// Gradients of phi_i = sum_j coefficients(i, j) g_j at x, one row per phi_i.
inline Matrix gradient_matrix(const Dictionary& dict, const Matrix& coefficients, const Vector& x) {
    if (coefficients.cols() != dict.size()) {
        throw Error(ErrorKind::ShapeMismatch, "coefficient rows must have one entry per basis function");
    }
    return coefficients * dictionary_jacobian(dict, x);
}

inline std::vector<Matrix> gradient_matrix(const Dictionary& dict, const Matrix& coefficients,
                                           const std::vector<Vector>& points) {
    std::vector<Matrix> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(gradient_matrix(dict, coefficients, p));
    return out;
}

/// Coefficient rows selecting the coordinate observables, i.e. phi = x.
inline Matrix state_selector(const Dictionary& dict) {
    Matrix c = Matrix::Zero(dict.dim, dict.size());
    for (int k = 0; k < dict.dim; ++k) c(k, dict.state_indices[static_cast<std::size_t>(k)]) = 1.0;
    return c;
}

struct LiftedData {
    Matrix x_lift; // K x N, row i = g(pre_i)
    Matrix y_lift; // K x N, row i = g(post_i)
    double sampling_period = 0.0;
    Dictionary dictionary;
};

inline LiftedData lift(const SnapshotSet& snapshots, const Dictionary& dict, unsigned jobs = 1) {
    if (snapshots.size() < 1) throw Error(ErrorKind::ShapeMismatch, "lift needs at least one snapshot pair");
    if (snapshots.pre.cols() != dict.dim) throw Error(ErrorKind::ShapeMismatch, "snapshot dimension mismatch");
    LiftedData out;
    const Eigen::Index k = snapshots.size();
    // Row-major scratch so each row is a contiguous span.
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMatrix xs(k, dict.size()), ys(k, dict.size());
    const RowMatrix pre = snapshots.pre;
    const RowMatrix post = snapshots.post;
    const auto n = static_cast<std::size_t>(dict.dim);
    const auto cols = static_cast<std::size_t>(dict.size());
    constexpr std::size_t chunk = 1024;
    const std::size_t chunks = (static_cast<std::size_t>(k) + chunk - 1) / chunk;
    parallel_for(chunks, jobs, [&](std::size_t c) {
        const auto begin = static_cast<Eigen::Index>(c * chunk);
        const auto end = std::min<Eigen::Index>(k, begin + static_cast<Eigen::Index>(chunk));
        for (Eigen::Index i = begin; i < end; ++i) {
            try {
                evaluate_dictionary_into(dict, {pre.row(i).data(), n}, {xs.row(i).data(), cols});
                evaluate_dictionary_into(dict, {post.row(i).data(), n}, {ys.row(i).data(), cols});
            } catch (const Error& e) {
                throw Error(e.kind(), "pair " + std::to_string(i) + ": " + e.what());
            }
        }
    });
    out.x_lift = xs;
    out.y_lift = ys;
    out.sampling_period = snapshots.sampling_period;
    out.dictionary = dict;
    return out;
}

} // namespace kalias
