#pragma once

// Koopman matrix regression, generator recovery through the principal
// logarithm and extraction of vector-field coefficients.
//
// Convention: snapshots are rows, so the regression is X * U ~ Y and column j
// of a generator matrix holds the dictionary coefficients of L g_j = f . grad g_j.

#include <map>
#include <ostream>

#include "kalias/csv.hpp"
#include "kalias/observables.hpp"

namespace kalias {

/// Residual below which a dictionary is reported as numerically invariant.
inline constexpr double invariance_residual = 1e-6;

struct KoopmanEstimate {
    Matrix u_hat;
    double sampling_period = 0.0;
    /// ||X U - Y||_F / ||Y||_F
    double residual = 0.0;
    Dictionary dictionary;
    /// Fewer snapshot pairs than basis functions.
    bool underdetermined = false;

    bool invariant() const { return residual < invariance_residual; }
};

enum class Provenance { True, Identified };

struct GeneratorEstimate {
    Matrix l_hat;
    Spectrum spectrum;
    /// Zero for exact generators.
    double sampling_period = 0.0;
    Dictionary dictionary;
    Provenance provenance = Provenance::Identified;
    double eigenvector_condition = 1.0;
    /// Eigenvalues of U_hat on the negative real axis that were replaced by
    /// their magnitude (LogPolicy::Reflect only).
    int reflected_modes = 0;
};

/// What estimate_generator does with an eigenvalue of U_hat on the negative
/// real axis. Strict raises BranchCut. Reflect uses reflected_log(), which
/// keeps the result real and independent of the side of the cut.
enum class LogPolicy { Strict, Reflect };

inline const char* to_string(LogPolicy p) { return p == LogPolicy::Strict ? "strict" : "reflect"; }

inline LogPolicy parse_log_policy(const std::string& text) {
    if (text == "strict") return LogPolicy::Strict;
    if (text == "reflect") return LogPolicy::Reflect;
    throw Error(ErrorKind::Config, "log policy must be 'strict' or 'reflect', got '" + text + "'");
}

/// f_k(x) = sum_j w(k, j) g_j(x)
struct FieldCoefficients {
    Matrix w;
    Dictionary dictionary;
};

inline KoopmanEstimate estimate_koopman(const LiftedData& data, double rel_tol = -1.0) {
    KoopmanEstimate est;
    est.u_hat = lstsq_minnorm(data.x_lift, data.y_lift, rel_tol);
    est.sampling_period = data.sampling_period;
    est.residual = relative_frobenius(data.x_lift * est.u_hat, data.y_lift);
    est.dictionary = data.dictionary;
    est.underdetermined = data.x_lift.rows() < data.x_lift.cols();
    return est;
}

namespace detail {

inline GeneratorEstimate make_generator(Matrix l, const Dictionary& dict, double ts, Provenance prov) {
    GeneratorEstimate g;
    const auto eig = eigendecompose(l);
    g.l_hat = std::move(l);
    g.spectrum = eig.spectrum;
    g.eigenvector_condition = eigenvector_condition(eig.vectors);
    g.sampling_period = ts;
    g.dictionary = dict;
    g.provenance = prov;
    return g;
}

// f . grad g_j for polynomial f and monomial g_j, as exponent -> coefficient.
inline std::map<std::vector<int>, double> lie_derivative(const DynamicalSystem& sys, const Monomial& g) {
    std::map<std::vector<int>, double> out;
    for (int k = 0; k < sys.dim; ++k) {
        const int ek = g.exponents[static_cast<std::size_t>(k)];
        if (ek == 0) continue;
        for (const auto& t : sys.components[static_cast<std::size_t>(k)]) {
            auto e = t.basis.as_monomial().exponents;
            for (std::size_t i = 0; i < e.size(); ++i) e[i] += g.exponents[i];
            e[static_cast<std::size_t>(k)] -= 1;
            out[e] += t.coefficient * ek;
        }
    }
    return out;
}

inline Matrix symbolic_generator(const DynamicalSystem& sys, const Dictionary& dict) {
    const auto n = dict.size();
    Matrix l = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto terms = lie_derivative(sys, dict.basis[static_cast<std::size_t>(j)].as_monomial());
        for (const auto& [exps, coef] : terms) {
            if (coef == 0.0) continue;
            const int i = dict.index_of(BasisFn::monomial(exps));
            if (i < 0) {
                throw Error(ErrorKind::NotInvariant, "f . grad g_" + std::to_string(j + 1) + " (g = " +
                                                         dict.basis[static_cast<std::size_t>(j)].label() +
                                                         ") contains " + BasisFn::monomial(exps).label() +
                                                         ", which is not in the dictionary");
            }
            l(i, j) = coef;
        }
    }
    return l;
}

// Least-squares projection of f . grad g_j on random points inside
// [-0.9, 0.9]^n, where no 1 + x^p denominator can vanish.
inline Matrix numeric_generator(const DynamicalSystem& sys, const Dictionary& dict) {
    const auto n = dict.size();
    const Eigen::Index points = std::max<Eigen::Index>(400, 8 * n);
    Matrix g(points, n);
    Matrix target(points, n);
    std::vector<double> grad(static_cast<std::size_t>(sys.dim));
    for (Eigen::Index p = 0; p < points; ++p) {
        Vector x(sys.dim);
        for (int k = 0; k < sys.dim; ++k) {
            x(k) = -0.9 + 1.8 * counter_uniform(0x5eed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(k));
        }
        const Vector f = eval_field(sys, x);
        const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& b = dict.basis[static_cast<std::size_t>(j)];
            g(p, j) = b.eval(xs);
            b.gradient(xs, grad);
            double v = 0.0;
            for (int k = 0; k < sys.dim; ++k) v += f(k) * grad[static_cast<std::size_t>(k)];
            target(p, j) = v;
        }
    }
    const Matrix l = lstsq_minnorm(g, target);
    const Matrix fit = g * l;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double scale = std::max(target.col(j).norm(), 1e-300);
        if ((fit.col(j) - target.col(j)).norm() / scale > 1e-8) {
            throw Error(ErrorKind::NotInvariant, "f . grad g_" + std::to_string(j + 1) + " (g = " +
                                                     dict.basis[static_cast<std::size_t>(j)].label() +
                                                     ") leaves the span of the dictionary");
        }
    }
    // Snap round-off so exact zeros stay zero.
    return l.unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
}

inline bool all_monomial(const Dictionary& dict) {
    for (const auto& b : dict.basis)
        if (!b.is_monomial()) return false;
    return true;
}

} // namespace detail

/// Exact matrix of the generator restricted to span(dict).
inline GeneratorEstimate true_generator_matrix(const DynamicalSystem& sys, const Dictionary& dict) {
    if (sys.dim != dict.dim) throw Error(ErrorKind::ShapeMismatch, "system and dictionary dimensions differ");
    Matrix l = (sys.is_polynomial() && detail::all_monomial(dict)) ? detail::symbolic_generator(sys, dict)
                                                                    : detail::numeric_generator(sys, dict);
    return detail::make_generator(std::move(l), dict, 0.0, Provenance::True);
}

/// L = Log(U) / T_s on the principal branch.
inline GeneratorEstimate estimate_generator(const KoopmanEstimate& u, LogPolicy policy = LogPolicy::Strict) {
    if (!(u.sampling_period > 0.0)) throw Error(ErrorKind::BadParams, "sampling period must be positive");
    if (policy == LogPolicy::Strict) {
        Matrix l = principal_log(u.u_hat) / u.sampling_period;
        return detail::make_generator(std::move(l), u.dictionary, u.sampling_period, Provenance::Identified);
    }
    auto r = reflected_log(u.u_hat);
    auto g = detail::make_generator(r.log / u.sampling_period, u.dictionary, u.sampling_period, Provenance::Identified);
    g.reflected_modes = r.reflected;
    return g;
}

/// Row k of w is column l of L, where g_l = x_k.
inline FieldCoefficients recover_field(const GeneratorEstimate& g) {
    const auto& dict = g.dictionary;
    if (static_cast<int>(dict.state_indices.size()) != dict.dim) {
        throw Error(ErrorKind::MissingStateObservable, "dictionary has no state index table");
    }
    FieldCoefficients out;
    out.dictionary = dict;
    out.w.resize(dict.dim, dict.size());
    for (int k = 0; k < dict.dim; ++k) {
        const int l = dict.state_indices[static_cast<std::size_t>(k)];
        if (l < 0) throw Error(ErrorKind::MissingStateObservable, "x" + std::to_string(k + 1) + " is not in the dictionary");
        out.w.row(k) = g.l_hat.col(l).transpose();
    }
    return out;
}

/// True coefficients of the field expressed in the dictionary. Only the
/// field terms need to be present, so this also works for dictionaries that
/// are not invariant.
inline FieldCoefficients field_coefficients(const DynamicalSystem& sys, const Dictionary& dict) {
    if (sys.dim != dict.dim) throw Error(ErrorKind::ShapeMismatch, "system and dictionary dimensions differ");
    FieldCoefficients out;
    out.dictionary = dict;
    out.w = Matrix::Zero(dict.dim, dict.size());
    for (int k = 0; k < sys.dim; ++k) {
        for (const auto& t : sys.components[static_cast<std::size_t>(k)]) {
            const int j = dict.index_of(t.basis);
            if (j < 0) {
                throw Error(ErrorKind::NotInvariant, "field term " + t.basis.label() + " of f_" + std::to_string(k + 1) +
                                                         " is not in the dictionary");
            }
            out.w(k, j) += t.coefficient;
        }
    }
    return out;
}

/// Vector field sum_j w(k, j) g_j, skipping zero coefficients.
inline DynamicalSystem field_system(const FieldCoefficients& c, std::string name = "identified") {
    DynamicalSystem sys;
    sys.name = std::move(name);
    sys.dim = c.dictionary.dim;
    sys.components.resize(static_cast<std::size_t>(sys.dim));
    for (int k = 0; k < sys.dim; ++k) {
        for (Eigen::Index j = 0; j < c.w.cols(); ++j) {
            if (c.w(k, j) != 0.0) {
                sys.components[static_cast<std::size_t>(k)].push_back({c.w(k, j), c.dictionary.basis[static_cast<std::size_t>(j)]});
            }
        }
    }
    return sys;
}

/// Checks that every combination sum c_i lambda_i with c_i in {0, 1, 2} and
/// 1 <= sum c_i <= m (m = dictionary degree) appears in the spectrum.
inline bool spectrum_contains_sums(const GeneratorEstimate& g, const std::vector<Complex>& base, double tol) {
    if (base.empty()) return true;
    const int m = g.dictionary.degree;
    std::vector<int> c(base.size(), 0);
    for (;;) {
        std::size_t i = 0;
        while (i < c.size() && c[i] == 2) c[i++] = 0;
        if (i == c.size()) return true;
        ++c[i];
        int total = 0;
        Complex sum{0.0, 0.0};
        for (std::size_t q = 0; q < c.size(); ++q) {
            total += c[q];
            sum += static_cast<double>(c[q]) * base[q];
        }
        if (total > m) continue;
        bool found = false;
        for (const auto& lambda : g.spectrum.eigenvalues) {
            if (std::abs(lambda - sum) <= tol) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
}

inline void write_generator_csv(std::ostream& os, const GeneratorEstimate& g) {
    os << "# dictionary: " << g.dictionary.label << '\n';
    os << "# provenance: " << (g.provenance == Provenance::True ? "true" : "identified") << '\n';
    os << "# T_s: " << format_number(g.sampling_period) << '\n';
    std::vector<std::string> header{"basis"};
    for (const auto& b : g.dictionary.basis) header.push_back(b.label());
    write_csv_row(os, header);
    for (Eigen::Index i = 0; i < g.l_hat.rows(); ++i) {
        std::vector<std::string> row{g.dictionary.basis[static_cast<std::size_t>(i)].label()};
        for (Eigen::Index j = 0; j < g.l_hat.cols(); ++j) row.push_back(format_number(g.l_hat(i, j)));
        write_csv_row(os, row);
    }
}

inline void write_field_csv(std::ostream& os, const FieldCoefficients& c) {
    os << "# dictionary: " << c.dictionary.label << '\n';
    std::vector<std::string> header{"state"};
    for (const auto& b : c.dictionary.basis) header.push_back(b.label());
    write_csv_row(os, header);
    for (Eigen::Index k = 0; k < c.w.rows(); ++k) {
        std::vector<std::string> row{"f" + std::to_string(k + 1)};
        for (Eigen::Index j = 0; j < c.w.cols(); ++j) row.push_back(format_number(c.w(k, j)));
        write_csv_row(os, row);
    }
}

} // namespace kalias
