#pragma once

// Dense kernels behind the identification pipeline: sorted eigendecomposition,
// matrix exponential, principal matrix logarithm and minimum-norm least squares.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "kalias/error.hpp"

namespace kalias {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;

/// Eigenvalues ordered by descending real part, ties broken by ascending
/// imaginary part, together with the largest |Im| among them.
struct Spectrum {
    std::vector<Complex> eigenvalues;
    double max_abs_imag = 0.0;

    static Spectrum from(std::vector<Complex> values);

    std::size_t size() const { return eigenvalues.size(); }
};

struct EigenDecomposition {
    Spectrum spectrum;
    CMatrix vectors; // column i pairs with spectrum.eigenvalues[i]
};

namespace detail {

inline double tie_tolerance(Complex a, Complex b) {
    return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Permutation that sorts `values` by (-Re, Im). Real parts within a relative
/// 1e-12 of their neighbour are treated as equal so conjugate pairs computed
/// with slightly different rounding still order by imaginary part.
inline std::vector<std::size_t> spectrum_order(const std::vector<Complex>& values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return values[a].real() > values[b].real();
    });
    std::size_t start = 0;
    while (start < idx.size()) {
        std::size_t stop = start + 1;
        while (stop < idx.size() &&
               std::abs(values[idx[stop - 1]].real() - values[idx[stop]].real()) <=
                   tie_tolerance(values[idx[stop - 1]], values[idx[stop]])) {
            ++stop;
        }
        std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(stop),
                         [&](std::size_t a, std::size_t b) {
                             return values[a].imag() < values[b].imag();
                         });
        start = stop;
    }
    return idx;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw Error(ErrorKind::NonFinite, std::string(what) + " has NaN or Inf entries");
    }
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorKind::ShapeMismatch, std::string(what) + " must be square, got " +
                                                  std::to_string(m.rows()) + "x" +
                                                  std::to_string(m.cols()));
    }
}

} // namespace detail

inline Spectrum Spectrum::from(std::vector<Complex> values) {
    Spectrum s;
    for (std::size_t i : detail::spectrum_order(values)) {
        s.eigenvalues.push_back(values[i]);
    }
    for (const Complex& v : s.eigenvalues) {
        s.max_abs_imag = std::max(s.max_abs_imag, std::abs(v.imag()));
    }
    return s;
}

inline EigenDecomposition eigendecompose(const Matrix& a) {
    detail::require_square(a, "eigendecompose input");
    detail::require_finite(a, "eigendecompose input");
    EigenDecomposition out;
    if (a.rows() == 0) {
        return out;
    }
    Eigen::EigenSolver<Matrix> solver(a, true);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorKind::NonFinite, "eigenvalue iteration did not converge");
    }
    const CVector values = solver.eigenvalues();
    const CMatrix vectors = solver.eigenvectors();
    std::vector<Complex> raw(values.data(), values.data() + values.size());
    const auto order = detail::spectrum_order(raw);
    out.vectors.resize(a.rows(), a.cols());
    std::vector<Complex> sorted;
    sorted.reserve(raw.size());
    for (std::size_t j = 0; j < order.size(); ++j) {
        sorted.push_back(raw[order[j]]);
        out.vectors.col(static_cast<Eigen::Index>(j)) =
            vectors.col(static_cast<Eigen::Index>(order[j]));
    }
    out.spectrum.eigenvalues = std::move(sorted);
    for (const Complex& v : out.spectrum.eigenvalues) {
        out.spectrum.max_abs_imag = std::max(out.spectrum.max_abs_imag, std::abs(v.imag()));
    }
    return out;
}

inline Spectrum spectrum_of(const Matrix& a) { return eigendecompose(a).spectrum; }

/// 2-norm condition number of an eigenvector basis after normalising its
/// columns. Infinite when the basis is numerically rank deficient.
inline double eigenvector_condition(const CMatrix& v) {
    if (v.cols() == 0) {
        return 1.0;
    }
    CMatrix normed = v;
    for (Eigen::Index j = 0; j < normed.cols(); ++j) {
        const double n = normed.col(j).norm();
        if (n > 0.0) {
            normed.col(j) /= n;
        }
    }
    Eigen::JacobiSVD<CMatrix> svd(normed);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

/// exp(A t) by scaling and squaring with the degree-13 Padé approximant.
inline Matrix mat_exp(const Matrix& a, double t) {
    detail::require_square(a, "mat_exp input");
    detail::require_finite(a, "mat_exp input");
    if (!std::isfinite(t)) {
        throw Error(ErrorKind::NonFinite, "mat_exp time is not finite");
    }
    const Eigen::Index n = a.rows();
    const Matrix ident = Matrix::Identity(n, n);
    if (n == 0) {
        return ident;
    }
    static constexpr std::array<double, 14> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;

    Matrix x = a * t;
    const double norm1 = x.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
        x /= std::ldexp(1.0, squarings);
    }
    const Matrix x2 = x * x;
    const Matrix x4 = x2 * x2;
    const Matrix x6 = x4 * x2;
    const Matrix u = x * (x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 +
                          b[3] * x2 + b[1] * ident);
    const Matrix v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 +
                     b[2] * x2 + b[0] * ident;
    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) {
        r = r * r;
    }
    return r;
}

namespace detail {

/// Gauss-Legendre nodes and weights on [0, 1].
template <int Order>
struct GaussLegendre01 {
    std::array<double, Order> nodes{};
    std::array<double, Order> weights{};

    GaussLegendre01() {
        for (int i = 0; i < Order; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (Order + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0;
                double p1 = x;
                for (int k = 2; k <= Order; ++k) {
                    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = Order * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) {
                    break;
                }
            }
            nodes[i] = 0.5 * (x + 1.0);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

/// Principal square root of an upper-triangular matrix (column recurrence).
inline CMatrix sqrt_upper_triangular(const CMatrix& t) {
    const Eigen::Index n = t.rows();
    CMatrix r = CMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        r(j, j) = std::sqrt(t(j, j));
        for (Eigen::Index i = j - 1; i >= 0; --i) {
            Complex s = t(i, j);
            for (Eigen::Index k = i + 1; k < j; ++k) {
                s -= r(i, k) * r(k, j);
            }
            r(i, j) = s / (r(i, i) + r(j, j));
        }
    }
    return r;
}

/// a^(1/2^s) - 1 without the cancellation of forming the power first.
inline Complex root_power_minus_one(Complex a, int s) {
    if (s == 0) {
        return a - 1.0;
    }
    int n0 = s;
    if (std::abs(std::arg(a)) >= std::numbers::pi / 2) {
        a = std::sqrt(a);
        n0 = s - 1;
    }
    const Complex z0 = a - 1.0;
    a = std::sqrt(a);
    Complex r = 1.0 + a;
    for (int i = 1; i < n0; ++i) {
        a = std::sqrt(a);
        r *= 1.0 + a;
    }
    return z0 / r;
}

inline double unwinding(Complex z) {
    return std::ceil((z.imag() - std::numbers::pi) / (2.0 * std::numbers::pi));
}

/// Accurate (1,2) entry of log of the 2x2 upper-triangular block [l1 t; 0 l2].
inline Complex log_superdiagonal(Complex l1, Complex l2, Complex t12) {
    if (l1 == l2) {
        return t12 / l1;
    }
    if (std::abs(l1) < 0.5 * std::abs(l2) || std::abs(l2) < 0.5 * std::abs(l1)) {
        return t12 * (std::log(l2) - std::log(l1)) / (l2 - l1);
    }
    const Complex z = (l2 - l1) / (l2 + l1);
    const Complex dd = 2.0 * std::atanh(z) +
                       Complex(0.0, 2.0 * std::numbers::pi) * unwinding(std::log(l2) - std::log(l1));
    return t12 * dd / (l2 - l1);
}

inline void check_log_domain_zero(const CMatrix& t, double scale) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const Complex lam = t(i, i);
        if (std::abs(lam) <= 1e-14 * scale) {
            throw Error(ErrorKind::Singular,
                        "eigenvalue " + std::to_string(lam.real()) + "+" +
                            std::to_string(lam.imag()) + "i is numerically zero");
        }
    }
}

inline void check_log_domain(const CMatrix& t, double scale) {
    check_log_domain_zero(t, scale);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const Complex lam = t(i, i);
        if (lam.real() < 0.0 && std::abs(lam.imag()) <= 1e-10) {
            throw Error(ErrorKind::BranchCut,
                        "eigenvalue " + std::to_string(lam.real()) + "+" +
                            std::to_string(lam.imag()) + "i lies on the negative real axis");
        }
    }
}

/// log of an upper-triangular matrix by inverse scaling and squaring with a
/// degree-8 Padé approximant evaluated in partial fractions.
inline CMatrix log_upper_triangular(const CMatrix& t) {
    constexpr int pade_degree = 8;
    constexpr double theta = 0.25;
    constexpr int max_roots = 64;
    static const GaussLegendre01<pade_degree> quad;

    const Eigen::Index n = t.rows();
    const CMatrix ident = CMatrix::Identity(n, n);
    CMatrix r = t;
    int roots = 0;
    while (roots < max_roots) {
        const double dist = (r - ident).cwiseAbs().colwise().sum().maxCoeff();
        if (dist <= theta) {
            break;
        }
        r = sqrt_upper_triangular(r);
        ++roots;
    }
    CMatrix x = r - ident;
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, i) = root_power_minus_one(t(i, i), roots);
    }
    CMatrix acc = CMatrix::Zero(n, n);
    for (int j = 0; j < pade_degree; ++j) {
        const CMatrix denom = ident + quad.nodes[j] * x;
        acc += quad.weights[j] *
               denom.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(x);
    }
    CMatrix out = std::ldexp(1.0, roots) * acc;
    out.triangularView<Eigen::StrictlyLower>().setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, i) = std::log(t(i, i));
    }
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        out(i, i + 1) = log_superdiagonal(t(i, i), t(i + 1, i + 1), t(i, i + 1));
    }
    return out;
}

} // namespace detail

/// Principal logarithm of a complex matrix: the unique log whose eigenvalues
/// satisfy -pi < Im < pi. Raises Singular or BranchCut outside its domain.
inline CMatrix principal_log_complex(const CMatrix& m) {
    detail::require_square(m, "principal_log input");
    detail::require_finite(m, "principal_log input");
    if (m.rows() == 0) {
        return m;
    }
    Eigen::ComplexSchur<CMatrix> schur(m, true);
    if (schur.info() != Eigen::Success) {
        throw Error(ErrorKind::NonFinite, "Schur iteration did not converge");
    }
    const CMatrix& t = schur.matrixT();
    const CMatrix& q = schur.matrixU();
    detail::check_log_domain(t, std::max(1.0, m.norm()));
    return q * detail::log_upper_triangular(t) * q.adjoint();
}

/// Real principal logarithm of a real matrix with no eigenvalue on (-inf, 0].
inline Matrix principal_log(const Matrix& m) {
    detail::require_square(m, "principal_log input");
    detail::require_finite(m, "principal_log input");
    return principal_log_complex(m.cast<Complex>()).real();
}

struct ReflectedLog {
    Matrix log;
    /// Eigenvalues found on the negative real axis.
    int reflected = 0;
};

/// Real part of a complex logarithm of a real matrix. Every eigenvalue on the
/// negative real axis contributes log|lambda|; the +i pi or -i pi part lands
/// entirely in the imaginary part, so the result does not depend on which side
/// of the cut is taken. Equivalently, the principal log of m after each
/// negative eigenvalue is replaced by its magnitude. Matches principal_log
/// whenever that one is defined.
inline ReflectedLog reflected_log(const Matrix& m) {
    detail::require_square(m, "reflected_log input");
    detail::require_finite(m, "reflected_log input");
    ReflectedLog out;
    if (m.rows() == 0) {
        out.log = m;
        return out;
    }
    Eigen::ComplexSchur<CMatrix> schur(m.cast<Complex>(), true);
    if (schur.info() != Eigen::Success) {
        throw Error(ErrorKind::NonFinite, "Schur iteration did not converge");
    }
    CMatrix t = schur.matrixT();
    const CMatrix& q = schur.matrixU();
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        if (t(i, i).real() < 0.0 && std::abs(t(i, i).imag()) <= 1e-10) {
            t(i, i) = Complex(t(i, i).real(), 0.0);
            ++out.reflected;
        }
    }
    detail::check_log_domain_zero(t, std::max(1.0, m.norm()));
    out.log = (q * detail::log_upper_triangular(t) * q.adjoint()).real();
    return out;
}

inline double default_lstsq_tolerance(Eigen::Index rows, Eigen::Index cols) {
    return 1e-10 * static_cast<double>(std::max(rows, cols));
}

/// Minimum-Frobenius-norm minimiser of ||X U - Y||_F. Singular values below
/// rel_tol * sigma_max are dropped; rel_tol <= 0 selects the default
/// 1e-10 * max(K, N).
inline Matrix lstsq_minnorm(const Matrix& x, const Matrix& y, double rel_tol = -1.0) {
    if (x.rows() != y.rows()) {
        throw Error(ErrorKind::ShapeMismatch, "X has " + std::to_string(x.rows()) +
                                                  " rows but Y has " + std::to_string(y.rows()));
    }
    detail::require_finite(x, "X");
    detail::require_finite(y, "Y");
    if (rel_tol <= 0.0) {
        rel_tol = default_lstsq_tolerance(x.rows(), x.cols());
    }
    const Eigen::Index k = x.rows();
    const Eigen::Index n = x.cols();
    if (n == 0 || k == 0) {
        return Matrix::Zero(n, y.cols());
    }

    auto solve_small = [rel_tol](const Matrix& a, const Matrix& rhs) {
        Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& sv = svd.singularValues();
        const double cutoff = rel_tol * sv(0);
        Matrix ut_rhs = svd.matrixU().transpose() * rhs;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            if (sv(i) > cutoff && sv(i) > 0.0) {
                ut_rhs.row(i) /= sv(i);
            } else {
                ut_rhs.row(i).setZero();
            }
        }
        return Matrix(svd.matrixV() * ut_rhs);
    };

    if (k <= n) {
        return solve_small(x, y);
    }
    // Tall case: X = QR, then the SVD of the small triangular factor has the
    // same singular values as X.
    Eigen::HouseholderQR<Matrix> qr(x);
    const Matrix qty = (qr.householderQ().transpose() * y).topRows(n);
    const Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    return solve_small(r, qty);
}

inline double relative_frobenius(const Matrix& a, const Matrix& reference) {
    const double denom = reference.norm();
    return denom > 0.0 ? (a - reference).norm() / denom : (a - reference).norm();
}

} // namespace kalias
