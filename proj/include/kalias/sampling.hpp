#pragma once

// Critical sampling period, strip membership and explicit generator aliases.

#include <limits>
#include <numbers>
#include <optional>
#include <ostream>

#include "kalias/csv.hpp"
#include "kalias/linalg.hpp"

namespace kalias {

/// Slack used when comparing imaginary magnitudes against the true generator.
inline constexpr double alias_space_slack = 1e-12;
/// Eigenvector condition number above which L is treated as defective.
inline constexpr double defective_condition = 1e8;

struct SamplingVerdict {
    double max_abs_imag = 0.0;
    /// pi / max_abs_imag, or +inf for a real spectrum.
    double critical_period = std::numeric_limits<double>::infinity();
    /// 2 * max_abs_imag (rad/s)
    double min_frequency = 0.0;
    /// (T_s, no aliasing at T_s) when a sampling period was supplied.
    std::optional<std::pair<double, bool>> no_aliasing_at;
};

inline SamplingVerdict critical_period(const Spectrum& spectrum, std::optional<double> sampling_period = std::nullopt) {
    if (spectrum.size() == 0) throw Error(ErrorKind::ShapeMismatch, "critical period of an empty spectrum");
    SamplingVerdict v;
    v.max_abs_imag = spectrum.max_abs_imag;
    v.min_frequency = 2.0 * v.max_abs_imag;
    if (v.max_abs_imag > 0.0) v.critical_period = std::numbers::pi / v.max_abs_imag;
    if (sampling_period) {
        v.no_aliasing_at = std::pair{*sampling_period, v.max_abs_imag < std::numbers::pi / *sampling_period};
    }
    return v;
}

/// Largest critical period over several candidate spectra.
inline SamplingVerdict critical_period(const std::vector<Spectrum>& candidates) {
    if (candidates.empty()) throw Error(ErrorKind::ShapeMismatch, "no candidate spectra");
    SamplingVerdict best = critical_period(candidates.front());
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto v = critical_period(candidates[i]);
        if (v.critical_period > best.critical_period) best = v;
    }
    return best;
}

/// Open strip: every |Im lambda| < pi / T_s. The edge counts as aliasing.
inline bool in_strip(const Matrix& l, double sampling_period) {
    if (!(sampling_period > 0.0)) throw Error(ErrorKind::BadParams, "sampling period must be positive");
    return spectrum_of(l).max_abs_imag < std::numbers::pi / sampling_period;
}

inline bool in_alias_space(const Matrix& candidate, const Matrix& truth) {
    if (candidate.rows() != truth.rows() || candidate.cols() != truth.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "alias candidate and generator differ in shape");
    }
    return spectrum_of(candidate).max_abs_imag <= spectrum_of(truth).max_abs_imag + alias_space_slack;
}

struct AliasCertificate {
    Matrix l_true;
    Matrix l_alias;
    double sampling_period = 0.0;
    /// One integer per conjugate pair, pairs taken in spectrum order.
    std::vector<int> branch_shifts;
    /// ||exp(L T) - exp(L~ T)||_F / ||exp(L T)||_F
    double exp_gap = 0.0;
    bool in_alias_space = true;
};

namespace detail {

struct ConjugatePairs {
    EigenDecomposition eig;
    std::vector<std::size_t> upper; // eigenvalue index with Im > 0
    std::vector<std::size_t> lower; // matching conjugate
};

inline ConjugatePairs conjugate_pairs(const Matrix& l) {
    ConjugatePairs p{eigendecompose(l), {}, {}};
    const auto& ev = p.eig.spectrum.eigenvalues;
    const double scale = std::max(1.0, l.norm());
    std::vector<bool> used(ev.size(), false);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].imag() <= 1e-14 * scale) continue;
        std::size_t best = ev.size();
        double best_gap = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ev.size(); ++j) {
            if (used[j] || ev[j].imag() >= 0.0) continue;
            const double gap = std::abs(ev[j] - std::conj(ev[i]));
            if (gap < best_gap) {
                best_gap = gap;
                best = j;
            }
        }
        if (best == ev.size()) throw Error(ErrorKind::NonFinite, "eigenvalue without a conjugate partner");
        used[best] = true;
        p.upper.push_back(i);
        p.lower.push_back(best);
    }
    return p;
}

} // namespace detail

/// Real alias of L obtained by moving conjugate pair k by 2 pi n_k / T_s.
inline AliasCertificate construct_alias(const Matrix& l, double sampling_period, const std::vector<int>& shifts) {
    detail::require_square(l, "construct_alias");
    if (!(sampling_period > 0.0)) throw Error(ErrorKind::BadParams, "sampling period must be positive");
    AliasCertificate cert;
    cert.l_true = l;
    cert.sampling_period = sampling_period;
    cert.branch_shifts = shifts;
    const auto pairs = detail::conjugate_pairs(l);
    if (shifts.size() > pairs.upper.size()) {
        throw Error(ErrorKind::RealEigenvalue, std::to_string(shifts.size()) + " shifts requested but L has only " +
                                                   std::to_string(pairs.upper.size()) + " conjugate pairs");
    }
    if (std::all_of(shifts.begin(), shifts.end(), [](int s) { return s == 0; })) {
        cert.l_alias = l;
        return cert;
    }
    const double cond = eigenvector_condition(pairs.eig.vectors);
    if (!(cond < defective_condition)) {
        throw Error(ErrorKind::Defective, "eigenvector condition number " + format_number(cond) + " is too large");
    }
    CVector lambda(l.rows());
    for (std::size_t i = 0; i < pairs.eig.spectrum.eigenvalues.size(); ++i) {
        lambda(static_cast<Eigen::Index>(i)) = pairs.eig.spectrum.eigenvalues[i];
    }
    const double step = 2.0 * std::numbers::pi / sampling_period;
    for (std::size_t k = 0; k < shifts.size(); ++k) {
        const double d = step * shifts[k];
        lambda(static_cast<Eigen::Index>(pairs.upper[k])) += Complex(0.0, d);
        lambda(static_cast<Eigen::Index>(pairs.lower[k])) -= Complex(0.0, d);
    }
    const CMatrix& v = pairs.eig.vectors;
    const CMatrix assembled = v * lambda.asDiagonal() * v.inverse();
    cert.l_alias = assembled.real();
    cert.exp_gap = relative_frobenius(mat_exp(cert.l_alias, sampling_period), mat_exp(l, sampling_period));
    cert.in_alias_space = in_alias_space(cert.l_alias, l);
    return cert;
}

/// Every alias inside the alias space of L, at most max_count entries. The
/// zero shift (L itself) comes first, the rest follow in lexicographic order
/// of the shifts.
inline std::vector<AliasCertificate> enumerate_aliases(const Matrix& l, double sampling_period, std::size_t max_count = 1000) {
    detail::require_square(l, "enumerate_aliases");
    if (!(sampling_period > 0.0)) throw Error(ErrorKind::BadParams, "sampling period must be positive");
    const auto pairs = detail::conjugate_pairs(l);
    const double bound = pairs.eig.spectrum.max_abs_imag + alias_space_slack;
    const double step = 2.0 * std::numbers::pi / sampling_period;
    std::vector<std::pair<int, int>> ranges;
    for (std::size_t k : pairs.upper) {
        const double b = pairs.eig.spectrum.eigenvalues[k].imag();
        ranges.emplace_back(static_cast<int>(std::ceil((-bound - b) / step)),
                            static_cast<int>(std::floor((bound - b) / step)));
    }
    std::vector<AliasCertificate> out;
    if (max_count == 0) return out;
    out.push_back(construct_alias(l, sampling_period, std::vector<int>(ranges.size(), 0)));
    std::vector<int> shifts;
    for (const auto& r : ranges) shifts.push_back(r.first);
    for (;;) {
        if (out.size() >= max_count) break;
        if (std::any_of(shifts.begin(), shifts.end(), [](int v) { return v != 0; })) {
            auto cert = construct_alias(l, sampling_period, shifts);
            if (cert.in_alias_space) out.push_back(std::move(cert));
        }
        std::size_t k = shifts.size();
        while (k-- > 0) {
            if (shifts[k] < ranges[k].second) {
                ++shifts[k];
                break;
            }
            shifts[k] = ranges[k].first;
        }
        if (k == static_cast<std::size_t>(-1)) break;
    }
    return out;
}

struct EigenspaceCheck {
    bool valid = true;
    double worst_condition = 1.0;
    double min_singular = std::numeric_limits<double>::infinity();
};

/// Gradients of the candidate eigenfunctions must stay linearly independent:
/// every matrix needs smallest singular value > 1e-8.
inline EigenspaceCheck validate_eigenspace(const std::vector<Matrix>& gradients) {
    EigenspaceCheck out;
    for (const auto& g : gradients) {
        const Vector s = Eigen::JacobiSVD<Matrix>(g).singularValues();
        const double smin = s.size() ? s(s.size() - 1) : 0.0;
        const double smax = s.size() ? s(0) : 0.0;
        out.min_singular = std::min(out.min_singular, smin);
        const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        out.worst_condition = std::max(out.worst_condition, cond);
        if (!(smin > 1e-8)) out.valid = false;
    }
    return out;
}

inline void write_verdict_csv(std::ostream& os, const std::string& label, const SamplingVerdict& v, bool header = true) {
    if (header) os << "label,max_abs_imag,T_gamma,min_frequency,T_s,no_aliasing\n";
    write_csv_row(os, {label, format_number(v.max_abs_imag), format_number(v.critical_period),
                       format_number(v.min_frequency),
                       v.no_aliasing_at ? format_number(v.no_aliasing_at->first) : "",
                       v.no_aliasing_at ? (v.no_aliasing_at->second ? "true" : "false") : ""});
}

inline void write_alias_csv(std::ostream& os, const std::vector<AliasCertificate>& certs) {
    os << "index,shifts,exp_gap,in_alias_space,max_abs_imag,l_alias\n";
    for (std::size_t i = 0; i < certs.size(); ++i) {
        const auto& c = certs[i];
        std::string shifts, entries;
        for (int s : c.branch_shifts) shifts += (shifts.empty() ? "" : " ") + std::to_string(s);
        for (Eigen::Index r = 0; r < c.l_alias.rows(); ++r)
            for (Eigen::Index q = 0; q < c.l_alias.cols(); ++q)
                entries += (entries.empty() ? "" : " ") + format_number(c.l_alias(r, q));
        write_csv_row(os, {std::to_string(i), shifts, format_number(c.exp_gap), c.in_alias_space ? "true" : "false",
                           format_number(spectrum_of(c.l_alias).max_abs_imag), entries});
    }
}

} // namespace kalias
