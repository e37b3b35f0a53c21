#pragma once

// Coefficient error (RMSE / NRMSE), DFT spectra and the spectral error of
// reconstructed trajectories.

#include <cmath>
#include <limits>
#include <ostream>
#include <unsupported/Eigen/FFT>

#include "kalias/csv.hpp"
#include "kalias/koopman_id.hpp"

namespace kalias {

/// Coefficients with |w| at or below this count as zero in the normalizer.
inline constexpr double nonzero_coefficient = 1e-12;

inline double rmse(const Matrix& w_hat, const Matrix& w_true) {
    if (w_hat.rows() != w_true.rows() || w_hat.cols() != w_true.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "coefficient matrices differ in shape");
    }
    if (w_true.size() == 0) throw Error(ErrorKind::ShapeMismatch, "empty coefficient matrix");
    return std::sqrt((w_hat - w_true).squaredNorm() / static_cast<double>(w_true.size()));
}

/// RMSE divided by the mean magnitude of the nonzero true coefficients.
inline double nrmse(const Matrix& w_hat, const Matrix& w_true) {
    const double r = rmse(w_hat, w_true);
    double total = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < w_true.size(); ++i) {
        const double a = std::abs(w_true(i));
        if (a > nonzero_coefficient) {
            total += a;
            ++count;
        }
    }
    if (count == 0) throw Error(ErrorKind::AllZeroTruth, "true coefficients are all zero");
    return r / (total / static_cast<double>(count));
}

inline double nrmse(const FieldCoefficients& w_hat, const FieldCoefficients& w_true) {
    if (w_hat.dictionary.basis != w_true.dictionary.basis) {
        throw Error(ErrorKind::ShapeMismatch, "coefficients refer to different dictionaries");
    }
    return nrmse(w_hat.w, w_true.w);
}

/// Unnormalized forward transform P[q] = sum_s x[s] exp(-2 pi i q s / len).
inline CVector dft(const Vector& signal) {
    if (signal.size() < 1) throw Error(ErrorKind::ShapeMismatch, "dft of an empty signal");
    const CVector in = signal.cast<Complex>();
    // kissfft does not handle a single point.
    if (signal.size() == 1) return in;
    Eigen::FFT<double> fft;
    CVector out(signal.size());
    fft.fwd(out.data(), in.data(), signal.size());
    return out;
}

/// Inverse of dft(), including the 1/len factor.
inline CVector inverse_dft(const CVector& spectrum) {
    if (spectrum.size() < 1) throw Error(ErrorKind::ShapeMismatch, "inverse dft of an empty spectrum");
    if (spectrum.size() == 1) return spectrum;
    Eigen::FFT<double> fft;
    CVector out(spectrum.size());
    fft.inv(out.data(), spectrum.data(), spectrum.size());
    return out;
}

/// Squared 2-norm distance between the spectra of the true and the
/// reconstructed trajectory, per state. Both start at x0 and are sampled at
/// fs Hz for n_samples points. A reconstruction that cannot be integrated
/// over the window scores +inf.
inline std::vector<double> spectral_error(const DynamicalSystem& truth, const DynamicalSystem& model, const Vector& x0,
                                          double fs = 100.0, std::size_t n_samples = 500) {
    if (!(fs > 0.0) || n_samples < 1) throw Error(ErrorKind::BadParams, "spectral error needs fs > 0 and samples >= 1");
    std::vector<double> times(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) times[s] = static_cast<double>(s) / fs;
    const Matrix x_true = trajectory(truth, x0, times);
    Matrix x_model;
    try {
        x_model = trajectory(model, x0, times);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence && e.kind() != ErrorKind::PoleHit && e.kind() != ErrorKind::NonFinite) throw;
        return std::vector<double>(static_cast<std::size_t>(truth.dim), std::numeric_limits<double>::infinity());
    }
    std::vector<double> out;
    for (int k = 0; k < truth.dim; ++k) {
        out.push_back((dft(x_model.col(k)) - dft(x_true.col(k))).squaredNorm());
    }
    return out;
}

inline std::vector<double> spectral_error(const DynamicalSystem& truth, const FieldCoefficients& w_hat, const Vector& x0,
                                          double fs = 100.0, std::size_t n_samples = 500) {
    return spectral_error(truth, field_system(w_hat), x0, fs, n_samples);
}

/// One (T_s, dictionary) cell of a sampling-period sweep.
struct SweepRow {
    double sampling_period = 0.0;
    double nrmse = 0.0;
    double nrmse_quarter = 0.0;
    double max_abs_imag = 0.0;
    double residual = 0.0;
    std::string dictionary;
    bool above_critical = false;
    /// Negative-real eigenvalues of U_hat replaced by their magnitude.
    int reflected_modes = 0;
    /// "ok", or the error kind that stopped the cell.
    std::string status = "ok";

    bool ok() const { return status == "ok"; }
};

inline SweepRow make_sweep_row(double ts, double nrmse_value, double max_abs_imag, double residual,
                               std::string dictionary, bool above_critical) {
    SweepRow r;
    r.sampling_period = ts;
    r.nrmse = nrmse_value;
    r.nrmse_quarter = std::pow(nrmse_value, 0.25);
    r.max_abs_imag = max_abs_imag;
    r.residual = residual;
    r.dictionary = std::move(dictionary);
    r.above_critical = above_critical;
    return r;
}

/// Row for a cell that failed; numeric columns are inf / nan.
inline SweepRow failed_sweep_row(double ts, std::string dictionary, bool above_critical, ErrorKind kind,
                                 double residual = std::numeric_limits<double>::quiet_NaN()) {
    SweepRow r;
    r.sampling_period = ts;
    r.nrmse = std::numeric_limits<double>::infinity();
    r.nrmse_quarter = std::numeric_limits<double>::infinity();
    r.max_abs_imag = std::numeric_limits<double>::quiet_NaN();
    r.residual = residual;
    r.dictionary = std::move(dictionary);
    r.above_critical = above_critical;
    r.status = to_string(kind);
    return r;
}

inline const char* sweep_csv_header() {
    return "T_s,nrmse,nrmse_quarter,max_abs_imag,residual,dictionary,above_critical,reflected_modes,status";
}

inline void write_sweep_row(std::ostream& os, const SweepRow& r) {
    write_csv_row(os, {format_number(r.sampling_period), format_number(r.nrmse), format_number(r.nrmse_quarter),
                       format_number(r.max_abs_imag), format_number(r.residual), r.dictionary,
                       r.above_critical ? "1" : "0", std::to_string(r.reflected_modes), r.status});
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << sweep_csv_header() << '\n';
    for (const auto& r : rows) write_sweep_row(os, r);
}

} // namespace kalias
