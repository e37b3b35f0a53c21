#pragma once

// Experiment orchestration: configuration, sampling-period sweeps, the rod
// aliasing demonstration, trajectory prediction and spectral-error scans.
// Everything here returns plain data; the command-line tool handles files.

#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kalias/keyvalue.hpp"
#include "kalias/koopman_id.hpp"
#include "kalias/metrics.hpp"
#include "kalias/sampling.hpp"

namespace kalias {

/// Inclusive arithmetic grid; values are rounded to 1e-12 so that e.g. 0.3
/// prints as 0.3 rather than 0.30000000000000004.
inline std::vector<double> make_grid(double start, double stop, double step) {
    if (!(step > 0.0) || !(stop >= start) || !std::isfinite(start) || !std::isfinite(stop)) {
        throw Error(ErrorKind::Config, "grid needs start <= stop and step > 0");
    }
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
    return out;
}

/// "start:stop:step" or a list "0.5, 1.1".
inline std::vector<double> parse_grid(const KeyValue& kv) {
    const auto parts = split_list(kv.value, ":");
    if (kv.value.find(':') != std::string::npos) {
        if (parts.size() != 3) kv.fail("expected start:stop:step");
        try {
            return make_grid(parse_double_or(kv, parts[0]), parse_double_or(kv, parts[1]), parse_double_or(kv, parts[2]));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config) kv.fail(e.what());
            throw;
        }
    }
    return parse_doubles(kv);
}

struct ExperimentConfig {
    std::string system = "sys1";
    std::map<std::string, double> system_params;
    /// Path of a system definition file; takes precedence over `system`.
    std::string system_file;
    /// Path of a file holding `eigenvalues = ...` for critical-period.
    std::string spectrum_file;
    std::vector<std::string> dictionaries;
    std::size_t n_traj = 200;
    std::size_t n_snap = 10;
    /// Empty means [-1, 1] in every coordinate.
    InitBox init_box;
    std::optional<std::uint64_t> seed;
    std::vector<double> grid;
    std::vector<double> predict_periods;
    std::vector<double> x0;
    double horizon = 5.0;
    double fs = 100.0;
    std::size_t n_samples = 500;
    double rel_tol = -1.0;
    LogPolicy log_policy = LogPolicy::Strict;
    std::string out_dir = ".";
    unsigned jobs = 1;

    double alias_a = 0.1;
    double alias_omega = 3.0;
    double alias_period = 4.0 * std::numbers::pi / 9.0;
    std::size_t n_photos = 10;

    /// Applies one "key = value" setting. Config files and command-line flags
    /// both go through here so they accept the same spellings.
    void set(const KeyValue& kv) {
        const auto& k = kv.key;
        auto count = [&] {
            const auto v = parse_integer(kv);
            if (v < 1) kv.fail("must be >= 1");
            return static_cast<std::size_t>(v);
        };
        auto positive = [&] {
            const double v = parse_double_or(kv, kv.value);
            if (!(v > 0.0) || !std::isfinite(v)) kv.fail("must be a positive number");
            return v;
        };
        if (k == "system") {
            system = kv.value;
        } else if (k.starts_with("param.")) {
            system_params[k.substr(6)] = parse_double_or(kv, kv.value);
        } else if (k == "system_file") {
            system_file = kv.value;
        } else if (k == "spectrum_file") {
            spectrum_file = kv.value;
        } else if (k == "dictionary") {
            dictionaries.push_back(kv.value);
        } else if (k == "n_traj") {
            n_traj = count();
        } else if (k == "n_snap") {
            n_snap = count();
        } else if (k == "init_box") {
            const auto v = parse_doubles(kv);
            if (v.size() < 2 || v.size() % 2 != 0) kv.fail("expected lo,hi or one lo,hi pair per coordinate");
            init_box.clear();
            for (std::size_t i = 0; i < v.size(); i += 2) {
                if (!(v[i + 1] > v[i])) kv.fail("interval must have hi > lo");
                init_box.emplace_back(v[i], v[i + 1]);
            }
        } else if (k == "seed") {
            const auto v = parse_integer(kv);
            if (v < 0) kv.fail("seed must be nonnegative");
            seed = static_cast<std::uint64_t>(v);
        } else if (k == "grid") {
            grid = parse_grid(kv);
        } else if (k == "t_s") {
            predict_periods = parse_grid(kv);
        } else if (k == "x0") {
            x0 = parse_doubles(kv);
        } else if (k == "horizon") {
            horizon = positive();
        } else if (k == "fs") {
            fs = positive();
        } else if (k == "n_samples") {
            n_samples = count();
        } else if (k == "rel_tol") {
            rel_tol = positive();
        } else if (k == "log_policy") {
            try {
                log_policy = parse_log_policy(kv.value);
            } catch (const Error&) {
                kv.fail("expected 'strict' or 'reflect'");
            }
        } else if (k == "out_dir") {
            out_dir = kv.value;
        } else if (k == "jobs") {
            const auto v = parse_integer(kv);
            if (v < 0) kv.fail("jobs must be >= 0");
            jobs = static_cast<unsigned>(v);
        } else if (k == "a") {
            alias_a = parse_double_or(kv, kv.value);
        } else if (k == "omega") {
            alias_omega = parse_double_or(kv, kv.value);
        } else if (k == "alias_t_s") {
            alias_period = positive();
        } else if (k == "n_photos") {
            n_photos = count();
        } else {
            kv.fail("unknown key");
        }
    }

    void set(const std::string& key, const std::string& value) { set(KeyValue{0, key, value}); }

    /// Reads a config file. Relative file references inside it are resolved
    /// against the file's directory.
    static ExperimentConfig load(const std::string& path) {
        ExperimentConfig cfg;
        cfg.merge_file(path);
        return cfg;
    }

    void merge_file(const std::string& path) {
        const auto base = std::filesystem::path(path).parent_path();
        for (const auto& kv : parse_key_values(read_text_file(path))) {
            try {
                set(kv);
            } catch (const Error& e) {
                throw Error(ErrorKind::Config, path + ": " + strip_kind(e.what()));
            }
            if ((kv.key == "system_file" || kv.key == "spectrum_file") && !base.empty()) {
                auto& target = kv.key == "system_file" ? system_file : spectrum_file;
                if (std::filesystem::path(target).is_relative()) target = (base / target).string();
            }
        }
    }

    std::uint64_t require_seed() const {
        if (!seed) throw Error(ErrorKind::Config, "a seed is required (set 'seed' or pass --seed)");
        return *seed;
    }

private:
    static std::string strip_kind(const std::string& what) {
        const auto colon = what.find(": ");
        return colon == std::string::npos ? what : what.substr(colon + 2);
    }
};

inline void validate_grid(const std::vector<double>& grid, const char* what) {
    if (grid.empty()) throw Error(ErrorKind::Config, std::string(what) + " is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
            throw Error(ErrorKind::Config, std::string(what) + " values must be positive");
        }
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw Error(ErrorKind::Config, std::string(what) + " must be strictly increasing");
        }
    }
}

inline DynamicalSystem resolve_system(const ExperimentConfig& cfg) {
    if (!cfg.system_file.empty()) return parse_system(read_text_file(cfg.system_file));
    return builtin_system(cfg.system, cfg.system_params);
}

inline InitBox resolve_box(const ExperimentConfig& cfg, int dim) {
    if (cfg.init_box.empty()) return uniform_box(dim, -1.0, 1.0);
    if (cfg.init_box.size() == 1) return InitBox(static_cast<std::size_t>(dim), cfg.init_box.front());
    if (cfg.init_box.size() != static_cast<std::size_t>(dim)) {
        throw Error(ErrorKind::Config, "init_box has " + std::to_string(cfg.init_box.size()) +
                                           " intervals for a " + std::to_string(dim) + "-dimensional system");
    }
    return cfg.init_box;
}

inline Vector resolve_x0(const ExperimentConfig& cfg, int dim) {
    if (cfg.x0.empty()) return Vector::Constant(dim, 0.5);
    if (cfg.x0.size() != static_cast<std::size_t>(dim)) throw Error(ErrorKind::Config, "x0 has the wrong length");
    return Eigen::Map<const Vector>(cfg.x0.data(), dim);
}

inline std::vector<Dictionary> resolve_dictionaries(const ExperimentConfig& cfg, int dim) {
    std::vector<Dictionary> out;
    for (const auto& spec : cfg.dictionaries) out.push_back(parse_dictionary(spec, dim));
    if (out.empty()) out.push_back(build_dictionary(dim, 1));
    return out;
}

// ---------------------------------------------------------------------------
// Critical period

struct CriticalPeriodReport {
    std::string label;
    /// "principal", "spectrum-file" or "dictionary"
    std::string source;
    std::vector<Complex> spectrum;
    SamplingVerdict verdict;
};

inline CriticalPeriodReport critical_period_report(const ExperimentConfig& cfg) {
    CriticalPeriodReport r;
    if (!cfg.spectrum_file.empty()) {
        for (const auto& kv : parse_key_values(read_text_file(cfg.spectrum_file))) {
            if (kv.key != "eigenvalues") kv.fail("unknown key");
            for (const auto& z : parse_complex_list(kv)) r.spectrum.push_back(z);
        }
        if (r.spectrum.empty()) throw Error(ErrorKind::Config, cfg.spectrum_file + ": no eigenvalues listed");
        r.label = std::filesystem::path(cfg.spectrum_file).filename().string();
        r.source = "spectrum-file";
    } else {
        const auto sys = resolve_system(cfg);
        r.label = sys.name;
        if (!cfg.dictionaries.empty()) {
            std::vector<Spectrum> candidates;
            for (const auto& d : resolve_dictionaries(cfg, sys.dim)) {
                candidates.push_back(true_generator_matrix(sys, d).spectrum);
            }
            const auto best = critical_period(candidates);
            for (const auto& s : candidates) {
                if (s.max_abs_imag == best.max_abs_imag) {
                    r.spectrum = s.eigenvalues;
                    break;
                }
            }
            r.source = "dictionary";
        } else if (sys.known_principal_eigenvalues) {
            r.spectrum = *sys.known_principal_eigenvalues;
            r.source = "principal";
        } else {
            throw Error(ErrorKind::Config, "system '" + sys.name +
                                               "' lists no eigenvalues; give a dictionary or a spectrum file");
        }
    }
    r.verdict = critical_period(Spectrum::from(r.spectrum));
    return r;
}

/// T_gamma of a system from its principal eigenvalues, or from its stored
/// generator; +inf when neither is known.
inline double system_critical_period(const DynamicalSystem& sys) {
    if (sys.known_principal_eigenvalues) {
        return critical_period(Spectrum::from(*sys.known_principal_eigenvalues)).critical_period;
    }
    if (sys.known_generator) return critical_period(spectrum_of(sys.known_generator->matrix)).critical_period;
    return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Identification

struct Identification {
    KoopmanEstimate koopman;
    GeneratorEstimate generator;
    FieldCoefficients field;
};

struct SamplingPlan {
    std::size_t n_traj = 200;
    std::size_t n_snap = 10;
    InitBox box;
    std::uint64_t seed = 0;
    double rel_tol = -1.0;
    LogPolicy log_policy = LogPolicy::Strict;
};

inline SamplingPlan sampling_plan(const ExperimentConfig& cfg, int dim) {
    return {cfg.n_traj, cfg.n_snap, resolve_box(cfg, dim), cfg.require_seed(), cfg.rel_tol, cfg.log_policy};
}

inline Identification identify(const DynamicalSystem& sys, const Dictionary& dict, double ts, const SamplingPlan& plan,
                               unsigned jobs = 1) {
    const auto snaps = sample_snapshots(sys, plan.n_traj, plan.n_snap, ts, plan.box, plan.seed, jobs);
    Identification id;
    id.koopman = estimate_koopman(lift(snaps, dict, jobs), plan.rel_tol);
    id.generator = estimate_generator(id.koopman, plan.log_policy);
    id.field = recover_field(id.generator);
    return id;
}

// ---------------------------------------------------------------------------
// Sweep

/// One row per (dictionary, T_s), dictionaries outer, in grid order. Each
/// T_s is sampled once and shared by all dictionaries. A cell that fails is
/// recorded as a sentinel row and the sweep continues.
inline std::vector<SweepRow> run_sweep(const DynamicalSystem& sys, const std::vector<Dictionary>& dicts,
                                       const std::vector<double>& grid, const SamplingPlan& plan, unsigned jobs = 1) {
    validate_grid(grid, "grid");
    const double t_gamma = system_critical_period(sys);
    std::vector<FieldCoefficients> truths;
    for (const auto& d : dicts) {
        try {
            truths.push_back(field_coefficients(sys, d));
        } catch (const Error& e) {
            throw Error(ErrorKind::Config, "dictionary '" + d.label + "' cannot represent the field: " + e.what());
        }
    }
    std::vector<SweepRow> rows(dicts.size() * grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t gi) {
        const double ts = grid[gi];
        const bool above = ts >= t_gamma;
        std::optional<SnapshotSet> snaps;
        ErrorKind sampling_error{};
        try {
            snaps = sample_snapshots(sys, plan.n_traj, plan.n_snap, ts, plan.box, plan.seed);
        } catch (const Error& e) {
            sampling_error = e.kind();
        }
        for (std::size_t di = 0; di < dicts.size(); ++di) {
            auto& row = rows[di * grid.size() + gi];
            const auto& dict = dicts[di];
            if (!snaps) {
                row = failed_sweep_row(ts, dict.label, above, sampling_error);
                continue;
            }
            double residual = std::numeric_limits<double>::quiet_NaN();
            try {
                const auto u = estimate_koopman(lift(*snaps, dict), plan.rel_tol);
                residual = u.residual;
                const auto g = estimate_generator(u, plan.log_policy);
                row = make_sweep_row(ts, nrmse(recover_field(g), truths[di]), g.spectrum.max_abs_imag, residual,
                                     dict.label, above);
                row.reflected_modes = g.reflected_modes;
            } catch (const Error& e) {
                row = failed_sweep_row(ts, dict.label, above, e.kind(), residual);
            }
        }
    });
    return rows;
}

/// T_s of the largest finite NRMSE^(1/4) among rows of one dictionary.
inline std::optional<double> nrmse_peak(const std::vector<SweepRow>& rows, const std::string& dictionary) {
    std::optional<double> best_ts;
    double best = -1.0;
    for (const auto& r : rows) {
        if (r.dictionary != dictionary || !r.ok() || !std::isfinite(r.nrmse_quarter)) continue;
        if (r.nrmse_quarter > best) {
            best = r.nrmse_quarter;
            best_ts = r.sampling_period;
        }
    }
    return best_ts;
}

// ---------------------------------------------------------------------------
// Rod aliasing demonstration

struct AliasDemo {
    double a = 0.0;
    double omega = 0.0;
    double sampling_period = 0.0;
    /// x' = A x and its principal-branch reconstruction from exp(A T_s).
    Matrix a_true;
    Matrix a_alias;
    /// A_alias(0, 1); negative means the alias turns the other way.
    double alias_omega = 0.0;
    bool no_aliasing = true;
    std::vector<double> dense_times;
    Matrix dense_true;
    Matrix dense_alias;
    std::vector<double> photo_times;
    Matrix photo_true;
    Matrix photo_alias;
    double photo_gap = 0.0;
    double dense_gap = 0.0;
};

inline AliasDemo run_alias_demo(double a, double omega, double ts, std::size_t n_photos, double fs = 100.0) {
    if (!(ts > 0.0) || !(fs > 0.0) || n_photos < 1) throw Error(ErrorKind::BadParams, "alias demo needs T_s, fs > 0 and photos >= 1");
    AliasDemo d;
    d.a = a;
    d.omega = omega;
    d.sampling_period = ts;
    d.a_true.resize(2, 2);
    d.a_true << a, omega, -omega, a;
    d.a_alias = principal_log(mat_exp(d.a_true, ts)) / ts;
    d.alias_omega = d.a_alias(0, 1);
    d.no_aliasing = in_strip(d.a_true, ts);
    const Vector x0 = (Vector(2) << 1.0, 0.0).finished();
    const double end = static_cast<double>(n_photos - 1) * ts;
    const auto dense_count = static_cast<std::size_t>(std::floor(end * fs + 1e-9)) + 1;
    auto fill = [&](const std::vector<double>& times, Matrix& truth, Matrix& alias) {
        truth.resize(static_cast<Eigen::Index>(times.size()), 2);
        alias.resize(static_cast<Eigen::Index>(times.size()), 2);
        for (std::size_t i = 0; i < times.size(); ++i) {
            truth.row(static_cast<Eigen::Index>(i)) = (mat_exp(d.a_true, times[i]) * x0).transpose();
            alias.row(static_cast<Eigen::Index>(i)) = (mat_exp(d.a_alias, times[i]) * x0).transpose();
        }
    };
    for (std::size_t i = 0; i < dense_count; ++i) d.dense_times.push_back(static_cast<double>(i) / fs);
    for (std::size_t k = 0; k < n_photos; ++k) d.photo_times.push_back(static_cast<double>(k) * ts);
    fill(d.dense_times, d.dense_true, d.dense_alias);
    fill(d.photo_times, d.photo_true, d.photo_alias);
    d.photo_gap = (d.photo_true - d.photo_alias).rowwise().norm().maxCoeff();
    d.dense_gap = (d.dense_true - d.dense_alias).cwiseAbs().maxCoeff();
    return d;
}

// ---------------------------------------------------------------------------
// Prediction and spectral error

struct Prediction {
    double sampling_period = 0.0;
    std::vector<double> times;
    Matrix truth;
    /// NaN after the identified field stops being integrable.
    Matrix model;
    std::string status = "ok";
    double max_gap = 0.0;
    FieldCoefficients field;
};

/// Samples `model` at the given times, stopping (NaN rows) at the first
/// integration failure. Returns the failure kind, if any.
inline std::optional<ErrorKind> sample_until_failure(const DynamicalSystem& model, const Vector& x0,
                                                     const std::vector<double>& times, Matrix& out) {
    out = Matrix::Constant(static_cast<Eigen::Index>(times.size()), model.dim, std::numeric_limits<double>::quiet_NaN());
    try {
        DormandPrince stepper(field_of(model), x0, FlowOptions{});
        for (std::size_t i = 0; i < times.size(); ++i) {
            stepper.advance_to(times[i]);
            out.row(static_cast<Eigen::Index>(i)) = stepper.state().transpose();
        }
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

inline std::vector<double> sample_times(double horizon, double fs) {
    const auto count = static_cast<std::size_t>(std::floor(horizon * fs + 1e-9)) + 1;
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<double>(i) / fs;
    return t;
}

inline Prediction predict(const DynamicalSystem& sys, const Dictionary& dict, double ts, const SamplingPlan& plan,
                          const Vector& x0, double horizon = 5.0, double fs = 100.0) {
    Prediction p;
    p.sampling_period = ts;
    p.times = sample_times(horizon, fs);
    p.truth = trajectory(sys, x0, p.times);
    try {
        p.field = identify(sys, dict, ts, plan).field;
    } catch (const Error& e) {
        p.status = std::string(to_string(e.kind()));
        p.model = Matrix::Constant(p.truth.rows(), p.truth.cols(), std::numeric_limits<double>::quiet_NaN());
        p.max_gap = std::numeric_limits<double>::infinity();
        return p;
    }
    if (auto failure = sample_until_failure(field_system(p.field), x0, p.times, p.model)) {
        p.status = std::string(to_string(*failure));
        p.max_gap = std::numeric_limits<double>::infinity();
    } else {
        p.max_gap = (p.model - p.truth).cwiseAbs().maxCoeff();
    }
    return p;
}

struct SpectralRow {
    double sampling_period = 0.0;
    std::vector<double> error;
    std::string status = "ok";
};

inline std::vector<SpectralRow> run_spectral(const DynamicalSystem& sys, const Dictionary& dict,
                                             const std::vector<double>& grid, const SamplingPlan& plan, const Vector& x0,
                                             double fs = 100.0, std::size_t n_samples = 500, unsigned jobs = 1) {
    validate_grid(grid, "grid");
    std::vector<SpectralRow> rows(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t i) {
        rows[i].sampling_period = grid[i];
        try {
            const auto id = identify(sys, dict, grid[i], plan);
            rows[i].error = spectral_error(sys, id.field, x0, fs, n_samples);
            if (!std::isfinite(rows[i].error.front())) rows[i].status = "Divergence";
        } catch (const Error& e) {
            rows[i].error.assign(static_cast<std::size_t>(sys.dim), std::numeric_limits<double>::infinity());
            rows[i].status = std::string(to_string(e.kind()));
        }
    });
    return rows;
}

// ---------------------------------------------------------------------------
// CSV writers

inline void write_trajectory_csv(std::ostream& os, const std::vector<double>& times,
                                 const std::vector<std::pair<std::string, const Matrix*>>& blocks) {
    std::vector<std::string> header{"t"};
    for (const auto& [prefix, m] : blocks)
        for (Eigen::Index k = 0; k < m->cols(); ++k) header.push_back("x" + std::to_string(k + 1) + prefix);
    write_csv_row(os, header);
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<std::string> row{format_number(times[i])};
        for (const auto& [prefix, m] : blocks)
            for (Eigen::Index k = 0; k < m->cols(); ++k) row.push_back(format_number((*m)(static_cast<Eigen::Index>(i), k)));
        write_csv_row(os, row);
    }
}

inline void write_spectral_csv(std::ostream& os, const std::vector<SpectralRow>& rows, int dim) {
    std::vector<std::string> header{"T_s"};
    for (int k = 0; k < dim; ++k) header.push_back("error_x" + std::to_string(k + 1));
    header.push_back("status");
    write_csv_row(os, header);
    for (const auto& r : rows) {
        std::vector<std::string> row{format_number(r.sampling_period)};
        for (double e : r.error) row.push_back(format_number(e));
        row.push_back(r.status);
        write_csv_row(os, row);
    }
}

} // namespace kalias
