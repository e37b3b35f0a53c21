#pragma once

// Benchmark vector fields, the numerical flow map S^t and equidistant
// snapshot sampling.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kalias/basis.hpp"
#include "kalias/keyvalue.hpp"
#include "kalias/linalg.hpp"
#include "kalias/parallel.hpp"

namespace kalias {

struct FieldTerm {
    double coefficient = 0.0;
    BasisFn basis;
};

/// Exact generator matrix on a stated basis, in the column convention of
/// koopman_id.hpp (column j holds the expansion of f . grad g_j).
struct KnownGenerator {
    std::vector<BasisFn> basis;
    Matrix matrix;
};

/// Vector field x' = f(x) with f_k = sum of coefficient * basis terms.
struct DynamicalSystem {
    std::string name;
    int dim = 0;
    std::vector<std::vector<FieldTerm>> components;
    std::optional<KnownGenerator> known_generator;
    std::optional<std::vector<Complex>> known_principal_eigenvalues;
    /// Fixed point whose Jacobian spectrum equals the principal eigenvalues.
    std::optional<Vector> fixed_point;

    bool is_polynomial() const {
        for (const auto& comp : components)
            for (const auto& t : comp)
                if (!t.basis.is_monomial()) return false;
        return true;
    }
};

inline void eval_field_into(const DynamicalSystem& sys, const Vector& x, Vector& out) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (int k = 0; k < sys.dim; ++k) {
        double v = 0.0;
        for (const auto& term : sys.components[static_cast<std::size_t>(k)]) {
            v += term.coefficient * term.basis.eval(xs);
        }
        out(k) = v;
    }
}

inline Vector eval_field(const DynamicalSystem& sys, const Vector& x) {
    if (x.size() != sys.dim) {
        throw Error(ErrorKind::ShapeMismatch, "state has " + std::to_string(x.size()) +
                                                  " entries, system dimension is " +
                                                  std::to_string(sys.dim));
    }
    Vector out(sys.dim);
    eval_field_into(sys, x, out);
    return out;
}

/// Analytic Jacobian, row k = gradient of f_k.
inline Matrix jacobian(const DynamicalSystem& sys, const Vector& x) {
    if (x.size() != sys.dim) throw Error(ErrorKind::ShapeMismatch, "jacobian: state size mismatch");
    const auto n = static_cast<std::size_t>(sys.dim);
    const std::span<const double> xs(x.data(), n);
    Matrix jac = Matrix::Zero(sys.dim, sys.dim);
    std::vector<double> grad(n);
    for (int k = 0; k < sys.dim; ++k) {
        for (const auto& term : sys.components[static_cast<std::size_t>(k)]) {
            term.basis.gradient(xs, grad);
            for (std::size_t j = 0; j < n; ++j) jac(k, static_cast<Eigen::Index>(j)) += term.coefficient * grad[j];
        }
    }
    return jac;
}

struct FlowOptions {
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
    double divergence_norm = 1e6;
    std::size_t max_steps = 100'000'000;
};

/// Adaptive Dormand-Prince 5(4) stepper. `Field` is callable as
/// field(const Vector& x, Vector& dxdt). State is kept between calls to
/// advance_to so consecutive samples reuse the step-size history.
template <typename Field>
class DormandPrince {
public:
    DormandPrince(Field field, Vector x0, FlowOptions options = {})
        : field_(std::move(field)), x_(std::move(x0)), opt_(options) {
        const auto n = x_.size();
        k1_.resize(n); k2_.resize(n); k3_.resize(n); k4_.resize(n);
        k5_.resize(n); k6_.resize(n); k7_.resize(n); tmp_.resize(n); xnew_.resize(n);
        if (!x_.allFinite()) throw Error(ErrorKind::NonFinite, "initial state is not finite");
        field_(x_, k1_);
    }

    double time() const { return t_; }
    const Vector& state() const { return x_; }
    std::size_t steps() const { return steps_; }

    void advance_to(double t_end) {
        if (t_end < t_) throw Error(ErrorKind::BadParams, "flow cannot run backwards in time");
        if (t_end == t_) return;
        if (h_ <= 0.0) h_ = initial_step(t_end - t_);
        while (t_ < t_end) {
            const double remaining = t_end - t_;
            const bool last = h_ >= remaining;
            const double h = last ? remaining : h_;
            const double err = attempt(h);
            if (!(err <= 1.0)) {
                const double shrink = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
                h_ = h * shrink;
                if (h_ < 1e-14 * std::max(1.0, std::abs(t_))) {
                    throw Error(ErrorKind::Divergence, "step size underflow at t=" + std::to_string(t_));
                }
                continue;
            }
            t_ = last ? t_end : t_ + h;
            x_.swap(xnew_);
            k1_.swap(k7_);
            if (++steps_ > opt_.max_steps) {
                throw Error(ErrorKind::Divergence, "step budget exhausted at t=" + std::to_string(t_));
            }
            if (!x_.allFinite() || x_.norm() > opt_.divergence_norm) {
                throw Error(ErrorKind::Divergence, "state norm exceeded " +
                                                       std::to_string(opt_.divergence_norm) +
                                                       " at t=" + std::to_string(t_));
            }
            const double grow = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
            // A step clipped to hit t_end says nothing about the natural size.
            if (!last || h >= h_) h_ = h * grow;
        }
    }

private:
    double scaled_norm(const Vector& v, const Vector& a, const Vector& b) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double sc = opt_.abs_tol + opt_.rel_tol * std::max(std::abs(a(i)), std::abs(b(i)));
            const double r = v(i) / sc;
            acc += r * r;
        }
        return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
    }

    double initial_step(double span) {
        const double d0 = scaled_norm(x_, x_, x_);
        const double d1 = scaled_norm(k1_, x_, x_);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        tmp_ = x_ + h0 * k1_;
        field_(tmp_, k2_);
        const double d2 = scaled_norm(k2_ - k1_, x_, x_) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        return std::min(100.0 * h0, h1);
    }

    // One trial step of size h from (t_, x_); result in xnew_/k7_.
    double attempt(double h) {
        constexpr double a21 = 1.0 / 5;
        constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                         a54 = -212.0 / 729;
        constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                         a64 = 49.0 / 176, a65 = -5103.0 / 18656;
        constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                         b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                         e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        try {
            tmp_ = x_ + h * a21 * k1_;
            field_(tmp_, k2_);
            tmp_ = x_ + h * (a31 * k1_ + a32 * k2_);
            field_(tmp_, k3_);
            tmp_ = x_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
            field_(tmp_, k4_);
            tmp_ = x_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
            field_(tmp_, k5_);
            tmp_ = x_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
            field_(tmp_, k6_);
            xnew_ = x_ + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
            field_(xnew_, k7_);
        } catch (const Error& e) {
            // A stage landing on a pole is treated as a failed step.
            if (e.kind() != ErrorKind::PoleHit) throw;
            return std::numeric_limits<double>::infinity();
        }
        if (!xnew_.allFinite() || !k7_.allFinite()) return std::numeric_limits<double>::infinity();
        tmp_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
        return scaled_norm(tmp_, x_, xnew_);
    }

    Field field_;
    Vector x_;
    FlowOptions opt_;
    double t_ = 0.0;
    double h_ = 0.0;
    std::size_t steps_ = 0;
    Vector k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, xnew_;
};

inline auto field_of(const DynamicalSystem& sys) {
    return [&sys](const Vector& x, Vector& dx) { eval_field_into(sys, x, dx); };
}

/// x(t) = S^t(x0).
inline Vector flow(const DynamicalSystem& sys, const Vector& x0, double t, FlowOptions options = {}) {
    if (x0.size() != sys.dim) throw Error(ErrorKind::ShapeMismatch, "flow: state size mismatch");
    if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::BadParams, "flow needs finite t >= 0");
    DormandPrince stepper(field_of(sys), x0, options);
    stepper.advance_to(t);
    return stepper.state();
}

/// States at the given nondecreasing times (>= 0), one row per time.
inline Matrix trajectory(const DynamicalSystem& sys, const Vector& x0, const std::vector<double>& times,
                         FlowOptions options = {}) {
    if (x0.size() != sys.dim) throw Error(ErrorKind::ShapeMismatch, "trajectory: state size mismatch");
    Matrix out(static_cast<Eigen::Index>(times.size()), sys.dim);
    DormandPrince stepper(field_of(sys), x0, options);
    for (std::size_t i = 0; i < times.size(); ++i) {
        stepper.advance_to(times[i]);
        out.row(static_cast<Eigen::Index>(i)) = stepper.state().transpose();
    }
    return out;
}

using InitBox = std::vector<std::pair<double, double>>;

inline InitBox uniform_box(int dim, double lo, double hi) {
    return InitBox(static_cast<std::size_t>(dim), {lo, hi});
}

/// Paired samples (pre[i], post[i]) with post[i] = S^{T_s}(pre[i]); rows are
/// ordered trajectory-major.
struct SnapshotSet {
    Matrix pre;
    Matrix post;
    double sampling_period = 0.0;
    std::uint64_t seed = 0;
    InitBox init_box;
    std::size_t n_traj = 0;
    std::size_t n_snap = 0;

    Eigen::Index size() const { return pre.rows(); }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based uniform draw in [0, 1): a pure function of
/// (seed, stream, counter), so any trajectory can be generated independently.
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const std::uint64_t key = detail::splitmix64(seed ^ detail::splitmix64(stream * 0xD1B54A32D192ED03ull));
    const std::uint64_t bits = detail::splitmix64(key + counter * 0x9E3779B97F4A7C15ull);
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline SnapshotSet sample_snapshots(const DynamicalSystem& sys, std::size_t n_traj, std::size_t n_snap,
                                    double sampling_period, const InitBox& init_box, std::uint64_t seed,
                                    unsigned jobs = 1, FlowOptions options = {}) {
    if (!(sampling_period > 0.0) || !std::isfinite(sampling_period)) {
        throw Error(ErrorKind::BadParams, "sampling period must be positive");
    }
    if (init_box.size() != static_cast<std::size_t>(sys.dim)) {
        throw Error(ErrorKind::ShapeMismatch, "init box dimension does not match the system");
    }
    for (const auto& [lo, hi] : init_box) {
        if (!(hi > lo)) throw Error(ErrorKind::BadParams, "init box interval is degenerate");
    }
    SnapshotSet out;
    const auto rows = static_cast<Eigen::Index>(n_traj * n_snap);
    out.pre.resize(rows, sys.dim);
    out.post.resize(rows, sys.dim);
    out.sampling_period = sampling_period;
    out.seed = seed;
    out.init_box = init_box;
    out.n_traj = n_traj;
    out.n_snap = n_snap;

    parallel_for(n_traj, jobs, [&](std::size_t traj) {
        Vector x0(sys.dim);
        for (int k = 0; k < sys.dim; ++k) {
            const auto& [lo, hi] = init_box[static_cast<std::size_t>(k)];
            x0(k) = lo + (hi - lo) * counter_uniform(seed, traj, static_cast<std::uint64_t>(k));
        }
        try {
            DormandPrince stepper(field_of(sys), x0, options);
            for (std::size_t s = 0; s < n_snap; ++s) {
                const auto row = static_cast<Eigen::Index>(traj * n_snap + s);
                out.pre.row(row) = stepper.state().transpose();
                stepper.advance_to(static_cast<double>(s + 1) * sampling_period);
                out.post.row(row) = stepper.state().transpose();
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "trajectory " + std::to_string(traj) + ": " + e.what());
        }
    });
    return out;
}

namespace detail {

inline FieldTerm term(double c, int dim, std::string_view label) {
    return FieldTerm{c, parse_basis(label, dim)};
}

inline Matrix column_generator(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

inline DynamicalSystem linear_rotation(std::string name, double a, double omega) {
    DynamicalSystem sys;
    sys.name = std::move(name);
    sys.dim = 2;
    sys.components = {{term(a, 2, "x1"), term(omega, 2, "x2")},
                      {term(-omega, 2, "x1"), term(a, 2, "x2")}};
    sys.known_generator = KnownGenerator{{parse_basis("x1", 2), parse_basis("x2", 2)},
                                         column_generator({{a, -omega}, {omega, a}})};
    sys.known_principal_eigenvalues = std::vector<Complex>{{a, omega}, {a, -omega}};
    sys.fixed_point = Vector::Zero(2);
    return sys;
}

} // namespace detail

inline const std::vector<std::string>& builtin_system_names() {
    static const std::vector<std::string> names = {"rod",         "linear-spiral",       "fixed-point-cubic",
                                                   "limit-cycle", "real-eig-triangular", "nonpoly-rational"};
    return names;
}

/// Canonical name for a builtin (accepts the sys1..sys5 shorthands).
inline std::string canonical_system_name(const std::string& name) {
    static const std::map<std::string, std::string> aliases = {
        {"sys1", "linear-spiral"},       {"sys2", "fixed-point-cubic"}, {"sys3", "limit-cycle"},
        {"sys4", "real-eig-triangular"}, {"sys5", "nonpoly-rational"}};
    if (auto it = aliases.find(name); it != aliases.end()) return it->second;
    return name;
}

inline DynamicalSystem builtin_system(const std::string& name_in,
                                      const std::map<std::string, double>& params = {}) {
    using detail::term;
    const std::string name = canonical_system_name(name_in);
    const auto& names = builtin_system_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        throw Error(ErrorKind::UnknownSystem, "no builtin system named '" + name_in + "'");
    }
    for (const auto& [key, value] : params) {
        if (name != "rod" || (key != "a" && key != "omega")) {
            throw Error(ErrorKind::BadParams, "system '" + name + "' has no parameter '" + key + "'");
        }
        if (!std::isfinite(value)) throw Error(ErrorKind::BadParams, "parameter '" + key + "' is not finite");
    }
    if (name == "rod") {
        const double a = params.contains("a") ? params.at("a") : 0.1;
        const double omega = params.contains("omega") ? params.at("omega") : 3.0;
        return detail::linear_rotation("rod", a, omega);
    }
    if (name == "linear-spiral") return detail::linear_rotation(name, 0.1, 3.0);

    DynamicalSystem sys;
    sys.name = name;
    sys.dim = 2;
    if (name == "fixed-point-cubic") {
        sys.components = {{term(-3, 2, "x2"), term(-1, 2, "x1^3"), term(-1, 2, "x1*x2^2")},
                          {term(3, 2, "x1"), term(-1, 2, "x1^2*x2"), term(-1, 2, "x2^3")}};
        sys.known_principal_eigenvalues = std::vector<Complex>{{0, 3}, {0, -3}};
        sys.fixed_point = Vector::Zero(2);
    } else if (name == "limit-cycle") {
        sys.components = {{term(3, 2, "x2"), term(-1, 2, "x1^3"), term(-1, 2, "x1*x2^2"), term(1, 2, "x1")},
                          {term(-3, 2, "x1"), term(-1, 2, "x1^2*x2"), term(-1, 2, "x2^3"), term(1, 2, "x2")}};
        // Floquet exponent of the r = 1 cycle plus the rotation pair.
        sys.known_principal_eigenvalues = std::vector<Complex>{{-2, 0}, {0, 3}, {0, -3}};
    } else if (name == "real-eig-triangular") {
        sys.components = {{term(-1, 2, "x1")}, {term(1, 2, "x1^2"), term(-1, 2, "x2")}};
        sys.known_generator =
            KnownGenerator{{parse_basis("x1", 2), parse_basis("x2", 2), parse_basis("x1^2", 2)},
                           detail::column_generator({{-1, 0, 0}, {0, -1, 0}, {0, 1, -2}})};
        sys.known_principal_eigenvalues = std::vector<Complex>{{-1, 0}, {-2, 0}};
        sys.fixed_point = Vector::Zero(2);
    } else { // nonpoly-rational
        sys.components = {{term(-1, 2, "x1"), term(4, 2, "x2/(1+x2^2)")},
                          {term(-1, 2, "x2"), term(-4, 2, "x1/(1+x2^2)")}};
        sys.known_principal_eigenvalues = std::vector<Complex>{{-1, 4}, {-1, -4}};
        sys.fixed_point = Vector::Zero(2);
    }
    return sys;
}

/// Reads a system definition:
///   name = my-system
///   dim = 2
///   term = 1 : 0.1 * x1          (component : coefficient * basis)
///   term = 2 : 4 * x1/(1+x2^2)
///   eigenvalues = 0.1+3i, 0.1-3i (optional)
///   fixed_point = 0, 0           (optional)
inline DynamicalSystem parse_system(std::string_view text) {
    DynamicalSystem sys;
    const auto entries = parse_key_values(text);
    for (const auto& kv : entries) {
        if (kv.key == "dim") {
            const long long d = parse_integer(kv);
            if (d < 1 || d > 64) kv.fail("dimension must be in [1, 64]");
            sys.dim = static_cast<int>(d);
        }
    }
    if (sys.dim == 0) throw Error(ErrorKind::Config, "system file is missing 'dim'");
    sys.components.resize(static_cast<std::size_t>(sys.dim));
    for (const auto& kv : entries) {
        if (kv.key == "dim") continue;
        if (kv.key == "name") {
            sys.name = kv.value;
        } else if (kv.key == "term") {
            const auto colon = kv.value.find(':');
            const auto star = kv.value.find('*', colon == std::string::npos ? 0 : colon);
            if (colon == std::string::npos || star == std::string::npos) {
                kv.fail("expected 'component : coefficient * basis'");
            }
            KeyValue comp_kv = kv;
            comp_kv.value = std::string(detail::trim(std::string_view(kv.value).substr(0, colon)));
            const long long comp = parse_integer(comp_kv);
            if (comp < 1 || comp > sys.dim) kv.fail("component index out of range");
            const double coef =
                parse_double_or(kv, std::string_view(kv.value).substr(colon + 1, star - colon - 1));
            try {
                sys.components[static_cast<std::size_t>(comp - 1)].push_back(
                    FieldTerm{coef, parse_basis(std::string_view(kv.value).substr(star + 1), sys.dim)});
            } catch (const Error& e) {
                kv.fail(e.what());
            }
        } else if (kv.key == "eigenvalues") {
            sys.known_principal_eigenvalues = parse_complex_list(kv);
        } else if (kv.key == "fixed_point") {
            const auto v = parse_doubles(kv);
            if (static_cast<int>(v.size()) != sys.dim) kv.fail("fixed point has wrong dimension");
            sys.fixed_point = Eigen::Map<const Vector>(v.data(), sys.dim);
        } else {
            kv.fail("unknown key");
        }
    }
    if (sys.name.empty()) sys.name = "custom";
    return sys;
}

} // namespace kalias
