#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "kalias/metrics.hpp"

using namespace kalias;

namespace {

constexpr double pi = std::numbers::pi;

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Config;
}

// O(n^2) transform evaluated in long double, used as the oracle.
CVector naive_dft(const Vector& x) {
    const auto n = x.size();
    CVector out(n);
    for (Eigen::Index q = 0; q < n; ++q) {
        std::complex<long double> acc = 0;
        for (Eigen::Index s = 0; s < n; ++s) {
            const long double angle = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((q * s) % n) /
                                      static_cast<long double>(n);
            acc += static_cast<long double>(x(s)) * std::complex<long double>(std::cos(angle), std::sin(angle));
        }
        out(q) = Complex(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
    }
    return out;
}

Vector random_signal(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> n01;
    return Vector::NullaryExpr(n, [&] { return n01(rng); });
}

FieldCoefficients identified_spiral(double ts) {
    const auto sys = builtin_system("sys1");
    const auto dict = build_dictionary(2, 1);
    const auto snaps = sample_snapshots(sys, 200, 10, ts, uniform_box(2, -1, 1), 42);
    return recover_field(estimate_generator(estimate_koopman(lift(snaps, dict))));
}

} // namespace

TEST(Nrmse, EqualIsZero) {
    Matrix w(2, 3);
    w << 1, 0, -2, 0.5, 3, 0;
    EXPECT_EQ(nrmse(w, w), 0.0);
}

TEST(Nrmse, HandExample) {
    Matrix w(1, 2), w_hat(1, 2);
    w << 2, 0;
    w_hat << 2, 1;
    EXPECT_NEAR(rmse(w_hat, w), std::sqrt(0.5), 1e-15);
    EXPECT_NEAR(nrmse(w_hat, w), std::sqrt(0.5) / 2, 1e-15);
    EXPECT_NEAR(nrmse(w_hat, w), 0.3536, 1e-4);
}

TEST(Nrmse, ThresholdedNormalizer) {
    Matrix w(1, 3), w_hat(1, 3);
    w << 4, 1e-13, 0;
    w_hat << 4, 0, 3;
    // Only the 4 counts toward |w|.
    EXPECT_NEAR(nrmse(w_hat, w), std::sqrt((9.0 + 1e-26) / 3) / 4, 1e-15);
}

TEST(Nrmse, Errors) {
    EXPECT_EQ(kind_of([] { nrmse(Matrix::Ones(1, 2), Matrix::Zero(1, 2)); }), ErrorKind::AllZeroTruth);
    EXPECT_EQ(kind_of([] { nrmse(Matrix::Ones(1, 2), Matrix::Ones(2, 1)); }), ErrorKind::ShapeMismatch);
    FieldCoefficients a{Matrix::Ones(2, 2), build_dictionary(2, 1)};
    FieldCoefficients b{Matrix::Ones(2, 2), custom_dictionary({parse_basis("x2", 2), parse_basis("x1", 2)})};
    EXPECT_EQ(kind_of([&] { nrmse(a, b); }), ErrorKind::ShapeMismatch);
}

TEST(Nrmse, ScaleCovariance) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix w = Matrix::NullaryExpr(2, 6, [&] { return random_signal(rng, 1)(0); });
        const Matrix w_hat = w + 0.1 * Matrix::NullaryExpr(2, 6, [&] { return random_signal(rng, 1)(0); });
        const double base = nrmse(w_hat, w);
        for (double c : {0.01, 3.0, 1e4}) EXPECT_NEAR(nrmse(c * w_hat, c * w), base, 1e-12 * base);
    }
}

TEST(Nrmse, ZeroOnlyWhenEqual) {
    Matrix w(2, 2);
    w << 1, 2, 3, 4;
    Matrix w_hat = w;
    w_hat(1, 0) += 1e-15;
    EXPECT_GT(nrmse(w_hat, w), 0.0);
    EXPECT_LT(nrmse(w_hat, w), 1e-15);
}

TEST(Nrmse, IdentifiedSpiral) {
    const auto w_hat = identified_spiral(0.5);
    const auto w = field_coefficients(builtin_system("sys1"), w_hat.dictionary);
    EXPECT_LT(nrmse(w_hat, w), 1e-6);
}

TEST(Dft, Constant) {
    const CVector p = dft(Vector::Constant(4, 2.5));
    EXPECT_NEAR(std::abs(p(0) - Complex(10, 0)), 0, 1e-14);
    for (int q = 1; q < 4; ++q) EXPECT_LT(std::abs(p(q)), 1e-14);
}

TEST(Dft, Impulse) {
    Vector x = Vector::Zero(7);
    x(0) = 1;
    const CVector p = dft(x);
    for (int q = 0; q < 7; ++q) EXPECT_LT(std::abs(p(q) - Complex(1, 0)), 1e-14);
}

TEST(Dft, CosinePeaks) {
    Vector x(500);
    for (int s = 0; s < 500; ++s) x(s) = std::cos(2 * pi * 5 * s / 100.0);
    const CVector p = dft(x);
    for (int q = 0; q < 500; ++q) {
        if (q == 25 || q == 475) {
            EXPECT_NEAR(std::abs(p(q)), 250.0, 1e-9);
        } else {
            EXPECT_LT(std::abs(p(q)), 1e-9) << q;
        }
    }
}

TEST(Dft, MatchesNaiveOracle) {
    std::mt19937_64 rng(12);
    for (Eigen::Index n : {1, 2, 3, 8, 12, 97, 250, 500, 509}) {
        const Vector x = random_signal(rng, n);
        EXPECT_LT((dft(x) - naive_dft(x)).norm(), 1e-10 * std::max(1.0, x.norm() * std::sqrt(double(n)))) << n;
    }
}

TEST(Dft, InverseAndParseval) {
    std::mt19937_64 rng(13);
    for (Eigen::Index n : {5, 64, 500, 1000}) {
        const Vector x = random_signal(rng, n);
        const CVector p = dft(x);
        const CVector back = inverse_dft(p);
        EXPECT_LT((back.real() - x).norm(), 1e-10);
        EXPECT_LT(back.imag().norm(), 1e-10);
        EXPECT_NEAR(x.squaredNorm(), p.squaredNorm() / static_cast<double>(n), 1e-10 * x.squaredNorm());
    }
}

TEST(SpectralError, IdenticalField) {
    const auto sys = builtin_system("sys2");
    const auto dict = build_dictionary(2, 3);
    const auto err = spectral_error(sys, field_coefficients(sys, dict), (Vector(2) << 0.5, 0.5).finished());
    ASSERT_EQ(err.size(), 2u);
    for (double e : err) EXPECT_LT(e, 1e-12);
}

TEST(SpectralError, StepAcrossCriticalPeriod) {
    const auto sys = builtin_system("sys1");
    const Vector x0 = (Vector(2) << 0.5, 0.5).finished();
    const auto below = spectral_error(sys, identified_spiral(0.5), x0);
    const auto above = spectral_error(sys, identified_spiral(1.1), x0);
    for (int k = 0; k < 2; ++k) {
        EXPECT_LT(below[k], 1e-6);
        EXPECT_GT(above[k], 1e3 * below[k]);
    }
}

TEST(SpectralError, DivergenceIsInfinite) {
    const auto truth = builtin_system("sys1");
    const auto blowup = parse_system("name = blowup\ndim = 2\nterm = 1 : 1 * x1^3\nterm = 2 : 1 * x2^3\n");
    const auto err = spectral_error(truth, blowup, (Vector(2) << 1.5, 1.5).finished());
    for (double e : err) EXPECT_EQ(e, std::numeric_limits<double>::infinity());
}

TEST(SweepRowCsv, LayoutAndSentinels) {
    std::ostringstream os;
    write_sweep_csv(os, {make_sweep_row(0.5, 1e-8, 3, 1e-12, "m=1", false),
                         failed_sweep_row(1.5, "m=1", true, ErrorKind::BranchCut)});
    EXPECT_EQ(os.str(), "T_s,nrmse,nrmse_quarter,max_abs_imag,residual,dictionary,above_critical,reflected_modes,status\n"
                        "0.5,1e-08,0.01,3,1e-12,m=1,0,0,ok\n"
                        "1.5,inf,inf,nan,nan,m=1,1,0,BranchCut\n");
    EXPECT_NEAR(make_sweep_row(1, 16, 0, 0, "", false).nrmse_quarter, 2.0, 1e-15);
}
