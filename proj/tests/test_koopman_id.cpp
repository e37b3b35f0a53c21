#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "kalias/koopman_id.hpp"

using namespace kalias;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Config;
}

Dictionary quadratic_span() {
    return custom_dictionary({parse_basis("x1", 2), parse_basis("x2", 2), parse_basis("x1^2", 2)});
}

Dictionary cubic_chain() {
    return custom_dictionary({parse_basis("x1", 2), parse_basis("x2", 2), parse_basis("x1^2", 2), parse_basis("x1^3", 2)});
}

Matrix spiral_generator() {
    Matrix l(2, 2);
    l << 0.1, -3, 3, 0.1;
    return l;
}

KoopmanEstimate identify(const DynamicalSystem& sys, const Dictionary& dict, double ts, std::size_t n_traj = 200,
                         std::size_t n_snap = 10) {
    const auto snaps = sample_snapshots(sys, n_traj, n_snap, ts, uniform_box(sys.dim, -1, 1), 42);
    return estimate_koopman(lift(snaps, dict));
}

bool contains(const Spectrum& s, Complex z, double tol) {
    for (const auto& v : s.eigenvalues)
        if (std::abs(v - z) < tol) return true;
    return false;
}

} // namespace

TEST(EstimateKoopman, InvariantTriangular) {
    const auto est = identify(builtin_system("sys4"), quadratic_span(), 0.5);
    EXPECT_LT(est.residual, 1e-8);
    EXPECT_TRUE(est.invariant());
    EXPECT_FALSE(est.underdetermined);
}

TEST(EstimateKoopman, IdentitySnapshots) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    LiftedData data;
    data.x_lift = Matrix::NullaryExpr(50, 4, [&] { return n01(rng); });
    data.y_lift = data.x_lift;
    data.sampling_period = 1.0;
    data.dictionary = build_dictionary(2, 2);
    const auto est = estimate_koopman(data);
    EXPECT_LT((est.u_hat - Matrix::Identity(4, 4)).norm(), 1e-12);
    EXPECT_LT(est.residual, 1e-14);
}

TEST(EstimateKoopman, LinearFlowLiftsExactly) {
    const auto est = identify(builtin_system("sys1"), build_dictionary(2, 1), 0.5);
    // Generator matrix in the column convention is the transpose of A.
    const Matrix expected = mat_exp(spiral_generator(), 0.5);
    EXPECT_LT((est.u_hat - expected).norm(), 1e-9);
}

TEST(EstimateKoopman, ConventionSelfConsistency) {
    // Data built directly from exp(L T) must give back L, fixing the orientation.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    const Matrix l = spiral_generator();
    LiftedData data;
    data.x_lift = Matrix::NullaryExpr(40, 2, [&] { return n01(rng); });
    data.y_lift = data.x_lift * mat_exp(l, 0.4);
    data.sampling_period = 0.4;
    data.dictionary = build_dictionary(2, 1);
    const auto g = estimate_generator(estimate_koopman(data));
    EXPECT_LT((g.l_hat - l).norm(), 1e-10);
}

TEST(TrueGenerator, TriangularQuadratic) {
    const auto g = true_generator_matrix(builtin_system("sys4"), quadratic_span());
    Matrix expected(3, 3);
    expected << -1, 0, 0, 0, -1, 0, 0, 1, -2;
    EXPECT_EQ(g.l_hat, expected);
    ASSERT_EQ(g.spectrum.size(), 3u);
    EXPECT_NEAR(g.spectrum.eigenvalues[0].real(), -1, 1e-12);
    EXPECT_NEAR(g.spectrum.eigenvalues[1].real(), -1, 1e-12);
    EXPECT_NEAR(g.spectrum.eigenvalues[2].real(), -2, 1e-12);
    EXPECT_EQ(g.provenance, Provenance::True);
}

TEST(TrueGenerator, MatchesStoredGenerators) {
    for (const char* name : {"sys1", "sys4", "rod"}) {
        const auto sys = builtin_system(name);
        const auto dict = custom_dictionary(sys.known_generator->basis);
        EXPECT_EQ(true_generator_matrix(sys, dict).l_hat, sys.known_generator->matrix) << name;
    }
}

TEST(TrueGenerator, SpiralSpectrum) {
    const auto g = true_generator_matrix(builtin_system("sys1"), build_dictionary(2, 1));
    EXPECT_TRUE(contains(g.spectrum, {0.1, 3}, 1e-12));
    EXPECT_TRUE(contains(g.spectrum, {0.1, -3}, 1e-12));
}

TEST(TrueGenerator, CubicLeavesSpan) {
    try {
        true_generator_matrix(builtin_system("sys2"), build_dictionary(2, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotInvariant);
        EXPECT_NE(std::string(e.what()).find("g_1"), std::string::npos) << e.what();
    }
}

TEST(TrueGenerator, NumericPathForRationalDictionary) {
    DynamicalSystem sys = parse_system("name = decay\ndim = 2\nterm = 1 : -1 * x1\n");
    const auto dict = custom_dictionary({parse_basis("x1", 2), parse_basis("x2", 2), parse_basis("x1/(1+x2^2)", 2)});
    const auto g = true_generator_matrix(sys, dict);
    Matrix expected = Matrix::Zero(3, 3);
    expected(0, 0) = -1;
    expected(2, 2) = -1;
    EXPECT_LT((g.l_hat - expected).norm(), 1e-10);
    EXPECT_EQ(kind_of([] { true_generator_matrix(builtin_system("sys5"), build_dictionary(2, 1, false, 2)); }),
              ErrorKind::NotInvariant);
}

TEST(EstimateGenerator, RoundTripInsideStrip) {
    const auto g = estimate_generator(identify(builtin_system("sys1"), build_dictionary(2, 1), 0.5));
    EXPECT_LT((g.l_hat - spiral_generator()).norm(), 1e-8);
    EXPECT_EQ(g.provenance, Provenance::Identified);
}

TEST(EstimateGenerator, BranchWrapAboveStrip) {
    const auto g = estimate_generator(identify(builtin_system("sys1"), build_dictionary(2, 1), 1.1));
    const double wrapped = 3.0 - 2.0 * std::numbers::pi / 1.1;
    EXPECT_TRUE(contains(g.spectrum, {0.1, wrapped}, 1e-8));
    EXPECT_TRUE(contains(g.spectrum, {0.1, -wrapped}, 1e-8));
    EXPECT_GT((g.l_hat - spiral_generator()).norm(), 1.0);
    EXPECT_NEAR(wrapped, -2.7120, 1e-4);
}

TEST(EstimateGenerator, IdentityGivesZero) {
    KoopmanEstimate u;
    u.u_hat = Matrix::Identity(3, 3);
    u.sampling_period = 0.7;
    u.dictionary = quadratic_span();
    EXPECT_LT(estimate_generator(u).l_hat.norm(), 1e-15);
}

TEST(EstimateGenerator, StripCertificate) {
    for (double ts : {0.1, 0.5, 0.9, 1.1, 1.7, 2.5}) {
        const auto g = estimate_generator(identify(builtin_system("sys1"), build_dictionary(2, 1), ts, 50, 5));
        EXPECT_LT(g.spectrum.max_abs_imag, std::numbers::pi / ts) << ts;
        EXPECT_LT(relative_frobenius(mat_exp(g.l_hat, ts), identify(builtin_system("sys1"), build_dictionary(2, 1), ts, 50, 5).u_hat), 1e-8);
    }
}

TEST(RecoverField, TriangularCoefficients) {
    const auto w = recover_field(true_generator_matrix(builtin_system("sys4"), quadratic_span()));
    Matrix expected(2, 3);
    expected << -1, 0, 0, 0, -1, 1;
    EXPECT_EQ(w.w, expected);
    EXPECT_EQ(w.w, field_coefficients(builtin_system("sys4"), quadratic_span()).w);
}

TEST(RecoverField, ZeroGenerator) {
    GeneratorEstimate g;
    g.dictionary = build_dictionary(2, 2);
    g.l_hat = Matrix::Zero(5, 5);
    EXPECT_EQ(recover_field(g).w, Matrix::Zero(2, 5));
}

TEST(RecoverField, IdentifiedSpiral) {
    const auto w = recover_field(estimate_generator(identify(builtin_system("sys1"), build_dictionary(2, 1), 0.5)));
    Matrix expected(2, 2);
    expected << 0.1, 3, -3, 0.1;
    EXPECT_LT((w.w - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RecoverField, ReconstructionIdentity) {
    struct Case {
        const char* sys;
        Dictionary dict;
    };
    const std::vector<Case> cases = {{"sys1", build_dictionary(2, 1)},
                                     {"sys1", build_dictionary(2, 3, true)},
                                     {"sys4", quadratic_span()},
                                     {"sys4", cubic_chain()}};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2, 2);
    for (const auto& c : cases) {
        const auto sys = builtin_system(c.sys);
        const auto w = recover_field(true_generator_matrix(sys, c.dict));
        const auto rebuilt = field_system(w);
        for (int p = 0; p < 100; ++p) {
            Vector x(2);
            x << u(rng), u(rng);
            EXPECT_LT((eval_field(rebuilt, x) - eval_field(sys, x)).norm(), 1e-9) << c.sys << " " << c.dict.label;
        }
    }
}

TEST(FieldCoefficients, RequiresTermsInDictionary) {
    const auto w = field_coefficients(builtin_system("sys5"), build_dictionary(2, 1, false, 2));
    const auto& d = w.dictionary;
    EXPECT_EQ(w.w(0, d.index_of(parse_basis("x2/(1+x2^2)", 2))), 4.0);
    EXPECT_EQ(w.w(1, d.index_of(parse_basis("x1/(1+x2^2)", 2))), -4.0);
    EXPECT_EQ(kind_of([] { field_coefficients(builtin_system("sys2"), build_dictionary(2, 2)); }), ErrorKind::NotInvariant);
}

TEST(PipelineExactness, InvariantCases) {
    struct Case {
        const char* sys;
        Dictionary dict;
        double ts;
    };
    const std::vector<Case> cases = {{"sys1", build_dictionary(2, 1), 0.9},
                                     {"sys1", build_dictionary(2, 2), 0.3},
                                     {"sys4", quadratic_span(), 2.8},
                                     {"sys4", cubic_chain(), 1.5}};
    for (const auto& c : cases) {
        const auto sys = builtin_system(c.sys);
        const auto truth = true_generator_matrix(sys, c.dict);
        ASSERT_LT(c.ts, std::numbers::pi / std::max(truth.spectrum.max_abs_imag, 1e-300));
        const auto g = estimate_generator(identify(sys, c.dict, c.ts));
        EXPECT_LT(relative_frobenius(g.l_hat, truth.l_hat), 1e-6) << c.sys << " " << c.dict.label;
    }
}

TEST(SpectrumSums, SpiralProducts) {
    const auto g = estimate_generator(identify(builtin_system("sys1"), build_dictionary(2, 2), 0.1));
    EXPECT_TRUE(spectrum_contains_sums(g, {{0.1, 3}, {0.1, -3}}, 1e-5));
    EXPECT_TRUE(contains(g.spectrum, {0.2, 6}, 1e-5));
    EXPECT_TRUE(contains(g.spectrum, {0.2, 0}, 1e-5));
}

TEST(SpectrumSums, TriangularAndVacuous) {
    const auto g = true_generator_matrix(builtin_system("sys4"), quadratic_span());
    EXPECT_TRUE(spectrum_contains_sums(g, {{-1, 0}}, 1e-9));
    EXPECT_FALSE(spectrum_contains_sums(g, {{-1, 0}, {-3, 0}}, 1e-9));
    EXPECT_TRUE(spectrum_contains_sums(g, {}, 1e-9));
}

TEST(Serialization, CsvLayout) {
    const auto g = true_generator_matrix(builtin_system("sys4"), quadratic_span());
    std::ostringstream os;
    write_generator_csv(os, g);
    EXPECT_NE(os.str().find("basis,x1,x2,x1^2\n"), std::string::npos) << os.str();
    EXPECT_NE(os.str().find("x1^2,0,1,-2\n"), std::string::npos) << os.str();
    std::ostringstream ws;
    write_field_csv(ws, recover_field(g));
    EXPECT_NE(ws.str().find("f2,0,-1,1\n"), std::string::npos) << ws.str();
}
