#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kalias/harness.hpp"

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
    return ErrorKind::BadParams;
}

std::string message_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    ADD_FAILURE() << "no error raised";
    return {};
}

class TempDir {
public:
    TempDir() {
        path_ = std::filesystem::temp_directory_path() /
                ("kalias_harness_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::string write(const std::string& name, const std::string& text) const {
        const auto p = path_ / name;
        std::ofstream(p) << text;
        return p.string();
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

SamplingPlan plan_200x10(std::uint64_t seed = 42) {
    return {200, 10, uniform_box(2, -1.0, 1.0), seed};
}

} // namespace

TEST(Grid, InclusiveAndRounded) {
    const auto g = make_grid(0.1, 0.3, 0.1);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[2], 0.3);
    EXPECT_EQ(make_grid(0.1, 2.8, 0.1).size(), 28u);
    EXPECT_EQ(make_grid(0.05, 2.8, 0.05).back(), 2.8);
    EXPECT_EQ(kind_of([] { make_grid(1, 0.5, 0.1); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { make_grid(0.1, 1, 0); }), ErrorKind::Config);
}

TEST(Grid, ParseForms) {
    EXPECT_EQ(parse_grid(KeyValue{1, "grid", "0.5:1.5:0.5"}), (std::vector<double>{0.5, 1.0, 1.5}));
    EXPECT_EQ(parse_grid(KeyValue{1, "grid", "0.5, 1.1"}), (std::vector<double>{0.5, 1.1}));
    EXPECT_EQ(kind_of([] { parse_grid(KeyValue{3, "grid", "0.5:1"}); }), ErrorKind::Config);
}

TEST(Config, SetAndDefaults) {
    ExperimentConfig cfg;
    EXPECT_EQ(cfg.system, "sys1");
    EXPECT_EQ(cfg.log_policy, LogPolicy::Strict);
    cfg.set("system", "sys3");
    cfg.set("param.mu", "2");
    cfg.set("dictionary", "m=7");
    cfg.set("dictionary", "m=10");
    cfg.set("init_box", "-1.5,1.5");
    cfg.set("seed", "7");
    cfg.set("jobs", "0");
    cfg.set("log_policy", "reflect");
    EXPECT_EQ(cfg.system_params.at("mu"), 2.0);
    EXPECT_EQ(cfg.dictionaries.size(), 2u);
    EXPECT_EQ(resolve_box(cfg, 2), uniform_box(2, -1.5, 1.5));
    EXPECT_EQ(cfg.require_seed(), 7u);
    EXPECT_EQ(cfg.jobs, 0u);
    EXPECT_EQ(cfg.log_policy, LogPolicy::Reflect);
    EXPECT_EQ(sampling_plan(cfg, 2).log_policy, LogPolicy::Reflect);
}

TEST(Config, Errors) {
    ExperimentConfig cfg;
    EXPECT_EQ(kind_of([&] { cfg.require_seed(); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { cfg.set("n_traj", "0"); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { cfg.set("seed", "-1"); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { cfg.set("init_box", "1,0"); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { cfg.set("log_policy", "lenient"); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([&] { cfg.set("colour", "red"); }), ErrorKind::Config);
    cfg.set("x0", "1,2,3");
    EXPECT_EQ(kind_of([&] { resolve_x0(cfg, 2); }), ErrorKind::Config);
}

TEST(Config, FileWithLineNumbersAndRelativePaths) {
    TempDir dir;
    dir.write("spiral.sys", "name = spiral\ndim = 2\nterm = 1 : 0.1 * x1\nterm = 1 : 3 * x2\n"
                            "term = 2 : -3 * x1\nterm = 2 : 0.1 * x2\n");
    const auto good = dir.write("good.cfg", "# sweep\nsystem_file = spiral.sys\nseed = 3\ngrid = 0.5:1.0:0.5\n");
    const auto cfg = ExperimentConfig::load(good);
    EXPECT_EQ(std::filesystem::path(cfg.system_file), dir.path() / "spiral.sys");
    EXPECT_EQ(resolve_system(cfg).name, "spiral");
    EXPECT_EQ(cfg.grid, (std::vector<double>{0.5, 1.0}));

    const auto bad = dir.write("bad.cfg", "seed = 3\n\nwidth = 4\n");
    const auto msg = message_of([&] { ExperimentConfig::load(bad); });
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("width"), std::string::npos) << msg;
    EXPECT_EQ(kind_of([&] { ExperimentConfig::load(bad); }), ErrorKind::Config);
}

TEST(CriticalPeriodReport, BuiltinSystems) {
    ExperimentConfig cfg;
    for (const auto& [name, expected] : std::vector<std::pair<std::string, double>>{
             {"sys1", pi / 3}, {"sys2", pi / 3}, {"sys3", pi / 3}, {"sys5", pi / 4}}) {
        cfg.system = name;
        EXPECT_NEAR(critical_period_report(cfg).verdict.critical_period, expected, 1e-12) << name;
    }
    cfg.system = "sys4";
    EXPECT_EQ(critical_period_report(cfg).verdict.critical_period, std::numeric_limits<double>::infinity());
}

TEST(CriticalPeriodReport, FromDictionaryAndSpectrumFile) {
    ExperimentConfig cfg;
    cfg.system = "sys1";
    cfg.dictionaries = {"m=2"};
    const auto r = critical_period_report(cfg);
    EXPECT_EQ(r.source, "dictionary");
    // Products of eigenfunctions reach 0.2 +- 6i.
    EXPECT_NEAR(r.verdict.critical_period, pi / 6, 1e-9);

    TempDir dir;
    ExperimentConfig file_cfg;
    file_cfg.spectrum_file = dir.write("eig.txt", "eigenvalues = -1+4i, -1-4i, -2\n");
    const auto f = critical_period_report(file_cfg);
    EXPECT_EQ(f.source, "spectrum-file");
    EXPECT_NEAR(f.verdict.critical_period, pi / 4, 1e-15);
}

TEST(Sweep, SpiralStepAtCriticalPeriod) {
    const auto sys = builtin_system("sys1");
    const auto dict = build_dictionary(2, 1);
    const auto rows = run_sweep(sys, {dict}, make_grid(0.1, 2.8, 0.1), plan_200x10());
    ASSERT_EQ(rows.size(), 28u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.above_critical, r.sampling_period >= pi / 3);
        if (r.sampling_period < pi / 3) {
            EXPECT_TRUE(r.ok());
            EXPECT_LT(r.nrmse, 1e-6) << r.sampling_period;
        } else if (r.sampling_period > pi / 3 && r.sampling_period < 2 * pi / 3) {
            EXPECT_GE(r.nrmse, 0.1) << r.sampling_period;
        }
        if (r.ok()) EXPECT_DOUBLE_EQ(r.nrmse_quarter, std::pow(r.nrmse, 0.25));
        // An exact recovery must come with an identified spectrum inside the strip.
        if (r.ok() && r.nrmse < 1e-6) EXPECT_LT(r.max_abs_imag, pi / r.sampling_period);
    }
}

TEST(Sweep, RationalSystemPeaksNearCriticalPeriod) {
    const auto sys = builtin_system("sys5");
    const auto dict = build_dictionary(2, 1, false, 2);
    auto plan = plan_200x10(1);
    plan.log_policy = LogPolicy::Reflect;
    const auto rows = run_sweep(sys, {dict}, make_grid(0.1, 2.1, 0.05), plan);
    const auto peak = nrmse_peak(rows, dict.label);
    ASSERT_TRUE(peak);
    EXPECT_NEAR(*peak, pi / 4, 0.15);
}

TEST(Sweep, RealSpectrumStaysExact) {
    const auto sys = builtin_system("sys4");
    const auto dict = custom_dictionary({parse_basis("x1", 2), parse_basis("x2", 2), parse_basis("x1^2", 2)});
    const auto rows = run_sweep(sys, {dict}, {0.5, 1.1, 2.8}, plan_200x10());
    for (const auto& r : rows) {
        EXPECT_TRUE(r.ok()) << r.status;
        EXPECT_LT(r.nrmse, 1e-6) << r.sampling_period;
        EXPECT_FALSE(r.above_critical);
    }
}

TEST(Sweep, DeterministicAcrossJobCounts) {
    const auto sys = builtin_system("sys2");
    const std::vector<Dictionary> dicts = {build_dictionary(2, 3), build_dictionary(2, 5)};
    const auto grid = make_grid(0.2, 1.4, 0.3);
    const auto a = run_sweep(sys, dicts, grid, plan_200x10(9), 1);
    const auto b = run_sweep(sys, dicts, grid, plan_200x10(9), 2);
    std::ostringstream sa, sb;
    write_sweep_csv(sa, a);
    write_sweep_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Sweep, UnrepresentableDictionaryIsConfigError) {
    const auto sys = builtin_system("sys2");
    const auto dict = custom_dictionary({parse_basis("x1", 2), parse_basis("x2", 2)});
    EXPECT_EQ(kind_of([&] { run_sweep(sys, {dict}, {0.5}, plan_200x10()); }), ErrorKind::Config);
}

TEST(Sweep, LogPolicyOnSpuriousNegativeModes) {
    // A degree-7 dictionary is not invariant for the cubic fixed point, and
    // the projected U_hat picks up small negative real eigenvalues.
    const auto sys = builtin_system("sys2");
    const auto dict = build_dictionary(2, 7);
    const auto grid = make_grid(0.1, 0.8, 0.05);
    auto strict_plan = plan_200x10(1);
    auto reflect_plan = strict_plan;
    reflect_plan.log_policy = LogPolicy::Reflect;
    const auto strict = run_sweep(sys, {dict}, grid, strict_plan);
    const auto reflect = run_sweep(sys, {dict}, grid, reflect_plan);
    int branch_cuts = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        EXPECT_TRUE(reflect[i].ok()) << reflect[i].status;
        if (strict[i].ok()) {
            EXPECT_EQ(reflect[i].reflected_modes, 0);
            EXPECT_NEAR(reflect[i].nrmse, strict[i].nrmse, 1e-9 * std::max(1.0, strict[i].nrmse));
        } else {
            EXPECT_EQ(strict[i].status, "BranchCut");
            EXPECT_GT(reflect[i].reflected_modes, 0);
            EXPECT_TRUE(std::isfinite(reflect[i].nrmse));
            ++branch_cuts;
        }
    }
    EXPECT_GT(branch_cuts, 0);
}

TEST(Sweep, PeakSkipsFailedRows) {
    std::vector<SweepRow> rows = {make_sweep_row(0.5, 0.01, 0, 0, "d", false),
                                  make_sweep_row(1.0, 0.5, 0, 0, "d", false),
                                  failed_sweep_row(1.1, "d", true, ErrorKind::BranchCut),
                                  make_sweep_row(1.2, 0.3, 0, 0, "d", true),
                                  make_sweep_row(1.3, 9.0, 0, 0, "other", true)};
    EXPECT_EQ(nrmse_peak(rows, "d"), 1.0);
    EXPECT_FALSE(nrmse_peak(rows, "missing"));
}

TEST(AliasDemo, RodTurnsBackwards) {
    const auto d = run_alias_demo(0.0, 3.0, 4 * pi / 9, 10);
    EXPECT_NEAR(d.alias_omega, -1.5, 1e-9);
    EXPECT_FALSE(d.no_aliasing);
    EXPECT_LT(d.photo_gap, 1e-9);
    EXPECT_GT(d.dense_gap, 0.1);
    EXPECT_EQ(d.photo_times.size(), 10u);
    EXPECT_EQ(d.dense_times.size(), static_cast<std::size_t>(std::floor(9 * 4 * pi / 9 * 100)) + 1);
}

TEST(AliasDemo, DampedRodAndFastShutter) {
    const auto d = run_alias_demo(0.1, 3.0, 4 * pi / 9, 10);
    EXPECT_NEAR(d.alias_omega, -1.5, 1e-9);
    EXPECT_NEAR(d.a_alias(0, 0), 0.1, 1e-9);
    EXPECT_LT(d.photo_gap, 1e-9 * std::exp(0.1 * 9 * 4 * pi / 9));
    EXPECT_GT(d.dense_gap, 0.1);
    const auto fast = run_alias_demo(0.1, 3.0, pi / 6, 10);
    EXPECT_TRUE(fast.no_aliasing);
    EXPECT_NEAR(fast.alias_omega, 3.0, 1e-9);
    EXPECT_LT(fast.dense_gap, 1e-9);
}

TEST(Predict, SpiralBelowAndAbove) {
    const auto sys = builtin_system("sys1");
    const auto dict = build_dictionary(2, 1);
    const Vector x0 = (Vector(2) << 0.5, 0.5).finished();
    const auto below = predict(sys, dict, 0.5, plan_200x10(), x0, 2.0, 50.0);
    EXPECT_EQ(below.status, "ok");
    EXPECT_EQ(below.times.size(), 101u);
    EXPECT_LT(below.max_gap, 1e-6);
    const auto above = predict(sys, dict, 1.1, plan_200x10(), x0, 2.0, 50.0);
    EXPECT_GT(above.max_gap, 0.1);

    std::ostringstream os;
    write_trajectory_csv(os, below.times, {{"_true", &below.truth}, {"_model", &below.model}});
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,x1_true,x2_true,x1_model,x2_model");
}

namespace {

// Total signed angle swept around the origin.
double swept_angle(const Matrix& xy) {
    double total = 0.0;
    for (Eigen::Index i = 1; i < xy.rows(); ++i) {
        const double cross = xy(i - 1, 0) * xy(i, 1) - xy(i - 1, 1) * xy(i, 0);
        const double dot = xy(i - 1, 0) * xy(i, 0) + xy(i - 1, 1) * xy(i, 1);
        total += std::atan2(cross, dot);
    }
    return total;
}

} // namespace

TEST(Predict, FixedPointBelowAndAbove) {
    const auto sys = builtin_system("sys2");
    const auto dict = build_dictionary(2, 13);
    auto plan = plan_200x10(1);
    plan.log_policy = LogPolicy::Reflect;
    const Vector x0 = (Vector(2) << 0.5, 0.5).finished();
    const auto below = predict(sys, dict, 0.5, plan, x0, 5.0, 100.0);
    EXPECT_EQ(below.status, "ok");
    EXPECT_LT(below.max_gap, 1e-4);
    const auto above = predict(sys, dict, 1.1, plan, x0, 1.0, 100.0);
    ASSERT_EQ(above.status, "ok");
    EXPECT_LT(swept_angle(above.truth) * swept_angle(above.model), 0.0);
}

TEST(Predict, IdentificationFailureGivesNanRows) {
    const auto sys = builtin_system("sys2");
    const auto dict = build_dictionary(2, 7);
    const Vector x0 = (Vector(2) << 0.5, 0.5).finished();
    const auto p = predict(sys, dict, 0.5, plan_200x10(1), x0, 1.0, 10.0);
    EXPECT_EQ(p.status, "BranchCut");
    EXPECT_TRUE(std::isnan(p.model(0, 0)));
    EXPECT_EQ(p.max_gap, std::numeric_limits<double>::infinity());
}

TEST(Spectral, StepAcrossCriticalPeriod) {
    const auto sys = builtin_system("sys1");
    const auto rows = run_spectral(sys, build_dictionary(2, 1), {0.5, 1.1}, plan_200x10(),
                                   (Vector(2) << 0.5, 0.5).finished());
    ASSERT_EQ(rows.size(), 2u);
    for (int k = 0; k < 2; ++k) EXPECT_GT(rows[1].error[k], 1e3 * rows[0].error[k]);
    std::ostringstream os;
    write_spectral_csv(os, rows, 2);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "T_s,error_x1,error_x2,status");
}
