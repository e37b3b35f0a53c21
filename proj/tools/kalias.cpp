// kalias: command-line front end for the experiment harness.
//
// Every subcommand reads an optional key-value config file, then applies
// command-line overrides, writes CSV files plus summary.json into --out-dir
// and prints a short report on stdout.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "kalias/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kalias;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;

// A number JSON can hold; inf and nan become the strings used in the CSVs.
json number(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
}

json complex_list(const std::vector<Complex>& zs) {
    json out = json::array();
    for (const auto& z : zs) out.push_back({number(z.real()), number(z.imag())});
    return out;
}

class Output {
public:
    explicit Output(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(ErrorKind::Config, "cannot create output directory '" + dir + "': " + ec.message());
    }

    std::ofstream open(const std::string& name) const {
        std::ofstream os(dir_ / name);
        if (!os) throw Error(ErrorKind::Config, "cannot write " + (dir_ / name).string());
        return os;
    }

    void summary(const json& j) const { open("summary.json") << j.dump(2) << '\n'; }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    fs::path dir_;
};

json config_json(const ExperimentConfig& cfg, const DynamicalSystem& sys) {
    json j;
    j["system"] = sys.name;
    j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    j["n_traj"] = cfg.n_traj;
    j["n_snap"] = cfg.n_snap;
    json box = json::array();
    for (const auto& [lo, hi] : resolve_box(cfg, sys.dim)) box.push_back({lo, hi});
    j["init_box"] = box;
    j["log_policy"] = to_string(cfg.log_policy);
    return j;
}

int cmd_critical_period(const ExperimentConfig& cfg) {
    const auto report = critical_period_report(cfg);
    const Output out(cfg.out_dir);
    {
        auto os = out.open("critical_period.csv");
        write_verdict_csv(os, report.label, report.verdict);
    }
    json j;
    j["command"] = "critical-period";
    j["label"] = report.label;
    j["source"] = report.source;
    j["spectrum"] = complex_list(report.spectrum);
    j["max_abs_imag"] = number(report.verdict.max_abs_imag);
    j["critical_period"] = number(report.verdict.critical_period);
    j["min_frequency"] = number(report.verdict.min_frequency);
    out.summary(j);
    std::cout << report.label << ": T_gamma = " << format_number(report.verdict.critical_period)
              << " s, min frequency = " << format_number(report.verdict.min_frequency) << " rad/s (" << report.source
              << ")\n";
    return exit_ok;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    const auto sys = resolve_system(cfg);
    const auto dicts = resolve_dictionaries(cfg, sys.dim);
    const auto grid = cfg.grid.empty() ? make_grid(0.05, 2.8, 0.05) : cfg.grid;
    const auto plan = sampling_plan(cfg, sys.dim);
    const Output out(cfg.out_dir);
    const auto rows = run_sweep(sys, dicts, grid, plan, cfg.jobs);
    {
        auto os = out.open("sweep.csv");
        write_sweep_csv(os, rows);
    }
    json j;
    j["command"] = "sweep";
    j["config"] = config_json(cfg, sys);
    j["critical_period"] = number(system_critical_period(sys));
    j["grid"] = {{"first", grid.front()}, {"last", grid.back()}, {"count", grid.size()}};
    json per_dict = json::array();
    for (const auto& d : dicts) {
        std::size_t failed = 0, reflected = 0;
        for (const auto& r : rows) {
            if (r.dictionary != d.label) continue;
            if (!r.ok()) ++failed;
            if (r.reflected_modes > 0) ++reflected;
        }
        const auto peak = nrmse_peak(rows, d.label);
        per_dict.push_back({{"dictionary", d.label},
                            {"size", d.size()},
                            {"nrmse_quarter_peak_T_s", peak ? json(*peak) : json(nullptr)},
                            {"failed_cells", failed},
                            {"reflected_cells", reflected}});
        std::cout << d.label << ": peak NRMSE^(1/4) at T_s = " << (peak ? format_number(*peak) : "none") << ", "
                  << failed << " failed cells\n";
    }
    j["dictionaries"] = per_dict;
    out.summary(j);
    std::cout << "wrote " << out.path("sweep.csv") << '\n';
    return exit_ok;
}

int cmd_alias_demo(const ExperimentConfig& cfg) {
    const auto d = run_alias_demo(cfg.alias_a, cfg.alias_omega, cfg.alias_period, cfg.n_photos, cfg.fs);
    const Output out(cfg.out_dir);
    {
        auto os = out.open("alias_dense.csv");
        write_trajectory_csv(os, d.dense_times, {{"_true", &d.dense_true}, {"_alias", &d.dense_alias}});
    }
    {
        auto os = out.open("alias_photos.csv");
        write_trajectory_csv(os, d.photo_times, {{"_true", &d.photo_true}, {"_alias", &d.photo_alias}});
    }
    const double scale = std::max(1.0, d.photo_true.cwiseAbs().maxCoeff());
    const bool coincide = d.photo_gap <= 1e-9 * scale;
    json j;
    j["command"] = "alias-demo";
    j["a"] = d.a;
    j["omega"] = d.omega;
    j["T_s"] = d.sampling_period;
    j["alias_omega"] = number(d.alias_omega);
    j["no_aliasing"] = d.no_aliasing;
    j["photo_gap"] = number(d.photo_gap);
    j["dense_gap"] = number(d.dense_gap);
    j["samples_coincide"] = coincide;
    out.summary(j);
    std::cout << (d.no_aliasing ? "no aliasing" : "aliased") << ": omega " << format_number(d.omega)
              << " rad/s appears as " << format_number(d.alias_omega) << " rad/s, photo gap "
              << format_number(d.photo_gap) << ", dense gap " << format_number(d.dense_gap) << '\n';
    return coincide ? exit_ok : exit_numeric;
}

std::vector<double> predict_periods(const ExperimentConfig& cfg) {
    const auto periods = cfg.predict_periods.empty() ? std::vector<double>{0.5, 1.1, 2.8} : cfg.predict_periods;
    validate_grid(periods, "t_s");
    return periods;
}

Dictionary single_dictionary(const ExperimentConfig& cfg, int dim) {
    const auto dicts = resolve_dictionaries(cfg, dim);
    if (dicts.size() != 1) throw Error(ErrorKind::Config, "this command takes exactly one dictionary");
    return dicts.front();
}

int cmd_predict(const ExperimentConfig& cfg) {
    const auto sys = resolve_system(cfg);
    const auto dict = single_dictionary(cfg, sys.dim);
    const auto plan = sampling_plan(cfg, sys.dim);
    const Vector x0 = resolve_x0(cfg, sys.dim);
    const Output out(cfg.out_dir);
    json runs = json::array();
    bool all_ok = true;
    for (double ts : predict_periods(cfg)) {
        const auto p = predict(sys, dict, ts, plan, x0, cfg.horizon, cfg.fs);
        const std::string name = "predict_T" + format_number(ts) + ".csv";
        {
            auto os = out.open(name);
            write_trajectory_csv(os, p.times, {{"_true", &p.truth}, {"_model", &p.model}});
        }
        all_ok = all_ok && p.status == "ok";
        runs.push_back({{"T_s", ts}, {"file", name}, {"status", p.status}, {"max_gap", number(p.max_gap)}});
        std::cout << "T_s = " << format_number(ts) << ": " << p.status << ", max gap " << format_number(p.max_gap)
                  << '\n';
    }
    json j;
    j["command"] = "predict";
    j["config"] = config_json(cfg, sys);
    j["dictionary"] = dict.label;
    j["x0"] = std::vector<double>(x0.data(), x0.data() + x0.size());
    j["horizon"] = cfg.horizon;
    j["fs"] = cfg.fs;
    j["runs"] = runs;
    out.summary(j);
    return all_ok ? exit_ok : exit_numeric;
}

int cmd_spectral(const ExperimentConfig& cfg) {
    const auto sys = resolve_system(cfg);
    const auto dict = single_dictionary(cfg, sys.dim);
    const auto plan = sampling_plan(cfg, sys.dim);
    const auto grid = cfg.grid.empty() ? make_grid(0.05, 2.8, 0.05) : cfg.grid;
    const Vector x0 = resolve_x0(cfg, sys.dim);
    const Output out(cfg.out_dir);
    const auto rows = run_spectral(sys, dict, grid, plan, x0, cfg.fs, cfg.n_samples, cfg.jobs);
    {
        auto os = out.open("spectral.csv");
        write_spectral_csv(os, rows, sys.dim);
    }
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.status != "ok";
    json j;
    j["command"] = "spectral";
    j["config"] = config_json(cfg, sys);
    j["dictionary"] = dict.label;
    j["critical_period"] = number(system_critical_period(sys));
    j["fs"] = cfg.fs;
    j["n_samples"] = cfg.n_samples;
    j["failed_cells"] = failed;
    out.summary(j);
    std::cout << "wrote " << out.path("spectral.csv") << " (" << rows.size() << " rows, " << failed << " failed)\n";
    return exit_ok;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    const auto sys = resolve_system(cfg);
    const Vector x0 = resolve_x0(cfg, sys.dim);
    const auto times = sample_times(cfg.horizon, cfg.fs);
    const Matrix x = trajectory(sys, x0, times);
    const Output out(cfg.out_dir);
    {
        auto os = out.open("simulate.csv");
        write_trajectory_csv(os, times, {{"", &x}});
    }
    json j;
    j["command"] = "simulate";
    j["system"] = sys.name;
    j["x0"] = std::vector<double>(x0.data(), x0.data() + x0.size());
    j["horizon"] = cfg.horizon;
    j["fs"] = cfg.fs;
    j["samples"] = times.size();
    out.summary(j);
    std::cout << "wrote " << out.path("simulate.csv") << '\n';
    return exit_ok;
}

bool is_config_error(ErrorKind k) {
    return k == ErrorKind::Config || k == ErrorKind::UnknownSystem || k == ErrorKind::BadParams;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman-generator identification and sampling-period aliasing experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::string config_path;
    std::optional<long long> seed;
    std::optional<std::string> out_dir;
    std::optional<long long> jobs;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "Key-value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Sampling seed (required by sweep, predict, spectral)");
    app.add_option("--out-dir", out_dir, "Directory for CSV and summary.json output");
    app.add_option("--jobs", jobs, "Worker threads, 0 = hardware concurrency");
    app.add_option("--set", overrides, "Extra config setting key=value (repeatable)");

    // Subcommand flags are plain config keys; they are applied after the file.
    std::vector<std::pair<std::string, std::string>> flag_settings;
    auto key_flag = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        sub->add_option_function<std::vector<std::string>>(
            flag,
            [&flag_settings, key](const std::vector<std::string>& values) {
                for (const auto& v : values) flag_settings.emplace_back(key, v);
            },
            help);
    };
    auto system_flags = [&](CLI::App* sub) {
        key_flag(sub, "--system", "system", "Built-in system name (sys1..sys5)");
        key_flag(sub, "--system-file", "system_file", "System definition file");
        key_flag(sub, "--param", "param", "System parameter name=value (repeatable)");
    };
    auto sampling_flags = [&](CLI::App* sub) {
        key_flag(sub, "--dictionary", "dictionary", "Dictionary, e.g. 'm=7' or 'x1;x2;x1^2' (repeatable)");
        key_flag(sub, "--n-traj", "n_traj", "Trajectories per data set");
        key_flag(sub, "--n-snap", "n_snap", "Snapshots per trajectory");
        key_flag(sub, "--init-box", "init_box", "Initial-state box lo,hi[,lo,hi...]");
        key_flag(sub, "--rel-tol", "rel_tol", "Pseudoinverse relative tolerance");
        key_flag(sub, "--log-policy", "log_policy", "strict (default) or reflect");
    };

    auto* critical = app.add_subcommand("critical-period", "Critical sampling period of a system or spectrum");
    system_flags(critical);
    key_flag(critical, "--dictionary", "dictionary", "Use the exact generator on this dictionary (repeatable)");
    key_flag(critical, "--spectrum-file", "spectrum_file", "File with 'eigenvalues = ...'");

    auto* sweep = app.add_subcommand("sweep", "NRMSE over a sampling-period grid");
    system_flags(sweep);
    sampling_flags(sweep);
    key_flag(sweep, "--grid", "grid", "start:stop:step or a list (default 0.05:2.8:0.05)");

    auto* alias = app.add_subcommand("alias-demo", "Rotating rod photographed at a fixed interval");
    key_flag(alias, "--a", "a", "Damping/growth rate a");
    key_flag(alias, "--omega", "omega", "Angular velocity");
    key_flag(alias, "--t-s", "alias_t_s", "Photo interval (default 4*pi/9)");
    key_flag(alias, "--n-photos", "n_photos", "Number of photos");
    key_flag(alias, "--fs", "fs", "Dense output rate in Hz");

    auto* pred = app.add_subcommand("predict", "True vs identified trajectories");
    system_flags(pred);
    sampling_flags(pred);
    key_flag(pred, "--t-s", "t_s", "Sampling periods, list or start:stop:step (default 0.5,1.1,2.8)");
    key_flag(pred, "--x0", "x0", "Initial state (default 0.5 per coordinate)");
    key_flag(pred, "--horizon", "horizon", "Seconds to simulate");
    key_flag(pred, "--fs", "fs", "Output rate in Hz");

    auto* spectral = app.add_subcommand("spectral", "Spectral error of reconstructed trajectories");
    system_flags(spectral);
    sampling_flags(spectral);
    key_flag(spectral, "--grid", "grid", "start:stop:step or a list");
    key_flag(spectral, "--x0", "x0", "Initial state");
    key_flag(spectral, "--fs", "fs", "Sampling rate of the DFT window in Hz");
    key_flag(spectral, "--n-samples", "n_samples", "Points in the DFT window");

    auto* simulate = app.add_subcommand("simulate", "Integrate a system from x0");
    system_flags(simulate);
    key_flag(simulate, "--x0", "x0", "Initial state");
    key_flag(simulate, "--horizon", "horizon", "Seconds to simulate");
    key_flag(simulate, "--fs", "fs", "Output rate in Hz");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        auto apply = [&](const std::string& key, const std::string& value, const std::string& origin) {
            try {
                cfg.set(KeyValue{0, key, value});
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Config) throw;
                const std::string what = e.what();
                throw Error(ErrorKind::Config, origin + ": " + what.substr(what.find(": ") + 2));
            }
        };
        for (const auto& [key, value] : flag_settings) {
            if (key == "param") {
                const auto eq = value.find('=');
                if (eq == std::string::npos) throw Error(ErrorKind::Config, "--param expects name=value");
                apply("param." + value.substr(0, eq), value.substr(eq + 1), "--param");
            } else {
                apply(key, value, "--" + key);
            }
        }
        for (const auto& s : overrides) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::Config, "--set expects key=value, got '" + s + "'");
            apply(s.substr(0, eq), s.substr(eq + 1), "--set");
        }
        if (seed) apply("seed", std::to_string(*seed), "--seed");
        if (out_dir) cfg.out_dir = *out_dir;
        if (jobs) apply("jobs", std::to_string(*jobs), "--jobs");

        if (critical->parsed()) return cmd_critical_period(cfg);
        if (sweep->parsed()) return cmd_sweep(cfg);
        if (alias->parsed()) return cmd_alias_demo(cfg);
        if (pred->parsed()) return cmd_predict(cfg);
        if (spectral->parsed()) return cmd_spectral(cfg);
        if (simulate->parsed()) return cmd_simulate(cfg);
    } catch (const Error& e) {
        std::cerr << "kalias: " << e.what() << '\n';
        return is_config_error(e.kind()) ? exit_config : exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "kalias: " << e.what() << '\n';
        return exit_numeric;
    }
    return exit_config;
}
