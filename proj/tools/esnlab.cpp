#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "esnlab/harness.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using namespace esnlab;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    std::vector<std::string> strategies;
    std::vector<std::string> optimizers;
    std::optional<std::string> arch;
    std::optional<int> n_ensemble;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config_path,
                                "JSON experiment config file");
    if (config_required) opt->required();
    cmd->add_option("--seed", flags.seed, "master seed override");
    cmd->add_option("--workers", flags.workers, "worker thread count (0 = hardware)");
    cmd->add_option("--out", flags.out, "output directory override");
    cmd->add_option("--strategy", flags.strategies,
                    "strategy override (repeatable): ssv wfv wfv_c wfv_c_star kfv "
                    "kfv_c rv rv_c");
    cmd->add_option("--optimizer", flags.optimizers,
                    "optimizer override (repeatable): gs bo");
    cmd->add_option("--arch", flags.arch,
                    "architecture override: model_free pod_informed fe_informed");
    cmd->add_option("--ensemble", flags.n_ensemble, "ensemble size override");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config_file(flags.config_path);
    if (flags.seed) cfg.master_seed = *flags.seed;
    if (flags.workers) cfg.workers = *flags.workers;
    if (flags.out) cfg.out_dir = *flags.out;
    if (flags.arch) cfg.arch = architecture_from_string(*flags.arch);
    if (flags.n_ensemble) cfg.n_ensemble = *flags.n_ensemble;
    if (!flags.strategies.empty()) {
        cfg.strategies.clear();
        for (const auto& s : flags.strategies)
            cfg.strategies.push_back(StrategySpec::parse(s));
    }
    if (!flags.optimizers.empty()) {
        cfg.optimizers.clear();
        for (const auto& o : flags.optimizers)
            cfg.optimizers.push_back(optimizer_from_string(o));
    }
    cfg.validate();
    return cfg;
}

int fail_with(const std::string& code, const std::string& message) {
    nlohmann::json err;
    err["error"] = code;
    err["message"] = message;
    std::cerr << err.dump() << "\n";
    return 1;
}

std::set<std::string> split_formats(const std::vector<std::string>& args) {
    std::set<std::string> out;
    for (const std::string& arg : args) {
        std::string token;
        std::istringstream ss(arg);
        while (std::getline(ss, token, ','))
            if (!token.empty()) out.insert(token);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"esnlab - echo state network validation and optimization lab"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "integrate and cache a dataset");
    std::string gen_variant = "lorenz_short";
    std::uint64_t gen_seed = 0;
    std::string gen_out = "data";
    bool gen_csv = true;
    generate->add_option("--variant", gen_variant,
                         "lorenz_short lorenz_long kuznetsov_quasiperiodic "
                         "kuznetsov_chaotic");
    generate->add_option("--seed", gen_seed, "dataset seed");
    generate->add_option("--out", gen_out, "output directory");
    generate->add_flag("--csv,!--no-csv", gen_csv, "also write the CSV export");

    // run
    auto* run = app.add_subcommand("run", "run an ensemble experiment");
    CommonFlags run_flags;
    add_common(run, run_flags, true);
    std::vector<std::string> run_formats;
    run->add_option("--formats", run_formats,
                    "export formats: csv json surfaces schedules");

    // study
    auto* study = app.add_subcommand("study", "appendix studies");
    CommonFlags study_flags;
    add_common(study, study_flags, true);
    std::string which = "fixed_hp";
    study->add_option("--which", which,
                      "fixed_hp | convergence_ensemble | convergence_test_starts | "
                      "cost | surface")
        ->required();
    int surface_grid = 30;
    study->add_option("--surface-grid", surface_grid, "surface lattice size");

    // export
    auto* exp = app.add_subcommand("export", "re-export a saved record");
    std::string record_path;
    std::string export_out = "export";
    std::vector<std::string> export_formats;
    exp->add_option("--record", record_path, "record.json from a previous run")
        ->required();
    exp->add_option("--out", export_out, "output directory");
    exp->add_option("--formats", export_formats,
                    "export formats: csv json surfaces schedules");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            const DatasetVariant variant = dataset_variant_from_string(gen_variant);
            fs::create_directories(gen_out);
            std::optional<fs::path> cache = fs::path(gen_out);
            if (const char* env = std::getenv("ESNLAB_CACHE_DIR"); env && *env)
                cache = fs::path(env);
            const TimeSeriesDataset ds = make_dataset(variant, gen_seed, cache);
            if (gen_csv) {
                const fs::path csv = fs::path(gen_out) /
                                     (to_string(variant) + "_seed" +
                                      std::to_string(gen_seed) + ".csv");
                write_dataset_csv(ds, csv);
                std::cout << "wrote " << csv.string() << "\n";
            }
            std::cout << "dataset " << to_string(variant) << " seed " << gen_seed
                      << ": " << ds.n_steps() << " steps, " << ds.steps_per_lt
                      << " steps/LT, span " << ds.span_steps << "\n";
            return 0;
        }

        if (run->parsed()) {
            const ExperimentConfig cfg = resolve_config(run_flags);
            const ExperimentRecord record = run_experiment(cfg);
            std::set<std::string> formats = split_formats(run_formats);
            if (!formats.empty()) formats.insert("json");  // always keep record.json
            export_record(record, cfg.out_dir, formats);
            int failures = 0;
            for (const auto& net : record.networks) {
                if (!net.error.empty()) ++failures;
                for (const auto& c : net.cells)
                    if (!c.error.empty()) ++failures;
            }
            std::cout << "experiment done in " << record.wall_seconds << " s, "
                      << record.networks.size() << " networks, " << failures
                      << " recorded failures; results in " << cfg.out_dir << "\n";
            return 0;
        }

        if (study->parsed()) {
            const ExperimentConfig cfg = resolve_config(study_flags);
            fs::create_directories(cfg.out_dir);
            nlohmann::json out;
            if (which == "fixed_hp") {
                const FixedHpStudyResult res = run_fixed_hp_study(cfg);
                out["representative_seed"] = res.representative_seed;
                for (const auto& mode : res.modes) {
                    nlohmann::json mj;
                    mj["sigma_in"] = mode.sigma_in;
                    mj["rho"] = mode.rho;
                    mj["test_ph_pct"] = mode.ph_pct;
                    mj["test_mse_pct"] = mode.mse_pct;
                    mj["test_ph_lt"] = mode.test_ph_lt;
                    mj["test_mse_geo"] = mode.test_mse_geo;
                    out["modes"][mode.name] = mj;
                }
            } else if (which == "convergence_ensemble" ||
                       which == "convergence_test_starts") {
                const auto axis = which == "convergence_ensemble"
                                      ? SweepAxis::NEnsemble
                                      : SweepAxis::NTestStarts;
                const ConvergenceSweepResult res = run_convergence_sweep(cfg, axis);
                out["metric"] = res.metric;
                out["sizes"] = res.sizes;
                out["percentiles"] = res.percentiles;
            } else if (which == "cost") {
                const CostStudyResult res = run_cost_study(cfg);
                out["kfv_folds"] = res.kfv_folds;
                out["kfv_solves_per_eval"] = res.kfv_solves_per_eval;
                out["rv_solves_per_eval"] = res.rv_solves_per_eval;
                out["kfv_seconds"] = res.kfv_seconds;
                out["rv_seconds"] = res.rv_seconds;
            } else if (which == "surface") {
                const fs::path path = fs::path(cfg.out_dir) / "surface.csv";
                run_surface_study(cfg, path, surface_grid);
                out["surface_csv"] = path.string();
            } else {
                return fail_with("InvalidArgument", "unknown study: " + which);
            }
            const fs::path path = fs::path(cfg.out_dir) / ("study_" + which + ".json");
            std::ofstream f(path);
            f << out.dump(2) << "\n";
            std::cout << "study " << which << " written to " << path.string() << "\n";
            return 0;
        }

        if (exp->parsed()) {
            const ExperimentRecord record = load_record_json(record_path);
            export_record(record, export_out, split_formats(export_formats));
            std::cout << "exported to " << export_out << "\n";
            return 0;
        }
    } catch (const Error& e) {
        return fail_with(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail_with("Unhandled", e.what());
    }
    return 0;
}
