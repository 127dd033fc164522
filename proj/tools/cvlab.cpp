#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "cvlab/experiment.hpp"

using namespace cvlab;

int main(int argc, char** argv) {
    CLI::App app{"cvlab - two bosonic modes in a common structured reservoir"};
    app.require_subcommand(1);

    // run
    std::string config_path, out_dir;
    int workers = 0;
    bool probe = false;
    auto* run_cmd = app.add_subcommand("run", "execute a declarative experiment");
    run_cmd->add_option("config", config_path, "JSON experiment config")->required();
    run_cmd->add_option("--out", out_dir, "output directory (overrides config)");
    run_cmd->add_option("--workers", workers, "worker threads (0 = hardware)");
    run_cmd->add_flag("--convergence-probe", probe,
                      "rerun the first grid point refined and report deltas");

    // oracle-check
    int cutoff = 0;
    auto* oracle_cmd =
        app.add_subcommand("oracle-check", "truncated Fock-space cross-validation");
    oracle_cmd->add_option("--cutoff", cutoff, "two-mode cutoff per mode");
    oracle_cmd->add_option("--out", out_dir, "output directory");
    oracle_cmd->add_option("--workers", workers, "worker threads");

    // freeze-calc
    double gamma = 1.0;
    FreezingSpec fspec;
    auto* freeze_cmd =
        app.add_subcommand("freeze-calc", "critical detuning and memory bound");
    freeze_cmd->add_option("--gamma", gamma, "kernel decay rate (units kappa)")
        ->required();
    freeze_cmd->add_option("--tn", fspec.t_n, "moment-decay time");
    freeze_cmd->add_option("--n", fspec.n, "moment-decay factor");
    freeze_cmd->add_option("--ts", fspec.t_s, "coefficient-decay time");
    freeze_cmd->add_option("--ns", fspec.n_s, "coefficient-decay factor");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
            RunManifest m = run(cfg, {out_dir, workers, probe});
            std::printf("experiment %s: %ld rows, %zu excluded\n",
                        m.experiment.c_str(), m.rows, m.excluded.size());
            for (const auto& e : m.excluded)
                std::printf("  excluded %s: %s\n", e.point.c_str(), e.reason.c_str());
            if (m.convergence)
                std::printf("  convergence: max_delta=%.3g integrated=%.3g %s\n",
                            m.convergence->max_deltas.empty()
                                ? 0.0
                                : m.convergence->max_deltas[0],
                            m.convergence->integrated,
                            m.convergence->pass ? "pass" : "FAIL");
            return m.exit_code();
        }
        if (oracle_cmd->parsed()) {
            ExperimentConfig cfg;
            cfg.experiment = ExperimentKind::oracle_check;
            if (cutoff > 0) cfg.fock.cutoff_per_mode = cutoff;
            nlohmann::json j;
            j["experiment"] = "oracle-check";
            cfg = ExperimentConfig::from_json(j);
            if (cutoff > 0) cfg.fock.cutoff_per_mode = cutoff;
            cfg.output = out_dir.empty() ? "out/oracle-check" : out_dir;
            RunManifest m = run(cfg, {"", workers, false});
            std::printf("oracle-check: %ld rows, %zu excluded\n", m.rows,
                        m.excluded.size());
            return m.exit_code();
        }
        if (freeze_cmd->parsed()) {
            FreezeCalcReport r = freeze_calc(gamma, fspec);
            std::printf("delta_ae_star = %.10g\n", r.delta_star);
            std::printf("gamma_bound   = %.10g (%s)\n", r.gamma_bound,
                        r.gamma_meets_bound ? "gamma meets the bound"
                                            : "gamma BELOW the bound");
            std::printf("Re F_inf      = %.10g\n", r.re_f_infinity);
            std::printf("Re chi        = %.10g\n", r.coefficient_rate);
            return 0;
        }
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
