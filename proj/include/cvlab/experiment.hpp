#ifndef CVLAB_EXPERIMENT_HPP
#define CVLAB_EXPERIMENT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvlab/diagnostics.hpp"
#include "cvlab/dynamics.hpp"
#include "cvlab/fock.hpp"
#include "cvlab/gaussian.hpp"
#include "cvlab/integrator.hpp"

namespace cvlab {

inline constexpr const char* kVersion = "cvlab 0.1.0";

enum class ExperimentKind {
    baseline_trajectories,
    baseline_heatmap,
    thermal_sweep,
    freezing,
    freezing_thermal,
    revivals,
    witness_scan,
    beating,
    locking,
    locking_witness,
    beating_thermal,
    oracle_check,
};

const char* to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& name);

// Extra knobs for the oracle-check experiment.
struct OracleOptions {
    int seeds = 20;
    double horizon_markov = 10.0;
    double horizon_pseudomode = 5.0;
    double dt = 0.02;
    double sample_dt = 0.1;
    std::vector<double> n_bars{0.0, 0.1};
};

// Fully declarative description of one run. Seed-free: identical configs
// produce byte-identical CSV output.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::baseline_trajectories;
    GeneratorKind generator = GeneratorKind::markov;
    SystemParams system{};
    OUKernel kernel{};
    ThermalBath bath{};
    SqueezeSpec input{};
    IntegratorConfig integrator{};
    FreezingSpec freezing{};
    FockConfig fock{};
    OracleOptions oracle{};
    bool include_markov = true; // comparison rows for scan experiments
    std::map<std::string, std::vector<double>> grid;
    std::string output = "out";

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json echo() const;
};

struct ExclusionRecord {
    std::string point;
    std::string reason;
};

struct RunManifest {
    std::string experiment;
    nlohmann::json config;
    long rows = 0;
    std::vector<std::string> files;
    std::vector<ExclusionRecord> excluded;
    std::vector<double> wall_ms;
    std::optional<ConvergenceReport> convergence;
    nlohmann::json observations;

    nlohmann::json to_json() const;
    // 0 = clean, 2 = exclusions occurred.
    int exit_code() const { return excluded.empty() ? 0 : 2; }
};

struct RunOptions {
    std::string out_dir;   // empty: use config.output
    int workers = 0;       // 0: hardware concurrency
    bool convergence_probe = false;
};

RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Rebuilds the tidy per-figure files from a completed run directory.
// Throws std::runtime_error when the run artifacts are missing.
void emit_plotdata(const std::string& out_dir);

struct FreezeCalcReport {
    double delta_star = 0.0;
    double gamma_bound = 0.0;
    bool gamma_meets_bound = false;
    double re_f_infinity = 0.0;
    double coefficient_rate = 0.0; // Re chi at delta*
};

FreezeCalcReport freeze_calc(double gamma, const FreezingSpec& spec,
                             double kappa = 1.0);

} // namespace cvlab

#endif
