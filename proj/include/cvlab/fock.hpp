#ifndef CVLAB_FOCK_HPP
#define CVLAB_FOCK_HPP

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cvlab/dynamics.hpp"
#include "cvlab/gaussian.hpp"

namespace cvlab {

// Truncated-space validator settings. cutoff_per_mode = 0 picks the default
// (10 for two modes, 6 for three); cutoff_pseudomode = 0 follows
// cutoff_per_mode. Comparisons are void if the trace drifts beyond
// leakage_tol during a run.
struct FockConfig {
    int cutoff_per_mode = 0;
    int cutoff_pseudomode = 0;
    double squeeze_cap = 0.4;
    double displacement_cap = 1.0;
    double leakage_tol = 1e-6;
};

struct DensityOperator {
    std::vector<int> dims;
    Eigen::MatrixXcd rho;
    int dim() const {
        int d = 1;
        for (int k : dims) d *= k;
        return d;
    }
};

// D(alpha) S(s) |0> on the truncated single-mode space. The truncated
// generators stay anti-Hermitian, so the state is exactly normalized.
Eigen::VectorXcd fock_prepare_vector(double s, cxd alpha, int cutoff);

// Two-mode pure product state as a density operator.
DensityOperator fock_prepare(const SqueezeSpec& spec, const FockConfig& cfg);

DensityOperator fock_thermal_state(int cutoff, double n_bar);

DensityOperator fock_tensor(const DensityOperator& a, const DensityOperator& b);

enum class FockGenerator { markov, pseudomode };

struct FockEvolveParams {
    FockGenerator generator = FockGenerator::markov;
    SystemParams system{};
    OUKernel kernel{};
    ThermalBath bath{};
    double horizon = 10.0;
    double dt = 0.01;        // fixed RK4 step
    double sample_dt = 0.1;  // sampler cadence
    double leakage_tol = 1e-6;
};

struct FockRunStats {
    double max_trace_error = 0.0;
    double max_hermiticity_error = 0.0;
    double max_boundary_population = 0.0; // truncation-pressure proxy
    double min_eigenvalue = 0.0;          // monitored at sparse cadence
};

using FockSampler = std::function<void(double, const DensityOperator&)>;

// Fixed-step RK4 on the vectorized GKLS equation; trace and Hermiticity are
// monitored, never projected. Throws LeakageBreach when the trace drifts.
FockRunStats fock_evolve(const DensityOperator& rho0,
                         const FockEvolveParams& params,
                         const FockSampler& sampler);

// E_N = ln || rho^{T_mode} ||_1 for a two-mode density operator.
double fock_negativity(const DensityOperator& rho, int mode);

DensityOperator fock_partial_trace_last(const DensityOperator& rho);

LadderMoments fock_two_mode_moments(const DensityOperator& rho);

double fock_purity(const DensityOperator& rho);

double fock_overlap(const Eigen::VectorXcd& psi1, const Eigen::VectorXcd& psi2);

} // namespace cvlab

#endif
