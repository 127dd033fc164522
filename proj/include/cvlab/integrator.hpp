#ifndef CVLAB_INTEGRATOR_HPP
#define CVLAB_INTEGRATOR_HPP

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cvlab/errors.hpp"
#include "cvlab/gaussian.hpp"

namespace cvlab {

struct IntegratorConfig {
    double rel_tol = 1e-12;
    double abs_tol = 1e-12;
    double horizon = 150.0;
    double sample_dt = 0.01;
    double max_step = 0.0; // 0 = no explicit cap
    bool stiff_fallback = true;
    int stiff_reject_threshold = 50;
};

struct StepStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evals = 0;
    bool stiff_fallback_used = false;
};

using SampleMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform-grid samples of one integration run. physicality_log is filled by
// the pipeline that knows how to interpret the state layout.
struct Trajectory {
    std::vector<double> times;
    SampleMatrix states; // one row per sample, contiguous
    StepStats stats;
    std::vector<PhysicalityReport> physicality_log;

    std::span<const double> sample(long i) const {
        return {states.row(i).data(), static_cast<size_t>(states.cols())};
    }
};

using Rhs = std::function<void(double, std::span<const double>, std::span<double>)>;

// Adaptive Dormand-Prince 5(4) with dense-output sampling onto the uniform
// grid i * sample_dt. Per-step error control err <= abs_tol + |y| rel_tol; an
// implicit-Euler fallback engages after stiff_reject_threshold consecutive
// rejections. Throws StiffnessFailure if the step size underflows.
Trajectory integrate(const Rhs& rhs, const Eigen::VectorXd& y0,
                     const IntegratorConfig& cfg);

// One fixed Dormand-Prince step, exposed for order-verification tests.
void dopri5_step(const Rhs& rhs, double t, const Eigen::VectorXd& y, double h,
                 Eigen::VectorXd& y_out, Eigen::VectorXd& err_out);

using Observable = std::function<double(double, std::span<const double>)>;

struct ConvergenceReport {
    std::vector<double> max_deltas; // per observable, max over the grid
    double integrated = 0.0;        // worst time-integrated |delta|
    double tol_max = 1e-6;
    double tol_integrated = 1e-5;
    bool pass = false;
};

// Reruns with halved sample_dt and tolerances tightened by 1e-2 and compares
// the observables on the base grid.
ConvergenceReport convergence_probe(const Rhs& rhs, const Eigen::VectorXd& y0,
                                    const IntegratorConfig& cfg,
                                    const std::vector<Observable>& observables);

} // namespace cvlab

#endif
