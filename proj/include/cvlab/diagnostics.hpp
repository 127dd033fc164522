#ifndef CVLAB_DIAGNOSTICS_HPP
#define CVLAB_DIAGNOSTICS_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "cvlab/dynamics.hpp"
#include "cvlab/gaussian.hpp"
#include "cvlab/integrator.hpp"

namespace cvlab {

struct Series {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<std::uint8_t> flagged; // physicality failures, series continues
};

// Antipodal probe pair: identical centered second moments, means +/- R0.
struct WitnessConfig {
    Eigen::Vector4d base_mean; // quadrature mean (x_a, x_b, p_a, p_b)
    WitnessConfig();           // default: production initial-state mean
};

std::pair<LadderMoments, LadderMoments> antipodal_pair(
    const LadderMoments& initial, const WitnessConfig& cfg = WitnessConfig());

using TwoModeDecoder = std::function<LadderMoments(std::span<const double>)>;

Series en_series(const Trajectory& traj, const TwoModeDecoder& decode);

// Bures distance between the two members of a jointly evolved pair.
Series bures_series(const Trajectory& traj, const TwoModeDecoder& decode_plus,
                    const TwoModeDecoder& decode_minus);

// Same, for separately evolved trajectories; throws on grid mismatch.
Series bures_series(const Trajectory& a, const TwoModeDecoder& decode_a,
                    const Trajectory& b, const TwoModeDecoder& decode_b);

// Sum of positive increments of D_B over the sampled grid.
double witness_N(const Series& bures);

// (1/T) integral of the series over [0, T], trapezoidal rule.
double time_avg_en(const Series& s, double T);

struct DeviationCurve {
    std::vector<double> times;
    std::vector<double> percent;        // |delta E_N / baseline| x 100
    std::vector<std::uint8_t> masked;   // baseline at or below the floor
    double floor = 0.01;
};

DeviationCurve relative_deviation(const Series& test, const Series& baseline,
                                  double floor = 0.01);

} // namespace cvlab

#endif
