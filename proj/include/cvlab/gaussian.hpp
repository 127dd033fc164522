#ifndef CVLAB_GAUSSIAN_HPP
#define CVLAB_GAUSSIAN_HPP

#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvlab/errors.hpp"

namespace cvlab {

using cxd = std::complex<double>;

// Vacuum quadrature variance; sigma_vac = I/2 throughout.
inline constexpr double kVacuumVariance = 0.5;

// Physicality thresholds applied at every monitored state.
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kNuMinTol = 1e-4;
inline constexpr double kEigenFloor = 1e-4;

// Production displacement sqrt(5) e^{i pi/4}, shared by both modes.
cxd default_displacement();

struct SqueezeSpec {
    double s_a = 0.0;
    double s_b = 0.0;
    cxd alpha = default_displacement();
    cxd beta = default_displacement();
};

// First and second ladder moments of a two-mode state. Uncentered.
// n_ab stores <a^dag b>; the partner <b^dag a> is conj(n_ab).
struct LadderMoments {
    cxd mean_a{0.0, 0.0};
    cxd mean_b{0.0, 0.0};
    cxd m_aa{0.0, 0.0}; // <a a>
    cxd m_bb{0.0, 0.0}; // <b b>
    cxd m_ab{0.0, 0.0}; // <a b>
    double n_aa = 0.0;  // <a^dag a>
    double n_bb = 0.0;  // <b^dag b>
    cxd n_ab{0.0, 0.0}; // <a^dag b>
};

// Mean vector and covariance in the ordering (x_1..x_n, p_1..p_n).
struct QuadratureState {
    int n_modes = 0;
    Eigen::VectorXd R;
    Eigen::MatrixXd sigma;
};

struct PhysicalityReport {
    bool is_symmetric = false;
    double max_asymmetry = 0.0;
    double nu_min = 0.0;
    double min_eigen = 0.0;
    bool bona_fide = false; // sigma + iJ/2 >= 0 up to kNuMinTol

    bool ok() const {
        return is_symmetric && bona_fide && min_eigen >= kEigenFloor;
    }
};

class PhysicalityError : public std::runtime_error {
public:
    explicit PhysicalityError(const PhysicalityReport& r);
    PhysicalityReport report;
};

// J = [[0, I], [-I, 0]] for the (x..., p...) ordering.
Eigen::MatrixXd symplectic_form(int n_modes);

LadderMoments prepare_squeezed_coherent(const SqueezeSpec& spec);

// Generic n-mode conversion from uncentered ladder moments
// (mean, <o_i o_j>, <o_i^dag o_j>) to (R, sigma).
QuadratureState moments_to_quadrature_n(const Eigen::VectorXcd& mean,
                                        const Eigen::MatrixXcd& second,
                                        const Eigen::MatrixXcd& number);

QuadratureState moments_to_quadrature(const LadderMoments& m);

PhysicalityReport check_physical(const QuadratureState& q);

// Moduli of eig(iJ sigma), deduplicated to n positive values, ascending.
std::vector<double> symplectic_spectrum(const Eigen::MatrixXd& sigma);

// Smallest PT symplectic eigenvalue from the two-mode invariant closed form
// (independent of the eigen-solve route used by log_negativity).
double nu_minus_invariant(const Eigen::MatrixXd& sigma4);

// E_N = max[0, -ln(2 nu-)] with nu- = min eig |iJ P_a sigma P_a|,
// P_a = diag(1,1,-1,1). Throws PhysicalityError on non-physical input.
double log_negativity(const QuadratureState& q);

// Root-Uhlmann fidelity between Gaussian states. Equal-covariance pairs
// reduce exactly to the exponential displacement factor (F0 = 1), bypassing
// the generic determinant construction and its eigen-solve noise.
double fidelity(const QuadratureState& q1, const QuadratureState& q2);

// Covariance part F0 of the fidelity via the auxiliary-matrix determinant
// construction; the full fidelity multiplies in the displacement factor.
double fidelity_f0(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2);

// D_B = sqrt(2 (1 - F)).
double bures_distance(const QuadratureState& q1, const QuadratureState& q2);

enum class SimonBranch { positive, negative };

// Partner-squeezing cutoff from e^{-/+2s_a} + e^{-/+2s_b} < 2. The positive
// branch returns a lower bound on the partner, the negative branch an upper
// bound. No threshold exists when the fixed squeezing already saturates the
// inequality.
std::optional<double> simon_threshold(double s_fixed, SimonBranch branch);

// Long-time covariance under the memoryless common bath,
// sigma_inf = (1/8) blockdiag(A_-, A_+), mean from <a>_inf = (alpha-beta)/2.
QuadratureState steady_covariance(double s_a, double s_b,
                                  cxd alpha = default_displacement(),
                                  cxd beta = default_displacement());

// Closed-form PT symplectic eigenvalues (nu1, nu2) of the steady covariance,
// rescaled by sqrt(1 + 2 n_bar) at finite occupation.
std::pair<double, double> steady_symplectic_eigs(double s_a, double s_b,
                                                 double n_bar);

// Moments in the d_+/- = (a +/- b)/sqrt(2) basis; output slots a->d+, b->d-.
// The transform is an involution.
LadderMoments bright_dark_transform(const LadderMoments& m);

} // namespace cvlab

#endif
