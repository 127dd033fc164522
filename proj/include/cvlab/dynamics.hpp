#ifndef CVLAB_DYNAMICS_HPP
#define CVLAB_DYNAMICS_HPP

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvlab/gaussian.hpp"
#include "cvlab/integrator.hpp"

namespace cvlab {

// Mode detuning, constant or sinusoidally modulated:
// delta_AB(t) = delta0 (sin(omega_mod t) + 1).
struct DetuningDrive {
    enum class Kind { constant, sinusoidal };
    Kind kind = Kind::constant;
    double delta0 = 0.0;
    double omega_mod = 1.0;

    double at(double t) const {
        return kind == Kind::constant ? delta0
                                      : delta0 * (std::sin(omega_mod * t) + 1.0);
    }
};

// Rotating frame at omega_a; all rates in units of kappa. frame_offset shifts
// every mode frequency by a common amount (a frame-rotation knob, physics
// unchanged).
struct SystemParams {
    double kappa = 1.0;
    DetuningDrive drive{};          // delta_AB(t) = omega_b - omega_a
    double delta_ae = 0.0;          // Omega - omega_a
    double frame_offset = 0.0;
};

// alpha(t-s) = (gamma/2) e^{-(gamma + i Omega)(t-s)}.
struct OUKernel {
    double gamma = 1.0;
    double Omega = 0.0; // kernel center in the working frame
};

// Memory coefficients of the time-local closure, F1(0) = F2(0) = 0.
struct CoefficientState {
    cxd F1{0.0, 0.0};
    cxd F2{0.0, 0.0};
};

struct ThermalBath {
    double n_bar = 0.0;
};

// Bose-Einstein occupation for angular frequency omega [rad/s] at T [K].
double thermal_occupation(double omega_rad_s, double temperature_k);
// Inverse map: temperature that produces n_bar at omega.
double thermal_temperature(double omega_rad_s, double n_bar);

// Uncentered moments of the enlarged (a, b, c) system. mean = (<a>,<b>,<c>),
// second(i,j) = <o_i o_j> (symmetric), number(i,j) = <o_i^dag o_j> (Hermitian).
struct TripartiteMoments {
    Eigen::Vector3cd mean = Eigen::Vector3cd::Zero();
    Eigen::Matrix3cd second = Eigen::Matrix3cd::Zero();
    Eigen::Matrix3cd number = Eigen::Matrix3cd::Zero();
};

// Decay demands behind the freezing law: second moments to 1/n by t_n,
// coefficients to 1/n_s by t_s.
struct FreezingSpec {
    double t_n = 10.0;
    double n = 100.0;
    double t_s = 5.0;
    double n_s = 100.0;
};

cxd ou_kernel(double t, double s, const OUKernel& k);

CoefficientState riccati_rhs(const CoefficientState& f, double t,
                             const SystemParams& p, const OUKernel& k);

// F(inf) = (gamma + i delta_AE - chi) / (4 sqrt(kappa)) on the Re chi > 0
// branch. Throws UnstableRegimeError in the sector delta_AE = 0, gamma < 4k.
cxd coefficient_steady_state(double gamma, double delta_ae, double kappa);

// Re chi: linearized decay rate of the coefficients toward F(inf).
double coefficient_decay_rate(double gamma, double delta_ae, double kappa);

// Closed-form resonant transient; dispatches to the rational asymptote
// sqrt(k) 2kt/(1+2kt) at the degenerate point chi = 0.
cxd coefficient_transient(double t, double gamma, double delta_ae, double kappa);

// Critical detuning that pins Re F(inf) = ln(n)/(4 sqrt(k) t_n).
double freezing_delta_star(double gamma, double t_n, double n, double kappa);

// Lower bound ln(n)/t_n + ln(n_s)/t_s on gamma.
double freezing_gamma_bound(const FreezingSpec& spec);

// Lindblad generator with L = sqrt(k)(a + b), frame at omega_a.
LadderMoments markov_moment_rhs(const LadderMoments& m, double t,
                                const SystemParams& p);

// Closure generator; moments only, for given coefficient values.
LadderMoments o0_moment_rhs(const LadderMoments& m, const CoefficientState& f,
                            double t, const SystemParams& p);

// GKLS generator of the (a, b, c) embedding with jumps
// L- = sqrt(2 gamma (n+1)) c, L+ = sqrt(2 gamma n) c^dag and g = sqrt(gamma/2).
TripartiteMoments pseudomode_rhs(const TripartiteMoments& m, double t,
                                 const SystemParams& p, const OUKernel& k,
                                 const ThermalBath& bath);

// System moments copied; pseudomode in its thermal stationary state,
// cross correlations zero.
TripartiteMoments pseudomode_initial(const LadderMoments& two_mode,
                                     const ThermalBath& bath);

LadderMoments trace_out_pseudomode(const TripartiteMoments& m);

struct Harmonic {
    int k = 0;
    double weight = 0.0; // J_k(-delta0/omega)
    double offset = 0.0; // k omega + delta0
};

struct JacobiAngerDecomposition {
    std::vector<Harmonic> harmonics;
    bool commensurate = false; // delta0/omega integer
    int stationary_k = 0;      // valid when commensurate
};

JacobiAngerDecomposition jacobi_anger_weights(double delta0, double omega_mod,
                                              int k_min, int k_max);

// e^{+i int_0^t delta_AB(s) ds} for the drive.
cxd phase_accumulation(double t, const DetuningDrive& drive);

// ---- packed ODE systems -------------------------------------------------

enum class GeneratorKind { markov, o0, pseudomode };

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::markov;
    SystemParams system{};
    OUKernel kernel{};
    ThermalBath bath{};
    bool antipodal = false; // carry a second mean vector (witness pair)
};

// Flattened real-vector layout of one generator's joint state
// (moments, optional partner means, optional closure coefficients).
class PackedSystem {
public:
    explicit PackedSystem(const GeneratorSpec& spec);

    int dim() const { return dim_; }
    int n_modes() const { return n_modes_; }
    bool with_coeffs() const { return with_coeffs_; }
    bool with_pair() const { return pair_; }
    const GeneratorSpec& spec() const { return spec_; }

    Rhs rhs() const;

    // Initial packed state. For the pseudomode kind the two-mode input is
    // embedded via pseudomode_initial. The partner shares second moments.
    Eigen::VectorXd initial(const LadderMoments& state,
                            const LadderMoments* partner = nullptr) const;

    LadderMoments two_mode(std::span<const double> y, bool partner = false) const;
    TripartiteMoments tripartite(std::span<const double> y,
                                 bool partner = false) const;
    CoefficientState coefficients(std::span<const double> y) const;

private:
    GeneratorSpec spec_;
    int n_modes_ = 2;
    bool with_coeffs_ = false;
    bool pair_ = false;
    int dim_ = 0;
};

PackedSystem make_generator(const GeneratorSpec& spec);

} // namespace cvlab

#endif
