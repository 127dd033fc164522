#include "cvlab/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace cvlab {

namespace {

// CODATA: hbar [J s], kB [J/K].
constexpr double kHbar = 1.054571817e-34;
constexpr double kBoltzmann = 1.380649e-23;

cxd tanh_safe(cxd z) {
    if (z.real() > 19.0) {
        const cxd e = std::exp(-2.0 * z);
        return (1.0 - e) / (1.0 + e);
    }
    if (z.real() < -19.0) {
        const cxd e = std::exp(2.0 * z);
        return (e - 1.0) / (e + 1.0);
    }
    return std::tanh(z);
}

cxd chi_branch(double gamma, double delta_ae, double kappa) {
    const cxd gd(gamma, delta_ae);
    cxd chi = std::sqrt(gd * gd - 4.0 * gamma * kappa);
    if (chi.real() < 0.0) chi = -chi;
    return chi;
}

double bessel_jk(int k, double x) {
    double sign = 1.0;
    if (k < 0) {
        k = -k;
        if (k % 2) sign = -sign;
    }
    if (x < 0.0) {
        x = -x;
        if (k % 2) sign = -sign;
    }
    return sign * std::cyl_bessel_j(static_cast<double>(k), x);
}

// Drift matrix of the closure/Lindblad two-mode dynamics.
Eigen::Matrix2cd two_mode_drift(const CoefficientState& f, double t,
                                const SystemParams& p) {
    const double u = std::sqrt(p.kappa);
    const double dab = p.drive.at(t);
    const double w0 = p.frame_offset;
    Eigen::Matrix2cd a;
    a << cxd(0.0, -w0) - u * f.F1, -u * f.F2,
        -u * f.F1, cxd(0.0, -(w0 + dab)) - u * f.F2;
    return a;
}

Eigen::Matrix3cd tripartite_drift(double t, const SystemParams& p,
                                  const OUKernel& k) {
    const double g_coupling = std::sqrt(k.gamma * p.kappa / 2.0); // g sqrt(kappa)
    const double dab = p.drive.at(t);
    const double w0 = p.frame_offset;
    Eigen::Matrix3d h;
    h << w0, 0.0, g_coupling,
        0.0, w0 + dab, g_coupling,
        g_coupling, g_coupling, w0 + p.delta_ae;
    Eigen::Matrix3cd a = cxd(0.0, -1.0) * h;
    a(2, 2) -= k.gamma;
    return a;
}

} // namespace

double thermal_occupation(double omega_rad_s, double temperature_k) {
    if (omega_rad_s <= 0.0 || temperature_k <= 0.0)
        throw std::invalid_argument("thermal_occupation: need positive Omega, T");
    return 1.0 / std::expm1(kHbar * omega_rad_s / (kBoltzmann * temperature_k));
}

double thermal_temperature(double omega_rad_s, double n_bar) {
    if (omega_rad_s <= 0.0 || n_bar <= 0.0)
        throw std::invalid_argument("thermal_temperature: need positive Omega, n");
    return kHbar * omega_rad_s / (kBoltzmann * std::log1p(1.0 / n_bar));
}

cxd ou_kernel(double t, double s, const OUKernel& k) {
    if (t < s) throw std::invalid_argument("ou_kernel: requires t >= s");
    if (k.gamma <= 0.0) throw std::invalid_argument("ou_kernel: gamma must be > 0");
    return 0.5 * k.gamma * std::exp(-(cxd(k.gamma, k.Omega)) * (t - s));
}

CoefficientState riccati_rhs(const CoefficientState& f, double t,
                             const SystemParams& p, const OUKernel& k) {
    const double u = std::sqrt(p.kappa);
    const double dab = p.drive.at(t);
    const cxd src = 0.5 * k.gamma * u;
    const cxd common = u * (f.F1 + f.F2);
    CoefficientState d;
    d.F1 = src + (common - cxd(k.gamma, p.delta_ae)) * f.F1;
    d.F2 = src + (common - cxd(k.gamma, p.delta_ae - dab)) * f.F2;
    return d;
}

cxd coefficient_steady_state(double gamma, double delta_ae, double kappa) {
    if (gamma <= 0.0 || kappa <= 0.0)
        throw std::invalid_argument("coefficient_steady_state: bad rates");
    if (std::abs(delta_ae) < 1e-12 && gamma < 4.0 * kappa * (1.0 - 1e-12))
        throw UnstableRegimeError(
            "coefficient_steady_state: gamma/kappa < 4 at delta_AE = 0");
    const cxd chi = chi_branch(gamma, delta_ae, kappa);
    return (cxd(gamma, delta_ae) - chi) / (4.0 * std::sqrt(kappa));
}

double coefficient_decay_rate(double gamma, double delta_ae, double kappa) {
    return chi_branch(gamma, delta_ae, kappa).real();
}

cxd coefficient_transient(double t, double gamma, double delta_ae, double kappa) {
    if (t < 0.0) throw std::invalid_argument("coefficient_transient: t >= 0");
    if (std::abs(delta_ae) < 1e-12 && gamma < 4.0 * kappa * (1.0 - 1e-12))
        throw UnstableRegimeError(
            "coefficient_transient: gamma/kappa < 4 at delta_AE = 0");
    const double u = std::sqrt(kappa);
    const cxd gd(gamma, delta_ae);
    const cxd chi = chi_branch(gamma, delta_ae, kappa);
    if (std::abs(chi) < 1e-12 * (gamma + std::abs(delta_ae) + 1.0))
        return u * 2.0 * kappa * t / (1.0 + 2.0 * kappa * t);

    const cxd phi = std::atanh(gd / chi);
    auto closed = [&](double tt) {
        return (gd - chi * tanh_safe(0.5 * chi * tt + phi)) / (4.0 * u);
    };
    if (std::abs(closed(0.0)) <= 1e-12 * std::abs(gd)) return closed(t);

    // Branch-ambiguous point: fall back to direct integration.
    SystemParams p;
    p.kappa = kappa;
    p.delta_ae = delta_ae;
    OUKernel k{gamma, delta_ae};
    Rhs rhs = [&p, &k](double tt, std::span<const double> y,
                       std::span<double> dy) {
        CoefficientState f{cxd(y[0], y[1]), cxd(y[2], y[3])};
        CoefficientState d = riccati_rhs(f, tt, p, k);
        dy[0] = d.F1.real();
        dy[1] = d.F1.imag();
        dy[2] = d.F2.real();
        dy[3] = d.F2.imag();
    };
    IntegratorConfig cfg;
    cfg.horizon = std::max(t, 1e-6);
    cfg.sample_dt = cfg.horizon;
    Trajectory traj = integrate(rhs, Eigen::Vector4d::Zero(), cfg);
    auto last = traj.sample(traj.times.size() - 1);
    return cxd(last[0], last[1]);
}

double freezing_delta_star(double gamma, double t_n, double n, double kappa) {
    if (gamma <= 0.0 || t_n <= 0.0 || n <= 1.0 || kappa <= 0.0)
        throw std::invalid_argument("freezing_delta_star: bad arguments");
    const double ln_n = std::log(n);
    if (t_n * gamma <= ln_n)
        throw InfeasibleFreezingError(
            "freezing_delta_star: t_n gamma must exceed ln n");
    const double arg =
        2.0 * kappa * t_n * (1.0 / (2.0 * t_n * gamma - ln_n) + 1.0 / ln_n) - 1.0;
    if (arg < 0.0)
        throw InfeasibleFreezingError(
            "freezing_delta_star: no real detuning satisfies the decay demand");
    return std::sqrt(arg) * (t_n * gamma - ln_n) / t_n;
}

double freezing_gamma_bound(const FreezingSpec& spec) {
    if (spec.t_n <= 0.0 || spec.t_s <= 0.0 || spec.n <= 1.0 || spec.n_s <= 1.0)
        throw std::invalid_argument("freezing_gamma_bound: bad spec");
    return std::log(spec.n) / spec.t_n + std::log(spec.n_s) / spec.t_s;
}

LadderMoments markov_moment_rhs(const LadderMoments& m, double t,
                                const SystemParams& p) {
    // Hand-written Lindblad equations, kept independent of the closure
    // generator's matrix route.
    const double k = p.kappa;
    const double hk = 0.5 * k;
    const double dab = p.drive.at(t);
    const double w0 = p.frame_offset;
    const cxd i(0.0, 1.0);
    const cxd nab(m.n_ab);

    LadderMoments d;
    d.mean_a = -i * w0 * m.mean_a - hk * (m.mean_a + m.mean_b);
    d.mean_b = -i * (w0 + dab) * m.mean_b - hk * (m.mean_a + m.mean_b);
    d.m_aa = -2.0 * i * w0 * m.m_aa - k * (m.m_aa + m.m_ab);
    d.m_bb = -2.0 * i * (w0 + dab) * m.m_bb - k * (m.m_bb + m.m_ab);
    d.m_ab = -i * (2.0 * w0 + dab) * m.m_ab -
             hk * (m.m_aa + m.m_bb + 2.0 * m.m_ab);
    d.n_aa = -k * m.n_aa - k * nab.real();
    d.n_bb = -k * m.n_bb - k * nab.real();
    d.n_ab = -i * dab * nab - hk * (m.n_aa + m.n_bb + 2.0 * nab);
    return d;
}

LadderMoments o0_moment_rhs(const LadderMoments& m, const CoefficientState& f,
                            double t, const SystemParams& p) {
    const Eigen::Matrix2cd a = two_mode_drift(f, t, p);

    Eigen::Vector2cd mean(m.mean_a, m.mean_b);
    Eigen::Matrix2cd second;
    second << m.m_aa, m.m_ab, m.m_ab, m.m_bb;
    Eigen::Matrix2cd number;
    number << cxd(m.n_aa, 0.0), m.n_ab, std::conj(m.n_ab), cxd(m.n_bb, 0.0);

    Eigen::Vector2cd dm = a * mean;
    Eigen::Matrix2cd dsec = a * second + second * a.transpose();
    Eigen::Matrix2cd dnum =
        a.conjugate() * number + number * a.transpose();

    LadderMoments d;
    d.mean_a = dm(0);
    d.mean_b = dm(1);
    d.m_aa = dsec(0, 0);
    d.m_bb = dsec(1, 1);
    d.m_ab = 0.5 * (dsec(0, 1) + dsec(1, 0));
    d.n_aa = dnum(0, 0).real();
    d.n_bb = dnum(1, 1).real();
    d.n_ab = dnum(0, 1);
    return d;
}

TripartiteMoments pseudomode_rhs(const TripartiteMoments& m, double t,
                                 const SystemParams& p, const OUKernel& k,
                                 const ThermalBath& bath) {
    const Eigen::Matrix3cd a = tripartite_drift(t, p, k);
    TripartiteMoments d;
    d.mean = a * m.mean;
    d.second = a * m.second + m.second * a.transpose();
    d.number = a.conjugate() * m.number + m.number * a.transpose();
    d.number(2, 2) += 2.0 * k.gamma * bath.n_bar;
    return d;
}

TripartiteMoments pseudomode_initial(const LadderMoments& two_mode,
                                     const ThermalBath& bath) {
    TripartiteMoments t;
    t.mean << two_mode.mean_a, two_mode.mean_b, cxd(0.0, 0.0);
    t.second.setZero();
    t.second(0, 0) = two_mode.m_aa;
    t.second(1, 1) = two_mode.m_bb;
    t.second(0, 1) = t.second(1, 0) = two_mode.m_ab;
    t.number.setZero();
    t.number(0, 0) = two_mode.n_aa;
    t.number(1, 1) = two_mode.n_bb;
    t.number(0, 1) = two_mode.n_ab;
    t.number(1, 0) = std::conj(two_mode.n_ab);
    t.number(2, 2) = bath.n_bar;
    return t;
}

LadderMoments trace_out_pseudomode(const TripartiteMoments& m) {
    LadderMoments two;
    two.mean_a = m.mean(0);
    two.mean_b = m.mean(1);
    two.m_aa = m.second(0, 0);
    two.m_bb = m.second(1, 1);
    two.m_ab = 0.5 * (m.second(0, 1) + m.second(1, 0));
    two.n_aa = m.number(0, 0).real();
    two.n_bb = m.number(1, 1).real();
    two.n_ab = m.number(0, 1);
    return two;
}

JacobiAngerDecomposition jacobi_anger_weights(double delta0, double omega_mod,
                                              int k_min, int k_max) {
    if (omega_mod <= 0.0)
        throw std::invalid_argument("jacobi_anger_weights: omega_mod must be > 0");
    if (k_min > k_max)
        throw std::invalid_argument("jacobi_anger_weights: empty harmonic range");
    const double ratio = delta0 / omega_mod;
    JacobiAngerDecomposition out;
    out.commensurate = std::abs(ratio - std::round(ratio)) < 1e-9;
    if (out.commensurate) out.stationary_k = static_cast<int>(std::round(-ratio));
    for (int k = k_min; k <= k_max; ++k)
        out.harmonics.push_back(
            {k, bessel_jk(k, -ratio), k * omega_mod + delta0});
    return out;
}

cxd phase_accumulation(double t, const DetuningDrive& drive) {
    double integral;
    if (drive.kind == DetuningDrive::Kind::constant) {
        integral = drive.delta0 * t;
    } else {
        integral = drive.delta0 * t +
                   drive.delta0 * (1.0 - std::cos(drive.omega_mod * t)) /
                       drive.omega_mod;
    }
    return std::polar(1.0, integral);
}

// ---- packed systems -------------------------------------------------------

namespace {

void write_cxd(std::span<double> y, int at, cxd v) {
    y[at] = v.real();
    y[at + 1] = v.imag();
}

cxd read_cxd(std::span<const double> y, int at) { return cxd(y[at], y[at + 1]); }

} // namespace

PackedSystem::PackedSystem(const GeneratorSpec& spec) : spec_(spec) {
    // kappa = 0 is allowed as the free-evolution control.
    if (spec.system.kappa < 0.0)
        throw std::invalid_argument("make_generator: kappa must be >= 0");
    if (spec.kind != GeneratorKind::markov && spec.kernel.gamma <= 0.0)
        throw std::invalid_argument("make_generator: gamma must be > 0");
    if (spec.kind == GeneratorKind::o0 &&
        std::abs(spec.system.delta_ae) < 1e-12 &&
        spec.kernel.gamma < 4.0 * spec.system.kappa * (1.0 - 1e-12))
        throw UnstableRegimeError(
            "make_generator: closure refused for gamma/kappa < 4 at delta_AE = 0");
    if (spec.bath.n_bar < 0.0)
        throw std::invalid_argument("make_generator: n_bar must be >= 0");

    n_modes_ = spec.kind == GeneratorKind::pseudomode ? 3 : 2;
    with_coeffs_ = spec.kind == GeneratorKind::o0;
    pair_ = spec.antipodal;
    const int mean_sz = 2 * n_modes_;
    const int pair_sz = pair_ ? mean_sz : 0;
    const int m_sz = n_modes_ * (n_modes_ + 1); // complex upper triangle
    const int n_sz = n_modes_ + n_modes_ * (n_modes_ - 1);
    dim_ = mean_sz + pair_sz + m_sz + n_sz + (with_coeffs_ ? 4 : 0);
}

Eigen::VectorXd PackedSystem::initial(const LadderMoments& state,
                                      const LadderMoments* partner) const {
    if (pair_ && partner == nullptr)
        throw std::invalid_argument("PackedSystem: pair layout needs a partner");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(dim_);
    std::span<double> s{y.data(), static_cast<size_t>(dim_)};

    if (n_modes_ == 2) {
        write_cxd(s, 0, state.mean_a);
        write_cxd(s, 2, state.mean_b);
        int at = 4;
        if (pair_) {
            write_cxd(s, at, partner->mean_a);
            write_cxd(s, at + 2, partner->mean_b);
            at += 4;
        }
        write_cxd(s, at, state.m_aa);
        write_cxd(s, at + 2, state.m_bb);
        write_cxd(s, at + 4, state.m_ab);
        s[at + 6] = state.n_aa;
        s[at + 7] = state.n_bb;
        write_cxd(s, at + 8, state.n_ab);
        // Closure coefficients start at zero.
    } else {
        TripartiteMoments t = pseudomode_initial(state, spec_.bath);
        write_cxd(s, 0, t.mean(0));
        write_cxd(s, 2, t.mean(1));
        write_cxd(s, 4, t.mean(2));
        int at = 6;
        if (pair_) {
            write_cxd(s, at, partner->mean_a);
            write_cxd(s, at + 2, partner->mean_b);
            write_cxd(s, at + 4, cxd(0.0, 0.0));
            at += 6;
        }
        write_cxd(s, at + 0, t.second(0, 0));
        write_cxd(s, at + 2, t.second(1, 1));
        write_cxd(s, at + 4, t.second(2, 2));
        write_cxd(s, at + 6, t.second(0, 1));
        write_cxd(s, at + 8, t.second(0, 2));
        write_cxd(s, at + 10, t.second(1, 2));
        s[at + 12] = t.number(0, 0).real();
        s[at + 13] = t.number(1, 1).real();
        s[at + 14] = t.number(2, 2).real();
        write_cxd(s, at + 15, t.number(0, 1));
        write_cxd(s, at + 17, t.number(0, 2));
        write_cxd(s, at + 19, t.number(1, 2));
    }
    return y;
}

TripartiteMoments PackedSystem::tripartite(std::span<const double> y,
                                           bool partner) const {
    if (n_modes_ != 3)
        throw std::logic_error("PackedSystem: not a tripartite layout");
    TripartiteMoments t;
    int at = 6;
    if (partner) {
        if (!pair_) throw std::logic_error("PackedSystem: no partner in layout");
        t.mean << read_cxd(y, 6), read_cxd(y, 8), read_cxd(y, 10);
    } else {
        t.mean << read_cxd(y, 0), read_cxd(y, 2), read_cxd(y, 4);
    }
    if (pair_) at += 6;
    t.second(0, 0) = read_cxd(y, at + 0);
    t.second(1, 1) = read_cxd(y, at + 2);
    t.second(2, 2) = read_cxd(y, at + 4);
    t.second(0, 1) = t.second(1, 0) = read_cxd(y, at + 6);
    t.second(0, 2) = t.second(2, 0) = read_cxd(y, at + 8);
    t.second(1, 2) = t.second(2, 1) = read_cxd(y, at + 10);
    t.number(0, 0) = y[at + 12];
    t.number(1, 1) = y[at + 13];
    t.number(2, 2) = y[at + 14];
    t.number(0, 1) = read_cxd(y, at + 15);
    t.number(1, 0) = std::conj(t.number(0, 1));
    t.number(0, 2) = read_cxd(y, at + 17);
    t.number(2, 0) = std::conj(t.number(0, 2));
    t.number(1, 2) = read_cxd(y, at + 19);
    t.number(2, 1) = std::conj(t.number(1, 2));
    return t;
}

LadderMoments PackedSystem::two_mode(std::span<const double> y,
                                     bool partner) const {
    if (n_modes_ == 3) return trace_out_pseudomode(tripartite(y, partner));
    LadderMoments m;
    int at = 4;
    if (partner) {
        if (!pair_) throw std::logic_error("PackedSystem: no partner in layout");
        m.mean_a = read_cxd(y, 4);
        m.mean_b = read_cxd(y, 6);
    } else {
        m.mean_a = read_cxd(y, 0);
        m.mean_b = read_cxd(y, 2);
    }
    if (pair_) at += 4;
    m.m_aa = read_cxd(y, at);
    m.m_bb = read_cxd(y, at + 2);
    m.m_ab = read_cxd(y, at + 4);
    m.n_aa = y[at + 6];
    m.n_bb = y[at + 7];
    m.n_ab = read_cxd(y, at + 8);
    return m;
}

CoefficientState PackedSystem::coefficients(std::span<const double> y) const {
    if (!with_coeffs_)
        throw std::logic_error("PackedSystem: layout has no coefficients");
    const int at = dim_ - 4;
    return {read_cxd(y, at), read_cxd(y, at + 2)};
}

Rhs PackedSystem::rhs() const {
    const PackedSystem self = *this; // value capture keeps the lambda standalone
    if (n_modes_ == 2) {
        return [self](double t, std::span<const double> y, std::span<double> dy) {
            const GeneratorSpec& sp = self.spec_;
            LadderMoments m = self.two_mode(y);
            CoefficientState f;
            if (self.with_coeffs_) f = self.coefficients(y);

            LadderMoments d;
            if (sp.kind == GeneratorKind::markov) {
                d = markov_moment_rhs(m, t, sp.system);
            } else {
                d = o0_moment_rhs(m, f, t, sp.system);
            }

            write_cxd(dy, 0, d.mean_a);
            write_cxd(dy, 2, d.mean_b);
            int at = 4;
            if (self.pair_) {
                LadderMoments pm = m;
                pm.mean_a = read_cxd(y, 4);
                pm.mean_b = read_cxd(y, 6);
                LadderMoments pd = sp.kind == GeneratorKind::markov
                                       ? markov_moment_rhs(pm, t, sp.system)
                                       : o0_moment_rhs(pm, f, t, sp.system);
                write_cxd(dy, 4, pd.mean_a);
                write_cxd(dy, 6, pd.mean_b);
                at += 4;
            }
            write_cxd(dy, at, d.m_aa);
            write_cxd(dy, at + 2, d.m_bb);
            write_cxd(dy, at + 4, d.m_ab);
            dy[at + 6] = d.n_aa;
            dy[at + 7] = d.n_bb;
            write_cxd(dy, at + 8, d.n_ab);
            if (self.with_coeffs_) {
                CoefficientState df = riccati_rhs(f, t, sp.system, sp.kernel);
                write_cxd(dy, at + 10, df.F1);
                write_cxd(dy, at + 12, df.F2);
            }
        };
    }
    return [self](double t, std::span<const double> y, std::span<double> dy) {
        const GeneratorSpec& sp = self.spec_;
        TripartiteMoments m = self.tripartite(y);
        TripartiteMoments d = pseudomode_rhs(m, t, sp.system, sp.kernel, sp.bath);

        write_cxd(dy, 0, d.mean(0));
        write_cxd(dy, 2, d.mean(1));
        write_cxd(dy, 4, d.mean(2));
        int at = 6;
        if (self.pair_) {
            TripartiteMoments pm = m;
            pm.mean << read_cxd(y, 6), read_cxd(y, 8), read_cxd(y, 10);
            TripartiteMoments pd =
                pseudomode_rhs(pm, t, sp.system, sp.kernel, sp.bath);
            write_cxd(dy, 6, pd.mean(0));
            write_cxd(dy, 8, pd.mean(1));
            write_cxd(dy, 10, pd.mean(2));
            at += 6;
        }
        write_cxd(dy, at + 0, d.second(0, 0));
        write_cxd(dy, at + 2, d.second(1, 1));
        write_cxd(dy, at + 4, d.second(2, 2));
        write_cxd(dy, at + 6, 0.5 * (d.second(0, 1) + d.second(1, 0)));
        write_cxd(dy, at + 8, 0.5 * (d.second(0, 2) + d.second(2, 0)));
        write_cxd(dy, at + 10, 0.5 * (d.second(1, 2) + d.second(2, 1)));
        dy[at + 12] = d.number(0, 0).real();
        dy[at + 13] = d.number(1, 1).real();
        dy[at + 14] = d.number(2, 2).real();
        write_cxd(dy, at + 15, d.number(0, 1));
        write_cxd(dy, at + 17, d.number(0, 2));
        write_cxd(dy, at + 19, d.number(1, 2));
    };
}

PackedSystem make_generator(const GeneratorSpec& spec) {
    return PackedSystem(spec);
}

} // namespace cvlab
