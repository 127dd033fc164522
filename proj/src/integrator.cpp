#include "cvlab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvlab {

namespace {

// Dormand-Prince 5(4) tableau (Hairer, Norsett, Wanner).
constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
constexpr double a21 = 0.2;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Dense-output coefficients.
constexpr double d1 = -12715105075.0 / 11282082432.0,
                 d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0,
                 d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0,
                 d7 = 69997945.0 / 29380423.0;

struct Stepper {
    const Rhs& rhs;
    int n;
    StepStats stats;
    Eigen::VectorXd k1, k2, k3, k4, k5, k6, k7, ytmp;

    Stepper(const Rhs& f, int dim) : rhs(f), n(dim) {
        for (auto* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp}) v->resize(n);
    }

    void eval(double t, const Eigen::VectorXd& y, Eigen::VectorXd& out) {
        rhs(t, {y.data(), size_t(n)}, {out.data(), size_t(n)});
        ++stats.rhs_evals;
    }

    // k1 must hold f(t, y) on entry (FSAL). Produces y_new and k2..k7.
    void step(double t, double h, const Eigen::VectorXd& y,
              Eigen::VectorXd& y_new) {
        ytmp = y + h * a21 * k1;
        eval(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        eval(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        eval(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        eval(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        eval(t + h, ytmp, k6);
        y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        eval(t + h, y_new, k7);
    }

    double error_norm(double h, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& y_new, double atol,
                      double rtol) const {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double e = h * (e1 * k1(i) + e3 * k3(i) + e4 * k4(i) +
                                  e5 * k5(i) + e6 * k6(i) + e7 * k7(i));
            const double sc =
                atol + rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
            const double q = e / sc;
            acc += q * q;
        }
        const double nrm = std::sqrt(acc / n);
        return std::isfinite(nrm) ? nrm : std::numeric_limits<double>::infinity();
    }
};

double initial_step(const Rhs& rhs, double t0, const Eigen::VectorXd& y0,
                    double atol, double rtol, double hmax, StepStats& stats) {
    const int n = static_cast<int>(y0.size());
    Eigen::VectorXd f0(n);
    rhs(t0, {y0.data(), size_t(n)}, {f0.data(), size_t(n)});
    ++stats.rhs_evals;
    double dn = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
        const double sc = atol + rtol * std::abs(y0(i));
        dn += (y0(i) / sc) * (y0(i) / sc);
        fn += (f0(i) / sc) * (f0(i) / sc);
    }
    double h = (dn > 0 && fn > 0) ? 0.01 * std::sqrt(dn / fn) : 1e-6;
    return std::min(h, hmax);
}

// Newton-damped implicit Euler burst for stiff stretches. Finite-difference
// Jacobian; advances a handful of steps before handing back to the explicit
// method.
double implicit_euler_burst(const Rhs& rhs, double t, double h, int n_steps,
                            Eigen::VectorXd& y, StepStats& stats) {
    const int n = static_cast<int>(y.size());
    Eigen::VectorXd f(n), fp(n), x(n), res(n);
    Eigen::MatrixXd jac(n, n);
    for (int s = 0; s < n_steps; ++s) {
        const double tn = t + h;
        x = y;
        for (int it = 0; it < 25; ++it) {
            rhs(tn, {x.data(), size_t(n)}, {f.data(), size_t(n)});
            ++stats.rhs_evals;
            res = y + h * f - x;
            if (res.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + x.cwiseAbs().maxCoeff()))
                break;
            for (int j = 0; j < n; ++j) {
                const double eps = std::sqrt(std::numeric_limits<double>::epsilon()) *
                                   std::max(1.0, std::abs(x(j)));
                Eigen::VectorXd xp = x;
                xp(j) += eps;
                rhs(tn, {xp.data(), size_t(n)}, {fp.data(), size_t(n)});
                ++stats.rhs_evals;
                jac.col(j) = (fp - f) / eps;
            }
            Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - h * jac;
            x += m.partialPivLu().solve(res);
        }
        y = x;
        t = tn;
        ++stats.accepted;
    }
    return t;
}

} // namespace

void dopri5_step(const Rhs& rhs, double t, const Eigen::VectorXd& y, double h,
                 Eigen::VectorXd& y_out, Eigen::VectorXd& err_out) {
    Stepper st(rhs, static_cast<int>(y.size()));
    st.eval(t, y, st.k1);
    st.step(t, h, y, y_out);
    err_out.resize(y.size());
    for (int i = 0; i < y.size(); ++i)
        err_out(i) = h * (e1 * st.k1(i) + e3 * st.k3(i) + e4 * st.k4(i) +
                          e5 * st.k5(i) + e6 * st.k6(i) + e7 * st.k7(i));
}

Trajectory integrate(const Rhs& rhs, const Eigen::VectorXd& y0,
                     const IntegratorConfig& cfg) {
    if (cfg.sample_dt <= 0 || cfg.sample_dt > cfg.horizon || cfg.rel_tol <= 0 ||
        cfg.abs_tol <= 0)
        throw std::invalid_argument("integrate: bad integrator config");
    const int n = static_cast<int>(y0.size());
    const long n_samples =
        static_cast<long>(std::floor(cfg.horizon / cfg.sample_dt + 1e-9)) + 1;

    Trajectory traj;
    traj.times.resize(n_samples);
    for (long i = 0; i < n_samples; ++i) traj.times[i] = i * cfg.sample_dt;
    traj.states.resize(n_samples, n);
    traj.states.row(0) = y0.transpose();

    const double t_end = traj.times.back();
    const double hmax = cfg.max_step > 0 ? cfg.max_step : t_end;
    const double hmin = 1e-14 * cfg.horizon;

    Stepper st(rhs, n);
    Eigen::VectorXd y = y0, ynew(n);
    double t = 0.0;
    double h = initial_step(rhs, 0.0, y0, cfg.abs_tol, cfg.rel_tol, hmax, st.stats);
    st.eval(0.0, y, st.k1);
    long next_sample = 1;
    int consecutive_rejects = 0;

    Eigen::VectorXd rc2(n), rc3(n), rc4(n), rc5(n);

    while (next_sample < n_samples) {
        h = std::min(h, hmax);
        if (t + h > t_end) h = t_end - t;
        if (h < hmin) throw StiffnessFailure(t, "integrate: step size underflow");

        st.step(t, h, y, ynew);
        const double err = st.error_norm(h, y, ynew, cfg.abs_tol, cfg.rel_tol);

        if (err <= 1.0) {
            consecutive_rejects = 0;
            ++st.stats.accepted;
            // Continuous extension over [t, t+h] for the grid points inside.
            rc2 = ynew - y;
            rc3 = h * st.k1 - rc2;
            rc4 = rc2 - h * st.k7 - rc3;
            rc5 = h * (d1 * st.k1 + d3 * st.k3 + d4 * st.k4 + d5 * st.k5 +
                       d6 * st.k6 + d7 * st.k7);
            while (next_sample < n_samples &&
                   traj.times[next_sample] <= t + h + 1e-14 * cfg.horizon) {
                const double th = (traj.times[next_sample] - t) / h;
                const double th1 = 1.0 - th;
                traj.states.row(next_sample) =
                    (y + th * (rc2 + th1 * (rc3 + th * (rc4 + th1 * rc5)))).transpose();
                ++next_sample;
            }
            t += h;
            y.swap(ynew);
            st.k1.swap(st.k7); // FSAL
            const double fac =
                std::clamp(0.9 * std::pow(err > 0 ? err : 1e-30, -0.2), 0.2, 5.0);
            h *= fac;
        } else {
            ++st.stats.rejected;
            ++consecutive_rejects;
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5);
            if (cfg.stiff_fallback &&
                consecutive_rejects >= cfg.stiff_reject_threshold) {
                st.stats.stiff_fallback_used = true;
                const double t_before = t;
                t = implicit_euler_burst(rhs, t, std::max(h, hmin), 10, y, st.stats);
                // Grid points crossed by the burst: fill by nearest state.
                while (next_sample < n_samples && traj.times[next_sample] <= t)
                    traj.states.row(next_sample++) = y.transpose();
                (void)t_before;
                st.eval(t, y, st.k1);
                consecutive_rejects = 0;
                h = std::max(h * 10.0, hmin * 100.0);
            }
        }
    }
    traj.stats = st.stats;
    return traj;
}

ConvergenceReport convergence_probe(const Rhs& rhs, const Eigen::VectorXd& y0,
                                    const IntegratorConfig& cfg,
                                    const std::vector<Observable>& observables) {
    Trajectory base = integrate(rhs, y0, cfg);
    IntegratorConfig fine = cfg;
    fine.sample_dt = cfg.sample_dt / 2.0;
    fine.rel_tol = std::max(cfg.rel_tol * 1e-2, 1e-15);
    fine.abs_tol = std::max(cfg.abs_tol * 1e-2, 1e-15);
    Trajectory ref = integrate(rhs, y0, fine);

    ConvergenceReport rep;
    rep.max_deltas.assign(observables.size(), 0.0);
    double worst_integral = 0.0;
    for (size_t k = 0; k < observables.size(); ++k) {
        double integral = 0.0, prev = 0.0;
        for (size_t i = 0; i < base.times.size(); ++i) {
            const double t = base.times[i];
            const double vb = observables[k](t, base.sample(i));
            const double vr = observables[k](t, ref.sample(2 * i));
            const double d = std::abs(vb - vr);
            rep.max_deltas[k] = std::max(rep.max_deltas[k], d);
            if (i > 0) integral += 0.5 * (d + prev) * cfg.sample_dt;
            prev = d;
        }
        worst_integral = std::max(worst_integral, integral);
    }
    rep.integrated = worst_integral;
    rep.pass = rep.integrated < rep.tol_integrated;
    for (double d : rep.max_deltas) rep.pass = rep.pass && d < rep.tol_max;
    return rep;
}

} // namespace cvlab
