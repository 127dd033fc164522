#include "cvlab/diagnostics.hpp"

#include <cmath>
#include <numbers>

namespace cvlab {

WitnessConfig::WitnessConfig() {
    const cxd mu = default_displacement();
    const double x = std::numbers::sqrt2 * mu.real();
    const double p = std::numbers::sqrt2 * mu.imag();
    base_mean << x, x, p, p;
}

std::pair<LadderMoments, LadderMoments> antipodal_pair(
    const LadderMoments& initial, const WitnessConfig& cfg) {
    // Centered second moments of the input are preserved; means become +/- R0.
    const cxd ma(cfg.base_mean(0) / std::numbers::sqrt2,
                 cfg.base_mean(2) / std::numbers::sqrt2);
    const cxd mb(cfg.base_mean(1) / std::numbers::sqrt2,
                 cfg.base_mean(3) / std::numbers::sqrt2);

    auto with_means = [&](cxd a, cxd b) {
        LadderMoments m;
        m.mean_a = a;
        m.mean_b = b;
        m.m_aa = (initial.m_aa - initial.mean_a * initial.mean_a) + a * a;
        m.m_bb = (initial.m_bb - initial.mean_b * initial.mean_b) + b * b;
        m.m_ab = (initial.m_ab - initial.mean_a * initial.mean_b) + a * b;
        m.n_aa = initial.n_aa - std::norm(initial.mean_a) + std::norm(a);
        m.n_bb = initial.n_bb - std::norm(initial.mean_b) + std::norm(b);
        m.n_ab = (initial.n_ab - std::conj(initial.mean_a) * initial.mean_b) +
                 std::conj(a) * b;
        return m;
    };
    return {with_means(ma, mb), with_means(-ma, -mb)};
}

Series en_series(const Trajectory& traj, const TwoModeDecoder& decode) {
    Series s;
    const size_t n = traj.times.size();
    s.times = traj.times;
    s.values.resize(n);
    s.flagged.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        QuadratureState q = moments_to_quadrature(decode(traj.sample(i)));
        PhysicalityReport rep = check_physical(q);
        if (!rep.ok()) {
            s.flagged[i] = 1;
            // Continue with the PT spectrum of the symmetrized matrix.
            Eigen::Vector4d p(1.0, 1.0, -1.0, 1.0);
            Eigen::MatrixXd sym = 0.5 * (q.sigma + q.sigma.transpose());
            Eigen::MatrixXd tilde = p.asDiagonal() * sym * p.asDiagonal();
            const double nu = symplectic_spectrum(tilde).front();
            s.values[i] = std::max(0.0, -std::log(2.0 * nu));
        } else {
            s.values[i] = log_negativity(q);
        }
    }
    return s;
}

namespace {

Series bures_of(const std::vector<double>& times,
                const std::function<LadderMoments(size_t)>& plus,
                const std::function<LadderMoments(size_t)>& minus) {
    Series s;
    s.times = times;
    s.values.resize(times.size());
    s.flagged.assign(times.size(), 0);
    for (size_t i = 0; i < times.size(); ++i) {
        QuadratureState q1 = moments_to_quadrature(plus(i));
        QuadratureState q2 = moments_to_quadrature(minus(i));
        if (!check_physical(q1).ok() || !check_physical(q2).ok()) s.flagged[i] = 1;
        s.values[i] = bures_distance(q1, q2);
    }
    return s;
}

} // namespace

Series bures_series(const Trajectory& traj, const TwoModeDecoder& decode_plus,
                    const TwoModeDecoder& decode_minus) {
    return bures_of(
        traj.times,
        [&](size_t i) { return decode_plus(traj.sample(i)); },
        [&](size_t i) { return decode_minus(traj.sample(i)); });
}

Series bures_series(const Trajectory& a, const TwoModeDecoder& decode_a,
                    const Trajectory& b, const TwoModeDecoder& decode_b) {
    if (a.times.size() != b.times.size())
        throw std::invalid_argument("bures_series: sampling grids differ");
    for (size_t i = 0; i < a.times.size(); ++i)
        if (std::abs(a.times[i] - b.times[i]) > 1e-12)
            throw std::invalid_argument("bures_series: sampling grids differ");
    return bures_of(
        a.times,
        [&](size_t i) { return decode_a(a.sample(i)); },
        [&](size_t i) { return decode_b(b.sample(i)); });
}

double witness_N(const Series& bures) {
    double acc = 0.0;
    for (size_t i = 1; i < bures.values.size(); ++i) {
        const double inc = bures.values[i] - bures.values[i - 1];
        if (inc > 0.0) acc += inc;
    }
    return acc;
}

double time_avg_en(const Series& s, double T) {
    if (s.times.size() < 2) throw std::invalid_argument("time_avg_en: empty series");
    if (T <= 0.0 || T > s.times.back() + 1e-9)
        throw std::invalid_argument("time_avg_en: T outside the sampled horizon");
    double acc = 0.0;
    double t_prev = s.times[0], v_prev = s.values[0];
    for (size_t i = 1; i < s.times.size() && t_prev < T; ++i) {
        double t = s.times[i], v = s.values[i];
        if (t > T) { // clip the last panel at T
            const double w = (T - t_prev) / (t - t_prev);
            v = v_prev + w * (v - v_prev);
            t = T;
        }
        acc += 0.5 * (v + v_prev) * (t - t_prev);
        t_prev = t;
        v_prev = v;
    }
    return acc / T;
}

DeviationCurve relative_deviation(const Series& test, const Series& baseline,
                                  double floor) {
    if (test.times.size() != baseline.times.size())
        throw std::invalid_argument("relative_deviation: grids differ");
    DeviationCurve c;
    c.floor = floor;
    c.times = test.times;
    c.percent.resize(test.times.size(), 0.0);
    c.masked.assign(test.times.size(), 0);
    for (size_t i = 0; i < test.times.size(); ++i) {
        if (baseline.values[i] > floor) {
            c.percent[i] = std::abs(test.values[i] - baseline.values[i]) /
                           baseline.values[i] * 100.0;
        } else {
            c.masked[i] = 1;
        }
    }
    return c;
}

} // namespace cvlab
