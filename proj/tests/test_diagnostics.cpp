#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cvlab/diagnostics.hpp"
#include "cvlab/dynamics.hpp"

using namespace cvlab;
using doctest::Approx;

namespace {

struct PairRun {
    PackedSystem sys;
    Trajectory traj;
};

PairRun run_pair(const GeneratorSpec& base, const SqueezeSpec& input,
                 double horizon, double sample_dt) {
    GeneratorSpec gs = base;
    gs.antipodal = true;
    PackedSystem sys = make_generator(gs);
    auto [plus, minus] = antipodal_pair(prepare_squeezed_coherent(input));
    Eigen::VectorXd y0 = sys.initial(plus, &minus);
    IntegratorConfig cfg;
    cfg.horizon = horizon;
    cfg.sample_dt = sample_dt;
    return {sys, integrate(sys.rhs(), y0, cfg)};
}

} // namespace

TEST_CASE("antipodal pair construction") {
    LadderMoments init = prepare_squeezed_coherent({0.6, -0.2});
    SUBCASE("zero base mean gives an identical pair") {
        WitnessConfig cfg;
        cfg.base_mean.setZero();
        auto [p, m] = antipodal_pair(init, cfg);
        CHECK(std::abs(p.mean_a) == 0.0);
        CHECK(std::abs(p.mean_a - m.mean_a) == 0.0);
        CHECK(bures_distance(moments_to_quadrature(p), moments_to_quadrature(m)) ==
              Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("default base mean: opposite means, shared covariance") {
        auto [p, m] = antipodal_pair(init);
        CHECK(std::abs(p.mean_a + m.mean_a) == Approx(0.0).epsilon(1e-14));
        CHECK(std::abs(p.mean_b + m.mean_b) == Approx(0.0).epsilon(1e-14));
        QuadratureState qp = moments_to_quadrature(p);
        QuadratureState qm = moments_to_quadrature(m);
        CHECK((qp.sigma - qm.sigma).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((qp.R + qm.R).cwiseAbs().maxCoeff() < 1e-13);
        // Initial Bures distance from the equal-covariance exponential form.
        Eigen::VectorXd delta = qm.R - qp.R;
        const double f0 = std::exp(
            -0.25 * delta.dot((2.0 * qp.sigma).inverse() * delta));
        CHECK(bures_distance(qp, qm) ==
              Approx(std::sqrt(2.0 * (1.0 - f0))).epsilon(1e-12));
    }
}

TEST_CASE("pair evolved separately keeps opposite means and equal covariances") {
    GeneratorSpec gs{GeneratorKind::markov};
    PackedSystem sys = make_generator(gs);
    auto [plus, minus] = antipodal_pair(prepare_squeezed_coherent({0.5, 0.5}));
    IntegratorConfig cfg;
    cfg.horizon = 10.0;
    cfg.sample_dt = 0.1;
    Trajectory ta = integrate(sys.rhs(), sys.initial(plus), cfg);
    Trajectory tb = integrate(sys.rhs(), sys.initial(minus), cfg);
    for (size_t i = 0; i < ta.times.size(); i += 10) {
        QuadratureState qa = moments_to_quadrature(sys.two_mode(ta.sample(i)));
        QuadratureState qb = moments_to_quadrature(sys.two_mode(tb.sample(i)));
        CHECK((qa.R + qb.R).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((qa.sigma - qb.sigma).cwiseAbs().maxCoeff() < 1e-10);
    }
    // The grid-checked bures_series accepts matching trajectories.
    auto dec = [&](std::span<const double> y) { return sys.two_mode(y); };
    Series s = bures_series(ta, dec, tb, dec);
    CHECK(s.values.front() > 0.0);

    Trajectory shorter = ta;
    shorter.times.pop_back();
    CHECK_THROWS_AS(bures_series(shorter, dec, tb, dec), std::invalid_argument);
}

TEST_CASE("en series on markov baselines") {
    SUBCASE("aligned inputs plateau at the closed-form value") {
        GeneratorSpec gs{GeneratorKind::markov};
        PackedSystem sys = make_generator(gs);
        IntegratorConfig cfg;
        cfg.horizon = 40.0;
        cfg.sample_dt = 0.05;
        Trajectory tr =
            integrate(sys.rhs(), sys.initial(prepare_squeezed_coherent({1.0, 1.0})), cfg);
        Series s = en_series(tr, [&](std::span<const double> y) {
            return sys.two_mode(y);
        });
        CHECK(s.values.back() == Approx(1.0).epsilon(1e-6));
        for (auto f : s.flagged) CHECK(f == 0);
    }
    SUBCASE("orthogonal inputs stay at zero") {
        GeneratorSpec gs{GeneratorKind::markov};
        PackedSystem sys = make_generator(gs);
        IntegratorConfig cfg;
        cfg.horizon = 20.0;
        cfg.sample_dt = 0.05;
        Trajectory tr = integrate(
            sys.rhs(), sys.initial(prepare_squeezed_coherent({1.0, -1.0})), cfg);
        Series s = en_series(tr, [&](std::span<const double> y) {
            return sys.two_mode(y);
        });
        for (double v : s.values) CHECK(v < 1e-10);
    }
    SUBCASE("corrupted samples are flagged and the series continues") {
        GeneratorSpec gs{GeneratorKind::markov};
        PackedSystem sys = make_generator(gs);
        IntegratorConfig cfg;
        cfg.horizon = 1.0;
        cfg.sample_dt = 0.5;
        Trajectory tr = integrate(
            sys.rhs(), sys.initial(prepare_squeezed_coherent({0.5, 0.5})), cfg);
        // Scale down the number expectations to break the bona fide condition.
        tr.states(1, 10) = -0.4;
        tr.states(1, 11) = -0.4;
        Series s = en_series(tr, [&](std::span<const double> y) {
            return sys.two_mode(y);
        });
        CHECK(s.flagged[1] == 1);
        CHECK(s.flagged[0] == 0);
        CHECK(s.values.size() == tr.times.size());
    }
}

TEST_CASE("markov witness vanishes and bures contracts monotonically") {
    PairRun run = run_pair({GeneratorKind::markov}, {0.7, 0.7}, 30.0, 0.02);
    auto plus = [&](std::span<const double> y) { return run.sys.two_mode(y); };
    auto minus = [&](std::span<const double> y) {
        return run.sys.two_mode(y, true);
    };
    Series db = bures_series(run.traj, plus, minus);
    for (size_t i = 1; i < db.values.size(); ++i)
        CHECK(db.values[i] <= db.values[i - 1] + 1e-10);
    CHECK(witness_N(db) <= 1e-8);
}

TEST_CASE("witness is stable under grid refinement") {
    GeneratorSpec gs{GeneratorKind::o0};
    gs.kernel.gamma = 1.0;
    gs.system.delta_ae = 1.0;
    gs.system.drive = {DetuningDrive::Kind::constant, -0.8, 1.0};
    auto witness_at = [&](double dt) {
        PairRun run = run_pair(gs, {1.0, -1.0}, 40.0, dt);
        auto plus = [&](std::span<const double> y) { return run.sys.two_mode(y); };
        auto minus = [&](std::span<const double> y) {
            return run.sys.two_mode(y, true);
        };
        return witness_N(bures_series(run.traj, plus, minus));
    };
    const double base = witness_at(0.01);
    const double fine = witness_at(0.005);
    CHECK(base > 0.0); // structured near-resonant point shows backflow
    CHECK(std::abs(base - fine) < 1e-5);
}

TEST_CASE("time averaged entanglement") {
    SUBCASE("constant series") {
        Series s;
        for (int i = 0; i <= 100; ++i) {
            s.times.push_back(0.1 * i);
            s.values.push_back(0.37);
        }
        CHECK(time_avg_en(s, 10.0) == Approx(0.37).epsilon(1e-12));
    }
    SUBCASE("linearity and boundedness") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        Series a, b, sum;
        for (int i = 0; i <= 500; ++i) {
            const double t = 0.02 * i;
            a.times.push_back(t);
            b.times.push_back(t);
            sum.times.push_back(t);
            a.values.push_back(u(rng));
            b.values.push_back(u(rng));
            sum.values.push_back(a.values.back() + 0.5 * b.values.back());
        }
        const double lhs = time_avg_en(sum, 10.0);
        const double rhs = time_avg_en(a, 10.0) + 0.5 * time_avg_en(b, 10.0);
        CHECK(lhs == Approx(rhs).epsilon(1e-12));
        CHECK(time_avg_en(a, 10.0) <=
              *std::max_element(a.values.begin(), a.values.end()));
    }
    SUBCASE("T beyond the horizon is rejected") {
        Series s;
        s.times = {0.0, 1.0};
        s.values = {1.0, 1.0};
        CHECK_THROWS_AS(time_avg_en(s, 2.0), std::invalid_argument);
    }
}

TEST_CASE("relative deviation masking") {
    Series base, test;
    for (int i = 0; i < 50; ++i) {
        base.times.push_back(0.1 * i);
        test.times.push_back(0.1 * i);
        base.values.push_back(i < 25 ? 0.001 : 1.0);
        test.values.push_back(i < 25 ? 0.002 : 1.1);
    }
    DeviationCurve c = relative_deviation(test, base, 0.01);
    for (int i = 0; i < 25; ++i) CHECK(c.masked[i] == 1);
    for (int i = 25; i < 50; ++i) {
        CHECK(c.masked[i] == 0);
        CHECK(c.percent[i] == Approx(10.0).epsilon(1e-12));
    }
    DeviationCurve zero = relative_deviation(base, base, 0.01);
    for (int i = 25; i < 50; ++i) CHECK(zero.percent[i] == 0.0);
}
