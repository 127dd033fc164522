#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "cvlab/dynamics.hpp"
#include "cvlab/integrator.hpp"

using namespace cvlab;
using doctest::Approx;

TEST_CASE("scalar exponential decay") {
    Rhs rhs = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -y[0];
    };
    IntegratorConfig cfg;
    cfg.horizon = 10.0;
    cfg.sample_dt = 0.1;
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    Trajectory tr = integrate(rhs, y0, cfg);
    CHECK(tr.times.back() == Approx(10.0));
    CHECK(std::abs(tr.states(tr.times.size() - 1, 0) - std::exp(-10.0)) < 1e-10);
    // Dense output matches the exact solution on interior samples too.
    for (size_t i = 0; i < tr.times.size(); i += 7)
        CHECK(std::abs(tr.states(i, 0) - std::exp(-tr.times[i])) < 1e-10);
}

TEST_CASE("norm conservation for skew generator over long horizon") {
    // y' = i y as interleaved real pair.
    Rhs rhs = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -y[1];
        dy[1] = y[0];
    };
    IntegratorConfig cfg;
    cfg.horizon = 150.0;
    cfg.sample_dt = 0.01;
    Eigen::VectorXd y0(2);
    y0 << 1.0, 0.0;
    Trajectory tr = integrate(rhs, y0, cfg);
    const long last = static_cast<long>(tr.times.size()) - 1;
    const double norm = std::hypot(tr.states(last, 0), tr.states(last, 1));
    CHECK(std::abs(norm - 1.0) < 1e-9);
}

TEST_CASE("riccati rational asymptote at the degenerate point") {
    SystemParams p;
    p.kappa = 1.0;
    p.delta_ae = 0.0;
    OUKernel k{4.0, 0.0};
    Rhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
        CoefficientState f{cxd(y[0], y[1]), cxd(y[2], y[3])};
        CoefficientState d = riccati_rhs(f, t, p, k);
        dy[0] = d.F1.real();
        dy[1] = d.F1.imag();
        dy[2] = d.F2.real();
        dy[3] = d.F2.imag();
    };
    IntegratorConfig cfg;
    cfg.horizon = 20.0;
    cfg.sample_dt = 0.05;
    Trajectory tr = integrate(rhs, Eigen::VectorXd::Zero(4), cfg);
    for (size_t i = 0; i < tr.times.size(); ++i) {
        const double t = tr.times[i];
        const double expect = 2.0 * t / (1.0 + 2.0 * t);
        CHECK(std::abs(tr.states(i, 0) - expect) < 1e-8);
        CHECK(std::abs(tr.states(i, 1)) < 1e-10);
    }
}

TEST_CASE("observed order matches the nominal order") {
    // Fixed-step convergence on y' = lambda y.
    const double lambda = -3.0;
    Rhs rhs = [&](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = lambda * y[0];
    };
    auto global_error = [&](double h) {
        Eigen::VectorXd y(1), ynext(1), err(1);
        y << 1.0;
        double t = 0.0;
        const int n = static_cast<int>(std::lround(1.0 / h));
        for (int i = 0; i < n; ++i) {
            dopri5_step(rhs, t, y, h, ynext, err);
            y = ynext;
            t += h;
        }
        return std::abs(y(0) - std::exp(lambda));
    };
    const double e1 = global_error(0.05);
    const double e2 = global_error(0.025);
    const double order = std::log2(e1 / e2);
    CHECK(order > 4.5);
    CHECK(order < 5.5);
}

TEST_CASE("linear system agrees with the matrix exponential") {
    std::mt19937 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n = 8;
    Eigen::MatrixXd l(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) l(i, j) = g(rng);
    l -= 2.0 * Eigen::MatrixXd::Identity(n, n);

    Rhs rhs = [&](double, std::span<const double> y, std::span<double> dy) {
        Eigen::Map<const Eigen::VectorXd> ym(y.data(), n);
        Eigen::Map<Eigen::VectorXd> dm(dy.data(), n);
        dm = l * ym;
    };
    Eigen::VectorXd y0(n);
    for (int i = 0; i < n; ++i) y0(i) = g(rng);

    IntegratorConfig cfg;
    cfg.horizon = 3.0;
    cfg.sample_dt = 0.5;
    Trajectory tr = integrate(rhs, y0, cfg);
    Eigen::VectorXd expect = (3.0 * l).exp() * y0;
    const long last = static_cast<long>(tr.times.size()) - 1;
    CHECK((tr.states.row(last).transpose() - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("deterministic replay is bit identical") {
    Rhs rhs = [](double t, std::span<const double> y, std::span<double> dy) {
        dy[0] = std::sin(t) - 0.3 * y[0];
        dy[1] = y[0] - y[1];
    };
    IntegratorConfig cfg;
    cfg.horizon = 25.0;
    cfg.sample_dt = 0.05;
    Eigen::VectorXd y0(2);
    y0 << 0.4, -1.0;
    Trajectory a = integrate(rhs, y0, cfg);
    Trajectory b = integrate(rhs, y0, cfg);
    REQUIRE(a.states.size() == b.states.size());
    CHECK(std::memcmp(a.states.data(), b.states.data(),
                      sizeof(double) * a.states.size()) == 0);
}

TEST_CASE("convergence probe") {
    Observable amp = [](double, std::span<const double> y) {
        return std::abs(y[0]);
    };
    SUBCASE("passes at production tolerances") {
        Rhs rhs = [](double, std::span<const double> y, std::span<double> dy) {
            dy[0] = -y[1];
            dy[1] = y[0];
        };
        IntegratorConfig cfg;
        cfg.horizon = 50.0;
        cfg.sample_dt = 0.02;
        Eigen::VectorXd y0(2);
        y0 << 1.0, 0.0;
        auto rep = convergence_probe(rhs, y0, cfg, {amp});
        CHECK(rep.pass);
        CHECK(rep.max_deltas[0] < 1e-6);
        CHECK(rep.integrated < 1e-5);
    }
    SUBCASE("flags deliberately loose tolerances") {
        Rhs rhs = [](double t, std::span<const double> y, std::span<double> dy) {
            dy[0] = -y[1] * (1.0 + 0.5 * std::sin(0.3 * t));
            dy[1] = y[0];
        };
        IntegratorConfig cfg;
        cfg.horizon = 120.0;
        cfg.sample_dt = 0.02;
        cfg.rel_tol = 1e-3;
        cfg.abs_tol = 1e-3;
        Eigen::VectorXd y0(2);
        y0 << 1.0, 0.0;
        auto rep = convergence_probe(rhs, y0, cfg, {amp});
        CHECK_FALSE(rep.pass);
    }
    SUBCASE("constant rhs gives zero deltas") {
        Rhs rhs = [](double, std::span<const double>, std::span<double> dy) {
            dy[0] = 1.0;
        };
        IntegratorConfig cfg;
        cfg.horizon = 5.0;
        cfg.sample_dt = 0.1;
        Eigen::VectorXd y0(1);
        y0 << 0.0;
        auto rep = convergence_probe(rhs, y0, cfg, {amp});
        CHECK(rep.max_deltas[0] == Approx(0.0).epsilon(1e-14));
        CHECK(rep.pass);
    }
}

TEST_CASE("step underflow raises a stiffness failure with the time") {
    // Derivative turns non-finite beyond t = 1: every step across is rejected.
    Rhs rhs = [](double t, std::span<const double> y, std::span<double> dy) {
        dy[0] = t < 1.0 ? -y[0] : std::numeric_limits<double>::quiet_NaN();
    };
    IntegratorConfig cfg;
    cfg.horizon = 2.0;
    cfg.sample_dt = 0.1;
    cfg.stiff_fallback = false;
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    try {
        integrate(rhs, y0, cfg);
        FAIL("expected StiffnessFailure");
    } catch (const StiffnessFailure& e) {
        CHECK(e.t_fail == Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("implicit fallback engages on forced rejections") {
    // Fast linear decay with a large initial step guess: the first steps are
    // rejected, and a low threshold routes them into the implicit branch.
    Rhs rhs = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -1e6 * y[0];
    };
    IntegratorConfig cfg;
    cfg.horizon = 0.1;
    cfg.sample_dt = 0.01;
    cfg.stiff_reject_threshold = 1;
    cfg.rel_tol = 1e-8;
    cfg.abs_tol = 1e-8;
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    Trajectory tr = integrate(rhs, y0, cfg);
    CHECK(tr.stats.stiff_fallback_used);
    CHECK(std::abs(tr.states(tr.times.size() - 1, 0)) < 1e-3);
}

TEST_CASE("grid spacing is uniform") {
    Rhs rhs = [](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = -y[0];
    };
    IntegratorConfig cfg;
    cfg.horizon = 1.5;
    cfg.sample_dt = 0.01;
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    Trajectory tr = integrate(rhs, y0, cfg);
    CHECK(tr.times.size() == 151);
    for (size_t i = 1; i < tr.times.size(); ++i)
        CHECK(std::abs(tr.times[i] - tr.times[i - 1] - 0.01) < 1e-12);
}
