#include "cvlab/fock.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace cvlab {

namespace {

using SpMat = Eigen::SparseMatrix<cxd>;
using Triplet = Eigen::Triplet<cxd>;

// Annihilation operator of one mode embedded in the tensor space.
SpMat annihilation(const std::vector<int>& dims, int mode) {
    const int n_modes = static_cast<int>(dims.size());
    int dim = 1;
    for (int d : dims) dim *= d;
    int stride = 1;
    for (int k = mode + 1; k < n_modes; ++k) stride *= dims[k];

    std::vector<Triplet> trip;
    trip.reserve(dim);
    for (int flat = 0; flat < dim; ++flat) {
        const int nk = (flat / stride) % dims[mode];
        if (nk >= 1)
            trip.emplace_back(flat - stride, flat, cxd(std::sqrt(double(nk)), 0.0));
    }
    SpMat a(dim, dim);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

struct GklsOps {
    SpMat h_static;                 // frame Hamiltonian minus the drive term
    SpMat n_b;                      // b^dag b (drive multiplies this)
    std::vector<SpMat> jumps;       // L_j
    std::vector<SpMat> jumps_adj;   // L_j^dag, prebuilt
    std::vector<SpMat> jump_grams;  // L_j^dag L_j
    // work buffers reused across rhs evaluations
    mutable Eigen::MatrixXcd w1, w2;
};

GklsOps build_ops(const std::vector<int>& dims, const FockEvolveParams& p) {
    GklsOps ops;
    const SpMat a = annihilation(dims, 0);
    const SpMat b = annihilation(dims, 1);
    const double w0 = p.system.frame_offset;
    const SpMat n_a = SpMat(a.adjoint()) * a;
    ops.n_b = SpMat(b.adjoint()) * b;

    if (p.generator == FockGenerator::markov) {
        ops.h_static = w0 * n_a + w0 * ops.n_b;
        SpMat l = std::sqrt(p.system.kappa) * SpMat(a + b);
        ops.jumps_adj.push_back(SpMat(l.adjoint()));
        ops.jump_grams.push_back(ops.jumps_adj.back() * l);
        ops.jumps.push_back(std::move(l));
        return ops;
    }

    const SpMat c = annihilation(dims, 2);
    const SpMat n_c = SpMat(c.adjoint()) * c;
    const double g = std::sqrt(p.kernel.gamma / 2.0) * std::sqrt(p.system.kappa);
    SpMat coupling = SpMat(a + b) * SpMat(c.adjoint());
    coupling = SpMat(coupling + SpMat(coupling.adjoint()));
    ops.h_static = w0 * n_a + w0 * ops.n_b +
                   (w0 + p.system.delta_ae) * n_c + g * coupling;

    const double gm = p.kernel.gamma;
    SpMat l_minus = std::sqrt(2.0 * gm * (p.bath.n_bar + 1.0)) * c;
    ops.jumps_adj.push_back(SpMat(l_minus.adjoint()));
    ops.jump_grams.push_back(ops.jumps_adj.back() * l_minus);
    ops.jumps.push_back(std::move(l_minus));
    if (p.bath.n_bar > 0.0) {
        SpMat l_plus = std::sqrt(2.0 * gm * p.bath.n_bar) * SpMat(c.adjoint());
        ops.jumps_adj.push_back(SpMat(l_plus.adjoint()));
        ops.jump_grams.push_back(ops.jumps_adj.back() * l_plus);
        ops.jumps.push_back(std::move(l_plus));
    }
    return ops;
}

void gkls_rhs(const GklsOps& ops, const DetuningDrive& drive, double t,
              const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) {
    const cxd i(0.0, 1.0);
    const double dab = drive.at(t);
    const long n = rho.rows();
    ops.w1.resize(n, n);
    ops.w2.resize(n, n);
    ops.w1.noalias() = ops.h_static * rho;
    ops.w1.noalias() += dab * (ops.n_b * rho);
    ops.w2.noalias() = rho * ops.h_static;
    ops.w2.noalias() += dab * (rho * ops.n_b);
    out = -i * (ops.w1 - ops.w2);
    for (size_t j = 0; j < ops.jumps.size(); ++j) {
        ops.w1.noalias() = ops.jumps[j] * rho;
        out.noalias() += ops.w1 * ops.jumps_adj[j];
        out.noalias() -= 0.5 * (ops.jump_grams[j] * rho);
        out.noalias() -= 0.5 * (rho * ops.jump_grams[j]);
    }
}

double boundary_population(const DensityOperator& r) {
    const int n_modes = static_cast<int>(r.dims.size());
    double acc = 0.0;
    for (int flat = 0; flat < r.dim(); ++flat) {
        int rem = flat;
        bool boundary = false;
        for (int k = n_modes - 1; k >= 0; --k) {
            if (rem % r.dims[k] == r.dims[k] - 1) boundary = true;
            rem /= r.dims[k];
        }
        if (boundary) acc += r.rho(flat, flat).real();
    }
    return acc;
}

} // namespace

Eigen::VectorXcd fock_prepare_vector(double s, cxd alpha, int cutoff) {
    if (cutoff < 2) throw std::invalid_argument("fock_prepare_vector: cutoff < 2");
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(cutoff, cutoff);
    for (int n = 1; n < cutoff; ++n) a(n - 1, n) = std::sqrt(double(n));
    Eigen::MatrixXcd adag = a.adjoint();

    Eigen::MatrixXcd squeeze_gen = 0.5 * s * (a * a - adag * adag);
    Eigen::MatrixXcd disp_gen = alpha * adag - std::conj(alpha) * a;

    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(cutoff);
    v(0) = 1.0;
    v = squeeze_gen.exp() * v;
    v = disp_gen.exp() * v;
    return v;
}

DensityOperator fock_prepare(const SqueezeSpec& spec, const FockConfig& cfg) {
    if (std::abs(spec.s_a) > cfg.squeeze_cap || std::abs(spec.s_b) > cfg.squeeze_cap)
        throw TruncationRiskError("fock_prepare: squeezing beyond cap");
    if (std::abs(spec.alpha) > cfg.displacement_cap ||
        std::abs(spec.beta) > cfg.displacement_cap)
        throw TruncationRiskError("fock_prepare: displacement beyond cap");

    const int cut = cfg.cutoff_per_mode > 0 ? cfg.cutoff_per_mode : 10;
    Eigen::VectorXcd va = fock_prepare_vector(spec.s_a, spec.alpha, cut);
    Eigen::VectorXcd vb = fock_prepare_vector(spec.s_b, spec.beta, cut);

    Eigen::VectorXcd psi(cut * cut);
    for (int i = 0; i < cut; ++i)
        for (int j = 0; j < cut; ++j) psi(i * cut + j) = va(i) * vb(j);

    DensityOperator r;
    r.dims = {cut, cut};
    r.rho = psi * psi.adjoint();
    return r;
}

DensityOperator fock_thermal_state(int cutoff, double n_bar) {
    DensityOperator r;
    r.dims = {cutoff};
    r.rho = Eigen::MatrixXcd::Zero(cutoff, cutoff);
    if (n_bar <= 0.0) {
        r.rho(0, 0) = 1.0;
        return r;
    }
    double norm = 0.0;
    for (int n = 0; n < cutoff; ++n) {
        const double p = std::pow(n_bar / (1.0 + n_bar), n) / (1.0 + n_bar);
        r.rho(n, n) = p;
        norm += p;
    }
    r.rho /= norm; // renormalize the truncated geometric tail
    return r;
}

DensityOperator fock_tensor(const DensityOperator& a, const DensityOperator& b) {
    DensityOperator r;
    r.dims = a.dims;
    r.dims.insert(r.dims.end(), b.dims.begin(), b.dims.end());
    const int da = a.dim(), db = b.dim();
    r.rho.resize(da * db, da * db);
    for (int i = 0; i < da; ++i)
        for (int j = 0; j < da; ++j)
            r.rho.block(i * db, j * db, db, db) = a.rho(i, j) * b.rho;
    return r;
}

FockRunStats fock_evolve(const DensityOperator& rho0,
                         const FockEvolveParams& params,
                         const FockSampler& sampler) {
    const int expect_modes = params.generator == FockGenerator::markov ? 2 : 3;
    if (static_cast<int>(rho0.dims.size()) != expect_modes)
        throw std::invalid_argument("fock_evolve: mode count mismatch");
    if (params.dt <= 0.0 || params.sample_dt < params.dt)
        throw std::invalid_argument("fock_evolve: bad step sizes");

    GklsOps ops = build_ops(rho0.dims, params);
    DensityOperator state = rho0;
    FockRunStats stats;

    const long n_steps = std::lround(params.horizon / params.dt);
    const long stride = std::max(1L, std::lround(params.sample_dt / params.dt));

    Eigen::MatrixXcd k1, k2, k3, k4, tmp;
    auto monitor = [&](double t, bool check_positivity) {
        const double trace_err = std::abs(state.rho.trace() - cxd(1.0, 0.0));
        stats.max_trace_error = std::max(stats.max_trace_error, trace_err);
        if (trace_err > params.leakage_tol)
            throw LeakageBreach(t, "fock_evolve: trace drift beyond tolerance");
        const double herm =
            (state.rho - state.rho.adjoint()).cwiseAbs().maxCoeff();
        stats.max_hermiticity_error = std::max(stats.max_hermiticity_error, herm);
        stats.max_boundary_population =
            std::max(stats.max_boundary_population, boundary_population(state));
        if (check_positivity) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
                0.5 * (state.rho + state.rho.adjoint()),
                Eigen::EigenvaluesOnly);
            stats.min_eigenvalue =
                std::min(stats.min_eigenvalue, es.eigenvalues().minCoeff());
        }
    };

    monitor(0.0, true);
    sampler(0.0, state);
    for (long step = 1; step <= n_steps; ++step) {
        const double t = (step - 1) * params.dt;
        const double h = params.dt;
        gkls_rhs(ops, params.system.drive, t, state.rho, k1);
        tmp = state.rho + 0.5 * h * k1;
        gkls_rhs(ops, params.system.drive, t + 0.5 * h, tmp, k2);
        tmp = state.rho + 0.5 * h * k2;
        gkls_rhs(ops, params.system.drive, t + 0.5 * h, tmp, k3);
        tmp = state.rho + h * k3;
        gkls_rhs(ops, params.system.drive, t + h, tmp, k4);
        state.rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if (step % stride == 0 || step == n_steps) {
            const double tt = step * params.dt;
            monitor(tt, step % (stride * 10) == 0 || step == n_steps);
            sampler(tt, state);
        }
    }
    return stats;
}

double fock_negativity(const DensityOperator& rho, int mode) {
    if (rho.dims.size() != 2)
        throw std::invalid_argument("fock_negativity: two-mode operator expected");
    if (mode != 0 && mode != 1)
        throw std::invalid_argument("fock_negativity: mode out of range");
    const int d0 = rho.dims[0], d1 = rho.dims[1];
    Eigen::MatrixXcd pt(rho.rho.rows(), rho.rho.cols());
    for (int i1 = 0; i1 < d0; ++i1)
        for (int i2 = 0; i2 < d1; ++i2)
            for (int j1 = 0; j1 < d0; ++j1)
                for (int j2 = 0; j2 < d1; ++j2) {
                    const int r = i1 * d1 + i2, c = j1 * d1 + j2;
                    const int rt = mode == 0 ? j1 * d1 + i2 : i1 * d1 + j2;
                    const int ct = mode == 0 ? i1 * d1 + j2 : j1 * d1 + i2;
                    pt(rt, ct) = rho.rho(r, c);
                }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        0.5 * (pt + pt.adjoint()), Eigen::EigenvaluesOnly);
    const double trace_norm = es.eigenvalues().cwiseAbs().sum();
    return std::log(std::max(1.0, trace_norm));
}

DensityOperator fock_partial_trace_last(const DensityOperator& rho) {
    if (rho.dims.size() < 2)
        throw std::invalid_argument("fock_partial_trace_last: nothing to trace");
    const int dl = rho.dims.back();
    const int dr = rho.dim() / dl;
    DensityOperator out;
    out.dims.assign(rho.dims.begin(), rho.dims.end() - 1);
    out.rho = Eigen::MatrixXcd::Zero(dr, dr);
    for (int i = 0; i < dr; ++i)
        for (int j = 0; j < dr; ++j)
            for (int k = 0; k < dl; ++k)
                out.rho(i, j) += rho.rho(i * dl + k, j * dl + k);
    return out;
}

LadderMoments fock_two_mode_moments(const DensityOperator& rho) {
    if (rho.dims.size() != 2)
        throw std::invalid_argument("fock_two_mode_moments: need two modes");
    const SpMat a = annihilation(rho.dims, 0);
    const SpMat b = annihilation(rho.dims, 1);
    auto expval = [&](const SpMat& op) {
        cxd acc(0.0, 0.0);
        for (int k = 0; k < op.outerSize(); ++k)
            for (SpMat::InnerIterator it(op, k); it; ++it)
                acc += it.value() * rho.rho(it.col(), it.row());
        return acc;
    };
    LadderMoments m;
    m.mean_a = expval(a);
    m.mean_b = expval(b);
    m.m_aa = expval(SpMat(a * a));
    m.m_bb = expval(SpMat(b * b));
    m.m_ab = expval(SpMat(a * b));
    m.n_aa = expval(SpMat(SpMat(a.adjoint()) * a)).real();
    m.n_bb = expval(SpMat(SpMat(b.adjoint()) * b)).real();
    m.n_ab = expval(SpMat(SpMat(a.adjoint()) * b));
    return m;
}

double fock_purity(const DensityOperator& rho) {
    return rho.rho.squaredNorm();
}

double fock_overlap(const Eigen::VectorXcd& psi1, const Eigen::VectorXcd& psi2) {
    if (psi1.size() != psi2.size())
        throw std::invalid_argument("fock_overlap: dimension mismatch");
    return std::abs(psi1.dot(psi2));
}

} // namespace cvlab
