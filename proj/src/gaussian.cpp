#include "cvlab/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cvlab {

namespace {

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

bool all_finite(const Eigen::MatrixXcd& m) {
    return m.allFinite();
}

// Mean difference as quadrature vector for n modes.
Eigen::VectorXd quadrature_mean(const Eigen::VectorXcd& mean) {
    const int n = static_cast<int>(mean.size());
    Eigen::VectorXd r(2 * n);
    const double s2 = std::numbers::sqrt2;
    for (int i = 0; i < n; ++i) {
        r(i) = s2 * mean(i).real();
        r(n + i) = s2 * mean(i).imag();
    }
    return r;
}

} // namespace

cxd default_displacement() {
    return std::sqrt(5.0) * std::polar(1.0, std::numbers::pi / 4.0);
}

PhysicalityError::PhysicalityError(const PhysicalityReport& r)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "state failed physicality checks: nu_min=" << r.nu_min
             << " min_eigen=" << r.min_eigen
             << " max_asymmetry=" << r.max_asymmetry;
          return os.str();
      }()),
      report(r) {}

Eigen::MatrixXd symplectic_form(int n_modes) {
    if (n_modes < 1)
        throw std::invalid_argument("symplectic_form: n_modes must be >= 1");
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
    j.topRightCorner(n_modes, n_modes).setIdentity();
    j.bottomLeftCorner(n_modes, n_modes) =
        -Eigen::MatrixXd::Identity(n_modes, n_modes);
    return j;
}

LadderMoments prepare_squeezed_coherent(const SqueezeSpec& spec) {
    if (!std::isfinite(spec.s_a) || !std::isfinite(spec.s_b) ||
        !std::isfinite(spec.alpha.real()) || !std::isfinite(spec.alpha.imag()) ||
        !std::isfinite(spec.beta.real()) || !std::isfinite(spec.beta.imag()))
        throw std::invalid_argument("prepare_squeezed_coherent: non-finite spec");
    if (std::abs(spec.s_a) > 5.0 || std::abs(spec.s_b) > 5.0)
        throw std::invalid_argument(
            "prepare_squeezed_coherent: |s| beyond exploratory range 5");

    auto single = [](double s, cxd mu) {
        // s > 0 squeezes the x quadrature of the mode.
        cxd m2 = mu * mu - 0.5 * sgn(s) * std::sinh(2.0 * std::abs(s));
        double n = std::norm(mu) + std::sinh(s) * std::sinh(s);
        return std::pair<cxd, double>{m2, n};
    };

    LadderMoments m;
    m.mean_a = spec.alpha;
    m.mean_b = spec.beta;
    auto [maa, naa] = single(spec.s_a, spec.alpha);
    auto [mbb, nbb] = single(spec.s_b, spec.beta);
    m.m_aa = maa;
    m.m_bb = mbb;
    m.n_aa = naa;
    m.n_bb = nbb;
    // Product state: cross moments factorize.
    m.m_ab = spec.alpha * spec.beta;
    m.n_ab = std::conj(spec.alpha) * spec.beta;
    return m;
}

QuadratureState moments_to_quadrature_n(const Eigen::VectorXcd& mean,
                                        const Eigen::MatrixXcd& second,
                                        const Eigen::MatrixXcd& number) {
    const int n = static_cast<int>(mean.size());
    if (second.rows() != n || second.cols() != n || number.rows() != n ||
        number.cols() != n)
        throw std::invalid_argument("moments_to_quadrature: shape mismatch");
    if (!mean.allFinite() || !all_finite(second) || !all_finite(number))
        throw std::invalid_argument("moments_to_quadrature: non-finite moments");

    // Centered moments; Hermitian symmetry of N enforced by construction.
    Eigen::MatrixXcd mc = second - mean * mean.transpose();
    Eigen::MatrixXcd ncRaw = number - mean.conjugate() * mean.transpose();
    Eigen::MatrixXcd nc = 0.5 * (ncRaw + ncRaw.adjoint());
    mc = 0.5 * (mc + mc.transpose()).eval();

    QuadratureState q;
    q.n_modes = n;
    q.R = quadrature_mean(mean);
    q.sigma.resize(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dij = (i == j) ? kVacuumVariance : 0.0;
            const double reM = mc(i, j).real(), imM = mc(i, j).imag();
            const double reN = nc(i, j).real(), imN = nc(i, j).imag();
            q.sigma(i, j) = reM + reN + dij;          // x_i x_j
            q.sigma(n + i, n + j) = -reM + reN + dij; // p_i p_j
            q.sigma(i, n + j) = imM + imN;            // x_i p_j
            q.sigma(n + i, j) = imM - imN;            // p_i x_j
        }
    }
    return q;
}

QuadratureState moments_to_quadrature(const LadderMoments& m) {
    Eigen::Vector2cd mean(m.mean_a, m.mean_b);
    Eigen::Matrix2cd second;
    second << m.m_aa, m.m_ab, m.m_ab, m.m_bb;
    Eigen::Matrix2cd number;
    number << cxd(m.n_aa, 0.0), m.n_ab, std::conj(m.n_ab), cxd(m.n_bb, 0.0);
    return moments_to_quadrature_n(mean, second, number);
}

std::vector<double> symplectic_spectrum(const Eigen::MatrixXd& sigma) {
    const int dim = static_cast<int>(sigma.rows());
    if (dim != sigma.cols() || dim % 2 != 0 || dim == 0)
        throw std::invalid_argument("symplectic_spectrum: need 2n x 2n matrix");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw std::invalid_argument("symplectic_spectrum: matrix not symmetric");

    const int n = dim / 2;
    Eigen::MatrixXd js = symplectic_form(n) * sigma;
    Eigen::EigenSolver<Eigen::MatrixXd> es(js, false);
    std::vector<double> mods(dim);
    for (int i = 0; i < dim; ++i) mods[i] = std::abs(es.eigenvalues()(i));
    std::sort(mods.begin(), mods.end());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = 0.5 * (mods[2 * i] + mods[2 * i + 1]);
    return out;
}

double nu_minus_invariant(const Eigen::MatrixXd& sigma4) {
    if (sigma4.rows() != 4 || sigma4.cols() != 4)
        throw std::invalid_argument("nu_minus_invariant: need a 4x4 covariance");
    // Per-mode 2x2 blocks in (x_a, x_b, p_a, p_b) ordering.
    Eigen::Matrix2d a, b, c;
    a << sigma4(0, 0), sigma4(0, 2), sigma4(2, 0), sigma4(2, 2);
    b << sigma4(1, 1), sigma4(1, 3), sigma4(3, 1), sigma4(3, 3);
    c << sigma4(0, 1), sigma4(0, 3), sigma4(2, 1), sigma4(2, 3);
    // Partial transpose flips det C.
    const double delta = a.determinant() + b.determinant() - 2.0 * c.determinant();
    const double det = sigma4.determinant();
    const double disc = std::max(0.0, delta * delta - 4.0 * det);
    const double nu2 = 0.5 * (delta - std::sqrt(disc));
    return std::sqrt(std::max(0.0, nu2));
}

PhysicalityReport check_physical(const QuadratureState& q) {
    PhysicalityReport r;
    if (q.n_modes < 1 || q.sigma.rows() != 2 * q.n_modes) return r;
    r.max_asymmetry = (q.sigma - q.sigma.transpose()).cwiseAbs().maxCoeff();
    r.is_symmetric = r.max_asymmetry <= kSymmetryTol;

    Eigen::MatrixXd sym = 0.5 * (q.sigma + q.sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    r.min_eigen = es.eigenvalues().minCoeff();

    auto nus = symplectic_spectrum(sym);
    r.nu_min = nus.front();
    r.bona_fide = r.nu_min >= kVacuumVariance - kNuMinTol;
    return r;
}

double log_negativity(const QuadratureState& q) {
    if (q.n_modes != 2)
        throw std::invalid_argument("log_negativity: two-mode states only");
    PhysicalityReport rep = check_physical(q);
    if (!rep.ok()) throw PhysicalityError(rep);

    Eigen::Vector4d p(1.0, 1.0, -1.0, 1.0);
    Eigen::MatrixXd tilde = p.asDiagonal() * q.sigma * p.asDiagonal();
    const double nu = symplectic_spectrum(tilde).front();
    return std::max(0.0, -std::log(2.0 * nu));
}

double fidelity_f0(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2) {
    const int dim = static_cast<int>(sigma1.rows());
    if (sigma2.rows() != dim || dim % 2 != 0 || dim == 0)
        throw std::invalid_argument("fidelity_f0: shape mismatch");
    const int n = dim / 2;

    Eigen::MatrixXd s = sigma1 + sigma2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
        throw NumericalDegeneracyError("fidelity: sigma1 + sigma2 ill-conditioned");
    Eigen::MatrixXd sinv = es.eigenvectors() *
                           es.eigenvalues().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();

    // Eigenvalues of W = sigma_aux J give det[ sqrt(I + W^-2 / 4) + I ] by
    // spectral mapping.
    Eigen::MatrixXd j = symplectic_form(n);
    Eigen::MatrixXd aux = j.transpose() * sinv * (0.25 * j + sigma2 * j * sigma1);
    Eigen::MatrixXd w = aux * j;
    Eigen::EigenSolver<Eigen::MatrixXd> ew(w, false);
    cxd factor(1.0, 0.0);
    for (int i = 0; i < dim; ++i) {
        cxd mu = ew.eigenvalues()(i);
        if (std::abs(mu) < 1e-10)
            throw NumericalDegeneracyError("fidelity: degenerate auxiliary matrix");
        factor *= std::sqrt(cxd(1.0, 0.0) + 1.0 / (4.0 * mu * mu)) + 1.0;
    }
    const double det_aux = (std::pow(2.0, dim) * aux.determinant());
    const double det_s = s.determinant();
    const double f0_4 = std::max(0.0, (factor * det_aux).real() / det_s);
    return std::pow(f0_4, 0.25);
}

double fidelity(const QuadratureState& q1, const QuadratureState& q2) {
    if (q1.n_modes != q2.n_modes || q1.n_modes < 1)
        throw std::invalid_argument("fidelity: mode count mismatch");

    const double scale = std::max(1.0, q1.sigma.cwiseAbs().maxCoeff());
    const bool equal_cov =
        (q1.sigma - q2.sigma).cwiseAbs().maxCoeff() <= 1e-12 * scale;

    double f0 = 1.0;
    Eigen::MatrixXd s = q1.sigma + q2.sigma;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
        throw NumericalDegeneracyError("fidelity: sigma1 + sigma2 ill-conditioned");
    if (!equal_cov) f0 = fidelity_f0(q1.sigma, q2.sigma);

    Eigen::MatrixXd sinv = es.eigenvectors() *
                           es.eigenvalues().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();
    Eigen::VectorXd delta = q2.R - q1.R;
    const double expo = std::exp(-0.25 * delta.dot(sinv * delta));
    return std::min(1.0, f0 * expo);
}

double bures_distance(const QuadratureState& q1, const QuadratureState& q2) {
    const double f = fidelity(q1, q2);
    return std::sqrt(std::max(0.0, 2.0 * (1.0 - f)));
}

std::optional<double> simon_threshold(double s_fixed, SimonBranch branch) {
    if (!std::isfinite(s_fixed))
        throw std::invalid_argument("simon_threshold: non-finite squeezing");
    if (branch == SimonBranch::positive) {
        const double rem = 2.0 - std::exp(-2.0 * s_fixed);
        if (rem <= 0.0) return std::nullopt;
        return -0.5 * std::log(rem); // partner must exceed this
    }
    const double rem = 2.0 - std::exp(2.0 * s_fixed);
    if (rem <= 0.0) return std::nullopt;
    return 0.5 * std::log(rem); // partner must stay below this
}

QuadratureState steady_covariance(double s_a, double s_b, cxd alpha, cxd beta) {
    auto block = [&](double sign) {
        const double e = std::exp(sign * 2.0 * s_a) + std::exp(sign * 2.0 * s_b);
        Eigen::Matrix2d blk;
        blk << 2.0 + e, 2.0 - e, 2.0 - e, 2.0 + e;
        return blk;
    };
    QuadratureState q;
    q.n_modes = 2;
    q.sigma = Eigen::MatrixXd::Zero(4, 4);
    q.sigma.topLeftCorner(2, 2) = block(-1.0) / 8.0;
    q.sigma.bottomRightCorner(2, 2) = block(+1.0) / 8.0;

    const cxd ma = 0.5 * (alpha - beta);
    Eigen::Vector2cd mean(ma, -ma);
    q.R = quadrature_mean(mean);
    return q;
}

std::pair<double, double> steady_symplectic_eigs(double s_a, double s_b,
                                                 double n_bar) {
    if (n_bar < 0.0)
        throw std::invalid_argument("steady_symplectic_eigs: n_bar must be >= 0");
    const double common =
        std::sqrt(std::exp(2.0 * s_a) + std::exp(2.0 * s_b)) /
        (2.0 * std::numbers::sqrt2);
    const double thermal = std::sqrt(1.0 + 2.0 * n_bar);
    return {thermal * common * std::exp(-(s_a + s_b)), thermal * common};
}

LadderMoments bright_dark_transform(const LadderMoments& m) {
    LadderMoments d;
    const double h = 0.5;
    d.mean_a = (m.mean_a + m.mean_b) / std::numbers::sqrt2; // d+
    d.mean_b = (m.mean_a - m.mean_b) / std::numbers::sqrt2; // d-
    d.m_aa = h * (m.m_aa + 2.0 * m.m_ab + m.m_bb);
    d.m_bb = h * (m.m_aa - 2.0 * m.m_ab + m.m_bb);
    d.m_ab = h * (m.m_aa - m.m_bb);
    d.n_aa = h * (m.n_aa + m.n_bb) + m.n_ab.real();
    d.n_bb = h * (m.n_aa + m.n_bb) - m.n_ab.real();
    d.n_ab = cxd(h * (m.n_aa - m.n_bb), -m.n_ab.imag());
    return d;
}

} // namespace cvlab
