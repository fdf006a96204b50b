#pragma once

#include "collision.hpp"
#include "hypocoercivity.hpp"
#include "parallel.hpp"
#include "vpb_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpb {

/// Raised when the low-frequency group does not consist of exactly five eigenvalues.
class BranchCountError : public std::runtime_error {
public:
    BranchCountError(double s, int count)
        : std::runtime_error("expected five low-frequency eigenvalues at s = " + std::to_string(s) + ", found " + std::to_string(count) +
                             " (radius r0 exceeded)"),
          s_(s), count_(count)
    {
    }
    double s() const { return s_; }
    int count() const { return count_; }

private:
    double s_;
    int count_;
};

/// B_eps(xi) = -s(z) L - i (v.xi) - eps^2 i (v.xi)/|xi|^2 <., 1>, so that G(n) = B_eps(eps n)/eps^2.
struct FrequencyOperator {
    double epsilon = 1.0;
    Eigen::Vector3d xi = Eigen::Vector3d::Zero();
    Eigen::MatrixXcd B;
    double tau = 1.0; // symmetrizing weight of the chi_0 coefficient
};

inline FrequencyOperator assemble_B(const CollisionModel& model, double eps, const Eigen::Vector3d& xi, double z = 0.0)
{
    const HermiteBasis& b = model.basis();
    const Eigen::Index m = Eigen::Index(b.size());
    RealMatrix S = RealMatrix::Zero(m, m);
    for (int i = 0; i < 3; ++i)
        if (xi(i) != 0.0) S += xi(i) * b.multiply_v_matrix(i);
    FrequencyOperator f;
    f.epsilon = eps;
    f.xi = xi;
    f.B.resize(m, m);
    f.B.real() = -model.scale(z) * model.L();
    f.B.imag() = -S;
    const double s2 = xi.squaredNorm();
    if (s2 > 0.0) {
        f.B.col(0).imag() -= (eps * eps / s2) * S.col(0);
        f.tau = std::sqrt(1.0 + eps * eps / s2);
    }
    return f;
}

/// (f,g)_xi = (f,g) + (eps^2/|xi|^2) P_d f conj(P_d g), linear in f.
inline cplx xi_inner(double eps, const Eigen::Vector3d& xi, const VelocityVector& f, const VelocityVector& g)
{
    cplx v = g.dot(f);
    const double s2 = xi.squaredNorm();
    if (s2 > 0.0) v += eps * eps / s2 * f(0) * std::conj(g(0));
    return v;
}

/// Full eigendecomposition B = V diag(lambda) V^{-1}, computed in symmetrized coordinates.
struct FullSpectrum {
    Eigen::VectorXcd lambda;
    Eigen::MatrixXcd V, Vinv;
};

inline FullSpectrum decompose(const FrequencyOperator& f)
{
    Eigen::MatrixXcd Bt = f.B;
    Bt.row(0) *= f.tau;
    Bt.col(0) /= f.tau;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Bt);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed for B_eps(xi)");
    FullSpectrum out;
    out.lambda = es.eigenvalues();
    out.V = es.eigenvectors();
    out.Vinv = out.V.partialPivLu().inverse();
    out.V.row(0) /= f.tau;
    out.Vinv.col(0) *= f.tau;
    return out;
}

/// The five low-frequency eigenvalues grouped as lambda_{-1}, lambda_0, lambda_1 and the
/// degenerate transverse pair lambda_2 = lambda_3, with their spectral projectors.
struct LowModes {
    std::array<cplx, 4> lambda{};            // order: -1, 0, 1, transverse
    std::array<Eigen::MatrixXcd, 4> P;       // rank 1, 1, 1, 2
    std::array<Eigen::MatrixXcd, 4> vectors; // right eigenvectors (columns)
    std::vector<Eigen::Index> members;       // indices into the full spectrum
};

inline LowModes low_modes(const FullSpectrum& sp, double threshold, double s)
{
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < sp.lambda.size(); ++k)
        if (sp.lambda(k).real() > threshold) idx.push_back(k);
    if (idx.size() != 5) throw BranchCountError(s, int(idx.size()));
    // the transverse pair is the closest pair of eigenvalues
    std::size_t pa = 0, pb = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t c = a + 1; c < 5; ++c) {
            double d = std::abs(sp.lambda(idx[a]) - sp.lambda(idx[c]));
            if (d < best) {
                best = d;
                pa = a;
                pb = c;
            }
        }
    std::vector<Eigen::Index> rest;
    for (std::size_t a = 0; a < 5; ++a)
        if (a != pa && a != pb) rest.push_back(idx[a]);
    std::sort(rest.begin(), rest.end(), [&](Eigen::Index x, Eigen::Index y) { return sp.lambda(x).imag() < sp.lambda(y).imag(); });

    LowModes lm;
    lm.members = idx;
    auto build = [&](int slot, const std::vector<Eigen::Index>& cols) {
        const Eigen::Index m = sp.V.rows();
        Eigen::MatrixXcd R(m, Eigen::Index(cols.size())), W(Eigen::Index(cols.size()), m);
        for (std::size_t c = 0; c < cols.size(); ++c) {
            R.col(Eigen::Index(c)) = sp.V.col(cols[c]);
            W.row(Eigen::Index(c)) = sp.Vinv.row(cols[c]);
        }
        lm.vectors[std::size_t(slot)] = R;
        lm.P[std::size_t(slot)] = R * W;
        cplx mean = 0.0;
        for (Eigen::Index c : cols) mean += sp.lambda(c);
        lm.lambda[std::size_t(slot)] = mean / double(cols.size());
    };
    for (int j = 0; j < 3; ++j) build(j, {rest[std::size_t(j)]});
    build(3, {idx[pa], idx[pb]});
    return lm;
}

/// Spectral projectors at xi (|xi| > 0); the threshold is -a2/2.
inline LowModes projections(const CollisionModel& model, double eps, const Eigen::Vector3d& xi, double threshold = -0.5, double z = 0.0)
{
    return low_modes(decompose(assemble_B(model, eps, xi, z)), threshold, xi.norm());
}

/// S1 = sum_j exp(t lambda_j) P_j g on |xi| <= r0, S2 = exp(t B) g - S1.
inline std::pair<VelocityVector, VelocityVector> semigroup_split(const CollisionModel& model, double eps, const Eigen::Vector3d& xi, double t,
                                                                 const VelocityVector& g, double r0, double threshold = -0.5)
{
    FullSpectrum sp = decompose(assemble_B(model, eps, xi));
    Eigen::VectorXcd c = sp.Vinv * g;
    Eigen::VectorXcd e = (t * sp.lambda.array()).exp();
    VelocityVector full = sp.V * (e.array() * c.array()).matrix();
    VelocityVector s1 = VelocityVector::Zero(g.size());
    if (xi.norm() <= r0) {
        LowModes lm = low_modes(sp, threshold, xi.norm());
        for (Eigen::Index k : lm.members) s1 += e(k) * c(k) * sp.V.col(k);
    }
    return {s1, full - s1};
}

/// a_ij = < R(lambda, s e_1) Pperp(v_1 chi_i), v_1 chi_j > with R = -(lambda Pperp + L + i s Pperp v_1 Pperp)^{-1} on Ker^perp,
/// for i, j in 1..4 (the chi_0 row vanishes since v_1 lies in the kernel).
struct ResolventTable {
    Eigen::Matrix4cd a = Eigen::Matrix4cd::Zero();
    cplx operator()(int i, int j) const { return a(i - 1, j - 1); }
};

inline ResolventTable resolvent_aij(const CollisionModel& model, cplx lambda, double s, double z = 0.0)
{
    const HermiteBasis& b = model.basis();
    const FluidProjection& P = model.projection();
    const RealMatrix& Q = P.perp_basis();
    const RealMatrix& V1 = b.multiply_v_matrix(0);
    Eigen::MatrixXcd M = (Q.transpose() * (model.scale(z) * model.L()) * Q).cast<cplx>();
    M += lambda * Eigen::MatrixXcd::Identity(M.rows(), M.cols());
    M += cplx(0.0, s) * (Q.transpose() * V1 * Q).cast<cplx>();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
    // reciprocal condition estimate in the 1-norm
    Eigen::MatrixXcd Minv = lu.inverse();
    double cond = M.cwiseAbs().colwise().sum().maxCoeff() * Minv.cwiseAbs().colwise().sum().maxCoeff();
    if (!std::isfinite(cond) || cond > 1e12) throw NumericalError("resolvent near-singular at the requested (lambda, s)");
    Eigen::MatrixXcd W(Q.cols(), 4); // Q^T Pperp (v_1 chi_i), i = 1..4
    for (int i = 1; i <= 4; ++i) W.col(i - 1) = (Q.transpose() * (V1 * P.kernel_basis().col(i))).cast<cplx>();
    ResolventTable t;
    t.a = -W.transpose() * (Minv * W);
    return t;
}

struct DispersionRoots {
    std::array<cplx, 3> lambda{}; // order: -1, 0, 1
    int iterations = 0;
    double residual = 0.0;
};

/// det of the reduced fluid system at fixed coefficients a_ij, as a cubic in lambda.
inline std::array<cplx, 4> dispersion_cubic(const ResolventTable& a, double eps, double s)
{
    const double e2 = eps * eps, s2 = s * s;
    const cplx a11 = a(1, 1), a44 = a(4, 4), a14 = a(1, 4), a41 = a(4, 1);
    // lambda^3 + c2 lambda^2 + c1 lambda + c0
    return {cplx(1.0), -s2 * (a11 + a44),
            e2 + 5.0 / 3.0 * s2 + cplx(0.0, std::sqrt(2.0 / 3.0)) * s2 * s * (a41 + a14) + s2 * s2 * (a44 * a11 - a41 * a14),
            -(s2 * e2 + s2 * s2) * a44};
}

inline std::array<cplx, 3> cubic_roots(const std::array<cplx, 4>& c)
{
    Eigen::Matrix3cd C = Eigen::Matrix3cd::Zero();
    C(0, 0) = -c[1];
    C(0, 1) = -c[2];
    C(0, 2) = -c[3];
    C(1, 0) = 1.0;
    C(2, 1) = 1.0;
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(C, false);
    return {es.eigenvalues()(0), es.eigenvalues()(1), es.eigenvalues()(2)};
}

/// Self-consistent roots of D_eps(lambda, s) = 0 with lambda-dependent a_ij, continued from seeds
/// (default: the s = 0 roots -i eps, 0, i eps).
inline DispersionRoots dispersion_roots(const CollisionModel& model, double eps, double s, const std::array<cplx, 3>* seeds = nullptr,
                                        double tol = 1e-12, int max_iter = 50)
{
    DispersionRoots out;
    std::array<cplx, 3> lam = seeds ? *seeds : std::array<cplx, 3>{cplx(0, -eps), cplx(0), cplx(0, eps)};
    if (s == 0.0) {
        out.lambda = {cplx(0, -eps), cplx(0), cplx(0, eps)};
        return out;
    }
    for (int k = 0; k < 3; ++k) {
        cplx x = lam[std::size_t(k)];
        double prev = std::numeric_limits<double>::infinity(), step = 1.0;
        int it = 0;
        for (; it < max_iter; ++it) {
            auto roots = cubic_roots(dispersion_cubic(resolvent_aij(model, x, s), eps, s));
            cplx next = *std::min_element(roots.begin(), roots.end(), [&](cplx p, cplx q) { return std::abs(p - x) < std::abs(q - x); });
            double d = std::abs(next - x);
            if (d > prev) step = 0.5; // damp when the update grows
            x += step * (next - x);
            prev = d;
            if (d <= tol * std::max(1.0, std::abs(x))) break;
        }
        if (it == max_iter) throw NumericalError("dispersion fixed point did not converge at s = " + std::to_string(s));
        out.iterations = std::max(out.iterations, it + 1);
        out.residual = std::max(out.residual, prev);
        lam[std::size_t(k)] = x;
    }
    out.lambda = lam;
    return out;
}

/// Self-consistent transverse root lambda = s^2 a_22(lambda, s).
inline cplx transverse_root(const CollisionModel& model, double s, cplx seed = 0.0, double tol = 1e-12, int max_iter = 50)
{
    const HermiteBasis& b = model.basis();
    const FluidProjection& P = model.projection();
    const RealMatrix& Q = P.perp_basis();
    Eigen::VectorXcd w = (Q.transpose() * (b.multiply_v_matrix(0) * P.kernel_basis().col(2))).cast<cplx>();
    Eigen::MatrixXcd L = (Q.transpose() * model.L() * Q).cast<cplx>();
    Eigen::MatrixXcd V = cplx(0.0, s) * (Q.transpose() * b.multiply_v_matrix(0) * Q).cast<cplx>();
    cplx x = seed;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXcd M = L + V + x * Eigen::MatrixXcd::Identity(L.rows(), L.cols());
        cplx a22 = -w.dot(M.partialPivLu().solve(w)); // w real, so dot is the bilinear form
        cplx next = s * s * a22;
        if (std::abs(next - x) <= tol * std::max(1.0, std::abs(x))) return next;
        x = next;
    }
    throw NumericalError("transverse fixed point did not converge");
}

/// Small-s coefficients: lambda_j(s) ~ lambda_j(0) + c_j s^2.
struct ExpansionCoefficients {
    cplx minus, zero, plus, transverse;
    cplx minus_alt, plus_alt; // without the factor 1/2 on the plasma branches
};

inline ExpansionCoefficients expansion_coefficients(const CollisionModel& model, double eps)
{
    ExpansionCoefficients c;
    const cplx shift(0.0, 5.0 / (3.0 * eps));
    cplx a11p = resolvent_aij(model, cplx(0, eps), 0.0)(1, 1), a11m = resolvent_aij(model, cplx(0, -eps), 0.0)(1, 1);
    ResolventTable a0 = resolvent_aij(model, 0.0, 0.0);
    c.plus = 0.5 * (a11p + shift);
    c.minus = 0.5 * (a11m - shift);
    c.plus_alt = a11p + shift;
    c.minus_alt = a11m - shift;
    c.zero = a0(4, 4);
    c.transverse = a0(2, 2);
    return c;
}

/// Five eigenvalue branches along xi = s e_1: j = -1, 0, 1, 2, 3 (2 and 3 coincide).
struct EigenBranch {
    int j = 0;
    std::vector<double> s;
    std::vector<cplx> lambda;
    cplx origin = 0.0; // lambda_j(0)
    cplx fit_c = 0.0;  // lambda ~ origin + fit_c s^2
    double residual = 0.0;
    double min_overlap = 1.0; // between neighbouring samples
};

struct BranchScan {
    std::vector<EigenBranch> branches;
    double max_real = -std::numeric_limits<double>::infinity();
};

inline double subspace_overlap(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B)
{
    Eigen::MatrixXcd Qa = Eigen::HouseholderQR<Eigen::MatrixXcd>(A).householderQ() * Eigen::MatrixXcd::Identity(A.rows(), A.cols());
    Eigen::MatrixXcd Qb = Eigen::HouseholderQR<Eigen::MatrixXcd>(B).householderQ() * Eigen::MatrixXcd::Identity(B.rows(), B.cols());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Qa.adjoint() * Qb);
    return svd.singularValues().minCoeff();
}

/// Samples the branches on s_grid (ascending, within (0, r0]) and fits the quadratic coefficient
/// on samples with s <= fit_max.
inline BranchScan eigen_branches(const CollisionModel& model, double eps, const std::vector<double>& s_grid, double threshold = -0.5,
                                 double fit_max = std::numeric_limits<double>::infinity())
{
    std::vector<LowModes> modes(s_grid.size());
    parallel_for(s_grid.size(), [&](std::size_t k) { modes[k] = projections(model, eps, Eigen::Vector3d(s_grid[k], 0, 0), threshold); });
    BranchScan scan;
    const std::array<int, 4> label{-1, 0, 1, 2};
    const std::array<cplx, 4> origin{cplx(0, -eps), cplx(0), cplx(0, eps), cplx(0)};
    for (std::size_t slot = 0; slot < 4; ++slot) {
        EigenBranch br;
        br.j = label[slot];
        br.origin = origin[slot];
        for (std::size_t k = 0; k < s_grid.size(); ++k) {
            br.s.push_back(s_grid[k]);
            br.lambda.push_back(modes[k].lambda[slot]);
            scan.max_real = std::max(scan.max_real, modes[k].lambda[slot].real());
            if (k > 0) br.min_overlap = std::min(br.min_overlap, subspace_overlap(modes[k - 1].vectors[slot], modes[k].vectors[slot]));
        }
        // least squares for c in lambda - origin = c s^2
        double den = 0.0;
        cplx num = 0.0;
        for (std::size_t k = 0; k < br.s.size(); ++k)
            if (br.s[k] <= fit_max) {
                double s2 = br.s[k] * br.s[k];
                num += s2 * (br.lambda[k] - br.origin);
                den += s2 * s2;
            }
        if (den > 0.0) {
            br.fit_c = num / den;
            double r = 0.0;
            for (std::size_t k = 0; k < br.s.size(); ++k)
                if (br.s[k] <= fit_max) r = std::max(r, std::abs(br.lambda[k] - br.origin - br.fit_c * br.s[k] * br.s[k]));
            br.residual = r;
        }
        scan.branches.push_back(br);
        if (slot == 3) {
            br.j = 3;
            scan.branches.push_back(br);
        }
    }
    return scan;
}

inline std::vector<double> log_grid(double a, double b, int n)
{
    std::vector<double> g;
    for (int k = 0; k < n; ++k) g.push_back(a * std::pow(b / a, n > 1 ? double(k) / (n - 1) : 0.0));
    return g;
}

struct RadiusScan {
    double r0 = 0.0;
    std::vector<double> s;
    std::vector<int> counts; // eigenvalues above the threshold at each s
};

/// Largest grid radius up to which exactly five eigenvalues stay above the threshold and the
/// branches continue with eigenvector overlap > 0.9.
inline RadiusScan choose_r0(const CollisionModel& model, double eps, double threshold = -0.5, int points = 40, double s_min = 1e-3,
                            double s_max = 2.0)
{
    RadiusScan r;
    r.s = log_grid(s_min, s_max, points);
    std::vector<FullSpectrum> sp(r.s.size());
    parallel_for(r.s.size(), [&](std::size_t k) { sp[k] = decompose(assemble_B(model, eps, Eigen::Vector3d(r.s[k], 0, 0))); });
    bool ok = true;
    LowModes prev;
    for (std::size_t k = 0; k < r.s.size(); ++k) {
        int c = 0;
        for (Eigen::Index i = 0; i < sp[k].lambda.size(); ++i) c += sp[k].lambda(i).real() > threshold;
        r.counts.push_back(c);
        if (!ok) continue;
        if (c != 5) {
            ok = false;
            continue;
        }
        LowModes lm = low_modes(sp[k], threshold, r.s[k]);
        if (k > 0)
            for (std::size_t slot = 0; slot < 4; ++slot)
                if (subspace_overlap(prev.vectors[slot], lm.vectors[slot]) <= 0.9) ok = false;
        if (ok) {
            r.r0 = r.s[k];
            prev = lm;
        }
    }
    return r;
}

/// Operator 2-norm of S2(t, xi) and the decay gap of its generator part.
struct HighFrequencySample {
    double s = 0.0, t = 0.0, norm = 0.0;
};

struct HighFrequencyFit {
    double sigma = 0.0, C = 0.0, gap = 0.0;
    double max_violation = 0.0; // max over the validation grid of (||S2|| - C e^{-sigma t})/(C e^{-sigma t})
    std::vector<HighFrequencySample> fit_samples, check_samples;
};

struct S2Operator {
    FullSpectrum sp;
    std::vector<bool> high; // eigenvalues kept in S2
    double gap = 0.0;       // -max Re over kept eigenvalues

    double norm(double t) const
    {
        Eigen::VectorXcd e(sp.lambda.size());
        for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = high[std::size_t(k)] ? std::exp(t * sp.lambda(k)) : cplx(0.0);
        Eigen::MatrixXcd S = sp.V * e.asDiagonal() * sp.Vinv;
        return Eigen::JacobiSVD<Eigen::MatrixXcd>(S).singularValues()(0);
    }
};

inline S2Operator s2_operator(const CollisionModel& model, double eps, double s, double r0, double threshold = -0.5)
{
    S2Operator op;
    op.sp = decompose(assemble_B(model, eps, Eigen::Vector3d(s, 0, 0)));
    op.high.assign(std::size_t(op.sp.lambda.size()), true);
    if (s <= r0)
        for (Eigen::Index k : low_modes(op.sp, threshold, s).members) op.high[std::size_t(k)] = false;
    double mr = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < op.sp.lambda.size(); ++k)
        if (op.high[std::size_t(k)]) mr = std::max(mr, op.sp.lambda(k).real());
    op.gap = -mr;
    return op;
}

/// sigma = 0.9 x the smallest gap over the fit grid; C = max ||S2|| e^{sigma t} over the fit grid;
/// the bound is then checked on a grid offset to the midpoints in (log s, t).
inline HighFrequencyFit fit_high_frequency(const CollisionModel& model, double eps, double r0, double s_min, double s_max, double t_max,
                                           int n_fit, int n_check, double threshold = -0.5)
{
    HighFrequencyFit f;
    std::vector<double> sf = log_grid(s_min, s_max, n_fit);
    std::vector<S2Operator> ops(sf.size());
    parallel_for(sf.size(), [&](std::size_t k) { ops[k] = s2_operator(model, eps, sf[k], r0, threshold); });
    f.gap = std::numeric_limits<double>::infinity();
    for (const auto& op : ops) f.gap = std::min(f.gap, op.gap);
    f.sigma = 0.9 * f.gap;
    for (std::size_t k = 0; k < sf.size(); ++k)
        for (int i = 0; i < n_fit; ++i) {
            double t = t_max * i / (n_fit - 1);
            double nrm = ops[k].norm(t);
            f.fit_samples.push_back({sf[k], t, nrm});
            f.C = std::max(f.C, nrm * std::exp(f.sigma * t));
        }
    // validation grid: midpoints of an n_check grid on the same box
    std::vector<double> sc;
    for (int k = 0; k < n_check; ++k) sc.push_back(s_min * std::pow(s_max / s_min, (k + 0.5) / n_check));
    std::vector<std::vector<HighFrequencySample>> rows(sc.size());
    parallel_for(sc.size(), [&](std::size_t k) {
        S2Operator op = s2_operator(model, eps, sc[k], r0, threshold);
        for (int i = 0; i < n_check; ++i) {
            double t = t_max * (i + 0.5) / n_check;
            rows[k].push_back({sc[k], t, op.norm(t)});
        }
    });
    f.max_violation = -std::numeric_limits<double>::infinity();
    for (const auto& row : rows)
        for (const auto& smp : row) {
            f.check_samples.push_back(smp);
            double bound = f.C * std::exp(-f.sigma * smp.t);
            f.max_violation = std::max(f.max_violation, (smp.norm - bound) / bound);
        }
    return f;
}

} // namespace vpb
