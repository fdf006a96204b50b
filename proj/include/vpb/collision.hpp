#pragma once

#include "hermite.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace vpb {

/// Orthogonal projection onto span{chi_0..chi_4} = Ker L.
class FluidProjection {
public:
    explicit FluidProjection(const HermiteBasis& basis)
    {
        if (basis.max_degree() < 2) throw std::invalid_argument("FluidProjection: basis degree must be >= 2");
        const Eigen::Index n = Eigen::Index(basis.size());
        kernel_.resize(n, 5);
        for (int k = 0; k < 5; ++k) kernel_.col(k) = basis.chi(k).real();
        P_ = kernel_ * kernel_.transpose();
        Pperp_ = RealMatrix::Identity(n, n) - P_;
        // orthonormal complement of the kernel
        Eigen::HouseholderQR<RealMatrix> qr(kernel_);
        RealMatrix Q = qr.householderQ() * RealMatrix::Identity(n, n);
        perp_ = Q.rightCols(n - 5);
    }

    const RealMatrix& matrix() const { return P_; }
    const RealMatrix& complement() const { return Pperp_; }
    /// Columns chi_0..chi_4.
    const RealMatrix& kernel_basis() const { return kernel_; }
    /// Orthonormal basis of Ker^perp (size x (size-5)).
    const RealMatrix& perp_basis() const { return perp_; }

    VelocityVector chi(int k) const { return kernel_.col(k).cast<cplx>(); }
    VelocityVector apply(const VelocityVector& g) const { return P_ * g; }
    VelocityVector perp(const VelocityVector& g) const { return g - P_ * g; }

private:
    RealMatrix kernel_, P_, Pperp_, perp_;
};

struct FluidMoments {
    cplx rho;
    std::array<cplx, 3> u;
    cplx theta;
    VelocityVector projected;
};

/// rho = <g,1>, u_i = <g,v_i>, theta = <g,(|v|^2-3)/3>
inline FluidMoments project_fluid(const HermiteBasis& basis, const FluidProjection& P, const VelocityVector& g)
{
    basis.check(g);
    FluidMoments m;
    m.rho = g(0);
    for (int i = 0; i < 3; ++i) m.u[std::size_t(i)] = g(i + 1);
    m.theta = std::sqrt(6.0) / 3.0 * P.chi(4).dot(g);
    m.projected = P.apply(g);
    return m;
}

enum class Relaxation { multiplier, pure };

/// Kernel modulation L(z) = (1 + eta m(z)) L on I_z = [-1, 1].
struct KernelModulation {
    double eta = 0.0;
    std::function<double(double)> m = [](double z) { return z; };
    std::function<double(double)> dm = [](double) { return 1.0; };
    double z_min = -1.0, z_max = 1.0;
    double c_min = 1e-3;
};

/// Projected-multiplier collision operator L = Pperp Lambda Pperp with Lambda = 1+|v|,
/// splitting L = -K + Lambda and model bilinear term Gamma(g,h) = L(gh + hg)/2.
class CollisionModel {
public:
    CollisionModel(const HermiteBasis& basis, Relaxation relax = Relaxation::multiplier, KernelModulation mod = {})
        : basis_(&basis), P_(basis), relax_(relax), mod_(std::move(mod))
    {
        const Eigen::Index n = Eigen::Index(basis.size());
        Lambda_ = relax == Relaxation::multiplier ? basis.lambda_matrix() : RealMatrix::Identity(n, n);
        RealMatrix L = P_.complement() * Lambda_ * P_.complement();
        K_ = Lambda_ - 0.5 * (L + L.transpose());
        L_ = Lambda_ - K_;
        // sample the modulation on I_z to validate the lower bound
        for (int k = 0; k <= 200; ++k) {
            double z = mod_.z_min + (mod_.z_max - mod_.z_min) * k / 200.0;
            if (1.0 + mod_.eta * mod_.m(z) < mod_.c_min)
                throw std::invalid_argument("CollisionModel: 1 + eta m(z) falls below c_min on I_z");
        }
    }

    const HermiteBasis& basis() const { return *basis_; }
    const FluidProjection& projection() const { return P_; }
    Relaxation relaxation() const { return relax_; }
    const KernelModulation& modulation() const { return mod_; }

    const RealMatrix& L() const { return L_; }
    const RealMatrix& K() const { return K_; }
    const RealMatrix& Lambda() const { return Lambda_; }

    double scale(double z) const
    {
        if (z < mod_.z_min - 1e-12 || z > mod_.z_max + 1e-12) throw std::out_of_range("z outside I_z");
        return 1.0 + mod_.eta * mod_.m(z);
    }
    double dscale(double z) const { return mod_.eta * mod_.dm(z); }

    VelocityVector apply_L(const VelocityVector& g, double z = 0.0) const
    {
        basis_->check(g);
        return scale(z) * (L_ * g);
    }
    VelocityVector dz_L(const VelocityVector& g, double z = 0.0) const
    {
        basis_->check(g);
        return dscale(z) * (L_ * g);
    }
    VelocityVector apply_Gamma(const VelocityVector& g, const VelocityVector& h, double z = 0.0) const
    {
        VelocityVector s = basis_->multiply_project(g, h);
        return scale(z) * (L_ * s);
    }

private:
    const HermiteBasis* basis_;
    FluidProjection P_;
    Relaxation relax_;
    KernelModulation mod_;
    RealMatrix Lambda_, L_, K_;
};

/// Restriction of a symmetric operator to Ker^perp, solved densely: returns x in Ker^perp with A x = b.
inline Eigen::MatrixXd solve_on_perp(const FluidProjection& P, const RealMatrix& A, const Eigen::MatrixXd& rhs)
{
    const RealMatrix& Q = P.perp_basis();
    RealMatrix Ar = Q.transpose() * A * Q;
    Eigen::LDLT<RealMatrix> ldlt(Ar);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().cwiseAbs().minCoeff() < 1e-12 * ldlt.vectorD().cwiseAbs().maxCoeff())
        throw std::runtime_error("solve_on_perp: singular restriction to Ker^perp");
    return Q * ldlt.solve(Q.transpose() * rhs);
}

struct TransportCoefficients {
    double mu = 0.0;
    double kappa = 0.0;
    std::array<std::array<VelocityVector, 3>, 3> A, A_hat;
    std::array<VelocityVector, 3> B, B_hat;
    double residual = 0.0;
};

/// A_ij = v_i v_j - delta_ij |v|^2/3 and B_i = v_i (|v|^2/2 - 5/2) in the Hermite basis.
inline std::array<std::array<VelocityVector, 3>, 3> burnett_A(const HermiteBasis& b)
{
    if (b.max_degree() < 3) throw std::invalid_argument("transport coefficients need basis degree >= 3");
    std::array<std::array<VelocityVector, 3>, 3> A;
    VelocityVector one = b.unit({0, 0, 0});
    VelocityVector vsq = VelocityVector::Zero(Eigen::Index(b.size()));
    for (int i = 0; i < 3; ++i) vsq += b.multiply_v(b.multiply_v(one, i), i);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            A[std::size_t(i)][std::size_t(j)] = b.multiply_v(b.multiply_v(one, j), i);
            if (i == j) A[std::size_t(i)][std::size_t(j)] -= vsq / 3.0;
        }
    return A;
}

inline std::array<VelocityVector, 3> burnett_B(const HermiteBasis& b)
{
    if (b.max_degree() < 3) throw std::invalid_argument("transport coefficients need basis degree >= 3");
    VelocityVector one = b.unit({0, 0, 0});
    VelocityVector vsq = VelocityVector::Zero(Eigen::Index(b.size()));
    for (int i = 0; i < 3; ++i) vsq += b.multiply_v(b.multiply_v(one, i), i);
    VelocityVector h = 0.5 * vsq - 2.5 * one;
    std::array<VelocityVector, 3> B;
    for (int i = 0; i < 3; ++i) B[std::size_t(i)] = b.multiply_v(h, i);
    return B;
}

/// mu = (1/15) sum <A_ij, L^-1 A_ij>, kappa = (2/15) sum <B_i, L^-1 B_i> for L(z).
inline TransportCoefficients transport_coefficients(const CollisionModel& model, double z = 0.0)
{
    const HermiteBasis& b = model.basis();
    TransportCoefficients tc;
    tc.A = burnett_A(b);
    tc.B = burnett_B(b);
    const double s = model.scale(z);
    RealMatrix Lz = s * model.L();
    const Eigen::Index n = Eigen::Index(b.size());
    Eigen::MatrixXd rhs(n, 12);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) rhs.col(3 * i + j) = tc.A[std::size_t(i)][std::size_t(j)].real();
        rhs.col(9 + i) = tc.B[std::size_t(i)].real();
    }
    Eigen::MatrixXd sol = solve_on_perp(model.projection(), Lz, rhs);
    tc.residual = (Lz * sol - rhs).cwiseAbs().maxCoeff();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            tc.A_hat[std::size_t(i)][std::size_t(j)] = sol.col(3 * i + j).cast<cplx>();
            tc.mu += rhs.col(3 * i + j).dot(sol.col(3 * i + j)) / 15.0;
        }
        tc.B_hat[std::size_t(i)] = sol.col(9 + i).cast<cplx>();
        tc.kappa += 2.0 * rhs.col(9 + i).dot(sol.col(9 + i)) / 15.0;
    }
    return tc;
}

} // namespace vpb
