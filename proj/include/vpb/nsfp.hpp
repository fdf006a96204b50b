#pragma once

#include "collision.hpp"
#include "fourier.hpp"
#include "vpb_solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace vpb {

/// Viscosity and heat conductivity entering the fluid limit of the truncated kinetic model.
/// nu is the shear diffusivity <A_12, L^-1 A_12> = (1/10) sum <A_ij, L^-1 A_ij>, i.e. 3/2 of
/// TransportCoefficients::mu; kappa is TransportCoefficients::kappa.
struct FluidCoefficients {
    double nu = 0.0, kappa = 0.0;
};

inline FluidCoefficients fluid_coefficients(const CollisionModel& model, double z = 0.0)
{
    TransportCoefficients tc = transport_coefficients(model, z);
    return {1.5 * tc.mu, tc.kappa};
}

/// theta(n) = c(n) sigma(n) under the constraint Delta(rho + theta) = rho.
inline double theta_factor(double n2) { return (2.0 / 3.0) * (1.0 + n2) / (1.0 + (5.0 / 3.0) * n2); }
inline double rho_factor(double n2) { return -(2.0 / 3.0) * n2 / (1.0 + (5.0 / 3.0) * n2); }

struct FluidFields {
    Eigen::VectorXcd rho, theta, phi; // phi = rho + theta except phi(0) = 0
};

inline FluidFields recover_rho_theta(const ModeGrid& grid, const Eigen::VectorXcd& sigma)
{
    FluidFields f;
    const Eigen::Index m = Eigen::Index(grid.size());
    f.rho.resize(m);
    f.theta.resize(m);
    f.phi.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        double n2 = grid.norm2(std::size_t(j));
        f.rho(j) = rho_factor(n2) * sigma(j);
        f.theta(j) = theta_factor(n2) * sigma(j);
        f.phi(j) = n2 == 0.0 ? cplx(0.0) : f.rho(j) + f.theta(j);
    }
    return f;
}

/// max_n | |n|^2 (rho + theta) + rho |
inline double constraint_residual(const ModeGrid& grid, const Eigen::VectorXcd& rho, const Eigen::VectorXcd& theta)
{
    double r = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j)
        r = std::max(r, std::abs(grid.norm2(j) * (rho(Eigen::Index(j)) + theta(Eigen::Index(j))) + rho(Eigen::Index(j))));
    return r;
}

/// u(n) - n (n.u(n))/|n|^2 for the 3 x modes velocity matrix.
inline Eigen::MatrixXcd leray_project(const ModeGrid& grid, const Eigen::MatrixXcd& u)
{
    Eigen::MatrixXcd out = u;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        double n2 = grid.norm2(j);
        if (n2 == 0.0) continue;
        Eigen::Vector3cd n = mode_vector(grid.mode(j)).cast<cplx>();
        out.col(Eigen::Index(j)) -= n * (n.dot(u.col(Eigen::Index(j))) / n2);
    }
    return out;
}

inline double divergence_defect(const ModeGrid& grid, const Eigen::MatrixXcd& u)
{
    double d = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) d = std::max(d, std::abs(mode_vector(grid.mode(j)).cast<cplx>().dot(u.col(Eigen::Index(j)))));
    return d;
}

struct FluidState {
    Eigen::MatrixXcd u;     // 3 x modes
    Eigen::VectorXcd sigma; // (3/2) theta - rho
    double t = 0.0;
};

/// Forcing in the momentum equation; the two choices differ by a gradient.
enum class Forcing { rho_grad_theta, rho_grad_phi };

/// Integrating-factor Heun scheme: diffusion exact, advection and forcing explicit,
/// products dealiased on the padded grid, velocity Leray-projected every stage.
class NsfpSolver {
public:
    NsfpSolver(int dim, int modes, FluidCoefficients c, double dt, Forcing forcing = Forcing::rho_grad_theta, bool nonlinear = true)
        : grid_(dim, modes), c_(c), dt_(dt), forcing_(forcing), nonlinear_(nonlinear)
    {
        if (!(c.nu > 0.0) || !(c.kappa > 0.0)) throw ValidationError("transport", "nu and kappa must be positive");
        if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
        const Eigen::Index m = Eigen::Index(grid_.size());
        decay_u_.resize(m);
        decay_s_.resize(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            double n2 = grid_.norm2(std::size_t(j));
            decay_u_(j) = c.nu * n2;
            decay_s_(j) = 2.5 * c.kappa * n2 * theta_factor(n2);
        }
    }

    const ModeGrid& grid() const { return grid_; }
    const FluidCoefficients& coefficients() const { return c_; }
    double dt() const { return dt_; }
    bool nonlinear() const { return nonlinear_; }
    /// Linear decay rates of u(n) and sigma(n).
    const Eigen::VectorXd& viscous_rates() const { return decay_u_; }
    const Eigen::VectorXd& thermal_rates() const { return decay_s_; }

    FluidState zero_state() const
    {
        FluidState s;
        s.u = Eigen::MatrixXcd::Zero(3, Eigen::Index(grid_.size()));
        s.sigma = Eigen::VectorXcd::Zero(Eigen::Index(grid_.size()));
        return s;
    }

    /// Tendencies of (u, sigma) from advection and forcing, projected.
    std::pair<Eigen::MatrixXcd, Eigen::VectorXcd> tendencies(const FluidState& s) const
    {
        const int d = grid_.dim();
        const Eigen::Index m = Eigen::Index(grid_.size());
        FluidFields f = recover_rho_theta(grid_, s.sigma);
        // spectral gradients: rows (component, direction)
        Eigen::MatrixXcd spec(3 + 3 * d + 1 + d + d, m);
        spec.topRows(3) = s.u;
        int r = 3;
        auto grad_rows = [&](const Eigen::RowVectorXcd& field) {
            for (int a = 0; a < d; ++a) {
                for (Eigen::Index j = 0; j < m; ++j) spec(r, j) = cplx(0.0, grid_.mode(std::size_t(j))[std::size_t(a)]) * field(j);
                ++r;
            }
        };
        for (int i = 0; i < 3; ++i) grad_rows(s.u.row(i));
        spec.row(r++) = f.rho.transpose();
        grad_rows(s.sigma.transpose());
        grad_rows((forcing_ == Forcing::rho_grad_theta ? f.theta : f.phi).transpose());
        Eigen::MatrixXd phys = grid_.synthesize(spec);

        const Eigen::Index P = phys.cols();
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(4, P);
        const int gu = 3, rho_row = 3 + 3 * d, gs = rho_row + 1, gf = gs + d;
        for (int i = 0; i < 3; ++i)
            for (int a = 0; a < d; ++a) out.row(i).array() -= phys.row(a).array() * phys.row(gu + i * d + a).array();
        for (int a = 0; a < d; ++a) {
            out.row(a).array() += phys.row(rho_row).array() * phys.row(gf + a).array();
            out.row(3).array() -= phys.row(a).array() * phys.row(gs + a).array();
        }
        Eigen::MatrixXcd hat = grid_.analyze(out);
        return {leray_project(grid_, hat.topRows(3)), hat.row(3).transpose()};
    }

    void step(FluidState& s) const
    {
        Eigen::ArrayXd eu = (-dt_ * decay_u_).array().exp(), es = (-dt_ * decay_s_).array().exp();
        if (!nonlinear_) {
            s.u = s.u * eu.matrix().asDiagonal();
            s.sigma = (es * s.sigma.array()).matrix();
            s.t += dt_;
            return;
        }
        auto [nu0, ns0] = tendencies(s);
        FluidState pred;
        pred.u = (s.u + dt_ * nu0) * eu.matrix().asDiagonal();
        pred.sigma = (es * (s.sigma + dt_ * ns0).array()).matrix();
        auto [nu1, ns1] = tendencies(pred);
        s.u = (s.u + 0.5 * dt_ * nu0) * eu.matrix().asDiagonal() + 0.5 * dt_ * nu1;
        s.sigma = (es * (s.sigma + 0.5 * dt_ * ns0).array()).matrix() + 0.5 * dt_ * ns1;
        s.u = leray_project(grid_, s.u);
        grid_.enforce_reality(s.u);
        Eigen::MatrixXcd row = s.sigma.transpose();
        grid_.enforce_reality(row);
        s.sigma = row.transpose();
        s.t += dt_;
        if (!s.u.allFinite() || !s.sigma.allFinite()) throw NumericalError("fluid state became non-finite at t = " + std::to_string(s.t));
    }

    /// Advances by whole steps to the nearest multiple of dt at or past t_end.
    void advance(FluidState& s, double t_end) const
    {
        while (s.t < t_end - 1e-9 * dt_) step(s);
    }

    /// ||u||^2 + ||sigma||^2 (torus-normalized Parseval sums)
    double energy(const FluidState& s) const { return s.u.squaredNorm() + s.sigma.squaredNorm(); }

private:
    ModeGrid grid_;
    FluidCoefficients c_;
    double dt_;
    Forcing forcing_;
    bool nonlinear_;
    Eigen::VectorXd decay_u_, decay_s_;
};

/// Kinetic field g = rho chi_0 + u.v + (theta/2)(|v|^2 - 3), coefficient columns per mode.
inline Eigen::MatrixXcd lift_to_kinetic(const ModeGrid& grid, const FluidProjection& P, const FluidState& s)
{
    FluidFields f = recover_rho_theta(grid, s.sigma);
    const RealMatrix& K = P.kernel_basis();
    Eigen::MatrixXcd g(K.rows(), Eigen::Index(grid.size()));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        g.col(j) = K.col(0) * f.rho(j) + K.col(1) * s.u(0, j) + K.col(2) * s.u(1, j) + K.col(3) * s.u(2, j) + std::sqrt(1.5) * f.theta(j) * K.col(4);
    return g;
}

/// Fluid moments of a kinetic coefficient matrix: u, sigma = (3/2) theta - rho, and rho, theta.
struct KineticMoments {
    Eigen::VectorXcd rho, theta;
    Eigen::MatrixXcd u;
};

inline KineticMoments kinetic_moments(const FluidProjection& P, const Eigen::MatrixXcd& g)
{
    KineticMoments m;
    m.rho = g.row(0).transpose();
    m.u = g.middleRows(1, 3);
    m.theta = std::sqrt(2.0 / 3.0) * (P.kernel_basis().col(4).transpose().cast<cplx>() * g).transpose();
    return m;
}

inline FluidState fluid_from_kinetic(const FluidProjection& P, const Eigen::MatrixXcd& g, double t = 0.0)
{
    KineticMoments m = kinetic_moments(P, g);
    FluidState s;
    s.u = m.u;
    s.sigma = 1.5 * m.theta - m.rho;
    s.t = t;
    return s;
}

} // namespace vpb
