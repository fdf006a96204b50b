#pragma once

#include "collision.hpp"
#include "fourier.hpp"
#include "hermite.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpb {

/// Raised for invalid configuration values; names the offending field.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(const std::string& field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(field)
    {
    }
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Raised when a run produces non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimulationConfig {
    double epsilon = 0.5;
    int dim = 1;
    int modes = 8;
    int degree = 6;
    double dt = 0.0; // 0 selects min(1e-3, eps^2/4)
    double T = 0.5;
    double z = 0.0;
    double eta = 0.0;
    bool pure_relaxation = false;
    bool nonlinear = true;
    std::string initial = "well_prepared";
    double amplitude = 0.002;
    std::uint64_t seed = 1;
    int snapshot_every = 0; // 0 selects max(1, T/(100 dt))

    double step_size() const { return dt > 0.0 ? dt : std::min(1e-3, 0.25 * epsilon * epsilon); }
    int step_count() const { return T <= 0.0 ? 0 : int(std::ceil(T / step_size() - 1e-9)); }
    /// Step size adjusted so that step_count() steps land exactly on T.
    double effective_dt() const { return T > 0.0 ? T / step_count() : step_size(); }
    int snapshot_stride() const
    {
        if (snapshot_every > 0) return snapshot_every;
        return std::max(1, int(T / (100.0 * step_size())));
    }
};

inline void validate(const SimulationConfig& c)
{
    if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) throw ValidationError("epsilon", "must lie in (0, 1]");
    if (c.dim != 1 && c.dim != 2) throw ValidationError("dim", "spatial dimension must be 1 or 2");
    if (c.modes < 1) throw ValidationError("modes", "mode cut must be >= 1");
    if (c.degree < 4) throw ValidationError("degree", "Hermite degree must be >= 4");
    if (c.dt < 0.0 || !std::isfinite(c.dt)) throw ValidationError("dt", "time step must be positive");
    if (c.T < 0.0 || !std::isfinite(c.T)) throw ValidationError("T", "final time must be >= 0");
    if (c.z < -1.0 || c.z > 1.0) throw ValidationError("z", "random coordinate must lie in [-1, 1]");
    if (c.eta < 0.0 || c.eta >= 1.0) throw ValidationError("eta", "modulation amplitude must lie in [0, 1)");
    if (!(c.amplitude >= 0.0)) throw ValidationError("amplitude", "must be >= 0");
    if (c.snapshot_every < 0) throw ValidationError("snapshot_every", "must be >= 0");
}

/// Basis plus collision model with stable addresses.
class Lab {
public:
    Lab(int degree, Relaxation relax = Relaxation::multiplier, double eta = 0.0)
        : basis_(std::make_unique<HermiteBasis>(degree))
    {
        KernelModulation mod;
        mod.eta = eta;
        model_ = std::make_unique<CollisionModel>(*basis_, relax, mod);
    }
    explicit Lab(const SimulationConfig& c) : Lab(c.degree, c.pure_relaxation ? Relaxation::pure : Relaxation::multiplier, c.eta) {}
    Lab(const Lab&) = delete;
    Lab& operator=(const Lab&) = delete;

    const HermiteBasis& basis() const { return *basis_; }
    const CollisionModel& model() const { return *model_; }

private:
    std::unique_ptr<HermiteBasis> basis_;
    std::unique_ptr<CollisionModel> model_;
};

/// Coefficients g(n) as columns of a (basis x modes) matrix, time, and potential phi(n).
struct KineticState {
    Eigen::MatrixXcd g;
    double t = 0.0;
    Eigen::VectorXcd phi;
};

/// phi(n) = -rho(n)/|n|^2, phi(0) = 0.
inline Eigen::VectorXcd poisson_solve(const ModeGrid& grid, const Eigen::VectorXcd& rho)
{
    if (std::size_t(rho.size()) != grid.size()) throw std::invalid_argument("poisson_solve: size mismatch");
    Eigen::VectorXcd phi(rho.size());
    for (std::size_t j = 0; j < grid.size(); ++j)
        phi(Eigen::Index(j)) = j == grid.zero() ? cplx(0.0) : -rho(Eigen::Index(j)) / grid.norm2(j);
    return phi;
}

inline Eigen::Vector3d mode_vector(const Mode& n)
{
    return Eigen::Vector3d(n[0], n[1], 0.0);
}

/// Per-mode generator G(n) = -s(z) L/eps^2 - (i/eps)(v.n) - (i/eps)(v.n)/|n|^2 <., 1>.
inline Eigen::MatrixXcd assemble_generator(const CollisionModel& model, double eps, const Eigen::Vector3d& n, double z = 0.0)
{
    const HermiteBasis& b = model.basis();
    const Eigen::Index m = Eigen::Index(b.size());
    RealMatrix S = RealMatrix::Zero(m, m);
    for (int i = 0; i < 3; ++i)
        if (n(i) != 0.0) S += n(i) * b.multiply_v_matrix(i);
    Eigen::MatrixXcd G(m, m);
    G.real() = -(model.scale(z) / (eps * eps)) * model.L();
    G.imag() = -(1.0 / eps) * S;
    const double n2 = n.squaredNorm();
    if (n2 > 0.0) G.col(0).imag() -= (1.0 / (eps * n2)) * S.col(0);
    return G;
}

inline cplx phi1(cplx z)
{
    if (std::abs(z) < 1e-3) {
        cplx s = 1.0, term = 1.0;
        for (int k = 2; k <= 8; ++k) {
            term *= z / double(k);
            s += term;
        }
        return s;
    }
    return (std::exp(z) - 1.0) / z;
}

/// Eigendecomposition of a per-mode generator in symmetrized coordinates: the chi_0 coefficient
/// is scaled by tau = sqrt(1 + 1/|n|^2), which turns the transport-plus-field block symmetric.
struct ModeSpectrum {
    double tau = 1.0;
    Eigen::MatrixXcd V, Vinv;
    Eigen::VectorXcd lambda;
    double condition = 1.0;
    Eigen::MatrixXcd G; // kept for the fallback

    static constexpr double max_condition = 1e9;
    bool reliable() const { return condition < max_condition; }

    Eigen::MatrixXcd unscale(Eigen::MatrixXcd A) const
    {
        A.row(0) /= tau;
        A.col(0) *= tau;
        return A;
    }

    /// exp(t G)
    Eigen::MatrixXcd exp(double t) const
    {
        if (!reliable()) return Eigen::MatrixXcd((t * G).exp());
        Eigen::VectorXcd e = (t * lambda.array()).exp();
        return unscale(V * e.asDiagonal() * Vinv);
    }

    /// t * phi_1(t G)
    Eigen::MatrixXcd phi(double t) const
    {
        const Eigen::Index m = G.rows();
        if (!reliable()) {
            Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(2 * m, 2 * m);
            A.topLeftCorner(m, m) = t * G;
            A.topRightCorner(m, m) = t * Eigen::MatrixXcd::Identity(m, m);
            Eigen::MatrixXcd E = A.exp();
            return E.topRightCorner(m, m);
        }
        Eigen::VectorXcd f(lambda.size());
        for (Eigen::Index k = 0; k < lambda.size(); ++k) f(k) = t * phi1(t * lambda(k));
        return unscale(V * f.asDiagonal() * Vinv);
    }
};

inline ModeSpectrum decompose_mode(const Eigen::MatrixXcd& G, double tau)
{
    ModeSpectrum s;
    s.tau = tau;
    s.G = G;
    Eigen::MatrixXcd Gt = G;
    Gt.row(0) *= tau;
    Gt.col(0) /= tau;
    if (Gt.imag().cwiseAbs().maxCoeff() == 0.0) {
        Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (Gt.real() + Gt.real().transpose()));
        s.lambda = es.eigenvalues().cast<cplx>();
        s.V = es.eigenvectors().cast<cplx>();
        s.Vinv = s.V.adjoint();
        s.condition = 1.0;
        return s;
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Gt);
    if (es.info() != Eigen::Success) {
        s.condition = std::numeric_limits<double>::infinity();
        return s;
    }
    s.lambda = es.eigenvalues();
    s.V = es.eigenvectors();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s.V);
    s.Vinv = lu.inverse();
    s.condition = s.V.cwiseAbs().colwise().sum().maxCoeff() * s.Vinv.cwiseAbs().colwise().sum().maxCoeff();
    if (!std::isfinite(s.condition)) s.condition = std::numeric_limits<double>::infinity();
    return s;
}

inline double symmetrizing_tau(double n2)
{
    return n2 > 0.0 ? std::sqrt(1.0 + 1.0 / n2) : 1.0;
}

struct ConservationEntry {
    double t = 0.0;
    double mass = 0.0;
    std::array<double, 3> momentum{};
    double energy = 0.0; // int int (|v|^2-3) g M, plus eps ||grad phi||^2 for nonlinear runs
};

struct ConservationDrift {
    double mass = 0.0, momentum = 0.0, energy = 0.0;
};

/// Exponential-Euler integrator for the scaled VPB fluctuation system on T^d.
class VpbSolver {
public:
    VpbSolver(const CollisionModel& model, int dim, int modes, double eps, double dt, double z = 0.0, bool nonlinear = true)
        : model_(&model), grid_(dim, modes), eps_(eps), dt_(dt), z_(z), nonlinear_(nonlinear)
    {
        if (!(eps > 0.0)) throw ValidationError("epsilon", "must be positive");
        if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
        const HermiteBasis& b = model.basis();
        for (int i = 0; i < dim; ++i) raise_[std::size_t(i)] = b.multiply_v_matrix(i) - b.derivative_matrix(i);
        const auto& half = grid_.half();
        spectra_.resize(half.size());
        E_.resize(half.size());
        Phi_.resize(half.size());
        parallel_for(half.size(), [&](std::size_t k) {
            std::size_t j = half[k];
            Eigen::MatrixXcd G = assemble_generator(model, eps_, mode_vector(grid_.mode(j)), z_);
            spectra_[k] = decompose_mode(G, symmetrizing_tau(grid_.norm2(j)));
            E_[k] = spectra_[k].exp(dt_);
            Phi_[k] = spectra_[k].phi(dt_);
        });
    }

    VpbSolver(const CollisionModel& model, const SimulationConfig& c)
        : VpbSolver(model, c.dim, c.modes, c.epsilon, c.effective_dt(), c.z, c.nonlinear)
    {
    }

    const ModeGrid& grid() const { return grid_; }
    const CollisionModel& model() const { return *model_; }
    double epsilon() const { return eps_; }
    double dt() const { return dt_; }
    double z() const { return z_; }
    bool nonlinear() const { return nonlinear_; }
    const std::vector<ModeSpectrum>& spectra() const { return spectra_; }

    KineticState zero_state() const
    {
        KineticState s;
        s.g = Eigen::MatrixXcd::Zero(Eigen::Index(model_->basis().size()), Eigen::Index(grid_.size()));
        s.phi = Eigen::VectorXcd::Zero(Eigen::Index(grid_.size()));
        return s;
    }

    /// Re-solves the Poisson equation and enforces Hermitian symmetry.
    void finalize(KineticState& s) const
    {
        grid_.enforce_reality(s.g);
        s.phi = poisson_solve(grid_, s.g.row(0).transpose());
    }

    /// N1 = (v g - grad_v g).grad phi and N2 = Gamma(g,g)/eps, dealiased to the mode grid.
    std::pair<Eigen::MatrixXcd, Eigen::MatrixXcd> nonlinear_parts(const KineticState& s) const
    {
        Eigen::MatrixXd gp = grid_.synthesize(s.g);
        Eigen::MatrixXd n1 = Eigen::MatrixXd::Zero(gp.rows(), gp.cols());
        for (int i = 0; i < grid_.dim(); ++i) {
            Eigen::MatrixXcd dphi(1, Eigen::Index(grid_.size()));
            for (std::size_t j = 0; j < grid_.size(); ++j)
                dphi(0, Eigen::Index(j)) = cplx(0.0, grid_.mode(j)[std::size_t(i)]) * s.phi(Eigen::Index(j));
            Eigen::RowVectorXd e = grid_.synthesize(dphi).row(0);
            if (e.cwiseAbs().maxCoeff() == 0.0) continue;
            n1.array() += (raise_[std::size_t(i)] * gp).array().rowwise() * e.array();
        }
        Eigen::MatrixXd n2 = (model_->scale(z_) / eps_) * (model_->L() * model_->basis().square_project(gp));
        return {grid_.analyze(n1), grid_.analyze(n2)};
    }

    Eigen::MatrixXcd nonlinear_rhs(const KineticState& s) const
    {
        auto [a, b] = nonlinear_parts(s);
        return a + b;
    }

    /// g <- E g + dt phi_1(dt G) N on every mode.
    KineticState step(const KineticState& s) const
    {
        if (!nonlinear_) return step_forced(s, nullptr);
        Eigen::MatrixXcd N = nonlinear_rhs(s);
        return step_forced(s, &N);
    }

    /// One exponential-Euler step of y' = G y + N with a prescribed forcing (none if null).
    KineticState step_forced(const KineticState& s, const Eigen::MatrixXcd* N) const
    {
        KineticState out = s;
        const auto& half = grid_.half();
        for (std::size_t k = 0; k < half.size(); ++k) {
            Eigen::Index j = Eigen::Index(half[k]);
            out.g.col(j) = E_[k] * s.g.col(j);
            if (N) out.g.col(j) += Phi_[k] * N->col(j);
        }
        out.t = s.t + dt_;
        finalize(out);
        if (!out.g.allFinite()) throw NumericalError("non-finite coefficients at t = " + std::to_string(out.t) + "; reduce dt");
        return out;
    }

    /// Linear propagation by exp(t G(n)) on every mode (exact for the linear system).
    KineticState propagate_linear(const KineticState& s, double t) const
    {
        KineticState out = s;
        const auto& half = grid_.half();
        for (std::size_t k = 0; k < half.size(); ++k) {
            Eigen::Index j = Eigen::Index(half[k]);
            out.g.col(j) = spectra_[k].exp(t) * s.g.col(j);
        }
        out.t = s.t + t;
        finalize(out);
        return out;
    }

    double field_energy(const KineticState& s) const
    {
        double e = 0.0;
        for (std::size_t j = 0; j < grid_.size(); ++j) e += grid_.norm2(j) * std::norm(s.phi(Eigen::Index(j)));
        return e;
    }

    ConservationEntry check_conservation(const KineticState& s) const
    {
        ConservationEntry c;
        c.t = s.t;
        Eigen::VectorXcd g0 = s.g.col(Eigen::Index(grid_.zero()));
        c.mass = g0(0).real();
        for (int i = 0; i < 3; ++i) c.momentum[std::size_t(i)] = g0(i + 1).real();
        // the field energy is quadratic, so only the kinetic part is invariant under the linear flow
        c.energy = std::sqrt(6.0) * model_->projection().chi(4).dot(g0).real() + (nonlinear_ ? eps_ * field_energy(s) : 0.0);
        return c;
    }

    /// Residual of mean(P g) = -(eps/sqrt 6) ||grad phi||^2 chi_4 (mass and momentum means vanish).
    double mean_drift_check(const KineticState& s) const
    {
        Eigen::VectorXcd g0 = s.g.col(Eigen::Index(grid_.zero()));
        double r = std::abs(g0(0));
        for (int i = 1; i <= 3; ++i) r += std::abs(g0(i));
        cplx theta = model_->projection().chi(4).dot(g0);
        r += std::abs(theta + eps_ / std::sqrt(6.0) * field_energy(s));
        return r;
    }

private:
    const CollisionModel* model_;
    ModeGrid grid_;
    double eps_, dt_, z_;
    bool nonlinear_;
    std::array<RealMatrix, 2> raise_;
    std::vector<ModeSpectrum> spectra_;
    std::vector<Eigen::MatrixXcd> E_, Phi_;
};

inline ConservationDrift drift(const std::vector<ConservationEntry>& ledger)
{
    ConservationDrift d;
    if (ledger.empty()) return d;
    const ConservationEntry& a = ledger.front();
    for (const auto& e : ledger) {
        d.mass = std::max(d.mass, std::abs(e.mass - a.mass));
        for (int i = 0; i < 3; ++i) d.momentum = std::max(d.momentum, std::abs(e.momentum[std::size_t(i)] - a.momentum[std::size_t(i)]));
        d.energy = std::max(d.energy, std::abs(e.energy - a.energy));
    }
    return d;
}

/// Mean mode fixed by the global constraints: zero mass and momentum, and
/// int int (|v|^2-3) g M + eps ||grad phi||^2 = 0 (nonlinear) or int int (|v|^2-3) g M = 0 (linear).
inline void impose_mean_constraint(const VpbSolver& solver, KineticState& s, bool with_field)
{
    solver.finalize(s);
    const Eigen::Index z = Eigen::Index(solver.grid().zero());
    const FluidProjection& P = solver.model().projection();
    Eigen::VectorXcd g0 = s.g.col(z);
    g0 -= P.apply(g0);
    if (with_field) g0 -= (solver.epsilon() / std::sqrt(6.0) * solver.field_energy(s)) * P.chi(4);
    s.g.col(z) = g0;
}

/// Small random data on modes 1 <= |n|_inf <= max_mode and Hermite degree <= max_degree,
/// with the mean mode set by impose_mean_constraint.
inline KineticState random_state(const VpbSolver& solver, double amplitude, std::uint64_t seed, int max_mode = 2, int max_degree = 3,
                                 bool with_field = true)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    KineticState s = solver.zero_state();
    const HermiteBasis& b = solver.model().basis();
    const ModeGrid& grid = solver.grid();
    for (std::size_t j : grid.half()) {
        const Mode& n = grid.mode(j);
        if (j == grid.zero() || std::max(std::abs(n[0]), std::abs(n[1])) > max_mode) continue;
        for (std::size_t a = 0; a < b.size(); ++a) {
            const MultiIndex& al = b.index(a);
            if (al[0] + al[1] + al[2] > max_degree) continue;
            s.g(Eigen::Index(a), Eigen::Index(j)) = amplitude * cplx(nd(rng), nd(rng));
        }
    }
    impose_mean_constraint(solver, s, with_field);
    return s;
}

struct RunResult {
    std::vector<KineticState> snapshots;
    std::vector<ConservationEntry> ledger;
    KineticState final;
};

/// Integrates from s0 for `steps` steps; snapshots at the given stride (and the final state).
inline RunResult run(const VpbSolver& solver, const KineticState& s0, int steps, int stride,
                     const std::function<void(const KineticState&)>& observer = {})
{
    RunResult r;
    KineticState s = s0;
    solver.finalize(s);
    r.snapshots.push_back(s);
    r.ledger.push_back(solver.check_conservation(s));
    if (observer) observer(s);
    for (int k = 1; k <= steps; ++k) {
        s = solver.step(s);
        r.ledger.push_back(solver.check_conservation(s));
        if (observer) observer(s);
        if (k % std::max(1, stride) == 0 || k == steps) r.snapshots.push_back(s);
    }
    r.final = s;
    return r;
}

} // namespace vpb
