#pragma once

#include "hypocoercivity.hpp"
#include "nsfp.hpp"
#include "parallel.hpp"
#include "spectral.hpp"
#include "vpb_solver.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace vpb {

enum class InitialKind { well_prepared, kinetic_perturbed };

inline std::string to_string(InitialKind k) { return k == InitialKind::well_prepared ? "well_prepared" : "kinetic_perturbed"; }

struct ExperimentPlan {
    int dim = 1, modes = 8, degree = 6;
    double dt = 1e-3, T = 4.0, amplitude = 0.002;
    std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};
    int regularity = 2; // s; error norms use H^ell with ell <= s - 2
    int ell = 0;
    int max_mode = 2;
    int snapshot_every = 10;
    std::uint64_t seed = 1;
    InitialKind kind = InitialKind::well_prepared;
    bool nonlinear = true;

    void validate() const
    {
        if (epsilons.size() < 1) throw ValidationError("eps_list", "must not be empty");
        for (std::size_t k = 0; k < epsilons.size(); ++k) {
            if (!(epsilons[k] > 0.0) || epsilons[k] > 1.0) throw ValidationError("eps_list", "entries must lie in (0, 1]");
            if (k > 0 && !(epsilons[k] < epsilons[k - 1])) throw ValidationError("eps_list", "must be strictly decreasing");
        }
        if (ell < 0 || ell > regularity - 2) throw ValidationError("ell", "must satisfy 0 <= ell <= s - 2");
        if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
        if (!(T > 0.0)) throw ValidationError("T", "must be positive");
        if (snapshot_every < 1) throw ValidationError("snapshot_every", "must be >= 1");
        if (max_mode < 1 || max_mode > modes) throw ValidationError("max_mode", "must lie in [1, modes]");
    }
    int steps() const { return int(std::lround(T / dt)); }
};

/// Fluid data on 1 <= |n|_inf <= max_mode: divergence-free u and sigma, with rho, theta from the constraint.
inline FluidState random_fluid_data(const ModeGrid& grid, double amplitude, std::uint64_t seed, int max_mode)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    FluidState s;
    s.u = Eigen::MatrixXcd::Zero(3, Eigen::Index(grid.size()));
    s.sigma = Eigen::VectorXcd::Zero(Eigen::Index(grid.size()));
    for (std::size_t j : grid.half()) {
        const Mode& n = grid.mode(j);
        if (j == grid.zero() || std::max(std::abs(n[0]), std::abs(n[1])) > max_mode) continue;
        for (int i = 0; i < 3; ++i) s.u(i, Eigen::Index(j)) = amplitude * cplx(nd(rng), nd(rng));
        s.sigma(Eigen::Index(j)) = amplitude * cplx(nd(rng), nd(rng));
    }
    s.u = leray_project(grid, s.u);
    grid.enforce_reality(s.u);
    Eigen::MatrixXcd row = s.sigma.transpose();
    grid.enforce_reality(row);
    s.sigma = row.transpose();
    return s;
}

/// Well-prepared data lie in Ker L with div u = 0 and the Poisson constraint; the mean mode carries
/// the global constraints. kinetic_perturbed adds eps g1 with g1 a random microscopic field.
inline KineticState prepare_initial(const VpbSolver& solver, InitialKind kind, double amplitude, std::uint64_t seed, int max_mode = 2)
{
    const FluidProjection& P = solver.model().projection();
    KineticState s = solver.zero_state();
    s.g = lift_to_kinetic(solver.grid(), P, random_fluid_data(solver.grid(), amplitude, seed, max_mode));
    if (kind == InitialKind::kinetic_perturbed) {
        KineticState r = random_state(solver, amplitude, seed + 7919, max_mode, 4, false);
        s.g += solver.epsilon() * (P.complement() * r.g);
    }
    impose_mean_constraint(solver, s, solver.nonlinear());
    return s;
}

/// Snapshot times and kinetic coefficient matrices.
struct Trajectory {
    std::vector<double> t;
    std::vector<Eigen::MatrixXcd> g;
};

/// Kinetic trajectory; linear runs are propagated exactly between snapshots.
inline Trajectory kinetic_trajectory(const VpbSolver& solver, const KineticState& s0, int steps, int stride)
{
    Trajectory tr;
    KineticState s = s0;
    solver.finalize(s);
    tr.t.push_back(s.t);
    tr.g.push_back(s.g);
    for (int k = stride; k <= steps; k += stride) {
        if (solver.nonlinear())
            for (int i = 0; i < stride; ++i) s = solver.step(s);
        else
            s = solver.propagate_linear(s0, double(k) * solver.dt());
        s.t = s0.t + double(k) * solver.dt();
        tr.t.push_back(s.t);
        tr.g.push_back(s.g);
    }
    return tr;
}

inline Trajectory fluid_trajectory(const NsfpSolver& solver, const FluidProjection& P, const FluidState& f0, int steps, int stride)
{
    Trajectory tr;
    FluidState f = f0;
    tr.t.push_back(f.t);
    tr.g.push_back(lift_to_kinetic(solver.grid(), P, f));
    for (int k = stride; k <= steps; k += stride) {
        for (int i = 0; i < stride; ++i) solver.step(f);
        f.t = f0.t + double(k) * solver.dt();
        tr.t.push_back(f.t);
        tr.g.push_back(lift_to_kinetic(solver.grid(), P, f));
    }
    return tr;
}

/// sum_n (1+|n|^2)^ell ||h(n)||^2, optionally without the mean mode.
inline double hnorm2(const ModeGrid& grid, const Eigen::MatrixXcd& h, int ell, bool skip_mean = false)
{
    double s = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (skip_mean && j == grid.zero()) continue;
        s += std::pow(1.0 + grid.norm2(j), ell) * h.col(Eigen::Index(j)).squaredNorm();
    }
    return s;
}

struct ErrorFunctionals {
    double time_avg_err = 0.0;   // || int_0^T (g_eps - g) ||^2_{H^ell}
    double integrated_err = 0.0; // int_0^T || g_eps - g ||^2_{H^ell}
    double tail = 0.0;           // exponential-tail estimate of int_T^inf, reported separately
    double decay_rate = 0.0;     // fitted rate of ||g_eps - g||^2 on the second half
};

/// Trapezoid quadrature over the snapshot times.
inline ErrorFunctionals compare_trajectories(const ModeGrid& grid, const Trajectory& a, const Trajectory& b, int ell)
{
    if (a.t.size() != b.t.size() || a.t.empty()) throw ValidationError("trajectories", "snapshot counts differ");
    for (std::size_t k = 0; k < a.t.size(); ++k) {
        if (std::abs(a.t[k] - b.t[k]) > 1e-9 * std::max(1.0, std::abs(a.t[k]))) throw ValidationError("trajectories", "snapshot times differ");
        if (a.g[k].rows() != b.g[k].rows() || a.g[k].cols() != b.g[k].cols()) throw ValidationError("trajectories", "grids differ");
    }
    ErrorFunctionals e;
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(a.g[0].rows(), a.g[0].cols());
    std::vector<double> err(a.t.size());
    for (std::size_t k = 0; k < a.t.size(); ++k) err[k] = hnorm2(grid, a.g[k] - b.g[k], ell);
    for (std::size_t k = 0; k + 1 < a.t.size(); ++k) {
        double h = a.t[k + 1] - a.t[k];
        e.integrated_err += 0.5 * h * (err[k] + err[k + 1]);
        acc += 0.5 * h * ((a.g[k] - b.g[k]) + (a.g[k + 1] - b.g[k + 1]));
    }
    e.time_avg_err = hnorm2(grid, acc, ell);
    std::vector<double> tt, ee;
    for (std::size_t k = a.t.size() / 2; k < a.t.size(); ++k)
        if (err[k] > 0.0) {
            tt.push_back(a.t[k]);
            ee.push_back(err[k]);
        }
    if (tt.size() >= 10) {
        DecayFit f = fit_decay(tt, ee);
        e.decay_rate = f.rate;
        if (f.rate > 0.0) e.tail = err.back() / f.rate;
    }
    return e;
}

/// int_0^T || g^perp ||^2_{H^s} dt
inline double perp_budget(const ModeGrid& grid, const FluidProjection& P, const Trajectory& tr, int s)
{
    double b = 0.0;
    for (std::size_t k = 0; k + 1 < tr.t.size(); ++k)
        b += 0.5 * (tr.t[k + 1] - tr.t[k]) * (hnorm2(grid, P.complement() * tr.g[k], s) + hnorm2(grid, P.complement() * tr.g[k + 1], s));
    return b;
}

/// Least squares of log(value) against log(eps) and against log(eps |ln eps|).
struct RateFit {
    double slope = 0.0, intercept = 0.0, residual = 0.0;         // plain power law
    double slope_log = 0.0, intercept_log = 0.0, residual_log = 0.0; // eps |ln eps| model
};

inline RateFit rate_fit(const std::vector<double>& eps, const std::vector<double>& values)
{
    if (eps.size() != values.size() || eps.size() < 2) throw ValidationError("rate_fit", "need matching eps and value lists");
    auto fit = [&](auto xmap, double& slope, double& icpt, double& res) {
        const Eigen::Index n = Eigen::Index(eps.size());
        Eigen::MatrixXd A(n, 2);
        Eigen::VectorXd y(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!(values[std::size_t(k)] > 0.0)) throw NumericalError("rate_fit: non-positive value");
            A(k, 0) = xmap(eps[std::size_t(k)]);
            A(k, 1) = 1.0;
            y(k) = std::log(values[std::size_t(k)]);
        }
        Eigen::Vector2d c = A.colPivHouseholderQr().solve(y);
        slope = c(0);
        icpt = c(1);
        res = std::sqrt((A * c - y).squaredNorm() / double(n));
    };
    RateFit r;
    fit([](double e) { return std::log(e); }, r.slope, r.intercept, r.residual);
    fit([](double e) { return std::log(e * std::abs(std::log(e))); }, r.slope_log, r.intercept_log, r.residual_log);
    return r;
}

/// One eps point of a sweep.
struct SweepRow {
    double epsilon = 0.0;
    int ell = 0;
    ErrorFunctionals err;
    double perp_budget = 0.0;
    double seconds = 0.0;
};

/// Runs the kinetic model and its fluid reference (same dt, same snapshots) for one eps, with the
/// collision operator L(z).
inline SweepRow run_limit_point(const CollisionModel& model, const ExperimentPlan& plan, double eps, double z = 0.0)
{
    auto t0 = std::chrono::steady_clock::now();
    VpbSolver ks(model, plan.dim, plan.modes, eps, plan.dt, z, plan.nonlinear);
    NsfpSolver fs(plan.dim, plan.modes, fluid_coefficients(model, z), plan.dt, Forcing::rho_grad_theta, plan.nonlinear);
    KineticState s0 = prepare_initial(ks, plan.kind, plan.amplitude, plan.seed, plan.max_mode);
    FluidState f0 = fluid_from_kinetic(model.projection(), model.projection().matrix() * s0.g);
    Trajectory a = kinetic_trajectory(ks, s0, plan.steps(), plan.snapshot_every);
    Trajectory b = fluid_trajectory(fs, model.projection(), f0, plan.steps(), plan.snapshot_every);
    SweepRow row;
    row.epsilon = eps;
    row.ell = plan.ell;
    row.err = compare_trajectories(ks.grid(), a, b, plan.ell);
    row.perp_budget = perp_budget(ks.grid(), model.projection(), a, plan.regularity);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

inline std::vector<SweepRow> run_sweep(const CollisionModel& model, const ExperimentPlan& plan)
{
    plan.validate();
    std::vector<SweepRow> rows(plan.epsilons.size());
    parallel_for(rows.size(), [&](std::size_t k) { rows[k] = run_limit_point(model, plan, plan.epsilons[k]); });
    return rows;
}

/// Linear part U, electric part Psi1 and bilinear part Psi2 of the Duhamel formula, each propagated
/// with the solver's integrator; their sum is compared to the full solution.
struct DuhamelSplit {
    Eigen::MatrixXcd linear, electric, bilinear, full;
    double defect = 0.0; // max over steps of ||U + Psi1 + Psi2 - g|| / max(1, ||g||)
};

inline DuhamelSplit duhamel_split(const VpbSolver& solver, const KineticState& s0, int steps)
{
    if (!solver.nonlinear()) throw ValidationError("nonlinear", "the Duhamel split needs a nonlinear solver");
    KineticState g = s0, u = s0, p1 = solver.zero_state(), p2 = solver.zero_state();
    solver.finalize(g);
    solver.finalize(u);
    DuhamelSplit d;
    for (int k = 0; k < steps; ++k) {
        auto [n1, n2] = solver.nonlinear_parts(g);
        Eigen::MatrixXcd both = n1 + n2;
        u = solver.step_forced(u, nullptr);
        p1 = solver.step_forced(p1, &n1);
        p2 = solver.step_forced(p2, &n2);
        g = solver.step_forced(g, &both);
        double scale = std::max(1.0, g.g.norm());
        d.defect = std::max(d.defect, (u.g + p1.g + p2.g - g.g).norm() / scale);
    }
    d.linear = u.g;
    d.electric = p1.g;
    d.bilinear = p2.g;
    d.full = g.g;
    return d;
}

/// || int_0^T P_{+-1}(eps n) g(n, t) dt ||^2 summed over 1 <= |n|_inf <= max_mode and both signs:
/// the time average of the plasma-oscillation components. Needs eps |n| <= r0.
inline double oscillatory_average(const CollisionModel& model, const ModeGrid& grid, double eps, const Trajectory& tr, int max_mode)
{
    double total = 0.0;
    for (std::size_t j : grid.half()) {
        const Mode& n = grid.mode(j);
        if (j == grid.zero() || std::max(std::abs(n[0]), std::abs(n[1])) > max_mode) continue;
        LowModes lm = projections(model, eps, eps * mode_vector(grid.mode(j)));
        for (int slot : {0, 2}) {
            VelocityVector acc = VelocityVector::Zero(tr.g[0].rows());
            for (std::size_t k = 0; k + 1 < tr.t.size(); ++k)
                acc += 0.5 * (tr.t[k + 1] - tr.t[k]) * (lm.P[std::size_t(slot)] * (tr.g[k].col(Eigen::Index(j)) + tr.g[k + 1].col(Eigen::Index(j))));
            total += 2.0 * acc.squaredNorm();
        }
    }
    return total;
}

} // namespace vpb
