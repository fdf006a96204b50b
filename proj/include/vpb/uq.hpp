#pragma once

#include "hypocoercivity.hpp"
#include "limit_lab.hpp"
#include "parallel.hpp"
#include "vpb_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace vpb {

/// Gauss-Legendre collocation for the uniform density on [-1, 1]; weights sum to 1.
struct QuadratureGrid {
    std::vector<double> nodes, weights;
    std::size_t size() const { return nodes.size(); }
};

inline QuadratureGrid build_grid(int n)
{
    if (n < 1) throw ValidationError("nodes", "must be >= 1");
    QuadratureGrid q;
    GaussRule r = gauss_legendre(n);
    for (int k = 0; k < n; ++k) {
        q.nodes.push_back(r.nodes(k));
        q.weights.push_back(0.5 * r.weights(k));
    }
    return q;
}

/// Barycentric Lagrange interpolation through arbitrary distinct nodes.
class Interpolant {
public:
    explicit Interpolant(std::vector<double> nodes) : x_(std::move(nodes)), w_(x_.size(), 1.0)
    {
        for (std::size_t j = 0; j < x_.size(); ++j)
            for (std::size_t k = 0; k < x_.size(); ++k)
                if (k != j) w_[j] /= (x_[j] - x_[k]);
    }

    /// Lagrange basis values l_j(z).
    std::vector<double> basis(double z) const
    {
        std::vector<double> l(x_.size(), 0.0);
        for (std::size_t j = 0; j < x_.size(); ++j)
            if (z == x_[j]) {
                l[j] = 1.0;
                return l;
            }
        double den = 0.0;
        for (std::size_t j = 0; j < x_.size(); ++j) {
            l[j] = w_[j] / (z - x_[j]);
            den += l[j];
        }
        for (double& v : l) v /= den;
        return l;
    }

    double operator()(const std::vector<double>& values, double z) const
    {
        std::vector<double> l = basis(z);
        double s = 0.0;
        for (std::size_t j = 0; j < l.size(); ++j) s += l[j] * values[j];
        return s;
    }

    /// D(i,j) = l_j'(x_i)
    Eigen::MatrixXd derivative_matrix() const
    {
        const Eigen::Index n = Eigen::Index(x_.size());
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j) D(i, j) = (w_[std::size_t(j)] / w_[std::size_t(i)]) / (x_[std::size_t(i)] - x_[std::size_t(j)]);
            D(i, i) = -D.row(i).sum();
        }
        return D;
    }

    /// Derivative weights l_j'(z) at an arbitrary point.
    std::vector<double> derivative_basis(double z) const
    {
        const double h = 1e-6;
        std::vector<double> a = basis(z + h), b = basis(z - h), d(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) d[j] = (a[j] - b[j]) / (2.0 * h);
        return d;
    }

    const std::vector<double>& nodes() const { return x_; }

private:
    std::vector<double> x_, w_;
};

struct UqConfig {
    int dim = 1, modes = 4, degree = 4;
    double epsilon = 1.0, dt = 4e-3, T = 8.0, amplitude = 0.002;
    double eta = 0.2;
    double z_slope = 0.5; // initial data g0(z) = (1 + z_slope z) g0
    int regularity = 1;   // s in H^s_x
    int snapshot_every = 25;
    std::uint64_t seed = 1;
    bool nonlinear = true;

    int steps() const { return int(std::lround(T / dt)); }
    void validate() const
    {
        if (!(epsilon > 0.0) || epsilon > 1.0) throw ValidationError("epsilon", "must lie in (0, 1]");
        if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
        if (!(T > 0.0)) throw ValidationError("T", "must be positive");
        if (eta < 0.0 || eta >= 1.0) throw ValidationError("eta", "must lie in [0, 1) so that 1 + eta z stays positive");
        if (snapshot_every < 1) throw ValidationError("snapshot_every", "must be >= 1");
    }
};

/// Initial data at node z for a solver already configured at that z.
using InitialFamily = std::function<KineticState(const VpbSolver&, double z)>;

inline InitialFamily default_family(const UqConfig& c)
{
    return [c](const VpbSolver& solver, double z) {
        KineticState s = prepare_initial(solver, InitialKind::well_prepared, c.amplitude, c.seed);
        s.g *= (1.0 + c.z_slope * z);
        impose_mean_constraint(solver, s, solver.nonlinear());
        return s;
    };
}

struct NodeRun {
    double z = 0.0, weight = 0.0;
    std::vector<double> t;
    std::vector<Eigen::MatrixXcd> g;
    std::vector<Eigen::VectorXcd> phi;
};

/// Squared H^s_x norm of g plus the field energy ||grad phi||^2_{H^s_x}. The spatial mean of g is
/// conserved and therefore left out.
inline double node_norm2(const ModeGrid& grid, const Eigen::MatrixXcd& g, const Eigen::VectorXcd& phi, int s)
{
    double e = hnorm2(grid, g, s, true);
    for (std::size_t j = 0; j < grid.size(); ++j) e += std::pow(1.0 + grid.norm2(j), s) * grid.norm2(j) * std::norm(phi(Eigen::Index(j)));
    return e;
}

/// Mixed norms in z of a per-node scalar (a squared spatial norm): the L^2_z piece sum_k w_k f_k,
/// and the sup piece max over nodes and over the interpolant on a fine grid of I_z.
struct MixedPieces {
    double l2 = 0.0, sup = 0.0;
    bool overshoot = false; // interpolant leaves the node range by more than 10%
};

inline MixedPieces mixed_pieces(const QuadratureGrid& q, const std::vector<double>& f, int fine = 201)
{
    MixedPieces m;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < f.size(); ++k) {
        m.l2 += q.weights[k] * f[k];
        lo = std::min(lo, f[k]);
        hi = std::max(hi, f[k]);
    }
    m.sup = hi;
    if (f.size() >= 2) {
        Interpolant I(q.nodes);
        double flo = lo, fhi = hi;
        for (int i = 0; i < fine; ++i) {
            double v = I(f, -1.0 + 2.0 * i / (fine - 1));
            flo = std::min(flo, v);
            fhi = std::max(fhi, v);
        }
        m.sup = fhi;
        double range = std::max(hi - lo, 1e-300);
        m.overshoot = (fhi - hi) > 0.1 * range || (lo - flo) > 0.1 * range;
    }
    return m;
}

struct EnsembleResult {
    QuadratureGrid grid;
    std::vector<NodeRun> nodes;
    std::vector<double> t;
    std::vector<double> l2, sup, mixed; // squared norms: L^2_z, sup_z, and their sum
};

inline EnsembleResult ensemble_run(const CollisionModel& model, const UqConfig& c, const QuadratureGrid& q, const InitialFamily& family)
{
    c.validate();
    if (q.size() < 1) throw ValidationError("nodes", "empty collocation grid");
    EnsembleResult r;
    r.grid = q;
    r.nodes.resize(q.size());
    std::vector<std::unique_ptr<VpbSolver>> solvers(q.size());
    parallel_for(q.size(), [&](std::size_t k) {
        solvers[k] = std::make_unique<VpbSolver>(model, c.dim, c.modes, c.epsilon, c.dt, q.nodes[k], c.nonlinear);
        NodeRun& nr = r.nodes[k];
        nr.z = q.nodes[k];
        nr.weight = q.weights[k];
        KineticState s = family(*solvers[k], nr.z);
        solvers[k]->finalize(s);
        nr.t.push_back(s.t);
        nr.g.push_back(s.g);
        nr.phi.push_back(s.phi);
        const int steps = c.steps();
        for (int i = 1; i <= steps; ++i) {
            s = solvers[k]->step(s);
            if (i % c.snapshot_every == 0 || i == steps) {
                nr.t.push_back(s.t);
                nr.g.push_back(s.g);
                nr.phi.push_back(s.phi);
            }
        }
    });
    r.t = r.nodes[0].t;
    const ModeGrid& grid = solvers[0]->grid();
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        std::vector<double> f;
        for (const NodeRun& nr : r.nodes) f.push_back(node_norm2(grid, nr.g[i], nr.phi[i], c.regularity));
        MixedPieces m = mixed_pieces(q, f);
        r.l2.push_back(m.l2);
        r.sup.push_back(m.sup);
        r.mixed.push_back(m.l2 + m.sup);
    }
    return r;
}

/// d/dz of the node interpolant at every node and snapshot, with its L^2_z H^{s-1}_x norms.
struct SensitivityField {
    std::vector<std::vector<Eigen::MatrixXcd>> dz; // [node][snapshot]
    std::vector<double> l2;                        // per snapshot
    bool runge_flag = false;
};

inline SensitivityField z_derivative(const EnsembleResult& e, const ModeGrid& grid, int s = 1)
{
    if (e.nodes.size() < 5) throw ValidationError("nodes", "z-derivatives need at least 5 collocation nodes");
    Interpolant I(e.grid.nodes);
    Eigen::MatrixXd D = I.derivative_matrix();
    SensitivityField f;
    const std::size_t n = e.nodes.size(), T = e.t.size();
    f.dz.assign(n, std::vector<Eigen::MatrixXcd>(T));
    f.l2.assign(T, 0.0);
    for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> norms(n);
        for (std::size_t a = 0; a < n; ++a) {
            Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(e.nodes[0].g[i].rows(), e.nodes[0].g[i].cols());
            for (std::size_t b = 0; b < n; ++b) d += D(Eigen::Index(a), Eigen::Index(b)) * e.nodes[b].g[i];
            f.dz[a][i] = d;
            norms[a] = hnorm2(grid, d, std::max(0, s - 1));
        }
        MixedPieces m = mixed_pieces(e.grid, norms);
        f.l2[i] = m.l2;
        f.runge_flag = f.runge_flag || m.overshoot;
    }
    return f;
}

/// Difference of two ensembles in H^ell_x L^{2 cap inf}_z over time, with a fitted contraction rate.
struct StabilityReport {
    std::vector<double> t, diff; // squared mixed norm of the difference
    double rate = 0.0, amplitude = 0.0;
    bool identical = false;
};

inline StabilityReport stability_experiment(const CollisionModel& model, const UqConfig& c, const QuadratureGrid& q, const InitialFamily& a,
                                            const InitialFamily& b, int ell = 0)
{
    if (ell > c.regularity - 1 && ell != 0) throw ValidationError("ell", "must satisfy ell <= s - 1");
    EnsembleResult ea = ensemble_run(model, c, q, a), eb = ensemble_run(model, c, q, b);
    ModeGrid grid(c.dim, c.modes);
    StabilityReport r;
    r.t = ea.t;
    r.identical = true;
    for (std::size_t i = 0; i < ea.t.size(); ++i) {
        std::vector<double> f;
        for (std::size_t k = 0; k < q.size(); ++k) {
            double d = node_norm2(grid, ea.nodes[k].g[i] - eb.nodes[k].g[i], ea.nodes[k].phi[i] - eb.nodes[k].phi[i], ell);
            if (d != 0.0) r.identical = false;
            f.push_back(d);
        }
        MixedPieces m = mixed_pieces(q, f);
        r.diff.push_back(m.l2 + m.sup);
    }
    if (!r.identical) {
        DecayFit fit = fit_decay(r.t, r.diff, r.t.back() / 4.0);
        r.rate = fit.rate;
        r.amplitude = fit.amplitude;
    }
    return r;
}

/// Per-node eps-sweeps against the per-node fluid reference (transport coefficients of L(z)).
struct RandomLimitReport {
    std::vector<double> epsilons;
    std::vector<double> max_integrated_err; // max over nodes, per eps
    std::vector<std::vector<SweepRow>> per_node;
};

inline RandomLimitReport random_fluid_limit(const CollisionModel& model, const ExperimentPlan& plan, const QuadratureGrid& q)
{
    plan.validate();
    RandomLimitReport r;
    r.epsilons = plan.epsilons;
    r.per_node.assign(q.size(), std::vector<SweepRow>(plan.epsilons.size()));
    const std::size_t ne = plan.epsilons.size();
    parallel_for(q.size() * ne, [&](std::size_t idx) {
        std::size_t k = idx / ne, e = idx % ne;
        r.per_node[k][e] = run_limit_point(model, plan, plan.epsilons[e], q.nodes[k]);
    });
    r.max_integrated_err.assign(ne, 0.0);
    for (const auto& node : r.per_node)
        for (std::size_t e = 0; e < ne; ++e) r.max_integrated_err[e] = std::max(r.max_integrated_err[e], node[e].err.integrated_err);
    return r;
}

} // namespace vpb
