#pragma once

#include "collision.hpp"
#include "fourier.hpp"
#include "hermite.hpp"
#include "vpb_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpb {

/// Structural constants of a collision model and the coefficients of the hypocoercive functional.
struct EnergyLedger {
    // measured
    double a2 = 0.0, a3 = 0.0, a4 = 0.0, a5 = 1.0;
    double C_u = 0.0, C_delta = 0.0, C_delta1 = 0.0, C_delta2 = 0.0, delta = 0.0;
    // selected
    double epsilon = 1.0;
    double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0, lambda4 = 0.0, a6 = 0.0;
    // derived
    double lt1 = 0.0, lt2 = 0.0, lambda5 = 0.0, lambda6 = 0.0, lambda7 = 0.0;
    double c_l = 0.0, c_u = 0.0, c_d = 0.0, c_e = 0.0, c_f = 0.0;
};

/// Derivative matrices and Gram forms of the v-gradient powers on a basis.
class VelocityForms {
public:
    explicit VelocityForms(const HermiteBasis& b, int max_order = 4) : b_(&b)
    {
        const Eigen::Index m = Eigen::Index(b.size());
        gram_.push_back(RealMatrix::Identity(m, m));
        // ||grad^i h||^2 = sum_a ||grad^{i-1} D_a h||^2
        for (int i = 1; i <= max_order; ++i) {
            RealMatrix G = RealMatrix::Zero(m, m);
            for (int a = 0; a < 3; ++a) G += b.derivative_matrix(a).transpose() * gram_.back() * b.derivative_matrix(a);
            gram_.push_back(G);
        }
    }
    /// Form of ||grad_v^i h||^2.
    const RealMatrix& gram(int i) const { return gram_.at(std::size_t(i)); }
    int max_order() const { return int(gram_.size()) - 1; }
    const HermiteBasis& basis() const { return *b_; }

private:
    const HermiteBasis* b_;
    std::vector<RealMatrix> gram_;
};

inline RealMatrix symmetric_part(const RealMatrix& A) { return 0.5 * (A + A.transpose()); }

/// min over Ker^perp of <Lh,h> / ||h||_Lambda^2.
inline double measure_a2(const CollisionModel& model)
{
    const RealMatrix& Q = model.projection().perp_basis();
    RealMatrix A = Q.transpose() * model.L() * Q, B = Q.transpose() * model.Lambda() * Q;
    Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> es(symmetric_part(A), symmetric_part(B));
    return es.eigenvalues().minCoeff();
}

/// Smallest C_u with |<Lambda h, g>| and |<L h, g>| both <= C_u ||h||_Lambda ||g||_Lambda.
inline double measure_Cu(const CollisionModel& model)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> es(symmetric_part(model.L()), symmetric_part(model.Lambda()));
    return std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
}

struct DefectPair {
    double a3 = 0.0, a4 = 0.0;
};

/// Forms of int grad_v(Lambda h).grad_v h M (A) and ||grad_v h||^2_Lambda (B).
inline std::pair<RealMatrix, RealMatrix> defect_forms(const CollisionModel& model)
{
    const HermiteBasis& b = model.basis();
    const Eigen::Index m = Eigen::Index(b.size());
    RealMatrix A = RealMatrix::Zero(m, m), B = RealMatrix::Zero(m, m);
    for (int i = 0; i < 3; ++i) {
        const RealMatrix& D = b.derivative_matrix(i);
        A += (D * model.Lambda()).transpose() * D;
        B += D.transpose() * model.Lambda() * D;
    }
    return {symmetric_part(A), symmetric_part(B)};
}

/// Best a3 for each a4 on a log-spaced grid: a3(a4) = 1/lambda_max of the pencil (B, A + a4 I).
/// Entries with A + a4 I not positive definite are skipped.
inline std::vector<DefectPair> defect_curve(const CollisionModel& model, int points = 50, double a4_min = 1e-3, double a4_max = 1e2)
{
    auto [A, B] = defect_forms(model);
    const Eigen::Index m = A.rows();
    std::vector<DefectPair> out;
    for (int k = 0; k < points; ++k) {
        double a4 = a4_min * std::pow(a4_max / a4_min, points > 1 ? double(k) / (points - 1) : 0.0);
        RealMatrix C = A + a4 * RealMatrix::Identity(m, m);
        Eigen::LLT<RealMatrix> llt(C);
        if (llt.info() != Eigen::Success) continue;
        Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> es(B, C);
        double mu = es.eigenvalues().maxCoeff();
        if (!(mu > 0.0)) continue;
        out.push_back({1.0 / mu, a4});
    }
    return out;
}

/// Pair maximizing a3/(1 + a4) along the curve.
inline DefectPair select_defect_pair(const std::vector<DefectPair>& curve)
{
    if (curve.empty()) throw std::runtime_error("defect of coercivity: no feasible (a3, a4) pair");
    return *std::max_element(curve.begin(), curve.end(),
                             [](const DefectPair& x, const DefectPair& y) { return x.a3 / (1 + x.a4) < y.a3 / (1 + y.a4); });
}

/// Smallest C with |<grad_v K h, grad_v h>| <= C ||h||^2 + delta ||grad_v h||_Lambda^2.
inline double mixing_constant(const CollisionModel& model, double delta)
{
    const HermiteBasis& b = model.basis();
    const Eigen::Index m = Eigen::Index(b.size());
    RealMatrix X = RealMatrix::Zero(m, m);
    for (int i = 0; i < 3; ++i) {
        const RealMatrix& D = b.derivative_matrix(i);
        X += (D * model.K()).transpose() * D;
    }
    X = symmetric_part(X);
    RealMatrix B = defect_forms(model).second;
    Eigen::SelfAdjointEigenSolver<RealMatrix> plus(X - delta * B, Eigen::EigenvaluesOnly), minus(-X - delta * B, Eigen::EigenvaluesOnly);
    return std::max({plus.eigenvalues().maxCoeff(), minus.eigenvalues().maxCoeff(), 0.0});
}

/// Measured constants. delta <= 0 selects a3/12; min_norm2 is the smallest nonzero |n|^2 on the torus.
inline EnergyLedger measure_constants(const CollisionModel& model, double delta = 0.0, double min_norm2 = 1.0)
{
    EnergyLedger l;
    l.a2 = measure_a2(model);
    DefectPair p = select_defect_pair(defect_curve(model));
    l.a3 = p.a3;
    l.a4 = p.a4;
    l.a5 = 1.0 / min_norm2;
    l.C_u = measure_Cu(model);
    l.delta = delta > 0.0 ? delta : l.a3 / 12.0;
    l.C_delta = mixing_constant(model, l.delta);
    // Young: |ab|/eps <= a^2/(4 delta) + delta b^2/eps^2, and ||.|| <= ||.||_Lambda
    l.C_delta1 = 1.0 / (4.0 * l.delta);
    l.C_delta2 = 1.0 / (4.0 * l.delta);
    return l;
}

struct InequalityCheck {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    bool positivity = false; // sign condition only; the others carry a delta/2 margin
    double slack() const { return lhs - rhs; }
};

/// Every inequality of the coefficient selection, evaluated on the ledger at its epsilon.
inline std::vector<InequalityCheck> coefficient_inequalities(const EnergyLedger& l)
{
    const double e2 = l.epsilon * l.epsilon, d = l.delta, ac = l.a4 + l.C_delta;
    std::vector<InequalityCheck> c;
    c.push_back({"lambda4 >= 2 delta a5 + 2 a5", l.lambda4, 2 * d * l.a5 + 2 * l.a5});
    c.push_back({"lambda4/2 >= lambda3 (a5 (a4 + C_delta) + C_delta1 eps^2) + delta", 0.5 * l.lambda4,
                 l.lambda3 * (l.a5 * ac + l.C_delta1 * e2) + d});
    c.push_back({"lambda4/a5 >= lambda3 C_delta2 eps^2 + delta", l.lambda4 / l.a5, l.lambda3 * l.C_delta2 * e2 + d});
    c.push_back({"(lambda1 - lambda3 eps^2 - 1)/eps^2 >= lambda3 (a4 + C_delta) + delta", (l.lambda1 - l.lambda3 * e2 - 1) / e2,
                 l.lambda3 * ac + d});
    c.push_back({"(lambda2 - lambda4)/eps^2 >= lambda4 C_u^2/a6 + delta", (l.lambda2 - l.lambda4) / e2,
                 l.lambda4 * l.C_u * l.C_u / l.a6 + d});
    c.push_back({"lambda2 lambda3 >= 2 lambda4^2", l.lambda2 * l.lambda3, 2 * l.lambda4 * l.lambda4});
    c.push_back({"lambda~1 > 0", l.lt1, 0.0, true});
    c.push_back({"lambda~2 > 0", l.lt2, 0.0, true});
    c.push_back({"lambda5 > 0", l.lambda5, 0.0, true});
    c.push_back({"lambda6 > 0", l.lambda6, 0.0, true});
    c.push_back({"lambda7 > 0", l.lambda7, 0.0, true});
    return c;
}

inline void update_derived(EnergyLedger& l)
{
    const double e2 = l.epsilon * l.epsilon, ac = l.a4 + l.C_delta;
    l.lt1 = l.lambda1 * l.a2 / e2 - l.lambda3 * ac;
    l.lt2 = l.lambda2 * l.a2 / e2 - l.lambda4 * l.C_u * l.C_u / l.a6 - l.lambda3 * l.a5 * ac;
    l.lambda5 = l.lambda3 * (l.a3 - 3 * l.delta) - l.lambda4 * l.a6;
    l.lambda6 = l.lambda4 - l.lambda3 * l.C_delta1 * e2 - l.a5 * ac * l.lambda3;
    l.lambda7 = 2 * l.lambda4 - l.lambda3 * l.a5 * l.C_delta2 * e2;
    l.c_d = std::min(l.delta, 0.5 * l.lambda3 * (l.a3 - 3 * l.delta));
    const double c9 = l.a5 * ac + l.C_delta1 * e2;
    l.c_f = (l.a3 - 4 * l.delta) / c9;
    l.c_e = l.c_d > 0.0 ? (ac + l.C_delta1 * e2 + l.delta) / l.c_d : std::numeric_limits<double>::infinity();
}

struct Selection {
    bool feasible = false;
    std::string failure; // first violated inequality when infeasible
    EnergyLedger ledger;
    std::vector<InequalityCheck> checks;
    double min_slack = 0.0; // over the margin-carrying inequalities
};

/// Chooses lambda_1..lambda_4 with every inequality holding with slack >= delta/2.
/// delta <= 0 keeps the ledger's delta (C_delta is then reused as measured).
inline Selection select_coefficients(const EnergyLedger& measured, double eps, double delta = 0.0)
{
    Selection s;
    EnergyLedger l = measured;
    l.epsilon = eps;
    if (delta > 0.0) l.delta = delta;
    const double d = l.delta, m = 0.5 * d, e2 = eps * eps, ac = l.a4 + l.C_delta;

    l.lambda4 = 2 * d * l.a5 + 2 * l.a5 + m;
    l.lambda3 = std::min((0.5 * l.lambda4 - d - m) / (l.a5 * ac + l.C_delta1 * e2), (l.lambda4 / l.a5 - d - m) / (l.C_delta2 * e2));
    l.a6 = 0.5 * l.lambda3 * (l.a3 - 3 * d) / l.lambda4;
    l.lambda1 = e2 * (l.lambda3 * ac + d + m) + l.lambda3 * e2 + 1.0;
    l.lambda2 = std::max(l.lambda4 + e2 * (l.lambda4 * l.C_u * l.C_u / l.a6 + d + m), (2 * l.lambda4 * l.lambda4 + m) / l.lambda3);
    update_derived(l);

    s.ledger = l;
    if (!(l.a3 - 3 * d > 1e-12 * l.a3)) {
        s.failure = "lambda5 > 0 (requires a3 - 3 delta > 0)";
        s.checks = coefficient_inequalities(l);
        return s;
    }
    if (!(l.lambda3 > 0.0)) {
        s.failure = "lambda4/2 >= lambda3 (a5 (a4 + C_delta) + C_delta1 eps^2) + delta";
        s.checks = coefficient_inequalities(l);
        return s;
    }
    s.checks = coefficient_inequalities(l);
    s.min_slack = std::numeric_limits<double>::infinity();
    s.feasible = true;
    for (const auto& c : s.checks) {
        if (!c.positivity) s.min_slack = std::min(s.min_slack, c.slack());
        if (!(c.slack() > 0.0) && s.feasible) {
            s.feasible = false;
            s.failure = c.name;
        }
    }
    return s;
}

/// Sign of the field term inside the lambda_3 part of the functional.
enum class FieldSign { minus, plus };

/// Parts of the hypocoercive functional and the plain norm it is compared to.
struct EnergyValue {
    double e1 = 0.0, e21 = 0.0, e22 = 0.0;
    double plain = 0.0;
    double total() const { return e1 + e21 + e22; }
};

/// Per-mode Hermitian forms in g(n) of the functional parts and of the plain norm.
struct ModeForms {
    Eigen::MatrixXcd e1, e21, e22, plain;
};

inline ModeForms energy_forms(const VelocityForms& vf, const Eigen::Vector3d& n, double eps, const EnergyLedger& l, int s,
                              FieldSign sign = FieldSign::minus)
{
    if (s < 1) throw std::invalid_argument("energy functional order must be >= 1");
    if (s > vf.max_order()) throw std::invalid_argument("energy functional order exceeds available v-derivatives");
    const HermiteBasis& b = vf.basis();
    const Eigen::Index m = Eigen::Index(b.size());
    const double w = n.squaredNorm(), e2 = eps * eps;
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(m, m);
    // field parts: |grad phi|^2 = |g_0|^2/w, |Lap phi|^2 = |g_0|^2
    Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(m, m), F2 = Eigen::MatrixXcd::Zero(m, m);
    if (w > 0.0) {
        F(0, 0) = 1.0 / w;
        F2(0, 0) = 1.0;
    }
    // Re int grad_x g . grad_v g: Hermitian part of sum_i (-i n_i) D_i
    Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(m, m);
    for (int i = 0; i < 3; ++i)
        if (n(i) != 0.0) C += cplx(0.0, -n(i)) * b.derivative_matrix(i).cast<cplx>();
    C = 0.5 * (C + C.adjoint()).eval();
    const double fs = sign == FieldSign::minus ? -1.0 : 1.0;
    Eigen::MatrixXcd base = l.lambda1 * (I + F) + l.lambda2 * (w * I + F2) + l.lambda3 * e2 * (vf.gram(1).cast<cplx>() + fs * F) +
                            2.0 * l.lambda4 * eps * C;
    ModeForms f;
    f.e1 = Eigen::MatrixXcd::Zero(m, m);
    for (int k = 0; k < s; ++k) f.e1 += std::pow(w, k) * base;
    f.e21 = Eigen::MatrixXcd::Zero(m, m);
    f.e22 = Eigen::MatrixXcd::Zero(m, m);
    if (s >= 2) f.e21 = e2 * std::pow(w, s - 2) * vf.gram(2).cast<cplx>();
    for (int i = 3; i <= s; ++i) f.e22 += e2 * std::pow(w, s - i) * vf.gram(i).cast<cplx>();
    // ||(g, grad phi)||^2_{H^s_x} + eps^2 ||grad_v g||^2_{H^{s-1}}
    f.plain = Eigen::MatrixXcd::Zero(m, m);
    for (int k = 0; k <= s; ++k) f.plain += std::pow(w, k) * (I + F);
    for (int k = 0; k < s; ++k)
        for (int i = 0; i <= k; ++i) f.plain += e2 * std::pow(w, i) * vf.gram(k - i + 1).cast<cplx>();
    return f;
}

inline double quadratic(const Eigen::MatrixXcd& Q, const VelocityVector& x)
{
    return x.dot(Q * x).real();
}

/// Functional of a state on the torus (normalized measure, so norms are Parseval sums over modes).
inline EnergyValue energy_functional(const ModeGrid& grid, const VelocityForms& vf, double eps, const KineticState& st,
                                     const EnergyLedger& l, int s = 1, FieldSign sign = FieldSign::minus)
{
    EnergyValue v;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        ModeForms f = energy_forms(vf, mode_vector(grid.mode(j)), eps, l, s, sign);
        VelocityVector x = st.g.col(Eigen::Index(j));
        v.e1 += quadratic(f.e1, x);
        v.e21 += quadratic(f.e21, x);
        v.e22 += quadratic(f.e22, x);
        v.plain += quadratic(f.plain, x);
    }
    return v;
}

struct EquivalenceBounds {
    double c_l = std::numeric_limits<double>::infinity();
    double c_u = 0.0;
};

/// Extreme generalized eigenvalues of (functional, plain) over every mode of the grid.
inline EquivalenceBounds equivalence_constants(const ModeGrid& grid, const VelocityForms& vf, double eps, const EnergyLedger& l, int s = 1,
                                               FieldSign sign = FieldSign::minus)
{
    EquivalenceBounds e;
    for (std::size_t j : grid.half()) {
        ModeForms f = energy_forms(vf, mode_vector(grid.mode(j)), eps, l, s, sign);
        Eigen::MatrixXcd A = f.e1 + f.e21 + f.e22;
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(A, f.plain, Eigen::EigenvaluesOnly);
        e.c_l = std::min(e.c_l, es.eigenvalues().minCoeff());
        e.c_u = std::max(e.c_u, es.eigenvalues().maxCoeff());
    }
    return e;
}

struct DecayFit {
    double rate = 0.0, amplitude = 0.0, residual = 0.0;
    bool monotone = true;
    std::size_t samples = 0;
};

/// Least-squares fit of log E = log A - rate t over samples with t >= t_start.
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& E, double t_start = 0.0)
{
    if (t.size() != E.size()) throw std::invalid_argument("fit_decay: size mismatch");
    std::vector<double> x, y;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_start) {
            if (!(E[k] > 0.0)) throw std::invalid_argument("fit_decay: non-positive energy sample");
            x.push_back(t[k]);
            y.push_back(std::log(E[k]));
        }
    if (x.size() < 10) throw std::invalid_argument("fit_decay: need at least 10 samples past the transient");
    DecayFit f;
    f.samples = x.size();
    Eigen::MatrixXd A(Eigen::Index(x.size()), 2);
    Eigen::VectorXd rhs(Eigen::Index(x.size()));
    for (std::size_t k = 0; k < x.size(); ++k) {
        A(Eigen::Index(k), 0) = 1.0;
        A(Eigen::Index(k), 1) = -x[k];
        rhs(Eigen::Index(k)) = y[k];
        if (k > 0 && y[k] > y[k - 1] + 1e-12) f.monotone = false;
    }
    Eigen::Vector2d c = A.colPivHouseholderQr().solve(rhs);
    f.amplitude = std::exp(c(0));
    f.rate = c(1);
    f.residual = std::sqrt((A * c - rhs).squaredNorm() / double(x.size()));
    return f;
}

struct BilinearBound {
    double C = 0.0;           // max |<Gamma(g,h), f>| / (||(g,h)|| ||(g,h)||_Lambda ||f^perp||_Lambda)
    double kernel_leak = 0.0; // max |<Gamma(g,h), chi_k>|
};

inline BilinearBound measure_bilinear_bound(const CollisionModel& model, int samples = 200, std::uint64_t seed = 7)
{
    const HermiteBasis& b = model.basis();
    const FluidProjection& P = model.projection();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    auto draw = [&] {
        VelocityVector x(Eigen::Index(b.size()));
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = nd(rng);
        return x;
    };
    BilinearBound r;
    for (int k = 0; k < samples; ++k) {
        VelocityVector g = draw(), h = draw(), f = draw();
        VelocityVector G = model.apply_Gamma(g, h);
        double n0 = std::sqrt(g.squaredNorm() + h.squaredNorm());
        double nl = std::sqrt(std::pow(b.lambda_norm(g), 2) + std::pow(b.lambda_norm(h), 2));
        double nf = b.lambda_norm(P.perp(f));
        r.C = std::max(r.C, std::abs(f.dot(G)) / (n0 * nl * nf));
        for (int c = 0; c < 5; ++c) r.kernel_leak = std::max(r.kernel_leak, std::abs(P.chi(c).dot(G)));
    }
    return r;
}

} // namespace vpb
