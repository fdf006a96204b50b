#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpb {

using cplx = std::complex<double>;
using VelocityVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// One-dimensional quadrature rule.
struct GaussRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

/// Gauss–Hermite rule for the standard normal density (weights sum to 1), via Golub–Welsch.
inline GaussRule gauss_hermite(int n)
{
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule r;
    r.nodes = es.eigenvalues();
    r.weights.resize(n);
    // Newton polish on psi_n, then Christoffel weights 1 / sum_k psi_k(x)^2
    for (int i = 0; i < n; ++i) {
        double x = r.nodes(i);
        for (int it = 0; it < 3; ++it) {
            Eigen::VectorXd p(n + 1);
            p(0) = 1.0;
            p(1) = x;
            for (int k = 1; k < n; ++k) p(k + 1) = (x * p(k) - std::sqrt(double(k)) * p(k - 1)) / std::sqrt(double(k + 1));
            x -= p(n) / (std::sqrt(double(n)) * p(n - 1));
        }
        r.nodes(i) = x;
        double s = 0.0, a = 1.0, b = x;
        s = 1.0 + (n > 1 ? x * x : 0.0);
        for (int k = 1; k + 1 < n; ++k) {
            double c = (x * b - std::sqrt(double(k)) * a) / std::sqrt(double(k + 1));
            a = b;
            b = c;
            s += c * c;
        }
        r.weights(i) = 1.0 / s;
    }
    // symmetrize: the rule is exactly symmetric about the origin
    for (int k = 0; k < n / 2; ++k) {
        double x = 0.5 * (r.nodes(n - 1 - k) - r.nodes(k));
        double w = 0.5 * (r.weights(k) + r.weights(n - 1 - k));
        r.nodes(k) = -x;
        r.nodes(n - 1 - k) = x;
        r.weights(k) = r.weights(n - 1 - k) = w;
    }
    if (n % 2 == 1) r.nodes(n / 2) = 0.0;
    r.weights /= r.weights.sum();
    return r;
}

/// Gauss–Legendre rule on [a,b].
inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0)
{
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule r;
    r.nodes = es.eigenvalues();
    r.weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
    for (int k = 0; k < n / 2; ++k) {
        double x = 0.5 * (r.nodes(n - 1 - k) - r.nodes(k));
        double w = 0.5 * (r.weights(k) + r.weights(n - 1 - k));
        r.nodes(k) = -x;
        r.nodes(n - 1 - k) = x;
        r.weights(k) = r.weights(n - 1 - k) = w;
    }
    if (n % 2 == 1) r.nodes(n / 2) = 0.0;
    r.nodes = (0.5 * (b - a)) * (r.nodes.array() + 1.0) + a;
    r.weights *= 0.5 * (b - a);
    return r;
}

/// Normalized probabilists' Hermite functions psi_0..psi_K at x.
inline Eigen::VectorXd hermite_values(int K, double x)
{
    Eigen::VectorXd p(K + 1);
    p(0) = 1.0;
    if (K >= 1) p(1) = x;
    for (int n = 1; n < K; ++n) p(n + 1) = (x * p(n) - std::sqrt(double(n)) * p(n - 1)) / std::sqrt(double(n + 1));
    return p;
}

inline std::size_t basis_size(int K)
{
    if (K < 0) throw std::invalid_argument("basis_size: negative degree");
    std::size_t k = std::size_t(K);
    return (k + 1) * (k + 2) * (k + 3) / 6;
}

using MultiIndex = std::array<int, 3>;

/// Tensor Hermite basis of total degree <= K in three velocity dimensions.
///
/// Flat ordering is graded: total degree ascending, then lexicographic descending in the
/// first component, so psi_0 = 1 sits at 0 and v_1, v_2, v_3 sit at 1, 2, 3.
class HermiteBasis {
public:
    explicit HermiteBasis(int max_degree) : K_(max_degree)
    {
        if (K_ < 0) throw std::invalid_argument("HermiteBasis: negative degree");
        lookup_.assign(std::size_t((K_ + 1) * (K_ + 1) * (K_ + 1)), -1);
        for (int deg = 0; deg <= K_; ++deg)
            for (int a = deg; a >= 0; --a)
                for (int b = deg - a; b >= 0; --b) {
                    int c = deg - a - b;
                    lookup_[key(a, b, c)] = std::ptrdiff_t(index_.size());
                    index_.push_back({a, b, c});
                }
        build_quadrature(2 * K_ + 2, nodes_, weights_, values_);
        int qp = std::max((3 * K_ + 2) / 2, K_ + 1);
        build_quadrature(qp, pnodes_, pweights_, pvalues_);
        for (int ax = 0; ax < 3; ++ax) {
            deriv_[ax] = RealMatrix::Zero(size(), size());
            mulv_[ax] = RealMatrix::Zero(size(), size());
            for (std::size_t j = 0; j < size(); ++j) {
                MultiIndex a = index_[j];
                int n = a[ax];
                if (n > 0) {
                    MultiIndex b = a;
                    --b[ax];
                    std::ptrdiff_t i = flat(b);
                    deriv_[ax](i, j) = std::sqrt(double(n));
                    mulv_[ax](i, j) = std::sqrt(double(n));
                }
                MultiIndex b = a;
                ++b[ax];
                std::ptrdiff_t i = flat(b);
                if (i >= 0) mulv_[ax](i, j) = std::sqrt(double(n + 1));
            }
        }
        lambda_ = multiplier_matrix([](const Eigen::Vector3d& v) { return 1.0 + v.norm(); });
    }

    int max_degree() const { return K_; }
    std::size_t size() const { return index_.size(); }
    const MultiIndex& index(std::size_t i) const { return index_.at(i); }

    /// Flat index of alpha, or -1 if |alpha| > K.
    std::ptrdiff_t flat(const MultiIndex& a) const
    {
        if (a[0] < 0 || a[1] < 0 || a[2] < 0 || a[0] + a[1] + a[2] > K_) return -1;
        return lookup_[key(a[0], a[1], a[2])];
    }
    std::ptrdiff_t flat(int a, int b, int c) const { return flat(MultiIndex{a, b, c}); }

    VelocityVector unit(const MultiIndex& a) const
    {
        std::ptrdiff_t i = flat(a);
        if (i < 0) throw std::out_of_range("HermiteBasis::unit: index above truncation degree");
        VelocityVector e = VelocityVector::Zero(Eigen::Index(size()));
        e(i) = 1.0;
        return e;
    }

    /// Quadrature grid of order 2K+2 per axis: nodes (3 x Nq), weights (Nq), values (Nq x size).
    const Eigen::MatrixXd& nodes() const { return nodes_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    const Eigen::MatrixXd& values() const { return values_; }

    void check(const VelocityVector& f) const
    {
        if (std::size_t(f.size()) != size())
            throw std::invalid_argument("velocity vector length " + std::to_string(f.size()) + " does not match basis size " +
                                        std::to_string(size()));
    }

    /// <f, g> = int f conj(g) M dv
    cplx weighted_inner(const VelocityVector& f, const VelocityVector& g) const
    {
        check(f);
        check(g);
        return g.dot(f);
    }

    const RealMatrix& lambda_matrix() const { return lambda_; }

    /// (int |f|^2 (1+|v|) M dv)^{1/2}
    double lambda_norm(const VelocityVector& f) const
    {
        check(f);
        return std::sqrt(std::max(0.0, f.dot(lambda_ * f).real()));
    }

    /// Galerkin matrix of multiplication by w(v), integrated on a spherical product rule
    /// (Gauss–Legendre in r and cos(theta), trapezoid in the azimuth).
    RealMatrix multiplier_matrix(const std::function<double(const Eigen::Vector3d&)>& w) const
    {
        const int nr = 96, nmu = K_ + 2, nphi = 2 * K_ + 3;
        const double rmax = 10.0 + 0.6 * K_;
        GaussRule rr = gauss_legendre(nr, 0.0, rmax);
        GaussRule mu = gauss_legendre(nmu);
        const double norm = 4.0 * std::numbers::pi / std::pow(2.0 * std::numbers::pi, 1.5);
        const Eigen::Index nq = Eigen::Index(nr) * nmu * nphi;
        Eigen::MatrixXd Phi(nq, Eigen::Index(size()));
        Eigen::VectorXd wq(nq);
        Eigen::Index q = 0;
        for (int ir = 0; ir < nr; ++ir) {
            double r = rr.nodes(ir);
            double radial = rr.weights(ir) * r * r * std::exp(-0.5 * r * r) * norm;
            for (int im = 0; im < nmu; ++im) {
                double c = mu.nodes(im), s = std::sqrt(std::max(0.0, 1.0 - c * c));
                for (int ip = 0; ip < nphi; ++ip, ++q) {
                    double ph = 2.0 * std::numbers::pi * ip / nphi;
                    Eigen::Vector3d v(r * s * std::cos(ph), r * s * std::sin(ph), r * c);
                    wq(q) = radial * 0.5 * mu.weights(im) / nphi * w(v);
                    Phi.row(q) = eval_point(v).transpose();
                }
            }
        }
        RealMatrix M = Phi.transpose() * wq.asDiagonal() * Phi;
        return 0.5 * (M + M.transpose());
    }

    /// Values of every basis function at a velocity point.
    Eigen::VectorXd eval_point(const Eigen::Vector3d& v) const
    {
        Eigen::VectorXd h0 = hermite_values(K_, v(0)), h1 = hermite_values(K_, v(1)), h2 = hermite_values(K_, v(2));
        Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < size(); ++i) out(Eigen::Index(i)) = h0(index_[i][0]) * h1(index_[i][1]) * h2(index_[i][2]);
        return out;
    }

    /// Differentiation d/dv_axis and multiplication by v_axis as coefficient matrices.
    const RealMatrix& derivative_matrix(int axis) const { return deriv_.at(std::size_t(axis)); }
    const RealMatrix& multiply_v_matrix(int axis) const { return mulv_.at(std::size_t(axis)); }

    VelocityVector gradient_v(const VelocityVector& f, int axis) const
    {
        check(f);
        return derivative_matrix(axis) * f;
    }
    VelocityVector multiply_v(const VelocityVector& f, int axis) const
    {
        check(f);
        return multiply_v_matrix(axis) * f;
    }

    /// Projection of pointwise products onto degree <= K, column-wise for real coefficient blocks.
    Eigen::MatrixXd multiply_project(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G) const
    {
        Eigen::MatrixXd a = pvalues_ * F;
        Eigen::MatrixXd b = pvalues_ * G;
        a.array() *= b.array();
        a.array().colwise() *= pweights_.array();
        return pvalues_.transpose() * a;
    }
    /// Column-wise squares: multiply_project(F, F) with one evaluation.
    Eigen::MatrixXd square_project(const Eigen::MatrixXd& F) const
    {
        Eigen::MatrixXd a = pvalues_ * F;
        a.array() = a.array().square().colwise() * pweights_.array();
        return pvalues_.transpose() * a;
    }

    VelocityVector multiply_project(const VelocityVector& f, const VelocityVector& g) const
    {
        check(f);
        check(g);
        Eigen::MatrixXd fr = f.real(), fi = f.imag(), gr = g.real(), gi = g.imag();
        Eigen::MatrixXd re = multiply_project(fr, gr) - multiply_project(fi, gi);
        Eigen::MatrixXd im = multiply_project(fr, gi) + multiply_project(fi, gr);
        VelocityVector out(re.rows());
        out.real() = re.col(0);
        out.imag() = im.col(0);
        return out;
    }

    /// chi_0 = 1, chi_i = v_i, chi_4 = (|v|^2 - 3)/sqrt(6); needs K >= 2.
    VelocityVector chi(int k) const
    {
        if (K_ < 2) throw std::invalid_argument("chi: basis degree must be >= 2");
        switch (k) {
        case 0: return unit({0, 0, 0});
        case 1: return unit({1, 0, 0});
        case 2: return unit({0, 1, 0});
        case 3: return unit({0, 0, 1});
        case 4: return (unit({2, 0, 0}) + unit({0, 2, 0}) + unit({0, 0, 2})) / std::sqrt(3.0);
        default: throw std::out_of_range("chi: index must be in 0..4");
        }
    }

private:
    std::size_t key(int a, int b, int c) const
    {
        return std::size_t((a * (K_ + 1) + b) * (K_ + 1) + c);
    }

    void build_quadrature(int q, Eigen::MatrixXd& X, Eigen::VectorXd& W, Eigen::MatrixXd& V) const
    {
        GaussRule g = gauss_hermite(q);
        Eigen::MatrixXd h(q, K_ + 1);
        for (int i = 0; i < q; ++i) h.row(i) = hermite_values(K_, g.nodes(i)).transpose();
        const Eigen::Index nq = Eigen::Index(q) * q * q;
        X.resize(3, nq);
        W.resize(nq);
        V.resize(nq, Eigen::Index(size()));
        Eigen::Index p = 0;
        for (int i = 0; i < q; ++i)
            for (int j = 0; j < q; ++j)
                for (int k = 0; k < q; ++k, ++p) {
                    X.col(p) << g.nodes(i), g.nodes(j), g.nodes(k);
                    W(p) = g.weights(i) * g.weights(j) * g.weights(k);
                    for (std::size_t a = 0; a < size(); ++a)
                        V(p, Eigen::Index(a)) = h(i, index_[a][0]) * h(j, index_[a][1]) * h(k, index_[a][2]);
                }
    }

    int K_;
    std::vector<MultiIndex> index_;
    std::vector<std::ptrdiff_t> lookup_;
    Eigen::MatrixXd nodes_, values_, pnodes_, pvalues_;
    Eigen::VectorXd weights_, pweights_;
    std::array<RealMatrix, 3> deriv_, mulv_;
    RealMatrix lambda_;
};

} // namespace vpb
