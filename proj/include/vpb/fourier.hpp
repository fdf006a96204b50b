#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace vpb {

using Mode = std::array<int, 2>;

/// Fourier modes |n|_inf <= N on the 2pi-periodic torus T^d (d = 1, 2), with a zero-padded
/// physical grid of M >= 3N+1 points per axis for dealiased quadratic products.
/// The torus measure is normalized, so mode 0 is the spatial mean.
class ModeGrid {
public:
    ModeGrid(int dim, int cut) : d_(dim), N_(cut)
    {
        if (dim != 1 && dim != 2) throw std::invalid_argument("spatial dimension must be 1 or 2");
        if (cut < 1) throw std::invalid_argument("mode cut must be >= 1");
        const int w = 2 * N_ + 1;
        lookup_.assign(std::size_t(d_ == 1 ? w : w * w), 0);
        for (int a = -N_; a <= N_; ++a)
            for (int b = (d_ == 2 ? -N_ : 0); b <= (d_ == 2 ? N_ : 0); ++b) {
                lookup_[key({a, b})] = modes_.size();
                modes_.push_back({a, b});
            }
        neg_.resize(modes_.size());
        for (std::size_t j = 0; j < modes_.size(); ++j) {
            neg_[j] = index({-modes_[j][0], -modes_[j][1]});
            const Mode& n = modes_[j];
            if (n[0] > 0 || (n[0] == 0 && n[1] >= 0)) half_.push_back(j);
        }
        zero_ = index({0, 0});

        M_ = 3 * N_ + 1;
        const int P = d_ == 1 ? M_ : M_ * M_;
        const Eigen::Index m = Eigen::Index(modes_.size());
        cos_.resize(m, P);
        sin_.resize(m, P);
        for (std::size_t j = 0; j < modes_.size(); ++j)
            for (int p = 0; p < P; ++p) {
                int p0 = d_ == 1 ? p : p / M_, p1 = d_ == 1 ? 0 : p % M_;
                long ph = (long(modes_[j][0]) * p0 + long(modes_[j][1]) * p1) % M_;
                if (ph < 0) ph += M_;
                double a = 2.0 * std::numbers::pi * double(ph) / M_;
                cos_(Eigen::Index(j), p) = std::cos(a);
                sin_(Eigen::Index(j), p) = std::sin(a);
            }
        fcos_ = cos_.transpose() / double(P);
        fsin_ = -sin_.transpose() / double(P);
    }

    int dim() const { return d_; }
    int cut() const { return N_; }
    std::size_t size() const { return modes_.size(); }
    const Mode& mode(std::size_t j) const { return modes_.at(j); }
    double norm2(std::size_t j) const
    {
        const Mode& n = modes_[j];
        return double(n[0]) * n[0] + double(n[1]) * n[1];
    }
    std::size_t index(const Mode& n) const
    {
        if (std::abs(n[0]) > N_ || std::abs(n[1]) > N_ || (d_ == 1 && n[1] != 0)) throw std::out_of_range("mode outside grid");
        return lookup_[key(n)];
    }
    std::size_t negative(std::size_t j) const { return neg_[j]; }
    std::size_t zero() const { return zero_; }
    /// Zero mode plus one representative of each +-n pair.
    const std::vector<std::size_t>& half() const { return half_; }

    int padded() const { return M_; }
    std::size_t points() const { return std::size_t(cos_.cols()); }

    /// Physical values of real fields: rows are components, columns modes -> columns points.
    Eigen::MatrixXd synthesize(const Eigen::MatrixXcd& coeffs) const
    {
        return coeffs.real() * cos_ - coeffs.imag() * sin_;
    }
    /// Mode coefficients of real physical fields, with exact Hermitian symmetry imposed.
    Eigen::MatrixXcd analyze(const Eigen::MatrixXd& phys) const
    {
        Eigen::MatrixXcd out(phys.rows(), Eigen::Index(size()));
        out.real() = phys * fcos_;
        out.imag() = phys * fsin_;
        enforce_reality(out);
        return out;
    }

    /// Sets column -n to the conjugate of column n for every representative n.
    void enforce_reality(Eigen::MatrixXcd& c) const
    {
        for (std::size_t j : half_) {
            if (j == zero_) {
                c.col(Eigen::Index(j)) = c.col(Eigen::Index(j)).real().cast<std::complex<double>>();
                continue;
            }
            c.col(Eigen::Index(neg_[j])) = c.col(Eigen::Index(j)).conjugate();
        }
    }

    /// max |c(-n) - conj c(n)|
    double reality_defect(const Eigen::MatrixXcd& c) const
    {
        double e = 0.0;
        for (std::size_t j = 0; j < size(); ++j)
            e = std::max(e, (c.col(Eigen::Index(neg_[j])) - c.col(Eigen::Index(j)).conjugate()).cwiseAbs().maxCoeff());
        return e;
    }

private:
    std::size_t key(const Mode& n) const
    {
        const int w = 2 * N_ + 1;
        return d_ == 1 ? std::size_t(n[0] + N_) : std::size_t((n[0] + N_) * w + (n[1] + N_));
    }

    int d_, N_, M_ = 0;
    std::vector<Mode> modes_;
    std::vector<std::size_t> lookup_, neg_, half_;
    std::size_t zero_ = 0;
    Eigen::MatrixXd cos_, sin_, fcos_, fsin_;
};

} // namespace vpb
