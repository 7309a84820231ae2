#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cylmart/errors.hpp"

namespace cylmart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative symmetry tolerance accepted by SymOperator.
inline constexpr double kSymmetryTol = 1e-12;
/// Negative eigenvalues above -kPsdClamp * norm are treated as round-off and clamped.
inline constexpr double kPsdClamp = 1e-8;
/// Relative singular-value cutoff for rank decisions.
inline constexpr double kRankCutoff = 1e-10;

/// Real symmetric matrix, symmetrized exactly on construction.
class SymOperator {
public:
    explicit SymOperator(const Matrix& m) {
        if (m.rows() != m.cols()) throw NotSymmetric("operator is not square");
        const double scale = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
        const double skew = m.size() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
        if (skew > kSymmetryTol * scale) throw NotSymmetric("operator is not symmetric");
        m_ = 0.5 * (m + m.transpose());
    }

    static SymOperator identity(Eigen::Index d) { return SymOperator(Matrix::Identity(d, d)); }

    const Matrix& matrix() const noexcept { return m_; }
    Eigen::Index dim() const noexcept { return m_.rows(); }

private:
    Matrix m_;
};

namespace detail {

/// Largest absolute eigenvalue of a matrix assumed symmetric.
inline double sym_norm(const Matrix& b) {
    if (b.rows() == 0) return 0.0;
    if (b.rows() == 1) return std::abs(b(0, 0));
    if (b.isDiagonal(0.0)) return b.diagonal().cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> es(b, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Spectral square root with round-off clamping; throws NotPsd on genuine negativity.
inline Matrix psd_root(const Matrix& b) {
    if (b.rows() == 0) return b;
    Eigen::SelfAdjointEigenSolver<Matrix> es(b);
    Vector ev = es.eigenvalues();
    const double norm = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
    if (ev(0) < -kPsdClamp * norm) throw NotPsd("operator has a negative eigenvalue");
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    Matrix r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (r + r.transpose());
}

} // namespace detail

/// Operator norm of a symmetric operator: its largest absolute eigenvalue.
inline double op_norm_sym(const SymOperator& b) { return detail::sym_norm(b.matrix()); }

/// Symmetric PSD square root R with R^T R = B.
inline SymOperator psd_sqrt(const SymOperator& b) { return SymOperator(detail::psd_root(b.matrix())); }

/// Orthogonal projection P, idempotent P_tilde and left inverse L with
/// P_tilde F = F P and L F = P.
struct ProjectionTriple {
    Matrix P;
    Matrix P_tilde;
    Matrix L;
};

/// Projection onto F applied to span(columns of h0_basis), with the companion operators.
///
/// F is spectrally truncated at the relative cutoff first; the range is then read off an SVD
/// of F restricted to the subspace.
inline ProjectionTriple projection_selection(const SymOperator& f, const Matrix& h0_basis) {
    const Eigen::Index d = f.dim();
    if (h0_basis.rows() != d) throw InvalidArgument("basis vectors have the wrong dimension");
    if (h0_basis.cols() > d) throw InvalidArgument("more basis vectors than dimensions");
    const Eigen::Index k = h0_basis.cols();
    if (k > 0) {
        const Matrix gram = h0_basis.transpose() * h0_basis;
        if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10)
            throw InvalidArgument("basis is not orthonormal");
    }

    Eigen::SelfAdjointEigenSolver<Matrix> es(f.matrix());
    Vector ev = es.eigenvalues();
    const double norm = std::max(std::abs(ev(0)), std::abs(ev(d - 1)));
    if (ev(0) < -kPsdClamp * norm) throw NotPsd("operator has a negative eigenvalue");
    Vector inv = Vector::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (ev(i) > kRankCutoff * norm && ev(i) > 0.0) {
            inv(i) = 1.0 / ev(i);
        } else {
            ev(i) = 0.0;
        }
    }
    const Matrix& v = es.eigenvectors();
    const Matrix fr = v * ev.asDiagonal() * v.transpose();
    const Matrix fr_pinv = v * inv.asDiagonal() * v.transpose();

    ProjectionTriple out{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d)};
    if (k == 0) return out;

    Eigen::JacobiSVD<Matrix> svd(fr * h0_basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    Eigen::Index rank = 0;
    const double smax = s.size() ? s(0) : 0.0;
    while (rank < s.size() && s(rank) > kRankCutoff * smax && s(rank) > 0.0) ++rank;
    if (rank == 0) return out;

    const Matrix u = svd.matrixU().leftCols(rank);
    const Matrix w = svd.matrixV().leftCols(rank);
    const Vector sinv = s.head(rank).cwiseInverse();
    out.P = u * u.transpose();
    out.P_tilde = fr * u * sinv.asDiagonal() * w.transpose() * h0_basis.transpose();
    out.L = out.P * fr_pinv;
    return out;
}

} // namespace cylmart
