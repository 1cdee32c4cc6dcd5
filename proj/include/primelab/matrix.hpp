#ifndef PRIMELAB_MATRIX_HPP
#define PRIMELAB_MATRIX_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace primelab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending,
// eigenvector columns orthonormal.
struct SymmetricEigen {
    Vector eigenvalues;
    Matrix eigenvectors;
};

inline bool is_symmetric(const Matrix& a, double tol = 1e-10) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline SymmetricEigen sym_eigen(const Matrix& a) {
    require(a.size() > 0, "sym_eigen: empty matrix");
    require(a.rows() == a.cols(), "sym_eigen: matrix must be square");
    require_finite(a, "sym_eigen");
    require(is_symmetric(a), "sym_eigen: matrix not symmetric within tolerance");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (a + a.transpose()));
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("sym_eigen: eigensolver failed to converge");
    // Eigen sorts ascending; flip to descending.
    const Eigen::Index n = a.rows();
    SymmetricEigen out;
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors = solver.eigenvectors().rowwise().reverse();
    (void)n;
    return out;
}

// Largest singular value. For symmetric input this equals max |eigenvalue|.
inline double spectral_norm(const Matrix& m) {
    require(m.size() > 0, "spectral_norm: empty matrix");
    require_finite(m, "spectral_norm");
    // Work with the smaller Gram matrix.
    Matrix g;
    if (m.rows() <= m.cols())
        g = m * m.transpose();
    else
        g = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
    const double top = solver.eigenvalues().maxCoeff();
    return std::sqrt(std::max(0.0, top));
}

// (1 - (1 - x)^t) evaluated stably, with the convention that x = 0 gives 0.
inline double one_minus_pow(double x, long long t) {
    if (t == 0) return 0.0;
    if (x <= 0.0) return 0.0;
    if (x >= 2.0) return 1.0 - std::pow(1.0 - x, static_cast<double>(t));
    return -std::expm1(static_cast<double>(t) * std::log1p(-x));
}

// Evaluates [I - (I - scale*A)^t] y for symmetric PSD A via the eigenbasis.
// Matrix powers are never formed explicitly; t may be very large.
inline Vector poly_step_apply(const Matrix& a, long long t, double scale, const Vector& y) {
    require(a.size() > 0, "poly_step_apply: empty matrix");
    require(a.rows() == a.cols(), "poly_step_apply: matrix must be square");
    require(y.size() == a.rows(), "poly_step_apply: vector length mismatch");
    require(t >= 0, "poly_step_apply: negative step count");
    const SymmetricEigen eig = sym_eigen(a);
    const double lam_max = eig.eigenvalues.size() ? eig.eigenvalues(0) : 0.0;
    require(eig.eigenvalues.minCoeff() >= -1e-10 * std::max(1.0, lam_max),
            "poly_step_apply: matrix not positive semidefinite");
    if (scale * lam_max > 1.0 + 1e-12)
        throw std::invalid_argument("poly_step_apply: scale*lambda_max = " +
                                    std::to_string(scale * lam_max) +
                                    " > 1, geometric factors diverge");
    Vector coeff(eig.eigenvalues.size());
    for (Eigen::Index i = 0; i < coeff.size(); ++i)
        coeff(i) = one_minus_pow(scale * eig.eigenvalues(i), t);
    return eig.eigenvectors * (coeff.asDiagonal() * (eig.eigenvectors.transpose() * y));
}

}  // namespace primelab

#endif  // PRIMELAB_MATRIX_HPP
