#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace rbsd {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Number of monomials in q variables of total degree <= p.
int basis_size(int q, int degree);

/// Exponent vectors of those monomials, graded by degree, lexicographic
/// within a degree; the first is the constant.
std::vector<std::vector<int>> monomial_exponents(int q, int degree);

/// Rows of z are samples. Column c of the result is the monomial
/// monomial_exponents(q, degree)[c] evaluated on every row.
template <class Derived>
MatrixX<typename Derived::Scalar> polynomial_basis(const Eigen::MatrixBase<Derived>& z,
                                                   int degree) {
  using Scalar = typename Derived::Scalar;
  const auto exps = monomial_exponents(static_cast<int>(z.cols()), degree);
  MatrixX<Scalar> out(z.rows(), static_cast<Eigen::Index>(exps.size()));
  for (std::size_t c = 0; c < exps.size(); ++c) {
    VectorX<Scalar> col = VectorX<Scalar>::Ones(z.rows());
    for (std::size_t v = 0; v < exps[c].size(); ++v)
      for (int e = 0; e < exps[c][v]; ++e) col.array() *= z.col(v).array();
    out.col(c) = col;
  }
  return out;
}

/// Per-column centering and scaling learned on one sample. Columns whose
/// spread is negligible relative to their magnitude are dropped, since they
/// only duplicate the intercept.
struct Standardizer {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<int> keep;
  /// Standardized values are clamped to [-clip, clip] when clip > 0, which
  /// keeps high-degree monomials bounded on the sparse tails.
  double clip = 0.0;

  template <class Derived>
  static Standardizer fit(const Eigen::MatrixBase<Derived>& x, double rel_tol = 1e-9) {
    Standardizer s;
    const Eigen::Index n = x.rows();
    s.center = x.colwise().mean().transpose().template cast<double>();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double var =
          n > 1 ? (x.col(c).template cast<double>().array() - s.center(c)).square().sum() / (n - 1)
                : 0.0;
      const double sd = std::sqrt(var);
      s.scale(c) = sd;
      if (sd > rel_tol * (1.0 + std::abs(s.center(c)))) s.keep.push_back(static_cast<int>(c));
    }
    return s;
  }

  int output_dim() const { return static_cast<int>(keep.size()); }

  template <class Derived>
  MatrixX<typename Derived::Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    MatrixX<Scalar> out(x.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const int c = keep[k];
      out.col(k) = (x.col(c).array() - Scalar(center(c))) / Scalar(scale(c));
      if (clip > 0) out.col(k) = out.col(k).array().max(Scalar(-clip)).min(Scalar(clip));
    }
    return out;
  }
};

template <class Scalar>
struct LeastSquaresFit {
  MatrixX<Scalar> coef;  // L x r, one column per right-hand side
  int rank = 0;
  Scalar sigma_max = 0;
  bool truncated = false;
};

/// min |A C - B| by Householder QR, then a truncated SVD of R that discards
/// singular values below rel_threshold * sigma_max.
template <class DerivedA, class DerivedB>
LeastSquaresFit<typename DerivedA::Scalar> truncated_least_squares(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    double rel_threshold = 1e-10) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index L = a.cols();
  LeastSquaresFit<Scalar> fit;
  fit.coef = MatrixX<Scalar>::Zero(L, b.cols());
  if (L == 0 || a.rows() == 0) return fit;

  Eigen::HouseholderQR<MatrixX<Scalar>> qr(a);
  const Eigen::Index k = std::min(a.rows(), L);
  const MatrixX<Scalar> qtb = (qr.householderQ().transpose() * b).topRows(k);
  const MatrixX<Scalar> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();

  Eigen::JacobiSVD<MatrixX<Scalar>> svd(r, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorX<Scalar>& sv = svd.singularValues();
  fit.sigma_max = sv.size() ? sv(0) : Scalar(0);
  const Scalar cut = Scalar(rel_threshold) * fit.sigma_max;
  VectorX<Scalar> inv = VectorX<Scalar>::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cut && sv(i) > Scalar(0)) {
      inv(i) = Scalar(1) / sv(i);
      ++fit.rank;
    }
  }
  fit.truncated = fit.rank < L;
  fit.coef = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * qtb;
  return fit;
}

}  // namespace rbsd
