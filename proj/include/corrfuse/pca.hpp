#pragma once

// Mean-centered PCA: an exact route (dense symmetric eigendecomposition of the
// Gram matrix, top-k pairs only) and a randomized range-finder route with
// power iterations. Both share one deterministic sign convention.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"

namespace corrfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct PcaModel {
  RowVector mean;    // 1 x C
  Matrix basis;      // k x C, orthonormal rows
  Vector explained;  // k singular values of the centered data, non-increasing

  int k() const noexcept { return static_cast<int>(basis.rows()); }
  int input_dim() const noexcept { return static_cast<int>(basis.cols()); }
};

enum class PcaMethod { kExact, kRandomized };

inline const char* to_string(PcaMethod method) { return method == PcaMethod::kExact ? "exact" : "randomized"; }

struct RandomizedSvdOptions {
  int oversample = 10;
  int power_iters = 2;
};

/// Tokens of a map as an N x C matrix (row-major token order).
inline Matrix token_matrix(const FeatureMap& map) {
  Matrix m(map.tokens(), map.channels());
  for (int t = 0; t < map.tokens(); ++t) {
    const auto tok = map.token(t);
    for (int c = 0; c < map.channels(); ++c) m(t, c) = tok[c];
  }
  return m;
}

namespace detail {

inline void check_pca_args(const Matrix& tokens, int k) {
  require(tokens.rows() >= 2, "PCA needs at least 2 tokens");
  require(tokens.cols() >= 1, "PCA needs at least 1 channel");
  require(k >= 1 && k <= std::min(tokens.rows(), tokens.cols()),
          "PCA target dimension k=" + std::to_string(k) + " outside [1, min(N, C)]");
  require(tokens.allFinite(), "PCA input contains NaN or Inf");
}

// Largest-magnitude entry of every row made positive; first index wins ties.
inline void apply_sign_convention(Matrix& basis) {
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
      if (std::abs(basis(r, c)) > best_abs) {
        best_abs = std::abs(basis(r, c));
        best = c;
      }
    }
    if (basis(r, best) < 0.0) basis.row(r) *= -1.0;
  }
}

// Modified Gram-Schmidt over rows (two passes). A row that collapses is
// replaced by the first standard basis vector that survives projection.
inline void orthonormalize_rows(Matrix& basis) {
  const Eigen::Index dim = basis.cols();
  Eigen::Index next_candidate = 0;
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    RowVector v = basis.row(r);
    const double original = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index p = 0; p < r; ++p) v -= v.dot(basis.row(p)) * basis.row(p);
    }
    double n = v.norm();
    if (!(n > 1e-6 * std::max(original, 1e-300)) || original == 0.0) {
      n = 0.0;
      while (n < 0.5 && next_candidate < dim) {
        v = RowVector::Unit(dim, next_candidate++);
        for (int pass = 0; pass < 2; ++pass) {
          for (Eigen::Index p = 0; p < r; ++p) v -= v.dot(basis.row(p)) * basis.row(p);
        }
        n = v.norm();
      }
      require(n >= 0.5, "orthonormal completion failed");
    }
    basis.row(r) = v / n;
  }
}

// Top-k eigenpairs of a symmetric matrix (lower triangle referenced),
// returned in descending eigenvalue order. Householder tridiagonalization,
// MRRR on the tridiagonal for the wanted index range, then back-transform.
inline std::pair<Vector, Matrix> top_eigenpairs(const Matrix& gram, int k) {
  const int n = static_cast<int>(gram.rows());
  const Eigen::Tridiagonalization<Matrix> tri(gram);
  Vector diag = tri.diagonal();
  Vector off = Vector::Zero(n);
  off.head(n - 1) = tri.subDiagonal();
  Vector values(n);
  Matrix z(n, k);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(k));
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  const lapack_int info = LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, diag.data(), off.data(), 0.0, 0.0, n - k + 1,
                                         n, &found, values.data(), z.data(), n, k, support.data(), &tryrac);
  if (info != 0 || found != k) fail(ErrorKind::kRuntime, "symmetric eigensolver failed (info=" + std::to_string(info) + ")");
  const Matrix vectors = tri.matrixQ() * z;
  Vector desc(k);
  Matrix desc_vectors(n, k);
  for (int j = 0; j < k; ++j) {
    desc(j) = values(k - 1 - j);
    desc_vectors.col(j) = vectors.col(k - 1 - j);
  }
  return {desc, desc_vectors};
}

inline Matrix thin_q(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

inline PcaModel finish_model(RowVector mean, Matrix basis, Vector explained) {
  orthonormalize_rows(basis);
  apply_sign_convention(basis);
  for (Eigen::Index j = 0; j < explained.size(); ++j) explained(j) = std::max(explained(j), 0.0);
  return {std::move(mean), std::move(basis), std::move(explained)};
}

}  // namespace detail

inline PcaModel fit_pca_exact(const Matrix& tokens, int k) {
  detail::check_pca_args(tokens, k);
  const Eigen::Index n = tokens.rows();
  const Eigen::Index dim = tokens.cols();
  RowVector mean = tokens.colwise().mean();
  const Matrix centered = tokens.rowwise() - mean;

  Matrix basis(k, dim);
  Vector explained(k);
  if (dim <= n) {
    Matrix gram = Matrix::Zero(dim, dim);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    auto [values, vectors] = detail::top_eigenpairs(gram, k);
    basis = vectors.transpose();
    explained = values.cwiseMax(0.0).cwiseSqrt();
  } else {
    // Fewer tokens than channels: work in token space, then map back.
    Matrix gram = Matrix::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(centered);
    auto [values, vectors] = detail::top_eigenpairs(gram, k);
    explained = values.cwiseMax(0.0).cwiseSqrt();
    const double tiny = 1e-10 * std::max(explained(0), 1e-300);
    for (int j = 0; j < k; ++j) {
      if (explained(j) > tiny) {
        basis.row(j) = (centered.transpose() * vectors.col(j)).transpose() / explained(j);
      } else {
        basis.row(j).setZero();  // completed in finish_model
      }
    }
  }
  return detail::finish_model(std::move(mean), std::move(basis), std::move(explained));
}

inline PcaModel fit_pca_randomized(const Matrix& tokens, int k, std::uint64_t seed,
                                   const RandomizedSvdOptions& options = {}) {
  detail::check_pca_args(tokens, k);
  require(options.oversample >= 0, "oversample must be >= 0");
  require(options.power_iters >= 0, "power_iters must be >= 0");
  const Eigen::Index n = tokens.rows();
  const Eigen::Index dim = tokens.cols();
  const Eigen::Index sketch = std::min<Eigen::Index>(k + options.oversample, std::min(n, dim));

  RowVector mean = tokens.colwise().mean();
  const Matrix centered = tokens.rowwise() - mean;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix omega(dim, sketch);
  for (Eigen::Index j = 0; j < sketch; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) omega(i, j) = normal(rng);
  }

  Matrix q = detail::thin_q(centered * omega);
  for (int it = 0; it < options.power_iters; ++it) {
    const Matrix w = detail::thin_q(centered.transpose() * q);
    q = detail::thin_q(centered * w);
  }
  const Matrix small = q.transpose() * centered;  // sketch x C
  Eigen::BDCSVD<Matrix> svd(small, Eigen::ComputeThinV);
  Matrix basis = svd.matrixV().leftCols(k).transpose();
  Vector explained = svd.singularValues().head(k);
  return detail::finish_model(std::move(mean), std::move(basis), std::move(explained));
}

inline PcaModel fit_pca(const Matrix& tokens, int k, PcaMethod method, std::uint64_t seed = 0,
                        const RandomizedSvdOptions& options = {}) {
  return method == PcaMethod::kExact ? fit_pca_exact(tokens, k) : fit_pca_randomized(tokens, k, seed, options);
}

/// Projects N x C tokens onto the model basis (N x k).
inline Matrix project_tokens(const PcaModel& model, const Matrix& tokens) {
  require(tokens.cols() == model.input_dim(), "project: channel count does not match the PCA model");
  return (tokens.rowwise() - model.mean) * model.basis.transpose();
}

inline Matrix reconstruct_tokens(const PcaModel& model, const Matrix& projected) {
  return (projected * model.basis).rowwise() + model.mean;
}

/// Squared Frobenius norm of the centered tokens inside the model subspace.
inline double captured_variance(const PcaModel& model, const Matrix& tokens) {
  return project_tokens(model, tokens).squaredNorm();
}

/// Mean squared per-token reconstruction error.
inline double reconstruction_error(const PcaModel& model, const Matrix& tokens) {
  return (reconstruct_tokens(model, project_tokens(model, tokens)) - tokens).rowwise().squaredNorm().mean();
}

inline FeatureMap project(const PcaModel& model, const FeatureMap& map) {
  require(map.channels() == model.input_dim(), "project: channel count does not match the PCA model");
  const Matrix projected = project_tokens(model, token_matrix(map));
  MapMeta meta = map.meta();
  meta.extraction_params["pca_centered"] = "true";
  meta.extraction_params["pca_dim"] = std::to_string(model.k());
  FeatureMap out = FeatureMap::zeros(map.height(), map.width(), model.k(), std::move(meta));
  for (int t = 0; t < map.tokens(); ++t) {
    auto dst = out.token(t);
    for (int c = 0; c < model.k(); ++c) dst[c] = static_cast<float>(projected(t, c));
  }
  return out;
}

struct PairProjection {
  FeatureMap src;
  FeatureMap tgt;
  PcaModel model;
};

/// One PCA fit over the union of both token sets (source rows first), then
/// both maps projected with the shared basis.
inline PairProjection fit_pair_pca(const FeatureMap& src, const FeatureMap& tgt, int k, PcaMethod method,
                                   std::uint64_t seed = 0, const RandomizedSvdOptions& options = {}) {
  require(src.channels() == tgt.channels(), "fit_pair_pca: channel counts differ");
  Matrix stacked(src.tokens() + tgt.tokens(), src.channels());
  stacked.topRows(src.tokens()) = token_matrix(src);
  stacked.bottomRows(tgt.tokens()) = token_matrix(tgt);
  PcaModel model = fit_pca(stacked, k, method, seed, options);
  FeatureMap ps = project(model, src);
  FeatureMap pt = project(model, tgt);
  return {std::move(ps), std::move(pt), std::move(model)};
}

}  // namespace corrfuse
