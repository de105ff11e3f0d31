#pragma once

// Test-only generators and independent oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "corrfuse/featmap.hpp"
#include "corrfuse/pca.hpp"

namespace corrfuse::testing {

inline FeatureMap random_map(int h, int w, int c, std::uint64_t seed, MapMeta meta = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(h) * w * c);
  for (auto& v : data) v = normal(rng);
  return FeatureMap(h, w, c, std::move(data), std::move(meta));
}

inline MapMeta image_meta(int img_w, int img_h, const std::string& tag = "synthetic") {
  MapMeta m;
  m.source_image_width = img_w;
  m.source_image_height = img_h;
  m.model_tag = tag;
  return m;
}

/// Target whose token at (r, c) is the source token at (r, c - shift) (mod W):
/// the source token at (r, c) lives at (r, c + shift) in the target.
inline FeatureMap shift_columns(const FeatureMap& src, int shift) {
  FeatureMap out = src;
  const int w = src.width();
  for (int r = 0; r < src.height(); ++r) {
    for (int c = 0; c < w; ++c) {
      const int from = ((c - shift) % w + w) % w;
      const auto tok = src.token(r, from);
      std::copy(tok.begin(), tok.end(), out.token(r, c).begin());
    }
  }
  return out;
}

inline FeatureMap shift_rows(const FeatureMap& src, int shift) {
  FeatureMap out = src;
  const int h = src.height();
  for (int r = 0; r < h; ++r) {
    const int from = ((r - shift) % h + h) % h;
    for (int c = 0; c < src.width(); ++c) {
      const auto tok = src.token(from, c);
      std::copy(tok.begin(), tok.end(), out.token(r, c).begin());
    }
  }
  return out;
}

/// Target token index p[s] holds source token s.
inline FeatureMap permute_tokens(const FeatureMap& src, const std::vector<int>& p) {
  FeatureMap out = src;
  for (int s = 0; s < src.tokens(); ++s) {
    const auto tok = src.token(s);
    std::copy(tok.begin(), tok.end(), out.token(p[s]).begin());
  }
  return out;
}

inline std::vector<int> random_permutation(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Naive oracle: plain double loops over the unit-normalized tokens, cosine
// with its own norms, first maximum wins.
inline std::vector<int> naive_nn(const FeatureMap& src, const FeatureMap& tgt, const Mask* tgt_mask = nullptr) {
  const FeatureMap a = l2_normalize(src);
  const FeatureMap b = l2_normalize(tgt);
  std::vector<int> out(a.tokens(), -1);
  for (int s = 0; s < a.tokens(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < b.tokens(); ++t) {
      if (tgt_mask && !tgt_mask->at(t)) continue;
      double dot = 0, na = 0, nb = 0;
      for (int c = 0; c < a.channels(); ++c) {
        dot += static_cast<double>(a.token(s)[c]) * b.token(t)[c];
        na += static_cast<double>(a.token(s)[c]) * a.token(s)[c];
        nb += static_cast<double>(b.token(t)[c]) * b.token(t)[c];
      }
      const double cosine = (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
      if (cosine > best) {
        best = cosine;
        out[s] = t;
      }
    }
  }
  return out;
}

// Cosine on the raw (unnormalized) tokens in double precision.
inline double raw_cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    dot += static_cast<double>(a[c]) * b[c];
    na += static_cast<double>(a[c]) * a[c];
    nb += static_cast<double>(b[c]) * b[c];
  }
  return (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
}

/// Minimum assignment cost by enumerating every permutation.
inline double brute_force_assignment(const Matrix& cost) {
  std::vector<int> p(cost.rows());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (int i = 0; i < static_cast<int>(p.size()); ++i) total += cost(i, p[i]);
    best = std::min(best, total);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Random matrix U diag(s) V^T with Haar-like orthonormal factors and a
/// power-law spectrum s_j = (1 + j)^(-decay).
inline Matrix low_coherence_matrix(int n, int c, double decay, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const int r = std::min(n, c);
  Matrix a(n, r), b(c, r);
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < n; ++i) a(i, j) = normal(rng);
    for (int i = 0; i < c; ++i) b(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qa(a), qb(b);
  const Matrix u = qa.householderQ() * Matrix::Identity(n, r);
  const Matrix v = qb.householderQ() * Matrix::Identity(c, r);
  Vector s(r);
  for (int j = 0; j < r; ++j) s(j) = std::pow(1.0 + j, -decay);
  return u * s.asDiagonal() * v.transpose();
}

inline Matrix gaussian_matrix(int n, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(n, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < n; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// Exact captured variance of the top-k principal subspace: sum of the k
/// largest eigenvalues of the centered Gram matrix, from a full self-adjoint
/// eigendecomposition (independent of the library's top-k solver).
inline double oracle_top_k_variance(const Matrix& tokens, int k) {
  const Matrix centered = tokens.rowwise() - tokens.colwise().mean();
  const Matrix gram = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const Vector values = eig.eigenvalues();  // ascending
  return values.tail(k).sum();
}

}  // namespace corrfuse::testing
