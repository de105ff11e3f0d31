#pragma once

// Part discovery: per-image k-means over feature tokens and optimal
// (Hungarian) matching of clusters across an image pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/pca.hpp"

namespace corrfuse {

struct Clustering {
  int k = 0;
  std::vector<int> labels;             // one per token, in [0, k)
  Matrix centroids;                    // k x C
  double inertia = 0.0;                // sum of squared distances to assigned centroid
  std::vector<double> inertia_history; // after every assignment step
  int iterations = 0;
};

struct ClusterMatch {
  std::vector<int> assignment;  // source cluster -> target cluster
  double cost = 0.0;
};

namespace detail {

inline double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centers, Eigen::Index j) {
  return (points.row(i) - centers.row(j)).squaredNorm();
}

// k-means++ seeding: first center uniform, then D^2 sampling. When every
// token already coincides with a center, the lowest unused index is taken.
inline Matrix kmeans_plus_plus(const Matrix& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<char> used(n, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::Index first = pick(rng);
  centers.row(0) = points.row(first);
  used[first] = 1;
  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = squared_distance(points, i, centers, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index chosen = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        running += d2[i];
        if (d2[i] > 0.0 && running >= target) {
          chosen = i;
          break;
        }
      }
      if (chosen < 0) {  // rounding at the tail
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2[i] > 0.0) {
            chosen = i;
            break;
          }
        }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!used[i]) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = points.row(chosen);
    used[chosen] = 1;
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points, i, centers, c));
  }
  return centers;
}

// Returns the inertia; ties go to the lowest cluster id.
inline double assign(const Matrix& points, const Matrix& centers, std::vector<int>& labels,
                     std::vector<double>& distances) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
      const double d = squared_distance(points, i, centers, j);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    labels[i] = best;
    distances[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at
/// the token farthest from its centroid (lowest index on ties).
inline Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters = 100) {
  const auto n = points.rows();
  require(k >= 1, "kmeans: k must be >= 1");
  require(k <= n, "kmeans: k=" + std::to_string(k) + " exceeds the number of tokens (" + std::to_string(n) + ")");
  require(max_iters >= 1, "kmeans: max_iters must be >= 1");

  std::mt19937_64 rng(seed);
  Clustering result;
  result.k = k;
  result.centroids = detail::kmeans_plus_plus(points, k, rng);
  result.labels.assign(n, 0);
  std::vector<double> distances(n, 0.0);
  std::vector<int> previous;

  for (int it = 0; it < max_iters; ++it) {
    result.inertia = detail::assign(points, result.centroids, result.labels, distances);
    result.inertia_history.push_back(result.inertia);
    result.iterations = it + 1;
    if (result.labels == previous) return result;
    previous = result.labels;

    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.labels[i]) += points.row(i);
      counts[result.labels[i]]++;
    }
    std::vector<char> reseeded(n, 0);
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        result.centroids.row(j) = sums.row(j) / static_cast<double>(counts[j]);
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!reseeded[i] && (far < 0 || distances[i] > distances[far])) far = i;
      }
      reseeded[far] = 1;
      distances[far] = 0.0;
      result.centroids.row(j) = points.row(far);
    }
  }
  // Out of iterations: make the labels consistent with the final centroids.
  result.inertia = detail::assign(points, result.centroids, result.labels, distances);
  result.inertia_history.push_back(result.inertia);
  return result;
}

inline Clustering kmeans(const FeatureMap& map, int k, std::uint64_t seed, int max_iters = 100) {
  return kmeans(token_matrix(map), k, seed, max_iters);
}

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting paths with row/column potentials, O(k^3)).
inline ClusterMatch hungarian(const Matrix& cost) {
  require(cost.rows() == cost.cols(), "hungarian: cost matrix must be square");
  require(cost.allFinite(), "hungarian: cost matrix must be finite");
  const int n = static_cast<int>(cost.rows());
  ClusterMatch result;
  if (n == 0) return result;

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> row_of(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    row_of[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> done(n + 1, 0);
    do {
      done[j0] = 1;
      const int i0 = row_of[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (done[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < minv[j]) {
          minv[j] = reduced;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (done[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  result.assignment.assign(n, -1);
  for (int j = 1; j <= n; ++j) result.assignment[row_of[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) result.cost += cost(i, result.assignment[i]);
  return result;
}

/// Cost of pairing clusters i and j is 1 - cosine(centroid_i, centroid_j).
inline Matrix cluster_cost(const Clustering& src, const Clustering& tgt) {
  require(src.k == tgt.k, "match_clusters: cluster counts differ");
  require(src.centroids.cols() == tgt.centroids.cols(), "match_clusters: centroid dims differ");
  Matrix cost(src.k, tgt.k);
  for (int i = 0; i < src.k; ++i) {
    const double ni = src.centroids.row(i).norm();
    for (int j = 0; j < tgt.k; ++j) {
      const double nj = tgt.centroids.row(j).norm();
      const double cosine = (ni > 0.0 && nj > 0.0) ? src.centroids.row(i).dot(tgt.centroids.row(j)) / (ni * nj) : 0.0;
      cost(i, j) = 1.0 - cosine;
    }
  }
  return cost;
}

inline ClusterMatch match_clusters(const Clustering& src, const Clustering& tgt) {
  return hungarian(cluster_cost(src, tgt));
}

}  // namespace corrfuse
