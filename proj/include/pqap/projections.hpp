// projections.hpp - exact projection primitives shared by all solvers:
// probability simplex, sum-at-most-one halfspace, and per-image rectangular
// maximum-weight assignment.
#pragma once

#include "types.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pqap {

// Euclidean projection onto {x >= 0, sum(x) = 1}. Sort-based water filling,
// O(k log k).
inline Vector project_simplex(const Vector& v) {
  const int k = int(v.size());
  std::vector<double> s(v.data(), v.data() + k);
  std::sort(s.begin(), s.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  int support = 0;
  for (int i = 0; i < k; ++i) {
    cum += s[i];
    double t = (cum - 1.0) / double(i + 1);
    if (s[i] - t > 0.0) {
      theta = t;
      support = i + 1;
    }
  }
  if (support == 0) theta = (cum - 1.0) / double(k);  // all entries equal
  Vector out(k);
  for (int i = 0; i < k; ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

// Euclidean projection onto {x : sum(x) <= 1}. No sign constraint.
inline Vector project_halfspace_sum(const Vector& v) {
  double s = v.sum();
  if (s <= 1.0) return v;
  return v.array() - (s - 1.0) / double(v.size());
}

// Projection onto {x >= 0, sum(x) <= 1}; optional capped variant of the
// column update.
inline Vector project_halfspace_sum_nonneg(const Vector& v) {
  Vector clipped = v.cwiseMax(0.0);
  if (clipped.sum() <= 1.0) return clipped;
  return project_simplex(v);
}

// Maximum-weight partial assignment of P rows to R >= P columns: every row
// gets exactly one column, columns are used at most once. Shortest
// augmenting path with potentials on the negated scores, O(P^2 R). Rows are
// processed in order and column scans ascend, so ties resolve toward lower
// column indices and the result is deterministic.
inline std::vector<int> max_weight_assignment(const Matrix& scores) {
  const int n = int(scores.rows());
  const int m = int(scores.cols());
  if (n > m)
    throw std::invalid_argument(
        "infeasible partial assignment: " + std::to_string(n) + " parts but " +
        std::to_string(m) + " regions");
  if (!scores.allFinite())
    throw std::invalid_argument("assignment scores must be finite");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);  // match[j]: row at col j

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = -scores(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

// Binary matrix maximizing <M, scores> with row sums = 1 and column sums <= 1.
inline Matrix project_partial_assignment(const Matrix& scores) {
  std::vector<int> cols = max_weight_assignment(scores);
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (int i = 0; i < int(cols.size()); ++i) out(i, cols[i]) = 1.0;
  return out;
}

// Projection onto the hard admissible set. The constraints decouple across
// per-image blocks (row sums are per image, column sums per region), so the
// block solutions concatenate.
inline MatchingMatrix project_matching(const Matrix& scores,
                                       int regions_per_image) {
  if (regions_per_image <= 0 || scores.cols() % regions_per_image != 0)
    throw std::invalid_argument("scores are not divisible into image blocks");
  MatchingMatrix out;
  out.values = Matrix::Zero(scores.rows(), scores.cols());
  out.regions_per_image = regions_per_image;
  out.mode = AssignMode::hard;
  const int blocks = int(scores.cols()) / regions_per_image;
  for (int b = 0; b < blocks; ++b) {
    out.values.middleCols(b * regions_per_image, regions_per_image) =
        project_partial_assignment(
            scores.middleCols(b * regions_per_image, regions_per_image));
  }
  return out;
}

}  // namespace pqap
