// init.hpp - initial matching matrix: cluster the positive regions, rank the
// clusters by the ratio of their mean-maximum classifier responses on
// positive vs negative images, keep the top P, then softmax the selected
// classifier responses per image.
#pragma once

#include "cost.hpp"
#include "random.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pqap {

struct InitOptions {
  int cluster_count = 0;      // K; 0 selects 5 * parts
  double temperature = 1.0;   // softmax temperature over z-scored responses
  int kmeans_restarts = 3;
  int kmeans_max_iter = 100;
  std::uint64_t seed = 1;
  bool softmax_over_parts = false;  // alternative: normalize per region
                                    // across parts instead of per image row
};

struct InitReport {
  std::vector<int> selected_clusters;
  std::vector<double> positive_scores;  // per surviving cluster
  std::vector<double> negative_scores;
  bool difference_ranking = false;  // ratio was unusable (s- near zero)
  double kmeans_sse = 0.0;
  int surviving_clusters = 0;
};

namespace detail {

struct KmeansResult {
  Matrix centroids;            // dim x k (non-empty clusters only)
  std::vector<int> assignment; // per point, into surviving clusters
  double sse = 0.0;
};

// Lloyd with k-means++ seeding; empty clusters are dropped at the end.
inline KmeansResult kmeans(const Matrix& points, int k, int restarts,
                           int max_iter, std::uint64_t seed) {
  const int n = int(points.cols());
  const int d = int(points.rows());
  k = std::min(k, n);
  KmeansResult best;
  best.sse = std::numeric_limits<double>::infinity();

  for (int trial = 0; trial < std::max(restarts, 1); ++trial) {
    RandomStream rng(seed + 0x9d2c5680u * std::uint64_t(trial + 1));
    Matrix centroids(d, k);
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    centroids.col(0) = points.col(rng.uniform_int(n));
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double d2 = (points.col(i) - centroids.col(c - 1)).squaredNorm();
        dist2[i] = std::min(dist2[i], d2);
        total += dist2[i];
      }
      int pick = 0;
      if (total > 0.0) {
        double target = rng.uniform() * total, cum = 0.0;
        for (int i = 0; i < n; ++i) {
          cum += dist2[i];
          if (cum >= target) { pick = i; break; }
        }
      } else {
        pick = rng.uniform_int(n);
      }
      centroids.col(c) = points.col(pick);
    }

    std::vector<int> assign(n, 0);
    for (int it = 0; it < max_iter; ++it) {
      bool moved = false;
      for (int i = 0; i < n; ++i) {
        int bestc = 0;
        double bestd = (points.col(i) - centroids.col(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
          double d2 = (points.col(i) - centroids.col(c)).squaredNorm();
          if (d2 < bestd) { bestd = d2; bestc = c; }
        }
        if (assign[i] != bestc) { assign[i] = bestc; moved = true; }
      }
      Matrix sums = Matrix::Zero(d, k);
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums.col(assign[i]) += points.col(i);
        ++counts[assign[i]];
      }
      for (int c = 0; c < k; ++c)
        if (counts[c] > 0) centroids.col(c) = sums.col(c) / double(counts[c]);
      if (!moved && it > 0) break;
    }

    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) ++counts[assign[i]];
    std::vector<int> remap(k, -1);
    int survivors = 0;
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) remap[c] = survivors++;
    KmeansResult res;
    res.centroids.resize(d, survivors);
    // exact member means of the surviving clusters
    Matrix sums = Matrix::Zero(d, survivors);
    std::vector<int> scounts(survivors, 0);
    res.assignment.resize(n);
    for (int i = 0; i < n; ++i) {
      int c = remap[assign[i]];
      res.assignment[i] = c;
      sums.col(c) += points.col(i);
      ++scounts[c];
    }
    for (int c = 0; c < survivors; ++c)
      res.centroids.col(c) = sums.col(c) / double(scounts[c]);
    res.sse = 0.0;
    for (int i = 0; i < n; ++i)
      res.sse += (points.col(i) - res.centroids.col(res.assignment[i]))
                     .squaredNorm();
    if (res.sse < best.sse) best = std::move(res);
  }
  return best;
}

}  // namespace detail

inline MatchingMatrix initialize_parts(const TrainingCorpus& corpus,
                                       int category, int parts,
                                       const InitOptions& opts,
                                       const CostContext& ctx,
                                       InitReport* report = nullptr) {
  if (parts < 1) throw std::invalid_argument("need at least one part");
  if (opts.temperature <= 0.0)
    throw std::invalid_argument("temperature must be positive");
  int k = opts.cluster_count > 0 ? opts.cluster_count : 5 * parts;
  if (k < parts)
    throw std::invalid_argument("cluster count must be at least the part count");

  detail::KmeansResult km =
      detail::kmeans(ctx.positives, k, opts.kmeans_restarts,
                     opts.kmeans_max_iter, opts.seed);
  const int survivors = int(km.centroids.cols());
  if (survivors < parts)
    throw std::runtime_error("fewer than P non-empty clusters after k-means");

  // one linear classifier per cluster
  Matrix directions =
      ctx.moments.solve(Matrix(km.centroids.colwise() - ctx.moments.mean));

  // mean of the per-image maximum response, over positives and negatives
  Vector pos_score = Vector::Zero(survivors),
         neg_score = Vector::Zero(survivors);
  int n_pos = 0, n_neg = 0;
  for (const auto& im : corpus.images) {
    if (im.split != Split::train) continue;
    Vector maxima = (directions.transpose() * im.descriptors)
                        .rowwise().maxCoeff();
    if (im.label == category) {
      pos_score += maxima;
      ++n_pos;
    } else {
      neg_score += maxima;
      ++n_neg;
    }
  }
  if (n_pos == 0) throw std::invalid_argument("category has no positives");
  pos_score /= double(n_pos);
  if (n_neg > 0) neg_score /= double(n_neg);

  // ratio ranking, falling back to the difference when any denominator is
  // too close to zero for the ratio to mean anything
  bool use_difference = (n_neg == 0) || (neg_score.minCoeff() <= 1e-12);
  std::vector<int> order(survivors);
  for (int c = 0; c < survivors; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double ka = use_difference ? pos_score[a] - neg_score[a]
                               : pos_score[a] / neg_score[a];
    double kb = use_difference ? pos_score[b] - neg_score[b]
                               : pos_score[b] / neg_score[b];
    return ka > kb;
  });
  order.resize(parts);

  if (report) {
    report->selected_clusters = order;
    report->positive_scores.assign(pos_score.data(),
                                   pos_score.data() + survivors);
    report->negative_scores.assign(neg_score.data(),
                                   neg_score.data() + survivors);
    report->difference_ranking = use_difference;
    report->kmeans_sse = km.sse;
    report->surviving_clusters = survivors;
  }

  // responses of the selected classifiers on all positive regions
  Matrix selected(ctx.dim(), parts);
  for (int p = 0; p < parts; ++p) selected.col(p) = directions.col(order[p]);
  Matrix responses = selected.transpose() * ctx.positives;  // parts x R+

  // z-score per classifier so the temperature acts on a common scale
  for (int p = 0; p < parts; ++p) {
    double mean = responses.row(p).mean();
    double var = (responses.row(p).array() - mean).square().mean();
    double sd = std::sqrt(var);
    if (sd < 1e-12) sd = 1.0;
    responses.row(p) = (responses.row(p).array() - mean) / sd;
  }

  const int width = ctx.regions_per_image;
  MatchingMatrix m0;
  m0.values.resize(parts, responses.cols());
  m0.regions_per_image = width;
  m0.mode = AssignMode::soft;
  if (!opts.softmax_over_parts) {
    // default: softmax over the regions of each image, one row at a time
    for (int b = 0; b < ctx.positive_count; ++b) {
      for (int p = 0; p < parts; ++p) {
        Eigen::RowVectorXd z =
            responses.row(p).segment(b * width, width) / opts.temperature;
        double mx = z.maxCoeff();
        Eigen::RowVectorXd e = (z.array() - mx).exp();
        m0.values.row(p).segment(b * width, width) = e / e.sum();
      }
    }
  } else {
    for (Eigen::Index r = 0; r < responses.cols(); ++r) {
      Vector z = responses.col(r) / opts.temperature;
      double mx = z.maxCoeff();
      Vector e = (z.array() - mx).exp();
      m0.values.col(r) = e / e.sum();
    }
  }
  return m0;
}

// Ablation baseline: per-image rows are softmaxes of standard normal draws.
inline MatchingMatrix random_soft_init(int parts, int positive_images,
                                       int regions_per_image,
                                       std::uint64_t seed) {
  RandomStream rng(seed);
  MatchingMatrix m0;
  m0.values.resize(parts, positive_images * regions_per_image);
  m0.regions_per_image = regions_per_image;
  m0.mode = AssignMode::soft;
  for (int b = 0; b < positive_images; ++b)
    for (int p = 0; p < parts; ++p) {
      Eigen::RowVectorXd z(regions_per_image);
      for (int r = 0; r < regions_per_image; ++r) z[r] = rng.normal();
      double mx = z.maxCoeff();
      Eigen::RowVectorXd e = (z.array() - mx).exp();
      m0.values.row(p).segment(b * regions_per_image, regions_per_image) =
          e / e.sum();
    }
  return m0;
}

}  // namespace pqap
