// helpers.hpp - shared test fixtures and independent oracles. Everything in
// here deliberately avoids the library's factored code paths: statistics are
// built densely, assignments by enumeration, projections by active-set
// search.
#pragma once

#include <pqap/pqap.hpp>

#include <limits>
#include <vector>

namespace testutil {

using pqap::Matrix;
using pqap::Vector;

// Gaussian corpus with the requested shape; labels round-robin over
// categories, all train split unless test_images > 0.
inline pqap::TrainingCorpus random_corpus(pqap::RandomStream& rng, int dim,
                                          int images, int regions,
                                          int categories = 2,
                                          int test_images = 0) {
  pqap::TrainingCorpus c;
  c.dim = dim;
  c.regions_per_image = regions;
  c.category_count = categories;
  for (int k = 0; k < categories; ++k)
    c.category_names.push_back("cat" + std::to_string(k));
  for (int i = 0; i < images + test_images; ++i) {
    pqap::ImageRecord im;
    im.image_id = "img" + std::to_string(i);
    im.label = i % categories;
    im.split = i < images ? pqap::Split::train : pqap::Split::test;
    im.descriptors.resize(dim, regions);
    for (int r = 0; r < regions; ++r)
      for (int d = 0; d < dim; ++d) im.descriptors(d, r) = rng.normal();
    for (int r = 0; r < regions; ++r) im.rects.push_back({0.1, 0.1, 0.5, 0.5});
    c.images.push_back(std::move(im));
  }
  return c;
}

inline pqap::MatchingMatrix random_hard_matching(pqap::RandomStream& rng,
                                                 int parts, int images,
                                                 int regions) {
  pqap::MatchingMatrix m;
  m.values = Matrix::Zero(parts, images * regions);
  m.regions_per_image = regions;
  m.mode = pqap::AssignMode::hard;
  for (int b = 0; b < images; ++b) {
    std::vector<int> cols = rng.sample_without_replacement(regions, parts);
    for (int p = 0; p < parts; ++p) m.values(p, b * regions + cols[p]) = 1.0;
  }
  return m;
}

// per-image rows drawn from the interior of the simplex
inline pqap::MatchingMatrix random_soft_matching(pqap::RandomStream& rng,
                                                 int parts, int images,
                                                 int regions) {
  pqap::MatchingMatrix m;
  m.values.resize(parts, images * regions);
  m.regions_per_image = regions;
  m.mode = pqap::AssignMode::soft;
  for (int b = 0; b < images; ++b)
    for (int p = 0; p < parts; ++p) {
      double sum = 0.0;
      for (int r = 0; r < regions; ++r) {
        double e = -std::log(1.0 - rng.uniform());
        m.values(p, b * regions + r) = e;
        sum += e;
      }
      m.values.row(p).segment(b * regions, regions) /= sum;
    }
  return m;
}

// dense Sigma + ridge*I of the training split, bypassing the library
inline Matrix dense_covariance(const pqap::TrainingCorpus& corpus,
                               double ridge) {
  std::vector<int> train;
  for (int i = 0; i < int(corpus.images.size()); ++i)
    if (corpus.images[i].split == pqap::Split::train) train.push_back(i);
  int total = int(train.size()) * corpus.regions_per_image;
  Vector mean = Vector::Zero(corpus.dim);
  for (int i : train) mean += corpus.images[i].descriptors.rowwise().sum();
  mean /= double(total);
  Matrix cov = Matrix::Zero(corpus.dim, corpus.dim);
  for (int i : train) {
    Matrix c = corpus.images[i].descriptors.colwise() - mean;
    cov += c * c.transpose();
  }
  cov /= double(total);
  cov.diagonal().array() += ridge;
  return cov;
}

// dense A = (1/n+) X+^T (Sigma+ridge I)^-1 X+
inline Matrix dense_gram(const pqap::CostContext& ctx) {
  Matrix reg = ctx.moments.reconstruct();
  Matrix sol = reg.ldlt().solve(ctx.positives);
  return (ctx.positives.transpose() * sol) / double(ctx.positive_count);
}

inline Vector dense_b_row(const pqap::CostContext& ctx) {
  Matrix reg = ctx.moments.reconstruct();
  return ctx.positives.transpose() * reg.ldlt().solve(ctx.moments.mean);
}

// Enumeration oracle: best <M, C> over all admissible hard matrices, by
// recursing over the injective part->region maps of each image block.
inline double best_assignment_value(const Matrix& block_scores) {
  const int parts = int(block_scores.rows());
  const int regions = int(block_scores.cols());
  std::vector<char> used(regions, 0);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> pick(parts, -1);
  auto recurse = [&](auto&& self, int p, double acc) -> void {
    if (p == parts) {
      best = std::max(best, acc);
      return;
    }
    for (int r = 0; r < regions; ++r) {
      if (used[r]) continue;
      used[r] = 1;
      self(self, p + 1, acc + block_scores(p, r));
      used[r] = 0;
    }
  };
  recurse(recurse, 0, 0.0);
  return best;
}

inline double best_matching_value(const Matrix& scores, int regions) {
  double total = 0.0;
  for (int b = 0; b * regions < scores.cols(); ++b)
    total += best_assignment_value(scores.middleCols(b * regions, regions));
  return total;
}

// Active-set oracle for the simplex projection: try every support subset,
// keep the feasible candidate closest to v.
inline Vector simplex_bruteforce(const Vector& v) {
  const int k = int(v.size());
  Vector best;
  double best_d = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < (1 << k); ++mask) {
    int m = 0;
    double s = 0.0;
    for (int i = 0; i < k; ++i)
      if (mask & (1 << i)) {
        ++m;
        s += v[i];
      }
    double theta = (s - 1.0) / double(m);
    Vector cand = Vector::Zero(k);
    bool ok = true;
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) {
        cand[i] = v[i] - theta;
        if (cand[i] < -1e-12) ok = false;
      }
    }
    if (!ok) continue;
    double d = (cand - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  return best;
}

}  // namespace testutil
