// cost.hpp - LDA statistics and the objective machinery. The region gram
// operator A = (1/n+) X+^T Sigma^-1 X+ and the rank-1 matrix B are never
// materialized; every product is evaluated through dim-sized intermediates.
#pragma once

#include "random.hpp"
#include "types.hpp"

#include <Eigen/Cholesky>

#include <stdexcept>
#include <string>
#include <vector>

namespace pqap {

// Denominator of the part model: per-part assignment mass (handles soft and
// early-stopped matrices) or the positive-image count (the hard-set form;
// both coincide on the hard set).
enum class LdaNormalization { row_sum, positive_count };

// Covariance divisor: per region (1/R, the empirical covariance) or per
// image (1/n, which scales Sigma by the region count and every part model
// by the inverse factor; assignment decisions are unchanged).
enum class CovarianceNormalization { per_region, per_image };

// Mean and ridge-regularized covariance factor of the training regions.
struct Moments {
  Vector mean;
  Eigen::LLT<Matrix> chol;  // factor of Sigma + ridge*I
  double ridge = 0.0;
  int sample_count = 0;  // regions that entered the statistics

  int dim() const { return int(mean.size()); }
  Matrix reconstruct() const {
    Matrix l = chol.matrixL();
    return l * l.transpose();
  }
  // (Sigma + ridge*I)^-1 x
  template <typename Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& x) const {
    return chol.solve(x.derived());
  }
};

inline Moments make_moments(const Vector& mean, const Matrix& covariance,
                            double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  Moments m;
  m.mean = mean;
  m.ridge = ridge;
  Matrix reg = covariance;
  reg.diagonal().array() += ridge;
  m.chol.compute(reg);
  if (m.chol.info() != Eigen::Success)
    throw std::runtime_error(
        "covariance factorization failed: matrix not positive definite "
        "(ridge too small)");
  return m;
}

// Empirical mean and covariance over every training region (all categories,
// both positives and negatives). ridge < 0 selects the default
// 1e-2 * trace(Sigma) / dim.
inline Moments compute_moments(
    const TrainingCorpus& corpus, double ridge = -1.0,
    CovarianceNormalization norm = CovarianceNormalization::per_region) {
  const int d = corpus.dim;
  int n_images = corpus.train_image_count();
  int total = n_images * corpus.regions_per_image;
  if (total <= 0) throw std::invalid_argument("corpus has no training regions");

  Vector mean = Vector::Zero(d);
  for (const auto& im : corpus.images)
    if (im.split == Split::train) mean += im.descriptors.rowwise().sum();
  mean /= double(total);

  Matrix cov = Matrix::Zero(d, d);
  for (const auto& im : corpus.images) {
    if (im.split != Split::train) continue;
    Matrix centered = im.descriptors.colwise() - mean;
    cov.noalias() += centered * centered.transpose();
  }
  cov /= (norm == CovarianceNormalization::per_region) ? double(total)
                                                       : double(n_images);

  if (ridge < 0.0) ridge = 1e-2 * cov.trace() / double(d);
  if (ridge == 0.0 && d >= total)
    throw std::invalid_argument(
        "ridge must be positive when dim >= region count");
  Moments m = make_moments(mean, cov, ridge);
  m.sample_count = total;
  return m;
}

struct NormEstimate {
  double value = 0.0;
  bool converged = true;
  int iterations = 0;
};

// Per-category context: positive descriptors plus everything needed to apply
// the gram operator and the rank-1 offset without forming them.
struct CostContext {
  Moments moments;
  Matrix positives;      // dim x R+, columns are positive training regions
  Vector mean_response;  // R+ entries: x_r . Sigma^-1 mu (the shared row of B)
  int positive_count = 0;  // n+
  int regions_per_image = 0;
  int category = 0;
  std::vector<int> positive_indices;  // into corpus.images, corpus order
  std::vector<std::string> positive_ids;
  double operator_norm = 0.0;  // cached ||A|| estimate
  bool operator_norm_converged = true;

  int dim() const { return int(positives.rows()); }
  int region_count() const { return int(positives.cols()); }

  // M * A for a parts x R+ matrix, in factored order.
  Matrix gram_apply(const Matrix& m) const {
    Matrix t = m * positives.transpose();              // parts x dim
    Matrix s = moments.solve(t.transpose());           // dim x parts
    return (s.transpose() * positives) / double(positive_count);
  }

  // A * v for an R+ vector.
  Vector gram_apply(const Vector& v) const {
    Vector w = positives * v;
    return (positives.transpose() * moments.solve(w)) / double(positive_count);
  }
};

// Largest eigenvalue of the symmetric PSD gram operator by power iteration
// on the factored map. Deterministic seeded start.
inline NormEstimate estimate_operator_norm(const CostContext& ctx,
                                           double tol = 1e-8,
                                           int max_iter = 10000) {
  if (tol <= 0.0) throw std::invalid_argument("tolerance must be positive");
  const int r = ctx.region_count();
  RandomStream rng(0x5eed0a11ce5ULL);
  Vector v(r);
  for (int i = 0; i < r; ++i) v[i] = rng.normal();
  double nv = v.norm();
  if (nv == 0.0) return {0.0, true, 0};
  v /= nv;
  double lambda = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector w = ctx.gram_apply(v);
    double nw = w.norm();
    if (nw <= 1e-300) return {0.0, true, it};  // zero operator
    double rel = std::abs(nw - lambda) / std::max(nw, 1e-300);
    lambda = nw;
    v = w / nw;
    if (rel < tol) return {lambda, true, it};
  }
  return {lambda, false, max_iter};
}

inline CostContext make_cost_context(const Moments& moments,
                                     const Matrix& positives,
                                     int regions_per_image, int category = 0) {
  if (regions_per_image <= 0 || positives.cols() % regions_per_image != 0)
    throw std::invalid_argument(
        "positive descriptors are not divisible into image blocks");
  CostContext ctx;
  ctx.moments = moments;
  ctx.positives = positives;
  ctx.regions_per_image = regions_per_image;
  ctx.positive_count = int(positives.cols()) / regions_per_image;
  ctx.category = category;
  ctx.mean_response = positives.transpose() * moments.solve(moments.mean);
  NormEstimate est = estimate_operator_norm(ctx, 1e-10);
  ctx.operator_norm = est.value;
  ctx.operator_norm_converged = est.converged;
  return ctx;
}

inline CostContext make_cost_context(const TrainingCorpus& corpus,
                                     int category, const Moments& moments) {
  std::vector<int> idx;
  for (int i = 0; i < int(corpus.images.size()); ++i)
    if (corpus.images[i].split == Split::train &&
        corpus.images[i].label == category)
      idx.push_back(i);
  if (idx.empty())
    throw std::invalid_argument("category has no positive training images");
  Matrix xp(corpus.dim, int(idx.size()) * corpus.regions_per_image);
  for (int k = 0; k < int(idx.size()); ++k)
    xp.middleCols(k * corpus.regions_per_image, corpus.regions_per_image) =
        corpus.images[idx[k]].descriptors;
  CostContext ctx =
      make_cost_context(moments, xp, corpus.regions_per_image, category);
  ctx.positive_indices = idx;
  for (int i : idx) ctx.positive_ids.push_back(corpus.images[i].image_id);
  return ctx;
}

namespace detail {
inline Vector row_denominators(const Matrix& m, int positive_count,
                               LdaNormalization norm) {
  if (norm == LdaNormalization::positive_count)
    return Vector::Constant(m.rows(), double(positive_count));
  Vector s = m.rowwise().sum();
  for (Eigen::Index p = 0; p < s.size(); ++p)
    if (!(s[p] > 0.0))
      throw std::invalid_argument("empty part: row " + std::to_string(p) +
                                  " of the matching matrix has no mass");
  return s;
}
}  // namespace detail

// Linear part models: column p is Sigma^-1 (weighted mean of the regions
// assigned to part p, minus the global mean).
inline PartModel part_models(const MatchingMatrix& m, const CostContext& ctx,
                             LdaNormalization norm = LdaNormalization::row_sum) {
  Vector denom = detail::row_denominators(m.values, ctx.positive_count, norm);
  Matrix v = ctx.positives * m.values.transpose();  // dim x parts
  v.array().rowwise() /= denom.transpose().array();
  v.colwise() -= ctx.moments.mean;
  PartModel pm;
  pm.weights = ctx.moments.solve(v);
  pm.category = ctx.category;
  return pm;
}

// Part-region similarity matrix W(M)^T X+, evaluated in factored order with
// parts x dim intermediates. On the hard set this equals M A - B.
inline Matrix cost_matrix(const MatchingMatrix& m, const CostContext& ctx,
                          LdaNormalization norm = LdaNormalization::row_sum) {
  Vector denom = detail::row_denominators(m.values, ctx.positive_count, norm);
  Matrix t = m.values * ctx.positives.transpose();  // parts x dim
  t.array().colwise() /= denom.array();
  t.rowwise() -= ctx.moments.mean.transpose();
  Matrix s = ctx.moments.solve(t.transpose());  // dim x parts
  return s.transpose() * ctx.positives;
}

// <M, B> - <M, M A>: the quadratic objective that is minimized. Uses the
// fixed gram operator regardless of the part-model normalization.
inline double matching_energy(const Matrix& m, const CostContext& ctx) {
  double linear = m.colwise().sum() * ctx.mean_response;
  Matrix t = ctx.positives * m.transpose();  // dim x parts
  Matrix s = ctx.moments.solve(t);
  double quad = (t.array() * s.array()).sum() / double(ctx.positive_count);
  return linear - quad;
}

inline double matching_energy(const MatchingMatrix& m, const CostContext& ctx) {
  return matching_energy(m.values, ctx);
}

// Total part-region similarity <M, M A - B>, the maximized form.
inline double matching_score(const Matrix& m, const CostContext& ctx) {
  return -matching_energy(m, ctx);
}

inline double matching_score(const MatchingMatrix& m, const CostContext& ctx) {
  return -matching_energy(m.values, ctx);
}

// Quadratically regularized energy <M, M(rho I - A) + B>. On the hard set it
// exceeds the plain energy by exactly rho * parts * n+.
inline double regularized_energy(const Matrix& m, const CostContext& ctx,
                                 double rho) {
  return matching_energy(m, ctx) + rho * m.squaredNorm();
}

inline double regularized_energy(const MatchingMatrix& m,
                                 const CostContext& ctx, double rho) {
  return regularized_energy(m.values, ctx, rho);
}

// Gradient 2 M (rho I - A) + B of the regularized energy, factored.
inline Matrix regularized_energy_gradient(const Matrix& m,
                                          const CostContext& ctx, double rho) {
  Matrix g = 2.0 * rho * m - 2.0 * ctx.gram_apply(m);
  g.rowwise() += ctx.mean_response.transpose();
  return g;
}

inline Matrix regularized_energy_gradient(const MatchingMatrix& m,
                                          const CostContext& ctx, double rho) {
  return regularized_energy_gradient(m.values, ctx, rho);
}

}  // namespace pqap
