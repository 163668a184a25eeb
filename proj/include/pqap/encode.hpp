// encode.hpp - image-level encodings built from learned parts, PCA
// compression, a linear SVM (dual coordinate descent on the hinge loss), and
// the evaluation metrics.
#pragma once

#include "random.hpp"
#include "types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pqap {

enum class EncodingScheme { bop, sbop, cop, pcop, bop_cop, sbop_pcop };

inline const char* scheme_name(EncodingScheme s) {
  switch (s) {
    case EncodingScheme::bop: return "bop";
    case EncodingScheme::sbop: return "sbop";
    case EncodingScheme::cop: return "cop";
    case EncodingScheme::pcop: return "pcop";
    case EncodingScheme::bop_cop: return "bop+cop";
    default: return "sbop+pcop";
  }
}

inline EncodingScheme scheme_from_name(const std::string& s) {
  if (s == "bop") return EncodingScheme::bop;
  if (s == "sbop") return EncodingScheme::sbop;
  if (s == "cop") return EncodingScheme::cop;
  if (s == "pcop") return EncodingScheme::pcop;
  if (s == "bop+cop") return EncodingScheme::bop_cop;
  if (s == "sbop+pcop") return EncodingScheme::sbop_pcop;
  throw std::invalid_argument("unknown encoding scheme: " + s);
}

struct ImageEncoding {
  Vector values;
  EncodingScheme scheme = EncodingScheme::bop;
  int dimension() const { return int(values.size()); }
};

// Inner products of every part model with every region descriptor.
inline Matrix score_regions(const ImageRecord& image, const PartModel& parts) {
  if (image.descriptors.rows() != parts.weights.rows())
    throw std::invalid_argument(
        "descriptor dimension does not match the part model");
  return parts.weights.transpose() * image.descriptors;
}

// Per part: maximum and mean region score, concatenated over parts and
// categories.
inline Vector encode_bop(const std::vector<Matrix>& scores_per_category) {
  int total_parts = 0;
  for (const auto& s : scores_per_category) total_parts += int(s.rows());
  Vector out(2 * total_parts);
  int at = 0;
  for (const auto& s : scores_per_category)
    for (Eigen::Index p = 0; p < s.rows(); ++p) {
      out[at++] = s.row(p).maxCoeff();
      out[at++] = s.row(p).mean();
    }
  return out;
}

// BoP plus per-part maxima over the four cells of a 2x2 grid; a cell with no
// region center takes the part's global minimum so the maxima stay monotone.
inline Vector encode_sbop(const std::vector<Matrix>& scores_per_category,
                          const std::vector<RegionRect>& rects) {
  Vector bop = encode_bop(scores_per_category);
  int total_parts = int(bop.size()) / 2;
  Vector grid(4 * total_parts);
  std::vector<int> cell(rects.size());
  for (size_t r = 0; r < rects.size(); ++r) {
    double cx = rects[r].x + rects[r].w / 2.0;
    double cy = rects[r].y + rects[r].h / 2.0;
    cell[r] = (cy < 0.5 ? 0 : 2) + (cx < 0.5 ? 0 : 1);
  }
  int at = 0;
  for (const auto& s : scores_per_category) {
    for (Eigen::Index p = 0; p < s.rows(); ++p) {
      double fill = s.row(p).minCoeff();
      double best[4] = {fill, fill, fill, fill};
      bool seen[4] = {false, false, false, false};
      for (Eigen::Index r = 0; r < s.cols(); ++r) {
        int c = cell[size_t(r)];
        best[c] = seen[c] ? std::max(best[c], s(p, r)) : s(p, r);
        seen[c] = true;
      }
      for (int c = 0; c < 4; ++c) grid[at * 4 + c] = best[c];
      ++at;
    }
  }
  Vector out(bop.size() + grid.size());
  out << bop, grid;
  return out;
}

// Concatenation of the descriptor of the best-scoring region per part; ties
// resolve to the lowest region index.
inline Vector encode_cop(const std::vector<Matrix>& scores_per_category,
                         const Matrix& descriptors) {
  const int d = int(descriptors.rows());
  int total_parts = 0;
  for (const auto& s : scores_per_category) total_parts += int(s.rows());
  Vector out(d * total_parts);
  int at = 0;
  for (const auto& s : scores_per_category)
    for (Eigen::Index p = 0; p < s.rows(); ++p) {
      int best = 0;
      for (Eigen::Index r = 1; r < s.cols(); ++r)
        if (s(p, r) > s(p, best)) best = int(r);
      out.segment(at, d) = descriptors.col(best);
      at += d;
    }
  return out;
}

struct PcaModel {
  Vector mean;
  Matrix components;  // dim x retained, orthonormal columns
  int retained = 0;
};

// Centering plus PCA fitted on training encodings; retains
// min(max_dim, rank) components.
inline PcaModel fit_pcop(const std::vector<Vector>& train_encodings,
                         int max_dim = 256) {
  if (train_encodings.size() < 2)
    throw std::invalid_argument("PCA needs at least two training encodings");
  const int n = int(train_encodings.size());
  const int d = int(train_encodings[0].size());
  Matrix data(n, d);
  for (int i = 0; i < n; ++i) data.row(i) = train_encodings[i].transpose();
  Vector mean = data.colwise().mean();
  data.rowwise() -= mean.transpose();

  Eigen::BDCSVD<Matrix> svd(data, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0.0)
    throw std::invalid_argument("PCA input has zero variance");
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > sv[0] * 1e-12) ++rank;
  PcaModel model;
  model.mean = mean;
  model.retained = std::min(max_dim, rank);
  model.components = svd.matrixV().leftCols(model.retained);
  return model;
}

// Center, project, then unit-normalize.
inline Vector apply_pcop(const Vector& encoding, const PcaModel& model) {
  Vector y = model.components.transpose() * (encoding - model.mean);
  double n = y.norm();
  return n > 0.0 ? Vector(y / n) : y;
}

struct SvmOptions {
  double regularization = 1.0;  // C
  double gap_tol = 1e-4;        // relative duality gap at termination
  bool fit_bias = true;         // bias via feature augmentation
  int max_epochs = 1000;
  std::uint64_t seed = 7;
};

struct SvmModel {
  Matrix weights;  // dim x classes
  Vector bias;     // per class
  double regularization = 1.0;

  int classes() const { return int(weights.cols()); }
};

namespace detail {
// Dual coordinate descent for the L2-regularized L1-loss binary SVM:
// min_w 0.5 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i). Returns the augmented
// weight vector. Deterministic seeded epoch shuffles.
inline Vector svm_binary_dcd(const std::vector<Vector>& x,
                             const std::vector<double>& y, double c,
                             double gap_tol, int max_epochs,
                             std::uint64_t seed) {
  const int n = int(x.size());
  const int d = int(x[0].size());
  std::vector<double> qd(n);
  for (int i = 0; i < n; ++i) qd[i] = x[i].squaredNorm();
  Vector w = Vector::Zero(d);
  std::vector<double> alpha(n, 0.0);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RandomStream rng(seed);

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    rng.shuffle(order);
    for (int idx : order) {
      if (qd[idx] <= 0.0) continue;
      double g = y[idx] * w.dot(x[idx]) - 1.0;
      double pg = g;
      if (alpha[idx] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[idx] >= c) pg = std::max(g, 0.0);
      if (std::abs(pg) > 1e-14) {
        double old = alpha[idx];
        alpha[idx] = std::min(std::max(old - g / qd[idx], 0.0), c);
        w += (alpha[idx] - old) * y[idx] * x[idx];
      }
    }
    double primal = 0.5 * w.squaredNorm();
    for (int i = 0; i < n; ++i)
      primal += c * std::max(0.0, 1.0 - y[i] * w.dot(x[i]));
    double dual = std::accumulate(alpha.begin(), alpha.end(), 0.0) -
                  0.5 * w.squaredNorm();
    if (primal - dual <= gap_tol * (1.0 + std::abs(primal))) break;
  }
  return w;
}
}  // namespace detail

// One-vs-rest linear SVM on hinge loss.
inline SvmModel train_svm(const std::vector<Vector>& encodings,
                          const std::vector<int>& labels, int classes,
                          const SvmOptions& opts = {}) {
  if (encodings.empty() || encodings.size() != labels.size())
    throw std::invalid_argument("encodings and labels must align");
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2)
    throw std::invalid_argument("training set contains a single class");
  for (int c : present)
    if (c < 0 || c >= classes)
      throw std::invalid_argument("label out of range");

  const int d = int(encodings[0].size());
  std::vector<Vector> x;
  x.reserve(encodings.size());
  for (const auto& e : encodings) {
    if (int(e.size()) != d)
      throw std::invalid_argument("inconsistent encoding dimensions");
    if (opts.fit_bias) {
      Vector a(d + 1);
      a << e, 1.0;
      x.push_back(std::move(a));
    } else {
      x.push_back(e);
    }
  }

  SvmModel model;
  model.weights.resize(d, classes);
  model.bias = Vector::Zero(classes);
  model.regularization = opts.regularization;
  for (int cls = 0; cls < classes; ++cls) {
    std::vector<double> y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
      y[i] = labels[i] == cls ? 1.0 : -1.0;
    Vector w = detail::svm_binary_dcd(x, y, opts.regularization, opts.gap_tol,
                                      opts.max_epochs,
                                      opts.seed + std::uint64_t(cls));
    if (opts.fit_bias) {
      model.weights.col(cls) = w.head(d);
      model.bias[cls] = w[d];
    } else {
      model.weights.col(cls) = w;
    }
  }
  return model;
}

// Raw per-class decision values.
inline Vector predict_scores(const SvmModel& model, const Vector& encoding) {
  return model.weights.transpose() * encoding + model.bias;
}

inline int predict_class(const SvmModel& model, const Vector& encoding) {
  Vector s = predict_scores(model, encoding);
  int best = 0;
  for (Eigen::Index c = 1; c < s.size(); ++c)
    if (s[c] > s[best]) best = int(c);
  return best;
}

inline double accuracy(const std::vector<int>& predictions,
                       const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("empty or misaligned prediction set");
  int hits = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    hits += predictions[i] == labels[i] ? 1 : 0;
  return double(hits) / double(labels.size());
}

// All-points average precision of one ranking; score ties keep input order.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<char>& positive) {
  if (scores.empty() || scores.size() != positive.size())
    throw std::invalid_argument("empty or misaligned ranking");
  std::vector<int> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  int hits = 0;
  double sum = 0.0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (positive[order[k]]) {
      ++hits;
      sum += double(hits) / double(k + 1);
    }
  }
  return hits > 0 ? sum / double(hits) : 0.0;
}

// Unweighted mean of per-class AP; classes without positives are skipped.
inline double mean_average_precision(const std::vector<Vector>& class_scores,
                                     const std::vector<int>& labels,
                                     int classes,
                                     std::vector<double>* per_class = nullptr) {
  if (class_scores.empty() || class_scores.size() != labels.size())
    throw std::invalid_argument("empty or misaligned score set");
  double total = 0.0;
  int counted = 0;
  if (per_class) per_class->assign(classes, 0.0);
  for (int c = 0; c < classes; ++c) {
    std::vector<double> s(labels.size());
    std::vector<char> pos(labels.size());
    int npos = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      s[i] = class_scores[i][c];
      pos[i] = labels[i] == c ? 1 : 0;
      npos += pos[i];
    }
    if (npos == 0) continue;
    double ap = average_precision(s, pos);
    if (per_class) (*per_class)[c] = ap;
    total += ap;
    ++counted;
  }
  return counted > 0 ? total / double(counted) : 0.0;
}

}  // namespace pqap
