// types.hpp - corpora, matching matrices and part models, with the
// constraint-set membership tests used throughout the solvers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace pqap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Split { train, test };

// Axis-aligned region rectangle in normalized image coordinates.
struct RegionRect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0 &&
           x + w <= 1.0 + 1e-12 && y + h <= 1.0 + 1e-12;
  }
};

// One image: a fixed number of regions, each with a descriptor column and a
// rectangle. Column r of `descriptors` belongs to rects[r].
struct ImageRecord {
  std::string image_id;
  int label = 0;
  Split split = Split::train;
  Matrix descriptors;  // dim x regions
  std::vector<RegionRect> rects;
};

struct TrainingCorpus {
  std::vector<ImageRecord> images;
  int dim = 0;
  int regions_per_image = 0;
  int category_count = 0;
  std::vector<std::string> category_names;
  bool sqrt_applied = false;  // descriptor preprocessing provenance
  bool l2_applied = false;

  int train_image_count() const {
    int n = 0;
    for (const auto& im : images) n += (im.split == Split::train) ? 1 : 0;
    return n;
  }

  // n+ : positive training images of a category
  int positive_train_count(int category) const {
    int n = 0;
    for (const auto& im : images)
      n += (im.split == Split::train && im.label == category) ? 1 : 0;
    return n;
  }
};

enum class AssignMode { hard, soft };

// parts x (positive regions) assignment variable for one category. Columns are
// grouped in per-image blocks of width `regions_per_image`, following the
// order of the positive training images in the corpus.
struct MatchingMatrix {
  Matrix values;
  int regions_per_image = 0;
  AssignMode mode = AssignMode::soft;

  int parts() const { return int(values.rows()); }
  int region_count() const { return int(values.cols()); }
  int positive_images() const {
    return regions_per_image > 0 ? int(values.cols()) / regions_per_image : 0;
  }
  auto image_block(int i) {
    return values.middleCols(i * regions_per_image, regions_per_image);
  }
  auto image_block(int i) const {
    return values.middleCols(i * regions_per_image, regions_per_image);
  }
  bool block_structure_ok() const {
    return regions_per_image > 0 &&
           values.cols() % regions_per_image == 0 && values.rows() > 0;
  }
};

// Largest violation of the relaxed constraint set: box bounds, column sums
// at most one, per-image row sums equal to one.
inline double constraint_residual(const MatchingMatrix& m) {
  double worst = 0.0;
  const auto& v = m.values;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    double colsum = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      double e = v(i, j);
      worst = std::max(worst, std::max(-e, e - 1.0));  // box violation
      colsum += e;
    }
    worst = std::max(worst, colsum - 1.0);
  }
  for (int b = 0; b < m.positive_images(); ++b) {
    Vector rows = m.image_block(b).rowwise().sum();
    for (Eigen::Index p = 0; p < rows.size(); ++p)
      worst = std::max(worst, std::abs(rows[p] - 1.0));
  }
  return worst;
}

// Membership in the hard admissible set: binary entries, column sums <= 1,
// and each per-image block assigns every part to exactly one region.
inline bool in_hard_set(const MatchingMatrix& m) {
  if (!m.block_structure_ok()) return false;
  const auto& v = m.values;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    int colsum = 0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      double e = v(i, j);
      if (e != 0.0 && e != 1.0) return false;
      colsum += (e == 1.0);
    }
    if (colsum > 1) return false;
  }
  for (int b = 0; b < m.positive_images(); ++b) {
    Eigen::VectorXd rows = m.image_block(b).rowwise().sum();
    for (Eigen::Index p = 0; p < rows.size(); ++p)
      if (rows[p] != 1.0) return false;
  }
  return true;
}

// Membership in the relaxed set (convex hull of the hard set) within eps.
inline bool in_soft_set(const MatchingMatrix& m, double eps = 1e-6) {
  if (!m.block_structure_ok()) return false;
  return constraint_residual(m) <= eps;
}

inline const char* split_name(Split s) {
  return s == Split::train ? "train" : "test";
}

// Structural validation; returns human-readable violations, empty when the
// corpus is usable.
inline std::vector<std::string> validate_corpus(const TrainingCorpus& c) {
  std::vector<std::string> out;
  if (c.dim <= 0) out.push_back("descriptor dimension must be positive");
  if (c.regions_per_image <= 0)
    out.push_back("regions per image must be positive");
  if (c.category_count <= 0) out.push_back("no categories declared");
  if (!c.category_names.empty() &&
      int(c.category_names.size()) != c.category_count)
    out.push_back("category name list does not match category count");
  for (const auto& im : c.images) {
    if (im.descriptors.rows() != c.dim)
      out.push_back("dimension mismatch in image " + im.image_id);
    if (im.descriptors.cols() != c.regions_per_image ||
        int(im.rects.size()) != c.regions_per_image)
      out.push_back("count mismatch in image " + im.image_id +
                    ": descriptors=" + std::to_string(im.descriptors.cols()) +
                    " rects=" + std::to_string(im.rects.size()) +
                    " expected=" + std::to_string(c.regions_per_image));
    if (!im.descriptors.allFinite())
      out.push_back("non-finite descriptor in image " + im.image_id);
    for (const auto& r : im.rects)
      if (!r.valid()) {
        out.push_back("invalid rect in image " + im.image_id);
        break;
      }
    if (im.label < 0 || im.label >= c.category_count)
      out.push_back("label out of range in image " + im.image_id);
  }
  for (int cat = 0; cat < c.category_count; ++cat) {
    bool found = false;
    for (const auto& im : c.images)
      if (im.split == Split::train && im.label == cat) {
        found = true;
        break;
      }
    if (!found) {
      std::string name = (cat < int(c.category_names.size()))
                             ? c.category_names[cat]
                             : std::to_string(cat);
      out.push_back("empty category: no training image labeled " + name);
    }
  }
  return out;
}

struct PartModel {
  Matrix weights;  // dim x parts, column p is the linear model of part p
  int category = 0;

  int parts() const { return int(weights.cols()); }
  int dim() const { return int(weights.rows()); }
};

}  // namespace pqap
