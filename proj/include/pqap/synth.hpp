// synth.hpp - planted-parts corpus generator and ground-truth recovery
// scoring. Descriptor values are quantized through float32 so that corpora
// survive the binary descriptor format bit-exactly.
#pragma once

#include "projections.hpp"
#include "random.hpp"
#include "types.hpp"

#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pqap {

struct SyntheticSpec {
  int categories = 2;
  int planted_parts = 4;  // prototypes per category
  int dim = 16;
  int positives_per_category = 20;  // training images per category
  int test_per_category = 20;
  int regions_per_image = 30;
  double noise_sigma = 0.05;
  double background_spread = 1.0;
  int background_images = 0;  // extra pure-background images per split
  std::uint64_t seed = 1;

  bool feasible() const {
    return categories >= 1 && planted_parts >= 1 && dim >= 1 &&
           positives_per_category >= 1 && test_per_category >= 0 &&
           regions_per_image >= planted_parts && noise_sigma >= 0.0 &&
           background_spread >= 0.0 && background_images >= 0;
  }
};

// Planted part -> region index per positive image, plus the prototypes.
struct GroundTruth {
  // planted[category][image_id][j] = region index of prototype j
  std::vector<std::map<std::string, std::vector<int>>> planted;
  std::vector<Matrix> prototypes;  // per category, dim x planted_parts
};

namespace detail {
inline double q32(double v) { return double(float(v)); }

inline RegionRect random_square(RandomStream& rng) {
  // log-uniform side in [0.05, 0.5]
  double s = std::exp(rng.uniform(std::log(0.05), std::log(0.5)));
  RegionRect r;
  r.w = r.h = q32(s);
  r.x = q32(rng.uniform(0.0, 1.0 - r.w));
  r.y = q32(rng.uniform(0.0, 1.0 - r.h));
  return r;
}
}  // namespace detail

inline std::pair<TrainingCorpus, GroundTruth> synth_generate(
    const SyntheticSpec& spec) {
  if (!spec.feasible()) throw std::invalid_argument("infeasible synthetic spec");
  RandomStream rng(spec.seed);

  TrainingCorpus corpus;
  corpus.dim = spec.dim;
  corpus.regions_per_image = spec.regions_per_image;
  const bool with_background = spec.background_images > 0;
  corpus.category_count = spec.categories + (with_background ? 1 : 0);
  for (int c = 0; c < spec.categories; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "cat%02d", c);
    corpus.category_names.push_back(buf);
  }
  if (with_background) corpus.category_names.push_back("background");

  GroundTruth truth;
  truth.planted.resize(spec.categories);
  for (int c = 0; c < spec.categories; ++c) {
    Matrix proto(spec.dim, spec.planted_parts);
    for (int j = 0; j < spec.planted_parts; ++j)
      for (int k = 0; k < spec.dim; ++k) proto(k, j) = detail::q32(rng.normal());
    truth.prototypes.push_back(proto);
  }

  auto background_column = [&](Matrix& d, int col) {
    for (int k = 0; k < spec.dim; ++k)
      d(k, col) = detail::q32(spec.background_spread * rng.normal());
  };

  for (Split split : {Split::train, Split::test}) {
    for (int c = 0; c < spec.categories; ++c) {
      int count = (split == Split::train) ? spec.positives_per_category
                                          : spec.test_per_category;
      for (int i = 0; i < count; ++i) {
        ImageRecord im;
        im.label = c;
        im.split = split;
        im.image_id = std::string("synth_") + split_name(split) + "_" +
                      corpus.category_names[c] + "_" + std::to_string(i);
        im.descriptors.resize(spec.dim, spec.regions_per_image);
        for (int r = 0; r < spec.regions_per_image; ++r)
          background_column(im.descriptors, r);
        std::vector<int> slots =
            rng.sample_without_replacement(spec.regions_per_image,
                                           spec.planted_parts);
        for (int j = 0; j < spec.planted_parts; ++j)
          for (int k = 0; k < spec.dim; ++k)
            im.descriptors(k, slots[j]) = detail::q32(
                truth.prototypes[c](k, j) + spec.noise_sigma * rng.normal());
        for (int r = 0; r < spec.regions_per_image; ++r)
          im.rects.push_back(detail::random_square(rng));
        truth.planted[c][im.image_id] = slots;
        corpus.images.push_back(std::move(im));
      }
    }
    for (int i = 0; i < spec.background_images; ++i) {
      ImageRecord im;
      im.label = spec.categories;
      im.split = split;
      im.image_id = std::string("synth_") + split_name(split) +
                    "_background_" + std::to_string(i);
      im.descriptors.resize(spec.dim, spec.regions_per_image);
      for (int r = 0; r < spec.regions_per_image; ++r)
        background_column(im.descriptors, r);
      for (int r = 0; r < spec.regions_per_image; ++r)
        im.rects.push_back(detail::random_square(rng));
      corpus.images.push_back(std::move(im));
    }
  }
  return {std::move(corpus), std::move(truth)};
}

// Fraction of planted (image, part) slots recovered by a hard matching, after
// the best global part relabeling (maximum-agreement assignment between
// learned parts and prototypes). positive_ids gives the per-image block order
// of the matching matrix.
inline double recovery_score(const MatchingMatrix& m, const GroundTruth& truth,
                             int category,
                             const std::vector<std::string>& positive_ids,
                             bool* part_count_mismatch = nullptr) {
  if (!in_hard_set(m))
    throw std::invalid_argument("recovery_score needs a hard matching matrix");
  if (category < 0 || category >= int(truth.planted.size()))
    throw std::invalid_argument("category has no ground truth");
  const auto& planted = truth.planted[category];
  const int parts = m.parts();
  const int true_parts = int(truth.prototypes[category].cols());
  if (part_count_mismatch) *part_count_mismatch = (parts != true_parts);

  Matrix agreement = Matrix::Zero(parts, true_parts);
  int images_scored = 0;
  for (int b = 0; b < m.positive_images(); ++b) {
    auto it = planted.find(positive_ids.at(b));
    if (it == planted.end()) continue;
    ++images_scored;
    const std::vector<int>& slots = it->second;
    auto block = m.image_block(b);
    for (int p = 0; p < parts; ++p)
      for (int j = 0; j < true_parts; ++j)
        if (block(p, slots[j]) == 1.0) agreement(p, j) += 1.0;
  }
  if (images_scored == 0) return 0.0;

  const int scored_parts = std::min(parts, true_parts);
  // relabel by maximum-agreement assignment; orient so rows <= columns
  std::vector<int> map_rows =
      (parts <= true_parts)
          ? max_weight_assignment(agreement)
          : max_weight_assignment(Matrix(agreement.transpose()));
  double matched = 0.0;
  if (parts <= true_parts) {
    for (int p = 0; p < parts; ++p) matched += agreement(p, map_rows[p]);
  } else {
    for (int j = 0; j < true_parts; ++j) matched += agreement(map_rows[j], j);
  }
  return matched / double(images_scored * scored_parts);
}

}  // namespace pqap
