// pipeline.hpp - corpus-level drivers tying the modules together: learn the
// parts of one category, encode every image, and serialize encoding sets.
// The command-line tool is a thin wrapper around these.
#pragma once

#include "cost.hpp"
#include "encode.hpp"
#include "init.hpp"
#include "io.hpp"
#include "solvers.hpp"
#include "types.hpp"

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pqap {

struct LearnConfig {
  std::string solver = "isa";  // hungarian | ipfp | isa | gfb | gfb-rho
  int parts = 4;
  std::uint64_t seed = 1;
  double ridge = -1.0;  // < 0: moments default
  LdaNormalization lda_norm = LdaNormalization::row_sum;
  CovarianceNormalization cov_norm = CovarianceNormalization::per_region;
  InitOptions init;
  bool random_init = false;
  IsaSchedule isa;
  GfbOptions gfb;
  int ipfp_max_iter = 100;
  bool round_output = false;  // extract models from the rounded matrix
};

struct LearnResult {
  MatchingMatrix matching;      // raw solver output
  MatchingMatrix model_source;  // matrix the part models were read from
  PartModel model;
  SolverReport report;
  InitReport init_report;
  double operator_norm = 0.0;
};

inline LearnResult learn_category(const TrainingCorpus& corpus,
                                  const Moments& moments, int category,
                                  const LearnConfig& cfg) {
  CostContext ctx = make_cost_context(corpus, category, moments);
  LearnResult res;
  res.operator_norm = ctx.operator_norm;

  InitOptions init = cfg.init;
  init.seed = cfg.seed;
  MatchingMatrix m0 =
      cfg.random_init
          ? random_soft_init(cfg.parts, ctx.positive_count,
                             ctx.regions_per_image, cfg.seed)
          : initialize_parts(corpus, category, cfg.parts, init, ctx,
                             &res.init_report);

  if (cfg.solver == "hungarian") {
    std::tie(res.matching, res.report) = solve_hungarian(m0, ctx, cfg.lda_norm);
  } else if (cfg.solver == "ipfp") {
    std::tie(res.matching, res.report) = solve_ipfp(m0, ctx, cfg.ipfp_max_iter);
  } else if (cfg.solver == "isa") {
    std::tie(res.matching, res.report) = solve_isa(m0, ctx, cfg.isa,
                                                   cfg.lda_norm);
  } else if (cfg.solver == "gfb" || cfg.solver == "gfb-rho") {
    GfbOptions opts = cfg.gfb;
    if (cfg.solver == "gfb-rho" && opts.rho <= 0.0)
      opts.rho = 1e-3 * ctx.operator_norm;
    std::tie(res.matching, res.report) = solve_gfb(m0, ctx, opts);
  } else {
    throw std::invalid_argument("unknown solver: " + cfg.solver);
  }

  res.model_source = res.matching;
  if (cfg.round_output && res.matching.mode != AssignMode::hard)
    res.model_source = round_to_hard(res.matching);
  res.model = part_models(res.model_source, ctx, cfg.lda_norm);
  return res;
}

// Runs fn(category) for every listed category on up to `workers` threads.
inline void for_each_category(const std::vector<int>& categories, int workers,
                              const std::function<void(int)>& fn) {
  if (workers <= 1 || categories.size() <= 1) {
    for (int c : categories) fn(c);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  int spawn = std::min<int>(workers, int(categories.size()));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int t = 0; t < spawn; ++t)
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= categories.size()) return;
        try {
          fn(categories[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct EncodingSet {
  EncodingScheme scheme = EncodingScheme::bop;
  int dim = 0;
  int categories = 0;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<Vector> values;
  std::optional<PcaModel> pca;

  std::vector<int> split_indices(Split s) const {
    std::vector<int> out;
    for (int i = 0; i < int(ids.size()); ++i)
      if (splits[i] == s) out.push_back(i);
    return out;
  }
};

// Encodes every image of the corpus against the part models of all
// categories. PCA-based schemes fit the model on the training split.
inline EncodingSet encode_corpus(const TrainingCorpus& corpus,
                                 const std::vector<PartModel>& models,
                                 EncodingScheme scheme, int pca_dim = 256) {
  if (models.empty()) throw std::invalid_argument("no part models given");
  EncodingSet set;
  set.scheme = scheme;
  set.categories = int(models.size());

  const bool needs_cop = scheme != EncodingScheme::bop &&
                         scheme != EncodingScheme::sbop;
  const bool needs_bop_part = scheme != EncodingScheme::cop &&
                              scheme != EncodingScheme::pcop;
  std::vector<Vector> bop_parts(corpus.images.size());
  std::vector<Vector> cop_parts(corpus.images.size());

  for (size_t i = 0; i < corpus.images.size(); ++i) {
    const auto& im = corpus.images[i];
    std::vector<Matrix> scores;
    scores.reserve(models.size());
    for (const auto& pm : models) scores.push_back(score_regions(im, pm));
    if (needs_bop_part)
      bop_parts[i] = (scheme == EncodingScheme::bop ||
                      scheme == EncodingScheme::bop_cop)
                         ? encode_bop(scores)
                         : encode_sbop(scores, im.rects);
    if (needs_cop) cop_parts[i] = encode_cop(scores, im.descriptors);
    set.ids.push_back(im.image_id);
    set.labels.push_back(im.label);
    set.splits.push_back(im.split);
  }

  const bool needs_pca = scheme == EncodingScheme::pcop ||
                         scheme == EncodingScheme::sbop_pcop;
  if (needs_pca) {
    std::vector<Vector> train;
    for (size_t i = 0; i < corpus.images.size(); ++i)
      if (corpus.images[i].split == Split::train)
        train.push_back(cop_parts[i]);
    set.pca = fit_pcop(train, pca_dim);
    for (auto& v : cop_parts) v = apply_pcop(v, *set.pca);
  }

  set.values.resize(corpus.images.size());
  for (size_t i = 0; i < corpus.images.size(); ++i) {
    switch (scheme) {
      case EncodingScheme::bop:
      case EncodingScheme::sbop:
        set.values[i] = std::move(bop_parts[i]);
        break;
      case EncodingScheme::cop:
      case EncodingScheme::pcop:
        set.values[i] = std::move(cop_parts[i]);
        break;
      default: {
        Vector v(bop_parts[i].size() + cop_parts[i].size());
        v << bop_parts[i], cop_parts[i];
        set.values[i] = std::move(v);
      }
    }
  }
  set.dim = set.values.empty() ? 0 : int(set.values[0].size());
  return set;
}

inline json encoding_set_to_json(const EncodingSet& set) {
  json j;
  j["schema_version"] = 1;
  j["scheme"] = scheme_name(set.scheme);
  j["dim"] = set.dim;
  j["categories"] = set.categories;
  if (set.pca) j["pca"] = pca_model_to_json(*set.pca);
  json images = json::array();
  for (size_t i = 0; i < set.ids.size(); ++i) {
    std::vector<double> v(set.values[i].data(),
                          set.values[i].data() + set.values[i].size());
    images.push_back({{"id", set.ids[i]},
                      {"label", set.labels[i]},
                      {"split", split_name(set.splits[i])},
                      {"values", std::move(v)}});
  }
  j["images"] = std::move(images);
  return j;
}

inline EncodingSet encoding_set_from_json(const json& j) {
  EncodingSet set;
  set.scheme = scheme_from_name(j.at("scheme").get<std::string>());
  set.dim = j.at("dim").get<int>();
  set.categories = j.at("categories").get<int>();
  if (j.contains("pca")) set.pca = pca_model_from_json(j.at("pca"));
  for (const auto& im : j.at("images")) {
    set.ids.push_back(im.at("id").get<std::string>());
    set.labels.push_back(im.at("label").get<int>());
    set.splits.push_back(im.at("split").get<std::string>() == "train"
                             ? Split::train
                             : Split::test);
    std::vector<double> v = im.at("values").get<std::vector<double>>();
    set.values.push_back(Eigen::Map<Vector>(v.data(), Eigen::Index(v.size())));
  }
  return set;
}

}  // namespace pqap
