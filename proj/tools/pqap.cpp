// pqap - command-line pipeline: synth, learn, encode, train, eval.
#include <pqap/pqap.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace pqap;

int worker_count() {
  if (const char* env = std::getenv("PQAP_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.categories = j.value("categories", s.categories);
  s.planted_parts = j.value("planted_parts", s.planted_parts);
  s.dim = j.value("dim", s.dim);
  s.positives_per_category =
      j.value("positives_per_category", s.positives_per_category);
  s.test_per_category = j.value("test_per_category", s.test_per_category);
  s.regions_per_image = j.value("regions_per_image", s.regions_per_image);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.background_spread = j.value("background_spread", s.background_spread);
  s.background_images = j.value("background_images", s.background_images);
  s.seed = j.value("seed", s.seed);
  return s;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  SyntheticSpec spec = spec_from_json(read_json(spec_path));
  auto [corpus, truth] = synth_generate(spec);
  fs::path manifest = save_corpus(corpus, out_dir);
  write_json(fs::path(out_dir) / "ground_truth.json",
             ground_truth_to_json(truth));
  std::cout << "wrote " << corpus.images.size() << " images to " << manifest
            << "\n";
  return 0;
}

struct LearnCli {
  std::string corpus_path, category = "all", out_dir, solver = "isa";
  std::string ground_truth_path, lda_norm = "row-sum", cov_norm = "per-region";
  std::string init_kind = "cluster";
  int parts = 4;
  std::uint64_t seed = 1;
  double ridge = -1.0;
  bool round_output = false;
  bool pre_sqrt = false, pre_l2 = false;
  InitOptions init;
  IsaSchedule isa;
  GfbOptions gfb;
  int ipfp_max_iter = 100;
};

int run_learn(const LearnCli& cli) {
  TrainingCorpus corpus =
      load_corpus(cli.corpus_path, {cli.pre_sqrt, cli.pre_l2});
  auto violations = validate_corpus(corpus);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "corpus error: " << v << "\n";
    return 1;
  }

  LearnConfig cfg;
  cfg.solver = cli.solver;
  cfg.parts = cli.parts;
  cfg.seed = cli.seed;
  cfg.ridge = cli.ridge;
  cfg.lda_norm = cli.lda_norm == "n-plus" ? LdaNormalization::positive_count
                                          : LdaNormalization::row_sum;
  cfg.cov_norm = cli.cov_norm == "per-image"
                     ? CovarianceNormalization::per_image
                     : CovarianceNormalization::per_region;
  cfg.init = cli.init;
  cfg.random_init = cli.init_kind == "random";
  cfg.isa = cli.isa;
  cfg.gfb = cli.gfb;
  cfg.ipfp_max_iter = cli.ipfp_max_iter;
  cfg.round_output = cli.round_output;

  std::optional<GroundTruth> truth;
  if (!cli.ground_truth_path.empty())
    truth = ground_truth_from_json(read_json(cli.ground_truth_path));

  std::vector<int> categories;
  if (cli.category == "all") {
    for (int c = 0; c < corpus.category_count; ++c) categories.push_back(c);
  } else {
    auto it = std::find(corpus.category_names.begin(),
                        corpus.category_names.end(), cli.category);
    if (it == corpus.category_names.end()) {
      std::cerr << "unknown category: " << cli.category << "\n";
      return 1;
    }
    categories.push_back(int(it - corpus.category_names.begin()));
  }

  Moments moments = compute_moments(corpus, cfg.ridge, cfg.cov_norm);
  std::mutex io_mutex;
  for_each_category(categories, worker_count(), [&](int cat) {
    LearnResult res = learn_category(corpus, moments, cat, cfg);
    const std::string& name = corpus.category_names[cat];
    fs::path dir = fs::path(cli.out_dir) / name;
    fs::create_directories(dir);
    write_json(dir / "part_model.json", part_model_to_json(res.model));

    json report = solver_report_to_json(res.report);
    report["category"] = name;
    report["parts"] = cfg.parts;
    report["seed"] = cfg.seed;
    report["operator_norm"] = res.operator_norm;
    report["objective_final"] =
        res.report.objective_trace.empty() ? 0.0
                                           : res.report.objective_trace.back();
    if (!cfg.random_init) {
      report["init"] = {
          {"selected_clusters", res.init_report.selected_clusters},
          {"difference_ranking", res.init_report.difference_ranking},
          {"surviving_clusters", res.init_report.surviving_clusters}};
    }
    if (truth && cat < int(truth->planted.size())) {
      CostContext ctx = make_cost_context(corpus, cat, moments);
      MatchingMatrix hard = res.matching.mode == AssignMode::hard
                                ? res.matching
                                : round_to_hard(res.matching);
      report["recovery"] =
          recovery_score(hard, *truth, cat, ctx.positive_ids);
    }
    write_json(dir / "report.json", report);
    std::lock_guard<std::mutex> lock(io_mutex);
    std::cout << "learned " << name << ": "
              << stop_reason_name(res.report.stop_reason) << " after "
              << res.report.iterations << " iterations\n";
  });
  return 0;
}

int run_encode(const std::string& corpus_path, const std::string& models_dir,
               const std::string& scheme_str, const std::string& out_path,
               int pca_dim, bool pre_sqrt, bool pre_l2) {
  TrainingCorpus corpus = load_corpus(corpus_path, {pre_sqrt, pre_l2});
  EncodingScheme scheme = scheme_from_name(scheme_str);
  std::vector<PartModel> models;
  for (int c = 0; c < corpus.category_count; ++c) {
    fs::path file =
        fs::path(models_dir) / corpus.category_names[c] / "part_model.json";
    if (!fs::exists(file))
      throw std::runtime_error("missing part model: " + file.string());
    models.push_back(part_model_from_json(read_json(file)));
  }
  EncodingSet set = encode_corpus(corpus, models, scheme, pca_dim);
  write_json(out_path, encoding_set_to_json(set));
  std::cout << "encoded " << set.ids.size() << " images, dim " << set.dim
            << "\n";
  return 0;
}

int run_train(const std::string& enc_path, const std::string& out_path,
              double c, double gap_tol, bool no_bias, std::uint64_t seed) {
  EncodingSet set = encoding_set_from_json(read_json(enc_path));
  std::vector<Vector> x;
  std::vector<int> y;
  for (int i : set.split_indices(Split::train)) {
    x.push_back(set.values[i]);
    y.push_back(set.labels[i]);
  }
  SvmOptions opts;
  opts.regularization = c;
  opts.gap_tol = gap_tol;
  opts.fit_bias = !no_bias;
  opts.seed = seed;
  SvmModel model = train_svm(x, y, set.categories, opts);
  write_json(out_path, svm_model_to_json(model));
  std::cout << "trained " << model.classes() << "-class svm on " << x.size()
            << " images\n";
  return 0;
}

int run_eval(const std::string& enc_path, const std::string& svm_path,
             const std::string& out_path, const std::string& metrics) {
  EncodingSet set = encoding_set_from_json(read_json(enc_path));
  SvmModel model = svm_model_from_json(read_json(svm_path));
  std::vector<int> test = set.split_indices(Split::test);
  if (test.empty()) throw std::runtime_error("encoding set has no test split");

  std::vector<Vector> scores;
  std::vector<int> labels, predictions;
  for (int i : test) {
    scores.push_back(predict_scores(model, set.values[i]));
    labels.push_back(set.labels[i]);
    int best = 0;
    for (Eigen::Index k = 1; k < scores.back().size(); ++k)
      if (scores.back()[k] > scores.back()[best]) best = int(k);
    predictions.push_back(best);
  }

  json report;
  report["schema_version"] = 1;
  report["scheme"] = scheme_name(set.scheme);
  report["dim"] = set.dim;
  report["counts"] = {{"test_images", test.size()},
                      {"classes", set.categories}};
  json m;
  bool want_acc = metrics.find("acc") != std::string::npos;
  bool want_map = metrics.find("map") != std::string::npos;
  if (want_acc) m["accuracy"] = accuracy(predictions, labels);
  if (want_map) {
    std::vector<double> per_class;
    m["map"] =
        mean_average_precision(scores, labels, set.categories, &per_class);
    m["ap_per_class"] = per_class;
  }
  report["metrics"] = std::move(m);
  report["conventions"] = {
      {"average_precision", "all-points interpolation"},
      {"score_ties", "stable input order"},
      {"assignment_ties", "lowest column index"}};
  write_json(out_path, report);
  std::cout << read_text(out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discriminative part learning via quadratic assignment"};
  app.require_subcommand(1);

  std::string spec_path, out, corpus_path, models_dir, enc_path, svm_path;
  std::string scheme = "bop", metrics = "map,acc";
  int pca_dim = 256;
  double svm_c = 1.0, gap_tol = 1e-4;
  bool no_bias = false;
  std::uint64_t train_seed = 7;
  LearnCli learn;

  auto* synth = app.add_subcommand("synth", "generate a planted corpus");
  synth->add_option("--spec", spec_path, "synthetic spec json")->required();
  synth->add_option("--out", out, "output directory")->required();

  auto* learn_cmd = app.add_subcommand("learn", "learn part models");
  learn_cmd->add_option("--corpus", learn.corpus_path, "corpus manifest")
      ->required();
  learn_cmd->add_option("--category", learn.category,
                        "category name or 'all'");
  learn_cmd->add_option("--parts", learn.parts, "parts per category");
  learn_cmd
      ->add_option("--solver", learn.solver,
                   "hungarian|ipfp|isa|gfb|gfb-rho")
      ->check(CLI::IsMember({"hungarian", "ipfp", "isa", "gfb", "gfb-rho"}));
  learn_cmd->add_option("--seed", learn.seed, "random seed");
  learn_cmd->add_option("--out", learn.out_dir, "model directory")->required();
  learn_cmd->add_option("--ridge", learn.ridge,
                        "covariance ridge (<0: 1e-2 trace/dim)");
  learn_cmd->add_option("--lda-norm", learn.lda_norm, "row-sum|n-plus")
      ->check(CLI::IsMember({"row-sum", "n-plus"}));
  learn_cmd->add_option("--cov-norm", learn.cov_norm, "per-region|per-image")
      ->check(CLI::IsMember({"per-region", "per-image"}));
  learn_cmd->add_option("--init", learn.init_kind, "cluster|random")
      ->check(CLI::IsMember({"cluster", "random"}));
  learn_cmd->add_option("--init-clusters", learn.init.cluster_count,
                        "k-means cluster count (0: 5*parts)");
  learn_cmd->add_option("--tau", learn.init.temperature,
                        "softmax temperature");
  learn_cmd->add_option("--kmeans-restarts", learn.init.kmeans_restarts);
  learn_cmd->add_option("--kmeans-max-iter", learn.init.kmeans_max_iter);
  learn_cmd->add_option("--beta0", learn.isa.beta0,
                        "initial inverse temperature (<=0: 1/max|C|)");
  learn_cmd->add_option("--beta-growth", learn.isa.beta_growth);
  learn_cmd->add_option("--inner-tol", learn.isa.inner_tol);
  learn_cmd->add_option("--inner-max", learn.isa.inner_max);
  learn_cmd->add_option("--outer-max", learn.isa.outer_max);
  learn_cmd->add_option("--early-stop", learn.isa.early_stop_outer,
                        "outer-iteration cap (<0 disables)");
  learn_cmd->add_option("--sinkhorn-tol", learn.isa.sinkhorn_tol);
  learn_cmd->add_option("--sinkhorn-max", learn.isa.sinkhorn_max);
  learn_cmd->add_option("--rho", learn.gfb.rho, "quadratic regularization");
  learn_cmd->add_option("--step-scale", learn.gfb.step_scale,
                        "gfb step control L (<=0: ||A||/10)");
  learn_cmd->add_option("--max-iter", learn.gfb.max_iter, "gfb iterations");
  learn_cmd->add_option("--residual-tol", learn.gfb.residual_tol);
  learn_cmd->add_flag("--nonneg-columns", learn.gfb.nonneg_columns,
                      "cap gfb column updates at zero");
  learn_cmd->add_option("--ipfp-max-iter", learn.ipfp_max_iter);
  learn_cmd->add_flag("--round", learn.round_output,
                      "extract models from the rounded matrix");
  learn_cmd->add_option("--ground-truth", learn.ground_truth_path,
                        "planted ground truth json (adds recovery score)");
  learn_cmd->add_flag("--preprocess-sqrt", learn.pre_sqrt,
                      "signed square root at ingestion");
  learn_cmd->add_flag("--preprocess-l2", learn.pre_l2,
                      "unit l2-normalization at ingestion");

  auto* encode_cmd = app.add_subcommand("encode", "encode images");
  bool enc_sqrt = false, enc_l2 = false;
  encode_cmd->add_option("--corpus", corpus_path, "corpus manifest")
      ->required();
  encode_cmd->add_option("--models", models_dir, "model directory")
      ->required();
  encode_cmd->add_option("--scheme", scheme,
                         "bop|sbop|cop|pcop|bop+cop|sbop+pcop");
  encode_cmd->add_option("--out", out, "output encodings json")->required();
  encode_cmd->add_option("--pca-dim", pca_dim, "retained PCA dimensions");
  encode_cmd->add_flag("--preprocess-sqrt", enc_sqrt);
  encode_cmd->add_flag("--preprocess-l2", enc_l2);

  auto* train_cmd = app.add_subcommand("train", "train the linear svm");
  train_cmd->add_option("--encodings", enc_path, "encodings json")->required();
  train_cmd->add_option("--out", out, "output svm json")->required();
  train_cmd->add_option("--c", svm_c, "svm regularization");
  train_cmd->add_option("--gap-tol", gap_tol, "duality gap tolerance");
  train_cmd->add_flag("--no-bias", no_bias, "disable the bias term");
  train_cmd->add_option("--seed", train_seed, "epoch shuffle seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate on the test split");
  eval_cmd->add_option("--encodings", enc_path, "encodings json")->required();
  eval_cmd->add_option("--svm", svm_path, "svm model json")->required();
  eval_cmd->add_option("--out", out, "output report json")->required();
  eval_cmd->add_option("--metrics", metrics, "comma list: map,acc");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(spec_path, out);
    if (learn_cmd->parsed()) return run_learn(learn);
    if (encode_cmd->parsed())
      return run_encode(corpus_path, models_dir, scheme, out, pca_dim,
                        enc_sqrt, enc_l2);
    if (train_cmd->parsed())
      return run_train(enc_path, out, svm_c, gap_tol, no_bias, train_seed);
    if (eval_cmd->parsed()) return run_eval(enc_path, svm_path, out, metrics);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
