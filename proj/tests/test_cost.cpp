#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <Eigen/Eigenvalues>

using namespace pqap;

namespace {

TrainingCorpus corpus_from_columns(const Matrix& x, int regions_per_image) {
  TrainingCorpus c;
  c.dim = int(x.rows());
  c.regions_per_image = regions_per_image;
  c.category_count = 1;
  c.category_names = {"cat0"};
  int images = int(x.cols()) / regions_per_image;
  for (int i = 0; i < images; ++i) {
    ImageRecord im;
    im.image_id = "img" + std::to_string(i);
    im.label = 0;
    im.descriptors = x.middleCols(i * regions_per_image, regions_per_image);
    im.rects.assign(regions_per_image, RegionRect{0.25, 0.25, 0.5, 0.5});
    c.images.push_back(std::move(im));
  }
  return c;
}

CostContext identity_context(const Matrix& positives, int regions_per_image,
                             const Vector& mean) {
  Moments m = make_moments(mean, Matrix::Identity(mean.size(), mean.size()),
                           0.0);
  return make_cost_context(m, positives, regions_per_image);
}

}  // namespace

TEST_CASE("moments: one-dimensional hand case") {
  Matrix x(1, 2);
  x << 2, 4;
  Moments m = compute_moments(corpus_from_columns(x, 2), 0.0);
  CHECK(m.mean[0] == Catch::Approx(3.0));
  CHECK(m.reconstruct()(0, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("moments: zero variance requires a positive ridge") {
  Matrix x(2, 3);
  x << 1, 1, 1, 2, 2, 2;
  CHECK_THROWS_AS(compute_moments(corpus_from_columns(x, 3), 0.0),
                  std::runtime_error);
  Moments m = compute_moments(corpus_from_columns(x, 3), 0.5);
  CHECK(m.reconstruct().isApprox(0.5 * Matrix::Identity(2, 2), 1e-10));
}

TEST_CASE("moments: symmetric four-point cloud") {
  Matrix x(2, 4);
  x << 1, -1, 0, 0,
       0, 0, 1, -1;
  Moments m = compute_moments(corpus_from_columns(x, 4), 0.0);
  CHECK(m.mean.norm() < 1e-14);
  Matrix want = 0.5 * Matrix::Identity(2, 2);
  CHECK(m.reconstruct().isApprox(want, 1e-10));
}

TEST_CASE("moments: per-image covariance scaling is a config option") {
  RandomStream rng(21);
  TrainingCorpus c = testutil::random_corpus(rng, 3, 4, 5, 1);
  Moments per_region = compute_moments(c, 0.0);
  Moments per_image =
      compute_moments(c, 0.0, CovarianceNormalization::per_image);
  // same mean, covariance scaled by the region count
  CHECK((per_region.mean - per_image.mean).norm() < 1e-14);
  CHECK(per_image.reconstruct().isApprox(5.0 * per_region.reconstruct(),
                                         1e-10));
}

TEST_CASE("moments factorization reconstructs the ridged covariance") {
  RandomStream rng(22);
  TrainingCorpus c = testutil::random_corpus(rng, 4, 6, 4, 2);
  double ridge = 0.05;
  Moments m = compute_moments(c, ridge);
  Matrix want = testutil::dense_covariance(c, ridge);
  CHECK((m.reconstruct() - want).norm() / want.norm() < 1e-10);
}

TEST_CASE("moments: dim >= samples needs positive ridge") {
  Matrix x(3, 2);
  x << 1, 2, 0, 1, 1, 0;
  CHECK_THROWS_AS(compute_moments(corpus_from_columns(x, 2), 0.0),
                  std::invalid_argument);
}

TEST_CASE("part models: identity covariance reduces to assigned means") {
  RandomStream rng(23);
  Matrix xp(3, 8);
  for (int i = 0; i < xp.size(); ++i) xp(i / 8, i % 8) = rng.normal();
  CostContext ctx = identity_context(xp, 4, Vector::Zero(3));
  MatchingMatrix m = testutil::random_hard_matching(rng, 2, 2, 4);
  PartModel pm = part_models(m, ctx);
  for (int p = 0; p < 2; ++p) {
    Vector mean = Vector::Zero(3);
    for (int r = 0; r < 8; ++r)
      if (m.values(p, r) == 1.0) mean += xp.col(r);
    mean /= m.values.row(p).sum();
    CHECK((pm.weights.col(p) - mean).norm() < 1e-12);
  }
}

TEST_CASE("part models: two-region hand case") {
  Matrix xp(2, 2);
  xp << 1, 0,
        0, 1;
  Vector mu(2);
  mu << 0.5, 0.5;
  CostContext ctx = identity_context(xp, 2, mu);
  Matrix mv(1, 2);
  mv << 1, 0;
  PartModel pm = part_models({mv, 2, AssignMode::hard}, ctx);
  CHECK(pm.weights(0, 0) == Catch::Approx(0.5));
  CHECK(pm.weights(1, 0) == Catch::Approx(-0.5));
}

TEST_CASE("part models: a massless row is an error") {
  Matrix xp(2, 2);
  xp << 1, 0, 0, 1;
  CostContext ctx = identity_context(xp, 2, Vector::Zero(2));
  Matrix mv = Matrix::Zero(2, 2);
  mv(0, 0) = 1.0;
  CHECK_THROWS_WITH(part_models({mv, 2, AssignMode::soft}, ctx),
                    Catch::Matchers::ContainsSubstring("empty part"));
}

TEST_CASE("cost matrix: hand case and the zero-matrix form") {
  Matrix xp(2, 2);
  xp << 1, 0,
        0, 1;
  CostContext ctx = identity_context(xp, 2, Vector::Zero(2));
  Matrix mv(1, 2);
  mv << 1, 0;
  Matrix c = cost_matrix({mv, 2, AssignMode::hard}, ctx);
  CHECK(c(0, 0) == Catch::Approx(1.0));
  CHECK(c(0, 1) == Catch::Approx(0.0).margin(1e-14));

  // all-zero relaxed matrix under the fixed-denominator form gives -B
  Vector mu(2);
  mu << 0.3, -0.2;
  CostContext ctx2 = identity_context(xp, 2, mu);
  Matrix zero = Matrix::Zero(1, 2);
  Matrix cz = cost_matrix({zero, 2, AssignMode::soft}, ctx2,
                          LdaNormalization::positive_count);
  Vector b = testutil::dense_b_row(ctx2);
  CHECK((cz.row(0).transpose() + b).norm() < 1e-12);
}

TEST_CASE("cost matrix equals M A - B on the hard set") {
  RandomStream rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 2 + rng.uniform_int(4);
    int regions = 2 + rng.uniform_int(3);
    int images = 1 + rng.uniform_int(2);
    int parts = 1 + rng.uniform_int(std::min(regions, 3));
    Matrix xp(d, images * regions);
    for (int i = 0; i < xp.rows(); ++i)
      for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu[i] = 0.3 * rng.normal();
    Matrix w(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) w(i, j) = rng.normal();
    Moments moments = make_moments(mu, w * w.transpose() / d, 0.1);
    CostContext ctx = make_cost_context(moments, xp, regions);

    MatchingMatrix m = testutil::random_hard_matching(rng, parts, images,
                                                      regions);
    Matrix got = cost_matrix(m, ctx);
    Matrix a = testutil::dense_gram(ctx);
    Vector b = testutil::dense_b_row(ctx);
    Matrix want = m.values * a;
    want.rowwise() -= b.transpose();
    CHECK((got - want).norm() / (1.0 + want.norm()) < 1e-10);
  }
}

TEST_CASE("two-path identity: factored cost vs dense part-model double sum") {
  RandomStream rng(25);
  for (int trial = 0; trial < 30; ++trial) {
    int d = 2 + rng.uniform_int(3);
    int regions = 2 + rng.uniform_int(3);
    int images = 1 + rng.uniform_int(3);
    int parts = 1 + rng.uniform_int(std::min(regions, 3));
    Matrix xp(d, images * regions);
    for (int i = 0; i < xp.rows(); ++i)
      for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu[i] = 0.2 * rng.normal();
    Matrix w(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) w(i, j) = rng.normal();
    Matrix cov = w * w.transpose() / d + 0.05 * Matrix::Identity(d, d);
    Moments moments = make_moments(mu, cov, 0.0);
    CostContext ctx = make_cost_context(moments, xp, regions);

    MatchingMatrix m = (trial % 2 == 0)
                           ? testutil::random_hard_matching(rng, parts, images,
                                                            regions)
                           : testutil::random_soft_matching(rng, parts, images,
                                                            regions);
    double via_cost = (m.values.array() * cost_matrix(m, ctx).array()).sum();

    // dense reference: explicit per-part LDA directions, explicit double sum
    Matrix reg = cov;  // ridge 0
    double via_parts = 0.0;
    for (int p = 0; p < parts; ++p) {
      Vector weighted = xp * m.values.row(p).transpose();
      Vector wp = reg.ldlt().solve(weighted / m.values.row(p).sum() - mu);
      for (int r = 0; r < xp.cols(); ++r)
        via_parts += m.values(p, r) * wp.dot(xp.col(r));
    }
    CHECK(std::abs(via_cost - via_parts) / (1.0 + std::abs(via_parts)) < 1e-8);
  }
}

TEST_CASE("energy identities on the hard set") {
  RandomStream rng(26);
  for (int trial = 0; trial < 30; ++trial) {
    int d = 2 + rng.uniform_int(3);
    int regions = 2 + rng.uniform_int(3);
    int images = 1 + rng.uniform_int(3);
    int parts = 1 + rng.uniform_int(std::min(regions, 3));
    Matrix xp(d, images * regions);
    for (int i = 0; i < xp.rows(); ++i)
      for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu[i] = 0.2 * rng.normal();
    CostContext ctx = identity_context(xp, regions, mu);
    MatchingMatrix m = testutil::random_hard_matching(rng, parts, images,
                                                      regions);

    double j0 = matching_energy(m, ctx);
    double inner = (m.values.array() * cost_matrix(m, ctx).array()).sum();
    CHECK(std::abs(j0 + inner) / (1.0 + std::abs(inner)) < 1e-10);

    double rho = 0.2;
    double jrho = regularized_energy(m, ctx, rho);
    double offset = rho * double(parts) * double(images);
    CHECK(std::abs(jrho - j0 - offset) / (1.0 + std::abs(offset)) < 1e-10);
  }
}

TEST_CASE("energy hand cases") {
  Matrix xp(2, 2);
  xp << 1, 0,
        0, 1;
  CostContext ctx = identity_context(xp, 2, Vector::Zero(2));
  CHECK(matching_energy(Matrix::Zero(1, 2), ctx) == 0.0);
  Matrix mv(1, 2);
  mv << 1, 0;
  CHECK(matching_energy(mv, ctx) == Catch::Approx(-1.0));
  // P=1, n+=1, rho=0.5: regularized energy exceeds the energy by 0.5
  CHECK(regularized_energy(mv, ctx, 0.5) - matching_energy(mv, ctx) ==
        Catch::Approx(0.5));
  CHECK(regularized_energy(mv, ctx, 0.0) == matching_energy(mv, ctx));
}

TEST_CASE("gradient: B at zero, finite differences elsewhere") {
  RandomStream rng(27);
  int d = 4, regions = 3, images = 2, parts = 2;
  Matrix xp(d, images * regions);
  for (int i = 0; i < xp.rows(); ++i)
    for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
  Vector mu(d);
  for (int i = 0; i < d; ++i) mu[i] = rng.normal();
  Matrix w(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) w(i, j) = rng.normal();
  Moments moments = make_moments(mu, w * w.transpose() / d, 0.1);
  CostContext ctx = make_cost_context(moments, xp, regions);

  // gradient at zero is exactly B (identical rows = the b row)
  Matrix g0 = regularized_energy_gradient(Matrix::Zero(parts, images * regions),
                                          ctx, 0.3);
  Vector b = testutil::dense_b_row(ctx);
  for (int p = 0; p < parts; ++p)
    CHECK((g0.row(p).transpose() - b).norm() < 1e-10);

  for (int trial = 0; trial < 20; ++trial) {
    MatchingMatrix m = testutil::random_soft_matching(rng, parts, images,
                                                      regions);
    double rho = rng.uniform(0.0, 1.0);
    Matrix g = regularized_energy_gradient(m, ctx, rho);
    Matrix dir(parts, images * regions);
    for (int i = 0; i < dir.rows(); ++i)
      for (int j = 0; j < dir.cols(); ++j) dir(i, j) = rng.normal();
    dir /= dir.norm();
    double h = 1e-6;
    double plus = regularized_energy(Matrix(m.values + h * dir), ctx, rho);
    double minus = regularized_energy(Matrix(m.values - h * dir), ctx, rho);
    double fd = (plus - minus) / (2.0 * h);
    double analytic = (g.array() * dir.array()).sum();
    CHECK(std::abs(fd - analytic) / (1.0 + std::abs(analytic)) < 1e-5);
  }
}

TEST_CASE("gradient vanishes at the unconstrained minimizer") {
  RandomStream rng(28);
  int d = 3, regions = 2, images = 2, parts = 2;
  Matrix xp(d, images * regions);
  for (int i = 0; i < xp.rows(); ++i)
    for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
  Vector mu(d);
  for (int i = 0; i < d; ++i) mu[i] = rng.normal();
  CostContext ctx = identity_context(xp, regions, mu);

  Matrix a = testutil::dense_gram(ctx);
  double rho = 1.5 * Eigen::SelfAdjointEigenSolver<Matrix>(a)
                          .eigenvalues().maxCoeff();
  Matrix a_rho = rho * Matrix::Identity(a.rows(), a.cols()) - a;
  Vector b = testutil::dense_b_row(ctx);
  Matrix bmat = Matrix::Ones(parts, 1) * b.transpose();
  // solve 2 M A_rho + B = 0 densely
  Matrix mstar = -0.5 * a_rho.ldlt().solve(bmat.transpose()).transpose();
  Matrix g = regularized_energy_gradient(mstar, ctx, rho);
  CHECK(g.norm() < 1e-8);
}

TEST_CASE("gram operator is positive semi-definite (concavity witness)") {
  RandomStream rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 2 + rng.uniform_int(3);
    int regions = 2 + rng.uniform_int(2);
    int images = 1 + rng.uniform_int(2);
    Matrix xp(d, images * regions);
    for (int i = 0; i < xp.rows(); ++i)
      for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
    Matrix w(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) w(i, j) = rng.normal();
    Moments m = make_moments(Vector::Zero(d), w * w.transpose() / d, 0.1);
    CostContext ctx = make_cost_context(m, xp, regions);
    Matrix a = testutil::dense_gram(ctx);
    double lo =
        Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().minCoeff();
    CHECK(lo > -1e-10);
  }
}

TEST_CASE("operator norm: diagonal and rank-1 cases") {
  Matrix xp(2, 2);
  xp << std::sqrt(3.0), 0,
        0, 1;
  CostContext diag = identity_context(xp, 2, Vector::Zero(2));
  NormEstimate est = estimate_operator_norm(diag, 1e-10);
  CHECK(est.converged);
  CHECK(est.value == Catch::Approx(3.0).epsilon(1e-8));

  RandomStream rng(30);
  Vector v(4);
  for (int i = 0; i < 4; ++i) v[i] = rng.normal();
  Matrix x1 = v.transpose();  // one-dimensional descriptors: A = v v^T
  CostContext rank1 = identity_context(x1, 4, Vector::Zero(1));
  NormEstimate est1 = estimate_operator_norm(rank1, 1e-10);
  CHECK(est1.value == Catch::Approx(v.squaredNorm()).epsilon(1e-8));
}

TEST_CASE("operator norm matches a dense eigensolver on random instances") {
  RandomStream rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 6;
    Matrix xp(d, 20);
    for (int i = 0; i < xp.rows(); ++i)
      for (int j = 0; j < xp.cols(); ++j) xp(i, j) = rng.normal();
    Matrix w(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) w(i, j) = rng.normal();
    Vector mu(d);
    for (int i = 0; i < d; ++i) mu[i] = rng.normal();
    Moments m = make_moments(mu, w * w.transpose() / d, 0.1);
    CostContext ctx = make_cost_context(m, xp, 10);  // A is 20x20
    NormEstimate est = estimate_operator_norm(ctx, 1e-9);
    double want = Eigen::SelfAdjointEigenSolver<Matrix>(testutil::dense_gram(ctx))
                      .eigenvalues().maxCoeff();
    CHECK(std::abs(est.value - want) <= 0.005 * want);
  }
}

TEST_CASE("operator norm iteration cap returns the flag") {
  Matrix xp(2, 2);
  xp << 1, 0, 0, 0.999;  // nearly equal eigenvalues converge slowly
  CostContext ctx = identity_context(xp, 2, Vector::Zero(2));
  NormEstimate est = estimate_operator_norm(ctx, 1e-16, 3);
  CHECK_FALSE(est.converged);
  CHECK(est.value > 0.9);
}
