// solvers.hpp - the four part-learning optimizers: one-shot Hungarian
// projection, integer projected fixed point, iterative soft-assign with
// per-image Sinkhorn balancing, and generalized forward-backward splitting.
#pragma once

#include "cost.hpp"
#include "projections.hpp"
#include "types.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pqap {

enum class StopReason { converged, max_iter, early_stop };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_iter: return "max_iter";
    default: return "early_stop";
  }
}

struct SolverReport {
  std::vector<double> objective_trace;       // score for ascent methods,
                                             // regularized energy for GFB
  std::vector<double> constraint_residuals;  // max violation per iteration
  int iterations = 0;
  double wall_time_sec = 0.0;
  StopReason stop_reason = StopReason::converged;
  std::string solver;
  std::optional<MatchingMatrix> rounded;  // hard companion of a soft output
};

namespace detail {
class WallTimer {
public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_).count();
  }
private:
  std::chrono::steady_clock::time_point start_;
};
}  // namespace detail

// Hungarian projection of the matching matrix onto the hard set with itself
// as the score matrix (the rounding step applied after soft solvers).
inline MatchingMatrix round_to_hard(const MatchingMatrix& m) {
  if (m.mode == AssignMode::hard && in_hard_set(m)) return m;
  return project_matching(m.values, m.regions_per_image);
}

// One projection of the initial cost onto the hard set.
inline std::pair<MatchingMatrix, SolverReport> solve_hungarian(
    const MatchingMatrix& m0, const CostContext& ctx,
    LdaNormalization norm = LdaNormalization::row_sum) {
  detail::WallTimer timer;
  Matrix c = cost_matrix(m0, ctx, norm);
  MatchingMatrix out = project_matching(c, ctx.regions_per_image);
  SolverReport report;
  report.solver = "hungarian";
  report.objective_trace.push_back(matching_score(out, ctx));
  report.constraint_residuals.push_back(0.0);
  report.iterations = 1;
  report.stop_reason = StopReason::converged;
  report.wall_time_sec = timer.seconds();
  return {std::move(out), std::move(report)};
}

// Integer projected fixed point: alternate the assignment projection of the
// score gradient with an exact linesearch on the quadratic. The gram
// operator is PSD here, so the linesearch almost always takes the full step
// and the scheme reduces to iterated Hungarian projections.
inline std::pair<MatchingMatrix, SolverReport> solve_ipfp(
    const MatchingMatrix& m0, const CostContext& ctx, int max_iter = 100) {
  if (!m0.block_structure_ok())
    throw std::invalid_argument("initial matrix has inconsistent blocks");
  detail::WallTimer timer;
  SolverReport report;
  report.solver = "ipfp";
  report.stop_reason = StopReason::max_iter;

  Matrix m = m0.values;
  Matrix last_projection;
  for (int k = 0; k < max_iter; ++k) {
    // gradient of the score: 2 M A - B
    Matrix g = 2.0 * ctx.gram_apply(m);
    g.rowwise() -= ctx.mean_response.transpose();
    MatchingMatrix proj = project_matching(g, ctx.regions_per_image);
    Matrix delta = proj.values - m;
    double c = (g.array() * delta.array()).sum();
    double d = (ctx.gram_apply(delta).array() * delta.array()).sum();
    double t = 1.0;
    if (d < 0.0) t = std::min(-c / (2.0 * d), 1.0);
    Matrix next = t * proj.values + (1.0 - t) * m;

    ++report.iterations;
    report.objective_trace.push_back(matching_score(next, ctx));
    MatchingMatrix wrapped{next, ctx.regions_per_image, AssignMode::soft};
    report.constraint_residuals.push_back(constraint_residual(wrapped));

    bool fixed_point = (next == m) ||
                       (last_projection.size() > 0 &&
                        proj.values == last_projection);
    last_projection = proj.values;
    m = std::move(next);
    if (fixed_point) {
      report.stop_reason = StopReason::converged;
      break;
    }
  }
  MatchingMatrix out{last_projection, ctx.regions_per_image, AssignMode::hard};
  report.wall_time_sec = timer.seconds();
  return {std::move(out), std::move(report)};
}

// Entropic soft assignment of one per-image block: Sinkhorn balancing of the
// square matrix obtained by padding exp(beta * C) with maximally
// unattractive dummy rows. Returns the full padded matrix; callers keep the
// top `parts` rows. Scaling moves to the log domain once beta * max|C|
// exceeds 30.
inline Matrix sinkhorn_assign_padded(const Matrix& block, double beta,
                                     std::optional<double> pad_value = {},
                                     double tol = 1e-6, int max_iter = 2000) {
  const int parts = int(block.rows());
  const int regions = int(block.cols());
  if (beta <= 0.0) throw std::invalid_argument("beta must be positive");
  if (parts > regions)
    throw std::invalid_argument("block has more parts than regions");

  double lo = block.minCoeff(), hi = block.maxCoeff();
  double pad = pad_value.value_or(lo - (hi - lo));
  double amplitude = std::max(std::abs(lo), std::max(std::abs(hi),
                                                     std::abs(pad)));

  // exponents of the padded square matrix
  Matrix logk(regions, regions);
  logk.topRows(parts) = beta * block;
  if (regions > parts) logk.bottomRows(regions - parts).setConstant(beta * pad);

  if (beta * amplitude <= 30.0) {
    Matrix k = logk.array().exp();
    Vector u = Vector::Ones(regions), v = Vector::Ones(regions);
    for (int it = 0; it < max_iter; ++it) {
      u = (k * v).cwiseInverse();
      v = (k.transpose() * u).cwiseInverse();
      double residual =
          ((u.asDiagonal() * (k * v)).array() - 1.0).abs().maxCoeff();
      if (residual < tol) break;
    }
    return u.asDiagonal() * k * v.asDiagonal();
  }

  // log-domain scalings
  auto lse_rows = [&](const Matrix& a, const Vector& add) {
    // log(sum_j exp(a_ij + add_j)) per row
    Vector out(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double mx = (a.row(i).transpose() + add).maxCoeff();
      out[i] = mx + std::log(((a.row(i).transpose() + add).array() - mx)
                                 .exp().sum());
    }
    return out;
  };
  Vector lr = Vector::Zero(regions), lc = Vector::Zero(regions);
  for (int it = 0; it < max_iter; ++it) {
    lr = -lse_rows(logk, lc);
    lc = -lse_rows(logk.transpose(), lr);
    Vector rowlog = lr + lse_rows(logk, lc);
    double residual = (rowlog.array().exp() - 1.0).abs().maxCoeff();
    if (residual < tol) break;
  }
  Matrix out(regions, regions);
  for (Eigen::Index i = 0; i < regions; ++i)
    for (Eigen::Index j = 0; j < regions; ++j)
      out(i, j) = std::exp(logk(i, j) + lr[i] + lc[j]);
  return out;
}

inline Matrix sinkhorn_assign(const Matrix& block, double beta,
                              std::optional<double> pad_value = {},
                              double tol = 1e-6, int max_iter = 2000) {
  return sinkhorn_assign_padded(block, beta, pad_value, tol, max_iter)
      .topRows(block.rows());
}

struct IsaSchedule {
  double beta0 = -1.0;        // <= 0: 1 / max|C(M0)|
  double beta_growth = 1.05;  // > 1
  double inner_tol = -1.0;    // < 0: 1e-4 * parts * n+
  int inner_max = 100;
  int outer_max = 500;
  int early_stop_outer = 50;  // < 0 disables the cap
  double sinkhorn_tol = 1e-6;
  int sinkhorn_max = 2000;
};

// Iterative soft-assign: anneal beta upward; at each level alternate the
// cost update with per-image Sinkhorn assignment until the matrix settles.
// The preferred regime stops early, before the matrix reaches the hard set;
// the output stays soft and the report carries its rounded companion.
inline std::pair<MatchingMatrix, SolverReport> solve_isa(
    const MatchingMatrix& m0, const CostContext& ctx, const IsaSchedule& s,
    LdaNormalization norm = LdaNormalization::row_sum) {
  if (s.beta_growth <= 1.0)
    throw std::invalid_argument("beta growth factor must exceed 1");
  if (!m0.block_structure_ok())
    throw std::invalid_argument("initial matrix has inconsistent blocks");
  detail::WallTimer timer;
  SolverReport report;
  report.solver = "isa";

  const int parts = m0.parts();
  const int blocks = m0.positive_images();
  const int width = ctx.regions_per_image;
  double inner_tol = s.inner_tol >= 0.0
                         ? s.inner_tol
                         : 1e-4 * double(parts) * double(ctx.positive_count);

  Matrix m = m0.values;
  double beta = s.beta0;
  if (beta <= 0.0) {
    double amp = cost_matrix(m0, ctx, norm).cwiseAbs().maxCoeff();
    beta = amp > 0.0 ? 1.0 / amp : 1.0;
  }

  int outer_cap = s.outer_max;
  bool capped_early = false;
  if (s.early_stop_outer >= 0 && s.early_stop_outer < outer_cap) {
    outer_cap = s.early_stop_outer;
    capped_early = true;
  }
  report.stop_reason = capped_early ? StopReason::early_stop
                                    : StopReason::max_iter;

  for (int outer = 0; outer < outer_cap; ++outer) {
    for (int inner = 0; inner < s.inner_max; ++inner) {
      MatchingMatrix cur{m, width, AssignMode::soft};
      Matrix c = cost_matrix(cur, ctx, norm);
      Matrix next(m.rows(), m.cols());
      for (int b = 0; b < blocks; ++b)
        next.middleCols(b * width, width) = sinkhorn_assign(
            c.middleCols(b * width, width), beta, {}, s.sinkhorn_tol,
            s.sinkhorn_max);
      double change = (next - m).norm();
      m = std::move(next);
      if (change < inner_tol) break;
    }

    ++report.iterations;
    MatchingMatrix cur{m, width, AssignMode::soft};
    report.objective_trace.push_back(matching_score(cur, ctx));
    report.constraint_residuals.push_back(constraint_residual(cur));

    // hard-set convergence: entrywise rounding is admissible and close
    Matrix r = (m.array() >= 0.5).cast<double>();
    MatchingMatrix rounded{r, width, AssignMode::hard};
    if (in_hard_set(rounded) && (r - m).norm() < inner_tol) {
      m = std::move(r);
      report.stop_reason = StopReason::converged;
      break;
    }
    beta *= s.beta_growth;
  }

  MatchingMatrix out{std::move(m), width,
                     report.stop_reason == StopReason::converged
                         ? AssignMode::hard
                         : AssignMode::soft};
  report.rounded = round_to_hard(out);
  report.wall_time_sec = timer.seconds();
  return {std::move(out), std::move(report)};
}

struct GfbOptions {
  double rho = 0.0;          // quadratic regularization weight
  double step_scale = -1.0;  // L; <= 0 selects ||A|| / 10
  int max_iter = 2000;
  double residual_tol = 1e-6;
  bool nonneg_columns = false;  // cap the column update at zero
};

// Generalized forward-backward on the relaxed problem: two auxiliary
// matrices absorb the row (per-image simplex) and column (sum <= 1)
// constraints; each iteration averages their reflected proximal steps on the
// gradient of the regularized energy. The simplex projection applies to each
// per-image segment of a part row, which is the per-image row-sum
// constraint of the relaxed set.
inline std::pair<MatchingMatrix, SolverReport> solve_gfb(
    const MatchingMatrix& m0, const CostContext& ctx, const GfbOptions& opts) {
  if (!m0.block_structure_ok())
    throw std::invalid_argument("initial matrix has inconsistent blocks");
  if (opts.rho < 0.0) throw std::invalid_argument("rho must be nonnegative");
  detail::WallTimer timer;
  SolverReport report;
  report.solver = "gfb";
  report.stop_reason = StopReason::max_iter;

  const int width = ctx.regions_per_image;
  const int blocks = m0.positive_images();
  const int parts = m0.parts();
  double step_scale = opts.step_scale;
  if (step_scale <= 0.0) step_scale = ctx.operator_norm / 10.0;
  if (step_scale <= 0.0) step_scale = 1.0;  // degenerate zero operator
  const double step = 1.0 / step_scale;

  Matrix m = m0.values, m1 = m0.values, m2 = m0.values;
  for (int it = 0; it < opts.max_iter; ++it) {
    Matrix g = regularized_energy_gradient(m, ctx, opts.rho);

    for (int b = 0; b < blocks; ++b) {
      for (int p = 0; p < parts; ++p) {
        Vector z = 2.0 * m.row(p).segment(b * width, width).transpose() -
                   m1.row(p).segment(b * width, width).transpose() -
                   step * g.row(p).segment(b * width, width).transpose();
        m1.row(p).segment(b * width, width) +=
            (project_simplex(z) -
             m.row(p).segment(b * width, width).transpose()).transpose();
      }
    }
    for (Eigen::Index r = 0; r < m.cols(); ++r) {
      Vector z = 2.0 * m.col(r) - m2.col(r) - step * g.col(r);
      Vector proj = opts.nonneg_columns ? project_halfspace_sum_nonneg(z)
                                        : project_halfspace_sum(z);
      m2.col(r) += proj - m.col(r);
    }
    Matrix next = 0.5 * (m1 + m2);

    ++report.iterations;
    MatchingMatrix cur{next, width, AssignMode::soft};
    report.objective_trace.push_back(regularized_energy(cur, ctx, opts.rho));
    report.constraint_residuals.push_back(constraint_residual(cur));

    double change = (next - m).norm();
    m = std::move(next);
    if (change < opts.residual_tol) {
      report.stop_reason = StopReason::converged;
      break;
    }
  }
  MatchingMatrix out{std::move(m), width, AssignMode::soft};
  report.wall_time_sec = timer.seconds();
  return {std::move(out), std::move(report)};
}

}  // namespace pqap
