#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/random.hpp"
#include "wsqp/wavesolver.hpp"

namespace wsqp {

/// One receiver channel: nonnegative space-time weight a_i and data p_i^ob.
struct Channel {
  Field weight;
  Field data;
};

struct ObservationSet {
  std::vector<Channel> channels;
  double lambda = 1.0;

  void validate(const Grid& g) const {
    require(lambda > 0.0, "observations: regularization lambda must be positive");
    for (const Channel& c : channels) {
      require_space_time(c.weight, g, "observation weight");
      require_space_time(c.data, g, "observation data");
      for (double a : c.weight.values()) require(a >= 0.0, "observations: weights a_i must be >= 0");
    }
  }

  /// 1/2 sum_i int int a_i (p - p_i^ob)^2
  double misfit(const Grid& g, const Field& p) const {
    double total = 0.0;
    for (const Channel& c : channels) {
      for (int n = 0; n < g.levels(); ++n) {
        double s = 0.0;
        for (int j = 0; j < g.nodes(); ++j) {
          const double r = p(n, j) - c.data(n, j);
          s += g.weight(j) * c.weight(n, j) * r * r;
        }
        total += g.time_weight(n) * s;
      }
    }
    return 0.5 * total;
  }

  /// sum_i a_i (p - p_i^ob), the adjoint source.
  Field residual(const Grid& g, const Field& p) const {
    Field r = Field::space_time(g);
    for (const Channel& c : channels)
      for (std::size_t i = 0; i < r.size(); ++i) r[i] += c.weight[i] * (p[i] - c.data[i]);
    return r;
  }

  /// sum_i (a_i u, u)
  double weighted_square(const Grid& g, const Field& u) const {
    double total = 0.0;
    for (const Channel& c : channels) {
      for (int n = 0; n < g.levels(); ++n) {
        double s = 0.0;
        for (int j = 0; j < g.nodes(); ++j) s += g.weight(j) * c.weight(n, j) * u(n, j) * u(n, j);
        total += g.time_weight(n) * s;
      }
    }
    return total;
  }
};

/// Everything that defines one inversion: grid, admissible set and damping,
/// source f and observations.
struct FwiProblem {
  const Grid* grid = nullptr;
  ControlModel model;
  Field source;
  ObservationSet obs;

  void validate() const {
    require(grid != nullptr, "problem: grid missing");
    model.validate(*grid);
    require_space_time(source, *grid, "problem source");
    obs.validate(*grid);
  }

  /// State p solving nu D_tt p - Delta p + eta D_t p = src.
  Field forward(const Field& nu, const Field& src) const {
    return solve_field(WaveProblem::forward(*grid, nu, model.damping, src, model.nu_min));
  }
  /// Adjoint q solving nu D_tt q - Delta q - eta D_t q = src with terminal data.
  Field backward(const Field& nu, const Field& src) const {
    return solve_field(WaveProblem::backward(*grid, nu, model.damping, src, model.nu_min));
  }
  Field dtt_state(const Field& p) const { return second_difference(*grid, p, TimeAnchor::initial); }
  Field dtt_adjoint(const Field& q) const {
    return second_difference(*grid, q, TimeAnchor::terminal);
  }
};

struct GradientReport {
  Field gradient;  // L2 representer; empty for value-only evaluations
  Field state;
  Field adjoint;
  double misfit = 0.0;
  double tikhonov = 0.0;
  double objective = 0.0;
};

inline GradientReport eval_objective(const FwiProblem& pr, const Field& nu) {
  const Grid& g = *pr.grid;
  require_spatial(nu, g, "eval_objective");
  GradientReport r;
  r.state = pr.forward(nu, pr.source);
  r.misfit = pr.obs.misfit(g, r.state);
  const double n2 = norm_l2_omega(g, nu);
  r.tikhonov = 0.5 * pr.obs.lambda * n2 * n2;
  r.objective = r.misfit + r.tikhonov;
  return r;
}

/// Gradient of the discrete reduced objective:
///   g = -sum_n w_n D_tt p^n q^n + lambda nu,
/// with q the backward solve driven by sum_i a_i (p - p_i^ob).
inline GradientReport reduced_gradient(const FwiProblem& pr, const Field& nu) {
  const Grid& g = *pr.grid;
  GradientReport r = eval_objective(pr, nu);
  r.adjoint = pr.backward(nu, pr.obs.residual(g, r.state));
  r.gradient = -1.0 * time_integral_product(g, pr.dtt_state(r.state), r.adjoint);
  r.gradient.axpy(pr.obs.lambda, nu);
  return r;
}

/// sum_i (a_i pt, pt) + lambda ||h||^2 - 2 (h D_tt pt, qbar), pt the linearized state.
inline double d2_lagrangian_form(const FwiProblem& pr, const Field& h, const Field& nu_bar,
                                 const Field& p_bar, const Field& q_bar) {
  const Grid& g = *pr.grid;
  require_spatial(h, g, "d2_lagrangian_form direction");
  require_space_time(p_bar, g, "d2_lagrangian_form state");
  require_space_time(q_bar, g, "d2_lagrangian_form adjoint");
  const Field pt = solve_field(WaveProblem::forward(
      g, nu_bar, pr.model.damping, -1.0 * multiply_levels(h, pr.dtt_state(p_bar)),
      pr.model.nu_min));
  const double hn = norm_l2_omega(g, h);
  const double coupling = inner_spacetime(g, multiply_levels(h, pr.dtt_state(pt)), q_bar);
  return pr.obs.weighted_square(g, pt) + pr.obs.lambda * hn * hn - 2.0 * coupling;
}

struct GrowthReport {
  int trials = 0;
  std::vector<double> ratios;  // (J(nu) - J(nu_bar)) / ||nu - nu_bar||^2
  double min_ratio = std::numeric_limits<double>::infinity();
  std::optional<bool> pass;  // empty when no trial ran or the sampler refused
  bool refused = false;
  std::string diagnostic;
};

/// Samples admissible nu = P(nu_bar + s) with ||s|| <= sigma. Directions come
/// from per-trial streams of `seed`, so calls differing only in sigma use the
/// same directions.
inline GrowthReport sample_quadratic_growth(const FwiProblem& pr, const Field& nu_bar, double sigma,
                                            double beta_est, int trials, std::uint64_t seed,
                                            double stationarity_tol = 1e-8) {
  const Grid& g = *pr.grid;
  GrowthReport rep;
  rep.trials = trials;
  const GradientReport base = reduced_gradient(pr, nu_bar);
  const double scale = 1.0 / pr.obs.lambda;
  const double res = vi_residual(g, nu_bar, base.gradient, pr.model.lower, pr.model.upper, scale);
  if (res > stationarity_tol * (1.0 + scale * norm_l2_omega(g, base.gradient))) {
    rep.refused = true;
    rep.diagnostic = "sample_quadratic_growth: nu_bar is not stationary (vi_residual = " +
                     sci(res) + ")";
    return rep;
  }
  if (trials <= 0) return rep;
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed, static_cast<std::uint64_t>(t));
    Field s = Field::spatial(g);
    rng.fill_normal(s);
    const double radius = sigma * rng.uniform(0.5, 1.0);
    s *= radius / norm_l2_omega(g, s);
    const Field nu = project_box(nu_bar + s, pr.model);
    const double dist = norm_l2_omega(g, nu - nu_bar);
    if (dist == 0.0) continue;
    const double jv = eval_objective(pr, nu).objective;
    const double ratio = (jv - base.objective) / (dist * dist);
    rep.ratios.push_back(ratio);
    rep.min_ratio = std::min(rep.min_ratio, ratio);
  }
  if (!rep.ratios.empty()) rep.pass = rep.min_ratio >= beta_est && beta_est > 0.0;
  return rep;
}

}  // namespace wsqp
