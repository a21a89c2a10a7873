#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "wsqp/perturbation.hpp"
#include "wsqp/random.hpp"
#include "wsqp/theory.hpp"
#include "wsqp/wavesolver.hpp"

namespace wsqp {

/// Scales of a random manufactured target (nu*, p*, q*) around the reference.
struct TargetScales {
  double control = 0.01;  // ||nu* - nu_bar||_{L2}, capped so no node moves more than margin/2
  double field = 1e-3;    // ||p* - p_bar||_{L2 L2} and ||q* - q_bar||_{L2 L2}
  double margin = 0.02;   // control moves only where nu_bar is this far inside the box
};

/// Nodes where a manufactured control may move: not tau-active, not within
/// `margin` of either bound.
inline std::vector<int> movable_nodes(const TheoryContext& ctx, double margin) {
  const ControlModel& m = ctx.problem->model;
  std::vector<int> out;
  for (int j = 0; j < ctx.grid().nodes(); ++j)
    if (!ctx.active.active[j] && ctx.ref.nu[j] > m.lower[j] + margin &&
        ctx.ref.nu[j] < m.upper[j] - margin)
      out.push_back(j);
  return out;
}

/// Random target: a normal control perturbation on the movable nodes and
/// smooth sine modes for p and q, flat at t = 0 and t = T respectively.
/// `s` scales all three offsets.
inline ControlTriple manufactured_target(const TheoryContext& ctx, std::uint64_t seed,
                                         std::uint64_t stream, double s,
                                         const TargetScales& sc = {}) {
  const Grid& g = ctx.grid();
  const std::vector<int> movable = movable_nodes(ctx, sc.margin);
  require(!movable.empty(), "manufactured_target: no movable control nodes");
  Rng rng(seed, stream);
  Field dn = Field::spatial(g);
  for (int j : movable) dn[j] = rng.normal();
  dn *= std::min(sc.control / norm_l2_omega(g, dn), 0.5 * sc.margin / dn.max_abs());
  const double a1 = rng.normal(), a2 = rng.normal();
  const double f1 = rng.uniform(1.0, 3.0), f2 = rng.uniform(1.0, 3.0);
  const SmoothBump bump(2, 0.3);
  Field dp = Field::space_time(g), dq = Field::space_time(g);
  for (int n = 0; n < g.levels(); ++n) {
    const double t = g.time(n);
    for (int j = 0; j < g.nodes(); ++j) {
      if (g.is_dirichlet(j)) continue;
      double sx = std::sin(0.5 * std::numbers::pi * f1 * g.coord(j, 0));
      double sy = std::sin(0.5 * std::numbers::pi * f2 * g.coord(j, 0));
      if (g.dim() == 2) {
        sx *= std::cos(std::numbers::pi * g.coord(j, 1));
        sy *= std::cos(std::numbers::pi * g.coord(j, 1));
      }
      dp(n, j) = a1 * bump.value(t) * sx;
      dq(n, j) = a2 * bump.value(g.horizon() - t) * sy;
    }
  }
  dp *= sc.field / norm_spacetime(g, dp, SpaceTimeNorm::L2t_L2x);
  dq *= sc.field / norm_spacetime(g, dq, SpaceTimeNorm::L2t_L2x);
  return {ctx.ref.nu + s * dn, ctx.ref.p + s * dp, ctx.ref.q + s * dq};
}

using PerturbationPairs = std::vector<std::pair<PerturbationTriple, PerturbationTriple>>;

/// `count` pairs of manufactured perturbations from independent streams.
inline PerturbationPairs manufactured_pairs(const TheoryContext& ctx, int count, std::uint64_t seed,
                                            double s = 1.0, const TargetScales& sc = {}) {
  require(count >= 1, "manufactured_pairs: count must be >= 1");
  PerturbationPairs pairs;
  for (int i = 0; i < count; ++i) {
    const auto a = manufactured_target(ctx, seed, 2 * static_cast<std::uint64_t>(i), s, sc);
    const auto b = manufactured_target(ctx, seed, 2 * static_cast<std::uint64_t>(i) + 1, s, sc);
    pairs.emplace_back(manufacture_perturbation(ctx, a.nu, a.p, a.q),
                       manufacture_perturbation(ctx, b.nu, b.p, b.q));
  }
  return pairs;
}

inline PerturbationPairs scale_pairs(const PerturbationPairs& pairs, double s) {
  PerturbationPairs out;
  for (const auto& [a, b] : pairs) out.emplace_back(s * a, s * b);
  return out;
}

/// Largest relative change of the per-pair ratios between two probes.
inline double probe_stability(const LipschitzReport& a, const LipschitzReport& b) {
  require(a.entries.size() == b.entries.size(), "probe_stability: probes differ in size");
  double worst = 0.0;
  auto rel = [](double x, double y) {
    const double s = std::max(std::abs(x), std::abs(y));
    return s == 0.0 ? 0.0 : std::abs(x - y) / s;
  };
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].skipped || b.entries[i].skipped) continue;
    worst = std::max({worst, rel(a.entries[i].control, b.entries[i].control),
                      rel(a.entries[i].state, b.entries[i].state),
                      rel(a.entries[i].adjoint, b.entries[i].adjoint)});
  }
  return worst;
}

/// max over l <= 2 of norm(D_t^l u) / l!^2.
template <class Norm>
double derivative_constant(const Grid& g, const Field& u, Norm norm) {
  Field d = u;
  double c = norm(d);
  for (int l = 1; l <= 2; ++l) {
    d = time_derivative(g, d);
    const double f = l == 1 ? 1.0 : 2.0;
    c = std::max(c, norm(d) / (f * f));
  }
  return c;
}

/// Measured inputs of the constant ledger. Derivative constants use discrete
/// time derivatives of order 0..2; c_hat and c_check both take the largest
/// sup-bound ratio of the reference state and adjoint solves.
struct EmpiricalLedgerInputs {
  double epsilon = 0.0;  // ||nu_0 - nu_bar||
  double gamma = 0.0;
  double tau = 0.0;
  Field p0;  // initial SQP state
  Field q0;  // initial SQP adjoint
  double L = 0.0, L_p = 0.0, L_q = 0.0;
};

inline LedgerInputs empirical_ledger(const TheoryContext& ctx, const EmpiricalLedgerInputs& e) {
  const FwiProblem& pr = *ctx.problem;
  const Grid& g = *pr.grid;
  const StationaryTriple& r = ctx.ref;
  auto l2l2 = [&](const Field& u) { return norm_spacetime(g, u, SpaceTimeNorm::L2t_L2x); };
  auto l2linf = [&](const Field& u) { return norm_spacetime(g, u, SpaceTimeNorm::L2t_LInfx); };
  auto linf = [](const Field& u) { return u.max_abs(); };

  LedgerInputs in;
  in.nu_min = pr.model.nu_min;
  in.nu_max = pr.model.nu_max;
  in.omega_measure = g.measure();
  in.horizon = g.horizon();
  in.lambda = pr.obs.lambda;
  in.tau = e.tau;
  in.epsilon = e.epsilon;
  in.gamma = e.gamma;
  in.C_f = derivative_constant(g, pr.source, l2l2);

  double sum_a = 0.0, sum_a_linf = 0.0, sum_mis = 0.0;
  for (const Channel& ch : pr.obs.channels) {
    sum_a += derivative_constant(g, ch.weight, linf);
    sum_a_linf += ch.weight.max_abs();
    Field w = ch.weight;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= r.p[i] - ch.data[i];
    sum_mis += derivative_constant(g, w, l2l2);
  }
  in.C_a = std::max(sum_a, sum_mis);
  in.C_bar = std::max(derivative_constant(g, r.p, l2linf), derivative_constant(g, r.q, l2linf));
  double c0 = std::max(derivative_constant(g, e.p0, l2linf), derivative_constant(g, e.q0, l2linf));
  if (e.epsilon > 0.0) c0 = std::max(c0, derivative_constant(g, e.p0 - r.p, l2linf) / e.epsilon);
  in.C_0 = c0;

  const WaveSolution st = solve(WaveProblem::forward(g, r.nu, pr.model.damping, pr.source, pr.model.nu_min));
  const Field adj_src = pr.obs.residual(g, r.p);
  const WaveSolution ad = solve(WaveProblem::backward(g, r.nu, pr.model.damping, adj_src, pr.model.nu_min));
  const double sup = std::max(check_sup_bound(g, st, pr.source).ratio, check_sup_bound(g, ad, adj_src).ratio);
  in.c_hat = sup;
  in.c_check = sup;

  in.L = e.L;
  in.L_p = e.L_p;
  in.L_q = e.L_q;
  in.sum_a_linf = sum_a_linf;
  in.dtt_pbar_l2linf = l2linf(r.dtt_p);
  in.dtt_qbar_l2linf = l2linf(r.dtt_q);
  return in;
}

}  // namespace wsqp
