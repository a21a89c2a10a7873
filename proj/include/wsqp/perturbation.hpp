#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/objective.hpp"
#include "wsqp/optimality.hpp"
#include "wsqp/qp.hpp"
#include "wsqp/theory.hpp"

namespace wsqp {

/// Reference triple with its tau-active sets. The restricted admissible set
/// pins nu to nu_bar on the active set, realised by collapsing the box there.
struct TheoryContext {
  const FwiProblem* problem = nullptr;
  StationaryTriple ref;
  double tau = 0.0;
  ActiveSets active;
  Field lower_tau;
  Field upper_tau;

  const Grid& grid() const { return *problem->grid; }

  ExpansionPoint expansion() const {
    return ExpansionPoint{ref.nu, ref.p, ref.q, ref.dtt_p, ref.dtt_q};
  }

  /// nu admissible and equal to nu_bar on the active set.
  bool in_restricted_set(const Field& nu) const {
    const ControlModel& m = problem->model;
    for (std::size_t j = 0; j < nu.size(); ++j) {
      if (nu[j] < m.lower[j] || nu[j] > m.upper[j]) return false;
      if (active.active[j] && nu[j] != ref.nu[j]) return false;
    }
    return true;
  }
};

inline TheoryContext make_theory_context(const FwiProblem& pr, StationaryTriple ref, double tau) {
  const Grid& g = *pr.grid;
  require_spatial(ref.nu, g, "theory context nu_bar");
  require_space_time(ref.p, g, "theory context p_bar");
  require_space_time(ref.q, g, "theory context q_bar");
  for (std::size_t j = 0; j < ref.nu.size(); ++j)
    require(ref.nu[j] >= pr.model.lower[j] && ref.nu[j] <= pr.model.upper[j],
            "theory context: nu_bar outside the admissible box");
  TheoryContext ctx;
  ctx.problem = &pr;
  ctx.tau = tau;
  ctx.active = compute_active_sets(ref, tau);
  ctx.lower_tau = pr.model.lower;
  ctx.upper_tau = pr.model.upper;
  for (std::size_t j = 0; j < ref.nu.size(); ++j) {
    if (!ctx.active.active[j]) continue;
    ctx.lower_tau[j] = ref.nu[j];
    ctx.upper_tau[j] = ref.nu[j];
  }
  ctx.ref = std::move(ref);
  return ctx;
}

struct PerturbationNorms {
  double state_h1 = 0.0, state_l2 = 0.0;
  double adjoint_h1 = 0.0, adjoint_l2 = 0.0;
  double vi_l2 = 0.0, vi_linf = 0.0;
  /// ||rho_st||_{H1 L2} + ||rho_adj||_{H1 L2} + ||rho_vi||_{Linf}
  double smallness() const { return state_h1 + adjoint_h1 + vi_linf; }
};

/// (rho_st, rho_adj, rho_vi). Empty fields are zero.
struct PerturbationTriple {
  Field state;
  Field adjoint;
  Field vi;

  static PerturbationTriple zero(const Grid& g) {
    return {Field::space_time(g), Field::space_time(g), Field::spatial(g)};
  }

  PerturbationNorms norms(const Grid& g) const {
    PerturbationNorms n;
    if (state.size()) {
      n.state_h1 = norm_spacetime(g, state, SpaceTimeNorm::H1t_L2x);
      n.state_l2 = norm_spacetime(g, state, SpaceTimeNorm::L2t_L2x);
    }
    if (adjoint.size()) {
      n.adjoint_h1 = norm_spacetime(g, adjoint, SpaceTimeNorm::H1t_L2x);
      n.adjoint_l2 = norm_spacetime(g, adjoint, SpaceTimeNorm::L2t_L2x);
    }
    if (vi.size()) {
      n.vi_l2 = norm_l2_omega(g, vi);
      n.vi_linf = norm_linf_omega(g, vi);
    }
    return n;
  }

  /// max(|rho_st(0)|, |rho_adj(T)|)
  double endpoint_magnitude(const Grid& g) const {
    double m = 0.0;
    if (state.size()) m = std::max(m, level_norm_linf(state, 0));
    if (adjoint.size()) m = std::max(m, level_norm_linf(adjoint, g.steps()));
    return m;
  }
  bool endpoints_vanish(const Grid& g, double tol) const { return endpoint_magnitude(g) <= tol; }

  QpPerturbation as_qp() const { return {state, adjoint, vi}; }

  friend PerturbationTriple operator-(const PerturbationTriple& a, const PerturbationTriple& b) {
    auto diff = [](const Field& x, const Field& y) -> Field {
      if (!x.size()) return y.size() ? -1.0 * y : Field{};
      if (!y.size()) return x;
      return x - y;
    };
    return {diff(a.state, b.state), diff(a.adjoint, b.adjoint), diff(a.vi, b.vi)};
  }
  friend PerturbationTriple operator*(double s, const PerturbationTriple& a) {
    auto sc = [s](const Field& x) { return x.size() ? s * x : Field{}; };
    return {sc(a.state), sc(a.adjoint), sc(a.vi)};
  }
};

struct PerturbedSolution {
  Field nu;
  Field p;
  Field q;
  Field gradient;  // VI integrand including -rho_vi
  QpResult qp;
};

inline LinearizedQp perturbed_qp(const TheoryContext& ctx, const PerturbationTriple& rho,
                                 bool restricted) {
  const ControlModel& m = ctx.problem->model;
  return LinearizedQp(*ctx.problem, ctx.expansion(), restricted ? ctx.lower_tau : m.lower,
                      restricted ? ctx.upper_tau : m.upper, rho.as_qp());
}

/// Solves the perturbed optimality system around the reference as the
/// minimizer of its convex quadratic, over the restricted set or the full box.
inline PerturbedSolution solve_perturbed(const TheoryContext& ctx, const PerturbationTriple& rho,
                                         bool restricted, const QpOptions& opt = {}) {
  const LinearizedQp qp = perturbed_qp(ctx, rho, restricted);
  PerturbedSolution s;
  s.qp = qp.minimize(ctx.ref.nu, opt);
  if (!s.qp.converged)
    throw ConvergenceError("solve_perturbed: QP did not converge: vi_residual " +
                           sci(s.qp.vi_residual) + " > tol " +
                           sci(s.qp.tolerance) + " after " + std::to_string(s.qp.iterations) + " iterations");
  s.nu = s.qp.point.nu;
  s.p = s.qp.point.p;
  s.q = s.qp.point.q;
  s.gradient = s.qp.point.gradient;
  return s;
}

/// VI residual of a perturbed solution against the full box (scale 1/lambda).
inline double unrestricted_vi_residual(const TheoryContext& ctx, const PerturbedSolution& s) {
  const FwiProblem& pr = *ctx.problem;
  return vi_residual(*pr.grid, s.nu, s.gradient, pr.model.lower, pr.model.upper,
                     1.0 / pr.obs.lambda);
}

/// Perturbation for which (nu*, p*, q*) solves the perturbed system. The state
/// and adjoint rows are the scheme residuals of the targets; rows outside the
/// scheme (last state level, first adjoint level) and Dirichlet rows are zero.
/// rho_vi cancels the VI integrand, except where nu* sits on a bound and the
/// integrand already has the feasible sign, where it is zero.
inline PerturbationTriple manufacture_perturbation(const TheoryContext& ctx, const Field& nu_star,
                                                   const Field& p_star, const Field& q_star) {
  const FwiProblem& pr = *ctx.problem;
  const Grid& g = *pr.grid;
  require_spatial(nu_star, g, "manufacture_perturbation nu*");
  require_space_time(p_star, g, "manufacture_perturbation p*");
  require_space_time(q_star, g, "manufacture_perturbation q*");
  require(ctx.in_restricted_set(nu_star),
          "manufacture_perturbation: nu* violates the restricted admissible set "
          "(outside the box or differs from nu_bar on the tau-active set)");
  const StationaryTriple& r = ctx.ref;
  const Field dnu = nu_star - r.nu;
  PerturbationTriple rho;
  rho.state = apply_wave_operator(g, r.nu, pr.model.damping, p_star, TimeAnchor::initial) -
              pr.source + multiply_levels(dnu, r.dtt_p);
  rho.adjoint = apply_wave_operator(g, r.nu, pr.model.damping, q_star, TimeAnchor::terminal) -
                pr.obs.residual(g, p_star) + multiply_levels(dnu, r.dtt_q);
  for (int j = 0; j < g.nodes(); ++j) {
    rho.state(g.steps(), j) = 0.0;
    rho.adjoint(0, j) = 0.0;
    if (!g.is_dirichlet(j)) continue;
    for (int n = 0; n < g.levels(); ++n) rho.state(n, j) = rho.adjoint(n, j) = 0.0;
  }
  rho.vi = -1.0 * time_integral_product(g, r.dtt_p, q_star);
  rho.vi -= time_integral_product(g, pr.dtt_state(p_star - r.p), r.q);
  rho.vi.axpy(pr.obs.lambda, nu_star);
  for (std::size_t j = 0; j < rho.vi.size(); ++j) {
    const bool at_lower = std::abs(nu_star[j] - pr.model.lower[j]) <= kActiveTolerance;
    const bool at_upper = std::abs(nu_star[j] - pr.model.upper[j]) <= kActiveTolerance;
    if ((at_lower && rho.vi[j] >= 0.0) || (at_upper && rho.vi[j] <= 0.0)) rho.vi[j] = 0.0;
  }
  return rho;
}

struct LipschitzEntry {
  bool skipped = false;
  std::string note;
  double control = 0.0;  // ||dnu|| / (||drho_st||_{L2L2} + ||drho_adj||_{L2L2} + ||drho_vi||_{L2})
  double state = 0.0;    // ||dp||_{L2 Linf} / (||drho_st||_{H1L2} + ||drho_adj||_{L2L2} + ||drho_vi||_{L2})
  double adjoint = 0.0;  // ||dq||_{L2 Linf} / (||drho_st||_{L2L2} + ||drho_adj||_{H1L2} + ||drho_vi||_{L2})
};

struct LipschitzReport {
  std::vector<LipschitzEntry> entries;
  double L_emp = 0.0;
  double Lp_emp = 0.0;
  double Lq_emp = 0.0;
  int evaluated = 0;
};

inline LipschitzReport lipschitz_probe(
    const TheoryContext& ctx, const std::vector<std::pair<PerturbationTriple, PerturbationTriple>>& pairs,
    bool restricted = true, const QpOptions& opt = {}) {
  require(!pairs.empty(), "lipschitz_probe: needs at least one pair");
  const Grid& g = ctx.grid();
  LipschitzReport rep;
  for (const auto& [a, b] : pairs) {
    LipschitzEntry e;
    const PerturbationNorms dn = (a - b).norms(g);
    const double den_l = dn.state_l2 + dn.adjoint_l2 + dn.vi_l2;
    if (den_l == 0.0) {
      e.skipped = true;
      e.note = "identical perturbations";
      rep.entries.push_back(e);
      continue;
    }
    const PerturbedSolution sa = solve_perturbed(ctx, a, restricted, opt);
    const PerturbedSolution sb = solve_perturbed(ctx, b, restricted, opt);
    e.control = norm_l2_omega(g, sa.nu - sb.nu) / den_l;
    e.state = norm_spacetime(g, sa.p - sb.p, SpaceTimeNorm::L2t_LInfx) /
              (dn.state_h1 + dn.adjoint_l2 + dn.vi_l2);
    e.adjoint = norm_spacetime(g, sa.q - sb.q, SpaceTimeNorm::L2t_LInfx) /
                (dn.state_l2 + dn.adjoint_h1 + dn.vi_l2);
    rep.L_emp = std::max(rep.L_emp, e.control);
    rep.Lp_emp = std::max(rep.Lp_emp, e.state);
    rep.Lq_emp = std::max(rep.Lq_emp, e.adjoint);
    ++rep.evaluated;
    rep.entries.push_back(e);
  }
  return rep;
}

/// max{L_p ||D_tt q_bar||_{L2 Linf}, L_q ||D_tt p_bar||_{L2 Linf}, 1}
inline double empirical_c_L(const TheoryContext& ctx, double Lp, double Lq) {
  const Grid& g = ctx.grid();
  return std::max({Lp * norm_spacetime(g, ctx.ref.dtt_q, SpaceTimeNorm::L2t_LInfx),
                   Lq * norm_spacetime(g, ctx.ref.dtt_p, SpaceTimeNorm::L2t_LInfx), 1.0});
}

struct ControlTriple {
  Field nu;
  Field p;
  Field q;
};

/// T_k: the state and adjoint of the k-th subproblem at a given control.
inline ControlTriple apply_Tk(const FwiProblem& pr, const ExpansionPoint& frozen,
                              const Field& nu_hat) {
  const LinearizedQp qp(pr, frozen, pr.model.lower, pr.model.upper);
  ControlTriple t;
  t.nu = nu_hat;
  t.p = qp.state(nu_hat);
  t.q = qp.adjoint(nu_hat, t.p);
  return t;
}

/// Perturbation that turns the perturbed system at the reference into the
/// k-th subproblem evaluated at (nu_hat, p_hat, q_hat).
inline PerturbationTriple sk_perturbation(const TheoryContext& ctx, const ExpansionPoint& frozen,
                                          const ControlTriple& hat) {
  const FwiProblem& pr = *ctx.problem;
  const Grid& g = *pr.grid;
  const StationaryTriple& r = ctx.ref;
  const Field k_minus_bar = frozen.nu - r.nu;
  const Field hat_minus_k = hat.nu - frozen.nu;
  const Field bar_minus_hat = r.nu - hat.nu;
  PerturbationTriple rho;
  rho.state = -1.0 * multiply_levels(k_minus_bar, pr.dtt_state(hat.p));
  rho.state -= multiply_levels(hat_minus_k, frozen.dtt_p);
  rho.state -= multiply_levels(bar_minus_hat, r.dtt_p);
  rho.adjoint = -1.0 * multiply_levels(k_minus_bar, pr.dtt_adjoint(hat.q));
  rho.adjoint -= multiply_levels(hat_minus_k, frozen.dtt_q);
  rho.adjoint -= multiply_levels(bar_minus_hat, r.dtt_q);
  rho.vi = time_integral_product(g, frozen.dtt_p - r.dtt_p, hat.q);
  rho.vi += time_integral_product(g, pr.dtt_state(hat.p) - frozen.dtt_p, frozen.q);
  rho.vi += time_integral_product(g, r.dtt_p - pr.dtt_state(hat.p), r.q);
  return rho;
}

/// S_k: solves the restricted perturbed system with the S_k perturbation.
inline ControlTriple apply_Sk(const TheoryContext& ctx, const ExpansionPoint& frozen,
                              const ControlTriple& hat, const QpOptions& opt = {}) {
  const PerturbedSolution s = solve_perturbed(ctx, sk_perturbation(ctx, frozen, hat), true, opt);
  return {s.nu, s.p, s.q};
}

struct FixedPointReport {
  Field nu;
  std::vector<double> steps;   // ||nu^{j+1} - nu^j||
  std::vector<double> ratios;  // steps[j] / steps[j-1]
  int iterations = 0;
  bool converged = false;
  bool contraction = false;  // every observed ratio < 1
  bool diverged = false;     // ratio >= 1 for 3 consecutive steps
  std::string diagnostic;
};

/// Iterates nu <- I_nu(S_k(T_k(nu))).
inline FixedPointReport fixed_point_iterate(const TheoryContext& ctx, const ExpansionPoint& frozen,
                                            const Field& nu_start, int max_it, double tol,
                                            const QpOptions& opt = {}) {
  require(max_it >= 1, "fixed_point_iterate: max_it must be >= 1");
  require(tol >= 0.0, "fixed_point_iterate: tol must be >= 0");
  const Grid& g = ctx.grid();
  FixedPointReport rep;
  rep.nu = nu_start;
  int run = 0;
  for (int it = 0; it < max_it; ++it) {
    Field next;
    try {
      next = apply_Sk(ctx, frozen, apply_Tk(*ctx.problem, frozen, rep.nu), opt).nu;
    } catch (const std::exception& e) {
      rep.diagnostic = e.what();
      rep.diverged = true;
      break;
    }
    const double step = norm_l2_omega(g, next - rep.nu);
    rep.nu = std::move(next);
    rep.iterations = it + 1;
    if (!rep.steps.empty()) {
      const double ratio = rep.steps.back() == 0.0 ? 0.0 : step / rep.steps.back();
      rep.ratios.push_back(ratio);
      run = ratio >= 1.0 ? run + 1 : 0;
    }
    rep.steps.push_back(step);
    if (step <= tol) {
      rep.converged = true;
      break;
    }
    if (run >= 3) {
      rep.diverged = true;
      rep.diagnostic = "fixed_point_iterate: step ratio >= 1 for 3 consecutive iterations";
      break;
    }
  }
  rep.contraction = !rep.diverged && std::all_of(rep.ratios.begin(), rep.ratios.end(),
                                                 [](double r) { return r < 1.0; });
  return rep;
}

struct NeighborhoodReport {
  bool admissible = false;
  double state_distance = 0.0;    // ||D_tt (p_bar - p)||_{L2 Linf}
  double adjoint_distance = 0.0;  // ||q_bar - q||_{L2 Linf}
  double log_bound = 0.0;         // ln(c1 gamma_bar / delta)
  bool member = false;
};

inline NeighborhoodReport check_neighborhood_U(const FwiProblem& pr, const StationaryTriple& ref,
                                               const ControlTriple& cand, double c1, double delta,
                                               const LogReal& gamma_bar) {
  const Grid& g = *pr.grid;
  require(c1 > 0.0 && delta > 0.0, "check_neighborhood_U: c1 and delta must be positive");
  NeighborhoodReport rep;
  rep.admissible = true;
  for (std::size_t j = 0; j < cand.nu.size(); ++j)
    rep.admissible &= cand.nu[j] >= pr.model.lower[j] && cand.nu[j] <= pr.model.upper[j];
  rep.state_distance =
      norm_spacetime(g, pr.dtt_state(ref.p - cand.p), SpaceTimeNorm::L2t_LInfx);
  rep.adjoint_distance = norm_spacetime(g, ref.q - cand.q, SpaceTimeNorm::L2t_LInfx);
  const LogReal bound = LogReal::from_double(c1) * gamma_bar / LogReal::from_double(delta);
  rep.log_bound = bound.log();
  rep.member = rep.admissible &&
               LogReal::from_double(rep.state_distance) <= bound &&
               LogReal::from_double(rep.adjoint_distance) <= bound;
  return rep;
}

}  // namespace wsqp
