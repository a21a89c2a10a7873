#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/objective.hpp"
#include "wsqp/random.hpp"

namespace wsqp {

/// Candidate optimum with its state, adjoint and pointwise multiplier
/// d = -int D_tt p q dt + lambda nu.
struct StationaryTriple {
  Field nu;
  Field p;
  Field q;
  Field dtt_p;  // anchored at t = 0
  Field dtt_q;  // anchored at t = T
  Field multiplier;
  double vi_residual = 0.0;
};

inline StationaryTriple make_stationary_triple(const FwiProblem& pr, const Field& nu) {
  const GradientReport r = reduced_gradient(pr, nu);
  StationaryTriple st;
  st.nu = nu;
  st.p = r.state;
  st.q = r.adjoint;
  st.dtt_p = pr.dtt_state(st.p);
  st.dtt_q = pr.dtt_adjoint(st.q);
  st.multiplier = r.gradient;
  st.vi_residual = vi_residual(*pr.grid, nu, r.gradient, pr.model.lower, pr.model.upper,
                               1.0 / pr.obs.lambda);
  return st;
}

/// Absolute tolerance applied to the strict inequalities |d| > tau.
inline constexpr double kActiveTolerance = 1e-12;

struct ActiveSets {
  double tau = 0.0;
  std::vector<std::uint8_t> active;  // |d| > tau
  std::vector<std::uint8_t> plus;    // d > tau, nu_bar at the lower bound
  std::vector<std::uint8_t> minus;   // d < -tau, nu_bar at the upper bound

  int count() const {
    int c = 0;
    for (auto a : active) c += a;
    return c;
  }
};

inline ActiveSets active_sets_from_multiplier(const Field& d, double tau) {
  require(tau >= 0.0, "compute_active_sets: tau must be >= 0");
  ActiveSets as;
  as.tau = tau;
  const std::size_t n = d.size();
  as.active.assign(n, 0);
  as.plus.assign(n, 0);
  as.minus.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    as.plus[j] = d[j] > tau + kActiveTolerance;
    as.minus[j] = d[j] < -tau - kActiveTolerance;
    as.active[j] = as.plus[j] | as.minus[j];
  }
  return as;
}

inline ActiveSets compute_active_sets(const StationaryTriple& st, double tau) {
  return active_sets_from_multiplier(st.multiplier, tau);
}

/// Zeroes h on the strongly active set. With tau = 0 also enforces h >= 0
/// where nu_bar sits on the lower bound and h <= 0 where it sits on the upper.
inline Field project_critical_cone(const Field& h, const ActiveSets& as, const StationaryTriple& st,
                                   const ControlModel& model) {
  require(h.is_spatial() && h.size() == as.active.size(),
          "project_critical_cone: direction and masks disagree in size");
  Field r = h;
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (as.active[j]) {
      r[j] = 0.0;
      continue;
    }
    if (as.tau == 0.0) {
      if (std::abs(st.nu[j] - model.lower[j]) <= kActiveTolerance) r[j] = std::max(r[j], 0.0);
      if (std::abs(st.nu[j] - model.upper[j]) <= kActiveTolerance) r[j] = std::min(r[j], 0.0);
    }
  }
  return r;
}

struct SscReport {
  double alpha_emp = std::numeric_limits<double>::infinity();
  Field worst_direction;
  std::vector<double> values;  // form value per accepted unit direction
  bool pass = false;
  bool cone_empty = false;
  std::string diagnostic;
};

/// Evaluates the second-order form on the given directions after projecting
/// them into the critical cone and normalizing.
inline SscReport ssc_on_directions(const FwiProblem& pr, const StationaryTriple& st, double tau,
                                   const std::vector<Field>& directions) {
  const Grid& g = *pr.grid;
  const ActiveSets as = compute_active_sets(st, tau);
  SscReport rep;
  for (const Field& raw : directions) {
    Field h = project_critical_cone(raw, as, st, pr.model);
    const double n = norm_l2_omega(g, h);
    if (n == 0.0) continue;
    h *= 1.0 / n;
    const double v = d2_lagrangian_form(pr, h, st.nu, st.p, st.q);
    rep.values.push_back(v);
    if (v < rep.alpha_emp) {
      rep.alpha_emp = v;
      rep.worst_direction = h;
    }
  }
  if (rep.values.empty()) {
    rep.cone_empty = true;
    rep.diagnostic = "ssc_tau_sampler: cone empty at this tau";
    return rep;
  }
  rep.pass = rep.alpha_emp > 0.0;
  return rep;
}

inline SscReport ssc_tau_sampler(const FwiProblem& pr, const StationaryTriple& st, double tau,
                                 int trials, std::uint64_t seed) {
  require(trials >= 1, "ssc_tau_sampler: trials must be >= 1");
  std::vector<Field> dirs;
  dirs.reserve(trials);
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed, static_cast<std::uint64_t>(t));
    Field h = Field::spatial(*pr.grid);
    rng.fill_normal(h);
    dirs.push_back(std::move(h));
  }
  return ssc_on_directions(pr, st, tau, dirs);
}

}  // namespace wsqp
