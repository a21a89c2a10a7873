#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/objective.hpp"
#include "wsqp/optimality.hpp"
#include "wsqp/qp.hpp"
#include "wsqp/theory.hpp"

namespace wsqp {

/// One iterate (nu_k, p_k, q_k) of the SQP loop with its diagnostics.
struct SqpIterate {
  int k = 0;
  Field nu;
  Field p;
  Field q;
  Field dtt_p;  // anchored at t = 0
  Field dtt_q;  // anchored at t = T

  int qp_iterations = 0;
  int qp_evaluations = 0;
  double qp_vi_residual = 0.0;
  double qp_tolerance = 0.0;
  bool qp_monotone = true;
  double step_norm = 0.0;  // ||nu_k - nu_{k-1}||, 0 for k = 0

  std::optional<double> err_nu;  // ||nu_k - nu_bar||_{L2}
  std::optional<double> err_p;   // ||p_k - p_bar||_{L2 L2}
  std::optional<double> err_q;   // ||q_k - q_bar||_{L2 L2}

  // Loss-of-regularity bookkeeping: p_k involves 2k time differences of the
  // initial state; the anchored second differences should stay flat at the ends.
  int time_difference_order = 0;
  double dtt_p_initial = 0.0;   // max |D_tt p_k(0)|
  double dtt_q_terminal = 0.0;  // max |D_tt q_k(T)|
};

struct SqpOptions {
  double tol = 1e-10;  // stop when ||nu_{k+1} - nu_k|| <= tol
  int max_k = 15;
  QpOptions qp;
};

struct SqpLog {
  std::vector<SqpIterate> iterates;  // iterates[0] is the initialization
  bool converged = false;
  bool failed = false;
  std::string failure;
};

namespace detail {

inline void fill_sqp_diagnostics(const FwiProblem& pr, SqpIterate& it,
                                 const StationaryTriple* ref) {
  const Grid& g = *pr.grid;
  it.dtt_p = pr.dtt_state(it.p);
  it.dtt_q = pr.dtt_adjoint(it.q);
  it.dtt_p_initial = level_norm_linf(it.dtt_p, 0);
  it.dtt_q_terminal = level_norm_linf(it.dtt_q, g.steps());
  it.time_difference_order = 2 * it.k;
  if (ref) {
    it.err_nu = norm_l2_omega(g, it.nu - ref->nu);
    it.err_p = norm_spacetime(g, it.p - ref->p, SpaceTimeNorm::L2t_L2x);
    it.err_q = norm_spacetime(g, it.q - ref->q, SpaceTimeNorm::L2t_L2x);
  }
}

}  // namespace detail

/// Initial triple. Missing p0 / q0 default to the state and adjoint at nu0,
/// which carry the discrete zero initial and terminal data.
inline SqpIterate initial_iterate(const FwiProblem& pr, const Field& nu0,
                                  const StationaryTriple* ref = nullptr,
                                  std::optional<Field> p0 = std::nullopt,
                                  std::optional<Field> q0 = std::nullopt) {
  const Grid& g = *pr.grid;
  require_spatial(nu0, g, "sqp initial nu");
  for (std::size_t j = 0; j < nu0.size(); ++j)
    require(nu0[j] >= pr.model.lower[j] && nu0[j] <= pr.model.upper[j],
            "sqp: initial nu outside [nu_lower, nu_upper]");
  SqpIterate it;
  it.nu = nu0;
  it.p = p0 ? std::move(*p0) : pr.forward(nu0, pr.source);
  it.q = q0 ? std::move(*q0) : pr.backward(nu0, pr.obs.residual(g, it.p));
  require_space_time(it.p, g, "sqp initial p");
  require_space_time(it.q, g, "sqp initial q");
  detail::fill_sqp_diagnostics(pr, it, ref);
  return it;
}

/// One step: minimizes the reduced quadratic J_k over the box by projected BB
/// gradient, warm-started at nu_k. Throws ConvergenceError when the QP stalls.
inline SqpIterate sqp_step(const FwiProblem& pr, const SqpIterate& prev, const QpOptions& opt = {},
                           const StationaryTriple* ref = nullptr) {
  const Grid& g = *pr.grid;
  for (std::size_t j = 0; j < prev.nu.size(); ++j)
    require(prev.nu[j] >= pr.model.nu_min, "sqp: nu_k below nu_min");
  const LinearizedQp qp(pr, make_expansion_point(pr, prev.nu, prev.p, prev.q), pr.model.lower,
                        pr.model.upper);
  const QpResult res = qp.minimize(prev.nu, opt);
  if (!res.converged)
    throw ConvergenceError("sqp: subproblem at k = " + std::to_string(prev.k) +
                           " did not converge: vi_residual " + sci(res.vi_residual) +
                           " > tol " + sci(res.tolerance) + " after " +
                           std::to_string(res.iterations) + " iterations");
  SqpIterate it;
  it.k = prev.k + 1;
  it.nu = res.point.nu;
  it.p = res.point.p;
  it.q = res.point.q;
  it.qp_iterations = res.iterations;
  it.qp_evaluations = res.evaluations;
  it.qp_vi_residual = res.vi_residual;
  it.qp_tolerance = res.tolerance;
  it.qp_monotone = res.monotone;
  it.step_norm = norm_l2_omega(g, it.nu - prev.nu);
  detail::fill_sqp_diagnostics(pr, it, ref);
  return it;
}

inline SqpLog run_sqp(const FwiProblem& pr, SqpIterate start, const SqpOptions& opt = {},
                      const StationaryTriple* ref = nullptr) {
  require(opt.max_k >= 0, "sqp: max_k must be >= 0");
  require(opt.tol >= 0.0, "sqp: tol must be >= 0");
  SqpLog log;
  log.iterates.push_back(std::move(start));
  for (int k = 0; k < opt.max_k; ++k) {
    try {
      log.iterates.push_back(sqp_step(pr, log.iterates.back(), opt.qp, ref));
    } catch (const std::exception& e) {
      log.failed = true;
      log.failure = e.what();
      break;
    }
    if (log.iterates.back().step_norm <= opt.tol) {
      log.converged = true;
      break;
    }
  }
  return log;
}

inline SqpLog run_sqp(const FwiProblem& pr, const Field& nu0, const SqpOptions& opt = {},
                      const StationaryTriple* ref = nullptr) {
  return run_sqp(pr, initial_iterate(pr, nu0, ref), opt, ref);
}

struct TwoStepRow {
  int k = 0;                // rows use e_{k-1}, e_k, e_{k+1}
  double two_step = 0.0;    // e_{k+1} / (e_k + e_{k-1})^2
  double log_delta = -std::numeric_limits<double>::infinity();  // ln(two_step / (3k+5)!^4)
  double one_step = 0.0;    // e_{k+1} / e_k
  std::optional<bool> within_probe;  // e_{k+1} <= delta_probe (3k+5)!^4 (e_k + e_{k-1})^2
};

struct TwoStepReport {
  std::vector<TwoStepRow> rows;
  double log_delta_emp = -std::numeric_limits<double>::infinity();  // max over rows
  bool converged = false;  // some error reached exactly zero
};

/// Two-step and one-step error ratios of a sequence e_0, e_1, ...
inline TwoStepReport two_step_diagnostic(const std::vector<double>& errors,
                                         std::optional<double> delta_probe = std::nullopt) {
  require(errors.size() >= 3, "two_step_diagnostic: needs at least 3 iterates");
  TwoStepReport rep;
  for (double e : errors) {
    require(e >= 0.0, "two_step_diagnostic: errors must be nonnegative");
    if (e == 0.0) rep.converged = true;
  }
  for (std::size_t k = 1; k + 1 < errors.size(); ++k) {
    TwoStepRow row;
    row.k = static_cast<int>(k);
    const double s = errors[k] + errors[k - 1];
    row.two_step = s == 0.0 ? 0.0 : errors[k + 1] / (s * s);
    row.one_step = errors[k] == 0.0 ? 0.0 : errors[k + 1] / errors[k];
    const double log_f4 = 4.0 * log_factorial(3 * row.k + 5).log();
    if (row.two_step > 0.0) {
      row.log_delta = std::log(row.two_step) - log_f4;
      rep.log_delta_emp = std::max(rep.log_delta_emp, row.log_delta);
    }
    if (delta_probe) {
      const LogReal rhs = LogReal::from_double(*delta_probe) *
                          LogReal::from_log(log_f4) * LogReal::from_double(s).pow(2.0);
      row.within_probe = log_leq(LogReal::from_double(errors[k + 1]), rhs);
    }
    rep.rows.push_back(row);
  }
  return rep;
}

inline std::vector<double> control_errors(const SqpLog& log) {
  std::vector<double> e;
  for (const SqpIterate& it : log.iterates) {
    require(it.err_nu.has_value(), "control_errors: log was run without a reference");
    e.push_back(*it.err_nu);
  }
  return e;
}

inline TwoStepReport two_step_diagnostic(const SqpLog& log,
                                         std::optional<double> delta_probe = std::nullopt) {
  return two_step_diagnostic(control_errors(log), delta_probe);
}

}  // namespace wsqp
