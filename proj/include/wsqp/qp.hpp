#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "wsqp/grid.hpp"
#include "wsqp/objective.hpp"

namespace wsqp {

/// Frozen point (nu_r, p_r, q_r) around which the optimality system is linearized.
struct ExpansionPoint {
  Field nu;
  Field p;
  Field q;
  Field dtt_p;  // anchored at t = 0
  Field dtt_q;  // anchored at t = T
};

inline ExpansionPoint make_expansion_point(const FwiProblem& pr, Field nu, Field p, Field q) {
  ExpansionPoint e{std::move(nu), std::move(p), std::move(q), {}, {}};
  e.dtt_p = pr.dtt_state(e.p);
  e.dtt_q = pr.dtt_adjoint(e.q);
  return e;
}

/// Additive perturbations of the state, adjoint and VI rows. Empty fields are zero.
struct QpPerturbation {
  Field state;
  Field adjoint;
  Field vi;
};

struct QpOptions {
  double tol = 0.0;       // absolute VI-residual tolerance; 0 selects rel_tol * (1 + ||grad(start)||)
  double rel_tol = 1e-9;
  int max_iter = 20000;
  double vi_scale = 0.0;  // 0 selects 1 / lambda
  int refresh_every = 64; // exact re-evaluation period, bounds drift of the affine updates
};

/// Point of the affine map nu -> (p, q, gradient) with the quadratic's value.
struct QpPoint {
  Field nu;
  Field p;
  Field q;
  Field gradient;
  double value = 0.0;
};

struct QpResult {
  QpPoint point;
  int iterations = 0;
  int evaluations = 0;
  int fallback_steps = 0;
  double vi_residual = 0.0;
  double tolerance = 0.0;
  bool converged = false;
  bool monotone = true;  // value never increased over accepted steps
};

/// Box-constrained quadratic obtained by linearizing the optimality system at
/// an expansion point:
///   state   nu_r D_tt p - Delta p + eta D_t p = f - (nu - nu_r) D_tt p_r + rho_st
///   adjoint nu_r D_tt q - Delta q - eta D_t q = sum a_i (p - p_i^ob) - (nu - nu_r) D_tt q_r + rho_adj
///   value   J(nu, p) - ((nu - nu_r) D_tt (p - p_r), q_r) - (rho_vi, nu - nu_r) + (rho_adj, p)
/// The gradient is -int D_tt p_r q + D_tt (p - p_r) q_r dt + lambda nu - rho_vi.
class LinearizedQp {
 public:
  LinearizedQp(const FwiProblem& pr, ExpansionPoint ref, Field lower, Field upper,
               QpPerturbation rho = {})
      : pr_(&pr), ref_(std::move(ref)), lower_(std::move(lower)), upper_(std::move(upper)),
        rho_(std::move(rho)) {
    const Grid& g = *pr.grid;
    require_spatial(ref_.nu, g, "linearized QP expansion nu");
    require_space_time(ref_.p, g, "linearized QP expansion p");
    require_space_time(ref_.q, g, "linearized QP expansion q");
    require_spatial(lower_, g, "linearized QP lower bound");
    require_spatial(upper_, g, "linearized QP upper bound");
    for (std::size_t j = 0; j < lower_.size(); ++j)
      require(lower_[j] <= upper_[j], "linearized QP: lower bound exceeds upper bound");
    if (rho_.state.size()) require_space_time(rho_.state, g, "perturbation rho_st");
    if (rho_.adjoint.size()) require_space_time(rho_.adjoint, g, "perturbation rho_adj");
    if (rho_.vi.size()) require_spatial(rho_.vi, g, "perturbation rho_vi");
  }

  const ExpansionPoint& expansion() const { return ref_; }
  const Field& lower() const { return lower_; }
  const Field& upper() const { return upper_; }
  Field project(const Field& nu) const { return project_box(nu, lower_, upper_); }

  /// State of the linearized equation at nu.
  Field state(const Field& nu) const {
    const FwiProblem& pr = *pr_;
    Field src = pr.source - multiply_levels(nu - ref_.nu, ref_.dtt_p);
    if (rho_.state.size()) src += rho_.state;
    return pr.forward(ref_.nu, src);
  }

  /// Adjoint of the linearized system given nu and its state p.
  Field adjoint(const Field& nu, const Field& p) const {
    const FwiProblem& pr = *pr_;
    Field src = pr.obs.residual(*pr.grid, p) - multiply_levels(nu - ref_.nu, ref_.dtt_q);
    if (rho_.adjoint.size()) src += rho_.adjoint;
    return pr.backward(ref_.nu, src);
  }

  Field gradient(const Field& nu, const Field& p, const Field& q) const {
    const Grid& g = *pr_->grid;
    Field gr = -1.0 * time_integral_product(g, ref_.dtt_p, q);
    gr -= time_integral_product(g, pr_->dtt_state(p - ref_.p), ref_.q);
    gr.axpy(pr_->obs.lambda, nu);
    if (rho_.vi.size()) gr -= rho_.vi;
    return gr;
  }

  double value(const Field& nu, const Field& p) const {
    const Grid& g = *pr_->grid;
    const double nn = norm_l2_omega(g, nu);
    double v = pr_->obs.misfit(g, p) + 0.5 * pr_->obs.lambda * nn * nn;
    const Field dnu = nu - ref_.nu;
    v -= inner_spacetime(g, multiply_levels(dnu, pr_->dtt_state(p - ref_.p)), ref_.q);
    if (rho_.vi.size()) v -= inner_omega(g, rho_.vi, dnu);
    if (rho_.adjoint.size()) v += inner_spacetime(g, rho_.adjoint, p);
    return v;
  }

  QpPoint evaluate(const Field& nu) const {
    QpPoint pt;
    pt.nu = nu;
    pt.p = state(nu);
    pt.q = adjoint(nu, pt.p);
    pt.gradient = gradient(nu, pt.p, pt.q);
    pt.value = value(nu, pt.p);
    return pt;
  }

  double vi_residual_at(const QpPoint& pt, double scale) const {
    return vi_residual(*pr_->grid, pt.nu, pt.gradient, lower_, upper_, scale);
  }

  /// Projected gradient with Barzilai-Borwein steps. Every trial point is
  /// followed by an exact line minimization along the feasible segment, so the
  /// value never increases. When the BB curvature is not positive the step
  /// length falls back to the VI scale (plain projected gradient).
  QpResult minimize(const Field& start, const QpOptions& opt = {}) const {
    const Grid& g = *pr_->grid;
    const double scale = opt.vi_scale > 0.0 ? opt.vi_scale : 1.0 / pr_->obs.lambda;
    QpResult res;
    QpPoint cur = evaluate(project(start));
    res.evaluations = 1;
    res.tolerance =
        opt.tol > 0.0 ? opt.tol : opt.rel_tol * (1.0 + norm_l2_omega(g, cur.gradient));
    const double s_min = 1e-12 * scale;
    const double s_max = 1e12 * scale;
    double step = scale;
    for (int it = 0;; ++it) {
      res.vi_residual = vi_residual_at(cur, scale);
      if (res.vi_residual <= res.tolerance) {
        res.converged = true;
        break;
      }
      if (it >= opt.max_iter) break;
      res.iterations = it + 1;

      Field trial_nu = cur.nu;
      trial_nu.axpy(-step, cur.gradient);
      trial_nu = project(trial_nu);
      const Field d = trial_nu - cur.nu;
      const double dd = inner_omega(g, d, d);
      if (dd == 0.0) {
        // Rounding left no movement at this step length; retry with the VI scale.
        if (step == scale) break;
        step = scale;
        ++res.fallback_steps;
        continue;
      }
      const QpPoint trial = evaluate(trial_nu);
      ++res.evaluations;
      const double gd = inner_omega(g, cur.gradient, d);
      const double dhd = inner_omega(g, trial.gradient - cur.gradient, d);
      if (gd >= 0.0) {
        // No descent along the projected direction; only rounding can cause this.
        if (step == scale) break;
        step = scale;
        ++res.fallback_steps;
        continue;
      }
      double theta = 1.0;
      if (dhd > 0.0) theta = std::min(1.0, -gd / dhd);

      QpPoint next;
      next.nu = cur.nu;
      next.nu.axpy(theta, d);
      next.nu = theta == 1.0 ? trial.nu : project(next.nu);
      if ((it + 1) % opt.refresh_every == 0) {
        next = evaluate(next.nu);
        ++res.evaluations;
      } else {
        next.p = cur.p;
        next.p.axpy(theta, trial.p - cur.p);
        next.q = cur.q;
        next.q.axpy(theta, trial.q - cur.q);
        next.gradient = cur.gradient;
        next.gradient.axpy(theta, trial.gradient - cur.gradient);
        next.value = value(next.nu, next.p);
      }
      if (next.value > cur.value + 1e-13 * (1.0 + std::abs(cur.value))) res.monotone = false;

      const double sy = theta * theta * dhd;
      if (sy > 0.0) {
        step = std::clamp(theta * theta * dd / sy, s_min, s_max);
      } else {
        step = scale;
        ++res.fallback_steps;
      }
      cur = std::move(next);
    }
    res.point = evaluate(cur.nu);
    ++res.evaluations;
    res.vi_residual = vi_residual_at(res.point, scale);
    res.converged = res.vi_residual <= res.tolerance;
    return res;
  }

 private:
  const FwiProblem* pr_;
  ExpansionPoint ref_;
  Field lower_;
  Field upper_;
  QpPerturbation rho_;
};

}  // namespace wsqp
