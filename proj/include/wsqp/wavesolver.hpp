#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "wsqp/error.hpp"
#include "wsqp/grid.hpp"

namespace wsqp {

/// Which end of [0, T] carries the homogeneous data.
enum class TimeAnchor : std::uint8_t { initial, terminal };

struct TimeStepChoice {
  double dt_max = 0.0;  // safety * h_min * sqrt(nu_min / N)
  int steps = 0;        // smallest Nt with T / Nt <= dt_max
  double dt = 0.0;      // T / steps
};

inline TimeStepChoice cfl_timestep(const Grid& g, double nu_min, double safety) {
  require(nu_min > 0.0, "cfl_timestep: nu_min must be positive");
  require(safety > 0.0 && safety <= 1.0, "cfl_timestep: safety must lie in (0, 1]");
  TimeStepChoice c;
  c.dt_max = safety * g.h_min() * std::sqrt(nu_min / g.dim());
  c.steps = std::max(2, static_cast<int>(std::ceil(g.horizon() / c.dt_max - 1e-12)));
  c.dt = g.horizon() / c.steps;
  if (c.dt > c.dt_max) {
    ++c.steps;
    c.dt = g.horizon() / c.steps;
  }
  return c;
}

/// Ratio of the grid's dt to the stability limit h_min * sqrt(nu_min / N).
inline double cfl_ratio(const Grid& g, double nu_min) {
  return g.dt() / (g.h_min() * std::sqrt(nu_min / g.dim()));
}

/// out = -Delta_h u on free nodes, 0 on Dirichlet nodes. Neumann sides use a
/// mirrored ghost value, so W * (-Delta_h) is symmetric on the free nodes.
inline void apply_neg_laplacian(const Grid& g, std::span<const double> u, std::span<double> out) {
  const int nx = g.nx();
  const int ny = g.ny();
  const double ihx2 = 1.0 / (g.h(0) * g.h(0));
  const double ihy2 = g.dim() == 2 ? 1.0 / (g.h(1) * g.h(1)) : 0.0;
  for (int k = 0; k < ny; ++k) {
    for (int i = 0; i < nx; ++i) {
      const int j = g.index(i, k);
      if (g.is_dirichlet(j)) {
        out[j] = 0.0;
        continue;
      }
      const double c = u[j];
      const double l = i > 0 ? u[j - 1] : u[j + 1];
      const double r = i < nx - 1 ? u[j + 1] : u[j - 1];
      double v = (2.0 * c - l - r) * ihx2;
      if (g.dim() == 2) {
        const double b = k > 0 ? u[j - nx] : u[j + nx];
        const double t = k < ny - 1 ? u[j + nx] : u[j - nx];
        v += (2.0 * c - b - t) * ihy2;
      }
      out[j] = v;
    }
  }
}

/// Reverse the order of time levels.
inline Field reverse_time(const Field& u) {
  Field r = u;
  const int last = u.levels() - 1;
  for (int n = 0; n <= last; ++n) {
    auto dst = r.level(n);
    auto src = u.level(last - n);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return r;
}

namespace detail {

/// num / den with the convention 0 / 0 = 0.
inline double ratio_or_zero(double num, double den) { return num == 0.0 ? 0.0 : num / den; }

// Second difference with the even-reflection ghost at t = 0 and a one-sided
// stencil at t = T. Matches the scheme rows exactly.
inline Field second_difference_initial(const Grid& g, const Field& u) {
  Field d = Field::space_time(g);
  const int nt = g.steps();
  const double idt2 = 1.0 / (g.dt() * g.dt());
  for (int j = 0; j < g.nodes(); ++j) {
    d(0, j) = 2.0 * (u(1, j) - u(0, j)) * idt2;
    for (int n = 1; n < nt; ++n) d(n, j) = (u(n + 1, j) - 2.0 * u(n, j) + u(n - 1, j)) * idt2;
    d(nt, j) = (u(nt, j) - 2.0 * u(nt - 1, j) + u(nt - 2, j)) * idt2;
  }
  return d;
}

// Scheme rows for the initial-anchored problem. Row 0 uses the even ghost for
// the second difference and a forward difference for the damping term.
inline Field wave_operator_initial(const Grid& g, const Field& nu, const Field& eta, const Field& u) {
  Field out = Field::space_time(g);
  const Field dtt = second_difference_initial(g, u);
  const int nt = g.steps();
  const double dt = g.dt();
  std::vector<double> lap(g.nodes());
  for (int n = 0; n <= nt; ++n) {
    apply_neg_laplacian(g, u.level(n), lap);
    for (int j = 0; j < g.nodes(); ++j) {
      if (g.is_dirichlet(j)) continue;
      double ut;
      if (n == 0)
        ut = (u(1, j) - u(0, j)) / dt;
      else if (n == nt)
        ut = (u(nt, j) - u(nt - 1, j)) / dt;
      else
        ut = (u(n + 1, j) - u(n - 1, j)) / (2.0 * dt);
      out(n, j) = nu[j] * dtt(n, j) + lap[j] + eta[j] * ut;
    }
  }
  return out;
}

// Leapfrog with time-centred damping. Row n (n >= 1):
//   nu (u+ - 2u + u-)/dt^2 + A u + eta (u+ - u-)/(2 dt) = g^n
// Row 0 with u^0 = 0:  (2 nu/dt^2 + eta/dt) u^1 = g^0.
// The start row makes the scheme's transpose, under trapezoid weights, equal
// to the same scheme run backwards in time.
inline Field leapfrog(const Grid& g, const Field& nu, const Field& eta, const Field& src) {
  Field u = Field::space_time(g);
  const int nt = g.steps();
  const int nn = g.nodes();
  const double dt = g.dt();
  const double idt2 = 1.0 / (dt * dt);
  std::vector<double> a(nn), b(nn), lap(nn);
  for (int j = 0; j < nn; ++j) {
    a[j] = nu[j] * idt2 + 0.5 * eta[j] / dt;
    b[j] = nu[j] * idt2 - 0.5 * eta[j] / dt;
  }
  for (int j = 0; j < nn; ++j)
    if (!g.is_dirichlet(j)) u(1, j) = src(0, j) / (2.0 * a[j]);
  for (int n = 1; n < nt; ++n) {
    apply_neg_laplacian(g, u.level(n), lap);
    for (int j = 0; j < nn; ++j) {
      if (g.is_dirichlet(j)) continue;
      const double rhs =
          src(n, j) - lap[j] + 2.0 * nu[j] * idt2 * u(n, j) - b[j] * u(n - 1, j);
      u(n + 1, j) = rhs / a[j];
    }
  }
  return u;
}

}  // namespace detail

/// Discrete second time derivative matching the scheme. The anchored end uses
/// the even-reflection ghost; the other end a one-sided stencil.
inline Field second_difference(const Grid& g, const Field& u, TimeAnchor anchor) {
  require_space_time(u, g, "second_difference");
  if (anchor == TimeAnchor::initial) return detail::second_difference_initial(g, u);
  return reverse_time(detail::second_difference_initial(g, reverse_time(u)));
}

/// Applies the scheme's left-hand side, nu D_tt u - Delta_h u + sign eta D_t u,
/// at every level. For the initial anchor rows 0..Nt-1 are the scheme's own
/// equations; for the terminal anchor rows 1..Nt.
inline Field apply_wave_operator(const Grid& g, const Field& nu, const Field& eta, const Field& u,
                                 TimeAnchor anchor) {
  require_spatial(nu, g, "apply_wave_operator");
  require_spatial(eta, g, "apply_wave_operator");
  require_space_time(u, g, "apply_wave_operator");
  if (anchor == TimeAnchor::initial) return detail::wave_operator_initial(g, nu, eta, u);
  return reverse_time(detail::wave_operator_initial(g, nu, eta, reverse_time(u)));
}

struct WaveProblem {
  const Grid* grid = nullptr;
  Field coefficient;  // nu
  Field damping;      // eta
  Field source;       // g on the original time axis
  double nu_min = 0.0;
  int damping_sign = +1;  // -1 for the adjoint equation
  TimeAnchor anchor = TimeAnchor::initial;

  static WaveProblem forward(const Grid& g, Field nu, Field eta, Field src, double nu_min) {
    return {&g, std::move(nu), std::move(eta), std::move(src), nu_min, +1, TimeAnchor::initial};
  }
  static WaveProblem backward(const Grid& g, Field nu, Field eta, Field src, double nu_min) {
    return {&g, std::move(nu), std::move(eta), std::move(src), nu_min, -1, TimeAnchor::terminal};
  }
};

struct WaveSolution {
  Field u;
  Field du;   // central time difference, one-sided at both ends
  Field ddu;  // scheme second difference, anchored at the homogeneous end
  double cfl_ratio = 0.0;
  double residual = 0.0;           // L2(L2) norm of the scheme rows minus the source
  double relative_residual = 0.0;  // residual / ||g||_{L2 L2}, 0 when g = 0
};

/// Solves the problem without the diagnostics fields. Used in inner loops.
inline Field solve_field(const WaveProblem& p) {
  require(p.grid != nullptr, "wavesolver: problem has no grid");
  const Grid& g = *p.grid;
  require_spatial(p.coefficient, g, "wavesolver coefficient");
  require_spatial(p.damping, g, "wavesolver damping");
  require_space_time(p.source, g, "wavesolver source");
  require(p.nu_min > 0.0, "wavesolver: nu_min must be positive");
  require((p.damping_sign == +1 && p.anchor == TimeAnchor::initial) ||
              (p.damping_sign == -1 && p.anchor == TimeAnchor::terminal),
          "wavesolver: backward problems pair with terminal data, forward with initial data");
  double cmin = p.coefficient[0];
  for (std::size_t j = 0; j < p.coefficient.size(); ++j) {
    cmin = std::min(cmin, p.coefficient[j]);
    require(p.damping[j] >= 0.0, "wavesolver: damping eta must be nonnegative");
  }
  require(cmin >= p.nu_min, "wavesolver: coefficient nu below nu_min");
  require(cfl_ratio(g, cmin) <= 1.0 + 1e-12,
          "wavesolver: CFL violated, dt exceeds h_min*sqrt(nu_min/N); increase Nt");
  if (p.anchor == TimeAnchor::initial) return detail::leapfrog(g, p.coefficient, p.damping, p.source);
  return reverse_time(detail::leapfrog(g, p.coefficient, p.damping, reverse_time(p.source)));
}

inline WaveSolution solve(const WaveProblem& p) {
  const Grid& g = *p.grid;
  WaveSolution s;
  s.u = solve_field(p);
  s.du = time_derivative(g, s.u);
  s.ddu = second_difference(g, s.u, p.anchor);
  double cmin = p.coefficient[0];
  for (std::size_t j = 0; j < p.coefficient.size(); ++j) cmin = std::min(cmin, p.coefficient[j]);
  s.cfl_ratio = cfl_ratio(g, cmin);

  const Field rows = apply_wave_operator(g, p.coefficient, p.damping, s.u, p.anchor);
  const int skip = p.anchor == TimeAnchor::initial ? g.steps() : 0;
  double res = 0.0;
  double src = 0.0;
  for (int n = 0; n < g.levels(); ++n) {
    if (n == skip) continue;
    for (int j = 0; j < g.nodes(); ++j) {
      if (g.is_dirichlet(j)) continue;
      const double w = g.time_weight(n) * g.weight(j);
      const double r = rows(n, j) - p.source(n, j);
      res += w * r * r;
      src += w * p.source(n, j) * p.source(n, j);
    }
  }
  s.residual = std::sqrt(res);
  s.relative_residual = detail::ratio_or_zero(s.residual, std::sqrt(src));
  return s;
}

/// State of the linearized equation: coefficient nu_bar, source -h * D_tt p_bar.
inline WaveSolution solve_linearized(const Grid& g, const Field& nu_bar, const Field& h,
                                     const Field& pbar_tt, const Field& eta, double nu_min) {
  require_spatial(h, g, "solve_linearized direction");
  return solve(WaveProblem::forward(g, nu_bar, eta, -1.0 * multiply_levels(h, pbar_tt), nu_min));
}

/// c = nu_min^{-1} max(sqrt(nu_max), 1) / min(sqrt(nu_min), 1).
inline double stability_constant(double nu_min, double nu_max) {
  require(0.0 < nu_min && nu_min <= nu_max, "stability_constant: need 0 < nu_min <= nu_max");
  return std::max(std::sqrt(nu_max), 1.0) / std::min(std::sqrt(nu_min), 1.0) / nu_min;
}

struct EnergyBoundReport {
  double state_ratio = 0.0;     // max_t ||p(t)|| / (c ||G||_{L1 L2}),  G(t) = int_0^t g
  double velocity_ratio = 0.0;  // max_t ||D_t p(t)|| / (c ||g||_{L1 L2})
  bool pass = false;
};

struct SupBoundReport {
  double ratio = 0.0;  // max |p| / (||g||_{L1 L2} + ||D_t g||_{L1 L2})
};

inline EnergyBoundReport check_energy_bound(const Grid& g, const WaveSolution& sol, const Field& src,
                                            double c, double slack) {
  require_space_time(src, g, "check_energy_bound");
  Field cumulative = Field::space_time(g);
  for (int n = 1; n < g.levels(); ++n)
    for (int j = 0; j < g.nodes(); ++j)
      cumulative(n, j) = cumulative(n - 1, j) + 0.5 * g.dt() * (src(n - 1, j) + src(n, j));
  double pmax = 0.0;
  double vmax = 0.0;
  for (int n = 0; n < g.levels(); ++n) {
    pmax = std::max(pmax, level_norm_l2(g, sol.u, n));
    vmax = std::max(vmax, level_norm_l2(g, sol.du, n));
  }
  EnergyBoundReport r;
  r.state_ratio =
      detail::ratio_or_zero(pmax, c * norm_spacetime(g, cumulative, SpaceTimeNorm::L1t_L2x));
  r.velocity_ratio = detail::ratio_or_zero(vmax, c * norm_spacetime(g, src, SpaceTimeNorm::L1t_L2x));
  r.pass = r.state_ratio <= slack && r.velocity_ratio <= slack;
  return r;
}

inline SupBoundReport check_sup_bound(const Grid& g, const WaveSolution& sol, const Field& src) {
  require_space_time(src, g, "check_sup_bound");
  const double den = norm_spacetime(g, src, SpaceTimeNorm::L1t_L2x) +
                     norm_spacetime(g, time_derivative(g, src), SpaceTimeNorm::L1t_L2x);
  return {detail::ratio_or_zero(sol.u.max_abs(), den)};
}

}  // namespace wsqp
