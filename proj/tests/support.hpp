#pragma once

#include <cmath>
#include <cstdint>

#include "wsqp/grid.hpp"
#include "wsqp/optimality.hpp"
#include "wsqp/sqp.hpp"
#include "wsqp/random.hpp"
#include "wsqp/synthetic.hpp"

namespace wsqp::test {

inline GridSpec line(int cells, double horizon, int steps, Boundary left = Boundary::dirichlet,
                     Boundary right = Boundary::neumann) {
  GridSpec s;
  s.dim = 1;
  s.cells = {cells, 1};
  s.extent = {1.0, 1.0};
  s.sides = {left, right, Boundary::neumann, Boundary::neumann};
  s.horizon = horizon;
  s.steps = steps;
  return s;
}

inline GridSpec square(int cells, double horizon, int steps, Boundary all = Boundary::dirichlet) {
  GridSpec s;
  s.dim = 2;
  s.cells = {cells, cells};
  s.extent = {1.0, 1.0};
  s.sides = {all, all, all, all};
  s.horizon = horizon;
  s.steps = steps;
  return s;
}

/// Smooth random space-time field, zero on Dirichlet nodes and at t = 0.
inline Field smooth_source(const Grid& g, std::uint64_t seed) {
  Rng rng(seed);
  const double a = rng.normal(), b = rng.normal(), f = rng.uniform(1.0, 3.0);
  const double cx = rng.uniform(0.2, 0.8), cy = rng.uniform(0.2, 0.8);
  Field u = Field::space_time(g);
  for (int n = 0; n < g.levels(); ++n) {
    const double t = g.time(n);
    for (int j = 0; j < g.nodes(); ++j) {
      if (g.is_dirichlet(j)) continue;
      double r2 = (g.coord(j, 0) - cx) * (g.coord(j, 0) - cx);
      if (g.dim() == 2) r2 += (g.coord(j, 1) - cy) * (g.coord(j, 1) - cy);
      u(n, j) = (a * std::sin(f * t) + b * t * t) * std::exp(-r2 / 0.02);
    }
  }
  return u;
}

inline Field random_field(const Grid& g, std::uint64_t seed, bool spatial) {
  Rng rng(seed);
  Field u = spatial ? Field::spatial(g) : Field::space_time(g);
  rng.fill_normal(u);
  return u;
}

/// 1D instance with data generated by lower + amplitude * gaussian at x = 0.7.
inline Instance instance_1d(int cells, double lambda, double amplitude, double horizon = 2.0) {
  SyntheticSpec s = default_spec_1d(cells);
  s.grid.horizon = horizon;
  s.lambda = lambda;
  s.target.bump_amplitude = amplitude;
  return build_instance(s);
}

/// Stationary point reached by SQP from the data-generating control.
inline StationaryTriple stationary_point(const FwiProblem& pr, const Field& start) {
  SqpOptions o;
  o.tol = 1e-14;
  o.max_k = 30;
  o.qp.rel_tol = 1e-13;
  return make_stationary_triple(pr, run_sqp(pr, start, o).iterates.back().nu);
}

inline double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

}  // namespace wsqp::test
