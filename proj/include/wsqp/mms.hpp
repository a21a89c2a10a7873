#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/wavesolver.hpp"

namespace wsqp {

/// Refinement level of the manufactured-solution study on (0, 1) with
/// Dirichlet ends, nu = eta = 1, T = 1 and exact solution p = t^2 sin(pi x).
struct MmsLevel {
  int cells = 0;
  int steps = 0;
  double error = 0.0;  // ||p_h - p||_{L2 L2}
  double order = 0.0;  // log2 of the error ratio to the previous level; 0 on the first
  double relative_residual = 0.0;
};

inline double mms_exact(double t, double x) { return t * t * std::sin(std::numbers::pi * x); }

/// nu p_tt - p_xx + eta p_t for the exact solution.
inline double mms_forcing(double t, double x, double nu, double eta) {
  const double pi = std::numbers::pi;
  return (2.0 * nu + pi * pi * t * t + 2.0 * eta * t) * std::sin(pi * x);
}

inline MmsLevel mms_level(int cells, int steps) {
  GridSpec gs;
  gs.dim = 1;
  gs.cells = {cells, 1};
  gs.extent = {1.0, 1.0};
  gs.sides = {Boundary::dirichlet, Boundary::dirichlet, Boundary::neumann, Boundary::neumann};
  gs.horizon = 1.0;
  gs.steps = steps;
  const Grid g(gs);
  Field src = Field::space_time(g);
  Field exact = Field::space_time(g);
  for (int n = 0; n < g.levels(); ++n) {
    for (int j = 0; j < g.nodes(); ++j) {
      const double t = g.time(n), x = g.coord(j, 0);
      exact(n, j) = g.is_dirichlet(j) ? 0.0 : mms_exact(t, x);
      if (!g.is_dirichlet(j)) src(n, j) = mms_forcing(t, x, 1.0, 1.0);
    }
  }
  const WaveSolution s =
      solve(WaveProblem::forward(g, Field::spatial(g, 1.0), Field::spatial(g, 1.0), src, 1.0));
  MmsLevel lv;
  lv.cells = cells;
  lv.steps = steps;
  lv.error = norm_spacetime(g, s.u - exact, SpaceTimeNorm::L2t_L2x);
  lv.relative_residual = s.relative_residual;
  return lv;
}

/// Runs every level with steps = round(steps_per_cell * cells).
inline std::vector<MmsLevel> mms_study(const std::vector<int>& cells, double steps_per_cell) {
  require(!cells.empty(), "mms_study: needs at least one level");
  require(steps_per_cell > 0.0, "mms_study: steps_per_cell must be positive");
  std::vector<MmsLevel> out;
  for (int c : cells) {
    require(c >= 2, "mms_study: need at least 2 cells per level");
    MmsLevel lv = mms_level(c, static_cast<int>(std::lround(steps_per_cell * c)));
    if (!out.empty()) {
      const MmsLevel& prev = out.back();
      lv.order = std::log(prev.error / lv.error) / std::log(static_cast<double>(c) / prev.cells);
    }
    out.push_back(lv);
  }
  return out;
}

}  // namespace wsqp
