#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/objective.hpp"
#include "wsqp/theory.hpp"
#include "wsqp/wavesolver.hpp"

namespace wsqp {

/// f(t, x) = amplitude * bump(t) * sin(2 pi frequency t) * exp(-|x - center|^2 / (2 width^2)).
/// The bump makes every time derivative vanish at t = 0.
struct SourceSpec {
  double amplitude = 1.0;
  double frequency = 2.0;
  int bump_m = 2;
  double bump_scale = 0.3;
  std::array<double, 2> center{0.3, 0.5};
  double width = 0.1;
};

/// Receiver weights a_i(t, x) = exp(-|x - x_i|^2 / (2 width^2)) * bump(T - t).
/// No positions means a single channel observing the whole domain.
struct ReceiverSpec {
  std::vector<std::array<double, 2>> positions;
  double width = 0.05;
  int taper_m = 2;
  double taper_scale = 0.3;
};

/// Control generating the data: nu_lower + amplitude * gaussian bump, clipped to the box.
struct TargetSpec {
  double bump_amplitude = 0.0;
  std::array<double, 2> center{0.7, 0.5};
  double width = 0.1;
};

struct SyntheticSpec {
  GridSpec grid;
  double safety = 0.9;  // used when grid.steps == 0
  double lower = 1.0;
  double upper = 2.0;
  double damping = 0.5;
  double nu_min = 1.0;
  double nu_max = 2.0;
  double lambda = 1e-4;
  SourceSpec source;
  ReceiverSpec receivers;
  TargetSpec target;
};

/// Owns the grid so that copies of the problem stay valid.
struct Instance {
  std::shared_ptr<const Grid> grid;
  FwiProblem problem;
  Field nu_true;
};

inline double gaussian(const Grid& g, int j, const std::array<double, 2>& c, double w) {
  double r2 = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const double d = g.coord(j, a) - c[a];
    r2 += d * d;
  }
  return std::exp(-r2 / (2.0 * w * w));
}

inline Field make_source(const Grid& g, const SourceSpec& s) {
  const SmoothBump bump(s.bump_m, s.bump_scale);
  Field f = Field::space_time(g);
  for (int n = 0; n < g.levels(); ++n) {
    const double t = g.time(n);
    const double tt = s.amplitude * bump.value(t) * std::sin(2.0 * std::numbers::pi * s.frequency * t);
    for (int j = 0; j < g.nodes(); ++j)
      if (!g.is_dirichlet(j)) f(n, j) = tt * gaussian(g, j, s.center, s.width);
  }
  return f;
}

inline std::vector<Field> make_receiver_weights(const Grid& g, const ReceiverSpec& r) {
  const SmoothBump taper(r.taper_m, r.taper_scale);
  std::vector<Field> out;
  auto build = [&](auto spatial) {
    Field a = Field::space_time(g);
    for (int n = 0; n < g.levels(); ++n) {
      const double w = taper.value(g.horizon() - g.time(n));
      for (int j = 0; j < g.nodes(); ++j) a(n, j) = w * spatial(j);
    }
    out.push_back(std::move(a));
  };
  if (r.positions.empty()) {
    build([](int) { return 1.0; });
  } else {
    for (const auto& x : r.positions) build([&](int j) { return gaussian(g, j, x, r.width); });
  }
  return out;
}

inline Field make_target(const Grid& g, const SyntheticSpec& s) {
  Field nu = Field::spatial(g, s.lower);
  for (int j = 0; j < g.nodes(); ++j)
    nu[j] = std::min(s.upper, s.lower + s.target.bump_amplitude *
                                            gaussian(g, j, s.target.center, s.target.width));
  return nu;
}

/// Grid with Nt from the CFL rule when grid.steps == 0.
inline GridSpec resolve_grid_spec(const SyntheticSpec& s) {
  GridSpec gs = s.grid;
  if (gs.steps == 0) {
    gs.steps = 2;
    const Grid probe(gs);
    gs.steps = cfl_timestep(probe, s.nu_min, s.safety).steps;
  }
  return gs;
}

/// Builds the problem with data p_i^ob = p(nu_true) on every channel.
inline Instance build_instance(const SyntheticSpec& s) {
  Instance inst;
  inst.grid = std::make_shared<const Grid>(resolve_grid_spec(s));
  const Grid& g = *inst.grid;
  FwiProblem& pr = inst.problem;
  pr.grid = inst.grid.get();
  pr.model = ControlModel::uniform(g, s.lower, s.lower, s.upper, s.damping, s.nu_min, s.nu_max);
  pr.source = make_source(g, s.source);
  inst.nu_true = make_target(g, s);
  const Field data = pr.forward(inst.nu_true, pr.source);
  for (Field& a : make_receiver_weights(g, s.receivers)) pr.obs.channels.push_back({std::move(a), data});
  pr.obs.lambda = s.lambda;
  pr.validate();
  return inst;
}

/// Default 1D instance: Dirichlet at x = 0, Neumann at x = 1, full aperture.
inline SyntheticSpec default_spec_1d(int cells = 32) {
  SyntheticSpec s;
  s.grid.dim = 1;
  s.grid.cells = {cells, 1};
  s.grid.extent = {1.0, 1.0};
  s.grid.sides = {Boundary::dirichlet, Boundary::neumann, Boundary::neumann, Boundary::neumann};
  s.grid.horizon = 2.0;
  s.grid.steps = 0;
  return s;
}

}  // namespace wsqp
