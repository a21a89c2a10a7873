#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wsqp/error.hpp"

namespace wsqp {

enum class Boundary : std::uint8_t { dirichlet, neumann };
enum class NodeKind : std::uint8_t { interior, dirichlet, neumann };

/// Sides of the box domain, in the order x = 0, x = L_x, y = 0, y = L_y.
enum class Side : std::uint8_t { left = 0, right = 1, bottom = 2, top = 3 };

struct GridSpec {
  int dim = 1;
  std::array<int, 2> cells{32, 1};
  std::array<double, 2> extent{1.0, 1.0};
  std::array<Boundary, 4> sides{Boundary::dirichlet, Boundary::dirichlet, Boundary::dirichlet,
                                Boundary::dirichlet};
  double horizon = 1.0;
  int steps = 2;
};

/// Uniform tensor grid on a box with a fixed number of time levels.
/// Immutable after construction.
class Grid {
 public:
  explicit Grid(const GridSpec& spec) : spec_(spec) {
    require(spec.dim == 1 || spec.dim == 2, "grid: spatial dimension must be 1 or 2");
    for (int a = 0; a < spec.dim; ++a) {
      require(spec.cells[a] >= 1, "grid: cell count must be positive");
      require(spec.extent[a] > 0.0 && std::isfinite(spec.extent[a]),
              "grid: extents must be positive");
    }
    require(spec.horizon > 0.0 && std::isfinite(spec.horizon), "grid: horizon T must be positive");
    require(spec.steps >= 2, "grid: Nt must be at least 2");
    if (spec_.dim == 1) {
      spec_.cells[1] = 0;
      spec_.extent[1] = 1.0;
      spec_.sides[2] = spec_.sides[3] = Boundary::neumann;
    }
    const int active_sides = 2 * spec_.dim;
    bool any_dirichlet = false;
    for (int s = 0; s < active_sides; ++s) any_dirichlet |= spec_.sides[s] == Boundary::dirichlet;
    require(any_dirichlet, "grid: Dirichlet set must be nonempty");

    nx_ = spec_.cells[0] + 1;
    ny_ = spec_.dim == 2 ? spec_.cells[1] + 1 : 1;
    h_[0] = spec_.extent[0] / spec_.cells[0];
    h_[1] = spec_.dim == 2 ? spec_.extent[1] / spec_.cells[1] : 1.0;
    dt_ = spec_.horizon / spec_.steps;

    kind_.assign(nodes(), NodeKind::interior);
    weight_.assign(nodes(), 0.0);
    for (int k = 0; k < ny_; ++k) {
      for (int i = 0; i < nx_; ++i) {
        const int j = index(i, k);
        bool on_boundary = false;
        bool dirichlet = false;
        auto touch = [&](Side side) {
          on_boundary = true;
          dirichlet |= spec_.sides[static_cast<int>(side)] == Boundary::dirichlet;
        };
        if (i == 0) touch(Side::left);
        if (i == nx_ - 1) touch(Side::right);
        if (spec_.dim == 2) {
          if (k == 0) touch(Side::bottom);
          if (k == ny_ - 1) touch(Side::top);
        }
        if (on_boundary) kind_[j] = dirichlet ? NodeKind::dirichlet : NodeKind::neumann;
        double w = h_[0] * ((i == 0 || i == nx_ - 1) ? 0.5 : 1.0);
        if (spec_.dim == 2) w *= h_[1] * ((k == 0 || k == ny_ - 1) ? 0.5 : 1.0);
        weight_[j] = w;
      }
    }
  }

  const GridSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nodes() const { return nx_ * ny_; }
  int index(int i, int k) const { return i + nx_ * k; }
  double h(int axis) const { return h_[axis]; }
  double h_min() const { return spec_.dim == 2 ? std::min(h_[0], h_[1]) : h_[0]; }
  double measure() const { return spec_.extent[0] * (spec_.dim == 2 ? spec_.extent[1] : 1.0); }

  int steps() const { return spec_.steps; }
  int levels() const { return spec_.steps + 1; }
  double dt() const { return dt_; }
  double horizon() const { return spec_.horizon; }
  double time(int n) const { return n == spec_.steps ? spec_.horizon : n * dt_; }
  /// Trapezoid weight of time level n.
  double time_weight(int n) const { return (n == 0 || n == spec_.steps) ? 0.5 * dt_ : dt_; }

  NodeKind kind(int j) const { return kind_[j]; }
  bool is_dirichlet(int j) const { return kind_[j] == NodeKind::dirichlet; }
  /// Lumped quadrature weight of node j; the weights sum to |Omega|.
  double weight(int j) const { return weight_[j]; }
  std::span<const double> weights() const { return weight_; }

  double coord(int j, int axis) const {
    const int i = axis == 0 ? j % nx_ : j / nx_;
    if (i == (axis == 0 ? nx_ : ny_) - 1) return spec_.extent[axis];
    return i * h_[axis];
  }

  /// Same space discretization with a different number of time steps.
  Grid with_steps(int steps) const {
    GridSpec s = spec_;
    s.steps = steps;
    return Grid(s);
  }

 private:
  GridSpec spec_;
  int nx_ = 0;
  int ny_ = 0;
  std::array<double, 2> h_{};
  double dt_ = 0.0;
  std::vector<NodeKind> kind_;
  std::vector<double> weight_;
};

enum class FieldKind : std::uint8_t { spatial, space_time };

/// Nodal values on a grid, either one spatial level or all time levels 0..Nt.
/// Storage is level-major: value(n, j) = data[n * nodes + j].
class Field {
 public:
  Field() = default;
  Field(FieldKind kind, int levels, int nodes, double value = 0.0)
      : kind_(kind), levels_(levels), nodes_(nodes),
        data_(static_cast<std::size_t>(levels) * nodes, value) {}

  static Field spatial(const Grid& g, double value = 0.0) {
    return Field(FieldKind::spatial, 1, g.nodes(), value);
  }
  static Field space_time(const Grid& g, double value = 0.0) {
    return Field(FieldKind::space_time, g.levels(), g.nodes(), value);
  }

  FieldKind kind() const { return kind_; }
  bool is_spatial() const { return kind_ == FieldKind::spatial; }
  int levels() const { return levels_; }
  int nodes() const { return nodes_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int n, int j) { return data_[static_cast<std::size_t>(n) * nodes_ + j]; }
  double operator()(int n, int j) const { return data_[static_cast<std::size_t>(n) * nodes_ + j]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> level(int n) {
    return {data_.data() + static_cast<std::size_t>(n) * nodes_, static_cast<std::size_t>(nodes_)};
  }
  std::span<const double> level(int n) const {
    return {data_.data() + static_cast<std::size_t>(n) * nodes_, static_cast<std::size_t>(nodes_)};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Field& o) const {
    return kind_ == o.kind_ && levels_ == o.levels_ && nodes_ == o.nodes_;
  }
  bool fits(const Grid& g) const {
    return nodes_ == g.nodes() && (is_spatial() ? levels_ == 1 : levels_ == g.levels());
  }

  Field& operator+=(const Field& o) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  /// this += s * o
  Field& axpy(double s, const Field& o) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }
  friend Field operator-(Field a) { return a *= -1.0; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void check_shape(const Field& o) const {
    require(same_shape(o), "field: shape mismatch in arithmetic");
  }

  FieldKind kind_ = FieldKind::spatial;
  int levels_ = 0;
  int nodes_ = 0;
  std::vector<double> data_;
};

inline void require_spatial(const Field& u, const Grid& g, const char* who) {
  require(u.is_spatial() && u.fits(g), std::string(who) + ": expected a spatial field on the grid");
}
inline void require_space_time(const Field& u, const Grid& g, const char* who) {
  require(!u.is_spatial() && u.fits(g),
          std::string(who) + ": expected a space-time field on the grid");
}

/// Square slowness with pointwise bounds and damping.
struct ControlModel {
  Field nu;
  Field lower;
  Field upper;
  Field damping;
  double nu_min = 1.0;
  double nu_max = 1.0;

  static ControlModel uniform(const Grid& g, double nu, double lower, double upper, double damping,
                              double nu_min, double nu_max) {
    ControlModel m{Field::spatial(g, nu), Field::spatial(g, lower), Field::spatial(g, upper),
                   Field::spatial(g, damping), nu_min, nu_max};
    m.validate(g);
    return m;
  }

  void validate(const Grid& g) const {
    require_spatial(lower, g, "control model lower bound");
    require_spatial(upper, g, "control model upper bound");
    require_spatial(damping, g, "control model damping");
    if (nu.size() != 0) require_spatial(nu, g, "control model nu");
    require(nu_min > 0.0 && nu_min <= nu_max, "control model: need 0 < nu_min <= nu_max");
    for (int j = 0; j < g.nodes(); ++j) {
      require(nu_min <= lower[j] && lower[j] <= upper[j] && upper[j] <= nu_max,
              "control model: need nu_min <= nu_lower <= nu_upper <= nu_max at every node");
      require(damping[j] >= 0.0, "control model: damping eta must be nonnegative");
    }
  }
};

// ---------------------------------------------------------------------------
// Inner products and norms

inline double inner_omega(const Grid& g, const Field& u, const Field& v) {
  require_spatial(u, g, "inner_omega");
  require_spatial(v, g, "inner_omega");
  double s = 0.0;
  for (int j = 0; j < g.nodes(); ++j) s += g.weight(j) * u[j] * v[j];
  return s;
}

inline double norm_l2_omega(const Grid& g, const Field& u) {
  require_spatial(u, g, "norm_l2_omega");
  double s = 0.0;
  for (int j = 0; j < g.nodes(); ++j) s += g.weight(j) * u[j] * u[j];
  return std::sqrt(s);
}

inline double norm_linf_omega(const Grid& g, const Field& u) {
  require_spatial(u, g, "norm_linf_omega");
  return u.max_abs();
}

inline double level_norm_l2(const Grid& g, const Field& u, int n) {
  double s = 0.0;
  for (int j = 0; j < g.nodes(); ++j) s += g.weight(j) * u(n, j) * u(n, j);
  return std::sqrt(s);
}

inline double level_norm_linf(const Field& u, int n) {
  double m = 0.0;
  for (double v : u.level(n)) m = std::max(m, std::abs(v));
  return m;
}

/// Space-time inner product: trapezoid in time, lumped weights in space.
inline double inner_spacetime(const Grid& g, const Field& u, const Field& v) {
  require_space_time(u, g, "inner_spacetime");
  require_space_time(v, g, "inner_spacetime");
  double total = 0.0;
  for (int n = 0; n < g.levels(); ++n) {
    double s = 0.0;
    for (int j = 0; j < g.nodes(); ++j) s += g.weight(j) * u(n, j) * v(n, j);
    total += g.time_weight(n) * s;
  }
  return total;
}

/// Central difference in time, one-sided at both ends.
inline Field time_derivative(const Grid& g, const Field& u) {
  require_space_time(u, g, "time_derivative");
  Field d = Field::space_time(g);
  const int nt = g.steps();
  const double dt = g.dt();
  for (int j = 0; j < g.nodes(); ++j) {
    d(0, j) = (u(1, j) - u(0, j)) / dt;
    d(nt, j) = (u(nt, j) - u(nt - 1, j)) / dt;
    for (int n = 1; n < nt; ++n) d(n, j) = (u(n + 1, j) - u(n - 1, j)) / (2.0 * dt);
  }
  return d;
}

enum class SpaceTimeNorm : std::uint8_t { L2t_L2x, L2t_LInfx, L1t_L2x, H1t_L2x };

inline double norm_spacetime(const Grid& g, const Field& u, SpaceTimeNorm kind) {
  require_space_time(u, g, "norm_spacetime");
  auto l2l2 = [&](const Field& v) {
    double s = 0.0;
    for (int n = 0; n < g.levels(); ++n) {
      const double l = level_norm_l2(g, v, n);
      s += g.time_weight(n) * l * l;
    }
    return std::sqrt(s);
  };
  switch (kind) {
    case SpaceTimeNorm::L2t_L2x:
      return l2l2(u);
    case SpaceTimeNorm::L2t_LInfx: {
      double s = 0.0;
      for (int n = 0; n < g.levels(); ++n) {
        const double l = level_norm_linf(u, n);
        s += g.time_weight(n) * l * l;
      }
      return std::sqrt(s);
    }
    case SpaceTimeNorm::L1t_L2x: {
      double s = 0.0;
      for (int n = 0; n < g.levels(); ++n) s += g.time_weight(n) * level_norm_l2(g, u, n);
      return s;
    }
    case SpaceTimeNorm::H1t_L2x:
      return l2l2(u) + l2l2(time_derivative(g, u));
  }
  return 0.0;
}

/// Pointwise clamp into [lower, upper].
inline Field project_box(const Field& u, const Field& lower, const Field& upper) {
  require(u.is_spatial() && u.same_shape(lower) && u.same_shape(upper),
          "project_box: field and bounds must share a spatial shape");
  Field r = u;
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = std::min(std::max(r[j], lower[j]), upper[j]);
  return r;
}

inline Field project_box(const Field& u, const ControlModel& m) {
  return project_box(u, m.lower, m.upper);
}

/// Projection residual ||nu - P(nu - scale * grad)||; zero iff the discrete
/// variational inequality (grad, v - nu) >= 0 holds for all admissible v.
inline double vi_residual(const Grid& g, const Field& nu, const Field& grad, const Field& lower,
                          const Field& upper, double scale) {
  require(scale > 0.0, "vi_residual: scale must be positive");
  Field trial = nu;
  trial.axpy(-scale, grad);
  return norm_l2_omega(g, nu - project_box(trial, lower, upper));
}

// ---------------------------------------------------------------------------
// Pointwise helpers between spatial and space-time fields

/// out(n, j) = s(j) * u(n, j)
inline Field multiply_levels(const Field& s, const Field& u) {
  require(s.is_spatial() && !u.is_spatial() && s.nodes() == u.nodes(),
          "multiply_levels: need a spatial and a space-time field on one grid");
  Field r = u;
  for (int n = 0; n < r.levels(); ++n)
    for (int j = 0; j < r.nodes(); ++j) r(n, j) *= s[j];
  return r;
}

/// Trapezoid time integral of the pointwise product: out(j) = sum_n w_n u(n,j) v(n,j).
inline Field time_integral_product(const Grid& g, const Field& u, const Field& v) {
  require_space_time(u, g, "time_integral_product");
  require_space_time(v, g, "time_integral_product");
  Field r = Field::spatial(g);
  for (int n = 0; n < g.levels(); ++n) {
    const double w = g.time_weight(n);
    for (int j = 0; j < g.nodes(); ++j) r[j] += w * u(n, j) * v(n, j);
  }
  return r;
}

}  // namespace wsqp
