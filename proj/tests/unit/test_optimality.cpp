#include <doctest.h>

#include "../support.hpp"
#include "wsqp/optimality.hpp"

using namespace wsqp;

namespace {

Field basis(const Grid& g, int j) {
  Field e = Field::spatial(g);
  e[j] = 1.0;
  return e;
}

}  // namespace

TEST_CASE("vi_residual: examples") {
  const Grid g(test::line(16, 1.0, 4));
  const Field lo = Field::spatial(g, 1.0), hi = Field::spatial(g, 2.0);
  CHECK(vi_residual(g, Field::spatial(g, 1.3), Field::spatial(g), lo, hi, 1.0) == 0.0);
  Field grad = test::random_field(g, 1, true);
  for (double& v : grad.values()) v = std::abs(v);
  CHECK(vi_residual(g, lo, grad, lo, hi, 3.0) == 0.0);
  Field small = test::random_field(g, 2, true);
  small *= 0.01;
  CHECK(test::rel(vi_residual(g, Field::spatial(g, 1.5), small, lo, hi, 2.0),
                  2.0 * norm_l2_omega(g, small)) <= 1e-14);
}

TEST_CASE("compute_active_sets: examples") {
  const double lambda = 1e-3;
  const Instance inst = test::instance_1d(32, lambda, 0.0);
  const StationaryTriple st = make_stationary_triple(inst.problem, inst.nu_true);
  CHECK(st.q.max_abs() == 0.0);
  const ActiveSets as = compute_active_sets(st, 0.5 * lambda);
  for (std::size_t j = 0; j < as.active.size(); ++j) {
    CHECK(as.plus[j] == 1);
    CHECK(as.minus[j] == 0);
  }
  CHECK(compute_active_sets(st, 2.0 * lambda).count() == 0);
  CHECK_THROWS_AS(compute_active_sets(st, -1.0), InvariantError);

  const Grid& g = *inst.grid;
  Field d = Field::spatial(g);
  for (int j = 0; j < g.nodes(); ++j) d[j] = std::sin(7.0 * g.coord(j, 0));
  for (double tau : {0.0, 0.2, 0.5}) {
    const ActiveSets m = active_sets_from_multiplier(d, tau);
    for (int j = 0; j < g.nodes(); ++j) {
      CHECK(m.plus[j] == (d[j] > tau + kActiveTolerance));
      CHECK(m.minus[j] == (d[j] < -tau - kActiveTolerance));
      CHECK(m.active[j] == (m.plus[j] || m.minus[j]));
      CHECK_FALSE((m.plus[j] && m.minus[j]));
    }
  }
}

TEST_CASE("active sets are nested in tau") {
  const Grid g(test::line(64, 1.0, 4));
  const Field d = test::random_field(g, 3, true);
  const double taus[] = {0.0, 0.1, 0.3, 0.7, 1.5};
  for (int a = 0; a < 5; ++a) {
    const ActiveSets lo = active_sets_from_multiplier(d, taus[a]);
    for (int b = a; b < 5; ++b) {
      const ActiveSets hi = active_sets_from_multiplier(d, taus[b]);
      for (int j = 0; j < g.nodes(); ++j)
        if (hi.active[j]) CHECK(lo.active[j]);
    }
  }
}

TEST_CASE("project_critical_cone: examples and properties") {
  const Grid g(test::line(16, 1.0, 4));
  const ControlModel m = ControlModel::uniform(g, 1.5, 1.0, 2.0, 0.5, 1.0, 2.0);
  StationaryTriple st;
  st.nu = Field::spatial(g, 1.5);
  const Field h = test::random_field(g, 4, true);

  const ActiveSets none = active_sets_from_multiplier(Field::spatial(g), 0.5);
  const Field same = project_critical_cone(h, none, st, m);
  for (std::size_t j = 0; j < h.size(); ++j) CHECK(same[j] == h[j]);
  const ActiveSets all = active_sets_from_multiplier(Field::spatial(g, 1.0), 0.5);
  CHECK(project_critical_cone(h, all, st, m).max_abs() == 0.0);

  for (int j = 0; j < g.nodes(); ++j) st.nu[j] = g.coord(j, 0) > 0.5 ? 2.0 : 1.5;
  const Field one = project_critical_cone(Field::spatial(g, 1.0),
                                          active_sets_from_multiplier(Field::spatial(g), 0.0), st, m);
  for (int j = 0; j < g.nodes(); ++j) CHECK(one[j] == (g.coord(j, 0) > 0.5 ? 0.0 : 1.0));

  for (double tau : {0.0, 0.3}) {
    const ActiveSets as = active_sets_from_multiplier(test::random_field(g, 5, true), tau);
    const Field p1 = project_critical_cone(h, as, st, m);
    const Field p2 = project_critical_cone(p1, as, st, m);
    for (std::size_t j = 0; j < h.size(); ++j) CHECK(p1[j] == p2[j]);
    CHECK(norm_l2_omega(g, p1) <= norm_l2_omega(g, h));
  }
}

TEST_CASE("ssc sampler: data-matching bound, delegation and cone size") {
  const double lambda = 1e-3;
  const Instance inst = test::instance_1d(24, lambda, 0.0);
  const FwiProblem& pr = inst.problem;
  const Grid& g = *inst.grid;
  const StationaryTriple st = make_stationary_triple(pr, inst.nu_true);
  const SscReport r = ssc_tau_sampler(pr, st, 2.0 * lambda, 8, 1);
  REQUIRE_FALSE(r.cone_empty);
  CHECK(r.alpha_emp >= lambda * (1 - 1e-12));
  CHECK(r.pass);

  const SscReport empty = ssc_tau_sampler(pr, st, 0.5 * lambda, 4, 1);
  CHECK(empty.cone_empty);
  CHECK_FALSE(empty.pass);
  CHECK_THROWS_AS(ssc_tau_sampler(pr, st, 0.0, 0, 1), InvariantError);

  const int j = g.nodes() / 2;
  const SscReport one = ssc_on_directions(pr, st, 1.0, {basis(g, j)});
  Field e = basis(g, j);
  e *= 1.0 / norm_l2_omega(g, e);
  REQUIRE(one.values.size() == 1);
  CHECK(one.values[0] == d2_lagrangian_form(pr, e, st.nu, st.p, st.q));
}

TEST_CASE("ssc sampler: alpha is nonincreasing in the cone size") {
  const Instance inst = test::instance_1d(24, 1e-6, 0.5);
  const FwiProblem& pr = inst.problem;
  const Grid& g = *inst.grid;
  const StationaryTriple st = test::stationary_point(pr, inst.nu_true);
  std::vector<Field> dirs;
  for (int j = 0; j < g.nodes(); ++j) dirs.push_back(basis(g, j));
  double prev = std::numeric_limits<double>::infinity();
  const double dmax = st.multiplier.max_abs();
  int nonempty = 0;
  for (double tau : {1e-3 * dmax, 0.01 * dmax, 0.1 * dmax, 0.5 * dmax, 2.0 * dmax}) {
    const SscReport r = ssc_on_directions(pr, st, tau, dirs);
    if (r.cone_empty) continue;
    ++nonempty;
    CHECK(r.alpha_emp <= prev);
    prev = r.alpha_emp;
  }
  CHECK(nonempty >= 2);
}

TEST_CASE("stationary point: multiplier signs match the active bounds") {
  const Instance inst = test::instance_1d(24, 1e-6, 0.5);
  const FwiProblem& pr = inst.problem;
  const StationaryTriple st = test::stationary_point(pr, inst.nu_true);
  CHECK(st.vi_residual <= 1e-10 * (1.0 + norm_l2_omega(*inst.grid, st.multiplier) / 1e-6));
  const ActiveSets as = compute_active_sets(st, 0.0);
  CHECK(as.count() > 0);
  for (std::size_t j = 0; j < st.nu.size(); ++j) {
    if (as.plus[j]) CHECK(std::abs(st.nu[j] - pr.model.lower[j]) <= 1e-8);
    if (as.minus[j]) CHECK(std::abs(st.nu[j] - pr.model.upper[j]) <= 1e-8);
  }
}
