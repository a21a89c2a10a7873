// Acceptance checks A1..A10. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wsqp/lab.hpp"
#include "wsqp/mms.hpp"
#include "wsqp/run.hpp"

using namespace wsqp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig bundled(const char* name) {
  return load_config(read_json_file(std::string(WSQP_SOURCE_DIR) + "/configs/" + name + ".json"));
}

Field random_space_time(const Grid& g, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  Field u = Field::space_time(g);
  rng.fill_normal(u);
  return u;
}

Outcome a1_mms() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<MmsLevel> lv = mms_study({32, 64, 128}, 2.0);
  const double secs = seconds_since(t0);
  bool ok = lv.size() == 3 && secs < 10.0;
  std::string d;
  for (std::size_t i = 1; i < lv.size(); ++i) {
    ok &= lv[i].order >= 1.8 && lv[i].order <= 2.2;
    d += "order " + fmt("%.4f", lv[i].order) + ", ";
  }
  return {ok, d + "runtime " + fmt("%.2f", secs) + " s"};
}

Outcome a2_adjoint() {
  GridSpec s;
  s.dim = 2;
  s.cells = {12, 12};
  s.sides = {Boundary::dirichlet, Boundary::neumann, Boundary::neumann, Boundary::dirichlet};
  s.horizon = 1.0;
  s.steps = 48;
  const Grid g(s);
  Field nu = Field::spatial(g), eta = Field::spatial(g);
  for (int j = 0; j < g.nodes(); ++j) {
    nu[j] = 1.0 + g.coord(j, 0) * g.coord(j, 1);
    eta[j] = 0.2 + 0.3 * g.coord(j, 0);
  }
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Field a = random_space_time(g, 2, 2 * i), b = random_space_time(g, 2, 2 * i + 1);
    const double lhs = inner_spacetime(g, solve_field(WaveProblem::forward(g, nu, eta, a, 1.0)), b);
    const double rhs = inner_spacetime(g, a, solve_field(WaveProblem::backward(g, nu, eta, b, 1.0)));
    worst = std::max(worst, rel(lhs, rhs));
  }
  return {worst < 1e-10, "max relative error " + fmt("%.3e", worst) + " over 20 pairs"};
}

Outcome a3_gradient() {
  SyntheticSpec s = default_spec_1d(64);
  s.grid.horizon = 1.0;
  s.grid.steps = 128;
  s.lambda = 1e-4;
  s.target.bump_amplitude = 0.5;
  const Instance inst = build_instance(s);
  const Grid& g = *inst.grid;
  const FwiProblem& pr = inst.problem;
  Field nu = Field::spatial(g);
  for (int j = 0; j < g.nodes(); ++j) nu[j] = 1.4 + 0.2 * std::sin(3.0 * g.coord(j, 0));
  const GradientReport r = reduced_gradient(pr, nu);
  Rng rng(3);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const int j = rng.index(g.nodes());
    const double h = 1e-5;
    Field up = nu, dn = nu;
    up[j] += h;
    dn[j] -= h;
    const double fd = (eval_objective(pr, up).objective - eval_objective(pr, dn).objective) / (2.0 * h);
    worst = std::max(worst, rel(fd, r.gradient[j] * g.weight(j)));
  }
  return {worst < 1e-6, "max relative error " + fmt("%.3e", worst) + " over 20 coordinates"};
}

Outcome a4_sqp() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig c = bundled("invert_1d");
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const auto ref = make_reference(c, s);
  const Field nu0 = initial_control(c, pr, ref->nu);
  const SqpLog sl = run_sqp(pr, initial_iterate(pr, nu0, &*ref), sqp_options(c), &*ref);
  const double secs = seconds_since(t0);
  const std::vector<double> e = control_errors(sl);

  bool data_matching = true;
  for (std::size_t j = 0; j < ref->nu.size(); ++j) data_matching &= ref->nu[j] == pr.model.lower[j];
  const bool start_ok = std::abs(e.front() - 0.1) <= 1e-12;
  bool monotone = true;
  for (std::size_t k = 2; k < e.size(); ++k) monotone &= e[k - 1] > 0.0 ? e[k] < e[k - 1] : e[k] == 0.0;
  const int last = sl.iterates.back().k;
  const bool reached = e.back() < 1e-6 && last <= 15;

  // Steps that start above the tolerance; the last three must have decreasing ratios.
  std::size_t first_below = 0;
  while (first_below < e.size() && e[first_below] >= 1e-6) ++first_below;
  bool superlinear = first_below >= 3 && first_below < e.size();
  std::string ratios;
  if (superlinear) {
    std::vector<double> r;
    for (std::size_t k = first_below - 3; k < first_below; ++k) r.push_back(e[k + 1] / e[k]);
    for (std::size_t i = 1; i < r.size(); ++i) superlinear &= r[i] < r[i - 1];
    for (double x : r) ratios += fmt("%.3e ", x);
  }
  const bool ok = data_matching && start_ok && monotone && reached && superlinear && secs < 60.0;
  return {ok, "final error " + fmt("%.3e", e.back()) + " at k = " + std::to_string(last) +
                  ", ratios " + ratios + "runtime " + fmt("%.2f", secs) + " s"};
}

double stationary_step(const RunConfig& c) {
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const auto ref = make_reference(c, s);
  const SqpIterate start = initial_iterate(pr, ref->nu, &*ref, ref->p, ref->q);
  return sqp_step(pr, start, qp_options(c), &*ref).step_norm;
}

Outcome a5_fixed_point() {
  const double data_matching = stationary_step(bundled("invert_1d"));
  const double interior = stationary_step(bundled("perturbation_lab_1d"));
  return {data_matching <= 1e-8 && interior <= 1e-8,
          "step " + fmt("%.3e", data_matching) + " (data matching), " + fmt("%.3e", interior) +
              " (solved reference)"};
}

Outcome a6_qp_oracle() {
  SyntheticSpec s = default_spec_1d(7);
  s.lambda = 1e-6;
  s.target.bump_amplitude = 0.5;
  const Instance inst = build_instance(s);
  const Grid& g = *inst.grid;
  const FwiProblem& pr = inst.problem;
  const int n = g.nodes();
  // Expansion near the data-generating control, so the minimizer has free and bound components.
  Field nu_k = Field::spatial(g);
  for (int j = 0; j < n; ++j)
    nu_k[j] = std::clamp(inst.nu_true[j] + 0.05 * std::sin(5.0 * g.coord(j, 0)), s.lower, s.upper);
  const SqpIterate prev = initial_iterate(pr, nu_k);
  QpOptions qo;
  qo.rel_tol = 1e-13;
  const SqpIterate next = sqp_step(pr, prev, qo);

  // The reduced quadratic is exact in nu: its coefficient gradient is affine,
  // so columns of the Hessian are gradient differences.
  const LinearizedQp qp(pr, make_expansion_point(pr, prev.nu, prev.p, prev.q), pr.model.lower,
                        pr.model.upper);
  auto coef_grad = [&](const Field& nu) {
    const QpPoint pt = qp.evaluate(nu);
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v[j] = pt.gradient[j] * g.weight(j);
    return v;
  };
  const Eigen::VectorXd b = coef_grad(Field::spatial(g));
  Eigen::MatrixXd H(n, n);
  for (int i = 0; i < n; ++i) {
    Field e = Field::spatial(g);
    e[i] = 1.0;
    H.col(i) = coef_grad(e) - b;
  }
  const double asym = (H - H.transpose()).norm() / H.norm();
  H = 0.5 * (H + H.transpose());
  Eigen::VectorXd lo(n), up(n);
  for (int j = 0; j < n; ++j) {
    lo[j] = pr.model.lower[j];
    up[j] = pr.model.upper[j];
  }

  // Every face of the box: 0 free, 1 at lower, 2 at upper.
  double best_val = INFINITY;
  Eigen::VectorXd best;
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  for (int code = 0; code < patterns; ++code) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free_idx;
    for (int j = 0, c = code; j < n; ++j, c /= 3) {
      if (c % 3 == 0) free_idx.push_back(j);
      else x[j] = c % 3 == 1 ? lo[j] : up[j];
    }
    const int m = static_cast<int>(free_idx.size());
    if (m > 0) {
      Eigen::MatrixXd Hf(m, m);
      Eigen::VectorXd rhs(m);
      for (int a = 0; a < m; ++a) {
        rhs[a] = -b[free_idx[a]];
        for (int j = 0; j < n; ++j)
          if (std::find(free_idx.begin(), free_idx.end(), j) == free_idx.end())
            rhs[a] -= H(free_idx[a], j) * x[j];
        for (int c = 0; c < m; ++c) Hf(a, c) = H(free_idx[a], free_idx[c]);
      }
      const Eigen::VectorXd xf = Hf.ldlt().solve(rhs);
      for (int a = 0; a < m; ++a) x[free_idx[a]] = xf[a];
    }
    bool feasible = true;
    for (int j = 0; j < n; ++j) feasible &= x[j] >= lo[j] - 1e-14 && x[j] <= up[j] + 1e-14;
    if (!feasible) continue;
    const double val = 0.5 * x.dot(H * x) + b.dot(x);
    if (val < best_val) {
      best_val = val;
      best = x;
    }
  }

  double worst = 0.0;
  int at_bound = 0;
  for (int j = 0; j < n; ++j) {
    worst = std::max(worst, std::abs(best[j] - next.nu[j]));
    at_bound += best[j] == lo[j] || best[j] == up[j];
  }
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff();
  const bool ok = worst <= 1e-6 && asym <= 1e-8 && at_bound > 0 && at_bound < n;
  return {ok, std::to_string(n) + " unknowns, " + std::to_string(at_bound) +
                  " at a bound, max componentwise gap " + fmt("%.3e", worst) +
                  ", Hessian asymmetry " + fmt("%.1e", asym) + ", min eigenvalue " +
                  fmt("%.3e", min_eig)};
}

struct LabRun {
  RunConfig cfg = bundled("perturbation_lab_1d");
  Setup setup = make_setup(cfg);
  StationaryTriple ref = *make_reference(cfg, setup);
  TheoryContext ctx = make_theory_context(setup.problem(), ref, cfg.number("tau"));
  QpOptions qo = qp_options(cfg);
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed"));
};

Outcome a7_lipschitz(const LabRun& lab) {
  const FwiProblem& pr = lab.setup.problem();
  const Grid& g = lab.setup.grid();
  const PerturbationPairs pairs = manufactured_pairs(lab.ctx, 10, lab.seed);
  const LipschitzReport full = lipschitz_probe(lab.ctx, pairs, true, lab.qo);
  const LipschitzReport half = lipschitz_probe(lab.ctx, scale_pairs(pairs, 0.5), true, lab.qo);
  bool finite = full.evaluated > 0;
  for (const LipschitzEntry& e : full.entries)
    finite &= e.skipped ||
              (std::isfinite(e.control) && std::isfinite(e.state) && std::isfinite(e.adjoint));
  const double stability = probe_stability(full, half);

  const SscReport ssc = ssc_tau_sampler(pr, lab.ref, lab.ctx.tau,
                                        static_cast<int>(lab.cfg.integer("lab.ssc_trials")), lab.seed);
  double sum_a = 0.0;
  for (const Channel& ch : pr.obs.channels) sum_a += ch.weight.max_abs();
  const A1Constants a1 = lipschitz_constants_A1(
      g.horizon(), stability_constant(pr.model.nu_min, pr.model.nu_max), sum_a,
      norm_spacetime(g, lab.ref.dtt_p, SpaceTimeNorm::L2t_LInfx),
      norm_spacetime(g, lab.ref.dtt_q, SpaceTimeNorm::L2t_LInfx), ssc.alpha_emp);
  const bool ok = finite && stability <= 0.2 && ssc.pass && full.L_emp <= a1.L_bound;
  return {ok, "L_emp " + fmt("%.4e", full.L_emp) + ", halving change " + fmt("%.3e", stability) +
                  ", L_bound " + fmt("%.3e", a1.L_bound)};
}

Outcome a8_fixed_point(const LabRun& lab) {
  const FwiProblem& pr = lab.setup.problem();
  const Grid& g = lab.setup.grid();
  const Field nu0 = initial_control(lab.cfg, pr, lab.ref.nu);
  const SqpLog sl = run_sqp(pr, initial_iterate(pr, nu0, &lab.ref), sqp_options(lab.cfg), &lab.ref);
  const SqpIterate& it = sl.iterates.at(static_cast<std::size_t>(lab.cfg.integer("lab.fixed_point_k")));
  const ExpansionPoint frozen = make_expansion_point(pr, it.nu, it.p, it.q);
  const FixedPointReport fp = fixed_point_iterate(
      lab.ctx, frozen, it.nu, static_cast<int>(lab.cfg.integer("lab.fixed_point_max_it")), 1e-12, lab.qo);
  const QpResult rq = LinearizedQp(pr, frozen, lab.ctx.lower_tau, lab.ctx.upper_tau).minimize(it.nu, lab.qo);
  const double gap = norm_l2_omega(g, fp.nu - rq.point.nu);
  double max_ratio = 0.0;
  for (double r : fp.ratios) max_ratio = std::max(max_ratio, r);

  const ControlTriple target = manufactured_target(lab.ctx, lab.seed, 1000, 1.0);
  const PerturbedSolution rt =
      solve_perturbed(lab.ctx, manufacture_perturbation(lab.ctx, target.nu, target.p, target.q), true, lab.qo);
  const double round_trip = std::max({norm_l2_omega(g, rt.nu - target.nu),
                                      norm_spacetime(g, rt.p - target.p, SpaceTimeNorm::L2t_L2x),
                                      norm_spacetime(g, rt.q - target.q, SpaceTimeNorm::L2t_L2x)});
  const bool ok = fp.converged && !fp.ratios.empty() && max_ratio < 1.0 && rq.converged &&
                  gap <= 1e-6 && round_trip <= 1e-6;
  return {ok, std::to_string(fp.iterations) + " iterations, max ratio " + fmt("%.3e", max_ratio) +
                  ", gap to restricted QP " + fmt("%.3e", gap) + ", round trip " +
                  fmt("%.3e", round_trip)};
}

Outcome a9_theory() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  const double ln8 = std::log(40320.0), ln11 = std::log(39916800.0), r2 = std::sqrt(2.0);
  for (double lg : {std::log(1e-3), -600.0}) {
    expect(bk_log(0, lg).log() == lg, "b0");
    expect(rel(bk_log(1, lg).log(), 2.0 * ln8 + r2 * lg) <= 1e-15, "b1");
    expect(rel(bk_log(2, lg).log(), 2.0 * r2 * ln8 + 2.0 * ln11 + 2.0 * lg) <= 1e-15, "b2");
  }
  expect(check_sequence_lemma_log(-600.0, 60).all_pass(), "sequence lemma");

  // sum_{l>=1} sqrt2^{6-l} ln((3l+5)!) with 60-digit arithmetic.
  const double series = 589.491501508712271715276800946784976;
  expect(rel(gamma_bar_log(0.0).log(), series) <= 1e-12, "gamma_bar constant");
  expect(rel(gamma_bar_log(0.0, 1e-16).log(), series) <= 1e-12, "gamma_bar tight tolerance");
  expect(rel(gamma_bar_series(120), gamma_bar_series(240)) <= 1e-12, "gamma_bar series");

  LedgerInputs in;
  in.nu_min = in.nu_max = in.omega_measure = in.horizon = in.tau = 1.0;
  in.lambda = 1e-3;
  in.gamma = 1e-300;
  in.C_f = in.C_a = in.C_bar = in.L = in.L_p = in.L_q = in.c_hat = in.c_check = 1.0;
  in.sum_a_linf = in.dtt_pbar_l2linf = in.dtt_qbar_l2linf = 1.0;
  in.C_0 = 10.0;
  in.epsilon = 1e-300 / (4.0 * 24832.0) / 2.0;
  const ConstantLedger ok = ConstantLedger::derive(in);
  expect(ok.c1 == 2.0 * (1.0 + 10.0) + 2.0 + 4.0 * 10.0, "c1");
  expect(ok.delta == 2.0 * (2.0 * 64.0 + 3.0 * 64.0 * 64.0), "delta");
  expect(assumption4_audit(ok).all_pass, "feasible audit");
  in.epsilon = 2.0 * 1e-300 / (4.0 * 24832.0);
  const AuditReport bad = assumption4_audit(ConstantLedger::derive(in));
  expect(!bad.all_pass && bad.binding == "epsilon <= gamma/(4 delta)", "violated epsilon");

  LedgerInputs h = in;
  h.nu_min = 0.25;
  h.nu_max = 4.0;
  h.omega_measure = 2.0;
  h.horizon = 1.5;
  h.C_a = 0.7;
  h.C_0 = 3.0;
  h.C_bar = 0.4;
  h.c_hat = 1.3;
  h.L = 2.5;
  h.gamma = 1e-5;
  const ConstantLedger l = ConstantLedger::derive(h);
  const double c = 16.0;
  const double c1 = 1.3 * (2.0 * 0.7 * c * 1.5 * (0.4 + 3.0) + 2.0 * 0.4 + 4.0 * 3.0);
  const double delta = 2.0 * 2.5 * (2.0 * c1 + 3.0 * r2 * c1 * c1);
  const double c0 = 3.0 * (1.3 * (1e-5 / (2.0 * delta)) * (0.7 * c * 1.5 + 1.0) + 1.0);
  expect(l.c == c && l.c1 == c1 && l.delta == delta && l.c0 == c0, "ledger substitution");
  const A1Constants k = lipschitz_constants_A1(1.0, 1.0, 1.0, 1.0, 1.0, 0.5);
  expect(k.C1 == 6.0 && k.C2 == 4.0 && k.C3 == 2.0 && k.C4 == 1.0, "C1..C4");

  std::string d = "all theory checks hold, series cut at 60 vs 120 differs by " +
                  fmt("%.2e", rel(gamma_bar_series(60), gamma_bar_series(120)));
  if (!failed.empty()) {
    d = "failed:";
    for (const auto& f : failed) d += " " + f;
  }
  return {failed.empty(), d};
}

Outcome a10_linearity() {
  GridSpec s;
  s.dim = 2;
  s.cells = {10, 10};
  s.sides = {Boundary::dirichlet, Boundary::neumann, Boundary::dirichlet, Boundary::neumann};
  s.horizon = 1.0;
  s.steps = 40;
  const Grid g(s);
  Field nu = Field::spatial(g), eta = Field::spatial(g, 0.4);
  for (int j = 0; j < g.nodes(); ++j) nu[j] = 1.0 + 0.5 * g.coord(j, 0);
  auto fwd = [&](const Field& src) { return solve(WaveProblem::forward(g, nu, eta, src, 1.0)); };
  auto l2 = [&](const Field& u) { return norm_spacetime(g, u, SpaceTimeNorm::L2t_L2x); };
  const Field a = random_space_time(g, 10, 0), b = random_space_time(g, 10, 1);
  const WaveSolution sa = fwd(a), sb = fwd(b);
  const double alpha = -2.75, beta = 0.6;
  const Field combo = fwd(alpha * a + beta * b).u;
  const double superposition = l2(combo - (alpha * sa.u + beta * sb.u)) / l2(combo);

  double homogeneity = 0.0;
  for (auto norm : {SpaceTimeNorm::L2t_L2x, SpaceTimeNorm::L2t_LInfx}) {
    homogeneity = std::max(homogeneity, rel(norm_spacetime(g, alpha * a, norm),
                                            std::abs(alpha) * norm_spacetime(g, a, norm)));
  }
  homogeneity = std::max(homogeneity, rel(norm_l2_omega(g, alpha * nu), std::abs(alpha) * norm_l2_omega(g, nu)));

  const double cst = stability_constant(1.0, 1.5);
  const EnergyBoundReport e1 = check_energy_bound(g, sa, a, cst, 1.0);
  const Field scaled = 13.0 * a;
  const EnergyBoundReport e2 = check_energy_bound(g, fwd(scaled), scaled, cst, 1.0);
  const double energy = std::max(rel(e1.state_ratio, e2.state_ratio), rel(e1.velocity_ratio, e2.velocity_ratio));
  const bool ok = superposition <= 1e-12 && homogeneity <= 1e-12 && energy <= 1e-12;
  return {ok, "superposition " + fmt("%.2e", superposition) + ", homogeneity " +
                  fmt("%.2e", homogeneity) + ", energy ratio change " + fmt("%.2e", energy)};
}

}  // namespace

int main() {
  const LabRun lab;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"A1", a1_mms},
      {"A2", a2_adjoint},
      {"A3", a3_gradient},
      {"A4", a4_sqp},
      {"A5", a5_fixed_point},
      {"A6", a6_qp_oracle},
      {"A7", [&] { return a7_lipschitz(lab); }},
      {"A8", [&] { return a8_fixed_point(lab); }},
      {"A9", a9_theory},
      {"A10", a10_linearity},
  };
  bool all = true;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.pass;
    std::printf("%s %s %s\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
