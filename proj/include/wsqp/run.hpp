#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsqp/config.hpp"
#include "wsqp/field_io.hpp"
#include "wsqp/lab.hpp"
#include "wsqp/mms.hpp"
#include "wsqp/optimality.hpp"
#include "wsqp/perturbation.hpp"
#include "wsqp/random.hpp"
#include "wsqp/sqp.hpp"
#include "wsqp/synthetic.hpp"
#include "wsqp/theory.hpp"

namespace wsqp {

namespace fs = std::filesystem;

inline constexpr const char* kSummarySchema = "wsqp.summary/1";
inline constexpr const char* kIteratesSchema = "wsqp.iterates/1";

/// Exit codes of `run`: checks failed, or the configuration / files are unusable.
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitBadInput = 2;

// ---------------------------------------------------------------------------
// Output helpers

/// CSV with a schema line and a header; numbers use 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& schema, const std::string& header)
      : os_(path) {
    require(static_cast<bool>(os_), "run: cannot open " + path.string() + " for writing");
    os_ << "# schema: " << schema << "\n" << header << "\n";
  }
  CsvWriter& operator<<(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return cell(buf);
  }
  CsvWriter& operator<<(int v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(bool v) { return cell(v ? "1" : "0"); }
  CsvWriter& operator<<(const std::string& v) { return cell(v); }
  CsvWriter& operator<<(const std::optional<double>& v) { return v ? *this << *v : cell(""); }
  void end_row() {
    os_ << "\n";
    first_ = true;
  }

 private:
  CsvWriter& cell(const std::string& s) {
    if (!first_) os_ << ',';
    os_ << s;
    first_ = false;
    return *this;
  }
  std::ofstream os_;
  bool first_ = true;
};

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "run: cannot open " + path.string() + " for writing");
  os << j.dump(2) << "\n";
}

/// JSON number, or null for non-finite values.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline json log_real_json(const LogReal& v) {
  return {{"sign", v.sign()}, {"log", num(v.log())}};
}

/// Named pass/fail checks of a run; any failure makes the exit status nonzero.
struct Checks {
  json items = json::object();
  bool all = true;
  void add(const std::string& name, bool pass) {
    items[name] = pass;
    all &= pass;
  }
};

// ---------------------------------------------------------------------------
// Config -> problem

struct Setup {
  Instance inst;
  const FwiProblem& problem() const { return inst.problem; }
  const Grid& grid() const { return *inst.grid; }
};

inline Setup make_setup(const RunConfig& c) {
  Setup s{build_instance(synthetic_spec(c))};
  if (c.string("obs.data") == "file") {
    const Field data = load_field(c.string("obs.data_file"), s.grid());
    require(!data.is_spatial(), "run: obs.data_file must hold a space-time field");
    for (Channel& ch : s.inst.problem.obs.channels) ch.data = data;
  }
  s.inst.problem.validate();
  return s;
}

inline QpOptions qp_options(const RunConfig& c) {
  QpOptions o;
  o.tol = c.number("qp.tol");
  o.rel_tol = c.number("qp.rel_tol");
  o.max_iter = static_cast<int>(c.integer("qp.max_iter"));
  return o;
}

inline SqpOptions sqp_options(const RunConfig& c) {
  SqpOptions o;
  o.tol = c.number("sqp.tol");
  o.max_k = static_cast<int>(c.integer("sqp.max_k"));
  o.qp = qp_options(c);
  return o;
}

/// Initial control. The bump start is base + distance * unit bump, clipped to the box.
inline Field initial_control(const RunConfig& c, const FwiProblem& pr, const Field& base) {
  const Grid& g = *pr.grid;
  const std::string kind = c.string("model.nu0");
  if (kind == "constant") return Field::spatial(g, c.number("model.nu0_value"));
  if (kind == "file") {
    Field nu = load_field(c.string("model.nu0_file"), g);
    require(nu.is_spatial(), "run: model.nu0_file must hold a spatial field");
    return nu;
  }
  require(kind == "bump", "config: key 'model.nu0': must be constant, bump or file");
  Field b = Field::spatial(g);
  const std::array<double, 2> center{c.number("model.nu0_center_x"), c.number("model.nu0_center_y")};
  for (int j = 0; j < g.nodes(); ++j) b[j] = gaussian(g, j, center, c.number("model.nu0_width"));
  b *= c.number("model.nu0_distance") / norm_l2_omega(g, b);
  return project_box(base + b, pr.model);
}

/// Stationary reference from a tight SQP run started at the data control.
inline StationaryTriple solve_reference(const FwiProblem& pr, const Field& start) {
  SqpOptions o;
  o.tol = 1e-14;
  o.max_k = 30;
  o.qp.rel_tol = 1e-13;
  const SqpLog log = run_sqp(pr, start, o);
  if (log.failed && log.iterates.size() < 2)
    throw ConvergenceError("run: reference solve failed: " + log.failure);
  return make_stationary_triple(pr, log.iterates.back().nu);
}

inline std::optional<StationaryTriple> make_reference(const RunConfig& c, const Setup& s) {
  const std::string ref = c.string("reference");
  if (ref == "none") return std::nullopt;
  if (ref == "target") return make_stationary_triple(s.problem(), s.inst.nu_true);
  require(ref == "solve", "config: key 'reference': must be target, solve or none");
  return solve_reference(s.problem(), s.inst.nu_true);
}

inline json grid_json(const Grid& g) {
  return {{"dim", g.dim()},       {"nx", g.nx()},           {"ny", g.ny()},
          {"steps", g.steps()},   {"dt", num(g.dt())},      {"horizon", num(g.horizon())},
          {"measure", num(g.measure())}};
}

inline json summary_head(const RunConfig& c) {
  return {{"schema", kSummarySchema}, {"mode", c.mode()}, {"seed", c.integer("seed")}};
}

inline void write_iterates(const fs::path& path, const SqpLog& log) {
  CsvWriter w(path, kIteratesSchema,
              "k,step_norm,err_nu,err_p,err_q,qp_iterations,qp_evaluations,qp_vi_residual,"
              "qp_tolerance,qp_monotone,time_difference_order,dtt_p_initial,dtt_q_terminal");
  for (const SqpIterate& it : log.iterates) {
    w << it.k << it.step_norm << it.err_nu << it.err_p << it.err_q << it.qp_iterations
      << it.qp_evaluations << it.qp_vi_residual << it.qp_tolerance << it.qp_monotone
      << it.time_difference_order << it.dtt_p_initial << it.dtt_q_terminal;
    w.end_row();
  }
}

inline void write_active_sets(const fs::path& path, const Grid& g, const ActiveSets& as) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "run: cannot open " + path.string() + " for writing");
  write_active_sets_csv(os, g, as);
}

// ---------------------------------------------------------------------------
// Modes

inline int run_forward(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const Grid& g = s.grid();
  const Field nu = initial_control(c, pr, s.inst.nu_true);
  const WaveSolution sol =
      solve(WaveProblem::forward(g, nu, pr.model.damping, pr.source, pr.model.nu_min));
  save_field((out / "p").string(), g, sol.u);
  const double cst = stability_constant(pr.model.nu_min, pr.model.nu_max);
  const EnergyBoundReport eb = check_energy_bound(g, sol, pr.source, cst, 1.0);
  Checks checks;
  checks.add("scheme_residual", sol.relative_residual <= 1e-10);
  json j = summary_head(c);
  j["grid"] = grid_json(g);
  j["cfl_ratio"] = num(sol.cfl_ratio);
  j["relative_residual"] = num(sol.relative_residual);
  j["p_l2l2"] = num(norm_spacetime(g, sol.u, SpaceTimeNorm::L2t_L2x));
  j["p_max_abs"] = num(sol.u.max_abs());
  j["energy_bound"] = {{"state_ratio", num(eb.state_ratio)},
                       {"velocity_ratio", num(eb.velocity_ratio)},
                       {"within_bound", eb.pass}};
  j["sup_bound_ratio"] = num(check_sup_bound(g, sol, pr.source).ratio);
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "forward: " << g.levels() << " levels, relative residual " << sci(sol.relative_residual)
      << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

inline int run_invert(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const Grid& g = s.grid();
  const auto ref = make_reference(c, s);
  const Field nu0 = initial_control(c, pr, ref ? ref->nu : s.inst.nu_true);
  const StationaryTriple* rp = ref ? &*ref : nullptr;
  const SqpLog sl = run_sqp(pr, initial_iterate(pr, nu0, rp), sqp_options(c), rp);

  write_iterates(out / "iterates.csv", sl);
  save_field((out / "nu_final").string(), g, sl.iterates.back().nu);

  json j = summary_head(c);
  j["grid"] = grid_json(g);
  j["converged"] = sl.converged;
  j["failed"] = sl.failed;
  j["failure"] = sl.failure;
  j["iterations"] = sl.iterates.back().k;
  j["final_step"] = num(sl.iterates.back().step_norm);
  Checks checks;
  checks.add("sqp_converged", sl.converged && !sl.failed);
  if (ref) {
    write_active_sets(out / "active_sets.csv", g, compute_active_sets(*ref, c.number("tau")));
    const std::vector<double> e = control_errors(sl);
    j["reference"] = c.string("reference");
    j["reference_vi_residual"] = num(ref->vi_residual);
    j["initial_error"] = num(e.front());
    j["final_error"] = num(e.back());
    j["errors"] = e;
    if (e.size() >= 3) {
      const TwoStepReport ts = two_step_diagnostic(e);
      CsvWriter w(out / "two_step.csv", "wsqp.two_step/1", "k,two_step,log_delta,one_step");
      for (const TwoStepRow& r : ts.rows) {
        w << r.k << r.two_step << r.log_delta << r.one_step;
        w.end_row();
      }
      j["log_delta_emp"] = num(ts.log_delta_emp);
    }
    bool decreasing = true;
    for (std::size_t k = 2; k < e.size(); ++k) decreasing &= e[k] <= e[k - 1];
    j["errors_decreasing_from_k1"] = decreasing;
  }
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "invert: " << sl.iterates.back().k << " iterations, "
      << (sl.converged ? "converged" : "not converged");
  if (ref) log << ", final error " << sci(*sl.iterates.back().err_nu);
  if (sl.failed) log << ", failure: " << sl.failure;
  log << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

inline double config_log_gamma(const RunConfig& c) {
  if (c.has("log_gamma")) {
    const double lg = c.number("log_gamma");
    require(lg < 0.0, "config: key 'log_gamma': ln gamma must be negative");
    return lg;
  }
  const double gamma = c.number("gamma");
  require(gamma > 0.0 && gamma < 1.0, "config: key 'gamma': gamma must lie in (0, 1)");
  return std::log(gamma);
}

inline int run_theory_sequences(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const double lg = config_log_gamma(c);
  const int k_max = static_cast<int>(c.integer("theory.k_max"));
  const SequenceLemmaReport rep = check_sequence_lemma_log(lg, k_max);
  CsvWriter w(out / "sequences.csv", "wsqp.sequences/1", "k,sign,log_bk,log_bound");
  for (const SequenceRow& r : rep.rows) {
    w << r.k << bk_log(r.k, lg).sign() << r.log_bk << r.log_bound;
    w.end_row();
  }
  Checks checks;
  checks.add("monotone", rep.monotone);
  checks.add("bounded_by_gamma_bar", rep.bounded_by_gamma_bar);
  checks.add("factorial_bound", rep.factorial_bound);
  checks.add("recurrence", rep.recurrence);
  json j = summary_head(c);
  j["log_gamma"] = num(lg);
  j["log_gamma_bar"] = num(rep.log_gamma_bar);
  j["log_gamma_threshold"] = num(gamma_threshold_log());
  j["k_max"] = k_max;
  j["max_recurrence_error"] = num(rep.max_recurrence_error);
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "theory-sequences: ln gamma_bar " << sci(rep.log_gamma_bar) << ", "
      << (checks.all ? "all checks pass" : "checks failed") << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

inline json ledger_json(const ConstantLedger& l) {
  const LedgerInputs& in = l.in;
  json inputs = json::object();
  auto put = [&](const char* name, const std::optional<double>& v) {
    if (v) inputs[name] = num(*v);
  };
  put("nu_min", in.nu_min);
  put("nu_max", in.nu_max);
  put("omega_measure", in.omega_measure);
  put("horizon", in.horizon);
  put("lambda", in.lambda);
  put("tau", in.tau);
  put("epsilon", in.epsilon);
  put("gamma", in.gamma);
  put("C_f", in.C_f);
  put("C_a", in.C_a);
  put("C_0", in.C_0);
  put("C_bar", in.C_bar);
  put("L", in.L);
  put("L_p", in.L_p);
  put("L_q", in.L_q);
  put("c_hat", in.c_hat);
  put("c_check", in.c_check);
  put("sum_a_linf", in.sum_a_linf);
  put("dtt_pbar_l2linf", in.dtt_pbar_l2linf);
  put("dtt_qbar_l2linf", in.dtt_qbar_l2linf);
  return {{"schema", "wsqp.ledger/1"},
          {"inputs", inputs},
          {"derived",
           {{"c", num(l.c)},
            {"c1", num(l.c1)},
            {"delta", num(l.delta)},
            {"c0", num(l.c0)},
            {"c_L", num(l.c_L)},
            {"gamma_bar", log_real_json(l.gamma_bar)}}}};
}

inline json audit_json(const AuditReport& a) {
  json items = json::array();
  for (const AuditItem& it : a.items)
    items.push_back({{"name", it.name},
                     {"lhs", log_real_json(it.lhs)},
                     {"rhs", log_real_json(it.rhs)},
                     {"strict", it.strict},
                     {"pass", it.pass},
                     {"log_margin", num(it.log_margin)}});
  return {{"schema", "wsqp.audit/1"}, {"items", items}, {"all_pass", a.all_pass},
          {"binding", a.binding}};
}

inline json a1_json(const A1Constants& k, double alpha) {
  return {{"alpha", num(alpha)},         {"C1", num(k.C1)},           {"C2", num(k.C2)},
          {"C3", num(k.C3)},             {"C4", num(k.C4)},           {"K_state", num(k.K_state)},
          {"K_adjoint", num(k.K_adjoint)}, {"K_vi", num(k.K_vi)},     {"L_bound", num(k.L_bound)}};
}

inline int run_theory_audit(const RunConfig& c, const fs::path& out, std::ostream& log) {
  LedgerInputs in;
  in.nu_min = c.number("model.nu_min");
  in.nu_max = c.number("model.nu_max");
  const double extent = c.number("grid.extent_x") * (c.integer("grid.dim") == 2 ? c.number("grid.extent_y") : 1.0);
  in.omega_measure = c.has("ledger.omega_measure") ? c.number("ledger.omega_measure") : extent;
  in.horizon = c.has("ledger.horizon") ? c.number("ledger.horizon") : c.number("grid.horizon");
  in.lambda = c.number("lambda");
  in.tau = c.number("tau");
  in.epsilon = c.maybe("epsilon");
  const double gamma = std::exp(config_log_gamma(c));
  require(gamma > 0.0, "config: key 'log_gamma': gamma underflows double precision; the ledger needs gamma as a double");
  in.gamma = gamma;
  in.C_f = c.maybe("ledger.C_f");
  in.C_a = c.maybe("ledger.C_a");
  in.C_0 = c.maybe("ledger.C_0");
  in.C_bar = c.maybe("ledger.C_bar");
  in.c_hat = c.maybe("ledger.c_hat");
  in.c_check = c.maybe("ledger.c_check");
  in.L = c.maybe("ledger.L");
  in.L_p = c.maybe("ledger.L_p");
  in.L_q = c.maybe("ledger.L_q");
  in.sum_a_linf = c.maybe("ledger.sum_a_linf");
  in.dtt_pbar_l2linf = c.maybe("ledger.dtt_pbar");
  in.dtt_qbar_l2linf = c.maybe("ledger.dtt_qbar");
  const ConstantLedger l = ConstantLedger::derive(in);
  const AuditReport a = assumption4_audit(l);
  json lj = ledger_json(l);
  if (c.has("ledger.alpha")) {
    const double alpha = c.number("ledger.alpha");
    lj["A1"] = a1_json(lipschitz_constants_A1(l, alpha), alpha);
  }
  write_json(out / "ledger.json", lj);
  write_json(out / "audit.json", audit_json(a));
  json j = summary_head(c);
  j["audit_all_pass"] = a.all_pass;
  j["binding"] = a.binding;
  j["checks"] = json::object();
  write_json(out / "summary.json", j);
  log << "theory-audit: " << (a.all_pass ? "all conditions hold" : "violated, binding: " + a.binding)
      << "\n";
  return 0;
}

inline int run_perturbation_lab(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const Grid& g = s.grid();
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  const QpOptions qo = qp_options(c);
  const double tau = c.number("tau");
  Checks checks;
  json j = summary_head(c);
  j["grid"] = grid_json(g);

  const std::string ref_kind = c.string("reference");
  require(ref_kind != "none", "config: key 'reference': perturbation-lab needs a reference");
  const auto ref = make_reference(c, s);
  const TheoryContext ctx = make_theory_context(pr, *ref, tau);
  write_active_sets(out / "active_sets.csv", g, ctx.active);
  j["reference_vi_residual"] = num(ref->vi_residual);
  j["active_count"] = ctx.active.count();
  j["movable_count"] = static_cast<int>(movable_nodes(ctx, TargetScales{}.margin).size());

  // SSC sampler over tau and the sweep.
  std::vector<double> taus{tau};
  for (double t : c.list("tau_sweep")) taus.push_back(t);
  const int trials = static_cast<int>(c.integer("lab.ssc_trials"));
  double alpha = 0.0;
  {
    CsvWriter w(out / "ssc.csv", "wsqp.ssc/1", "tau,active_count,cone_empty,alpha_emp,pass");
    for (std::size_t i = 0; i < taus.size(); ++i) {
      const SscReport r = ssc_tau_sampler(pr, ctx.ref, taus[i], trials, seed);
      w << taus[i] << compute_active_sets(ctx.ref, taus[i]).count() << r.cone_empty
        << (r.cone_empty ? std::optional<double>{} : std::optional<double>{r.alpha_emp}) << r.pass;
      w.end_row();
      if (i == 0) {
        alpha = r.alpha_emp;
        checks.add("ssc_positive", r.pass);
      }
    }
  }

  // Zero perturbation and a manufactured round trip.
  const PerturbedSolution zero = solve_perturbed(ctx, PerturbationTriple::zero(g), true, qo);
  const double zero_err = norm_l2_omega(g, zero.nu - ctx.ref.nu);
  j["zero_perturbation_error"] = num(zero_err);
  checks.add("zero_perturbation_recovers_reference", zero_err <= 1e-6);
  const ControlTriple target = manufactured_target(ctx, seed, 1000, 1.0);
  const PerturbationTriple rho = manufacture_perturbation(ctx, target.nu, target.p, target.q);
  const PerturbedSolution rt = solve_perturbed(ctx, rho, true, qo);
  const double rt_nu = norm_l2_omega(g, rt.nu - target.nu);
  const double rt_p = norm_spacetime(g, rt.p - target.p, SpaceTimeNorm::L2t_L2x);
  const double rt_q = norm_spacetime(g, rt.q - target.q, SpaceTimeNorm::L2t_L2x);
  j["round_trip"] = {{"nu", num(rt_nu)},
                     {"p", num(rt_p)},
                     {"q", num(rt_q)},
                     {"unrestricted_vi_residual", num(unrestricted_vi_residual(ctx, rt))},
                     {"endpoint_magnitude", num(rho.endpoint_magnitude(g))}};
  checks.add("round_trip", std::max({rt_nu, rt_p, rt_q}) <= 1e-6);

  // Lipschitz probe at full and half amplitude.
  const int n_pairs = static_cast<int>(c.integer("lab.pairs"));
  const PerturbationPairs pairs = manufactured_pairs(ctx, n_pairs, seed);
  const LipschitzReport lp = lipschitz_probe(ctx, pairs, true, qo);
  const LipschitzReport lh = lipschitz_probe(ctx, scale_pairs(pairs, 0.5), true, qo);
  {
    CsvWriter w(out / "lipschitz.csv", "wsqp.lipschitz/1", "pair,scale,skipped,control,state,adjoint");
    for (int i = 0; i < n_pairs; ++i) {
      for (const auto* r : {&lp, &lh}) {
        const LipschitzEntry& e = r->entries[i];
        w << i << (r == &lp ? 1.0 : 0.5) << e.skipped << e.control << e.state << e.adjoint;
        w.end_row();
      }
    }
  }
  bool finite = lp.evaluated > 0;
  for (const LipschitzEntry& e : lp.entries)
    finite &= e.skipped || (std::isfinite(e.control) && std::isfinite(e.state) && std::isfinite(e.adjoint));
  const double stability = probe_stability(lp, lh);
  checks.add("lipschitz_finite", finite);
  checks.add("lipschitz_stable_under_halving", stability <= 0.2);
  const double cst = stability_constant(pr.model.nu_min, pr.model.nu_max);
  double sum_a = 0.0;
  for (const Channel& ch : pr.obs.channels) sum_a += ch.weight.max_abs();
  json lip = {{"L_emp", num(lp.L_emp)},
              {"Lp_emp", num(lp.Lp_emp)},
              {"Lq_emp", num(lp.Lq_emp)},
              {"evaluated", lp.evaluated},
              {"halving_max_relative_change", num(stability)}};
  if (alpha > 0.0) {
    const A1Constants a1 = lipschitz_constants_A1(
        g.horizon(), cst, sum_a, norm_spacetime(g, ctx.ref.dtt_p, SpaceTimeNorm::L2t_LInfx),
        norm_spacetime(g, ctx.ref.dtt_q, SpaceTimeNorm::L2t_LInfx), alpha);
    lip["A1"] = a1_json(a1, alpha);
    checks.add("L_emp_below_L_bound", lp.L_emp <= a1.L_bound);
  }
  j["lipschitz"] = lip;

  // SQP from the configured start; fixed-point run at one frozen iterate.
  const Field nu0 = initial_control(c, pr, ctx.ref.nu);
  const SqpLog sl = run_sqp(pr, initial_iterate(pr, nu0, &ctx.ref), sqp_options(c), &ctx.ref);
  write_iterates(out / "iterates.csv", sl);
  save_field((out / "nu_final").string(), g, sl.iterates.back().nu);
  checks.add("sqp_converged", sl.converged && !sl.failed);
  j["final_error"] = num(sl.iterates.back().err_nu);
  const int kf = static_cast<int>(c.integer("lab.fixed_point_k"));
  if (kf >= 0 && kf < static_cast<int>(sl.iterates.size())) {
    const SqpIterate& it = sl.iterates[kf];
    const ExpansionPoint frozen = make_expansion_point(pr, it.nu, it.p, it.q);
    const FixedPointReport fp = fixed_point_iterate(
        ctx, frozen, it.nu, static_cast<int>(c.integer("lab.fixed_point_max_it")), 1e-12, qo);
    const QpResult restricted =
        LinearizedQp(pr, frozen, ctx.lower_tau, ctx.upper_tau).minimize(it.nu, qo);
    const double gap = norm_l2_omega(g, fp.nu - restricted.point.nu);
    CsvWriter w(out / "fixed_point.csv", "wsqp.fixed_point/1", "iteration,step,ratio");
    for (std::size_t i = 0; i < fp.steps.size(); ++i) {
      w << static_cast<int>(i + 1) << fp.steps[i]
        << (i == 0 ? std::optional<double>{} : std::optional<double>{fp.ratios[i - 1]});
      w.end_row();
    }
    j["fixed_point"] = {{"frozen_k", kf},
                        {"iterations", fp.iterations},
                        {"converged", fp.converged},
                        {"contraction", fp.contraction},
                        {"diverged", fp.diverged},
                        {"diagnostic", fp.diagnostic},
                        {"gap_to_restricted_qp", num(gap)}};
    checks.add("fixed_point_contraction", fp.converged && fp.contraction);
    checks.add("fixed_point_matches_restricted_qp", restricted.converged && gap <= 1e-6);
  } else {
    j["fixed_point"] = {{"frozen_k", kf}, {"diagnostic", "no SQP iterate with this index"}};
  }

  // Empirical ledger, audit and the neighbourhood test along the SQP run.
  EmpiricalLedgerInputs e;
  e.epsilon = norm_l2_omega(g, nu0 - ctx.ref.nu);
  e.gamma = std::exp(config_log_gamma(c));
  require(e.gamma > 0.0, "config: key 'log_gamma': gamma underflows double precision; the ledger needs gamma as a double");
  e.tau = tau;
  e.p0 = sl.iterates.front().p;
  e.q0 = sl.iterates.front().q;
  e.L = lp.L_emp;
  e.L_p = lp.Lp_emp;
  e.L_q = lp.Lq_emp;
  LedgerInputs in = empirical_ledger(ctx, e);
  if (c.has("epsilon")) in.epsilon = c.number("epsilon");
  const ConstantLedger led = ConstantLedger::derive(in);
  const AuditReport audit = assumption4_audit(led);
  json lj = ledger_json(led);
  lj["empirical_c_L"] = num(empirical_c_L(ctx, lp.Lp_emp, lp.Lq_emp));
  write_json(out / "ledger.json", lj);
  write_json(out / "audit.json", audit_json(audit));
  {
    CsvWriter w(out / "neighborhood.csv", "wsqp.neighborhood/1",
                "k,admissible,state_distance,adjoint_distance,log_bound,member");
    bool members = true;
    for (const SqpIterate& it : sl.iterates) {
      const NeighborhoodReport nb =
          check_neighborhood_U(pr, ctx.ref, {it.nu, it.p, it.q}, led.c1, led.delta, led.gamma_bar);
      w << it.k << nb.admissible << nb.state_distance << nb.adjoint_distance << nb.log_bound
        << nb.member;
      w.end_row();
      if (it.k >= 1) members &= nb.member;
    }
    checks.add("iterates_in_neighborhood_from_k1", members);
  }
  j["audit_all_pass"] = audit.all_pass;
  j["audit_binding"] = audit.binding;
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "perturbation-lab: L_emp " << sci(lp.L_emp) << ", round trip " << sci(rt_nu)
      << ", audit " << (audit.all_pass ? "holds" : "violated (" + audit.binding + ")") << ", "
      << (checks.all ? "all checks pass" : "checks failed") << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

inline int run_mms(const RunConfig& c, const fs::path& out, std::ostream& log) {
  std::vector<int> cells;
  for (double v : c.list("mms.cells")) {
    require(v == std::floor(v) && v >= 2, "config: key 'mms.cells': entries must be integers >= 2");
    cells.push_back(static_cast<int>(v));
  }
  require(cells.size() >= 2, "config: key 'mms.cells': needs at least two levels");
  const std::vector<MmsLevel> levels = mms_study(cells, c.number("mms.steps_per_cell"));
  CsvWriter w(out / "mms.csv", "wsqp.mms/1", "cells,steps,error,order");
  json orders = json::array();
  Checks checks;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const MmsLevel& lv = levels[i];
    w << lv.cells << lv.steps << lv.error
      << (i == 0 ? std::optional<double>{} : std::optional<double>{lv.order});
    w.end_row();
    if (i > 0) orders.push_back(num(lv.order));
  }
  const double last = levels.back().order;
  checks.add("order_in_range", last >= 1.8 && last <= 2.2);
  json j = summary_head(c);
  j["orders"] = orders;
  j["finest_error"] = num(levels.back().error);
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "mms: observed order " << last << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

inline int run_gradient_check(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const Setup s = make_setup(c);
  const FwiProblem& pr = s.problem();
  const Grid& g = s.grid();
  const Field nu = initial_control(c, pr, s.inst.nu_true);
  const GradientReport base = reduced_gradient(pr, nu);
  const int count = std::min<int>(static_cast<int>(c.integer("check.coordinates")), g.nodes());
  const double h = c.number("check.step");
  require(h > 0.0, "config: key 'check.step': must be positive");
  std::vector<int> idx(g.nodes());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(static_cast<std::uint64_t>(c.integer("seed")));
  for (int i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(g.nodes() - i)]);
  CsvWriter w(out / "gradient_check.csv", "wsqp.gradient_check/1",
              "node,gradient,finite_difference,relative_error");
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const int jn = idx[i];
    Field plus = nu, minus = nu;
    plus[jn] += h;
    minus[jn] -= h;
    const double fd = (eval_objective(pr, plus).objective - eval_objective(pr, minus).objective) /
                      (2.0 * h * g.weight(jn));
    const double gj = base.gradient[jn];
    const double sc = std::max(std::abs(fd), std::abs(gj));
    const double rel = sc == 0.0 ? 0.0 : std::abs(fd - gj) / sc;
    worst = std::max(worst, rel);
    w << jn << gj << fd << rel;
    w.end_row();
  }
  Checks checks;
  checks.add("gradient_matches_finite_differences", worst < c.number("check.threshold"));
  json j = summary_head(c);
  j["grid"] = grid_json(g);
  j["coordinates"] = count;
  j["max_relative_error"] = num(worst);
  j["checks"] = checks.items;
  write_json(out / "summary.json", j);
  log << "gradient-check: max relative error " << sci(worst) << "\n";
  return checks.all ? 0 : kExitCheckFailed;
}

/// Runs the configured mode, writing every artifact under `out`.
/// Returns 0, or kExitCheckFailed when a check of the mode fails.
/// Configuration, file and solver errors propagate as exceptions.
inline int run(const RunConfig& c, const fs::path& out, std::ostream& log = std::cout) {
  fs::create_directories(out);
  write_json(out / "config.json", c.raw());
  const std::string m = c.mode();
  if (m == "forward") return run_forward(c, out, log);
  if (m == "invert") return run_invert(c, out, log);
  if (m == "theory-sequences") return run_theory_sequences(c, out, log);
  if (m == "theory-audit") return run_theory_audit(c, out, log);
  if (m == "perturbation-lab") return run_perturbation_lab(c, out, log);
  if (m == "mms") return run_mms(c, out, log);
  if (m == "gradient-check") return run_gradient_check(c, out, log);
  throw InvariantError("config: key 'mode': unknown mode '" + m + "'");
}

}  // namespace wsqp
