#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wsqp/error.hpp"

namespace wsqp {

/// Real number stored as a sign and the natural log of its magnitude.
/// Zero has sign 0 and log -inf.
class LogReal {
 public:
  LogReal() = default;

  static LogReal from_log(double log_magnitude, int sign = 1) {
    LogReal r;
    if (sign == 0 || log_magnitude == -std::numeric_limits<double>::infinity()) return r;
    r.sign_ = sign > 0 ? 1 : -1;
    r.log_ = log_magnitude;
    return r;
  }
  static LogReal from_double(double v) {
    if (v == 0.0) return {};
    return from_log(std::log(std::abs(v)), v > 0.0 ? 1 : -1);
  }

  int sign() const { return sign_; }
  double log() const { return log_; }
  bool is_zero() const { return sign_ == 0; }
  double to_double() const { return sign_ == 0 ? 0.0 : sign_ * std::exp(log_); }

  LogReal abs() const { return from_log(log_, sign_ == 0 ? 0 : 1); }

  /// Real power of a positive number.
  LogReal pow(double e) const {
    require(sign_ >= 0, "LogReal: power of a negative number");
    if (sign_ == 0) return e > 0.0 ? LogReal{} : from_log(0.0);
    return from_log(e * log_);
  }

  friend LogReal operator*(const LogReal& a, const LogReal& b) {
    if (a.sign_ == 0 || b.sign_ == 0) return {};
    return from_log(a.log_ + b.log_, a.sign_ * b.sign_);
  }
  friend LogReal operator/(const LogReal& a, const LogReal& b) {
    require(b.sign_ != 0, "LogReal: division by zero");
    if (a.sign_ == 0) return {};
    return from_log(a.log_ - b.log_, a.sign_ * b.sign_);
  }
  friend LogReal operator-(const LogReal& a) { return from_log(a.log_, -a.sign_); }

  friend LogReal operator+(const LogReal& a, const LogReal& b) {
    if (a.sign_ == 0) return b;
    if (b.sign_ == 0) return a;
    const LogReal& big = a.log_ >= b.log_ ? a : b;
    const LogReal& small = a.log_ >= b.log_ ? b : a;
    const double d = small.log_ - big.log_;  // <= 0
    if (a.sign_ == b.sign_) return from_log(big.log_ + std::log1p(std::exp(d)), big.sign_);
    if (d == 0.0) return {};
    return from_log(big.log_ + std::log1p(-std::exp(d)), big.sign_);
  }
  friend LogReal operator-(const LogReal& a, const LogReal& b) { return a + (-b); }

  /// Lexicographic comparison on (sign, log); negative numbers reverse the log order.
  friend bool operator<(const LogReal& a, const LogReal& b) {
    if (a.sign_ != b.sign_) return a.sign_ < b.sign_;
    if (a.sign_ == 0) return false;
    return a.sign_ > 0 ? a.log_ < b.log_ : a.log_ > b.log_;
  }
  friend bool operator>(const LogReal& a, const LogReal& b) { return b < a; }
  friend bool operator<=(const LogReal& a, const LogReal& b) { return !(b < a); }
  friend bool operator>=(const LogReal& a, const LogReal& b) { return !(a < b); }
  friend bool operator==(const LogReal& a, const LogReal& b) {
    return a.sign_ == b.sign_ && (a.sign_ == 0 || a.log_ == b.log_);
  }

 private:
  int sign_ = 0;
  double log_ = -std::numeric_limits<double>::infinity();
};

/// a <= b for nonnegative values, allowing a relative slack in the logs.
inline bool log_leq(const LogReal& a, const LogReal& b, double rel = 1e-12) {
  if (a.is_zero()) return true;
  if (b.is_zero()) return false;
  return a.log() <= b.log() + rel * std::max(1.0, std::abs(b.log()));
}

/// ln(n!). Integer products for n <= 20, log-gamma beyond.
inline LogReal log_factorial(int n) {
  require(n >= 0, "log_factorial: n must be >= 0");
  if (n <= 20) {
    std::uint64_t f = 1;
    for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
    return LogReal::from_log(std::log(static_cast<double>(f)));
  }
  return LogReal::from_log(std::lgamma(static_cast<double>(n) + 1.0));
}

/// sqrt(2)^e
inline double sqrt2_pow(int e) { return std::pow(2.0, 0.5 * e); }

/// b_0 = gamma, b_k = prod_{l=1}^k (3l+5)!^{sqrt2^{2+k-l}} gamma^{sqrt2^k}.
inline LogReal bk(int k, double gamma) {
  require(gamma > 0.0 && gamma < 1.0, "bk: gamma must lie in (0, 1)");
  require(k >= 0, "bk: k must be >= 0");
  double s = sqrt2_pow(k) * std::log(gamma);
  for (int l = 1; l <= k; ++l) s += sqrt2_pow(2 + k - l) * log_factorial(3 * l + 5).log();
  return LogReal::from_log(s);
}

/// Same sequence with ln(gamma) given directly, for gamma below double range.
inline LogReal bk_log(int k, double log_gamma) {
  require(log_gamma < 0.0, "bk: gamma must lie in (0, 1)");
  double s = sqrt2_pow(k) * log_gamma;
  for (int l = 1; l <= k; ++l) s += sqrt2_pow(2 + k - l) * log_factorial(3 * l + 5).log();
  return LogReal::from_log(s);
}

/// Partial sum sum_{l=1}^{l_max} sqrt2^{6-l} ln((3l+5)!).
inline double gamma_bar_series(int l_max) {
  double s = 0.0;
  for (int l = 1; l <= l_max; ++l) s += sqrt2_pow(6 - l) * log_factorial(3 * l + 5).log();
  return s;
}

/// gamma_bar = gamma prod_{l>=1} (3l+5)!^{sqrt2^{6-l}}, summed in logs until the
/// increment drops below tail_tol times the accumulated sum.
inline LogReal gamma_bar_log(double log_gamma, double tail_tol = 1e-13) {
  require(tail_tol > 0.0, "gamma_bar: tail_tol must be positive");
  double s = 0.0;
  for (int l = 1; l <= 100000; ++l) {
    const double inc = sqrt2_pow(6 - l) * log_factorial(3 * l + 5).log();
    s += inc;
    if (inc < tail_tol * std::abs(s)) break;
  }
  return LogReal::from_log(log_gamma + s);
}

inline LogReal gamma_bar(double gamma, double tail_tol = 1e-13) {
  require(gamma > 0.0 && gamma < 1.0, "gamma_bar: gamma must lie in (0, 1)");
  return gamma_bar_log(std::log(gamma), tail_tol);
}

/// ln of the largest gamma with gamma_bar < 1 (exclusive).
inline double gamma_threshold_log(double tail_tol = 1e-13) {
  return -gamma_bar_log(0.0, tail_tol).log();
}

/// d_l = sqrt2^{6-l} (3l+5)(3l+6)/2, the ratio-test sequence of the gamma_bar series.
inline double series_ratio_term(int l) {
  return sqrt2_pow(6 - l) * (3.0 * l + 5.0) * (3.0 * l + 6.0) / 2.0;
}

struct SequenceRow {
  int k = 0;
  double log_bk = 0.0;
  double log_bound = 0.0;  // sqrt2^k ln gamma_bar
};

struct SequenceLemmaReport {
  double log_gamma = 0.0;
  double log_gamma_bar = 0.0;
  bool monotone = true;            // b_k < b_{k-1}
  bool bounded_by_gamma_bar = true;  // b_k <= gamma_bar^{sqrt2^k}
  bool factorial_bound = true;     // (3k+5)!^4 b_{k-1} <= gamma_bar
  bool recurrence = true;          // b_k = (3k+5)!^2 b_{k-1}^{sqrt2}, b_1 = 8!^2 gamma^{sqrt2}
  double max_recurrence_error = 0.0;
  std::vector<SequenceRow> rows;
  bool all_pass() const { return monotone && bounded_by_gamma_bar && factorial_bound && recurrence; }
};

inline SequenceLemmaReport check_sequence_lemma_log(double log_gamma, int k_max) {
  require(k_max >= 2, "check_sequence_lemma: k_max must be >= 2");
  const LogReal gb = gamma_bar_log(log_gamma);
  require(gb.log() < 0.0, "check_sequence_lemma: requires gamma_bar < 1");
  SequenceLemmaReport rep;
  rep.log_gamma = log_gamma;
  rep.log_gamma_bar = gb.log();
  LogReal prev = bk_log(0, log_gamma);
  rep.rows.push_back({0, prev.log(), gb.log()});
  rep.bounded_by_gamma_bar &= log_leq(prev, gb);
  for (int k = 1; k <= k_max; ++k) {
    const LogReal cur = bk_log(k, log_gamma);
    const LogReal fk = log_factorial(3 * k + 5);
    const LogReal bound = gb.pow(sqrt2_pow(k));
    rep.rows.push_back({k, cur.log(), bound.log()});
    rep.monotone &= cur < prev;
    rep.bounded_by_gamma_bar &= log_leq(cur, bound);
    rep.factorial_bound &= log_leq(fk.pow(4.0) * prev, gb);
    const LogReal rec = fk.pow(2.0) * prev.pow(std::sqrt(2.0));
    const double err = std::abs(rec.log() - cur.log()) / std::max(1.0, std::abs(cur.log()));
    rep.max_recurrence_error = std::max(rep.max_recurrence_error, err);
    rep.recurrence &= err <= 1e-12;
    prev = cur;
  }
  return rep;
}

inline SequenceLemmaReport check_sequence_lemma(double gamma, int k_max) {
  require(gamma > 0.0 && gamma < 1.0, "check_sequence_lemma: gamma must lie in (0, 1)");
  return check_sequence_lemma_log(std::log(gamma), k_max);
}

enum class XkVerdict : std::uint8_t { hypothesis_fails, conclusion_holds, conclusion_fails };

struct XkStepResult {
  bool hypotheses = false;
  bool conclusion = false;
  XkVerdict verdict = XkVerdict::hypothesis_fails;
  /// (hypotheses hold) implies (conclusion holds)
  bool implication() const { return !hypotheses || conclusion; }
};

/// Audits one step of the two-step recursion: if x_{k-1} <= b_{k-1}/(4 delta),
/// x_k <= b_k/(4 delta) and x_{k+1} <= delta (3k+5)!^4 (x_k + x_{k-1})^2, then
/// x_{k+1} <= b_{k+1}/(4 delta) should follow.
inline XkStepResult check_xk_step(const LogReal& x_prev, const LogReal& x_cur,
                                  const LogReal& x_next, int k, double delta, double log_gamma) {
  require(k >= 1, "check_xk_step: k must be >= 1");
  require(delta > 0.0, "check_xk_step: delta must be positive");
  require(x_prev.sign() >= 0 && x_cur.sign() >= 0 && x_next.sign() >= 0,
          "check_xk_step: inputs must be nonnegative");
  const LogReal four_delta = LogReal::from_double(4.0 * delta);
  const LogReal d = LogReal::from_double(delta);
  XkStepResult r;
  const bool h1 = log_leq(x_prev, bk_log(k - 1, log_gamma) / four_delta);
  const bool h2 = log_leq(x_cur, bk_log(k, log_gamma) / four_delta);
  const LogReal s = x_cur + x_prev;
  const bool h3 = log_leq(x_next, d * log_factorial(3 * k + 5).pow(4.0) * s * s);
  r.hypotheses = h1 && h2 && h3;
  r.conclusion = log_leq(x_next, bk_log(k + 1, log_gamma) / four_delta);
  r.verdict = !r.hypotheses ? XkVerdict::hypothesis_fails
              : r.conclusion ? XkVerdict::conclusion_holds
                             : XkVerdict::conclusion_fails;
  return r;
}

// ---------------------------------------------------------------------------
// Constant ledger

struct LedgerInputs {
  std::optional<double> nu_min, nu_max, omega_measure, horizon, lambda, tau, epsilon, gamma;
  std::optional<double> C_f, C_a, C_0, C_bar;
  std::optional<double> L, L_p, L_q;
  std::optional<double> c_hat, c_check;
  // Norms of the reference solution entering c_L and C_1..C_4.
  std::optional<double> sum_a_linf, dtt_pbar_l2linf, dtt_qbar_l2linf;
};

struct ConstantLedger {
  LedgerInputs in;
  // derived
  double c = 0.0;
  double c1 = 0.0;
  double delta = 0.0;
  double c0 = 0.0;
  double c_L = 0.0;
  LogReal gamma_bar;

  static double need(const std::optional<double>& v, const char* name) {
    require(v.has_value(), std::string("ledger: missing entry ") + name);
    return *v;
  }

  /// Evaluates c, c_1, delta, c_0, c_L and gamma_bar from the inputs.
  static ConstantLedger derive(const LedgerInputs& in) {
    ConstantLedger l;
    l.in = in;
    const double nu_min = need(in.nu_min, "nu_min");
    const double nu_max = need(in.nu_max, "nu_max");
    require(0.0 < nu_min && nu_min <= nu_max, "ledger: need 0 < nu_min <= nu_max");
    l.c = std::max(std::sqrt(nu_max), 1.0) / std::min(std::sqrt(nu_min), 1.0) / nu_min;
    const double T = need(in.horizon, "T");
    const double omega = need(in.omega_measure, "|Omega|");
    const double ca = need(in.C_a, "C_a");
    const double c0cap = need(in.C_0, "C_0");
    const double cbar = need(in.C_bar, "C_bar");
    const double chat = need(in.c_hat, "c_hat");
    const double L = need(in.L, "L");
    const double gamma = need(in.gamma, "gamma");
    l.c1 = chat * (2.0 * ca * l.c * T * (cbar + c0cap) + 2.0 * cbar + 4.0 * c0cap);
    l.delta = 2.0 * L * (2.0 * l.c1 + 3.0 * std::sqrt(omega) * l.c1 * l.c1);
    l.c0 = c0cap * (chat * (gamma / (2.0 * l.delta)) * (ca * l.c * T + 1.0) + 1.0);
    const double lp = need(in.L_p, "L_p");
    const double lq = need(in.L_q, "L_q");
    l.c_L = std::max({lp * need(in.dtt_qbar_l2linf, "||D_tt q_bar||_{L2 Linf}"),
                      lq * need(in.dtt_pbar_l2linf, "||D_tt p_bar||_{L2 Linf}"), 1.0});
    require(gamma > 0.0 && gamma < 1.0, "ledger: gamma must lie in (0, 1)");
    l.gamma_bar = wsqp::gamma_bar(gamma);
    return l;
  }
};

struct AuditItem {
  std::string name;
  LogReal lhs;
  LogReal rhs;
  bool strict = false;
  bool pass = false;
  double log_margin = 0.0;  // ln rhs - ln lhs; negative when violated
};

struct AuditReport {
  std::vector<AuditItem> items;
  bool all_pass = false;
  std::string binding;  // item with the smallest margin
};

/// Evaluates every smallness condition on epsilon, gamma_bar and C_0 in the log domain.
inline AuditReport assumption4_audit(const ConstantLedger& l) {
  using LR = LogReal;
  auto val = [](double v) { return LR::from_double(v); };
  const LedgerInputs& in = l.in;
  const LR eps = val(ConstantLedger::need(in.epsilon, "epsilon"));
  const LR gamma = val(ConstantLedger::need(in.gamma, "gamma"));
  const LR tau = val(ConstantLedger::need(in.tau, "tau"));
  const LR cf = val(ConstantLedger::need(in.C_f, "C_f"));
  const LR ca = val(ConstantLedger::need(in.C_a, "C_a"));
  const LR c0cap = val(ConstantLedger::need(in.C_0, "C_0"));
  const LR cbar = val(ConstantLedger::need(in.C_bar, "C_bar"));
  const LR chat = val(ConstantLedger::need(in.c_hat, "c_hat"));
  const LR L = val(ConstantLedger::need(in.L, "L"));
  const LR T = val(ConstantLedger::need(in.horizon, "T"));
  const LR so = val(std::sqrt(ConstantLedger::need(in.omega_measure, "|Omega|")));
  const LR c = val(l.c), c1 = val(l.c1), c0 = val(l.c0), delta = val(l.delta), cl = val(l.c_L);
  const LR gb = l.gamma_bar;
  const LR one = val(1.0), two = val(2.0), three = val(3.0), four = val(4.0), eight = val(8.0);
  const LR f3 = log_factorial(3), f5 = log_factorial(5), f8 = log_factorial(8);
  const LR f3sq = f3 * f3, f5sq = f5 * f5, f8sq = f8 * f8;

  AuditReport rep;
  auto add = [&](std::string name, LR lhs, LR rhs, bool strict) {
    AuditItem it{std::move(name), lhs, rhs, strict, false, 0.0};
    it.log_margin = rhs.log() - lhs.log();
    it.pass = strict ? lhs < rhs : lhs <= rhs;
    rep.items.push_back(std::move(it));
  };

  add("epsilon <= gamma/(4 delta)", eps, gamma / (four * delta), false);
  add("epsilon <= c1 gamma_bar/(8 delta)", eps, c1 * gb / (eight * delta), false);
  add("epsilon <= 1/(2L(2 c1 5!^2 + 8 C0 + 2 sqrt|Omega| 5!^2 C0 c1))", eps,
      one / (two * L * (two * c1 * f5sq + eight * c0cap + two * so * f5sq * c0cap * c1)), false);
  {
    const LR inner = two * c0 * f5sq + so * c0cap * (four * c0 * f3sq + four * c0cap + c0 * f5sq);
    const LR arg = f8sq * gamma.pow(std::sqrt(2.0)) / (eight * delta * L * inner);
    add("epsilon <= sqrt(8!^2 gamma^sqrt2 / (8 delta L (2 c0 5!^2 + sqrt|Omega| C0 (4 c0 3!^2 + 4 C0 + c0 5!^2))))",
        eps, arg.pow(0.5), false);
  }
  add("gamma_bar < 1", gb, one, true);
  add("gamma_bar < delta/(L(4 c1 + 2 sqrt|Omega| c1^2))", gb,
      delta / (L * (four * c1 + two * so * c1 * c1)), true);
  add("gamma_bar < 2 delta tau/(c_L(8 C0 + 4 Cbar + 3 c1 C0 + c1 Cbar))", gb,
      two * delta * tau / (cl * (eight * c0cap + four * cbar + three * c1 * c0cap + c1 * cbar)), true);
  add("2 c_hat C_f + c_hat C0 gamma_bar/delta <= C0",
      two * chat * cf + chat * c0cap * gb / delta, c0cap, false);
  add("c_hat(2 C_a + C_a c T (Cbar + C0) gamma_bar/delta + C0 gamma_bar/delta) <= C0",
      chat * (two * ca + ca * c * T * (cbar + c0cap) * gb / delta + c0cap * gb / delta), c0cap,
      false);

  rep.all_pass = true;
  double worst = std::numeric_limits<double>::infinity();
  for (const AuditItem& it : rep.items) {
    rep.all_pass &= it.pass;
    if (it.log_margin < worst) {
      worst = it.log_margin;
      rep.binding = it.name;
    }
  }
  return rep;
}

struct A1Constants {
  double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0;
  double K_state = 0.0;    // C1^2/alpha + C2 + C3/2
  double K_adjoint = 0.0;  // C3/2 + C4^2/alpha
  double K_vi = 0.0;       // 1/alpha
  double L_bound = 0.0;    // sqrt(max K / (alpha/4))
};

inline A1Constants lipschitz_constants_A1(double T, double c, double sum_a_linf,
                                          double dtt_pbar_l2linf, double dtt_qbar_l2linf,
                                          double alpha) {
  require(alpha > 0.0, "lipschitz_constants_A1: alpha must be positive");
  A1Constants k;
  const double T2 = T * T;
  const double T4 = T2 * T2;
  k.C1 = 3.0 * T4 * c * c * sum_a_linf * dtt_pbar_l2linf + 3.0 * T2 * c * dtt_qbar_l2linf;
  k.C2 = 4.0 * T4 * c * c * sum_a_linf;
  k.C3 = 2.0 * T2 * c;
  k.C4 = T2 * c * dtt_pbar_l2linf;
  k.K_state = k.C1 * k.C1 / alpha + k.C2 + 0.5 * k.C3;
  k.K_adjoint = 0.5 * k.C3 + k.C4 * k.C4 / alpha;
  k.K_vi = 1.0 / alpha;
  k.L_bound = std::sqrt(std::max({k.K_state, k.K_adjoint, k.K_vi}) / (0.25 * alpha));
  return k;
}

inline A1Constants lipschitz_constants_A1(const ConstantLedger& l, double alpha) {
  return lipschitz_constants_A1(
      ConstantLedger::need(l.in.horizon, "T"), l.c,
      ConstantLedger::need(l.in.sum_a_linf, "sum ||a_i||_Linf"),
      ConstantLedger::need(l.in.dtt_pbar_l2linf, "||D_tt p_bar||_{L2 Linf}"),
      ConstantLedger::need(l.in.dtt_qbar_l2linf, "||D_tt q_bar||_{L2 Linf}"), alpha);
}

// ---------------------------------------------------------------------------
// Smooth bump

/// f(t) = exp(-(t/scale)^{-m}) for t > 0 and 0 otherwise. Every derivative
/// vanishes at t = 0.
class SmoothBump {
 public:
  SmoothBump(int m, double scale) : m_(m), scale_(scale) {
    require(m >= 2, "smooth_bump: m must be an integer >= 2");
    require(scale > 0.0, "smooth_bump: scale must be positive");
  }

  int m() const { return m_; }
  double scale() const { return scale_; }

  double value(double t) const {
    if (t <= 0.0) return 0.0;
    return std::exp(-std::pow(t / scale_, -m_));
  }
  double first(double t) const {
    if (t <= 0.0) return 0.0;
    const double u = t / scale_;
    return m_ * std::pow(u, -m_ - 1) * value(t) / scale_;
  }
  double second(double t) const {
    if (t <= 0.0) return 0.0;
    const double u = t / scale_;
    const double a = m_ * static_cast<double>(m_) * std::pow(u, -2 * m_ - 2) -
                     m_ * (m_ + 1.0) * std::pow(u, -m_ - 2);
    return a * value(t) / (scale_ * scale_);
  }

  /// (8m)^l l^{(1+1/m) l}: bound on the l-th derivative for scale 1.
  double derivative_bound(int l) const {
    return std::pow(8.0 * m_, l) * std::pow(static_cast<double>(l), (1.0 + 1.0 / m_) * l);
  }
  /// (8m e^2)^l (l!)^2, obtained from l^l e^{-l} <= l!.
  double factorial_bound(int l) const {
    const double f = std::exp(log_factorial(l).log());
    return std::pow(8.0 * m_ * std::exp(2.0), l) * f * f;
  }

 private:
  int m_;
  double scale_;
};

inline SmoothBump smooth_bump(int m, double scale) { return SmoothBump(m, scale); }

}  // namespace wsqp
