#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "wsqp/theory.hpp"

using namespace wsqp;

namespace {

// sum_{l>=1} sqrt2^{6-l} ln((3l+5)!), evaluated offline with 60-digit arithmetic.
constexpr double kGammaBarSeries = 589.491501508712271715276800946784976;

double lnf(int n) {
  double s = 0.0;
  for (int i = 2; i <= n; ++i) s += std::log(static_cast<double>(i));
  return s;
}

LedgerInputs feasible_inputs() {
  LedgerInputs in;
  in.nu_min = 1.0;
  in.nu_max = 1.0;
  in.omega_measure = 1.0;
  in.horizon = 1.0;
  in.lambda = 1e-3;
  in.tau = 1.0;
  in.gamma = 1e-300;
  in.C_f = 1.0;
  in.C_a = 1.0;
  in.C_0 = 10.0;
  in.C_bar = 1.0;
  in.L = 1.0;
  in.L_p = 1.0;
  in.L_q = 1.0;
  in.c_hat = 1.0;
  in.c_check = 1.0;
  in.sum_a_linf = 1.0;
  in.dtt_pbar_l2linf = 1.0;
  in.dtt_qbar_l2linf = 1.0;
  // c1 = 2 (1 + 10) + 2 + 40 = 64, delta = 2 (128 + 3 * 64^2) = 24832.
  in.epsilon = 1e-300 / (4.0 * 24832.0) / 2.0;
  return in;
}

}  // namespace

TEST_CASE("LogReal arithmetic") {
  const LogReal a = LogReal::from_double(3.0), b = LogReal::from_double(-5.0);
  CHECK((a * b).to_double() == doctest::Approx(-15.0).epsilon(1e-14));
  CHECK((a / b).to_double() == doctest::Approx(-0.6).epsilon(1e-14));
  CHECK((a + b).to_double() == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK((a - b).to_double() == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(a.pow(2.5).log() == doctest::Approx(2.5 * std::log(3.0)).epsilon(1e-15));
  CHECK(b < a);
  CHECK(LogReal::from_double(0.0).is_zero());
  CHECK((LogReal::from_double(0.0) * a).is_zero());
  const LogReal huge = LogReal::from_log(5000.0);
  CHECK((huge * huge).log() == 10000.0);
  CHECK(LogReal::from_log(-10000.0) < LogReal::from_log(-9999.0));
}

TEST_CASE("log_factorial: examples") {
  CHECK(log_factorial(0).log() == 0.0);
  CHECK(log_factorial(8).log() == std::log(40320.0));
  std::uint64_t f = 1;
  for (int n = 1; n <= 20; ++n) {
    f *= n;
    CHECK(log_factorial(n).log() == std::log(static_cast<double>(f)));
  }
  const LogReal l170 = log_factorial(170);
  CHECK(std::isfinite(l170.log()));
  CHECK(test::rel(l170.log(), lnf(170)) <= 1e-13);
  CHECK(std::isfinite(log_factorial(171).log()));
  CHECK(test::rel(log_factorial(1000).log(), lnf(1000)) <= 1e-13);
  CHECK_THROWS_AS(log_factorial(-1), InvariantError);
}

TEST_CASE("bk: closed forms at k = 0, 1, 2") {
  for (double gamma : {0.5, 1e-3, 1e-200}) {
    const double lg = std::log(gamma);
    CHECK(bk(0, gamma).log() == lg);
    CHECK(test::rel(bk(1, gamma).log(), 2.0 * std::log(40320.0) + std::sqrt(2.0) * lg) <= 1e-15);
    CHECK(test::rel(bk(2, gamma).log(),
                    std::pow(std::sqrt(2.0), 3) * std::log(40320.0) + 2.0 * std::log(39916800.0) +
                        2.0 * lg) <= 1e-15);
  }
  CHECK_THROWS_AS(bk(1, 1.0), InvariantError);
  CHECK_THROWS_AS(bk(1, 0.0), InvariantError);
}

TEST_CASE("bk: recurrence and monotonicity in gamma") {
  const double lg = -600.0;
  CHECK(test::rel(bk_log(1, lg).log(), 2.0 * lnf(8) + std::sqrt(2.0) * lg) <= 1e-13);
  for (int k = 2; k <= 60; ++k) {
    const double rec = 2.0 * lnf(3 * k + 5) + std::sqrt(2.0) * bk_log(k - 1, lg).log();
    CHECK(test::rel(rec, bk_log(k, lg).log()) <= 1e-12);
  }
  for (int k : {0, 1, 5, 30}) CHECK(bk(k, 1e-5) < bk(k, 1e-4));
  CHECK(gamma_bar(1e-300) < gamma_bar(1e-290));
  CHECK(gamma_bar_log(-700.0) < gamma_bar_log(-650.0));
}

TEST_CASE("gamma_bar: series constant, truncation and threshold") {
  CHECK(test::rel(gamma_bar_series(200), kGammaBarSeries) <= 1e-13);
  // The increment stopping rule leaves a tail of a few increments.
  CHECK(test::rel(gamma_bar_log(0.0).log(), kGammaBarSeries) <= 1e-12);
  CHECK(test::rel(gamma_bar_log(0.0, 1e-16).log(), kGammaBarSeries) <= 1e-14);
  CHECK(test::rel(gamma_bar_series(120), gamma_bar_series(240)) < 1e-15);
  // Cutting at l = 60 drops a tail of about 1.5e-5: the terms decay like
  // 2^{-l/2} l ln l, so the tail is bounded by a geometric series.
  const double t61 = gamma_bar_series(61) - gamma_bar_series(60);
  const double tail60 = gamma_bar_series(240) - gamma_bar_series(60);
  CHECK(tail60 > t61);
  CHECK(tail60 < t61 / (1.0 - series_ratio_term(61) / series_ratio_term(60)) * 2.0);
  CHECK(gamma_bar_log(-100.0).log() - gamma_bar_log(-300.0).log() == doctest::Approx(200.0));

  const double thr = gamma_threshold_log();
  CHECK(test::rel(thr, -kGammaBarSeries) <= 1e-12);
  double lo = -1000.0, hi = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gamma_bar_log(mid).log() < 0.0 ? lo : hi) = mid;
  }
  CHECK(std::abs(lo - thr) <= 1e-9);
  CHECK(gamma_bar_log(thr - 1e-6).log() < 0.0);
  CHECK(gamma_bar_log(thr + 1e-6).log() > 0.0);
}

TEST_CASE("gamma_bar series passes the ratio test from l = 4") {
  for (int l = 4; l <= 200; ++l) CHECK(series_ratio_term(l + 1) / series_ratio_term(l) < 1.0);
}

TEST_CASE("check_sequence_lemma: admissible gamma passes, inadmissible is rejected") {
  const SequenceLemmaReport r = check_sequence_lemma_log(-600.0, 60);
  CHECK(r.monotone);
  CHECK(r.bounded_by_gamma_bar);
  CHECK(r.factorial_bound);
  CHECK(r.recurrence);
  CHECK(r.rows.size() == 61);
  const SequenceLemmaReport edge = check_sequence_lemma_log(gamma_threshold_log() - 1e-6, 60);
  CHECK(edge.all_pass());
  CHECK(check_sequence_lemma(1e-300, 60).all_pass());
  CHECK_THROWS_AS(check_sequence_lemma(0.5, 60), InvariantError);
  CHECK_THROWS_AS(check_sequence_lemma_log(-600.0, 1), InvariantError);
}

TEST_CASE("check_xk_step: examples") {
  const double lg = -600.0, delta = 3.0;
  const LogReal fd = LogReal::from_double(4.0 * delta);
  for (int k = 1; k <= 30; ++k) {
    const LogReal xp = bk_log(k - 1, lg) / fd;
    const LogReal xc = bk_log(k, lg) / fd;
    const LogReal s = xp + xc;
    const LogReal xn = LogReal::from_double(delta) * log_factorial(3 * k + 5).pow(4.0) * s * s;
    const XkStepResult r = check_xk_step(xp, xc, xn, k, delta, lg);
    CHECK(r.hypotheses);
    CHECK(r.conclusion);
    CHECK(r.verdict == XkVerdict::conclusion_holds);
    CHECK(check_xk_step(xp, xc, LogReal::from_double(0.0), k, delta, lg).implication());
    const XkStepResult bad = check_xk_step(xp, xc * LogReal::from_double(10.0), xn, k, delta, lg);
    CHECK_FALSE(bad.hypotheses);
    CHECK(bad.verdict == XkVerdict::hypothesis_fails);
    CHECK(bad.implication());
  }
}

TEST_CASE("ConstantLedger: hand substitution") {
  LedgerInputs in = feasible_inputs();
  in.nu_min = 0.25;
  in.nu_max = 4.0;
  in.omega_measure = 2.0;
  in.horizon = 1.5;
  in.C_a = 0.7;
  in.C_0 = 3.0;
  in.C_bar = 0.4;
  in.c_hat = 1.3;
  in.L = 2.5;
  in.gamma = 1e-5;
  in.L_p = 2.0;
  in.L_q = 7.0;
  in.dtt_qbar_l2linf = 0.3;
  in.dtt_pbar_l2linf = 0.2;
  const ConstantLedger l = ConstantLedger::derive(in);
  const double c = 16.0;
  const double c1 = 1.3 * (2.0 * 0.7 * c * 1.5 * (0.4 + 3.0) + 2.0 * 0.4 + 4.0 * 3.0);
  const double delta = 2.0 * 2.5 * (2.0 * c1 + 3.0 * std::sqrt(2.0) * c1 * c1);
  const double c0 = 3.0 * (1.3 * (1e-5 / (2.0 * delta)) * (0.7 * c * 1.5 + 1.0) + 1.0);
  CHECK(l.c == c);
  CHECK(l.c1 == c1);
  CHECK(l.delta == delta);
  CHECK(l.c0 == c0);
  CHECK(l.c_L == std::max({2.0 * 0.3, 7.0 * 0.2, 1.0}));
  CHECK(test::rel(l.gamma_bar.log(), std::log(1e-5) + kGammaBarSeries) <= 1e-12);

  LedgerInputs missing = in;
  missing.C_a.reset();
  CHECK_THROWS_WITH_AS(ConstantLedger::derive(missing), doctest::Contains("C_a"), InvariantError);
}

TEST_CASE("assumption4_audit: feasible ledger passes, violated epsilon is binding") {
  const ConstantLedger ok = ConstantLedger::derive(feasible_inputs());
  CHECK(ok.c1 == 64.0);
  CHECK(ok.delta == 24832.0);
  const AuditReport a = assumption4_audit(ok);
  for (const AuditItem& it : a.items) CHECK_MESSAGE(it.pass, it.name);
  CHECK(a.all_pass);

  LedgerInputs bad_in = feasible_inputs();
  bad_in.epsilon = 2.0 * (1e-300 / (4.0 * 24832.0));
  const AuditReport b = assumption4_audit(ConstantLedger::derive(bad_in));
  CHECK_FALSE(b.all_pass);
  CHECK(b.binding == "epsilon <= gamma/(4 delta)");
  CHECK_FALSE(b.items.front().pass);
  CHECK(b.items.front().log_margin == doctest::Approx(-std::log(2.0)).epsilon(1e-9));

  LedgerInputs no_eps = feasible_inputs();
  no_eps.epsilon.reset();
  CHECK_THROWS_AS(assumption4_audit(ConstantLedger::derive(no_eps)), InvariantError);
}

TEST_CASE("lipschitz_constants_A1: examples") {
  const A1Constants k = lipschitz_constants_A1(1.0, 1.0, 1.0, 1.0, 1.0, 0.5);
  CHECK(k.C1 == 6.0);
  CHECK(k.C2 == 4.0);
  CHECK(k.C3 == 2.0);
  CHECK(k.C4 == 1.0);
  CHECK(k.L_bound == std::sqrt(std::max({36.0 / 0.5 + 4.0 + 1.0, 1.0 + 1.0 / 0.5, 2.0}) / 0.125));
  const A1Constants z = lipschitz_constants_A1(2.0, 3.0, 0.0, 1.0, 0.7, 0.5);
  CHECK(z.C2 == 0.0);
  CHECK(z.C1 == 3.0 * 4.0 * 3.0 * 0.7);
  CHECK_THROWS_AS(lipschitz_constants_A1(1.0, 1.0, 1.0, 1.0, 1.0, 0.0), InvariantError);
  const ConstantLedger l = ConstantLedger::derive(feasible_inputs());
  CHECK(lipschitz_constants_A1(l, 0.5).C1 == 6.0);
}

TEST_CASE("smooth_bump: examples") {
  const SmoothBump f = smooth_bump(2, 1.0);
  CHECK(f.value(0.0) == 0.0);
  CHECK(f.first(0.0) == 0.0);
  CHECK(f.value(1.0) == std::exp(-1.0));
  const double h = 1e-3;
  CHECK(std::abs(-3 * f.value(0) + 4 * f.value(h) - f.value(2 * h)) / (2 * h) <= h * h);
  CHECK_THROWS_AS(smooth_bump(1, 1.0), InvariantError);
  for (double t : {0.2, 0.5, 0.9}) {
    const double e = 1e-6;
    CHECK(test::rel((f.value(t + e) - f.value(t - e)) / (2 * e), f.first(t)) <= 1e-7);
    CHECK(test::rel((f.first(t + e) - f.first(t - e)) / (2 * e), f.second(t)) <= 1e-7);
  }
}

TEST_CASE("smooth_bump: difference quotients respect the factorial bound") {
  for (int m : {2, 3, 4}) {
    const SmoothBump f(m, 1.0);
    const int n = 4000;
    const double h = 1.0 / n;
    std::vector<double> d(n + 1);
    for (int i = 0; i <= n; ++i) d[i] = f.value(i * h);
    for (int l = 1; l <= 4; ++l) {
      for (int i = 0; i + l <= n; ++i) d[i] = (d[i + 1] - d[i]) / h;
      double worst = 0.0;
      for (int i = 0; i + l <= n; ++i) worst = std::max(worst, std::abs(d[i]));
      CHECK(worst <= f.factorial_bound(l));
      CHECK(f.derivative_bound(l) <= f.factorial_bound(l));
    }
  }
}
