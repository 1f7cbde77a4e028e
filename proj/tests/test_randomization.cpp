#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pdmp/primal.hpp"
#include "pdmp/randomization.hpp"
#include "pdmp/rng.hpp"
#include "pdmp/stats.hpp"

using namespace pdmp;

namespace {
ToyParams rich_toy() {
  ToyParams p;
  p.mode_rates = {1.0, 0.6, 1.4};
  p.mode_costs = {1.0, 0.2, 0.5};
  p.terminal_costs = {0.0, 0.4, 0.1};
  p.control_cost = 0.3;
  p.rate_control_slope = -0.4;
  p.controls = {0.0, 0.5, 1.0};
  p.horizon = 1.0;
  return p;
}

ToyParams quiet_toy() {  // no mode jumps: only the control clock ticks
  ToyParams p;
  p.mode_rates = {0.0};
  p.mode_costs = {0.7};
  p.control_cost = 0.3;
  p.controls = {0.0, 1.0};
  p.horizon = 1.5;
  return p;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  return out;
}
}  // namespace

TEST_CASE("lambda0 and nu policy plumbing") {
  const auto l0 = Lambda0::uniform(3, 2.0);
  CHECK(l0.total() == doctest::Approx(2.0));
  CHECK(l0.weights.size() == 3);
  l0.validate(3);
  CHECK_THROWS_AS(l0.validate(2), std::invalid_argument);
  const Lambda0 nonpos{{1.0, 0.0}};
  CHECK_THROWS_AS(nonpos.validate(2), std::invalid_argument);

  const auto nu = NuPolicy::constant(2.0);
  CHECK(nu.eval(0.0, SpectralField::zero(1), 0, 0.0, 1.0) == doctest::Approx(2.0));

  NuPolicy bad;
  bad.rule = [](double, const SpectralField&, int, double, double) { return 1e9; };
  CHECK_THROWS_AS(static_cast<void>(bad.eval(0.0, SpectralField::zero(1), 0, 0.0, 0.0)),
                  std::runtime_error);
}

TEST_CASE("simulate_xi is reproducible and validates its start time") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);
  Rng a(derive_seed(41, "xi_repro", 0));
  Rng b(derive_seed(41, "xi_repro", 0));
  const auto p1 = simulate_xi(m, l0, nullptr, 0.0, m.zero_field(), 0, 0.0, a);
  const auto p2 = simulate_xi(m, l0, nullptr, 0.0, m.zero_field(), 0, 0.0, b);
  CHECK(p1.jumps.size() == p2.jumps.size());
  CHECK(p1.mode_end == p2.mode_end);
  CHECK(p1.control_end == p2.control_end);
  CHECK(dual_cost(m, p1) == dual_cost(m, p2));

  Rng c(derive_seed(41, "xi_repro", 1));
  CHECK_THROWS_AS(simulate_xi(m, l0, nullptr, 2.0, m.zero_field(), 0, 0.0, c),
                  std::invalid_argument);
}

TEST_CASE("reference control clock is Poisson with the lambda0 mass") {
  const auto m = make_toy(quiet_toy());
  const double mass = 2.0;
  const auto l0 = Lambda0::uniform(2, mass);
  const double mu = mass * m.horizon;  // expected count over [0, T]

  const int n = 4000;
  std::vector<int> counts;
  Rng rng(derive_seed(42, "xi_poisson", 0));
  for (int i = 0; i < n; ++i) {
    const auto p = simulate_xi(m, l0, nullptr, 0.0, m.zero_field(), 0, 0.0, rng);
    int ctrl = 0;
    for (const auto& j : p.jumps) {
      REQUIRE(j.kind == JumpKind::Control);  // mode clock is off
      ++ctrl;
    }
    counts.push_back(ctrl);
  }

  const int kmax = 9;
  std::vector<double> observed(kmax + 1, 0.0), expected(kmax + 1, 0.0);
  double pmf = std::exp(-mu), tail = 1.0;
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) pmf *= mu / k;
    if (k < kmax) {
      expected[k] = n * pmf;
      tail -= pmf;
    } else {
      expected[k] = n * tail;
    }
  }
  for (int c : counts) observed[std::min(c, kmax)] += 1.0;
  const double p_value = chi2_test(observed, expected, 1);
  INFO("chi2 p-value ", p_value);
  CHECK(p_value > 0.01);
}

TEST_CASE("a constant nu rescales the control-clock intensity") {
  const auto m = make_toy(quiet_toy());
  const auto l0 = Lambda0::uniform(2, 1.0);
  const auto nu = NuPolicy::constant(2.0);
  const int n = 4000;
  double sum = 0.0, sumsq = 0.0;
  Rng rng(derive_seed(43, "xi_double", 0));
  for (int i = 0; i < n; ++i) {
    const auto p = simulate_xi(m, l0, &nu, 0.0, m.zero_field(), 0, 0.0, rng);
    const double c = static_cast<double>(p.jumps.size());
    sum += c;
    sumsq += c * c;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / (n - 1));
  CHECK(std::abs(mean - 2.0 * 1.0 * m.horizon) <= 3.0 * se);
}

TEST_CASE("density weight in closed form on jump-free paths") {
  const auto m = make_toy(quiet_toy());
  const double mass = 0.8;
  const auto l0 = Lambda0::uniform(2, mass);
  const double c = 1.7;
  const auto nu = NuPolicy::constant(c);

  Rng rng(derive_seed(44, "xi_weight", 0));
  int seen = 0;
  for (int i = 0; i < 200 && seen < 20; ++i) {
    const auto p = simulate_xi(m, l0, nullptr, 0.25, m.zero_field(), 0, 0.0, rng);
    if (!p.jumps.empty()) continue;
    ++seen;
    const double expect = std::exp((1.0 - c) * mass * (m.horizon - 0.25));
    CHECK(doleans_weight(m, p, nu, l0) == doctest::Approx(expect).epsilon(1e-10));
  }
  REQUIRE(seen >= 5);

  // nu == 1 makes every weight exactly 1.
  const auto unit = NuPolicy::constant(1.0);
  const auto p = simulate_xi(m, l0, nullptr, 0.0, m.zero_field(), 0, 0.0, rng);
  CHECK(doleans_weight(m, p, unit, l0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("density weights have unit mean under the reference law") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);

  NuPolicy bent;
  bent.rule = [](double t, const SpectralField&, int mode, double, double b) {
    return 0.5 + 0.3 * mode + 0.2 * b + 0.1 * t;
  };

  int which = 0;
  for (const auto& nu : {NuPolicy::constant(0.5), NuPolicy::constant(2.0), bent}) {
    const int n = 4000;
    double sum = 0.0, sumsq = 0.0;
    Rng rng(derive_seed(45, "xi_mean", which++));
    for (int i = 0; i < n; ++i) {
      const auto p = simulate_xi(m, l0, nullptr, 0.0, m.zero_field(), 0, 0.0, rng);
      const double w = doleans_weight(m, p, nu, l0);
      sum += w;
      sumsq += w * w;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sumsq / n - mean * mean) / (n - 1));
    INFO("family ", which, ": mean ", mean, " se ", se);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
  }
}

TEST_CASE("direct and weighted estimators agree") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);

  // At nu == 1 the two estimators coincide path by path.
  const auto unit = NuPolicy::constant(1.0);
  const auto d1 = estimate_dual(m, l0, unit, 0.0, m.zero_field(), 0, 0.0, 500,
                                derive_seed(46, "dw", 0), DualMethod::Direct);
  const auto w1 = estimate_dual(m, l0, unit, 0.0, m.zero_field(), 0, 0.0, 500,
                                derive_seed(46, "dw", 0), DualMethod::Weighted);
  CHECK(d1.mean == doctest::Approx(w1.mean).epsilon(1e-12));
  CHECK(d1.se == doctest::Approx(w1.se).epsilon(1e-12));

  // At a tilted nu they agree within combined Monte Carlo error.
  const auto nu = NuPolicy::constant(1.6);
  const auto d = estimate_dual(m, l0, nu, 0.0, m.zero_field(), 0, 0.0, 4000,
                               derive_seed(46, "dw", 1), DualMethod::Direct);
  const auto w = estimate_dual(m, l0, nu, 0.0, m.zero_field(), 0, 0.0, 4000,
                               derive_seed(46, "dw", 2), DualMethod::Weighted);
  const double gap = std::abs(d.mean - w.mean);
  const double se = std::sqrt(d.se * d.se + w.se * w.se);
  INFO("direct ", d.mean, " weighted ", w.mean, " combined se ", se);
  CHECK(gap <= 3.0 * se);
}

TEST_CASE("dual cost reduces to quadrature when nothing moves") {
  ToyParams p = quiet_toy();
  p.controls = {0.0};  // control jumps resample the same value
  p.terminal_costs = {0.25};
  const auto m = make_toy(p);
  const auto l0 = Lambda0::uniform(1, 1.0);
  Rng rng(derive_seed(47, "quad", 0));
  const auto path = simulate_xi(m, l0, nullptr, 0.5, m.zero_field(), 0, 0.0, rng);
  CHECK(dual_cost(m, path) == doctest::Approx(0.7 * (m.horizon - 0.5) + 0.25).epsilon(1e-9));
}

TEST_CASE("every randomized policy upper-bounds the primal value") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);
  const auto res = solve(m, LatticeSpec::mode_only(linspace(0.0, 1.0, 21)), 1e-8, 200, 128);
  REQUIRE(res.converged);
  const double v0 = res.grid.at(0, 0, 0);

  int which = 0;
  for (const auto& nu : {NuPolicy::constant(1.0), NuPolicy::constant(3.0)}) {
    const auto est = estimate_dual(m, l0, nu, 0.0, m.zero_field(), 0, 0.0, 4000,
                                   derive_seed(48, "upper", which++), DualMethod::Direct);
    INFO("J = ", est.mean, " +- ", est.se, ", V = ", v0);
    CHECK(est.mean >= v0 - 3.0 * est.se);
  }
}

TEST_CASE("per-control log family clamps and exponentiates") {
  const auto fam = NuFamily::per_control_log({0.0, 0.5, 1.0}, 0.01, 10.0);
  CHECK(fam.dim == 3);
  Eigen::VectorXd theta(3);
  theta << 0.0, std::log(2.0), 50.0;
  const auto nu = fam.make(theta);
  CHECK(nu.eval(0.0, SpectralField::zero(1), 0, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(nu.eval(0.0, SpectralField::zero(1), 0, 0.0, 0.5) == doctest::Approx(2.0));
  CHECK(nu.eval(0.0, SpectralField::zero(1), 0, 0.0, 1.0) == doctest::Approx(10.0));
}

TEST_CASE("nelder-mead search stays an upper bound and respects its budget") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);
  const auto fam = NuFamily::per_control_log(m.control_grid, 0.05, 20.0);

  const auto res = minimize_over_nu(m, l0, fam, 0.0, m.zero_field(), 0, 0.0, 1500, 40,
                                    derive_seed(49, "nm", 0));
  CHECK(res.evaluations <= 40);
  CHECK(!res.trace.empty());
  CHECK(res.trace.size() == static_cast<std::size_t>(res.evaluations));

  const auto solved = solve(m, LatticeSpec::mode_only(linspace(0.0, 1.0, 21)), 1e-8, 200, 128);
  REQUIRE(solved.converged);
  const double v0 = solved.grid.at(0, 0, 0);
  INFO("search value ", res.value.mean, " +- ", res.value.se, ", V = ", v0);
  CHECK(res.value.mean >= v0 - 3.0 * res.value.se);

  // The search should not do worse than the reference policy it starts from.
  const auto ref = estimate_dual(m, l0, NuPolicy::constant(1.0), 0.0, m.zero_field(), 0, 0.0,
                                 1500, derive_seed(49, "nm_ref", 0), DualMethod::Direct);
  CHECK(res.value.mean <= ref.mean + 3.0 * std::sqrt(res.value.se * res.value.se +
                                                     ref.se * ref.se) + 1e-6);
}
