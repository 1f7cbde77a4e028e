#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pdmp/bsde.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/rng.hpp"

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

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  return out;
}
}  // namespace

TEST_CASE("zero data gives the zero solution") {
  ToyParams p;
  p.mode_rates = {0.8, 0.8};
  p.mode_costs = {0.0, 0.0};
  p.control_cost = 0.0;
  p.controls = {0.0, 1.0};
  const auto m = make_toy(p);
  PenalizedScheme scheme;
  scheme.n_penalty = 10;
  scheme.dt = 0.01;
  const auto sol = solve_penalized_grid(m, Lambda0::uniform(2, 1.0), scheme,
                                        LatticeSpec::mode_only({0.0, 1.0}), 0.0);
  for (const auto& grid : sol.values) CHECK(grid.max_abs() == doctest::Approx(0.0));
  CHECK(constraint_violation(sol) == doctest::Approx(0.0));
  CHECK(sol.penalty_mass == doctest::Approx(0.0));
}

TEST_CASE("jump-free scheme integrates the running cost exactly") {
  ToyParams p;
  p.mode_rates = {0.0};
  p.mode_costs = {0.7};
  p.terminal_costs = {0.25};
  p.control_cost = 0.0;
  p.controls = {0.0};
  p.horizon = 1.0;
  const auto m = make_toy(p);
  PenalizedScheme scheme;
  scheme.n_penalty = 5;
  scheme.dt = 0.01;
  const auto sol = solve_penalized_grid(m, Lambda0::uniform(1, 1.0), scheme,
                                        LatticeSpec::mode_only({0.0, 1.0}), 0.0);
  REQUIRE(sol.values.size() == 1);
  CHECK(sol.values[0].at(0, 0, 0) == doctest::Approx(0.7 * 1.0 + 0.25).epsilon(1e-12));
}

TEST_CASE("unpenalized scheme matches the fixed-control expectation") {
  const auto toy = rich_toy();
  const auto m = make_toy(toy);
  PenalizedScheme scheme;
  scheme.n_penalty = 0;
  scheme.dt = 0.001;
  const auto sol = solve_penalized_grid(m, Lambda0::uniform(3, 1.0), scheme,
                                        LatticeSpec::mode_only({0.0, 1.0}), 0.0);
  REQUIRE(sol.values.size() == 3);

  for (int ai = 0; ai < 3; ++ai) {
    ToyParams frozen = toy;
    frozen.controls = {toy.controls[ai]};
    const auto mf = make_toy(frozen);
    const auto ref = solve(mf, LatticeSpec::mode_only(linspace(0.0, 1.0, 41)), 1e-10, 200, 128);
    REQUIRE(ref.converged);
    for (int mode = 0; mode < 3; ++mode) {
      const double got = sol.values[ai].at(0, 0, mode);
      const double want = ref.grid.at(0, 0, mode);
      INFO("a index ", ai, " mode ", mode, ": scheme ", got, " expectation ", want);
      REQUIRE(std::abs(got - want) <= 5e-3);
    }
  }
}

TEST_CASE("solutions decrease in the penalty and approach the primal value") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);
  const auto lattice = LatticeSpec::mode_only({0.0, 1.0});

  std::vector<PenalizedSolution> ladder;
  for (int n : {1, 2, 5, 10, 50}) {
    PenalizedScheme scheme;
    scheme.n_penalty = n;
    scheme.dt = 0.005;
    ladder.push_back(solve_penalized_grid(m, l0, scheme, lattice, 0.0));
  }
  for (std::size_t i = 0; i + 1 < ladder.size(); ++i)
    for (std::size_t ai = 0; ai < ladder[i].values.size(); ++ai)
      for (std::size_t ti = 0; ti < ladder[i].times.size(); ++ti)
        for (int mode = 0; mode < 3; ++mode)
          REQUIRE(ladder[i + 1].values[ai].at(static_cast<int>(ti), 0, mode) <=
                  ladder[i].values[ai].at(static_cast<int>(ti), 0, mode) + 1e-6);

  // Constraint violation shrinks along the ladder.
  CHECK(constraint_violation(ladder.back()) <= constraint_violation(ladder.front()) + 1e-12);

  // n = 50 sits near the primal value, uniformly in the control component.
  const auto primal = solve(m, LatticeSpec::mode_only(linspace(0.0, 1.0, 41)), 1e-10, 200, 128);
  REQUIRE(primal.converged);
  const auto cmp = compare_to_primal(ladder.back(), primal.grid);
  INFO("sup err ", cmp.sup_err, " spread ", cmp.control_spread);
  CHECK(cmp.sup_err <= 5e-2);
  CHECK(cmp.control_spread <= 2e-2);
}

TEST_CASE("explicit scheme refuses unstable step sizes") {
  const auto m = make_toy(rich_toy());
  PenalizedScheme scheme;
  scheme.n_penalty = 50;
  scheme.dt = 0.05;  // 0.05 * (1.4 + 51) > 1
  CHECK_THROWS_AS(solve_penalized_grid(m, Lambda0::uniform(3, 1.0), scheme,
                                       LatticeSpec::mode_only({0.0, 1.0}), 0.0),
                  std::invalid_argument);
}

TEST_CASE("regression scheme matches the grid scheme for an exhaustive basis") {
  const auto m = make_toy(rich_toy());
  const auto l0 = Lambda0::uniform(3, 1.0);
  PenalizedScheme scheme;
  scheme.n_penalty = 10;
  scheme.dt = 0.01;
  scheme.path_budget = 4000;

  const auto grid = solve_penalized_grid(m, l0, scheme, LatticeSpec::mode_only({0.0, 1.0}), 0.0);
  const auto basis = Basis::mode_control(3, 3);
  const auto reg = solve_penalized_regression(m, l0, scheme, basis, 0.0, m.zero_field(), 0,
                                              derive_seed(51, "lsmc", 0));
  REQUIRE(reg.times.size() == grid.times.size());

  // Terminal slice reproduces the terminal cost exactly.
  const int last = static_cast<int>(reg.times.size()) - 1;
  for (int mode = 0; mode < 3; ++mode)
    CHECK(reg.value(last, m.zero_field(), mode, 0) ==
          doctest::Approx(m.terminal_cost(m.zero_field(), mode)).epsilon(1e-10));

  // Initial-time values agree with the lattice recursion at well-visited cells.
  for (int ai = 0; ai < 3; ++ai) {
    const double got = reg.value(0, m.zero_field(), 0, ai);
    const double want = grid.values[ai].at(0, 0, 0);
    INFO("a index ", ai, ": regression ", got, " grid ", want);
    REQUIRE(std::abs(got - want) <= 2e-2);
  }
}

TEST_CASE("regression scheme demands a sane path budget") {
  const auto m = make_toy(rich_toy());
  PenalizedScheme scheme;
  scheme.n_penalty = 1;
  scheme.dt = 0.01;
  scheme.path_budget = 10;  // < 10x basis size
  CHECK_THROWS_AS(solve_penalized_regression(m, Lambda0::uniform(3, 1.0), scheme,
                                             Basis::mode_control(3, 3), 0.0, m.zero_field(), 0,
                                             derive_seed(51, "lsmc", 1)),
                  std::invalid_argument);
}
