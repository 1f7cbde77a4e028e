#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pdmp/flow.hpp"
#include "pdmp/hodgkin_huxley.hpp"
#include "pdmp/rng.hpp"
#include "pdmp/simulate.hpp"

using namespace pdmp;
using namespace pdmp::hh;

namespace {
SpectralField random_field(Rng& rng, int modes, double scale = 1.0) {
  Eigen::VectorXd c(modes);
  for (int k = 0; k < modes; ++k) c[k] = scale * rng.normal();
  return SpectralField(c);
}

HHParams chr2_params() {
  HHParams p;
  p.sites = 1;
  p.site_families = {Family::ChR2};
  p.gamma = 0.15;
  p.field_modes = 32;
  p.horizon = 2.0;
  return p;
}
}  // namespace

TEST_CASE("channel state families partition the 17 tags") {
  CHECK(family_states(Family::K).size() == 5);
  CHECK(family_states(Family::Na).size() == 8);
  CHECK(family_states(Family::ChR2).size() == 4);
  std::set<ChannelState> all;
  for (Family f : {Family::K, Family::Na, Family::ChR2})
    for (ChannelState s : family_states(f)) {
      CHECK(family(s) == f);
      all.insert(s);
    }
  CHECK(all.size() == kChannelStateCount);
}

TEST_CASE("gating rates and their removable singularities") {
  CHECK(alpha_n(10.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(alpha_m(25.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(beta_n(0.0) == doctest::Approx(0.125));
  CHECK(beta_m(0.0) == doctest::Approx(4.0));
  CHECK(alpha_h(0.0) == doctest::Approx(0.07));
  CHECK(beta_h(0.0) == doctest::Approx(1.0 / (std::exp(3.0) + 1.0)));
  // Continuity across the series switch.
  CHECK(alpha_n(10.0 + 1e-7) == doctest::Approx(alpha_n(10.0 + 1e-5)).epsilon(1e-6));
  CHECK(alpha_m(25.0 - 1e-7) == doctest::Approx(alpha_m(25.0 - 1e-5)).epsilon(1e-6));
}

TEST_CASE("mollifier bump and projection") {
  CHECK(mollifier_bump(0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(mollifier_bump(1.0) == 0.0);
  CHECK(mollifier_bump(-1.0) == 0.0);

  const double mass = simpson([](double z) { return mollifier_bump(z); }, -1.0, 1.0, 2048);
  CHECK(mass == doctest::Approx(0.443994).epsilon(1e-5));

  // Unit-mass scaling is independent of gamma.
  for (double gamma : {0.1, 0.2}) {
    const auto m = mollifier(0.5, gamma, 64, 2048);
    double integral = 0.0;
    constexpr double kPi = 3.14159265358979323846;
    for (int k = 1; k <= 64; ++k)
      integral += m.field.coeff(k - 1) * std::sqrt(2.0) * (1.0 - std::cos(k * kPi)) / (k * kPi);
    CHECK(integral == doctest::Approx(mass).epsilon(1e-4));
  }

  // Center symmetry kills even modes.
  const auto c = mollifier(0.5, 0.2, 32, 2048);
  for (int k = 2; k <= 32; k += 2) CHECK(std::abs(c.field.coeff(k - 1)) < 1e-10);

  CHECK_THROWS_AS(mollifier(0.1, 0.2, 16, 256), std::invalid_argument);
}

TEST_CASE("local potential is Lipschitz in the weak norm") {
  const HHModel model(chr2_params());
  const auto& moll = model.site_mollifier(0);
  Rng rng(derive_seed(21, "phi_lip", 0));
  for (int i = 0; i < 100; ++i) {
    const auto v = random_field(rng, 32, 10.0);
    const auto w = random_field(rng, 32, 10.0);
    const double lhs = std::abs(model.phi(v, 0) - model.phi(w, 0));
    REQUIRE(lhs <= moll.lip_constant * norm(v - w, NormKind::Minus1) + 1e-9);
  }
  // Band-limited lift of 1 sees the mollifier mass.
  const auto one = project([](double) { return 1.0; }, 32, 1024);
  CHECK(model.phi(one, 0) == doctest::Approx(0.443994).epsilon(1e-3));
}

TEST_CASE("drift assembles the printed per-site form") {
  HHParams p = chr2_params();
  p.site_families = {Family::K};
  p.g_k = 1.0;
  p.g_na = 0.0;
  p.g_leak = 0.0;
  p.g_chr2 = 0.0;
  p.v_k = -12.0;
  const HHModel model(p);

  // Site in n4: constant part -12 * phi, linear weight 1.
  const int mode_n4 = model.codec().encode({ChannelState::n4});
  const auto d = model.drift(mode_n4);
  REQUIRE(d.terms.size() == 1);
  CHECK(d.terms[0].weight == doctest::Approx(1.0));
  const auto& phi = model.site_mollifier(0).field;
  for (int k = 0; k < 32; ++k)
    CHECK(d.constant.coeff(k) == doctest::Approx(-12.0 * phi.coeff(k)).epsilon(1e-12));

  // Closed state with zero conductances: zero drift.
  const int mode_n0 = model.codec().encode({ChannelState::n0});
  const auto d0 = model.drift(mode_n0);
  Rng rng(derive_seed(1, "d0", 0));
  CHECK(norm(d0.value(random_field(rng, 32)), NormKind::L2) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("drift is Lipschitz in the weak norm with the spectral constant") {
  const HHModel model(chr2_params());
  const int mode_o1 = model.codec().encode({ChannelState::O1});
  const auto d = model.drift(mode_o1);
  double lip = 0.0;
  for (const auto& term : d.terms)
    lip += term.weight * norm(term.probe, NormKind::H1V) * norm(term.emitter, NormKind::Minus1);
  Rng rng(derive_seed(22, "drift_lip", 0));
  for (int i = 0; i < 100; ++i) {
    const auto v = random_field(rng, 32, 20.0);
    const auto w = random_field(rng, 32, 20.0);
    const double lhs = norm(d.value(v) - d.value(w), NormKind::Minus1);
    REQUIRE(lhs <= lip * norm(v - w, NormKind::Minus1) + 1e-9);
  }
}

TEST_CASE("single-site rate table") {
  const HHModel model(chr2_params());
  const auto c1_dark = model.single_site_rates(ChannelState::C1, 0.0, 0.0);
  REQUIRE(c1_dark.size() == 1);
  CHECK(c1_dark[0].first == ChannelState::O1);
  CHECK(c1_dark[0].second == 0.0);

  const auto& p = model.params();
  const auto o1 = model.single_site_rates(ChannelState::O1, -3.0, 0.7);
  REQUIRE(o1.size() == 2);
  CHECK(o1[0].first == ChannelState::C1);
  CHECK(o1[0].second == doctest::Approx(p.k_d1));
  CHECK(o1[1].first == ChannelState::O2);
  CHECK(o1[1].second == doctest::Approx(p.e12));

  // Ladder multiplicities at u = 0.
  const auto n0 = model.single_site_rates(ChannelState::n0, 0.0, 0.0);
  REQUIRE(n0.size() == 1);
  CHECK(n0[0].second == doctest::Approx(4.0 * alpha_n(0.0)));
  const auto n3 = model.single_site_rates(ChannelState::n3, 0.0, 0.0);
  CHECK(n3[0].second == doctest::Approx(alpha_n(0.0)));
  CHECK(n3[1].second == doctest::Approx(3.0 * beta_n(0.0)));
  const auto m1 = model.single_site_rates(ChannelState::m1h0, 0.0, 0.0);
  CHECK(m1[0].second == doctest::Approx(2.0 * alpha_m(0.0)));
  CHECK(m1[1].second == doctest::Approx(beta_m(0.0)));
  // h-gate flip appended when enabled.
  CHECK(m1.back().first == ChannelState::m1h1);
  CHECK(m1.back().second == doctest::Approx(alpha_h(0.0)));

  CHECK_THROWS_AS(model.single_site_rates(ChannelState::C1, 0.0, 5.0), std::invalid_argument);
}

TEST_CASE("total rate is affine in the control through the light rows") {
  const HHModel model(chr2_params());
  const auto& p = model.params();
  const auto v = SpectralField::zero(32);
  for (ChannelState s : {ChannelState::C1, ChannelState::C2}) {
    const int mode = model.codec().encode({s});
    const double slope = s == ChannelState::C1 ? p.eps1 : p.eps2;
    const double diff = model.total_rate(v, mode, 0.8) - model.total_rate(v, mode, 0.0);
    CHECK(diff == doctest::Approx(slope * 0.8).epsilon(1e-12));
  }
}

TEST_CASE("jump kernel rows normalize and respect symmetry") {
  HHParams p = chr2_params();
  p.sites = 2;
  p.site_families = {Family::ChR2, Family::ChR2};
  p.gamma = 0.12;
  const HHModel model(p);
  const auto v = SpectralField::zero(32);

  const int both_c1 = model.codec().encode({ChannelState::C1, ChannelState::C1});
  const auto rows = model.jump_kernel(v, both_c1, 1.0);
  REQUIRE(rows.size() == 2);  // identical sites: equal openings
  CHECK(rows[0].second == doctest::Approx(0.5));
  CHECK(rows[1].second == doctest::Approx(0.5));

  const int c1_o1 = model.codec().encode({ChannelState::C1, ChannelState::O1});
  double sum = 0.0;
  for (const auto& [_, prob] : model.jump_kernel(v, c1_o1, 0.3)) sum += prob;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // Dark, single eligible transition (C2 -> C1 at K_r when a = 0... C2->O2 rate 0).
  const int c2_c1 = model.codec().encode({ChannelState::C2, ChannelState::C1});
  const auto dark = model.jump_kernel(v, c2_c1, 0.0);
  double total = 0.0;
  for (const auto& [_, prob] : dark) total += prob;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  const int both_o1_dark = model.codec().encode({ChannelState::C1, ChannelState::C1});
  CHECK_THROWS_AS(model.jump_kernel(v, both_o1_dark, 0.0), std::runtime_error);
}

TEST_CASE("running cost") {
  HHParams p = chr2_params();
  p.kappa = 1.0;
  const HHModel model(p);
  CHECK(model.running_cost(model.params().v_ref, 0.0) == doctest::Approx(0.0));
  CHECK(model.running_cost(model.params().v_ref + SpectralField::basis(32, 1), 0.3) ==
        doctest::Approx(1.3));

  HHParams q = chr2_params();
  q.kappa = 0.0;
  const HHModel flat(q);
  CHECK(flat.running_cost(SpectralField::basis(32, 1), 0.4) == doctest::Approx(0.4));
}

TEST_CASE("rate bound dominates sampled rates") {
  const HHModel model(chr2_params());
  Rng rng(derive_seed(23, "rate_bound", 0));
  for (int i = 0; i < 10000; ++i) {
    const auto v = random_field(rng, 32, 40.0);
    const int mode = static_cast<int>(rng.next_u64() % model.codec().mode_count());
    const double a = rng.uniform() * model.params().a_max;
    REQUIRE(model.total_rate(v, mode, a) <= model.rate_bound());
  }
}

TEST_CASE("built model delegates to the hh pieces") {
  auto shared = std::make_shared<const HHModel>(chr2_params());
  const PdmpModel m = build_model(shared);
  CHECK(m.mode_count == 4);
  CHECK(m.diffusivity == doctest::Approx(1.0));
  const auto v = SpectralField::basis(32, 1);
  const int mode = shared->codec().encode({ChannelState::O1});
  CHECK(m.rate(v, mode, 0.0, 0.0) == doctest::Approx(shared->total_rate(v, mode, 0.0)));
  CHECK(m.terminal_cost(v, mode) == 0.0);
  double sum = 0.0;
  for (const auto& [_, prob] : m.kernel(v, mode, 0.5)) sum += prob;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dark flows preserve the voltage band") {
  HHParams p = chr2_params();
  p.horizon = 1.0;
  auto shared = std::make_shared<const HHModel>(p);
  const PdmpModel m = build_model(shared);
  const double v_lo = p.v_min(), v_hi = p.v_max();

  Rng rng(derive_seed(24, "invariance", 0));
  FlowEngine engine(m);
  for (int trial = 0; trial < 20; ++trial) {
    // Smooth admissible start with pointwise values in [v_lo, v_hi].
    const double amp = rng.uniform();
    const double level = v_lo + (v_hi - v_lo) * (0.25 + 0.5 * rng.uniform());
    auto u = [&](double z) {
      const double margin = 0.45 * (v_hi - v_lo);
      return level + amp * margin * std::sin(2.0 * 3.14159265358979323846 * z) *
                         4.0 * z * (1.0 - z);
    };
    const auto x0 = project(u, 32, 512);
    double tail = 0.0;
    for (int j = 0; j <= 100; ++j) {
      const double z = j / 100.0;
      tail = std::max(tail, std::abs(eval_pointwise(x0, z) - (z == 0.0 || z == 1.0 ? 0.0 : u(z))));
    }
    const double tau = tail + 1e-3;
    for (int mode = 0; mode < m.mode_count; ++mode) {
      const auto xT = engine.at(x0, mode, 0.0, 1.0);
      for (int j = 1; j < 100; ++j) {
        const double val = eval_pointwise(xT, j / 100.0);
        REQUIRE(val >= std::min(v_lo, 0.0) - tau);
        REQUIRE(val <= std::max(v_hi, 0.0) + tau);
      }
    }
  }
}

TEST_CASE("config codec round trip") {
  ConfigCodec codec({Family::K, Family::ChR2, Family::Na});
  CHECK(codec.mode_count() == 5 * 4 * 8);
  for (int mode = 0; mode < codec.mode_count(); mode += 7) {
    const auto states = codec.decode(mode);
    CHECK(codec.encode(states) == mode);
  }
  CHECK_THROWS_AS(codec.decode(codec.mode_count()), std::invalid_argument);
}

TEST_CASE("config parsing surfaces field paths") {
  const auto cfg = Config::parse_string(
      "[hh]\nsites = 1\nfamilies = chr2\ngamma = 0.15\nkappa = 0.5\n[workspace]\nfield_modes = "
      "16\npanels = 256\n");
  const auto p = params_from_config(cfg);
  CHECK(p.sites == 1);
  CHECK(p.kappa == doctest::Approx(0.5));
  CHECK(p.field_modes == 16);

  const auto bad = Config::parse_string("[hh]\nsites = 2\nfamilies = chr2\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(params_from_config(bad)),
                       doctest::Contains("hh.families"), std::runtime_error);
}

TEST_CASE("voltage clamp is exact inside and bounded outside") {
  const HHModel model(chr2_params());
  const auto& p = model.params();
  CHECK(model.clip_voltage(3.0) == 3.0);
  CHECK(model.clip_voltage(p.v_min()) == p.v_min());
  CHECK(model.clip_voltage(1e6) <= p.v_max() + 2.0 * p.clip_margin);
  CHECK(model.clip_voltage(-1e6) >= p.v_min() - 2.0 * p.clip_margin);
}
