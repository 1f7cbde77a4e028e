#include "pdmp/hodgkin_huxley.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdmp::hh {

namespace {
// y / (e^y - 1), with the removable singularity expanded to second order.
double expm1_ratio(double y) {
  if (std::abs(y) < 1e-6) return 1.0 - 0.5 * y + y * y / 12.0;
  return y / std::expm1(y);
}
}  // namespace

Family family(ChannelState s) {
  const int i = static_cast<int>(s);
  if (i <= static_cast<int>(ChannelState::n4)) return Family::K;
  if (i <= static_cast<int>(ChannelState::m3h1)) return Family::Na;
  return Family::ChR2;
}

std::vector<ChannelState> family_states(Family f) {
  using C = ChannelState;
  switch (f) {
    case Family::K: return {C::n0, C::n1, C::n2, C::n3, C::n4};
    case Family::Na:
      return {C::m0h0, C::m1h0, C::m2h0, C::m3h0, C::m0h1, C::m1h1, C::m2h1, C::m3h1};
    case Family::ChR2: return {C::O1, C::O2, C::C1, C::C2};
  }
  throw std::logic_error("family_states: bad family");
}

std::string to_string(ChannelState s) {
  static const char* names[kChannelStateCount] = {
      "n0", "n1", "n2", "n3", "n4", "m0h0", "m1h0", "m2h0", "m3h0",
      "m0h1", "m1h1", "m2h1", "m3h1", "O1", "O2", "C1", "C2"};
  return names[static_cast<int>(s)];
}

Family family_from_string(const std::string& name) {
  if (name == "k" || name == "K") return Family::K;
  if (name == "na" || name == "Na") return Family::Na;
  if (name == "chr2" || name == "ChR2") return Family::ChR2;
  throw std::runtime_error("unknown channel family '" + name + "'");
}

double alpha_n(double u) { return 0.1 * expm1_ratio(1.0 - 0.1 * u); }
double beta_n(double u) { return 0.125 * std::exp(-u / 80.0); }
double alpha_m(double u) { return expm1_ratio(2.5 - 0.1 * u); }
double beta_m(double u) { return 4.0 * std::exp(-u / 18.0); }
double alpha_h(double u) { return 0.07 * std::exp(-u / 20.0); }
double beta_h(double u) { return 1.0 / (std::exp(3.0 - 0.1 * u) + 1.0); }

double mollifier_bump(double z) {
  if (z <= -1.0 || z >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - z * z));
}

Mollifier mollifier(double z_i, double gamma, int field_modes, int panels) {
  if (gamma <= 0.0 || gamma >= std::min(z_i, 1.0 - z_i))
    throw std::invalid_argument("mollifier: gamma must satisfy 0 < gamma < min(z_i, 1-z_i)");
  auto phi = [=](double z) { return mollifier_bump((z - z_i) / gamma) / gamma; };
  Mollifier m;
  m.field = project(phi, field_modes, panels);
  m.lip_constant = norm(m.field, NormKind::H1V);
  return m;
}

double HHParams::v_min() const { return std::min({v_k, v_na, v_leak, v_chr2}); }
double HHParams::v_max() const { return std::max({v_k, v_na, v_leak, v_chr2}); }
double HHParams::site_position(int i) const { return (i + 1) / static_cast<double>(sites + 1); }

void HHParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::runtime_error(std::string("hh config: ") + what);
  };
  require(c_m > 0.0, "hh.c_m must be positive");
  require(g_k >= 0.0 && g_na >= 0.0 && g_leak >= 0.0 && g_chr2 >= 0.0,
          "hh conductances must be nonnegative");
  require(rho >= 0.0 && rho <= 1.0, "hh.rho must lie in [0,1]");
  require(eps1 >= 0.0 && eps2 >= 0.0 && k_d1 >= 0.0 && k_d2 >= 0.0 && e12 >= 0.0 &&
              e21 >= 0.0 && k_r >= 0.0,
          "hh light-channel rate constants must be nonnegative");
  require(sites >= 1, "hh.sites must be at least 1");
  require(static_cast<int>(site_families.size()) == sites,
          "hh.families must list one family per site");
  require(a_max > 0.0, "hh.a_max must be positive");
  require(control_points >= 1, "hh.control_points must be at least 1");
  require(kappa >= 0.0, "hh.kappa must be nonnegative");
  require(field_modes >= 1, "hh.field_modes must be at least 1");
  require(panels >= 2 && panels % 2 == 0, "hh.panels must be even and >= 2");
  require(horizon > 0.0, "hh.horizon must be positive");
  for (int i = 0; i < sites; ++i) {
    const double z = site_position(i);
    require(gamma > 0.0 && gamma < std::min(z, 1.0 - z),
            "hh.gamma violates the mollifier support condition");
  }
  if (v_ref.modes() != 0 && v_ref.modes() != field_modes)
    throw std::runtime_error("hh.v_ref must be band-limited to hh.field_modes coefficients");
}

ConfigCodec::ConfigCodec(std::vector<Family> site_families) : families_(std::move(site_families)) {
  for (Family f : families_) {
    site_states_.push_back(family_states(f));
    count_ *= static_cast<int>(site_states_.back().size());
  }
}

int ConfigCodec::encode(const std::vector<ChannelState>& states) const {
  if (states.size() != families_.size())
    throw std::invalid_argument("ConfigCodec::encode: wrong site count");
  int mode = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& opts = site_states_[i];
    const auto it = std::find(opts.begin(), opts.end(), states[i]);
    if (it == opts.end())
      throw std::invalid_argument("ConfigCodec::encode: state outside the site's family");
    mode = mode * static_cast<int>(opts.size()) + static_cast<int>(it - opts.begin());
  }
  return mode;
}

std::vector<ChannelState> ConfigCodec::decode(int mode) const {
  if (mode < 0 || mode >= count_) throw std::invalid_argument("ConfigCodec::decode: mode out of range");
  std::vector<ChannelState> states(families_.size());
  for (int i = static_cast<int>(families_.size()) - 1; i >= 0; --i) {
    const int n = static_cast<int>(site_states_[i].size());
    states[i] = site_states_[i][mode % n];
    mode /= n;
  }
  return states;
}

HHModel::HHModel(HHParams params)
    : params_(std::move(params)), codec_(params_.site_families) {
  params_.validate();
  if (params_.v_ref.modes() == 0) params_.v_ref = SpectralField::zero(params_.field_modes);
  for (int i = 0; i < params_.sites; ++i)
    mollifiers_.push_back(
        mollifier(params_.site_position(i), params_.gamma, params_.field_modes, params_.panels));
  rate_bound_ = compute_rate_bound();
}

double HHModel::phi(const SpectralField& v, int site) const {
  return inner(v, mollifiers_.at(site).field);
}

double HHModel::clip_voltage(double u) const {
  const double lo = params_.v_min() - params_.clip_margin;
  const double hi = params_.v_max() + params_.clip_margin;
  const double w = params_.clip_margin;  // C1 shoulder width
  if (u > hi) return hi + w * std::tanh((u - hi) / w);
  if (u < lo) return lo - w * std::tanh((lo - u) / w);
  return u;
}

std::vector<std::pair<ChannelState, double>> HHModel::single_site_rates(ChannelState s, double u,
                                                                        double a) const {
  if (a < 0.0 || a > params_.a_max)
    throw std::invalid_argument("single_site_rates: control outside [0, a_max]");
  const double z = clip_voltage(u);
  using C = ChannelState;
  std::vector<std::pair<ChannelState, double>> out;
  switch (s) {
    case C::n0: out = {{C::n1, 4.0 * alpha_n(z)}}; break;
    case C::n1: out = {{C::n2, 3.0 * alpha_n(z)}, {C::n0, beta_n(z)}}; break;
    case C::n2: out = {{C::n3, 2.0 * alpha_n(z)}, {C::n1, 2.0 * beta_n(z)}}; break;
    case C::n3: out = {{C::n4, alpha_n(z)}, {C::n2, 3.0 * beta_n(z)}}; break;
    case C::n4: out = {{C::n3, 4.0 * beta_n(z)}}; break;

    case C::m0h0: out = {{C::m1h0, 3.0 * alpha_m(z)}}; break;
    case C::m1h0: out = {{C::m2h0, 2.0 * alpha_m(z)}, {C::m0h0, beta_m(z)}}; break;
    case C::m2h0: out = {{C::m3h0, alpha_m(z)}, {C::m1h0, 2.0 * beta_m(z)}}; break;
    case C::m3h0: out = {{C::m2h0, 3.0 * beta_m(z)}}; break;
    case C::m0h1: out = {{C::m1h1, 3.0 * alpha_m(z)}}; break;
    case C::m1h1: out = {{C::m2h1, 2.0 * alpha_m(z)}, {C::m0h1, beta_m(z)}}; break;
    case C::m2h1: out = {{C::m3h1, alpha_m(z)}, {C::m1h1, 2.0 * beta_m(z)}}; break;
    case C::m3h1: out = {{C::m2h1, 3.0 * beta_m(z)}}; break;

    // Light-gated rows are voltage-independent; only C1->O1 and C2->O2 see the control.
    case C::O1: out = {{C::C1, params_.k_d1}, {C::O2, params_.e12}}; break;
    case C::O2: out = {{C::O1, params_.e21}, {C::C2, params_.k_d2}}; break;
    case C::C1: out = {{C::O1, params_.eps1 * a}}; break;
    case C::C2: out = {{C::O2, params_.eps2 * a}, {C::C1, params_.k_r}}; break;
  }
  if (params_.h_gate && family(s) == Family::Na) {
    const int i = static_cast<int>(s);
    const bool h_open = i >= static_cast<int>(C::m0h1);
    const int flipped = h_open ? i - 4 : i + 4;
    out.emplace_back(static_cast<ChannelState>(flipped), h_open ? beta_h(z) : alpha_h(z));
  }
  return out;
}

AffineDrift HHModel::drift(int mode) const {
  const auto states = codec_.decode(mode);
  const double inv_n = 1.0 / params_.sites;
  AffineDrift d;
  d.constant = SpectralField::zero(params_.field_modes);
  for (int i = 0; i < params_.sites; ++i) {
    using C = ChannelState;
    double g_sum = params_.g_leak;
    double gv_sum = params_.g_leak * params_.v_leak;
    if (states[i] == C::n4) {
      g_sum += params_.g_k;
      gv_sum += params_.g_k * params_.v_k;
    }
    if (states[i] == C::m3h1) {
      g_sum += params_.g_na;
      gv_sum += params_.g_na * params_.v_na;
    }
    if (states[i] == C::O1 || states[i] == C::O2) {
      const double g = params_.g_chr2 * (states[i] == C::O1 ? 1.0 : params_.rho);
      g_sum += g;
      gv_sum += g * params_.v_chr2;
    }
    const auto& phi_i = mollifiers_[i].field;
    d.constant += (inv_n * gv_sum) * phi_i;
    d.terms.push_back({inv_n * g_sum, phi_i, phi_i});
  }
  return d;
}

double HHModel::total_rate(const SpectralField& v, int mode, double a) const {
  const auto states = codec_.decode(mode);
  double lam = 0.0;
  for (int i = 0; i < params_.sites; ++i) {
    for (const auto& [_, rate] : single_site_rates(states[i], phi(v, i), a)) lam += rate;
  }
  return lam;
}

std::vector<std::pair<int, double>> HHModel::jump_kernel(const SpectralField& v, int mode,
                                                         double a) const {
  const auto states = codec_.decode(mode);
  double lam = 0.0;
  std::vector<std::pair<int, double>> rows;
  for (int i = 0; i < params_.sites; ++i) {
    for (const auto& [target, rate] : single_site_rates(states[i], phi(v, i), a)) {
      if (rate <= 0.0) continue;
      auto succ = states;
      succ[i] = target;
      rows.emplace_back(codec_.encode(succ), rate);
      lam += rate;
    }
  }
  if (lam <= 0.0) throw std::runtime_error("jump_kernel: total rate is zero (no jump possible)");
  for (auto& [_, p] : rows) p /= lam;
  return rows;
}

double HHModel::running_cost(const SpectralField& v, double a) const {
  if (a < 0.0 || a > params_.a_max)
    throw std::invalid_argument("running_cost: control outside [0, a_max]");
  const double r_cap = std::max(std::abs(params_.v_min()), std::abs(params_.v_max())) +
                       params_.cost_radius_margin;
  const double cap = r_cap * r_cap;
  SpectralField diff = v;
  diff -= params_.v_ref;
  double rho = norm(diff, NormKind::L2);
  rho *= rho;
  // Exact on the physiological compact, smooth constant cap outside.
  const double f_clipped = rho <= cap ? rho : cap + cap * std::tanh((rho - cap) / cap);
  return params_.kappa * f_clipped + a;
}

double HHModel::compute_rate_bound() const {
  const double lo = params_.v_min() - 2.0 * params_.clip_margin;
  const double hi = params_.v_max() + 2.0 * params_.clip_margin;
  const int grid = 2000;
  double bound = 0.0;
  for (int i = 0; i < params_.sites; ++i) {
    double site_max = 0.0;
    for (ChannelState s : family_states(params_.site_families[i])) {
      for (int j = 0; j <= grid; ++j) {
        const double u = lo + (hi - lo) * j / grid;
        double exit = 0.0;
        for (const auto& [_, r] : single_site_rates(s, u, params_.a_max)) exit += r;
        site_max = std::max(site_max, exit);
      }
    }
    bound += site_max;
  }
  return 1.02 * bound;
}

PdmpModel build_model(const HHParams& params) {
  return build_model(std::make_shared<const HHModel>(params));
}

PdmpModel build_model(std::shared_ptr<const HHModel> m) {
  const auto& p = m->params();
  PdmpModel model;
  model.mode_count = m->codec().mode_count();
  model.field_modes = p.field_modes;
  model.control_grid.resize(p.control_points);
  for (int i = 0; i < p.control_points; ++i)
    model.control_grid[i] = p.control_points == 1 ? 0.0 : p.a_max * i / (p.control_points - 1);
  model.drift = [m](const SpectralField&, int mode, double) { return m->drift(mode); };
  model.drift_control_free = true;
  model.rate = [m](const SpectralField& v, int mode, double a, double) {
    return m->total_rate(v, mode, a);
  };
  model.kernel = [m](const SpectralField& v, int mode, double a) {
    return m->jump_kernel(v, mode, a);
  };
  model.running_cost = [m](const SpectralField& v, int, double a) {
    return m->running_cost(v, a);
  };
  model.terminal_cost = [](const SpectralField&, int) { return 0.0; };
  model.rate_bound = m->rate_bound();
  model.horizon = p.horizon;
  model.diffusivity = 1.0 / p.c_m;
  const double r_cap = std::max(std::abs(p.v_min()), std::abs(p.v_max())) + p.cost_radius_margin;
  model.cost_bound = p.kappa * 2.0 * r_cap * r_cap + p.a_max;
  return model;
}

HHParams params_from_config(const Config& cfg) {
  HHParams p;
  p.c_m = cfg.get_double("hh.c_m", p.c_m);
  p.g_k = cfg.get_double("hh.g_k", p.g_k);
  p.g_na = cfg.get_double("hh.g_na", p.g_na);
  p.g_leak = cfg.get_double("hh.g_leak", p.g_leak);
  p.g_chr2 = cfg.get_double("hh.g_chr2", p.g_chr2);
  p.v_k = cfg.get_double("hh.v_k", p.v_k);
  p.v_na = cfg.get_double("hh.v_na", p.v_na);
  p.v_leak = cfg.get_double("hh.v_leak", p.v_leak);
  p.v_chr2 = cfg.get_double("hh.v_chr2", p.v_chr2);
  p.rho = cfg.get_double("hh.rho", p.rho);
  p.eps1 = cfg.get_double("hh.eps1", p.eps1);
  p.eps2 = cfg.get_double("hh.eps2", p.eps2);
  p.k_d1 = cfg.get_double("hh.k_d1", p.k_d1);
  p.k_d2 = cfg.get_double("hh.k_d2", p.k_d2);
  p.e12 = cfg.get_double("hh.e12", p.e12);
  p.e21 = cfg.get_double("hh.e21", p.e21);
  p.k_r = cfg.get_double("hh.k_r", p.k_r);
  p.sites = cfg.get_int("hh.sites", p.sites);
  p.gamma = cfg.get_double("hh.gamma", p.gamma);
  p.a_max = cfg.get_double("hh.a_max", p.a_max);
  p.control_points = cfg.get_int("hh.control_points", p.control_points);
  p.kappa = cfg.get_double("hh.kappa", p.kappa);
  p.field_modes = cfg.get_int("workspace.field_modes", p.field_modes);
  p.panels = cfg.get_int("workspace.panels", p.panels);
  p.horizon = cfg.get_double("hh.horizon", p.horizon);
  p.h_gate = cfg.get_bool("hh.h_gate", p.h_gate);
  p.clip_margin = cfg.get_double("hh.clip_margin", p.clip_margin);
  p.cost_radius_margin = cfg.get_double("hh.cost_radius_margin", p.cost_radius_margin);

  const std::string fams = cfg.get_str("hh.families", "chr2");
  p.site_families.clear();
  std::string tok;
  for (std::size_t i = 0; i <= fams.size(); ++i) {
    if (i == fams.size() || fams[i] == ',') {
      if (!tok.empty()) p.site_families.push_back(family_from_string(tok));
      tok.clear();
    } else if (!std::isspace(static_cast<unsigned char>(fams[i]))) {
      tok += fams[i];
    }
  }

  const std::string vref = cfg.get_str("hh.v_ref", "zero");
  if (vref == "zero") {
    p.v_ref = SpectralField::zero(p.field_modes);
  } else if (vref.rfind("const:", 0) == 0) {
    const double c = std::stod(vref.substr(6));
    p.v_ref = project([c](double) { return c; }, p.field_modes, p.panels);
  } else if (vref.rfind("basis:", 0) == 0) {
    const auto rest = vref.substr(6);
    const auto colon = rest.find(':');
    const int k = std::stoi(rest.substr(0, colon));
    const double amp = colon == std::string::npos ? 1.0 : std::stod(rest.substr(colon + 1));
    p.v_ref = amp * SpectralField::basis(p.field_modes, k);
  } else {
    throw std::runtime_error("config: field 'hh.v_ref' must be zero|const:<c>|basis:<k>:<amp>");
  }
  p.validate();
  return p;
}

}  // namespace pdmp::hh
