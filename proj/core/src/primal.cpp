#include "pdmp/primal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdmp {

namespace {
constexpr double kEdgeTol = 1e-9;

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("lattice: empty time grid");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1]) throw std::invalid_argument("lattice: times must increase");
}

/// Index i with axis[i] <= v <= axis[i+1] plus the interpolation weight; the
/// edges tolerate kEdgeTol of rounding.
std::pair<int, double> locate(const std::vector<double>& axis, double v, const char* what) {
  if (axis.size() == 1) {
    if (std::abs(v - axis[0]) > kEdgeTol)
      throw std::runtime_error(std::string(what) + ": query off the single-point axis");
    return {0, 0.0};
  }
  if (v < axis.front() - kEdgeTol || v > axis.back() + kEdgeTol)
    throw std::invalid_argument(std::string(what) + ": query outside the lattice hull");
  const double c = std::clamp(v, axis.front(), axis.back());
  auto it = std::upper_bound(axis.begin(), axis.end(), c);
  int i = static_cast<int>(it - axis.begin()) - 1;
  i = std::clamp(i, 0, static_cast<int>(axis.size()) - 2);
  return {i, (c - axis[i]) / (axis[i + 1] - axis[i])};
}
}  // namespace

LatticeSpec LatticeSpec::mode_only(std::vector<double> times) {
  LatticeSpec spec;
  spec.times = std::move(times);
  check_times(spec.times);
  spec.features = [](const SpectralField&) { return Eigen::VectorXd(); };
  spec.lift = [](const Eigen::VectorXd&) { return SpectralField(); };
  return spec;
}

LatticeSpec LatticeSpec::leading_modes(std::vector<double> times,
                                       std::vector<std::vector<double>> axes, int field_modes) {
  LatticeSpec spec;
  spec.times = std::move(times);
  check_times(spec.times);
  spec.feature_axes = std::move(axes);
  const int d = static_cast<int>(spec.feature_axes.size());
  if (d > field_modes) throw std::invalid_argument("lattice: more feature axes than field modes");
  spec.features = [d](const SpectralField& x) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < d && k < x.modes(); ++k) f[k] = x.coeff(k);
    return f;
  };
  spec.lift = [d, field_modes](const Eigen::VectorXd& f) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(field_modes);
    for (int k = 0; k < d; ++k) c[k] = f[k];
    return SpectralField(c);
  };
  return spec;
}

ValueGrid::ValueGrid(LatticeSpec spec, int mode_count) : spec_(std::move(spec)), modes_(mode_count) {
  check_times(spec_.times);
  if (modes_ < 1) throw std::invalid_argument("ValueGrid: mode_count must be positive");
  for (const auto& axis : spec_.feature_axes) {
    if (axis.empty()) throw std::invalid_argument("ValueGrid: empty feature axis");
    for (std::size_t i = 1; i < axis.size(); ++i)
      if (axis[i] <= axis[i - 1]) throw std::invalid_argument("ValueGrid: feature axis must increase");
    axis_sizes_.push_back(static_cast<int>(axis.size()));
    feature_points_ *= static_cast<int>(axis.size());
  }
  values_.assign(static_cast<std::size_t>(time_points()) * feature_points_ * modes_, 0.0);
}

int ValueGrid::flat(int time_idx, int feature_idx, int mode) const {
  return (time_idx * feature_points_ + feature_idx) * modes_ + mode;
}

double& ValueGrid::at(int time_idx, int feature_idx, int mode) {
  return values_.at(flat(time_idx, feature_idx, mode));
}

double ValueGrid::at(int time_idx, int feature_idx, int mode) const {
  return values_.at(flat(time_idx, feature_idx, mode));
}

Eigen::VectorXd ValueGrid::feature_point(int feature_idx) const {
  Eigen::VectorXd f(axis_sizes_.size());
  for (int d = static_cast<int>(axis_sizes_.size()) - 1; d >= 0; --d) {
    f[d] = spec_.feature_axes[d][feature_idx % axis_sizes_[d]];
    feature_idx /= axis_sizes_[d];
  }
  return f;
}

double ValueGrid::value_features(double t, const Eigen::VectorXd& f, int mode) const {
  if (mode < 0 || mode >= modes_) throw std::invalid_argument("ValueGrid: mode out of range");
  const auto [ti, tw] = locate(spec_.times, t, "ValueGrid time");
  const int d = static_cast<int>(axis_sizes_.size());
  if (f.size() != d) throw std::invalid_argument("ValueGrid: feature dimension mismatch");
  std::vector<int> idx(d);
  std::vector<double> w(d);
  for (int k = 0; k < d; ++k) {
    const auto [i, wk] = locate(spec_.feature_axes[k], f[k], "ValueGrid feature");
    idx[k] = i;
    w[k] = wk;
  }
  auto slice = [&](int time_idx) {
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double weight = 1.0;
      int fi = 0;
      for (int k = 0; k < d; ++k) {
        const bool hi = (corner >> k) & 1;
        weight *= hi ? w[k] : 1.0 - w[k];
        fi = fi * axis_sizes_[k] + idx[k] + (hi && axis_sizes_[k] > 1 ? 1 : 0);
      }
      if (weight != 0.0) acc += weight * values_[flat(time_idx, fi, mode)];
    }
    return acc;
  };
  const double lo = slice(ti);
  if (tw == 0.0 || time_points() == 1) return lo;
  return (1.0 - tw) * lo + tw * slice(ti + 1);
}

double ValueGrid::value(double t, const SpectralField& x, int mode) const {
  return value_features(t, spec_.features(x), mode);
}

std::function<double(double, const SpectralField&, int)> ValueGrid::as_fn() const {
  auto snapshot = std::make_shared<ValueGrid>(*this);
  return [snapshot](double t, const SpectralField& x, int mode) {
    return snapshot->value(t, x, mode);
  };
}

double ValueGrid::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double ValueGrid::max_abs_diff(const ValueGrid& other) const {
  if (values_.size() != other.values_.size())
    throw std::invalid_argument("ValueGrid: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    m = std::max(m, std::abs(values_[i] - other.values_[i]));
  return m;
}

namespace {

/// Flow samples at s = span*j/(2*substeps), j = 0..2*substeps.
std::vector<SpectralField> flow_nodes(const PdmpModel& model, const FlowEngine& engine,
                                      const SpectralField& x, int mode, double a, double span,
                                      int substeps) {
  std::vector<SpectralField> nodes(2 * substeps + 1, x);
  if (model.field_modes == 0) return nodes;
  for (int j = 1; j <= 2 * substeps; ++j)
    nodes[j] = engine.at(x, mode, a, span * j / (2.0 * substeps));
  return nodes;
}

/// Backward scalar Bellman ODE along a fixed flow:
///   w(span) = g(x(span)),  -w'(s) = min_a { f + lambda * (E_Q psi - w) },
/// integrated by RK4 with the flow precomputed at the half-step nodes.
/// Returns w(0). `controls` of size one freezes the control instead.
double bellman_ode(const PdmpModel& model, const ValueFn& psi, double t, int mode,
                   const std::vector<SpectralField>& nodes, double span, int substeps,
                   const std::vector<double>& controls) {
  auto rhs = [&](int node_idx, double s, double w) {
    const SpectralField& xs = nodes[node_idx];
    double best = std::numeric_limits<double>::infinity();
    for (double a : controls) {
      const double lam = model.rate(xs, mode, a, s);
      double val = model.running_cost(xs, mode, a);
      if (lam > 0.0) {
        double cont = 0.0;
        for (const auto& [q, p] : model.kernel(xs, mode, a)) cont += p * psi(t + s, xs, q);
        val += lam * (cont - w);
      }
      best = std::min(best, val);
    }
    return best;
  };
  double w = model.terminal_cost(nodes.back(), mode);
  const double h = span / substeps;
  for (int i = 0; i < substeps; ++i) {
    const int j0 = 2 * (substeps - i);
    const double s0 = span - i * h;
    const double k1 = rhs(j0, s0, w);
    const double k2 = rhs(j0 - 1, s0 - 0.5 * h, w + 0.5 * h * k1);
    const double k3 = rhs(j0 - 1, s0 - 0.5 * h, w + 0.5 * h * k2);
    const double k4 = rhs(j0 - 2, s0 - h, w + h * k3);
    w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return w;
}

}  // namespace

double apply_T(const PdmpModel& model, const FlowEngine& engine, const ValueFn& psi, double t,
               const SpectralField& x, int mode, int substeps) {
  const double span = model.horizon - t;
  if (span < -kEdgeTol) throw std::invalid_argument("apply_T: time past the horizon");
  if (span <= kEdgeTol) return model.terminal_cost(x, mode);
  if (model.control_grid.empty()) throw std::invalid_argument("apply_T: empty control grid");
  if (substeps < 1) throw std::invalid_argument("apply_T: substeps must be positive");
  if (model.drift_control_free) {
    const auto nodes = flow_nodes(model, engine, x, mode, model.control_grid.front(), span, substeps);
    return bellman_ode(model, psi, t, mode, nodes, span, substeps, model.control_grid);
  }
  double best = std::numeric_limits<double>::infinity();
  for (double a : model.control_grid) {
    const auto nodes = flow_nodes(model, engine, x, mode, a, span, substeps);
    best = std::min(best, bellman_ode(model, psi, t, mode, nodes, span, substeps, {a}));
  }
  return best;
}

double apply_T(const PdmpModel& model, const ValueFn& psi, double t, const SpectralField& x,
               int mode, int substeps) {
  FlowEngine engine(model);
  return apply_T(model, engine, psi, t, x, mode, substeps);
}

SolveResult solve(const PdmpModel& model, const LatticeSpec& lattice, double tol, int max_iter,
                  int substeps) {
  if (std::abs(lattice.times.back() - model.horizon) > kEdgeTol)
    throw std::invalid_argument("solve: lattice must end at the horizon");
  if (tol <= 0.0 || max_iter < 1) throw std::invalid_argument("solve: bad tol or max_iter");

  FlowEngine engine(model);
  SolveResult res{ValueGrid(lattice, model.mode_count), {}, 0, false};
  const int fp = res.grid.feature_points();

  std::vector<SpectralField> states(fp);
  for (int fi = 0; fi < fp; ++fi)
    states[fi] = lattice.lift ? lattice.lift(res.grid.feature_point(fi)) : model.zero_field();

  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (int it = 0; it < max_iter; ++it) {
    const auto fn = res.grid.as_fn();
    ValueGrid next = res.grid;
    for (int ti = 0; ti < res.grid.time_points(); ++ti)
      for (int fi = 0; fi < fp; ++fi)
        for (int m = 0; m < model.mode_count; ++m)
          next.at(ti, fi, m) =
              apply_T(model, engine, fn, lattice.times[ti], states[fi], m, substeps);
    const double r = next.max_abs_diff(res.grid);
    res.grid = std::move(next);
    res.residuals.push_back(r);
    res.iterations = it + 1;
    if (r <= tol) {
      res.converged = true;
      break;
    }
    if (r > prev) {
      if (++rising >= 3)
        throw std::runtime_error(
            "solve: residual increased for 3 consecutive iterations (no contraction)");
    } else {
      rising = 0;
    }
    prev = r;
  }
  return res;
}

DppResult dpp_residual(const ValueGrid& V, const PdmpModel& model, double t,
                       const SpectralField& x, int mode, int n_paths, std::uint64_t seed,
                       int substeps) {
  if (n_paths < 2) throw std::invalid_argument("dpp_residual: need at least 2 paths");
  const double span = model.horizon - t;
  FlowEngine engine(model);
  const int na = static_cast<int>(model.control_grid.size());

  DppResult best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  for (int ai = 0; ai < na; ++ai) {
    const double a = model.control_grid[ai];
    const auto policy = OpenLoopPolicy::constant(a);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_paths; ++i) {
      Rng rng(derive_seed(seed, "dpp", static_cast<std::uint64_t>(i) * na + ai));
      const auto jump = sample_jump_time(model, engine, x, mode, policy, rng, span);
      const double s1 = jump ? *jump : span;
      double acc = 0.0;
      SpectralField xs = x;
      double f_prev = model.running_cost(x, mode, a);
      for (int j = 1; j <= substeps; ++j) {
        const double s = s1 * j / substeps;
        xs = flow_at(model, engine, x, mode, policy, s);
        const double f = model.running_cost(xs, mode, a);
        acc += 0.5 * (s1 / substeps) * (f_prev + f);
        f_prev = f;
      }
      double cont;
      if (jump) {
        const int target = sample_jump_target(model, xs, mode, a, rng);
        cont = V.value(t + s1, xs, target);
      } else {
        cont = V.value(model.horizon, xs, mode);
      }
      const double c = acc + cont;
      sum += c;
      sumsq += c * c;
    }
    const double mean = sum / n_paths;
    const double var = std::max(0.0, (sumsq - n_paths * mean * mean) / (n_paths - 1.0));
    if (mean < best.residual) best = {mean, std::sqrt(var / n_paths), a};
  }
  best.residual -= V.value(t, x, mode);
  return best;
}

BruteForceResult brute_force_value(const PdmpModel& model, std::vector<double> times, int jump_cap,
                                   int substeps) {
  if (model.field_modes != 0)
    throw std::invalid_argument("brute_force_value: only mode-only models are supported");
  if (jump_cap < 0) throw std::invalid_argument("brute_force_value: jump_cap must be >= 0");
  if (std::abs(times.back() - model.horizon) > kEdgeTol)
    throw std::invalid_argument("brute_force_value: time grid must end at the horizon");
  const auto lattice = LatticeSpec::mode_only(times);
  FlowEngine engine(model);
  const SpectralField x0 = model.zero_field();
  const std::vector<SpectralField> nodes(2 * substeps + 1, x0);

  // B_k = value with at most k more jumps; continuation beyond the budget is 0.
  ValueGrid prev(lattice, model.mode_count);
  for (int k = 0; k <= jump_cap; ++k) {
    const auto cont = prev.as_fn();
    ValueGrid cur(lattice, model.mode_count);
    for (int ti = 0; ti < cur.time_points(); ++ti) {
      const double t = lattice.times[ti];
      const double span = model.horizon - t;
      for (int m = 0; m < model.mode_count; ++m) {
        if (span <= kEdgeTol) {
          cur.at(ti, 0, m) = model.terminal_cost(x0, m);
          continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (double a : model.control_grid)
          best = std::min(best, bellman_ode(model, cont, t, m, nodes, span, substeps, {a}));
        cur.at(ti, 0, m) = best;
      }
    }
    prev = std::move(cur);
  }

  const double mu = model.rate_bound * (model.horizon - times.front());
  double head = 0.0, term = std::exp(-mu);
  for (int j = 0; j <= jump_cap; ++j) {
    head += term;
    term *= mu / (j + 1);
  }
  const double tail = std::max(0.0, 1.0 - head);
  return {std::move(prev), tail * model.cost_bound * (model.horizon - times.front() + 1.0)};
}

PdmpModel make_toy(const ToyParams& p) {
  const int mc = static_cast<int>(p.mode_rates.size());
  if (mc < 1) throw std::invalid_argument("make_toy: need at least one mode");
  if (p.mode_costs.size() != p.mode_rates.size())
    throw std::invalid_argument("make_toy: mode_costs size mismatch");
  std::vector<double> g = p.terminal_costs;
  if (g.empty()) g.assign(mc, 0.0);
  if (static_cast<int>(g.size()) != mc)
    throw std::invalid_argument("make_toy: terminal_costs size mismatch");
  if (p.controls.empty()) throw std::invalid_argument("make_toy: empty control grid");
  if (p.horizon <= 0.0) throw std::invalid_argument("make_toy: horizon must be positive");
  for (double r : p.mode_rates)
    if (r < 0.0) throw std::invalid_argument("make_toy: negative rate");

  PdmpModel m;
  m.mode_count = mc;
  m.field_modes = 0;
  m.control_grid = p.controls;
  m.drift = [](const SpectralField&, int, double) { return AffineDrift{}; };
  m.drift_control_free = true;
  m.rate = [p](const SpectralField&, int mode, double a, double elapsed) {
    const double r = p.mode_rates[mode] * (1.0 + p.rate_control_slope * a) *
                     (1.0 + p.rate_time_slope * elapsed);
    if (r < 0.0) throw std::runtime_error("make_toy: rate went negative");
    return r;
  };
  m.kernel = [mc](const SpectralField&, int mode, double) {
    return std::vector<std::pair<int, double>>{{(mode + 1) % mc, 1.0}};
  };
  m.running_cost = [p](const SpectralField&, int mode, double a) {
    return p.mode_costs[mode] + p.control_cost * a;
  };
  m.terminal_cost = [g](const SpectralField&, int mode) { return g[mode]; };

  double rmax = 0.0;
  for (double r : p.mode_rates)
    for (double a : p.controls)
      for (double s : {0.0, p.horizon})
        rmax = std::max(rmax, r * (1.0 + p.rate_control_slope * a) * (1.0 + p.rate_time_slope * s));
  m.rate_bound = rmax;
  m.horizon = p.horizon;
  double fmax = 0.0;
  for (int i = 0; i < mc; ++i) {
    for (double a : p.controls)
      fmax = std::max(fmax, std::abs(p.mode_costs[i] + p.control_cost * a));
    fmax = std::max(fmax, std::abs(g[i]));
  }
  m.cost_bound = fmax;
  return m;
}

}  // namespace pdmp
