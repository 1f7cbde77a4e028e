#include "pdmp/simulate.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmp {

namespace {
constexpr double kPi = 3.14159265358979323846;

MeanStderr mean_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = xs.size() > 1 ? var / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}
}  // namespace

SpectralField flow_at(const PdmpModel& model, const FlowEngine& engine, const SpectralField& x0,
                      int mode, const OpenLoopPolicy& policy, double elapsed) {
  if (model.field_modes == 0 || elapsed == 0.0) return x0;
  if (model.drift_control_free) return engine.at(x0, mode, policy.rule(0.0, x0, mode), elapsed);
  // Control-dependent drift: freeze the control on a fine sub-grid.
  const int steps = std::max(1, static_cast<int>(std::ceil(elapsed / 1e-3)));
  auto control = [&](double s) { return policy.rule(s, x0, mode); };
  return integrate_flow(model, x0, mode, control, elapsed, steps, FlowMethod::Exact).back();
}

std::optional<double> sample_jump_time(const PdmpModel& model, const FlowEngine& engine,
                                       const SpectralField& x0, int mode,
                                       const OpenLoopPolicy& policy, Rng& rng,
                                       double horizon_remaining) {
  const double M = model.rate_bound;
  if (M <= 0.0) return std::nullopt;
  double s = 0.0;
  while (true) {
    s += rng.exponential(M);
    if (s >= horizon_remaining) return std::nullopt;
    const SpectralField xs = flow_at(model, engine, x0, mode, policy, s);
    const double a = policy.rule(s, x0, mode);
    const double lam = model.rate(xs, mode, a, s);
    if (lam > M * (1.0 + 1e-9))
      throw std::runtime_error("sample_jump_time: observed rate exceeds declared bound M");
    if (rng.uniform() < lam / M) return s;
  }
}

int sample_jump_target(const PdmpModel& model, const SpectralField& x, int mode, double a,
                       Rng& rng) {
  auto row = model.kernel(x, mode, a);
  if (row.empty()) throw std::runtime_error("sample_jump_target: empty kernel row");
  std::vector<double> w(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) w[i] = row[i].second;
  return row[rng.pick_discrete(w)].first;
}

Trajectory simulate(const PdmpModel& model, double t, const SpectralField& x, int mode,
                    const OpenLoopPolicy& policy, Rng& rng, const SimOptions& opts) {
  if (t > model.horizon) throw std::invalid_argument("simulate: start time past horizon");
  FlowEngine engine(model);
  Trajectory traj;
  traj.t_start = t;
  traj.start = {x, mode, 0.0};

  double t_seg = t;
  SpectralField x_seg = x;
  int cur_mode = mode;
  long jumps = 0;

  while (t_seg < model.horizon || traj.segments.empty()) {
    const double remaining = model.horizon - t_seg;
    auto jump = sample_jump_time(model, engine, x_seg, cur_mode, policy, rng, remaining);
    const double span = jump ? *jump : remaining;

    TrajectorySegment seg;
    seg.t0 = t_seg;
    seg.mode = cur_mode;
    const int n_sub = std::max(1, static_cast<int>(std::floor(span / opts.sample_step)));
    for (int j = 0; j <= n_sub; ++j) {
      const double s = std::min(span, j * opts.sample_step);
      seg.times.push_back(t_seg + s);
      seg.fields.push_back(flow_at(model, engine, x_seg, cur_mode, policy, s));
      seg.controls.push_back(policy.rule(s, x_seg, cur_mode));
    }
    if (seg.times.back() < t_seg + span) {
      seg.times.push_back(t_seg + span);
      seg.fields.push_back(flow_at(model, engine, x_seg, cur_mode, policy, span));
      seg.controls.push_back(policy.rule(span, x_seg, cur_mode));
    }
    traj.segments.push_back(std::move(seg));

    const SpectralField x_end = traj.segments.back().fields.back();
    if (!jump) {
      traj.terminal = {x_end, cur_mode, span};
      traj.t_end = model.horizon;
      break;
    }
    const double a_jump = policy.rule(span, x_seg, cur_mode);
    const int next_mode = sample_jump_target(model, x_end, cur_mode, a_jump, rng);
    t_seg += span;
    traj.jump_times.push_back(t_seg);
    traj.jump_marks.push_back(next_mode);
    x_seg = x_end;  // field is continuous across jumps
    cur_mode = next_mode;
    if (++jumps > opts.jump_cap)
      throw std::runtime_error("simulate: jump cap exceeded (possible explosion)");
    if (t_seg >= model.horizon) {
      traj.terminal = {x_seg, cur_mode, 0.0};
      traj.t_end = model.horizon;
      break;
    }
  }
  return traj;
}

double path_cost(const PdmpModel& model, const Trajectory& traj) {
  if (traj.t_end != model.horizon)
    throw std::invalid_argument("path_cost: trajectory does not reach the horizon");
  double acc = 0.0;
  for (const auto& seg : traj.segments) {
    for (std::size_t j = 0; j + 1 < seg.times.size(); ++j) {
      const double h = seg.times[j + 1] - seg.times[j];
      if (h <= 0.0) continue;
      const double f0 = model.running_cost(seg.fields[j], seg.mode, seg.controls[j]);
      const double f1 = model.running_cost(seg.fields[j + 1], seg.mode, seg.controls[j + 1]);
      acc += 0.5 * h * (f0 + f1);
    }
  }
  return acc + model.terminal_cost(traj.terminal.field, traj.terminal.mode);
}

MeanStderr estimate_cost(const PdmpModel& model, double t, const SpectralField& x, int mode,
                         const OpenLoopPolicy& policy, int n_paths, std::uint64_t seed,
                         const SimOptions& opts) {
  if (n_paths < 2) throw std::invalid_argument("estimate_cost: need at least 2 paths");
  std::vector<double> costs(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, "estimate_cost", i));
    costs[i] = path_cost(model, simulate(model, t, x, mode, policy, rng, opts));
  }
  return mean_stderr(costs);
}

MeanStderr dynkin_residual(const PdmpModel& model, const CylindricalTest& psi, double t,
                           const SpectralField& x, int mode, const OpenLoopPolicy& policy,
                           int n_paths, std::uint64_t seed, double stop_time, double radius,
                           const SimOptions& opts) {
  const int m = psi.m;
  auto head = [&](const SpectralField& v) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < m && k < v.modes(); ++k) c[k] = v.coeff(k);
    return c;
  };
  // Generator applied to psi at one sample.
  auto gen = [&](double s, const SpectralField& v, int md, double a, double elapsed) {
    const Eigen::VectorXd c = head(v);
    double out = psi.dt(s, c, md);
    const Eigen::VectorXd gr = psi.grad(s, c, md);
    if (m > 0 && model.field_modes > 0) {
      const AffineDrift d = model.drift(v, md, a);
      const Eigen::VectorXd b = d.value(v).coeffs();
      for (int k = 0; k < m; ++k) {
        out += b[k] * gr[k];
        out -= model.diffusivity * (k + 1) * (k + 1) * kPi * kPi * v.coeff(k) * gr[k];
      }
    }
    const double lam = model.rate(v, md, a, elapsed);
    if (lam > 0.0) {
      double jump_avg = 0.0;
      for (const auto& [q, p] : model.kernel(v, md, a)) jump_avg += p * psi.value(s, c, q);
      out += lam * (jump_avg - psi.value(s, c, md));
    }
    return out;
  };

  std::vector<double> residuals(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, "dynkin", i));
    Trajectory traj = simulate(model, t, x, mode, policy, rng, opts);
    double integral = 0.0;
    double tau = model.horizon;
    SpectralField x_tau = traj.terminal.field;
    int mode_tau = traj.terminal.mode;
    bool stopped = false;
    for (const auto& seg : traj.segments) {
      double prev_g = 0.0;
      bool have_prev = false;
      for (std::size_t j = 0; j < seg.times.size() && !stopped; ++j) {
        const double s = seg.times[j];
        const SpectralField& v = seg.fields[j];
        const bool exit_ball = norm(v, NormKind::L2) > radius;
        const bool exit_time = s >= stop_time;
        const double g = gen(s, v, seg.mode, seg.controls[j], s - seg.t0);
        if (have_prev) integral += 0.5 * (seg.times[j] - seg.times[j - 1]) * (prev_g + g);
        prev_g = g;
        have_prev = true;
        if (exit_ball || exit_time) {
          tau = s;
          x_tau = v;
          mode_tau = seg.mode;
          stopped = true;
        }
      }
      if (stopped) break;
    }
    (void)tau;
    residuals[i] = psi.value(stopped ? tau : traj.t_end, head(x_tau), mode_tau) -
                   psi.value(t, head(x), mode) - integral;
  }
  return mean_stderr(residuals);
}

}  // namespace pdmp
