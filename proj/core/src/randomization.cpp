#include "pdmp/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdmp/flow.hpp"

namespace pdmp {

double Lambda0::total() const {
  double t = 0.0;
  for (double w : weights) t += w;
  return t;
}

void Lambda0::validate(int control_points) const {
  if (static_cast<int>(weights.size()) != control_points)
    throw std::invalid_argument("lambda0: weight count must match the control grid");
  for (double w : weights)
    if (!(w > 0.0)) throw std::invalid_argument("lambda0: weights must be strictly positive");
}

Lambda0 Lambda0::uniform(int control_points, double total_mass) {
  if (control_points < 1 || total_mass <= 0.0)
    throw std::invalid_argument("lambda0: bad uniform parameters");
  return {std::vector<double>(control_points, total_mass / control_points)};
}

double NuPolicy::eval(double t, const SpectralField& x, int mode, double a, double b) const {
  const double v = rule(t, x, mode, a, b);
  if (!(v >= nu_min && v <= nu_max))
    throw std::runtime_error("nu policy evaluated outside its declared bounds");
  return v;
}

NuPolicy NuPolicy::constant(double c) {
  if (c <= 0.0) throw std::invalid_argument("nu: constant must be positive");
  NuPolicy nu;
  nu.nu_min = nu.nu_max = c;
  nu.rule = [c](double, const SpectralField&, int, double, double) { return c; };
  return nu;
}

XIPath simulate_xi(const PdmpModel& model, const Lambda0& lambda0, const NuPolicy* nu, double t,
                   const SpectralField& x, int mode, double a, Rng& rng, const SimOptions& opts) {
  lambda0.validate(static_cast<int>(model.control_grid.size()));
  if (t > model.horizon) throw std::invalid_argument("simulate_xi: start time past horizon");
  const double nu_cap = nu ? nu->nu_max : 1.0;
  const double m_tot = model.rate_bound + nu_cap * lambda0.total();
  FlowEngine engine(model);

  XIPath path;
  path.t_start = t;
  path.x_start = x;
  path.mode_start = mode;
  path.control_start = model.control_index(a);

  double t_cur = t;
  SpectralField x_cur = x;
  int cur_mode = mode;
  int ai = path.control_start;
  long jumps = 0;

  const int nb = static_cast<int>(model.control_grid.size());
  std::vector<double> cr(nb);

  while (t_cur < model.horizon || path.segments.empty()) {
    const double remaining = model.horizon - t_cur;
    const double a_cur = model.control_grid[ai];
    auto policy = OpenLoopPolicy::constant(a_cur);

    // Thinning for the next jump of either clock.
    double s = 0.0;
    bool have_jump = false;
    JumpKind kind = JumpKind::Mode;
    int target = 0;
    SpectralField x_s = x_cur;
    while (true) {
      s += rng.exponential(m_tot);
      if (s >= remaining) {
        s = remaining;
        break;
      }
      x_s = flow_at(model, engine, x_cur, cur_mode, policy, s);
      const double lam = model.rate(x_s, cur_mode, a_cur, s);
      if (lam > model.rate_bound * (1.0 + 1e-9))
        throw std::runtime_error("simulate_xi: observed rate exceeds declared bound M");
      double ctotal = 0.0;
      for (int b = 0; b < nb; ++b) {
        const double factor = nu ? nu->eval(t_cur + s, x_s, cur_mode, a_cur, model.control_grid[b])
                                 : 1.0;
        cr[b] = factor * lambda0.weights[b];
        ctotal += cr[b];
      }
      const double u = rng.uniform() * m_tot;
      if (u < lam) {
        have_jump = true;
        kind = JumpKind::Mode;
        target = sample_jump_target(model, x_s, cur_mode, a_cur, rng);
        break;
      }
      if (u < lam + ctotal) {
        have_jump = true;
        kind = JumpKind::Control;
        target = rng.pick_discrete(cr);
        break;
      }
    }

    XISegment seg;
    seg.t0 = t_cur;
    seg.mode = cur_mode;
    seg.control_idx = ai;
    const int n_sub = std::max(1, static_cast<int>(std::floor(s / opts.sample_step)));
    for (int j = 0; j <= n_sub; ++j) {
      const double r = std::min(s, j * opts.sample_step);
      seg.times.push_back(t_cur + r);
      seg.fields.push_back(flow_at(model, engine, x_cur, cur_mode, policy, r));
    }
    if (seg.times.back() < t_cur + s) {
      seg.times.push_back(t_cur + s);
      seg.fields.push_back(flow_at(model, engine, x_cur, cur_mode, policy, s));
    }
    const SpectralField x_end = seg.fields.back();
    path.segments.push_back(std::move(seg));

    if (!have_jump) {
      path.x_end = x_end;
      path.mode_end = cur_mode;
      path.control_end = ai;
      path.t_end = model.horizon;
      break;
    }

    t_cur += s;
    XIJump jump;
    jump.time = t_cur;
    jump.kind = kind;
    jump.field = x_end;
    jump.mode_before = jump.mode_after = cur_mode;
    jump.control_before = jump.control_after = ai;
    if (kind == JumpKind::Mode)
      jump.mode_after = target;
    else
      jump.control_after = target;
    path.jumps.push_back(jump);

    x_cur = x_end;  // X is continuous across both jump kinds
    cur_mode = jump.mode_after;
    ai = jump.control_after;
    if (++jumps > opts.jump_cap)
      throw std::runtime_error("simulate_xi: jump cap exceeded (possible explosion)");
    if (t_cur >= model.horizon) {
      path.x_end = x_cur;
      path.mode_end = cur_mode;
      path.control_end = ai;
      path.t_end = model.horizon;
      break;
    }
  }
  return path;
}

double doleans_weight(const PdmpModel& model, const XIPath& path, const NuPolicy& nu,
                      const Lambda0& lambda0) {
  lambda0.validate(static_cast<int>(model.control_grid.size()));
  double integral = 0.0;
  for (const auto& seg : path.segments) {
    const double a_cur = model.control_grid[seg.control_idx];
    double prev = 0.0;
    for (std::size_t j = 0; j < seg.times.size(); ++j) {
      double val = 0.0;
      for (std::size_t b = 0; b < lambda0.weights.size(); ++b)
        val += (1.0 - nu.eval(seg.times[j], seg.fields[j], seg.mode, a_cur,
                              model.control_grid[b])) *
               lambda0.weights[b];
      if (j > 0) integral += 0.5 * (seg.times[j] - seg.times[j - 1]) * (prev + val);
      prev = val;
    }
  }
  double prod = 1.0;
  for (const auto& jump : path.jumps) {
    if (jump.kind != JumpKind::Control) continue;
    prod *= nu.eval(jump.time, jump.field, jump.mode_before,
                    model.control_grid[jump.control_before],
                    model.control_grid[jump.control_after]);
  }
  return std::exp(integral) * prod;
}

double dual_cost(const PdmpModel& model, const XIPath& path) {
  double acc = 0.0;
  for (const auto& seg : path.segments) {
    const double a_cur = model.control_grid[seg.control_idx];
    for (std::size_t j = 0; j + 1 < seg.times.size(); ++j) {
      const double h = seg.times[j + 1] - seg.times[j];
      if (h <= 0.0) continue;
      acc += 0.5 * h *
             (model.running_cost(seg.fields[j], seg.mode, a_cur) +
              model.running_cost(seg.fields[j + 1], seg.mode, a_cur));
    }
  }
  return acc + model.terminal_cost(path.x_end, path.mode_end);
}

MeanStderr estimate_dual(const PdmpModel& model, const Lambda0& lambda0, const NuPolicy& nu,
                         double t, const SpectralField& x, int mode, double a, int n_paths,
                         std::uint64_t seed, DualMethod method, const SimOptions& opts) {
  if (n_paths < 2) throw std::invalid_argument("estimate_dual: need at least 2 paths");
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, "dual", i));
    double c;
    if (method == DualMethod::Direct) {
      c = dual_cost(model, simulate_xi(model, lambda0, &nu, t, x, mode, a, rng, opts));
    } else {
      const XIPath path = simulate_xi(model, lambda0, nullptr, t, x, mode, a, rng, opts);
      c = doleans_weight(model, path, nu, lambda0) * dual_cost(model, path);
    }
    sum += c;
    sumsq += c * c;
  }
  const double mean = sum / n_paths;
  const double var = std::max(0.0, (sumsq - n_paths * mean * mean) / (n_paths - 1.0));
  return {mean, std::sqrt(var / n_paths)};
}

NuFamily NuFamily::per_control_log(std::vector<double> control_grid, double nu_min,
                                   double nu_max) {
  if (control_grid.empty()) throw std::invalid_argument("nu family: empty control grid");
  NuFamily fam;
  fam.dim = static_cast<int>(control_grid.size());
  fam.init = Eigen::VectorXd::Zero(fam.dim);
  fam.make = [grid = std::move(control_grid), nu_min, nu_max](const Eigen::VectorXd& theta) {
    NuPolicy nu;
    nu.nu_min = nu_min;
    nu.nu_max = nu_max;
    nu.rule = [grid, theta, nu_min, nu_max](double, const SpectralField&, int, double, double b) {
      int best = 0;
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - b) < std::abs(grid[best] - b)) best = static_cast<int>(i);
      return std::clamp(std::exp(theta[best]), nu_min, nu_max);
    };
    return nu;
  };
  return fam;
}

NuSearchResult minimize_over_nu(const PdmpModel& model, const Lambda0& lambda0,
                                const NuFamily& family, double t, const SpectralField& x, int mode,
                                double a, int n_paths, int budget, std::uint64_t seed,
                                const SimOptions& opts) {
  if (family.dim < 1) throw std::invalid_argument("minimize_over_nu: empty parameter family");
  if (budget < family.dim + 1) throw std::invalid_argument("minimize_over_nu: budget too small");

  // Fixed reference paths give a deterministic objective (common random numbers).
  std::vector<XIPath> ref(n_paths);
  std::vector<double> costs(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, "nu_ref", i));
    ref[i] = simulate_xi(model, lambda0, nullptr, t, x, mode, a, rng, opts);
    costs[i] = dual_cost(model, ref[i]);
  }

  NuSearchResult res;
  auto objective = [&](const Eigen::VectorXd& theta) {
    const NuPolicy nu = family.make(theta);
    double sum = 0.0;
    for (int i = 0; i < n_paths; ++i)
      sum += doleans_weight(model, ref[i], nu, lambda0) * costs[i];
    const double val = sum / n_paths;
    res.trace.push_back({++res.evaluations, theta, val});
    return val;
  };

  // Nelder-Mead with standard coefficients.
  const int d = family.dim;
  std::vector<Eigen::VectorXd> pts(d + 1, family.init);
  std::vector<double> f(d + 1);
  for (int i = 1; i <= d; ++i) pts[i][i - 1] += 0.5;
  for (int i = 0; i <= d; ++i) f[i] = objective(pts[i]);

  auto order = [&] {
    std::vector<int> idx(d + 1);
    for (int i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int u, int v) { return f[u] < f[v]; });
    std::vector<Eigen::VectorXd> p2(d + 1);
    std::vector<double> f2(d + 1);
    for (int i = 0; i <= d; ++i) {
      p2[i] = pts[idx[i]];
      f2[i] = f[idx[i]];
    }
    pts = std::move(p2);
    f = std::move(f2);
  };

  while (res.evaluations < budget) {
    order();
    if (std::abs(f[d] - f[0]) < 1e-9 * (1.0 + std::abs(f[0]))) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += pts[i];
    centroid /= d;

    const Eigen::VectorXd xr = centroid + (centroid - pts[d]);
    const double fr = objective(xr);
    if (fr < f[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[d]);
      const double fe = res.evaluations < budget ? objective(xe) : fr + 1.0;
      if (fe < fr) {
        pts[d] = xe;
        f[d] = fe;
      } else {
        pts[d] = xr;
        f[d] = fr;
      }
    } else if (fr < f[d - 1]) {
      pts[d] = xr;
      f[d] = fr;
    } else {
      const Eigen::VectorXd xc = centroid + 0.5 * (pts[d] - centroid);
      const double fc = res.evaluations < budget ? objective(xc) : fr + 1.0;
      if (fc < f[d]) {
        pts[d] = xc;
        f[d] = fc;
      } else {
        for (int i = 1; i <= d && res.evaluations < budget; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          f[i] = objective(pts[i]);
        }
      }
    }
  }
  order();
  res.budget_exhausted = res.evaluations >= budget;
  res.theta = pts[0];
  res.value = estimate_dual(model, lambda0, family.make(res.theta), t, x, mode, a, n_paths,
                            derive_seed(seed, "nu_final", 0), DualMethod::Direct, opts);
  return res;
}

}  // namespace pdmp
