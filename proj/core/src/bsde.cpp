#include "pdmp/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pdmp/flow.hpp"

namespace pdmp {

namespace {

std::vector<double> scheme_times(double t_start, double horizon, double dt, double* step_out) {
  const double span = horizon - t_start;
  if (span <= 0.0) throw std::invalid_argument("penalized scheme: empty time window");
  if (dt <= 0.0) throw std::invalid_argument("penalized scheme: dt must be positive");
  const int m = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
  const double step = span / m;
  std::vector<double> times(m + 1);
  for (int j = 0; j <= m; ++j) times[j] = t_start + step * j;
  times.back() = horizon;
  *step_out = step;
  return times;
}

void check_stability(const PdmpModel& model, const Lambda0& lambda0,
                     const PenalizedScheme& scheme, double step) {
  const double load = step * (model.rate_bound + (scheme.n_penalty + 1.0) * lambda0.total());
  if (load >= 1.0)
    throw std::invalid_argument(
        "penalized scheme: dt * (rate bound + (n+1) * lambda0 mass) >= 1; refine dt");
}

struct PathSample {
  SpectralField field;
  int mode = 0;
  int control_idx = 0;
};

PathSample state_at(const XIPath& path, double t) {
  for (const auto& seg : path.segments) {
    if (t > seg.times.back() + 1e-12) continue;
    for (std::size_t j = 0; j + 1 < seg.times.size(); ++j) {
      if (t <= seg.times[j + 1] + 1e-12) {
        const double h = seg.times[j + 1] - seg.times[j];
        const double w = h > 0.0 ? std::clamp((t - seg.times[j]) / h, 0.0, 1.0) : 0.0;
        SpectralField f = (1.0 - w) * seg.fields[j] + w * seg.fields[j + 1];
        return {std::move(f), seg.mode, seg.control_idx};
      }
    }
    return {seg.fields.back(), seg.mode, seg.control_idx};
  }
  return {path.x_end, path.mode_end, path.control_end};
}

}  // namespace

Basis Basis::mode_control(int mode_count, int control_points) {
  if (mode_count < 1 || control_points < 1)
    throw std::invalid_argument("basis: bad mode/control counts");
  Basis b;
  b.size = mode_count * control_points;
  b.eval = [control_points, size = b.size](const SpectralField&, int mode, int a_idx) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(size);
    phi[mode * control_points + a_idx] = 1.0;
    return phi;
  };
  return b;
}

double RegressionSolution::value(int time_idx, const SpectralField& x, int mode, int a_idx) const {
  return basis.eval(x, mode, a_idx).dot(coeffs.at(time_idx));
}

PenalizedSolution solve_penalized_grid(const PdmpModel& model, const Lambda0& lambda0,
                                       const PenalizedScheme& scheme, const LatticeSpec& lattice,
                                       double t_start) {
  const int na = static_cast<int>(model.control_grid.size());
  lambda0.validate(na);
  if (scheme.n_penalty < 0) throw std::invalid_argument("penalized scheme: n must be >= 0");

  PenalizedSolution sol;
  double step = 0.0;
  sol.times = scheme_times(t_start, model.horizon, scheme.dt, &step);
  check_stability(model, lambda0, scheme, step);
  sol.n_penalty = scheme.n_penalty;
  sol.dt = step;

  LatticeSpec lat = lattice;
  lat.times = sol.times;
  for (int a = 0; a < na; ++a) sol.values.emplace_back(lat, model.mode_count);

  const int fp = sol.values[0].feature_points();
  const int mc = model.mode_count;
  const int last = static_cast<int>(sol.times.size()) - 1;
  FlowEngine engine(model);

  std::vector<SpectralField> states(fp);
  for (int fi = 0; fi < fp; ++fi)
    states[fi] = lat.lift ? lat.lift(sol.values[0].feature_point(fi)) : model.zero_field();

  for (int fi = 0; fi < fp; ++fi)
    for (int md = 0; md < mc; ++md) {
      const double g = model.terminal_cost(states[fi], md);
      for (int a = 0; a < na; ++a) sol.values[a].at(last, fi, md) = g;
    }

  // One-step flow images per (feature, mode, control).
  auto flow_step = [&](int fi, int md, double a_val) {
    if (model.field_modes == 0) return states[fi];
    return engine.at(states[fi], md, a_val, step);
  };

  std::vector<std::vector<double>> acc(na, std::vector<double>(fp * mc, 0.0));
  for (int j = last - 1; j >= 0; --j) {
    const double t_next = sol.times[j + 1];
    for (int fi = 0; fi < fp; ++fi)
      for (int md = 0; md < mc; ++md)
        for (int a = 0; a < na; ++a) {
          const double a_val = model.control_grid[a];
          const SpectralField& x = states[fi];
          const SpectralField xn = flow_step(fi, md, a_val);
          const double lam = model.rate(x, md, a_val, 0.0);
          const double cont = sol.values[a].value(t_next, xn, md);
          double jump = 0.0;
          if (lam > 0.0)
            for (const auto& [q, p] : model.kernel(x, md, a_val))
              jump += p * sol.values[a].value(t_next, xn, q);
          double pen = 0.0;
          for (int b = 0; b < na; ++b) {
            const double z = sol.values[b].value(t_next, xn, md) - cont;
            pen += lambda0.weights[b] * std::max(-z, 0.0);
          }
          sol.values[a].at(j, fi, md) = (1.0 - step * lam) * cont + step * lam * jump +
                                        step * model.running_cost(x, md, a_val) -
                                        step * scheme.n_penalty * pen;
          acc[a][fi * mc + md] += scheme.n_penalty * step * pen;
        }
  }
  for (int a = 0; a < na; ++a)
    for (double k : acc[a]) sol.penalty_mass = std::max(sol.penalty_mass, k);
  return sol;
}

RegressionSolution solve_penalized_regression(const PdmpModel& model, const Lambda0& lambda0,
                                              const PenalizedScheme& scheme, const Basis& basis,
                                              double t_start, const SpectralField& x0, int mode0,
                                              std::uint64_t seed, const SimOptions& opts) {
  const int na = static_cast<int>(model.control_grid.size());
  lambda0.validate(na);
  if (scheme.path_budget < 10 * basis.size)
    throw std::invalid_argument("penalized regression: path budget below 10x basis size");

  RegressionSolution sol;
  double step = 0.0;
  sol.times = scheme_times(t_start, model.horizon, scheme.dt, &step);
  check_stability(model, lambda0, scheme, step);
  sol.basis = basis;
  sol.n_penalty = scheme.n_penalty;
  sol.dt = step;
  const int last = static_cast<int>(sol.times.size()) - 1;
  const int np = scheme.path_budget;

  // Reference-law paths; the initial control draws from normalized lambda0.
  std::vector<std::vector<PathSample>> samples(np);
  for (int i = 0; i < np; ++i) {
    Rng rng(derive_seed(seed, "bsde", i));
    const int ci = rng.pick_discrete(lambda0.weights);
    const XIPath path = simulate_xi(model, lambda0, nullptr, t_start, x0, mode0,
                                    model.control_grid[ci], rng, opts);
    samples[i].reserve(sol.times.size());
    for (double t : sol.times) samples[i].push_back(state_at(path, t));
  }

  sol.coeffs.assign(sol.times.size(), Eigen::VectorXd::Zero(basis.size));
  sol.residuals.assign(sol.times.size(), 0.0);

  auto regress = [&](int j, const std::vector<double>& targets) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(basis.size, basis.size);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(basis.size);
    std::vector<Eigen::VectorXd> phis(np);
    for (int i = 0; i < np; ++i) {
      phis[i] = basis.eval(samples[i][j].field, samples[i][j].mode, samples[i][j].control_idx);
      a += phis[i] * phis[i].transpose();
      b += targets[i] * phis[i];
    }
    Eigen::VectorXd c = a.ldlt().solve(b);
    if (!c.allFinite() || (a * c - b).norm() > 1e-8 * (b.norm() + 1.0)) {
      a += scheme.ridge * Eigen::MatrixXd::Identity(basis.size, basis.size);
      c = a.ldlt().solve(b);
      sol.ridge_used = true;
    }
    double rss = 0.0;
    for (int i = 0; i < np; ++i) {
      const double r = targets[i] - phis[i].dot(c);
      rss += r * r;
    }
    sol.coeffs[j] = c;
    sol.residuals[j] = std::sqrt(rss / np);
  };

  // Terminal slice: project g so value(last, ...) is usable; backward targets
  // use g exactly.
  {
    std::vector<double> targets(np);
    for (int i = 0; i < np; ++i)
      targets[i] = model.terminal_cost(samples[i][last].field, samples[i][last].mode);
    regress(last, targets);
  }

  auto value_next = [&](int j1, const SpectralField& x, int md, int ai) {
    if (j1 == last) return model.terminal_cost(x, md);
    return sol.value(j1, x, md, ai);
  };

  std::vector<double> targets(np);
  for (int j = last - 1; j >= 0; --j) {
    for (int i = 0; i < np; ++i) {
      const PathSample& cur = samples[i][j];
      const PathSample& nxt = samples[i][j + 1];
      const double a_val = model.control_grid[cur.control_idx];
      const double v_self = value_next(j + 1, cur.field, cur.mode, cur.control_idx);
      double comp = 0.0;
      for (int b = 0; b < na; ++b) {
        const double z = value_next(j + 1, cur.field, cur.mode, b) - v_self;
        comp += lambda0.weights[b] * (scheme.n_penalty * std::max(-z, 0.0) + z);
      }
      targets[i] = value_next(j + 1, nxt.field, nxt.mode, nxt.control_idx) +
                   step * model.running_cost(cur.field, cur.mode, a_val) - step * comp;
    }
    regress(j, targets);
  }
  return sol;
}

double constraint_violation(const PenalizedSolution& sol) {
  const int na = static_cast<int>(sol.values.size());
  double worst = 0.0;
  for (int ti = 0; ti < sol.values[0].time_points(); ++ti)
    for (int fi = 0; fi < sol.values[0].feature_points(); ++fi)
      for (int md = 0; md < sol.values[0].mode_count(); ++md)
        for (int a = 0; a < na; ++a)
          for (int b = 0; b < na; ++b) {
            const double z = sol.values[b].at(ti, fi, md) - sol.values[a].at(ti, fi, md);
            worst = std::max(worst, std::max(-z, 0.0));
          }
  return worst;
}

PrimalComparison compare_to_primal(const PenalizedSolution& sol, const ValueGrid& V) {
  PrimalComparison rep;
  const int na = static_cast<int>(sol.values.size());
  double err_sum = 0.0;
  long count = 0;
  for (int ti = 0; ti < sol.values[0].time_points(); ++ti)
    for (int fi = 0; fi < sol.values[0].feature_points(); ++fi)
      for (int md = 0; md < sol.values[0].mode_count(); ++md) {
        const double ref = V.value_features(sol.times[ti], sol.values[0].feature_point(fi), md);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int a = 0; a < na; ++a) {
          const double v = sol.values[a].at(ti, fi, md);
          rep.sup_err = std::max(rep.sup_err, std::abs(v - ref));
          err_sum += std::abs(v - ref);
          ++count;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        rep.control_spread = std::max(rep.control_spread, hi - lo);
      }
  rep.mean_err = err_sum / count;
  return rep;
}

}  // namespace pdmp
