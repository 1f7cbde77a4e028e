#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pdmp/model.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/randomization.hpp"

namespace pdmp {

/// Parameters of the explicit backward scheme for the penalized equation on
/// the enlarged (X, I) process. The penalty n * [v(.,b) - v(.,a)]^- drives the
/// per-control values toward their minimum as n grows; solutions decrease
/// monotonically in n. Requires a time-homogeneous jump rate.
struct PenalizedScheme {
  int n_penalty = 50;
  double dt = 0.01;
  int path_budget = 2000;  // regression representation only
  double ridge = 1e-8;     // fallback regularization for the normal equations
};

/// Grid representation: one value table per control-grid index.
struct PenalizedSolution {
  std::vector<double> times;
  std::vector<ValueGrid> values;  // index = control index
  int n_penalty = 0;
  double dt = 0.0;
  /// Max over lattice nodes of the accumulated penalty mass at the initial time.
  double penalty_mass = 0.0;
};

/// Feature map for the least-squares representation.
struct Basis {
  int size = 0;
  std::function<Eigen::VectorXd(const SpectralField&, int mode, int a_idx)> eval;

  /// One indicator per (mode, control) pair; exhaustive for field-free models.
  static Basis mode_control(int mode_count, int control_points);
};

struct RegressionSolution {
  std::vector<double> times;
  Basis basis;
  std::vector<Eigen::VectorXd> coeffs;  // one coefficient vector per time index
  std::vector<double> residuals;        // in-sample RMS per backward step
  bool ridge_used = false;
  int n_penalty = 0;
  double dt = 0.0;

  double value(int time_idx, const SpectralField& x, int mode, int a_idx) const;
};

/// Explicit backward recursion on the lattice. Refuses to run when the
/// monotonicity condition dt * (rate bound + (n+1) * lambda0 mass) < 1 fails.
PenalizedSolution solve_penalized_grid(const PdmpModel& model, const Lambda0& lambda0,
                                       const PenalizedScheme& scheme, const LatticeSpec& lattice,
                                       double t_start);

/// Least-squares Monte Carlo analogue of the same scheme on (X, I) paths
/// simulated under the reference intensity.
RegressionSolution solve_penalized_regression(const PdmpModel& model, const Lambda0& lambda0,
                                              const PenalizedScheme& scheme, const Basis& basis,
                                              double t_start, const SpectralField& x0, int mode0,
                                              std::uint64_t seed, const SimOptions& opts = {});

/// Max over all lattice nodes, times, and control pairs (a,b) of
/// [v(s,x,b) - v(s,x,a)]^-; zero means the jump constraint holds.
double constraint_violation(const PenalizedSolution& sol);

struct PrimalComparison {
  double sup_err = 0.0;        // sup |v(s,x,a) - V(s,x)|
  double mean_err = 0.0;
  double control_spread = 0.0; // max over (a,a') of |v(.,a) - v(.,a')|
};

/// Compares the penalized solution against a primal value grid sharing the
/// same lattice shape.
PrimalComparison compare_to_primal(const PenalizedSolution& sol, const ValueGrid& V);

}  // namespace pdmp
