#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pdmp/flow.hpp"
#include "pdmp/model.hpp"
#include "pdmp/simulate.hpp"

namespace pdmp {

/// Lattice over which value functions are tabulated: a time grid times a
/// tensor-product grid of field features, exact in the mode.
struct LatticeSpec {
  std::vector<double> times;                       // increasing, back() == horizon
  std::vector<std::vector<double>> feature_axes;   // per feature dim, sorted; may be empty
  std::function<Eigen::VectorXd(const SpectralField&)> features;  // state -> features
  std::function<SpectralField(const Eigen::VectorXd&)> lift;      // features -> field

  /// Field-free lattice: states are (time, mode) only.
  static LatticeSpec mode_only(std::vector<double> times);
  /// Features = first d sine coefficients, lifted back as a band-limited field.
  static LatticeSpec leading_modes(std::vector<double> times,
                                   std::vector<std::vector<double>> axes, int field_modes);
};

/// Tabulated value function, multilinear in features, linear in time, exact in
/// the mode. Queries outside the lattice hull throw.
class ValueGrid {
 public:
  ValueGrid(LatticeSpec spec, int mode_count);

  int time_points() const { return static_cast<int>(spec_.times.size()); }
  int feature_points() const { return feature_points_; }
  int mode_count() const { return modes_; }
  const LatticeSpec& spec() const { return spec_; }

  double& at(int time_idx, int feature_idx, int mode);
  double at(int time_idx, int feature_idx, int mode) const;
  /// Decode a flat feature index into the feature vector of that lattice node.
  Eigen::VectorXd feature_point(int feature_idx) const;

  double value(double t, const SpectralField& x, int mode) const;
  double value_features(double t, const Eigen::VectorXd& f, int mode) const;

  /// Snapshot of the current table as a plain callable.
  std::function<double(double, const SpectralField&, int)> as_fn() const;

  double max_abs() const;
  double max_abs_diff(const ValueGrid& other) const;

 private:
  LatticeSpec spec_;
  int modes_ = 0;
  int feature_points_ = 1;
  std::vector<int> axis_sizes_;
  std::vector<double> values_;  // [time][feature][mode]

  int flat(int time_idx, int feature_idx, int mode) const;
};

using ValueFn = std::function<double(double t, const SpectralField& x, int mode)>;

/// One-step Bellman operator: cost up to the first jump plus the continuation
/// psi at the post-jump state, minimized over the control. When the drift is
/// control-free the inner minimization over open-loop controls is solved
/// exactly by a backward scalar ODE along the fixed flow (RK4 on `substeps`
/// steps); otherwise only constant controls are searched (an upper bound).
double apply_T(const PdmpModel& model, const FlowEngine& engine, const ValueFn& psi, double t,
               const SpectralField& x, int mode, int substeps = 64);
double apply_T(const PdmpModel& model, const ValueFn& psi, double t, const SpectralField& x,
               int mode, int substeps = 64);

struct SolveResult {
  ValueGrid grid;
  std::vector<double> residuals;  // sup-lattice residual per iteration
  int iterations = 0;
  bool converged = false;
};

/// Value iteration from V0 == 0 until the sup residual drops below tol.
/// Throws if the residual increases for 3 consecutive iterations.
SolveResult solve(const PdmpModel& model, const LatticeSpec& lattice, double tol, int max_iter,
                  int substeps = 64);

struct DppResult {
  double residual = 0.0;
  double se = 0.0;
  double best_control = 0.0;
};

/// Monte Carlo check of the one-step dynamic programming identity at (t,x,mode):
/// min over constant first-segment controls of E[cost to first jump + V there]
/// minus V(t,x,mode).
DppResult dpp_residual(const ValueGrid& V, const PdmpModel& model, double t,
                       const SpectralField& x, int mode, int n_paths, std::uint64_t seed,
                       int substeps = 64);

struct BruteForceResult {
  ValueGrid grid;
  double truncation_bound = 0.0;  // dominating-Poisson tail times the cost bound
};

/// Independent oracle for mode-only models: exact expansion of the expectation
/// over jump counts 0..jump_cap, minimizing over constant controls per
/// inter-jump segment. Throws for models with a field component.
BruteForceResult brute_force_value(const PdmpModel& model, std::vector<double> times, int jump_cap,
                                   int substeps = 64);

/// Enumeration-tractable test model: finite modes, field-free, cyclic kernel,
/// cost f(m,a) = mode_costs[m] + control_cost * a.
struct ToyParams {
  std::vector<double> mode_rates;        // per-mode base jump rate
  std::vector<double> mode_costs;        // per-mode running cost
  std::vector<double> terminal_costs;    // per-mode terminal cost; empty = zeros
  double control_cost = 0.3;
  double rate_control_slope = 0.0;       // rate *= 1 + slope * a
  double rate_time_slope = 0.0;          // rate *= 1 + slope * elapsed
  std::vector<double> controls = {0.0, 1.0};
  double horizon = 1.0;
};

PdmpModel make_toy(const ToyParams& p);

}  // namespace pdmp
