#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pdmp/model.hpp"
#include "pdmp/rng.hpp"
#include "pdmp/simulate.hpp"

namespace pdmp {

/// Finite measure with full support on the discretized control set; weight i
/// belongs to control_grid[i].
struct Lambda0 {
  std::vector<double> weights;

  double total() const;
  void validate(int control_points) const;
  static Lambda0 uniform(int control_points, double total_mass = 1.0);
};

/// Bounded intensity multiplier: the control component jumps to candidate b at
/// rate nu(t, x, mode, current a, b) * lambda0(b).
struct NuPolicy {
  double nu_min = 1e-3;
  double nu_max = 1e3;
  std::function<double(double t, const SpectralField& x, int mode, double a, double b)> rule;

  double eval(double t, const SpectralField& x, int mode, double a, double b) const;
  static NuPolicy constant(double c);
};

enum class JumpKind { Mode, Control };

struct XIJump {
  double time = 0.0;
  JumpKind kind = JumpKind::Mode;
  SpectralField field;  // state at the jump (continuous across it)
  int mode_before = 0, mode_after = 0;
  int control_before = 0, control_after = 0;  // control-grid indices
};

struct XISegment {
  double t0 = 0.0;
  int mode = 0;
  int control_idx = 0;
  std::vector<double> times;  // absolute, uniform sub-grid plus exact end
  std::vector<SpectralField> fields;
};

/// Path of the enlarged uncontrolled process (X, I): X jumps through the mode
/// kernel at rate lambda with I held; I jumps to a fresh control draw at rate
/// nu * lambda0 with X held.
struct XIPath {
  double t_start = 0.0, t_end = 0.0;
  SpectralField x_start;
  int mode_start = 0, control_start = 0;
  std::vector<XISegment> segments;
  std::vector<XIJump> jumps;
  SpectralField x_end;
  int mode_end = 0, control_end = 0;
};

/// Competing-clock simulation by thinning against rate_bound + nu_max *
/// lambda0 total mass. `nu == nullptr` means the reference intensity nu == 1.
XIPath simulate_xi(const PdmpModel& model, const Lambda0& lambda0, const NuPolicy* nu, double t,
                   const SpectralField& x, int mode, double a, Rng& rng,
                   const SimOptions& opts = {});

/// Density of the nu-tilted law against the reference law along a reference
/// path: exp(integral of (1-nu) lambda0) times the product of nu over
/// control jumps; mode jumps contribute factor 1.
double doleans_weight(const PdmpModel& model, const XIPath& path, const NuPolicy& nu,
                      const Lambda0& lambda0);

/// Running cost along (X, I) plus terminal cost.
double dual_cost(const PdmpModel& model, const XIPath& path);

enum class DualMethod {
  Direct,    // simulate under nu
  Weighted,  // simulate under the reference law, reweight by doleans_weight
};

MeanStderr estimate_dual(const PdmpModel& model, const Lambda0& lambda0, const NuPolicy& nu,
                         double t, const SpectralField& x, int mode, double a, int n_paths,
                         std::uint64_t seed, DualMethod method, const SimOptions& opts = {});

/// Parametric family of intensity policies for the dual search.
struct NuFamily {
  int dim = 0;
  Eigen::VectorXd init;
  std::function<NuPolicy(const Eigen::VectorXd&)> make;

  /// exp(theta_b) multiplier per candidate control value (dim = grid size).
  static NuFamily per_control_log(std::vector<double> control_grid, double nu_min = 1e-3,
                                  double nu_max = 1e3);
};

struct NuSearchStep {
  int evaluation = 0;
  Eigen::VectorXd theta;
  double objective = 0.0;
};

struct NuSearchResult {
  Eigen::VectorXd theta;
  MeanStderr value;                // fresh Direct estimate at the minimizer
  std::vector<NuSearchStep> trace;
  int evaluations = 0;
  bool budget_exhausted = false;
};

/// Nelder-Mead over the family parameters; the objective reweights one fixed
/// set of reference paths (common random numbers), and the reported value is a
/// fresh Direct run at the minimizer.
NuSearchResult minimize_over_nu(const PdmpModel& model, const Lambda0& lambda0,
                                const NuFamily& family, double t, const SpectralField& x, int mode,
                                double a, int n_paths, int budget, std::uint64_t seed,
                                const SimOptions& opts = {});

}  // namespace pdmp
