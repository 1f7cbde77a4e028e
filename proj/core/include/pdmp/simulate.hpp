#pragma once

#include <cstdint>
#include <optional>

#include "pdmp/flow.hpp"
#include "pdmp/model.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

struct SimOptions {
  double sample_step = 0.01;   // ms; per-segment sub-grid for cost quadrature
  long jump_cap = 1'000'000;   // guards against explosion
};

struct MeanStderr {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

/// Field at elapsed time since segment start, under the policy anchored at the
/// segment start state.
SpectralField flow_at(const PdmpModel& model, const FlowEngine& engine, const SpectralField& x0,
                      int mode, const OpenLoopPolicy& policy, double elapsed);

/// Thinning against the declared bound M. Returns the elapsed jump time, or
/// nullopt if no jump occurs before `horizon_remaining`.
std::optional<double> sample_jump_time(const PdmpModel& model, const FlowEngine& engine,
                                       const SpectralField& x0, int mode,
                                       const OpenLoopPolicy& policy, Rng& rng,
                                       double horizon_remaining);

int sample_jump_target(const PdmpModel& model, const SpectralField& x, int mode, double a,
                       Rng& rng);

Trajectory simulate(const PdmpModel& model, double t, const SpectralField& x, int mode,
                    const OpenLoopPolicy& policy, Rng& rng, const SimOptions& opts = {});

/// Trapezoid integral of the running cost along the recorded sub-grid plus the
/// terminal cost.
double path_cost(const PdmpModel& model, const Trajectory& traj);

MeanStderr estimate_cost(const PdmpModel& model, double t, const SpectralField& x, int mode,
                         const OpenLoopPolicy& policy, int n_paths, std::uint64_t seed,
                         const SimOptions& opts = {});

/// Smooth cylindrical test function of (time, first m field coefficients, mode)
/// with analytic derivatives.
struct CylindricalTest {
  int m = 0;
  std::function<double(double s, const Eigen::VectorXd& c, int mode)> value;
  std::function<double(double s, const Eigen::VectorXd& c, int mode)> dt;
  std::function<Eigen::VectorXd(double s, const Eigen::VectorXd& c, int mode)> grad;
};

/// Monte Carlo residual of the Dynkin formula, stopping at
/// min(stop_time, first exit from ||x||_L2 <= radius, T).
MeanStderr dynkin_residual(const PdmpModel& model, const CylindricalTest& psi, double t,
                           const SpectralField& x, int mode, const OpenLoopPolicy& policy,
                           int n_paths, std::uint64_t seed, double stop_time, double radius,
                           const SimOptions& opts = {});

}  // namespace pdmp
