#pragma once

#include <map>
#include <memory>

#include "pdmp/model.hpp"

namespace pdmp {

enum class FlowMethod {
  Exact,       // closed-form solution of the affine system (matrix exponential)
  Rk4Duhamel,  // exact semigroup for the Laplacian, RK4 on the Duhamel integrand
};

/// Exact propagator for dx/dt = -c*L x + b(x) with affine b. Eigendecomposes
/// the dense coefficient matrix once; falls back to a scaling-and-squaring
/// matrix exponential per call when the eigenbasis is ill-conditioned.
class AffineFlowSolver {
 public:
  AffineFlowSolver(const AffineDrift& drift, double diffusivity, int field_modes);
  SpectralField at(const SpectralField& x0, double t) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Per-(mode, control) cache of affine flow solvers for a model whose drift
/// descriptor depends only on (mode, control).
class FlowEngine {
 public:
  explicit FlowEngine(const PdmpModel& model) : model_(&model) {}
  const AffineFlowSolver& solver(int mode, double a) const;
  SpectralField at(const SpectralField& x0, int mode, double a, double t) const;

 private:
  const PdmpModel* model_;
  mutable std::map<std::pair<int, int>, AffineFlowSolver> cache_;
};

/// Flow on the uniform sub-grid {0, span/substeps, ..., span}; result[j] is the
/// field at time j*span/substeps. `control` maps elapsed time to a control
/// value (ignored when the drift is control-free).
std::vector<SpectralField> integrate_flow(const PdmpModel& model, const SpectralField& x0,
                                          int mode, const std::function<double(double)>& control,
                                          double span, int substeps,
                                          FlowMethod method = FlowMethod::Exact);

}  // namespace pdmp
