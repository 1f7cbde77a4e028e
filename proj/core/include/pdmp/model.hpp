#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pdmp/spectral_field.hpp"

namespace pdmp {

/// Drift descriptor x -> constant - sum_i weight_i * <x, probe_i> * emitter_i.
/// The Laplacian part is not included here; it is applied exactly through the
/// semigroup using the model diffusivity.
struct AffineDrift {
  struct RankOne {
    double weight = 0.0;
    SpectralField probe;
    SpectralField emitter;
  };
  SpectralField constant;
  std::vector<RankOne> terms;

  SpectralField value(const SpectralField& x) const {
    SpectralField out = constant;
    for (const auto& t : terms) out -= (t.weight * inner(x, t.probe)) * t.emitter;
    return out;
  }
};

/// PDMP state: field component, discrete mode, time since the last jump.
struct HybridState {
  SpectralField field;
  int mode = 0;
  double clock = 0.0;
};

/// Local characteristics plus costs and bounds. Descriptors must be pure
/// functions; the drift descriptor may depend only on (mode, control), which
/// lets flow solutions be cached per mode.
struct PdmpModel {
  int mode_count = 1;
  int field_modes = 0;  // K; 0 for field-free toy models
  std::vector<double> control_grid;

  std::function<AffineDrift(const SpectralField&, int mode, double a)> drift;
  bool drift_control_free = true;

  /// Jump rate lambda(field, mode, a, elapsed). `elapsed` is the time since
  /// the segment start; physical models ignore it (kept for toy hazards).
  std::function<double(const SpectralField&, int mode, double a, double elapsed)> rate;

  /// Successor-mode distribution; the field component is unchanged at jumps.
  std::function<std::vector<std::pair<int, double>>(const SpectralField&, int mode, double a)> kernel;

  std::function<double(const SpectralField&, int mode, double a)> running_cost;
  std::function<double(const SpectralField&, int mode)> terminal_cost;

  double rate_bound = 1.0;   // M, lambda <= M everywhere
  double horizon = 1.0;      // T
  double diffusivity = 1.0;  // c in L = -c*Laplacian
  double cost_bound = 1e6;   // declared bound on |f|, |g|

  double control(int idx) const { return control_grid.at(idx); }
  int control_index(double a) const;

  SpectralField zero_field() const { return SpectralField::zero(field_modes); }
};

/// Piecewise open-loop control: re-anchored at every jump as a function of the
/// time elapsed since the jump and the post-jump state.
struct OpenLoopPolicy {
  std::function<double(double since_jump, const SpectralField&, int mode)> rule;

  static OpenLoopPolicy constant(double a) {
    return {[a](double, const SpectralField&, int) { return a; }};
  }
};

struct TrajectorySegment {
  double t0 = 0.0;
  int mode = 0;
  std::vector<double> times;  // absolute, uniform sub-grid plus exact segment end
  std::vector<SpectralField> fields;
  std::vector<double> controls;
};

struct Trajectory {
  double t_start = 0.0;
  HybridState start;
  std::vector<TrajectorySegment> segments;
  std::vector<double> jump_times;
  std::vector<int> jump_marks;
  HybridState terminal;
  double t_end = 0.0;
};

}  // namespace pdmp
