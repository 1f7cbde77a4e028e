#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pdmp/config.hpp"
#include "pdmp/model.hpp"

namespace pdmp::hh {

/// Single-channel states: potassium gating ladder, sodium gating ladder with
/// open/closed inactivation gate, and the four-state light-gated channel
/// (O1 and O2 conduct).
enum class ChannelState : int {
  n0, n1, n2, n3, n4,
  m0h0, m1h0, m2h0, m3h0,
  m0h1, m1h1, m2h1, m3h1,
  O1, O2, C1, C2,
};
constexpr int kChannelStateCount = 17;

enum class Family { K, Na, ChR2 };

Family family(ChannelState s);
std::vector<ChannelState> family_states(Family f);
std::string to_string(ChannelState s);
Family family_from_string(const std::string& name);

// Voltage-dependent gating rates (1/ms, u in mV). The removable singularities
// of alpha_n at u=10 and alpha_m at u=25 are handled by series expansion.
double alpha_n(double u);
double beta_n(double u);
double alpha_m(double u);
double beta_m(double u);
double alpha_h(double u);
double beta_h(double u);

/// The bump M(z) = 1_(-1,1)(z) exp(-1/(1-z^2)).
double mollifier_bump(double z);

struct Mollifier {
  SpectralField field;    // projection of (1/gamma) M((z - z_i)/gamma)
  double lip_constant;    // C_i = <(I - Laplacian) phi, phi>^(1/2), spectrally
};

Mollifier mollifier(double z_i, double gamma, int field_modes, int panels);

struct HHParams {
  // Membrane and conductances. Literature-style defaults; user-chosen values,
  // not prescribed by the model itself.
  double c_m = 1.0;        // uF
  double g_k = 36.0;       // mS
  double g_na = 120.0;
  double g_leak = 0.3;
  double g_chr2 = 1.0;
  double v_k = -12.0;      // mV (resting potential at 0 convention)
  double v_na = 115.0;
  double v_leak = 10.6;
  double v_chr2 = 100.0;
  double rho = 0.1;        // relative conductance of O2

  // Light-gated channel kinetics (1/ms; eps1, eps2 per unit light intensity).
  double eps1 = 0.5;
  double eps2 = 0.1;
  double k_d1 = 0.13;
  double k_d2 = 0.025;
  double e12 = 0.053;
  double e21 = 0.023;
  double k_r = 0.0004;

  int sites = 1;                        // N; sites at i/(N+1), i = 1..N
  std::vector<Family> site_families;    // size == sites
  double gamma = 0.1;                   // mollifier width
  double a_max = 1.0;
  int control_points = 2;               // grid {0, ..., a_max}
  double kappa = 0.0;                   // tracking weight
  int field_modes = 32;                 // K
  int panels = 512;
  double horizon = 5.0;                 // ms
  bool h_gate = true;                   // include h-flips at alpha_h/beta_h
  double clip_margin = 10.0;            // rate clamp range [V- - m, V+ + m]
  double cost_radius_margin = 5.0;      // L2 radius margin of the cost compact
  SpectralField v_ref;                  // band-limited reference potential

  double v_min() const;
  double v_max() const;
  double site_position(int i) const;    // 0-based site index
  void validate() const;                // throws with a field-path diagnostic
};

HHParams params_from_config(const Config& cfg);

/// Mixed-radix encoding of a channel configuration (one state per site) into a
/// dense mode index.
class ConfigCodec {
 public:
  explicit ConfigCodec(std::vector<Family> site_families);
  int mode_count() const { return count_; }
  int encode(const std::vector<ChannelState>& states) const;
  std::vector<ChannelState> decode(int mode) const;
  const std::vector<Family>& families() const { return families_; }

 private:
  std::vector<Family> families_;
  std::vector<std::vector<ChannelState>> site_states_;
  int count_ = 1;
};

class HHModel {
 public:
  explicit HHModel(HHParams params);

  const HHParams& params() const { return params_; }
  const ConfigCodec& codec() const { return codec_; }
  const Mollifier& site_mollifier(int i) const { return mollifiers_.at(i); }

  /// Local membrane potential <v, phi_{z_i}>.
  double phi(const SpectralField& v, int site) const;
  /// Smoothly clamped voltage argument fed to the gating rates.
  double clip_voltage(double u) const;

  std::vector<std::pair<ChannelState, double>> single_site_rates(ChannelState s, double u,
                                                                 double a) const;
  AffineDrift drift(int mode) const;
  double total_rate(const SpectralField& v, int mode, double a) const;
  std::vector<std::pair<int, double>> jump_kernel(const SpectralField& v, int mode, double a) const;
  double running_cost(const SpectralField& v, double a) const;
  /// Grid-maximized bound on the total rate (with margin).
  double rate_bound() const { return rate_bound_; }

 private:
  HHParams params_;
  ConfigCodec codec_;
  std::vector<Mollifier> mollifiers_;
  double rate_bound_ = 0.0;

  double compute_rate_bound() const;
};

/// Assembles the full PdmpModel (drift_control_free, g == 0, c = 1/C_m).
PdmpModel build_model(const HHParams& params);
PdmpModel build_model(std::shared_ptr<const HHModel> model);

}  // namespace pdmp::hh
