#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdmp/bsde.hpp"
#include "pdmp/model.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/randomization.hpp"

namespace pdmp::io {

/// Round-trip decimal formatting ("%.17g"); all CSV output flows through this
/// so reruns are byte-identical.
std::string fmt(double v);

/// Columns: t, mode, control, then the field sampled at z_samples uniform
/// points of (0,1) (omitted for field-free models), then the L2 norm.
void write_trajectory_csv(const std::string& path, const PdmpModel& model, const Trajectory& traj,
                          int z_samples = 21);

void write_value_grid(const std::string& csv_path, const std::string& json_path,
                      const ValueGrid& grid, const std::vector<double>& residuals,
                      int field_modes);
ValueGrid read_value_grid(const std::string& csv_path, const std::string& json_path);

/// Rows: t, features..., control value, v.
void write_penalized_csv(const std::string& path, const PenalizedSolution& sol,
                         const PdmpModel& model);

void write_nu_trace_csv(const std::string& path, const NuSearchResult& res);

struct RunManifest {
  std::string command;
  std::string config_origin;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string version;
  double wall_seconds = 0.0;  // informational; excluded from determinism checks
  std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace pdmp::io
