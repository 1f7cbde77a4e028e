#include "pdmp/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pdmp::io {

namespace {
std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io: cannot open for writing: " + path);
  return out;
}
}  // namespace

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const std::string& path, const PdmpModel& model, const Trajectory& traj,
                          int z_samples) {
  auto out = open_out(path);
  out << "t,mode,control";
  const bool with_field = model.field_modes > 0;
  if (with_field) {
    for (int i = 1; i <= z_samples; ++i) out << ",v_z" << i;
    out << ",l2_norm";
  }
  out << "\n";
  for (const auto& seg : traj.segments) {
    for (std::size_t j = 0; j < seg.times.size(); ++j) {
      out << fmt(seg.times[j]) << ',' << seg.mode << ',' << fmt(seg.controls[j]);
      if (with_field) {
        for (int i = 1; i <= z_samples; ++i)
          out << ',' << fmt(eval_pointwise(seg.fields[j], i / (z_samples + 1.0)));
        out << ',' << fmt(norm(seg.fields[j], NormKind::L2));
      }
      out << "\n";
    }
  }
}

void write_value_grid(const std::string& csv_path, const std::string& json_path,
                      const ValueGrid& grid, const std::vector<double>& residuals,
                      int field_modes) {
  const int d = static_cast<int>(grid.spec().feature_axes.size());
  {
    auto out = open_out(csv_path);
    out << "t";
    for (int k = 0; k < d; ++k) out << ",f" << k;
    out << ",mode,value\n";
    for (int ti = 0; ti < grid.time_points(); ++ti)
      for (int fi = 0; fi < grid.feature_points(); ++fi) {
        const Eigen::VectorXd f = grid.feature_point(fi);
        for (int m = 0; m < grid.mode_count(); ++m) {
          out << fmt(grid.spec().times[ti]);
          for (int k = 0; k < d; ++k) out << ',' << fmt(f[k]);
          out << ',' << m << ',' << fmt(grid.at(ti, fi, m)) << "\n";
        }
      }
  }
  nlohmann::json j;
  j["schema"] = "value_grid/1";
  j["times"] = grid.spec().times;
  j["feature_axes"] = grid.spec().feature_axes;
  j["mode_count"] = grid.mode_count();
  j["field_modes"] = field_modes;
  j["residual_history"] = residuals;
  open_out(json_path) << j.dump(2) << "\n";
}

ValueGrid read_value_grid(const std::string& csv_path, const std::string& json_path) {
  std::ifstream jin(json_path);
  if (!jin) throw std::runtime_error("io: cannot open " + json_path);
  nlohmann::json j;
  jin >> j;
  if (j.value("schema", "") != "value_grid/1")
    throw std::runtime_error("io: unexpected sidecar schema in " + json_path);
  std::vector<double> times = j.at("times").get<std::vector<double>>();
  auto axes = j.at("feature_axes").get<std::vector<std::vector<double>>>();
  const int mode_count = j.at("mode_count").get<int>();
  const int field_modes = j.at("field_modes").get<int>();

  LatticeSpec spec = axes.empty() ? LatticeSpec::mode_only(times)
                                  : LatticeSpec::leading_modes(times, axes, field_modes);
  ValueGrid grid(spec, mode_count);

  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("io: cannot open " + csv_path);
  std::string line;
  std::getline(in, line);  // header
  for (int ti = 0; ti < grid.time_points(); ++ti)
    for (int fi = 0; fi < grid.feature_points(); ++fi)
      for (int m = 0; m < grid.mode_count(); ++m) {
        if (!std::getline(in, line))
          throw std::runtime_error("io: truncated value grid CSV: " + csv_path);
        const auto pos = line.find_last_of(',');
        grid.at(ti, fi, m) = std::stod(line.substr(pos + 1));
      }
  return grid;
}

void write_penalized_csv(const std::string& path, const PenalizedSolution& sol,
                         const PdmpModel& model) {
  auto out = open_out(path);
  const int d = static_cast<int>(sol.values[0].spec().feature_axes.size());
  out << "t";
  for (int k = 0; k < d; ++k) out << ",f" << k;
  out << ",control,mode,value\n";
  for (int ti = 0; ti < sol.values[0].time_points(); ++ti)
    for (int fi = 0; fi < sol.values[0].feature_points(); ++fi) {
      const Eigen::VectorXd f = sol.values[0].feature_point(fi);
      for (std::size_t a = 0; a < sol.values.size(); ++a)
        for (int m = 0; m < sol.values[0].mode_count(); ++m) {
          out << fmt(sol.times[ti]);
          for (int k = 0; k < d; ++k) out << ',' << fmt(f[k]);
          out << ',' << fmt(model.control_grid[a]) << ',' << m << ','
              << fmt(sol.values[a].at(ti, fi, m)) << "\n";
        }
    }
}

void write_nu_trace_csv(const std::string& path, const NuSearchResult& res) {
  auto out = open_out(path);
  out << "evaluation";
  const int d = res.trace.empty() ? static_cast<int>(res.theta.size())
                                  : static_cast<int>(res.trace.front().theta.size());
  for (int k = 0; k < d; ++k) out << ",theta" << k;
  out << ",objective\n";
  for (const auto& step : res.trace) {
    out << step.evaluation;
    for (int k = 0; k < d; ++k) out << ',' << fmt(step.theta[k]);
    out << ',' << fmt(step.objective) << "\n";
  }
}

void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["schema"] = "run_manifest/1";
  j["command"] = m.command;
  j["config"] = m.config_origin;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["wall_seconds"] = m.wall_seconds;
  j["outputs"] = m.outputs;
  open_out(path) << j.dump(2) << "\n";
}

}  // namespace pdmp::io
