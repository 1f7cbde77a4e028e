#include "pdmp/flow.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <stdexcept>

namespace pdmp {

namespace {
constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd laplacian_rates(int modes, double c) {
  Eigen::VectorXd lam(modes);
  for (int k = 1; k <= modes; ++k) lam[k - 1] = c * k * k * kPi * kPi;
  return lam;
}
}  // namespace

struct AffineFlowSolver::Impl {
  int modes = 0;
  Eigen::MatrixXd A;   // -c*diag(k^2 pi^2) - sum w e p^T
  Eigen::VectorXd beta;
  bool eigen_ok = false;
  Eigen::MatrixXcd V, Vinv;
  Eigen::VectorXcd eigs;
  Eigen::VectorXd xp;  // particular solution, A xp = -beta

  Eigen::VectorXd propagate(const Eigen::VectorXd& x0, double t) const {
    if (modes == 0 || t == 0.0) return x0;
    if (eigen_ok) {
      Eigen::VectorXcd y = Vinv * (x0 - xp).cast<std::complex<double>>();
      for (int i = 0; i < modes; ++i) y[i] *= std::exp(eigs[i] * t);
      return xp + (V * y).real();
    }
    // Augmented matrix exponential (scaling-and-squaring via Pade).
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(modes + 1, modes + 1);
    aug.topLeftCorner(modes, modes) = A * t;
    aug.topRightCorner(modes, 1) = beta * t;
    Eigen::MatrixXd E = aug.exp();
    return E.topLeftCorner(modes, modes) * x0 + E.topRightCorner(modes, 1);
  }
};

AffineFlowSolver::AffineFlowSolver(const AffineDrift& drift, double diffusivity, int field_modes) {
  auto impl = std::make_shared<Impl>();
  impl->modes = field_modes;
  if (field_modes > 0) {
    impl->A = (-laplacian_rates(field_modes, diffusivity)).asDiagonal();
    impl->beta = drift.constant.modes() == field_modes
                     ? drift.constant.coeffs()
                     : Eigen::VectorXd::Zero(field_modes);
    for (const auto& term : drift.terms) {
      if (term.probe.modes() != field_modes || term.emitter.modes() != field_modes)
        throw std::invalid_argument("AffineFlowSolver: rank-one term dimension mismatch");
      impl->A.noalias() -= term.weight * term.emitter.coeffs() * term.probe.coeffs().transpose();
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(impl->A);
    if (es.info() == Eigen::Success) {
      impl->V = es.eigenvectors();
      impl->eigs = es.eigenvalues();
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(impl->V);
      if (lu.isInvertible()) {
        impl->Vinv = lu.inverse();
        Eigen::PartialPivLU<Eigen::MatrixXd> alu(impl->A);
        impl->xp = alu.solve(-impl->beta);
        const double res = (impl->A * impl->xp + impl->beta).norm();
        if (res < 1e-9 * (1.0 + impl->beta.norm())) {
          impl->eigen_ok = true;
          // Cross-check the eigen route against the Pade route once.
          Eigen::VectorXd probe = Eigen::VectorXd::Ones(field_modes);
          Eigen::VectorXd fast = impl->propagate(probe, 0.07);
          impl->eigen_ok = false;
          Eigen::VectorXd ref = impl->propagate(probe, 0.07);
          impl->eigen_ok = (fast - ref).norm() <= 1e-8 * (1.0 + ref.norm());
        }
      }
    }
  }
  impl_ = std::move(impl);
}

SpectralField AffineFlowSolver::at(const SpectralField& x0, double t) const {
  if (t < 0.0) throw std::invalid_argument("AffineFlowSolver::at: negative time");
  if (x0.modes() != impl_->modes) throw std::invalid_argument("AffineFlowSolver::at: dimension mismatch");
  Eigen::VectorXd out = impl_->propagate(x0.coeffs(), t);
  if (!out.allFinite()) throw std::runtime_error("AffineFlowSolver::at: flow blew up");
  return SpectralField(std::move(out));
}

const AffineFlowSolver& FlowEngine::solver(int mode, double a) const {
  int a_idx = 0;
  if (!model_->drift_control_free) a_idx = model_->control_index(a);
  auto key = std::make_pair(mode, a_idx);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    AffineDrift d = model_->drift ? model_->drift(model_->zero_field(), mode, a) : AffineDrift{};
    it = cache_.emplace(key, AffineFlowSolver(d, model_->diffusivity, model_->field_modes)).first;
  }
  return it->second;
}

SpectralField FlowEngine::at(const SpectralField& x0, int mode, double a, double t) const {
  if (model_->field_modes == 0) return x0;
  return solver(mode, a).at(x0, t);
}

int PdmpModel::control_index(double a) const {
  for (std::size_t i = 0; i < control_grid.size(); ++i)
    if (control_grid[i] == a) return static_cast<int>(i);
  throw std::invalid_argument("PdmpModel::control_index: control not on the grid");
}

namespace {

/// One Lawson-RK4 step of size h: integrating factor exp(diag(lam) r) for the
/// Laplacian, classic RK4 for the transformed nonlinearity.
Eigen::VectorXd rk4_duhamel_step(const PdmpModel& model, const Eigen::VectorXd& x, int mode,
                                 double a0, double a_mid, double a1, double t_abs, double h,
                                 const Eigen::VectorXd& lam) {
  auto bval = [&](const Eigen::VectorXd& y, double a) {
    SpectralField yf{y};
    AffineDrift d = model.drift(yf, mode, a);
    return d.value(yf).coeffs();
  };
  auto damp = [&](const Eigen::VectorXd& y, double r) {
    return (Eigen::VectorXd)((-lam * r).array().exp() * y.array());
  };
  auto grow = [&](const Eigen::VectorXd& y, double r) {
    return (Eigen::VectorXd)((lam * r).array().exp() * y.array());
  };
  (void)t_abs;
  auto f = [&](double r, const Eigen::VectorXd& w, double a) {
    return grow(bval(damp(w, r), a), r);
  };
  Eigen::VectorXd k1 = f(0.0, x, a0);
  Eigen::VectorXd k2 = f(0.5 * h, x + 0.5 * h * k1, a_mid);
  Eigen::VectorXd k3 = f(0.5 * h, x + 0.5 * h * k2, a_mid);
  Eigen::VectorXd k4 = f(h, x + h * k3, a1);
  Eigen::VectorXd w = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return damp(w, h);
}

}  // namespace

std::vector<SpectralField> integrate_flow(const PdmpModel& model, const SpectralField& x0,
                                          int mode, const std::function<double(double)>& control,
                                          double span, int substeps, FlowMethod method) {
  if (span < 0.0) throw std::invalid_argument("integrate_flow: negative span");
  if (substeps <= 0) throw std::invalid_argument("integrate_flow: substeps must be positive");
  if (x0.modes() != model.field_modes)
    throw std::invalid_argument("integrate_flow: state dimension mismatch");

  std::vector<SpectralField> path;
  path.reserve(substeps + 1);
  path.push_back(x0);
  if (model.field_modes == 0 || span == 0.0) {
    for (int j = 1; j <= substeps; ++j) path.push_back(x0);
    return path;
  }
  const double h = span / substeps;

  if (method == FlowMethod::Exact) {
    if (model.drift_control_free) {
      const double a = control ? control(0.0) : 0.0;
      AffineFlowSolver solver(model.drift ? model.drift(x0, mode, a) : AffineDrift{},
                              model.diffusivity, model.field_modes);
      for (int j = 1; j <= substeps; ++j) path.push_back(solver.at(x0, j * h));
    } else {
      // Control frozen per substep; each substep is still exactly affine.
      SpectralField x = x0;
      for (int j = 0; j < substeps; ++j) {
        const double a = control(j * h);
        AffineFlowSolver solver(model.drift(x, mode, a), model.diffusivity, model.field_modes);
        x = solver.at(x, h);
        path.push_back(x);
      }
    }
    return path;
  }

  const Eigen::VectorXd lam = laplacian_rates(model.field_modes, model.diffusivity);
  Eigen::VectorXd x = x0.coeffs();
  for (int j = 0; j < substeps; ++j) {
    const double t = j * h;
    const double a0 = control ? control(t) : 0.0;
    const double am = control ? control(t + 0.5 * h) : 0.0;
    const double a1 = control ? control(t + h) : 0.0;
    x = rk4_duhamel_step(model, x, mode, a0, am, a1, t, h, lam);
    if (!x.allFinite())
      throw std::runtime_error("integrate_flow: non-finite field at t=" + std::to_string(t + h));
    path.emplace_back(x);
  }
  return path;
}

}  // namespace pdmp
