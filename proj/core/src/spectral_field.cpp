#include "pdmp/spectral_field.hpp"

#include <cmath>
#include <string>

namespace pdmp {

namespace {
constexpr double kPi = 3.14159265358979323846;

void require_same_modes(const SpectralField& a, const SpectralField& b) {
  if (a.modes() != b.modes())
    throw std::invalid_argument("SpectralField: mode count mismatch (" +
                                std::to_string(a.modes()) + " vs " + std::to_string(b.modes()) + ")");
}
}  // namespace

SpectralField::SpectralField(Eigen::VectorXd coeffs) : coeffs_(std::move(coeffs)) {
  if (!coeffs_.allFinite()) throw std::invalid_argument("SpectralField: non-finite coefficient");
}

SpectralField SpectralField::basis(int modes, int k) {
  if (k < 1 || k > modes) throw std::invalid_argument("SpectralField::basis: mode out of range");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(modes);
  c[k - 1] = 1.0;
  return SpectralField(std::move(c));
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
  require_same_modes(*this, o);
  coeffs_ += o.coeffs_;
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
  require_same_modes(*this, o);
  coeffs_ -= o.coeffs_;
  return *this;
}

double simpson(const std::function<double(double)>& g, double a, double b, int panels) {
  if (panels <= 0 || panels % 2 != 0)
    throw std::invalid_argument("simpson: panels must be positive and even");
  const double h = (b - a) / panels;
  double acc = 0.0;
  for (int j = 0; j <= panels; ++j) {
    const double z = a + j * h;
    const double fz = g(z);
    if (!std::isfinite(fz))
      throw std::runtime_error("simpson: non-finite sample at z=" + std::to_string(z));
    const double w = (j == 0 || j == panels) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    acc += w * fz;
  }
  return acc * h / 3.0;
}

SpectralField project(const std::function<double(double)>& f, int modes, int panels) {
  Eigen::VectorXd c(modes);
  for (int k = 1; k <= modes; ++k) {
    c[k - 1] = simpson([&](double z) { return f(z) * std::sqrt(2.0) * std::sin(k * kPi * z); },
                       0.0, 1.0, panels);
  }
  return SpectralField(std::move(c));
}

double eval_pointwise(const SpectralField& v, double z) {
  if (z < 0.0 || z > 1.0) throw std::invalid_argument("eval_pointwise: z outside [0,1]");
  double s = 0.0;
  for (int k = 1; k <= v.modes(); ++k)
    s += v.coeff(k - 1) * std::sqrt(2.0) * std::sin(k * kPi * z);
  return s;
}

double norm(const SpectralField& v, NormKind kind) {
  double s = 0.0;
  for (int k = 1; k <= v.modes(); ++k) {
    const double c2 = v.coeff(k - 1) * v.coeff(k - 1);
    const double w = 1.0 + k * k * kPi * kPi;
    switch (kind) {
      case NormKind::L2: s += c2; break;
      case NormKind::Minus1: s += c2 / w; break;
      case NormKind::H1V: s += c2 * w; break;
    }
  }
  return std::sqrt(s);
}

double inner(const SpectralField& v, const SpectralField& w) {
  if (v.modes() != w.modes()) throw std::invalid_argument("inner: mode count mismatch");
  return v.coeffs().dot(w.coeffs());
}

SpectralField semigroup_apply(const SpectralField& v, double r, double c) {
  if (r < 0.0) throw std::invalid_argument("semigroup_apply: negative time");
  if (c <= 0.0) throw std::invalid_argument("semigroup_apply: nonpositive diffusivity");
  Eigen::VectorXd out(v.modes());
  for (int k = 1; k <= v.modes(); ++k)
    out[k - 1] = std::exp(-c * r * k * k * kPi * kPi) * v.coeff(k - 1);
  return SpectralField(std::move(out));
}

}  // namespace pdmp
