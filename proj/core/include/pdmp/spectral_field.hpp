#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace pdmp {

/// Element of L2(0,1) with homogeneous Dirichlet boundary, stored as the
/// first K coefficients against the orthonormal sine basis
/// f_k(z) = sqrt(2) sin(k pi z), k = 1..K.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(Eigen::VectorXd coeffs);
  static SpectralField zero(int modes) { return SpectralField(Eigen::VectorXd::Zero(modes)); }
  /// Basis vector f_k (1-based mode index).
  static SpectralField basis(int modes, int k);

  int modes() const { return static_cast<int>(coeffs_.size()); }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  double coeff(int k) const { return coeffs_[k]; }  // 0-based

  SpectralField& operator+=(const SpectralField& o);
  SpectralField& operator-=(const SpectralField& o);
  SpectralField& operator*=(double s) { coeffs_ *= s; return *this; }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

 private:
  Eigen::VectorXd coeffs_;
};

enum class NormKind { L2, Minus1, H1V };

/// Coefficients of f against the sine basis by composite Simpson quadrature
/// with `panels` panels (panels must be even).
SpectralField project(const std::function<double(double)>& f, int modes, int panels);

double eval_pointwise(const SpectralField& v, double z);

double norm(const SpectralField& v, NormKind kind);

double inner(const SpectralField& v, const SpectralField& w);

/// Heat semigroup S(r) for L = -c*Laplacian: coeff_k -> exp(-c r k^2 pi^2) coeff_k.
SpectralField semigroup_apply(const SpectralField& v, double r, double c);

/// Simpson quadrature of g on [a,b] with an even number of panels.
double simpson(const std::function<double(double)>& g, double a, double b, int panels);

}  // namespace pdmp
