#pragma once

// Closed-form state family for a single disk at inverse temperature beta:
//   Psi(r) = (2/beta) ln(1 + (beta/8pi)(1 - r^2/R^2)),  Psi = 0 on the rim,
//   rho    = e^{-beta Psi} / Z,                          unit total mass,
// valid for beta > -8pi. Everything else in the library is assembled from
// the scalar functions here, parametrized either by beta or by the
// per-component variable mu = -M beta / (8 pi) in (0,1).

#include <limits>
#include <vector>

#include "common.hpp"

namespace vpl::disk {

inline constexpr long double kMuMin = 1e-9L;
inline constexpr long double kMuMax = 1.0L - 1e-9L;

// Energy of the uniform (beta = 0) state; independent of the disk area.
inline constexpr long double kUniformEnergy = 1.0L / (16.0L * kPi);

// sum_{k>=0} t^k/(k+2), the series behind both e_of_mu and the beta-form
// energy. Requires |t| <= 0.5.
template <class T>
T energy_series(T t) {
  T sum = T(0.5), term = T(1), eps = std::numeric_limits<T>::epsilon();
  for (int k = 1; k < 128; ++k) {
    term *= t;
    T add = term / T(k + 2);
    sum += add;
    if (std::fabs(add) <= eps * std::fabs(sum)) break;
  }
  return sum;
}

// Clamps mu into [kMuMin, kMuMax]; throws for mu outside [0,1].
// If `clamped` is non-null it is set when clamping fired.
template <class T>
T clamp_mu(T mu, bool* clamped = nullptr) {
  if (!(mu >= T(0) && mu <= T(1)))
    throw Error(ErrorKind::invalid_argument, "mu must lie in (0,1)");
  if (mu < T(kMuMin)) {
    if (clamped) *clamped = true;
    return T(kMuMin);
  }
  if (mu > T(kMuMax)) {
    if (clamped) *clamped = true;
    return T(kMuMax);
  }
  return mu;
}

// Dilation-invariant energy e(mu) = (-mu - ln(1-mu)) / (8 pi mu^2) of the
// one-disk state with unit mass; e(0+) = 1/(16 pi), diverges as mu -> 1.
// The unchecked form assumes 0 < mu < 1 (used on internally computed roots,
// which may legitimately fall below the public clamp).
template <class T>
T e_of_mu_unchecked(T mu) {
  if (mu <= T(0.5)) return energy_series(mu) / (T(8) * T(kPi));
  return (-mu - std::log(T(1) - mu)) / (T(8) * T(kPi) * mu * mu);
}

template <class T>
T e_of_mu(T mu) {
  return e_of_mu_unchecked(clamp_mu(mu));
}

// Normalization integral z(mu) = area / (1 - mu).
template <class T>
T z_of_mu(T mu, T area) {
  if (!(area > T(0))) throw Error(ErrorKind::invalid_argument, "area must be positive");
  mu = clamp_mu(mu);
  return area / (T(1) - mu);
}

// Energy E(beta) of the unit-area, unit-mass disk; beta > -8pi. The series
// branch takes over for |beta| <= 4pi (and in particular realizes the small
// |beta| Taylor form exactly, returning 1/(16 pi) at beta = 0).
template <class T>
T disk_energy_of_beta(T beta) {
  T m = beta / (T(8) * T(kPi));
  if (!(m > T(-1)))
    throw Error(ErrorKind::invalid_argument, "beta must exceed -8*pi");
  if (std::fabs(m) <= T(0.5)) return energy_series(-m) / (T(8) * T(kPi));
  return (m - std::log1p(m)) / (T(8) * T(kPi) * m * m);
}

// ====== Parametric inverse on the single disk ======

// State of the unit-area disk expressed through u with 1 + beta/8pi = e^u:
// Z = e^{-u}, beta = 8 pi expm1(u). u < 0 is the negative-temperature side.
struct UnitDiskState {
  long double u;
  long double beta;
  long double Z;       // normalization for unit area
  long double energy;
  long double entropy; // S = -u + 2 beta E
};

// Inverts E(beta) on beta in (-8pi, inf); E must be positive.
UnitDiskState state_of_energy(long double E);
UnitDiskState state_of_beta(long double beta);
UnitDiskState state_of_u(long double u);  // direct parametric evaluation

// Entropy of mass M at energy E on a disk of the given area:
//   S(M,E) = M S_1(E/M^2) - M ln M + M ln area,
// the mass-rescaling law combined with the area dilation shift.
double scaled_entropy(double M, double E, double area);

// ====== Radial profile ======

struct StreamProfile {
  std::vector<double> r;
  std::vector<double> psi;
  std::vector<double> rho;
  double beta = 0;
  double Z = 0;
  bool mu_clamped = false;
};

// Closed-form Psi and rho sampled on the given radial grid (0 <= r <= R).
StreamProfile stream_profile(double mu, double area, const std::vector<double>& r_grid);

}  // namespace vpl::disk
