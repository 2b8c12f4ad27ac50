#include "disk_core.hpp"

#include <cmath>

namespace vpl::disk {

namespace {

// expm1(u) - u without cancellation (series for small |u|).
long double expm1_minus_u(long double u) {
  if (std::fabs(u) > 0.5L) return std::expm1(u) - u;
  long double sum = 0.0L, term = u;
  for (int k = 2; k < 64; ++k) {
    term *= u / k;
    sum += term;
    if (std::fabs(term) <= 1e-22L * std::fabs(sum)) break;
  }
  return sum;
}

long double energy_of_u(long double u) {
  long double d = std::expm1(u);
  if (u == 0.0L) return kUniformEnergy;
  return expm1_minus_u(u) / (8.0L * kPi * d * d);
}

UnitDiskState state_from_u(long double u) {
  UnitDiskState s;
  s.u = u;
  s.beta = 8.0L * kPi * std::expm1(u);
  s.Z = std::exp(-u);
  s.energy = energy_of_u(u);
  s.entropy = -u + 2.0L * s.beta * s.energy;
  return s;
}

}  // namespace

UnitDiskState state_of_u(long double u) { return state_from_u(u); }

UnitDiskState state_of_beta(long double beta) {
  long double m = beta / (8.0L * kPi);
  if (!(m > -1.0L)) throw Error(ErrorKind::invalid_argument, "beta must exceed -8*pi");
  return state_from_u(std::log1p(m));
}

UnitDiskState state_of_energy(long double E) {
  if (!(E > 0.0L)) throw Error(ErrorKind::invalid_argument, "energy must be positive");
  // E(u) is strictly decreasing; bracket and bisect in u.
  long double lo = -(8.0L * kPi * E + 3.0L);
  long double hi = 1.0L;
  while (energy_of_u(hi) > E) {
    hi *= 2.0L;
    if (hi > 1e6L) throw Error(ErrorKind::no_convergence, "energy inversion bracket failed");
  }
  for (int it = 0; it < 400; ++it) {
    long double mid = 0.5L * (lo + hi);
    if (energy_of_u(mid) > E) lo = mid; else hi = mid;
    if (hi - lo <= 1e-19L * (std::fabs(lo) + std::fabs(hi) + 1e-30L)) break;
  }
  return state_from_u(0.5L * (lo + hi));
}

double scaled_entropy(double M, double E, double area) {
  if (!(M > 0)) throw Error(ErrorKind::invalid_argument, "mass must be positive");
  if (!(E > 0)) throw Error(ErrorKind::invalid_argument, "energy must be positive");
  if (!(area > 0)) throw Error(ErrorKind::invalid_argument, "area must be positive");
  long double m = M;
  UnitDiskState unit = state_of_energy(static_cast<long double>(E) / (m * m));
  return static_cast<double>(m * unit.entropy - m * std::log(m) +
                             m * std::log(static_cast<long double>(area)));
}

StreamProfile stream_profile(double mu, double area, const std::vector<double>& r_grid) {
  if (!(area > 0)) throw Error(ErrorKind::invalid_argument, "area must be positive");
  StreamProfile out;
  long double muc = clamp_mu(static_cast<long double>(mu), &out.mu_clamped);
  long double R2 = static_cast<long double>(area) / kPi;
  long double R = std::sqrt(R2);
  long double beta = -8.0L * kPi * muc;
  long double Z = area / (1.0L - muc);
  out.beta = static_cast<double>(beta);
  out.Z = static_cast<double>(Z);
  out.r = r_grid;
  out.psi.resize(r_grid.size());
  out.rho.resize(r_grid.size());
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    long double r = r_grid[i];
    if (!(r >= 0.0L) || r > R * (1.0L + 1e-12L))
      throw Error(ErrorKind::out_of_range, "radial grid point outside [0,R]");
    long double s = 1.0L - (r * r) / R2;
    if (s < 0.0L) s = 0.0L;
    long double arg = -muc * s;          // profile argument minus one
    long double lg = std::log1p(arg);    // ln(1 - mu s)
    out.psi[i] = static_cast<double>(2.0L * lg / beta);
    long double om = 1.0L + arg;
    out.rho[i] = static_cast<double>(1.0L / (Z * om * om));
  }
  return out;
}

}  // namespace vpl::disk
