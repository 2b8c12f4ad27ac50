#pragma once

// Independent verification paths: a radial finite-difference solve of the
// disk mean-field equation (no closed forms involved), and brute-force
// maximization of the total entropy over discretized mass/energy splits.

#include <vector>

#include "branch_builder.hpp"

namespace vpl::oracle {

// Single-disk entropy at total mass M on a disk of the given area; inverts
// the parametric E(beta) curve numerically.
double disk_entropy_of_energy(double E, double M = 1.0, double area = 1.0);

struct GridMvpOptions {
  int mass_points = 201;    // integer mass simplex resolution
  int energy_points = 201;  // integer energy simplex resolution
  int refine_rounds = 3;    // local refinement passes, x10 shrink each
  int refine_points = 41;   // grid points per free dimension when refining
  // Refuse the N > 3 multi-start fallback; grid_mvp then reports an error
  // suggesting the branch-based envelope for large component counts.
  bool exhaustive_only = false;
};

struct GridMvpResult {
  double S = 0;
  std::vector<double> M;         // optimal masses, sum 1
  std::vector<double> E_i;       // optimal energies, sum E
  std::vector<double> beta_hat;  // finite-difference d(S_i)/dE_i at the optimum
  bool exhaustive = true;        // false for the N > 3 multi-start fallback
};

// Maximizes sum_i S_i(M_i, E_i) subject to sum M_i = 1, sum E_i = E.
// Exhaustive over integer simplex grids for N <= 3, deterministic multi-start
// coordinate ascent beyond that.
GridMvpResult grid_mvp(const branch::Domain& d, double E, const GridMvpOptions& opts = {});

struct RadialSolveOptions {
  int nodes = 20000;        // radial grid resolution
  int max_iterations = 200;
  double tolerance = 1e-12;  // sup-norm of the Newton residual
};

struct RadialSolution {
  std::vector<double> r;    // nodes 0..R
  std::vector<double> psi;  // stream function, psi[last] = 0
  double beta = 0;
  double Z = 0;              // normalization integral of exp(-beta psi)
  double E = 0;              // (1/2) integral |grad psi|^2
  double E_virial = 0;       // (1/2) integral psi rho, cross-check
  int iterations = 0;
};

// Solves psi'' + psi'/r = -exp(-beta psi)/Z, psi'(0) = 0, psi(R) = 0 with
// the mass normalization built into the unknowns (Newton on (psi, Z) with a
// pivoted arrow factorization; regular through the beta = -4*pi fold).
// Seeds from beta = 0 and walks beta in steps; never consults closed forms.
RadialSolution radial_mfe_solve(double beta, double area, const RadialSolveOptions& opts = {});

}  // namespace vpl::oracle
