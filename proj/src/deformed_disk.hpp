#pragma once

// First-order thermodynamics of conformally deformed disks (amplitude
// eps = sqrt(eta)) and the high-energy transition construction: N nearly
// identical components whose areas and deformations are tuned so that the
// max-entropy branch hops from component N down to component 1 as the energy
// grows, one first-order jump per hop.

#include <string>
#include <vector>

#include "branch_builder.hpp"
#include "transition_finder.hpp"

namespace vpl::deformed {

inline constexpr double kEtaMax = 0.05;

// Shape factors of the first-order expansion; finite on (0,1) since
// 1 - 2*mu/3 stays in (1/3, 1).
long double tau(long double mu);
long double zeta(long double mu);

// Scaled energy and partition factor of a deformed component, first order in
// eta. At eta = 0 these match the round-disk values exactly. eta beyond
// kEtaMax is outside the expansion's trust region and throws unless
// allow_large_eta is set.
long double perturbed_e(long double mu, long double eta, bool allow_large_eta = false);
long double perturbed_z(long double mu, long double eta, long double area,
                        bool allow_large_eta = false);

struct HighEnergyMu {
  long double mu = 0;              // exact root of mu(1-mu) = gamma a (1 + eta zeta(mu))
  long double mu_asymptotic = 0;   // small-gamma form: gamma a (1+eta) or 1 - gamma a (1-3 eta)
};

// Root of the deformed fixed-point equation on the requested side
// (sign = -1: near 0, sign = +1: near 1). Bracketed solve, not asymptotic.
HighEnergyMu high_energy_mu(long double gamma, long double area, long double eta, int sign);

// Branch point of a deformed-component domain at a given gamma; signs as in
// branch::from_gamma. Round components (eta = 0) are handled identically to
// the branch machinery.
branch::PointLD deformed_from_gamma(const branch::Domain& d, long double gamma,
                                    const std::vector<int>& signs);

struct HighEnergyPlan {
  int N = 0;
  double eta = 0;                       // base deformation scale
  std::vector<double> alpha;            // a_i = 1 + alpha_i * eta, strictly decreasing
  std::vector<double> q;                // eta_i = q_i * eta, strictly increasing
  std::vector<double> gamma_crossings;  // in encounter order (gamma decreasing)
  std::vector<double> E_crossings;      // same crossings by energy (increasing)
  std::vector<int> winner_from, winner_to;  // 1-based components swapping at each crossing

  branch::Domain domain() const;  // components (1 + alpha_i eta, q_i eta)
};

struct EntropyComparator {
  double S_reduced = 0;   // S_i at fixed E minus the branch-independent part
  double comparator = 0;  // eta * (alpha_i A(gamma) + q_i B(gamma)), see below
};

// First-order fixed-energy entropy comparison of branch B_i (component i on
// the + root) at the gamma of that energy. Expanding the model to first order
// in eta and second in gamma and subtracting the part common to all branches
// leaves eta * (alpha_i A + q_i B) with A = 1 - 2 gamma - 2 gamma^2 and
// B = 12 gamma - 40 gamma^2: area wins as gamma -> 0, deformation buys back
// a slice proportional to gamma.
EntropyComparator high_energy_entropy(int i, double gamma, const HighEnergyPlan& plan);

// Chooses alpha_i (unit steps, shrunk while infeasible) and q_i (placed by
// root-finding on the exact branch entropies at fixed E) so the winner walks
// N, N-1, ..., 1 as gamma decreases, crossing at gamma_crossings strictly
// inside the window. The asymptotic comparator must locate every crossing
// within 8% or the plan is rejected. N = 1 yields an empty plan.
HighEnergyPlan plan_sequences(int N, double eta, double gamma_lo = 0.005, double gamma_hi = 0.04);

struct HighEnergyReport {
  std::vector<transition::TransitionReport> crossings;  // in increasing E order
  std::vector<int> winner_sequence;   // 1-based winners along the E grid, deduplicated
  std::vector<double> crossing_gamma; // branch-averaged gamma at each crossing
  bool partial = false;               // some planned crossing fell outside the E range
};

// Exact first-order-model entropy comparison of the branches B_i (component i
// on the + root) over [E_lo, E_hi]; returns the crossings with their beta
// jumps. The domain must be the plan's.
HighEnergyReport locate_high_energy_transitions(const branch::Domain& d,
                                                const HighEnergyPlan& plan, double E_lo,
                                                double E_hi, int grid_points = 257);

// Energy on branch B_i at a given gamma, and its inverse. plus_component is
// 1-based; all other components sit on their - roots.
branch::PointLD high_energy_branch_point(const branch::Domain& d, int plus_component,
                                         long double gamma);
long double gamma_at_energy(const branch::Domain& d, int plus_component, long double E);

}  // namespace vpl::deformed
