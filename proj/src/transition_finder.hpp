#pragma once

// Entropy maximization across branches as a function of energy: cutting
// sampled branches into E-monotone segments, inverting E on a segment,
// assembling the max-entropy envelope, and locating the energy where the
// winning segment changes (a first-order transition: the slope dS/dE = beta
// jumps upward across it).

#include <string>
#include <vector>

#include "branch_builder.hpp"

namespace vpl::transition {

struct Segment {
  branch::Domain domain;
  branch::Selector selector;
  long double mu_lo = 0, mu_hi = 0;  // parameter range, mu_lo < mu_hi
  long double E_lo = 0, E_hi = 0;    // energies at the respective ends
  bool increasing = true;            // E increasing in mu
  char role = ' ';                   // 'd','l','r' when that structure exists
  std::string id;                    // e.g. "b0/0"

  long double E_min() const { return increasing ? E_lo : E_hi; }
  long double E_max() const { return increasing ? E_hi : E_lo; }
  bool contains_energy(long double E) const {
    long double tol = 1e-14L * (std::fabs(E_min()) + std::fabs(E_max()));
    return E >= E_min() - tol && E <= E_max() + tol;
  }
  branch::PointLD evaluate(long double mu) const {
    return branch::eval_point(domain, selector, mu);
  }
};

struct CriticalPoint {
  long double mu = 0;
  long double E = 0;
  long double S = 0;
  long double beta = 0;
  bool is_max = false;
};

struct Segmentation {
  std::vector<Segment> segments;
  std::vector<CriticalPoint> criticals;
  bool has_dlr = false;  // exactly (increasing, decreasing, increasing)
};

// Splits a sampled curve at the critical points of E(mu). Critical points are
// refined to |dE| < 1e-12 |E|. Sign changes too close to separate raise an
// "ambiguous" error suggesting a finer grid.
Segmentation segment_branch(const branch::Curve& curve);

// Solves E(mu) = E on a monotone segment. Throws out_of_range if E is not
// covered, no_convergence if the residual cannot be pushed below 1e-11 |E|.
long double invert_energy(const Segment& seg, long double E);

struct EnvelopePoint {
  double E = 0;
  double S = 0;
  double beta = 0;
  double mu = 0;
  std::vector<std::string> winners;  // segment ids within tie tolerance
  bool gap = false;                  // no candidate segment covers this E
};

struct Envelope {
  std::vector<EnvelopePoint> points;
  std::vector<Segment> segments;  // all candidate segments, in selector order
};

struct EnvelopeOptions {
  std::vector<double> mu_grid;     // empty = uniform_grid(2000)
  double tie_tol = 1e-12;          // relative entropy tie tolerance
  branch::SampleOptions sampling;
};

// Max-entropy envelope over the given branch selectors on an energy grid.
Envelope entropy_envelope(const branch::Domain& d, const std::vector<branch::Selector>& sels,
                          const std::vector<double>& E_grid, const EnvelopeOptions& opts = {});

struct TransitionReport {
  bool found = false;
  std::string reason;  // set when !found
  double E_star = 0;
  double S_star = 0;
  double beta_minus = 0;  // slope just below E*
  double beta_plus = 0;   // slope just above E*
  std::string left_id, right_id;
  double mu_left = 0, mu_right = 0;
  // d/l/r bracket data (zero when located from an envelope winner change)
  double E0 = 0, Ec_bar = 0;   // local min / local max energies
  double S0 = 0, Sc_bar = 0;   // entropies at those points
  // Largest d-to-l entropy sheet separation across the bracket, relative to
  // the cusp-to-cusp span |Sc_bar - S0|; measures how delicate the crossing
  // search is (~1e-3 near area degeneracy).
  double entropy_gap_scale = 0;
  bool middle_branch_below = false;  // S_l < min(S_d, S_r) held on the bracket
  // diagnostics
  double self_intersection_E = 0;  // (E,S) self-crossing energy (equals E_star)
  double d_inflection_E = 0;       // where the d-side S(E) changes convexity, 0 if none
  bool crossing_before_inflection = false;
};

// Transition on a single branch with the d/l/r fold structure: unique root of
// S_d(E) - S_r(E) between the local-min and local-max energies. A missing
// sign change yields found=false, not an exception.
TransitionReport locate_transition(const branch::Curve& curve);

// Transitions read off an envelope: one report per winner change between
// adjacent grid points whose segments' entropies cross.
std::vector<TransitionReport> locate_transitions(const Envelope& env);

struct Classification {
  bool second_kind = false;
  double beta_min = 0;
  double mu_at_min = 0;
};

// First vs second kind: second iff min beta over the 0-branch (or 0-merged
// branch for identical areas) drops below -8*pi.
Classification classify_kind(const branch::Domain& d, const std::vector<double>& mu_grid = {});

}  // namespace vpl::transition
