#pragma once

// Solution branches for unions of disjoint disks. A branch fixes, for every
// component i, which root of mu_i(1 - mu_i) = gamma a_i it follows; sweeping
// the component-1 parameter mu then traces a curve of states. All components
// share beta and the normalized Z, so each point is a genuine multi-component
// state with mass split M_i = mu_i / sum_h mu_h.

#include <string>
#include <vector>

#include "disk_core.hpp"

namespace vpl::branch {

inline constexpr double kAreaEqualTol = 1e-12;  // areas closer than this are "identical"

struct Component {
  double area = 1.0;
  double eta = 0.0;  // third-harmonic boundary deformation strength (0 = round)
};

struct Domain {
  std::vector<Component> components;
  double area_scale = 1.0;  // factor divided out if the loader normalized a_1 to 1
  bool reordered = false;   // true if construction had to sort the user's list

  int size() const { return static_cast<int>(components.size()); }
  double area(int i) const { return components[i].area; }  // 0-based
  double total_area() const;
  bool all_round() const;
  bool identical_areas() const;
};

// Sorts non-increasing by area, validates positivity; if normalize is set,
// divides all areas by a_1 and records the factor in area_scale.
Domain make_domain(std::vector<Component> comps, bool normalize = false);
Domain make_disk_domain(const std::vector<double>& areas, bool normalize = false);

struct Selector {
  enum class Kind { k_branch, merged };
  Kind kind = Kind::k_branch;
  std::vector<int> plus_set;  // k-branch: 1-based indices in {2..N} on the + root
  int merged_k = 0;           // merged: how many components sit on the 1-mu side

  static Selector zero_branch() { return {}; }
  static Selector k_branch(std::vector<int> plus);
  static Selector merged(int k);
  std::string label() const;  // "b0", "b+2+3", "m1", ... used as winner ids
  void validate(const Domain& d) const;
};

template <class T>
struct PointT {
  T mu = 0;      // component-1 parameter
  T gamma = 0;   // mu(1-mu)/a_1
  T beta = 0;
  T lambda = 0;  // -beta/Z
  T Z = 0;
  T E = 0;
  T S = 0;
  std::vector<T> mu_i;
  std::vector<T> M_i;
  std::vector<T> E_i;
  bool clamped = false;
};

using Point = PointT<double>;
using PointLD = PointT<long double>;

Point to_double(const PointLD& p);

// Roots of mu(1-mu) = gamma*area, (minus, plus). Throws fold_violation when
// gamma > 1/(4*area).
std::pair<long double, long double> mu_pm_ld(long double gamma, long double area);
std::pair<double, double> mu_pm(double gamma, double area);

// Shared state assembly from per-component parameters: mu[i] are the
// component parameters, e[i] the per-component scaled energies, z1 the
// component-1 normalization integral at mu[0].
PointLD assemble_point(const Domain& d, long double gamma, const std::vector<long double>& mu,
                       const std::vector<long double>& e, long double z1, bool clamped);

// Long-double evaluators; mu is clamped into [1e-9, 1-1e-9].
PointLD eval_point(const Domain& d, const Selector& sel, long double mu);
PointLD eval_from_gamma(const Domain& d, long double gamma, const std::vector<int>& signs);

// Public double-precision entry points.
Point branch_point(const Domain& d, const Selector& sel, double mu);
Point merged_branch_point(int N, int k, double mu);
Point from_gamma(const Domain& d, double gamma, const std::vector<int>& signs);

// ====== Sampled curves ======

struct DroppedPoint {
  double mu;
  int component;  // 1-based index that hit the fold, 0 if not component-specific
  std::string reason;
};

struct Curve {
  Domain domain;
  Selector selector;
  std::vector<Point> points;
  std::vector<DroppedPoint> dropped;

  PointLD evaluate(long double mu) const { return eval_point(domain, selector, mu); }
};

struct SampleOptions {
  int refine_levels = 12;  // bisection passes around sign changes of dE/dmu
};

// Evaluates the branch on the given strictly increasing mu grid, dropping
// fold-violating points with a report, and densifies around sign changes of
// dE/dmu so segmentation sees every fold.
Curve sample_branch(const Domain& d, const Selector& sel, const std::vector<double>& mu_grid,
                    const SampleOptions& opts = {});

// Grid helpers.
std::vector<double> uniform_grid(int n, double lo = 1e-6, double hi = 1.0 - 1e-6);
// uniform base grid plus a denser uniform cluster on [center-halfwidth, center+halfwidth]
std::vector<double> clustered_grid(int n_base, int n_cluster, double center, double halfwidth,
                                   double lo = 1e-6, double hi = 1.0 - 1e-6);

}  // namespace vpl::branch
