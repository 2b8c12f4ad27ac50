#include "branch_builder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vpl::branch {

double Domain::total_area() const {
  KahanSum<long double> s;
  for (const auto& c : components) s.add(c.area);
  return static_cast<double>(s.value());
}

bool Domain::all_round() const {
  for (const auto& c : components)
    if (c.eta != 0.0) return false;
  return true;
}

bool Domain::identical_areas() const {
  if (components.empty()) return false;
  double a1 = components.front().area;
  double an = components.back().area;  // sorted non-increasing
  return a1 - an <= kAreaEqualTol * a1;
}

Domain make_domain(std::vector<Component> comps, bool normalize) {
  if (comps.empty()) throw Error(ErrorKind::invalid_argument, "domain needs at least one component");
  for (const auto& c : comps) {
    if (!(c.area > 0)) throw Error(ErrorKind::invalid_argument, "component areas must be positive");
    if (!(c.eta >= 0)) throw Error(ErrorKind::invalid_argument, "component eta must be non-negative");
  }
  Domain d;
  d.reordered = !std::is_sorted(comps.begin(), comps.end(),
                                [](const Component& x, const Component& y) { return x.area > y.area; });
  std::stable_sort(comps.begin(), comps.end(),
                   [](const Component& x, const Component& y) { return x.area > y.area; });
  if (normalize) {
    d.area_scale = comps.front().area;
    for (auto& c : comps) c.area /= d.area_scale;
  }
  d.components = std::move(comps);
  return d;
}

Domain make_disk_domain(const std::vector<double>& areas, bool normalize) {
  std::vector<Component> comps;
  comps.reserve(areas.size());
  for (double a : areas) comps.push_back({a, 0.0});
  return make_domain(std::move(comps), normalize);
}

Selector Selector::k_branch(std::vector<int> plus) {
  Selector s;
  s.kind = Kind::k_branch;
  std::sort(plus.begin(), plus.end());
  s.plus_set = std::move(plus);
  return s;
}

Selector Selector::merged(int k) {
  Selector s;
  s.kind = Kind::merged;
  s.merged_k = k;
  return s;
}

std::string Selector::label() const {
  if (kind == Kind::merged) return "m" + std::to_string(merged_k);
  if (plus_set.empty()) return "b0";
  std::string out = "b";
  for (int i : plus_set) out += "+" + std::to_string(i);
  return out;
}

void Selector::validate(const Domain& d) const {
  int n = d.size();
  if (kind == Kind::merged) {
    if (!d.identical_areas())
      throw Error(ErrorKind::invalid_argument,
                  "merged branches require all component areas equal (within 1e-12)");
    if (merged_k < 0 || merged_k > n - 1)
      throw Error(ErrorKind::invalid_argument, "merged k must lie in [0, N-1]");
    return;
  }
  std::set<int> seen;
  for (int i : plus_set) {
    if (i < 2 || i > n)
      throw Error(ErrorKind::invalid_argument,
                  "plus-set indices must lie in {2..N} (component 1 carries the sweep)");
    if (!seen.insert(i).second)
      throw Error(ErrorKind::invalid_argument, "plus-set indices must be distinct");
  }
}

Point to_double(const PointLD& p) {
  Point q;
  q.mu = static_cast<double>(p.mu);
  q.gamma = static_cast<double>(p.gamma);
  q.beta = static_cast<double>(p.beta);
  q.lambda = static_cast<double>(p.lambda);
  q.Z = static_cast<double>(p.Z);
  q.E = static_cast<double>(p.E);
  q.S = static_cast<double>(p.S);
  q.mu_i.assign(p.mu_i.begin(), p.mu_i.end());
  q.M_i.assign(p.M_i.begin(), p.M_i.end());
  q.E_i.assign(p.E_i.begin(), p.E_i.end());
  q.clamped = p.clamped;
  return q;
}

std::pair<long double, long double> mu_pm_ld(long double gamma, long double area) {
  if (!(gamma > 0)) throw Error(ErrorKind::invalid_argument, "gamma must be positive");
  long double x = 4.0L * area * gamma;
  long double disc = 1.0L - x;
  if (disc < 0) {
    if (disc > -1e-14L) {
      disc = 0;  // fold grazed to rounding
    } else {
      throw Error(ErrorKind::fold_violation,
                  "gamma exceeds the fold value 1/(4*area) = " + std::to_string(0.25 / (double)area) +
                      " for area " + std::to_string((double)area));
    }
  }
  long double s = std::sqrt(disc);
  long double minus = x / (2.0L * (1.0L + s));  // stable form of (1-s)/2
  long double plus = (1.0L + s) / 2.0L;
  return {minus, plus};
}

std::pair<double, double> mu_pm(double gamma, double area) {
  auto [m, p] = mu_pm_ld(gamma, area);
  return {static_cast<double>(m), static_cast<double>(p)};
}

PointLD assemble_point(const Domain& d, long double gamma, const std::vector<long double>& mu,
                       const std::vector<long double>& e, long double z1, bool clamped) {
  const int n = d.size();
  PointLD p;
  p.clamped = clamped;
  p.mu = mu[0];
  p.gamma = gamma;
  KahanSum<long double> smu;
  for (int i = 0; i < n; ++i) smu.add(mu[i]);
  long double s = smu.value();
  p.beta = -8.0L * kPi * s;
  p.mu_i = mu;
  p.M_i.resize(n);
  p.E_i.resize(n);
  KahanSum<long double> esum;
  for (int i = 0; i < n; ++i) {
    p.M_i[i] = mu[i] / s;
    p.E_i[i] = mu[i] * mu[i] * e[i] / (s * s);
    esum.add(p.E_i[i]);
  }
  p.E = esum.value();
  p.Z = z1 * s / mu[0];
  p.lambda = -p.beta / p.Z;
  p.S = std::log(p.Z) + 2.0L * p.beta * p.E;
  return p;
}

namespace {

PointLD eval_k_branch(const Domain& d, const std::vector<int>& plus_set, long double mu) {
  bool clamped = false;
  mu = disk::clamp_mu(mu, &clamped);
  const int n = d.size();
  long double a1 = d.area(0);
  long double gamma = mu * (1.0L - mu) / a1;
  std::vector<long double> mus(n), es(n);
  mus[0] = mu;
  std::vector<bool> plus(n, false);
  for (int i : plus_set) plus[i - 1] = true;
  for (int i = 1; i < n; ++i) {
    auto [lo, hi] = mu_pm_ld(gamma, d.area(i));
    mus[i] = plus[i] ? hi : lo;
  }
  for (int i = 0; i < n; ++i) es[i] = disk::e_of_mu_unchecked(mus[i]);
  long double z1 = a1 / (1.0L - mu);
  return assemble_point(d, gamma, mus, es, z1, clamped);
}

PointLD eval_merged(const Domain& d, int k, long double mu) {
  bool clamped = false;
  mu = disk::clamp_mu(mu, &clamped);
  const int n = d.size();
  long double a = d.area(0);  // all areas identical
  long double gamma = mu * (1.0L - mu) / a;
  std::vector<long double> mus(n), es(n);
  // the k components on the opposite root are listed last
  for (int i = 0; i < n; ++i) mus[i] = (i < n - k) ? mu : (1.0L - mu);
  for (int i = 0; i < n; ++i) es[i] = disk::e_of_mu_unchecked(mus[i]);
  long double z1 = a / (1.0L - mu);
  return assemble_point(d, gamma, mus, es, z1, clamped);
}

}  // namespace

PointLD eval_point(const Domain& d, const Selector& sel, long double mu) {
  sel.validate(d);
  if (!d.all_round())
    throw Error(ErrorKind::invalid_argument,
                "domains with deformed components are handled by the deformed-disk routines");
  if (sel.kind == Selector::Kind::merged) return eval_merged(d, sel.merged_k, mu);
  return eval_k_branch(d, sel.plus_set, mu);
}

PointLD eval_from_gamma(const Domain& d, long double gamma, const std::vector<int>& signs) {
  if (!d.all_round())
    throw Error(ErrorKind::invalid_argument,
                "domains with deformed components are handled by the deformed-disk routines");
  if (static_cast<int>(signs.size()) != d.size())
    throw Error(ErrorKind::invalid_argument, "signs must list one entry per component");
  const int n = d.size();
  std::vector<long double> mus(n), es(n);
  for (int i = 0; i < n; ++i) {
    if (signs[i] != 1 && signs[i] != -1)
      throw Error(ErrorKind::invalid_argument, "signs entries must be +1 or -1");
    std::pair<long double, long double> pm;
    try {
      pm = mu_pm_ld(gamma, d.area(i));
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::fold_violation)
        throw Error(ErrorKind::fold_violation,
                    "component " + std::to_string(i + 1) + ": " + err.what());
      throw;
    }
    mus[i] = signs[i] > 0 ? pm.second : pm.first;
    es[i] = disk::e_of_mu_unchecked(mus[i]);
  }
  long double z1 = d.area(0) / (1.0L - mus[0]);
  return assemble_point(d, gamma, mus, es, z1, false);
}

Point branch_point(const Domain& d, const Selector& sel, double mu) {
  return to_double(eval_point(d, sel, mu));
}

Point merged_branch_point(int N, int k, double mu) {
  if (N < 1) throw Error(ErrorKind::invalid_argument, "N must be at least 1");
  Domain d = make_disk_domain(std::vector<double>(N, 1.0));
  return to_double(eval_point(d, Selector::merged(k), mu));
}

Point from_gamma(const Domain& d, double gamma, const std::vector<int>& signs) {
  return to_double(eval_from_gamma(d, gamma, signs));
}

Curve sample_branch(const Domain& d, const Selector& sel, const std::vector<double>& mu_grid,
                    const SampleOptions& opts) {
  if (mu_grid.size() < 2)
    throw Error(ErrorKind::invalid_argument, "mu grid needs at least two points");
  for (std::size_t i = 1; i < mu_grid.size(); ++i)
    if (!(mu_grid[i] > mu_grid[i - 1]))
      throw Error(ErrorKind::invalid_argument, "mu grid must be strictly increasing");

  Curve c;
  c.domain = d;
  c.selector = sel;
  sel.validate(d);

  struct Sample {
    double mu;
    Point p;
  };
  std::vector<Sample> samples;
  samples.reserve(mu_grid.size() + 64);
  auto try_eval = [&](double mu, std::vector<Sample>& out) {
    try {
      out.push_back({mu, to_double(eval_point(d, sel, mu))});
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::fold_violation) {
        c.dropped.push_back({mu, 0, err.what()});
      } else {
        throw;
      }
    }
  };
  for (double mu : mu_grid) try_eval(mu, samples);
  if (samples.size() < 2)
    throw Error(ErrorKind::invalid_argument, "branch has fewer than two valid samples");

  // Densify around sign changes of dE/dmu so folds in the energy are
  // resolved before segmentation.
  for (int level = 0; level < opts.refine_levels; ++level) {
    std::vector<double> inserts;
    for (std::size_t j = 1; j + 1 < samples.size(); ++j) {
      double d0 = samples[j].p.E - samples[j - 1].p.E;
      double d1 = samples[j + 1].p.E - samples[j].p.E;
      if (d0 == 0 || d1 == 0 || (d0 > 0) != (d1 > 0)) {
        inserts.push_back((samples[j - 1].mu + samples[j].mu) / 2);
        inserts.push_back((samples[j].mu + samples[j + 1].mu) / 2);
      }
    }
    if (inserts.empty()) break;
    std::vector<Sample> extra;
    for (double mu : inserts) try_eval(mu, extra);
    samples.insert(samples.end(), extra.begin(), extra.end());
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.mu < b.mu; });
    samples.erase(std::unique(samples.begin(), samples.end(),
                              [](const Sample& a, const Sample& b) { return a.mu == b.mu; }),
                  samples.end());
  }

  c.points.reserve(samples.size());
  for (auto& s : samples) c.points.push_back(std::move(s.p));
  return c;
}

std::vector<double> uniform_grid(int n, double lo, double hi) {
  if (n < 2) throw Error(ErrorKind::invalid_argument, "grid needs at least two points");
  if (!(lo > 0 && hi < 1 && lo < hi))
    throw Error(ErrorKind::invalid_argument, "grid bounds must satisfy 0 < lo < hi < 1");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

std::vector<double> clustered_grid(int n_base, int n_cluster, double center, double halfwidth,
                                   double lo, double hi) {
  std::vector<double> g = uniform_grid(n_base, lo, hi);
  double clo = std::max(lo, center - halfwidth);
  double chi = std::min(hi, center + halfwidth);
  for (int i = 0; i < n_cluster; ++i) g.push_back(clo + (chi - clo) * i / (n_cluster - 1));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

}  // namespace vpl::branch
