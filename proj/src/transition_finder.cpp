#include "transition_finder.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "disk_core.hpp"

namespace vpl::transition {

namespace {

int sign_of(long double x) { return (x > 0) - (x < 0); }

// Golden-section refinement of an E(mu) extremum inside [lo, hi].
CriticalPoint refine_extremum(const branch::Curve& curve, long double lo, long double hi,
                              bool maximize) {
  auto f = [&](long double mu) { return curve.evaluate(mu).E; };
  auto ext = golden_extremum<long double>(f, lo, hi, maximize, 1e-14L, 1e-16L);
  branch::PointLD p = curve.evaluate(ext.x);
  return CriticalPoint{ext.x, p.E, p.S, p.beta, maximize};
}

std::string segment_id(const branch::Selector& sel, std::size_t index) {
  return sel.label() + "/" + std::to_string(index);
}

}  // namespace

Segmentation segment_branch(const branch::Curve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 3) throw Error(ErrorKind::invalid_argument, "segment_branch: need at least 3 samples");

  // Slope signs between consecutive samples; a sign flip between nonzero
  // slopes brackets an extremum. Zero steps (a symmetric pair straddling an
  // extremum can produce one) are skipped, not fatal.
  std::vector<std::pair<std::size_t, int>> slopes;  // (interval index, sign)
  for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
    int s = sign_of(pts[j + 1].E - pts[j].E);
    if (s != 0) slopes.emplace_back(j, s);
  }
  if (slopes.empty())
    throw Error(ErrorKind::ambiguous, "segment_branch: energy is flat on the sample grid");

  Segmentation out;
  for (std::size_t k = 0; k + 1 < slopes.size(); ++k) {
    auto [j1, s1] = slopes[k];
    auto [j2, s2] = slopes[k + 1];
    if (s1 == s2) continue;
    CriticalPoint c = refine_extremum(curve, pts[j1].mu, pts[j2 + 1].mu, s1 > 0);
    if (!out.criticals.empty() && c.mu <= out.criticals.back().mu)
      throw Error(ErrorKind::ambiguous,
                  "segment_branch: energy extrema too close to separate; refine the mu grid");
    out.criticals.push_back(c);
  }

  // Cut at the refined extrema.
  std::vector<long double> bounds;
  bounds.push_back(pts.front().mu);
  for (const auto& c : out.criticals) bounds.push_back(c.mu);
  bounds.push_back(pts.back().mu);

  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    Segment seg;
    seg.domain = curve.domain;
    seg.selector = curve.selector;
    seg.mu_lo = bounds[k];
    seg.mu_hi = bounds[k + 1];
    seg.E_lo = curve.evaluate(seg.mu_lo).E;
    seg.E_hi = curve.evaluate(seg.mu_hi).E;
    seg.increasing = seg.E_hi > seg.E_lo;
    seg.id = segment_id(curve.selector, k);
    out.segments.push_back(std::move(seg));
  }

  if (out.segments.size() == 3 && out.criticals.size() == 2 && out.criticals[0].is_max &&
      !out.criticals[1].is_max) {
    out.has_dlr = true;
    out.segments[0].role = 'd';
    out.segments[1].role = 'l';
    out.segments[2].role = 'r';
  }
  return out;
}

long double invert_energy(const Segment& seg, long double E) {
  long double scale = std::max(std::fabs(seg.E_lo), std::fabs(seg.E_hi));
  long double tol = 1e-14L * scale;
  if (E < seg.E_min() - tol || E > seg.E_max() + tol)
    throw Error(ErrorKind::out_of_range, "invert_energy: energy outside the segment's range");
  if (std::fabs(E - seg.E_lo) <= tol) return seg.mu_lo;
  if (std::fabs(E - seg.E_hi) <= tol) return seg.mu_hi;

  auto f = [&](long double mu) { return seg.evaluate(mu).E - E; };
  long double mu = brent_root<long double>(f, seg.mu_lo, seg.mu_hi, seg.E_lo - E, seg.E_hi - E,
                                           1e-18L);
  if (std::fabs(seg.evaluate(mu).E - E) > 1e-11L * std::fabs(E))
    throw Error(ErrorKind::no_convergence, "invert_energy: residual above tolerance");
  return mu;
}

Envelope entropy_envelope(const branch::Domain& d, const std::vector<branch::Selector>& sels,
                          const std::vector<double>& E_grid, const EnvelopeOptions& opts) {
  if (sels.empty()) throw Error(ErrorKind::invalid_argument, "entropy_envelope: no branch selectors");
  if (E_grid.empty()) throw Error(ErrorKind::invalid_argument, "entropy_envelope: empty energy grid");
  std::vector<double> mu_grid = opts.mu_grid.empty() ? branch::uniform_grid(2000) : opts.mu_grid;

  Envelope env;
  for (const auto& sel : sels) {
    branch::Curve curve = branch::sample_branch(d, sel, mu_grid, opts.sampling);
    Segmentation parts = segment_branch(curve);
    for (auto& seg : parts.segments) env.segments.push_back(std::move(seg));
  }

  env.points.reserve(E_grid.size());
  for (double E : E_grid) {
    EnvelopePoint pt;
    pt.E = E;
    long double best_S = -std::numeric_limits<long double>::infinity();
    long double best_beta = 0, best_mu = 0;
    // First pass: the best entropy among segments covering E.
    struct Cand {
      long double S, beta, mu;
      const Segment* seg;
    };
    std::vector<Cand> cands;
    for (const auto& seg : env.segments) {
      if (!seg.contains_energy(E)) continue;
      long double mu = invert_energy(seg, E);
      branch::PointLD p = seg.evaluate(mu);
      cands.push_back({p.S, p.beta, mu, &seg});
      if (p.S > best_S) best_S = p.S;
    }
    if (cands.empty()) {
      pt.gap = true;
      env.points.push_back(std::move(pt));
      continue;
    }
    long double tie = opts.tie_tol * std::max<long double>(1, std::fabs(best_S));
    bool first = true;
    for (const auto& c : cands) {
      if (best_S - c.S > tie) continue;
      pt.winners.push_back(c.seg->id);
      if (first) {  // candidates are in deterministic segment order
        best_beta = c.beta;
        best_mu = c.mu;
        first = false;
      }
    }
    pt.S = static_cast<double>(best_S);
    pt.beta = static_cast<double>(best_beta);
    pt.mu = static_cast<double>(best_mu);
    env.points.push_back(std::move(pt));
  }
  return env;
}

namespace {

// Entropy at energy E on a segment, via inversion.
long double entropy_at(const Segment& seg, long double E) {
  return seg.evaluate(invert_energy(seg, E)).S;
}

// Root of S_a(E) - S_b(E) on [E_lo, E_hi]; requires a sign change.
bool cross_energy(const Segment& a, const Segment& b, long double E_lo, long double E_hi,
                  long double& E_star) {
  auto diff = [&](long double E) { return entropy_at(a, E) - entropy_at(b, E); };
  long double f_lo = diff(E_lo), f_hi = diff(E_hi);
  if (sign_of(f_lo) * sign_of(f_hi) >= 0) return false;
  E_star = brent_root<long double>(diff, E_lo, E_hi, f_lo, f_hi, 1e-16L);
  return true;
}

}  // namespace

TransitionReport locate_transition(const branch::Curve& curve) {
  TransitionReport rep;
  Segmentation parts = segment_branch(curve);
  if (!parts.has_dlr) {
    rep.reason = parts.criticals.empty()
                     ? "energy is monotone along the branch; no fold structure"
                     : "branch lacks the increasing/decreasing/increasing structure";
    return rep;
  }
  const Segment& d_seg = parts.segments[0];
  const Segment& l_seg = parts.segments[1];
  const Segment& r_seg = parts.segments[2];
  const CriticalPoint& top = parts.criticals[0];     // local max of E
  const CriticalPoint& bottom = parts.criticals[1];  // local min of E

  rep.Ec_bar = static_cast<double>(top.E);
  rep.Sc_bar = static_cast<double>(top.S);
  rep.E0 = static_cast<double>(bottom.E);
  rep.S0 = static_cast<double>(bottom.S);

  // Both d and r cover (E0, Ec_bar); inset the bracket to keep inversions
  // off the exact fold points.
  long double span = top.E - bottom.E;
  if (span <= 0) {
    rep.reason = "degenerate fold: local max energy does not exceed local min";
    return rep;
  }
  long double inset = 1e-9L * span;
  long double E_lo = bottom.E + inset, E_hi = top.E - inset;
  if (d_seg.E_min() > E_lo) E_lo = d_seg.E_min() + inset;

  long double E_star;
  if (!cross_energy(d_seg, r_seg, E_lo, E_hi, E_star)) {
    rep.reason = "entropy branches do not cross inside the fold bracket";
    return rep;
  }

  long double mu_d = invert_energy(d_seg, E_star);
  long double mu_r = invert_energy(r_seg, E_star);
  branch::PointLD pd = d_seg.evaluate(mu_d);
  branch::PointLD pr = r_seg.evaluate(mu_r);

  rep.found = true;
  rep.E_star = static_cast<double>(E_star);
  rep.S_star = static_cast<double>((pd.S + pr.S) / 2);
  rep.beta_minus = static_cast<double>(pd.beta);
  rep.beta_plus = static_cast<double>(pr.beta);
  rep.left_id = d_seg.id;
  rep.right_id = r_seg.id;
  rep.mu_left = static_cast<double>(mu_d);
  rep.mu_right = static_cast<double>(mu_r);
  rep.self_intersection_E = rep.E_star;

  // Gap scale: the separation between the two nearest entropy sheets (d and
  // the middle sheet l, which almost coincide) relative to the entropy span
  // between the two cusps. This is the resolution the root-finder has to
  // beat, and it is tiny: ~1e-3 of an already small span near degeneracy.
  const int n_scan = 400;
  long double max_gap = 0;
  bool l_ok = true;
  for (int i = 0; i <= n_scan; ++i) {
    long double E = E_lo + (E_hi - E_lo) * i / n_scan;
    long double sd = entropy_at(d_seg, E);
    long double sr = entropy_at(r_seg, E);
    if (l_seg.contains_energy(E)) {
      long double sl = entropy_at(l_seg, E);
      max_gap = std::max(max_gap, std::fabs(sd - sl));
      // The sheets meet at the cusps, so near the bracket ends the ordering
      // is decided by rounding noise; demand a violation above that noise.
      long double tol = 1e-15L * (1.0L + std::fabs(sd) + std::fabs(sr));
      if (sl > std::min(sd, sr) + tol) l_ok = false;
    }
  }
  long double denom = std::fabs(static_cast<long double>(rep.Sc_bar) - rep.S0);
  rep.entropy_gap_scale = denom > 0 ? static_cast<double>(max_gap / denom) : 0;
  rep.middle_branch_below = l_ok;

  // Convexity change of S(E) on the d sheet: sign change of d(beta)/dE.
  // Scan only the part of d inside the fold bracket; the convex stretch
  // hugs the upper cusp and a whole-sheet grid would step right over it.
  {
    const int m = 256;
    long double mu_lo_scan = invert_energy(d_seg, E_lo);
    long double prev_beta = 0, prev_E = 0, prev_slope = 0;
    bool have_prev = false, have_slope = false;
    for (int i = 0; i <= m; ++i) {
      long double mu = mu_lo_scan + (d_seg.mu_hi - mu_lo_scan) * i / m;
      branch::PointLD p = d_seg.evaluate(mu);
      if (have_prev) {
        long double slope = (p.beta - prev_beta) / (p.E - prev_E);
        if (have_slope && sign_of(slope) != sign_of(prev_slope) && sign_of(prev_slope) != 0) {
          rep.d_inflection_E = static_cast<double>((p.E + prev_E) / 2);
          break;
        }
        prev_slope = slope;
        have_slope = true;
      }
      prev_beta = p.beta;
      prev_E = p.E;
      have_prev = true;
    }
    rep.crossing_before_inflection = rep.d_inflection_E > 0 && rep.E_star < rep.d_inflection_E;
  }
  return rep;
}

std::vector<TransitionReport> locate_transitions(const Envelope& env) {
  std::vector<TransitionReport> out;
  auto find_segment = [&](const std::string& id) -> const Segment* {
    for (const auto& seg : env.segments)
      if (seg.id == id) return &seg;
    return nullptr;
  };
  for (std::size_t i = 0; i + 1 < env.points.size(); ++i) {
    const EnvelopePoint& a = env.points[i];
    const EnvelopePoint& b = env.points[i + 1];
    if (a.gap || b.gap || a.winners.empty() || b.winners.empty()) continue;
    if (a.winners.front() == b.winners.front()) continue;
    // Shared winners (a tie straddling the grid point) are not a crossing.
    bool shared = false;
    for (const auto& w : b.winners)
      if (w == a.winners.front()) shared = true;
    if (shared) continue;
    const Segment* sa = find_segment(a.winners.front());
    const Segment* sb = find_segment(b.winners.front());
    if (!sa || !sb) continue;
    long double lo = std::max<long double>(std::max(sa->E_min(), sb->E_min()), a.E);
    long double hi = std::min<long double>(std::min(sa->E_max(), sb->E_max()), b.E);
    if (hi <= lo) continue;
    TransitionReport rep;
    long double E_star;
    if (!cross_energy(*sa, *sb, lo, hi, E_star)) continue;
    long double mu_a = invert_energy(*sa, E_star);
    long double mu_b = invert_energy(*sb, E_star);
    branch::PointLD pa = sa->evaluate(mu_a);
    branch::PointLD pb = sb->evaluate(mu_b);
    rep.found = true;
    rep.E_star = static_cast<double>(E_star);
    rep.S_star = static_cast<double>((pa.S + pb.S) / 2);
    rep.beta_minus = static_cast<double>(pa.beta);
    rep.beta_plus = static_cast<double>(pb.beta);
    rep.left_id = sa->id;
    rep.right_id = sb->id;
    rep.mu_left = static_cast<double>(mu_a);
    rep.mu_right = static_cast<double>(mu_b);
    rep.self_intersection_E = rep.E_star;
    out.push_back(std::move(rep));
  }
  return out;
}

Classification classify_kind(const branch::Domain& d, const std::vector<double>& mu_grid) {
  branch::Selector sel =
      d.identical_areas() && d.size() > 1 ? branch::Selector::merged(0) : branch::Selector::zero_branch();
  std::vector<double> grid = mu_grid.empty() ? branch::uniform_grid(4000) : mu_grid;
  branch::Curve curve = branch::sample_branch(d, sel, grid);
  if (curve.points.size() < 3)
    throw Error(ErrorKind::no_convergence, "classify_kind: too few valid branch samples");

  std::size_t jmin = 0;
  for (std::size_t j = 1; j < curve.points.size(); ++j)
    if (curve.points[j].beta < curve.points[jmin].beta) jmin = j;

  long double mu_best = curve.points[jmin].mu;
  long double beta_best = curve.points[jmin].beta;
  if (jmin > 0 && jmin + 1 < curve.points.size()) {
    auto f = [&](long double mu) { return curve.evaluate(mu).beta; };
    auto ext = golden_extremum<long double>(f, curve.points[jmin - 1].mu,
                                            curve.points[jmin + 1].mu, false, 1e-15L, 1e-16L);
    if (ext.fx < beta_best) {
      mu_best = ext.x;
      beta_best = ext.fx;
    }
  }

  Classification cls;
  cls.beta_min = static_cast<double>(beta_best);
  cls.mu_at_min = static_cast<double>(mu_best);
  cls.second_kind = beta_best < -8.0L * kPi * (1.0L + 1e-9L);
  return cls;
}

}  // namespace vpl::transition
