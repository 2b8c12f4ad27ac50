#include "deformed_disk.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "common.hpp"
#include "disk_core.hpp"

namespace vpl::deformed {

long double tau(long double mu) {
  long double d = 1.0L - 2.0L * mu / 3.0L;
  return 2.0L / (d * d);
}

long double zeta(long double mu) {
  long double d = 1.0L - 2.0L * mu / 3.0L;
  return 6.0L * (1.0L - 2.0L * mu + 2.0L * mu * mu / 3.0L) / (d * d);
}

namespace {

void check_eta(long double eta, bool allow_large_eta) {
  if (!(eta >= 0))
    throw Error(ErrorKind::invalid_argument, "deformed component: eta must be non-negative");
  if (eta > kEtaMax && !allow_large_eta)
    throw Error(ErrorKind::out_of_range,
                "deformed component: eta exceeds the first-order trust region (0.05)");
}

}  // namespace

long double perturbed_e(long double mu, long double eta, bool allow_large_eta) {
  check_eta(eta, allow_large_eta);
  return disk::e_of_mu_unchecked(mu) - eta * tau(mu) / (8.0L * kPi);
}

long double perturbed_z(long double mu, long double eta, long double area, bool allow_large_eta) {
  check_eta(eta, allow_large_eta);
  if (!(area > 0)) throw Error(ErrorKind::invalid_argument, "perturbed_z: area must be positive");
  return area * (1.0L + eta * zeta(mu)) / (1.0L - mu);
}

HighEnergyMu high_energy_mu(long double gamma, long double area, long double eta, int sign) {
  if (!(gamma > 0)) throw Error(ErrorKind::invalid_argument, "high_energy_mu: gamma must be positive");
  if (!(area > 0)) throw Error(ErrorKind::invalid_argument, "high_energy_mu: area must be positive");
  if (sign != -1 && sign != 1)
    throw Error(ErrorKind::invalid_argument, "high_energy_mu: sign must be -1 or +1");
  check_eta(eta, false);

  HighEnergyMu out;
  out.mu_asymptotic = sign < 0 ? gamma * area * (1.0L + eta) : 1.0L - gamma * area * (1.0L - 3.0L * eta);

  if (eta == 0) {
    auto [lo, hi] = branch::mu_pm_ld(gamma, area);
    out.mu = sign < 0 ? lo : hi;
    return out;
  }

  auto f = [&](long double mu) { return mu * (1.0L - mu) - gamma * area * (1.0L + eta * zeta(mu)); };
  long double f_half = f(0.5L);
  if (f_half <= 0)
    throw Error(ErrorKind::fold_violation,
                "high_energy_mu: gamma beyond the deformed fold, no root on the requested side");
  if (sign < 0) {
    long double f0 = -gamma * area * (1.0L + 6.0L * eta);
    out.mu = brent_root<long double>(f, 0.0L, 0.5L, f0, f_half, 1e-19L);
  } else {
    long double f1 = -gamma * area * (1.0L - 18.0L * eta);
    if (f1 >= 0)
      throw Error(ErrorKind::fold_violation, "high_energy_mu: eta too large for a root near 1");
    out.mu = brent_root<long double>(f, 0.5L, 1.0L, f_half, f1, 1e-19L);
  }
  return out;
}

branch::PointLD deformed_from_gamma(const branch::Domain& d, long double gamma,
                                    const std::vector<int>& signs) {
  if (static_cast<int>(signs.size()) != d.size())
    throw Error(ErrorKind::invalid_argument, "deformed_from_gamma: one sign per component required");
  std::vector<long double> mu(d.size()), e(d.size());
  for (int i = 0; i < d.size(); ++i) {
    long double eta = d.components[i].eta;
    try {
      mu[i] = high_energy_mu(gamma, d.area(i), eta, signs[i]).mu;
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::fold_violation) {
        std::ostringstream msg;
        msg << "deformed_from_gamma: component " << (i + 1) << ": " << err.what();
        throw Error(ErrorKind::fold_violation, msg.str());
      }
      throw;
    }
    e[i] = perturbed_e(mu[i], eta);
  }
  long double z1 = perturbed_z(mu[0], d.components[0].eta, d.area(0));
  return branch::assemble_point(d, gamma, mu, e, z1, false);
}

branch::Domain HighEnergyPlan::domain() const {
  std::vector<branch::Component> comps;
  comps.reserve(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i)
    comps.push_back({1.0 + alpha[i] * eta, q[i] * eta});
  return branch::make_domain(comps);
}

EntropyComparator high_energy_entropy(int i, double gamma, const HighEnergyPlan& plan) {
  if (plan.N < 1 || plan.alpha.size() != static_cast<std::size_t>(plan.N) ||
      plan.q.size() != static_cast<std::size_t>(plan.N))
    throw Error(ErrorKind::invalid_argument, "high_energy_entropy: malformed plan");
  if (i < 1 || i > plan.N)
    throw Error(ErrorKind::invalid_argument, "high_energy_entropy: component index out of range");
  if (!(gamma > 0))
    throw Error(ErrorKind::invalid_argument, "high_energy_entropy: gamma must be positive");

  long double eta = plan.eta, g = gamma, lg = std::log(g);
  // Branch-independent level: entropy of the all-round, equal-area domain at
  // the energy the branches share at this gamma.
  long double shared = 2.0L + lg - 2.0L * g - g * (plan.N - 2) * (1.0L + 2.0L * lg);

  EntropyComparator out;
  out.comparator = static_cast<double>(
      eta * (plan.alpha[i - 1] * (1.0L - 2.0L * g - 2.0L * g * g) +
             plan.q[i - 1] * (12.0L * g - 40.0L * g * g)));
  out.S_reduced = static_cast<double>(shared + out.comparator);
  return out;
}

namespace {

// Comparator winner at a given gamma; ties resolve to the smallest index.
int comparator_winner(const HighEnergyPlan& plan, double gamma) {
  int best = 1;
  double best_val = high_energy_entropy(1, gamma, plan).comparator;
  for (int i = 2; i <= plan.N; ++i) {
    double v = high_energy_entropy(i, gamma, plan).comparator;
    if (v > best_val) {
      best = i;
      best_val = v;
    }
  }
  return best;
}

// Entropy advantage of branch B_b over B_a at the energy B_a reaches at
// gamma; placement drives this to zero.
long double branch_gap_at(const branch::Domain& d, int a, int b, long double gamma) {
  branch::PointLD pa = high_energy_branch_point(d, a, gamma);
  long double gb = gamma_at_energy(d, b, pa.E);
  return high_energy_branch_point(d, b, gb).S - pa.S;
}

// Places q[i] (0-based, component i+1) so branches B_i and B_{i+1} (1-based)
// carry equal entropy at the energy reached at gamma = target. Deformation
// buys entropy at first order but loses it at second, so the purchasable
// advantage saturates; a bracket that never turns positive reports failure.
bool place_q(HighEnergyPlan& plan, int i, double target, long double q_cap, std::string& why) {
  try {
    auto gap = [&](long double x) {
      plan.q[i] = static_cast<double>(x);
      return branch_gap_at(plan.domain(), i, i + 1, target);
    };
    long double lo = plan.q[i - 1];
    if (!(gap(lo) < 0)) {
      why = "pair fails to separate at equal deformation";
      return false;
    }
    // Expand gently: overshooting the saturation apex would miss the root.
    long double hi = std::min(q_cap, lo + 0.05L);
    while (gap(hi) < 0) {
      if (hi >= q_cap) {
        why = "needed deformation exceeds the trust region; widen the window or lower eta";
        return false;
      }
      hi = std::min(q_cap, 1.6L * hi + 0.01L);
    }
    while (hi - lo > 1e-12L * (1.0L + hi)) {
      long double mid = 0.5L * (lo + hi);
      (gap(mid) < 0 ? lo : hi) = mid;
    }
    plan.q[i] = static_cast<double>(0.5L * (lo + hi));
    return true;
  } catch (const Error& e) {
    why = e.what();
    return false;
  }
}

// First-order prediction of the pair (i, i+1) crossing: root of
// d_alpha A(g) = d_q B(g) scanned within a factor 2 of target; negative
// when no sign change shows up there.
double comparator_crossing(const HighEnergyPlan& plan, int i, double target) {
  long double da = plan.alpha[i - 1] - plan.alpha[i];
  long double dq = plan.q[i] - plan.q[i - 1];
  auto h = [&](long double g) {
    return da * (1.0L - 2.0L * g - 2.0L * g * g) - dq * (12.0L * g - 40.0L * g * g);
  };
  long double prev_g = target / 2, prev_h = h(prev_g);
  for (int k = 1; k <= 64; ++k) {
    long double g = target / 2 * std::exp(std::log(4.0L) * k / 64);
    long double hg = h(g);
    if ((prev_h < 0) != (hg < 0))
      return static_cast<double>(brent_root<long double>(h, prev_g, g, prev_h, hg, 1e-15L));
    prev_g = g;
    prev_h = hg;
  }
  return -1.0;
}

// Attempts a full ladder at a fixed area step; false when the step is
// infeasible (why records the blocking constraint).
bool try_ladder(HighEnergyPlan& plan, const std::vector<double>& targets, double step,
                double gamma_lo, double gamma_hi, std::string& why) {
  const int N = plan.N;
  plan.alpha.resize(N);
  plan.q.assign(N, 0.0);
  for (int i = 0; i < N; ++i) plan.alpha[i] = -step * i;
  if (1.0 + plan.alpha[N - 1] * plan.eta <= 0) {
    why = "eta too large, non-positive area";
    return false;
  }
  const long double q_cap = kEtaMax / static_cast<long double>(plan.eta);

  // Two placement passes; the second absorbs the shift each q makes in the
  // other branches through the shared light components.
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 1; i < N; ++i)
      if (!place_q(plan, i, targets[N - 1 - i], q_cap, why)) return false;

  for (int i = 1; i < N; ++i)
    if (!(plan.q[i] > plan.q[i - 1])) {
      why = "deformations failed to order";
      return false;
    }

  // The asymptotic comparator must still locate every crossing; second-order
  // eta effects grow with q, so a miss sends us to a smaller area step.
  for (int i = 1; i < N; ++i) {
    double tgt = targets[N - 1 - i];
    double gfo = comparator_crossing(plan, i, tgt);
    if (!(std::fabs(gfo - tgt) <= 0.08 * tgt)) {
      why = "asymptotic comparator misses a crossing";
      return false;
    }
  }

  // The comparator's own winner walk over the window must also be
  // N, N-1, ..., 1 (no non-adjacent pair preempts a predicted crossing).
  {
    std::vector<int> seq;
    const int sweep = 1024;
    for (int k = 0; k <= sweep; ++k) {
      double g =
          std::exp(std::log(gamma_hi) - (std::log(gamma_hi) - std::log(gamma_lo)) * k / sweep);
      int w = comparator_winner(plan, g);
      if (seq.empty() || seq.back() != w) seq.push_back(w);
    }
    bool ok = seq.size() == static_cast<std::size_t>(N);
    for (int i = 0; ok && i < N; ++i) ok = seq[i] == N - i;
    if (!ok) {
      why = "comparator sweep did not visit N..1 in order";
      return false;
    }
  }

  // Exact winner sweep over energy: the walk must be N, N-1, ..., 1 with no
  // non-adjacent pair preempting a crossing.
  try {
    branch::Domain d = plan.domain();
    long double E_bot = high_energy_branch_point(d, 1, static_cast<long double>(gamma_hi)).E;
    long double E_top = high_energy_branch_point(d, 1, static_cast<long double>(gamma_lo)).E;
    std::vector<int> seq;
    const int sweep = 160;
    for (int k = 0; k <= sweep; ++k) {
      long double E = std::exp(std::log(E_bot) + (std::log(E_top) - std::log(E_bot)) * k / sweep);
      int w = 0;
      long double best = 0;
      for (int i = 1; i <= N; ++i) {
        long double Si = high_energy_branch_point(d, i, gamma_at_energy(d, i, E)).S;
        if (w == 0 || Si > best) {
          best = Si;
          w = i;
        }
      }
      if (seq.empty() || seq.back() != w) seq.push_back(w);
    }
    bool ok = seq.size() == static_cast<std::size_t>(N);
    for (int i = 0; ok && i < N; ++i) ok = seq[i] == N - i;
    if (!ok) {
      why = "winner sweep did not visit N..1 in order";
      return false;
    }
  } catch (const Error& e) {
    why = e.what();
    return false;
  }
  return true;
}

}  // namespace

HighEnergyPlan plan_sequences(int N, double eta, double gamma_lo, double gamma_hi) {
  if (N < 1) throw Error(ErrorKind::invalid_argument, "plan_sequences: N must be at least 1");
  if (!(gamma_lo > 0 && gamma_hi > gamma_lo))
    throw Error(ErrorKind::invalid_argument, "plan_sequences: need 0 < gamma_lo < gamma_hi");

  HighEnergyPlan plan;
  plan.N = N;
  plan.eta = eta;
  if (N == 1) return plan;  // a single component cannot produce a crossing

  if (!(eta > 0))
    throw Error(ErrorKind::invalid_argument, "plan_sequences: eta must be positive for N >= 2");

  // Crossing targets, encounter order (largest gamma first), strictly inside
  // the window. The classic two-component demonstration puts its single
  // crossing at 1/50; keep that landmark when it lands in the window.
  std::vector<double> targets(N - 1);
  if (N == 2 && gamma_lo < 0.02 && 0.02 < gamma_hi) {
    targets[0] = 0.02;
  } else {
    for (int j = 1; j < N; ++j) {
      double t = static_cast<double>(j) / N;
      targets[j - 1] = std::exp((1.0 - t) * std::log(gamma_hi) + t * std::log(gamma_lo));
    }
  }

  // Area steps shrink until the deformation ladder is realizable: smaller
  // steps need less q, which tames the second-order eta effects that both
  // saturate the placement and pull the exact crossings off the asymptotic
  // prediction.
  std::string why = "window infeasible";
  for (double step = 1.0; step >= 1.0 / 4096.0; step *= 0.5) {
    if (!try_ladder(plan, targets, step, gamma_lo, gamma_hi, why)) continue;

    plan.gamma_crossings.assign(targets.begin(), targets.end());
    plan.E_crossings.resize(N - 1);
    plan.winner_from.resize(N - 1);
    plan.winner_to.resize(N - 1);
    branch::Domain d = plan.domain();
    for (int j = 0; j < N - 1; ++j) {
      int i = N - 1 - j;  // pair (i, i+1), 1-based
      plan.E_crossings[j] = static_cast<double>(
          high_energy_branch_point(d, i, static_cast<long double>(targets[j])).E);
      plan.winner_from[j] = i + 1;
      plan.winner_to[j] = i;
    }
    return plan;
  }
  throw Error(ErrorKind::invalid_argument, "plan_sequences: " + why);
}

branch::PointLD high_energy_branch_point(const branch::Domain& d, int plus_component,
                                         long double gamma) {
  if (plus_component < 1 || plus_component > static_cast<int>(d.size()))
    throw Error(ErrorKind::invalid_argument, "high_energy_branch_point: component out of range");
  std::vector<int> signs(d.size(), -1);
  signs[plus_component - 1] = +1;
  return deformed_from_gamma(d, gamma, signs);
}

namespace {

// Upper end of the admissible gamma range for a domain: stay clearly below
// every component's deformed fold.
long double gamma_ceiling(const branch::Domain& d) {
  long double g = std::numeric_limits<long double>::max();
  for (int i = 0; i < d.size(); ++i) {
    long double denom = 4.0L * d.area(i) * (1.0L + d.components[i].eta * zeta(0.5L));
    g = std::min(g, 0.9L / denom);
  }
  return g;
}

}  // namespace

long double gamma_at_energy(const branch::Domain& d, int plus_component, long double E) {
  const long double g_lo = 1e-12L;
  const long double g_hi = gamma_ceiling(d);
  auto energy_at = [&](long double g) { return high_energy_branch_point(d, plus_component, g).E; };
  long double f_lo = energy_at(g_lo) - E;
  long double f_hi = energy_at(g_hi) - E;
  if (f_lo < 0 || f_hi > 0)
    throw Error(ErrorKind::out_of_range,
                "gamma_at_energy: energy outside the branch's reachable range");
  auto f = [&](long double g) { return energy_at(g) - E; };
  long double g = brent_root<long double>(f, g_lo, g_hi, f_lo, f_hi, 1e-18L);
  if (std::fabs(energy_at(g) - E) > 1e-11L * std::fabs(E))
    throw Error(ErrorKind::no_convergence, "gamma_at_energy: residual above tolerance");
  return g;
}

HighEnergyReport locate_high_energy_transitions(const branch::Domain& d,
                                                const HighEnergyPlan& plan, double E_lo,
                                                double E_hi, int grid_points) {
  if (plan.N != static_cast<int>(d.size()))
    throw Error(ErrorKind::invalid_argument, "locate_high_energy_transitions: plan/domain size mismatch");
  for (int i = 0; i < d.size(); ++i) {
    double a_expect = 1.0 + plan.alpha[i] * plan.eta;
    double eta_expect = plan.q[i] * plan.eta;
    if (std::fabs(d.area(i) - a_expect) > 1e-12 ||
        std::fabs(d.components[i].eta - eta_expect) > 1e-12)
      throw Error(ErrorKind::invalid_argument,
                  "locate_high_energy_transitions: domain does not match the plan");
  }
  if (!(E_lo > 0 && E_hi > E_lo))
    throw Error(ErrorKind::invalid_argument, "locate_high_energy_transitions: need 0 < E_lo < E_hi");
  if (grid_points < 3)
    throw Error(ErrorKind::invalid_argument, "locate_high_energy_transitions: need at least 3 grid points");

  const int N = plan.N;
  HighEnergyReport rep;

  struct Eval {
    long double S, beta, gamma;
    bool ok;
  };
  auto eval_branch = [&](int i, long double E) -> Eval {
    try {
      long double g = gamma_at_energy(d, i, E);
      branch::PointLD p = high_energy_branch_point(d, i, g);
      return {p.S, p.beta, g, true};
    } catch (const Error&) {
      return {0, 0, 0, false};
    }
  };

  std::vector<long double> E_grid(grid_points);
  for (int k = 0; k < grid_points; ++k)
    E_grid[k] = E_lo + (static_cast<long double>(E_hi) - E_lo) * k / (grid_points - 1);

  std::vector<int> winner(grid_points, 0);
  for (int k = 0; k < grid_points; ++k) {
    long double best_S = -std::numeric_limits<long double>::infinity();
    for (int i = 1; i <= N; ++i) {
      Eval ev = eval_branch(i, E_grid[k]);
      if (ev.ok && ev.S > best_S) {
        best_S = ev.S;
        winner[k] = i;
      }
    }
    if (winner[k] == 0) {
      rep.partial = true;
      continue;
    }
    if (rep.winner_sequence.empty() || rep.winner_sequence.back() != winner[k])
      rep.winner_sequence.push_back(winner[k]);
  }

  for (int k = 0; k + 1 < grid_points; ++k) {
    int wa = winner[k], wb = winner[k + 1];
    if (wa == 0 || wb == 0 || wa == wb) continue;
    auto diff = [&](long double E) {
      Eval ea = eval_branch(wa, E);
      Eval eb = eval_branch(wb, E);
      if (!ea.ok || !eb.ok)
        throw Error(ErrorKind::out_of_range, "crossing refinement left the branch range");
      return ea.S - eb.S;
    };
    long double fa = diff(E_grid[k]), fb = diff(E_grid[k + 1]);
    if ((fa > 0) == (fb > 0)) {
      rep.partial = true;
      continue;
    }
    long double E_star = brent_root<long double>(diff, E_grid[k], E_grid[k + 1], fa, fb, 1e-16L);
    Eval ea = eval_branch(wa, E_star), eb = eval_branch(wb, E_star);
    transition::TransitionReport tr;
    tr.found = true;
    tr.E_star = static_cast<double>(E_star);
    tr.S_star = static_cast<double>((ea.S + eb.S) / 2);
    tr.beta_minus = static_cast<double>(ea.beta);
    tr.beta_plus = static_cast<double>(eb.beta);
    tr.left_id = "B" + std::to_string(wa);
    tr.right_id = "B" + std::to_string(wb);
    tr.self_intersection_E = tr.E_star;
    rep.crossings.push_back(std::move(tr));
    rep.crossing_gamma.push_back(static_cast<double>((ea.gamma + eb.gamma) / 2));
  }

  // A planned crossing whose energy lies outside [E_lo, E_hi] cannot show up.
  for (std::size_t j = 0; j < plan.gamma_crossings.size(); ++j) {
    try {
      long double E_pred =
          high_energy_branch_point(d, plan.winner_from[j], plan.gamma_crossings[j]).E;
      if (E_pred < E_lo || E_pred > E_hi) rep.partial = true;
    } catch (const Error&) {
      rep.partial = true;
    }
  }
  return rep;
}

}  // namespace vpl::deformed
