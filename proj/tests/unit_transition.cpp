// Tests for the entropy-envelope machinery: branch segmentation, energy
// inversion, max-entropy envelopes, transition location (both the folded
// single-branch route and the envelope winner-change route), the first/second
// kind classifier, and the deformed-disk high-energy constructions.
//
// Numeric anchors were computed independently with an arbitrary-precision
// evaluation of the same closed forms and frozen here.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "branch_builder.hpp"
#include "common.hpp"
#include "deformed_disk.hpp"
#include "disk_core.hpp"
#include "transition_finder.hpp"

using namespace vpl;

namespace {

constexpr double kPiD = 3.141592653589793238462643383279502884;

std::vector<double> log_spaced(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i)
    g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
  return g;
}

branch::Domain near_degenerate(double a) {
  return branch::make_domain({{1.0, 0.0}, {a, 0.0}, {a, 0.0}});
}

}  // namespace

TEST_CASE("segmentation: monotone branches yield a single increasing segment") {
  // A single disk and a well-separated three-disk domain both have E strictly
  // increasing along the 0-branch, so there is nothing to cut.
  for (auto& d : {branch::make_domain({{1.0, 0.0}}),
                  branch::make_domain({{1.0, 0.0}, {0.6, 0.0}, {0.2, 0.0}})}) {
    branch::Curve curve = branch::sample_branch(d, branch::Selector::zero_branch(),
                                                branch::uniform_grid(1500));
    transition::Segmentation seg = transition::segment_branch(curve);
    REQUIRE(seg.segments.size() == 1);
    CHECK(seg.criticals.empty());
    CHECK_FALSE(seg.has_dlr);
    const transition::Segment& s = seg.segments[0];
    CHECK(s.increasing);
    CHECK(s.id == "b0/0");
    CHECK(s.role == ' ');
    CHECK(static_cast<double>(s.mu_lo) == doctest::Approx(1e-6));
    CHECK(static_cast<double>(s.mu_hi) == doctest::Approx(1.0 - 1e-6));
    CHECK(s.E_lo < s.E_hi);
    CHECK(s.contains_energy((s.E_lo + s.E_hi) / 2));
    CHECK_FALSE(s.contains_energy(s.E_lo * 0.5));
  }
}

TEST_CASE("segmentation: near-equal areas fold the energy into d/l/r pieces") {
  // (1, a, a) with a = 1 - 3e-5. E(mu) rises to a local max (cusp B), dips to
  // a local min (cusp C), then rises again; the middle piece is the
  // low-entropy connector.
  branch::Domain d = near_degenerate(1.0 - 3e-5);
  branch::Curve curve = branch::sample_branch(
      d, branch::Selector::zero_branch(), branch::clustered_grid(1200, 900, 0.512, 0.06));
  transition::Segmentation seg = transition::segment_branch(curve);

  REQUIRE(seg.segments.size() == 3);
  REQUIRE(seg.criticals.size() == 2);
  CHECK(seg.has_dlr);
  CHECK(seg.segments[0].role == 'd');
  CHECK(seg.segments[1].role == 'l');
  CHECK(seg.segments[2].role == 'r');
  CHECK(seg.segments[0].increasing);
  CHECK_FALSE(seg.segments[1].increasing);
  CHECK(seg.segments[2].increasing);
  CHECK(seg.segments[0].id == "b0/0");
  CHECK(seg.segments[1].id == "b0/1");
  CHECK(seg.segments[2].id == "b0/2");

  // Cusp locations and energies, frozen from the closed forms.
  const transition::CriticalPoint& B = seg.criticals[0];
  const transition::CriticalPoint& C = seg.criticals[1];
  CHECK(B.is_max);
  CHECK_FALSE(C.is_max);
  CHECK(static_cast<double>(B.mu) == doctest::Approx(0.50178574045321399).epsilon(2e-5));
  CHECK(static_cast<double>(B.E) == doctest::Approx(0.010228308042837442).epsilon(1e-10));
  CHECK(static_cast<double>(C.mu) == doctest::Approx(0.51995096015127846).epsilon(2e-5));
  CHECK(static_cast<double>(C.E) == doctest::Approx(0.010204421008333655).epsilon(1e-10));

  // Segments share their cut points.
  CHECK(static_cast<double>(seg.segments[0].mu_hi) ==
        doctest::Approx(static_cast<double>(seg.segments[1].mu_lo)));
  CHECK(static_cast<double>(seg.segments[1].mu_hi) ==
        doctest::Approx(static_cast<double>(seg.segments[2].mu_lo)));
}

TEST_CASE("invert_energy: round trips and range errors") {
  branch::Domain d = branch::make_domain({{1.0, 0.0}});
  branch::Curve curve = branch::sample_branch(d, branch::Selector::zero_branch(),
                                              branch::uniform_grid(900));
  transition::Segmentation seg = transition::segment_branch(curve);
  REQUIRE(seg.segments.size() == 1);
  const transition::Segment& s = seg.segments[0];

  // E(0.5) = e(0.5) for the unit-mass single disk.
  long double e_half = disk::e_of_mu(0.5L);
  long double mu = transition::invert_energy(s, e_half);
  CHECK(static_cast<double>(mu) == doctest::Approx(0.5).epsilon(1e-11));

  // Round trip at several parameter values.
  for (double m : {0.05, 0.2, 0.55, 0.9, 0.997}) {
    long double E = s.evaluate(m).E;
    long double back = transition::invert_energy(s, E);
    CHECK(static_cast<double>(back) == doctest::Approx(m).epsilon(1e-10));
  }

  // Exact endpoints resolve to the segment ends.
  CHECK(static_cast<double>(transition::invert_energy(s, s.E_lo)) ==
        doctest::Approx(static_cast<double>(s.mu_lo)));
  CHECK(static_cast<double>(transition::invert_energy(s, s.E_hi)) ==
        doctest::Approx(static_cast<double>(s.mu_hi)));

  // Outside the covered range.
  CHECK_THROWS_AS(transition::invert_energy(s, s.E_min() * 0.9L), Error);
  CHECK_THROWS_AS(transition::invert_energy(s, s.E_max() * 1.1L), Error);
  try {
    transition::invert_energy(s, s.E_min() * 0.9L);
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::out_of_range);
  }

  // A decreasing segment inverts too.
  branch::Domain dd = near_degenerate(1.0 - 3e-5);
  branch::Curve c2 = branch::sample_branch(dd, branch::Selector::zero_branch(),
                                           branch::clustered_grid(1200, 900, 0.512, 0.06));
  transition::Segmentation seg2 = transition::segment_branch(c2);
  REQUIRE(seg2.segments.size() == 3);
  const transition::Segment& l = seg2.segments[1];
  long double E_mid = (l.E_min() + l.E_max()) / 2;
  long double mu_mid = transition::invert_energy(l, E_mid);
  CHECK(mu_mid > l.mu_lo);
  CHECK(mu_mid < l.mu_hi);
  CHECK(static_cast<double>(l.evaluate(mu_mid).E) ==
        doctest::Approx(static_cast<double>(E_mid)).epsilon(1e-12));
}

TEST_CASE("envelope: two disks with distinct areas, single concave sheet") {
  // (1, 0.8): the 0-branch is the whole story. The envelope starts at the
  // uniform state S = ln|domain area| and decreases concavely with slope beta.
  branch::Domain d = branch::make_domain({{1.0, 0.0}, {0.8, 0.0}});
  double e0 = 1.0 / (16.0 * kPiD);
  double area = 1.0 + 0.64;   // sum of a_i^2 (areas in units of pi... a_i are areas)
  (void)area;
  double total = 1.8;
  double E_m = e0 * (1.0 + 0.64) / (total * total);

  std::vector<double> grid = log_spaced(1.05 * E_m, 8.0 * E_m, 60);
  transition::Envelope env =
      transition::entropy_envelope(d, {branch::Selector::zero_branch()}, grid);
  REQUIRE(env.points.size() == grid.size());

  for (const auto& p : env.points) {
    CHECK_FALSE(p.gap);
    REQUIRE(p.winners.size() == 1);
    CHECK(p.winners[0] == "b0/0");
    CHECK(p.beta < 0);
  }

  // Entropy decreasing, chord slopes decreasing (concavity).
  for (std::size_t i = 0; i + 1 < env.points.size(); ++i)
    CHECK(env.points[i + 1].S < env.points[i].S);
  double prev_slope = 0;
  for (std::size_t i = 0; i + 1 < env.points.size(); ++i) {
    double slope = (env.points[i + 1].S - env.points[i].S) /
                   (env.points[i + 1].E - env.points[i].E);
    if (i > 0) CHECK(slope < prev_slope);
    prev_slope = slope;
  }

  // At the low-energy end the envelope meets ln(total area).
  transition::Envelope tip = transition::entropy_envelope(
      d, {branch::Selector::zero_branch()}, {E_m * (1.0 + 1e-4)});
  REQUIRE(tip.points.size() == 1);
  REQUIRE_FALSE(tip.points[0].gap);
  CHECK(tip.points[0].S == doctest::Approx(std::log(1.8)).epsilon(1e-6));

  // An energy below the branch floor reports a gap instead of a winner.
  transition::Envelope below = transition::entropy_envelope(
      d, {branch::Selector::zero_branch()}, {0.9 * E_m});
  REQUIRE(below.points.size() == 1);
  CHECK(below.points[0].gap);
  CHECK(below.points[0].winners.empty());
}

TEST_CASE("envelope: slope equals beta along the winning sheet") {
  branch::Domain d = branch::make_domain({{1.0, 0.0}, {0.8, 0.0}});
  double e0 = 1.0 / (16.0 * kPiD);
  double E_m = e0 * 1.64 / (1.8 * 1.8);
  std::vector<double> grid = log_spaced(1.2 * E_m, 2.0 * E_m, 2001);
  transition::Envelope env =
      transition::entropy_envelope(d, {branch::Selector::zero_branch()}, grid);
  REQUIRE(env.points.size() == grid.size());
  for (std::size_t i = 1; i + 1 < env.points.size(); i += 50) {
    double slope = (env.points[i + 1].S - env.points[i - 1].S) /
                   (env.points[i + 1].E - env.points[i - 1].E);
    CHECK(slope == doctest::Approx(env.points[i].beta).epsilon(1e-4));
  }
}

TEST_CASE("locate_transition: monotone branch reports no transition") {
  branch::Domain d = branch::make_domain({{1.0, 0.0}, {0.6, 0.0}, {0.2, 0.0}});
  branch::Curve curve = branch::sample_branch(d, branch::Selector::zero_branch(),
                                              branch::uniform_grid(1500));
  transition::TransitionReport rep = transition::locate_transition(curve);
  CHECK_FALSE(rep.found);
  CHECK_FALSE(rep.reason.empty());
}

TEST_CASE("locate_transition: folded branch, a = 1 - 3e-5") {
  branch::Domain d = near_degenerate(1.0 - 3e-5);
  branch::Curve curve = branch::sample_branch(
      d, branch::Selector::zero_branch(), branch::clustered_grid(1200, 900, 0.512, 0.06));
  transition::TransitionReport rep = transition::locate_transition(curve);

  REQUIRE(rep.found);
  // Crossing of the outer sheets, frozen anchors.
  CHECK(rep.E_star == doctest::Approx(0.010208442019063866).epsilon(1e-9));
  CHECK(rep.S_star == doctest::Approx(1.0205913130939873).epsilon(1e-10));
  CHECK(rep.beta_minus == doctest::Approx(-37.458237095704446).epsilon(1e-8));
  CHECK(rep.beta_plus == doctest::Approx(-37.030957699678526).epsilon(1e-8));
  CHECK(rep.beta_minus < rep.beta_plus);  // slope jumps up across E*

  // Bracket data: local-min and local-max cusps.
  CHECK(rep.E0 == doctest::Approx(0.010204421008333655).epsilon(1e-10));
  CHECK(rep.Ec_bar == doctest::Approx(0.010228308042837442).epsilon(1e-10));
  CHECK(rep.S0 == doctest::Approx(1.0207404255042094).epsilon(1e-10));
  CHECK(rep.Sc_bar == doctest::Approx(1.0198459337911251).epsilon(1e-10));
  CHECK(rep.E0 < rep.E_star);
  CHECK(rep.E_star < rep.Ec_bar);
  CHECK(rep.Sc_bar < rep.S_star);
  CHECK(rep.S_star < rep.S0);

  // Crossing parameters on each sheet.
  CHECK(rep.mu_left == doctest::Approx(0.49764270371791082).epsilon(1e-6));
  CHECK(rep.mu_right == doctest::Approx(0.52630140636060925).epsilon(1e-6));
  CHECK(rep.left_id == "b0/0");
  CHECK(rep.right_id == "b0/2");

  // The middle sheet sits below both outer sheets across the bracket, the
  // sheet gap is a ~1e-3 fraction of the cusp-to-cusp entropy span, and the
  // crossing lands before the d-sheet loses convexity.
  CHECK(rep.middle_branch_below);
  CHECK(rep.entropy_gap_scale > 1.4e-3);
  CHECK(rep.entropy_gap_scale < 1.9e-3);
  CHECK(rep.self_intersection_E == doctest::Approx(rep.E_star));
  CHECK(rep.d_inflection_E > rep.E_star);
  CHECK(rep.crossing_before_inflection);
}

TEST_CASE("locate_transition: folded branch, a = 1 - 1e-5") {
  branch::Domain d = near_degenerate(1.0 - 1e-5);
  branch::Curve curve = branch::sample_branch(
      d, branch::Selector::zero_branch(), branch::clustered_grid(1200, 900, 0.512, 0.06));
  transition::TransitionReport rep = transition::locate_transition(curve);

  REQUIRE(rep.found);
  CHECK(rep.E_star == doctest::Approx(0.010209532802383922).epsilon(1e-9));
  CHECK(rep.S_star == doctest::Approx(1.0205637765465022).epsilon(1e-10));
  CHECK(rep.beta_minus == doctest::Approx(-37.465323510116247).epsilon(1e-8));
  CHECK(rep.beta_plus == doctest::Approx(-37.024208717667646).epsilon(1e-8));
  CHECK(rep.E0 == doctest::Approx(0.010205154572993664).epsilon(1e-10));
  CHECK(rep.Ec_bar == doctest::Approx(0.010235960029034762).epsilon(1e-10));
  CHECK(rep.S0 == doctest::Approx(1.0207261161388547).epsilon(1e-10));
  CHECK(rep.Sc_bar == doctest::Approx(1.0195714777508471).epsilon(1e-10));
  // Overshoot ratio inside the expected decade.
  CHECK(rep.entropy_gap_scale > 1e-3);
  CHECK(rep.entropy_gap_scale < 4e-3);
  CHECK(rep.middle_branch_below);
}

TEST_CASE("envelope winner change: three identical disks") {
  // (1,1,1) with the all-equal branch (m0) and the one-apart branch (m1).
  // m0 wins at low energy; past E* the condensed m1 sheet takes over. The
  // envelope-driven locator must find exactly one crossing and the slope
  // jump, matching the frozen closed-form anchors.
  branch::Domain d = branch::make_domain({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}});
  std::vector<branch::Selector> sels = {branch::Selector::merged(0),
                                        branch::Selector::merged(1)};
  std::vector<double> grid = log_spaced(0.0101, 0.0104, 160);
  transition::Envelope env = transition::entropy_envelope(d, sels, grid);
  REQUIRE(env.points.size() == grid.size());

  // Winner flips from the uniform branch to the condensed sheet, never back.
  bool seen_m1 = false;
  for (const auto& p : env.points) {
    REQUIRE_FALSE(p.gap);
    REQUIRE(p.winners.size() == 1);
    if (p.winners[0] == "m1/0") seen_m1 = true;
    if (seen_m1) CHECK(p.winners[0] == "m1/0");
    else CHECK(p.winners[0] == "m0/0");
  }
  CHECK(seen_m1);

  std::vector<transition::TransitionReport> reps = transition::locate_transitions(env);
  REQUIRE(reps.size() == 1);
  const transition::TransitionReport& rep = reps[0];
  REQUIRE(rep.found);
  CHECK(rep.left_id == "m0/0");
  CHECK(rep.right_id == "m1/0");
  CHECK(rep.E_star == doctest::Approx(0.0102100781801366556).epsilon(1e-10));
  CHECK(rep.S_star == doctest::Approx(1.02055000862639717).epsilon(1e-11));
  CHECK(rep.beta_minus == doctest::Approx(-37.4687865146573017).epsilon(1e-9));
  CHECK(rep.beta_plus == doctest::Approx(-37.0209144210431796).epsilon(1e-9));
  CHECK(rep.beta_minus < rep.beta_plus);
  CHECK(rep.mu_left == doctest::Approx(0.496945215455221519).epsilon(1e-6));
  CHECK(rep.mu_right == doctest::Approx(0.473015381972763652).epsilon(1e-6));
  // Envelope-located reports carry no d/l/r bracket data.
  CHECK(rep.E0 == 0.0);
  CHECK(rep.Ec_bar == 0.0);

  // Below the crossing both slopes stay above the common-point slope
  // beta_c = -12 pi, and E* sits between the m1 fold energy and the common
  // point energy e(1/2)/3.
  double E_c = static_cast<double>(disk::e_of_mu(0.5L)) / 3.0;
  CHECK(rep.E_star < E_c);
  CHECK(rep.E_star > 0.0102055188455743604);
  CHECK(rep.beta_minus > -12.0 * kPiD * (1 + 1e-10));
  CHECK(rep.beta_plus > -12.0 * kPiD * (1 + 1e-10));
}

TEST_CASE("classify_kind: marginal, subcritical, and condensing domains") {
  // (1, 0.6, 0.2): a2 + a3 < 1, the 0-branch slope stays above -8 pi.
  transition::Classification c1 =
      transition::classify_kind(branch::make_domain({{1.0, 0.0}, {0.6, 0.0}, {0.2, 0.0}}));
  CHECK_FALSE(c1.second_kind);
  CHECK(c1.beta_min > -8.0 * kPiD);
  CHECK(c1.beta_min == doctest::Approx(-25.1327161).epsilon(1e-6));

  // (1, 0.9, 0.5): a2 + a3 > 1, beta dips below -8 pi at an interior mu.
  transition::Classification c2 =
      transition::classify_kind(branch::make_domain({{1.0, 0.0}, {0.9, 0.0}, {0.5, 0.0}}));
  CHECK(c2.second_kind);
  CHECK(c2.beta_min == doctest::Approx(-26.948423526438788).epsilon(1e-9));
  CHECK(c2.mu_at_min == doctest::Approx(0.7033014834925826).epsilon(1e-4));

  // Two identical disks: the 0-merged branch has beta = -16 pi mu, which
  // drops below -8 pi long before the endpoint.
  transition::Classification c3 =
      transition::classify_kind(branch::make_domain({{1.0, 0.0}, {1.0, 0.0}}));
  CHECK(c3.second_kind);
  CHECK(c3.beta_min < -16.0 * kPiD * 0.999);
  CHECK(c3.mu_at_min > 0.999);

  // A single disk never condenses: beta_min = -8 pi (1 - 1e-6) at the grid top.
  transition::Classification c4 =
      transition::classify_kind(branch::make_domain({{1.0, 0.0}}));
  CHECK_FALSE(c4.second_kind);
  CHECK(c4.beta_min == doctest::Approx(-8.0 * kPiD).epsilon(1e-5));
}

// ====== Deformed components and the high-energy construction ======

TEST_CASE("deformed shape factors: anchors and the near-condensation identity") {
  CHECK(static_cast<double>(deformed::tau(0.0L)) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::tau(0.5L)) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::tau(1.0L)) == doctest::Approx(18.0).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::zeta(0.0L)) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::zeta(0.5L)) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::zeta(1.0L)) == doctest::Approx(-18.0).epsilon(1e-15));

  // Near mu = 1 the sum collapses: zeta + tau = 36 x (1+x) / (1+2x)^2 at
  // mu = 1 - x, so the combined correction vanishes linearly in x... at x=0
  // it is 0 + 18 - 18 = 0 exactly.
  for (double x : {0.3, 0.1, 0.01, 1e-4}) {
    long double mu = 1.0L - static_cast<long double>(x);
    double lhs = static_cast<double>(deformed::zeta(mu) + deformed::tau(mu));
    double rhs = 36.0 * x * (1.0 + x) / ((1.0 + 2.0 * x) * (1.0 + 2.0 * x));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("perturbed energy and partition factor") {
  // eta = 0 reduces exactly to the round-disk values.
  for (double m : {0.1, 0.5, 0.9}) {
    long double mu = m;
    CHECK(static_cast<double>(deformed::perturbed_e(mu, 0.0L)) ==
          doctest::Approx(static_cast<double>(disk::e_of_mu(mu))).epsilon(1e-18));
    CHECK(static_cast<double>(deformed::perturbed_z(mu, 0.0L, 1.0L)) ==
          doctest::Approx(static_cast<double>(disk::z_of_mu(mu, 1.0L))).epsilon(1e-18));
  }

  // First-order formulas: e - eta tau/(8 pi) and a (1 + eta zeta)/(1 - mu).
  long double mu = 0.3L, eta = 0.02L, a = 0.7L;
  double e_exp = static_cast<double>(disk::e_of_mu(mu) - eta * deformed::tau(mu) / (8.0L * kPi));
  double z_exp = static_cast<double>(a * (1.0L + eta * deformed::zeta(mu)) / (1.0L - mu));
  CHECK(static_cast<double>(deformed::perturbed_e(mu, eta)) == doctest::Approx(e_exp).epsilon(1e-15));
  CHECK(static_cast<double>(deformed::perturbed_z(mu, eta, a)) == doctest::Approx(z_exp).epsilon(1e-15));

  // Validation: negative eta, oversized eta (unless allowed), bad area.
  CHECK_THROWS_AS(deformed::perturbed_e(0.5L, -1e-3L), Error);
  CHECK_THROWS_AS(deformed::perturbed_e(0.5L, 0.06L), Error);
  CHECK_NOTHROW(deformed::perturbed_e(0.5L, 0.06L, true));
  CHECK_THROWS_AS(deformed::perturbed_z(0.5L, 0.01L, 0.0L), Error);
  try {
    deformed::perturbed_e(0.5L, 0.06L);
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::out_of_range);
  }
}

TEST_CASE("high_energy_mu: exact roots, asymptotic forms, fold guard") {
  long double gamma = 1e-3L, a = 1.0L, eta = 1e-3L;

  deformed::HighEnergyMu lo = deformed::high_energy_mu(gamma, a, eta, -1);
  deformed::HighEnergyMu hi = deformed::high_energy_mu(gamma, a, eta, +1);

  // Both satisfy mu (1 - mu) = gamma a (1 + eta zeta(mu)) to machine accuracy.
  for (const auto& r : {lo, hi}) {
    long double res = r.mu * (1.0L - r.mu) - gamma * a * (1.0L + eta * deformed::zeta(r.mu));
    CHECK(std::fabs(static_cast<double>(res)) < 1e-15);
  }
  CHECK(lo.mu < 0.5L);
  CHECK(hi.mu > 0.5L);

  // Printed leading-order forms, exact by construction.
  CHECK(static_cast<double>(lo.mu_asymptotic) ==
        doctest::Approx(static_cast<double>(gamma * a * (1.0L + eta))).epsilon(1e-15));
  CHECK(static_cast<double>(hi.mu_asymptotic) ==
        doctest::Approx(static_cast<double>(1.0L - gamma * a * (1.0L - 3.0L * eta))).epsilon(1e-15));
  // ... and they approximate the exact roots at the percent level here.
  CHECK(static_cast<double>(lo.mu) == doctest::Approx(static_cast<double>(lo.mu_asymptotic)).epsilon(0.02));
  CHECK(static_cast<double>(hi.mu) == doctest::Approx(static_cast<double>(hi.mu_asymptotic)).epsilon(0.02));

  // eta = 0 matches the round-disk fixed point exactly.
  deformed::HighEnergyMu flat = deformed::high_energy_mu(0.01L, 1.0L, 0.0L, -1);
  auto [mu_minus, mu_plus] = branch::mu_pm_ld(0.01L, 1.0L);
  (void)mu_plus;
  CHECK(static_cast<double>(flat.mu) == doctest::Approx(static_cast<double>(mu_minus)).epsilon(1e-18));

  // Past the fold there is no root on either side.
  CHECK_THROWS_AS(deformed::high_energy_mu(0.3L, 1.0L, 1e-3L, -1), Error);
  try {
    deformed::high_energy_mu(0.3L, 1.0L, 1e-3L, -1);
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::fold_violation);
  }
}

TEST_CASE("deformed_from_gamma: round reduction and invariants") {
  // All-round domain: identical to the plain branch evaluation.
  branch::Domain round = branch::make_domain({{1.0, 0.0}, {0.8, 0.0}});
  long double gamma = 0.012L;
  branch::PointLD p_def = deformed::deformed_from_gamma(round, gamma, {-1, -1});
  branch::PointLD p_ref = branch::eval_from_gamma(round, gamma, {-1, -1});
  CHECK(static_cast<double>(p_def.beta) == doctest::Approx(static_cast<double>(p_ref.beta)).epsilon(1e-16));
  CHECK(static_cast<double>(p_def.E) == doctest::Approx(static_cast<double>(p_ref.E)).epsilon(1e-16));
  CHECK(static_cast<double>(p_def.S) == doctest::Approx(static_cast<double>(p_ref.S)).epsilon(1e-16));

  // Deformed domain: masses sum to one, S = ln Z + 2 beta E holds, and the
  // plus-component carries the bulk of the mass at small gamma.
  branch::Domain def = branch::make_domain({{1.0, 1e-3}, {0.999, 2e-3}}, false);
  branch::PointLD q = deformed::deformed_from_gamma(def, 0.01L, {+1, -1});
  long double mass = 0;
  for (long double m : q.M_i) mass += m;
  CHECK(static_cast<double>(mass) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(static_cast<double>(q.S) ==
        doctest::Approx(static_cast<double>(std::log(q.Z) + 2.0L * q.beta * q.E)).epsilon(1e-14));
  CHECK(q.M_i[0] > 0.9L);
  CHECK(q.beta < -8.0L * kPi);
}

TEST_CASE("plan_sequences: placed ladders hit their crossing targets") {
  // N = 1: nothing to cross.
  deformed::HighEnergyPlan p1 = deformed::plan_sequences(1, 0.0);
  CHECK(p1.N == 1);
  CHECK(p1.gamma_crossings.empty());

  // Two components in the default window keep the landmark crossing at 1/50.
  deformed::HighEnergyPlan p2 = deformed::plan_sequences(2, 1e-3);
  REQUIRE(p2.alpha.size() == 2);
  REQUIRE(p2.q.size() == 2);
  CHECK(p2.alpha[0] == 0.0);
  CHECK(p2.alpha[1] < 0.0);
  CHECK(p2.q[0] == 0.0);
  CHECK(p2.q[1] > 0.0);
  REQUIRE(p2.gamma_crossings.size() == 1);
  CHECK(p2.gamma_crossings[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(p2.winner_from == std::vector<int>{2});
  CHECK(p2.winner_to == std::vector<int>{1});

  // The placement is real: at gamma* the two branch entropies agree at equal
  // energy, recomputed here from branch data alone.
  {
    branch::Domain d2 = p2.domain();
    branch::PointLD b1 = deformed::high_energy_branch_point(d2, 1, 0.02L);
    long double g2 = deformed::gamma_at_energy(d2, 2, b1.E);
    branch::PointLD b2 = deformed::high_energy_branch_point(d2, 2, g2);
    CHECK(std::fabs(static_cast<double>(b2.S - b1.S)) <= 1e-10);
  }

  // N = 3: log-spaced targets inside (0.005, 0.04) land exactly on 0.02 and
  // 0.01; alpha steps down uniformly and q climbs within the trust region.
  deformed::HighEnergyPlan p3 = deformed::plan_sequences(3, 1e-3);
  REQUIRE(p3.gamma_crossings.size() == 2);
  CHECK(p3.gamma_crossings[0] == doctest::Approx(0.02).epsilon(1e-9));
  CHECK(p3.gamma_crossings[1] == doctest::Approx(0.01).epsilon(1e-9));
  REQUIRE(p3.q.size() == 3);
  CHECK(p3.q[0] == 0.0);
  CHECK(p3.q[1] > p3.q[0]);
  CHECK(p3.q[2] > p3.q[1]);
  CHECK(p3.alpha[0] == 0.0);
  CHECK(p3.alpha[1] < p3.alpha[0]);
  CHECK(p3.alpha[2] < p3.alpha[1]);
  CHECK(p3.alpha[1] - p3.alpha[2] ==
        doctest::Approx(p3.alpha[0] - p3.alpha[1]).epsilon(1e-12));
  CHECK(p3.winner_from == std::vector<int>{3, 2});
  CHECK(p3.winner_to == std::vector<int>{2, 1});
  REQUIRE(p3.E_crossings.size() == 2);
  CHECK(p3.E_crossings[0] < p3.E_crossings[1]);

  // The planned domain has strictly decreasing areas and valid deformations.
  branch::Domain d3 = p3.domain();
  REQUIRE(d3.size() == 3);
  for (int i = 0; i + 1 < 3; ++i) CHECK(d3.area(i) > d3.area(i + 1));
  for (const auto& comp : d3.components) {
    CHECK(comp.eta >= 0.0);
    CHECK(comp.eta <= deformed::kEtaMax);
  }

  // A base eta too large for the window runs out of trust region no matter
  // how small the area step shrinks.
  CHECK_THROWS_AS(deformed::plan_sequences(3, 0.02), Error);
  try {
    deformed::plan_sequences(3, 0.02);
  } catch (const Error& err) {
    CHECK(std::string(err.what()).find("trust region") != std::string::npos);
  }
}

TEST_CASE("high_energy_entropy: comparator picks the planned winner") {
  deformed::HighEnergyPlan plan = deformed::plan_sequences(3, 1e-3);
  auto winner = [&](double gamma) {
    int best = 1;
    double best_c = deformed::high_energy_entropy(1, gamma, plan).comparator;
    for (int i = 2; i <= 3; ++i) {
      double c = deformed::high_energy_entropy(i, gamma, plan).comparator;
      if (c > best_c) {
        best_c = c;
        best = i;
      }
    }
    return best;
  };
  CHECK(winner(0.035) == 3);
  CHECK(winner(0.0141) == 2);  // geometric middle of the two crossings
  CHECK(winner(0.006) == 1);

  // Comparator formula: eta (alpha_i A + q_i B) with A = 1 - 2g - 2g^2 and
  // B = 12g - 40g^2.
  for (int i = 1; i <= 3; ++i) {
    double g = 0.017;
    double A = 1.0 - 2.0 * g - 2.0 * g * g;
    double B = 12.0 * g - 40.0 * g * g;
    double expect = plan.eta * (plan.alpha[i - 1] * A + plan.q[i - 1] * B);
    CHECK(deformed::high_energy_entropy(i, g, plan).comparator ==
          doctest::Approx(expect).epsilon(1e-13));
  }

  // S_reduced differences are exactly comparator differences: the level term
  // is shared by every component.
  {
    deformed::EntropyComparator e1 = deformed::high_energy_entropy(1, 0.017, plan);
    deformed::EntropyComparator e3 = deformed::high_energy_entropy(3, 0.017, plan);
    CHECK(e1.S_reduced - e3.S_reduced ==
          doctest::Approx(e1.comparator - e3.comparator).epsilon(1e-9));
  }

  // The comparator's predicted crossing brackets each planned one within 10%.
  for (int j = 0; j < 2; ++j) {
    int i = 2 - j;  // pair (i, i+1), 1-based, crosses at gamma_crossings[j]
    double tgt = plan.gamma_crossings[j];
    auto tie_gap = [&](double g) {
      return deformed::high_energy_entropy(i, g, plan).comparator -
             deformed::high_energy_entropy(i + 1, g, plan).comparator;
    };
    CHECK(tie_gap(0.90 * tgt) * tie_gap(1.10 * tgt) < 0.0);
  }

  // Identical alpha and q leave nothing to decide: all comparators tie.
  deformed::HighEnergyPlan same;
  same.N = 3;
  same.eta = 1e-3;
  same.alpha = {-1.0, -1.0, -1.0};
  same.q = {0.5, 0.5, 0.5};
  CHECK(deformed::high_energy_entropy(1, 0.02, same).comparator ==
        deformed::high_energy_entropy(3, 0.02, same).comparator);

  // gamma -> 0: the area term dominates, so the winner is argmax alpha even
  // against a much stronger deformation.
  deformed::HighEnergyPlan skew;
  skew.N = 2;
  skew.eta = 1e-3;
  skew.alpha = {0.0, -1.0};
  skew.q = {0.0, 30.0};
  CHECK(deformed::high_energy_entropy(1, 1e-6, skew).comparator >
        deformed::high_energy_entropy(2, 1e-6, skew).comparator);
}

TEST_CASE("locate_high_energy_transitions: the N = 3 cascade") {
  deformed::HighEnergyPlan plan = deformed::plan_sequences(3, 1e-3);
  branch::Domain d = plan.domain();

  deformed::HighEnergyReport rep =
      deformed::locate_high_energy_transitions(d, plan, 0.085, 0.17);

  CHECK_FALSE(rep.partial);
  CHECK(rep.winner_sequence == std::vector<int>{3, 2, 1});
  REQUIRE(rep.crossings.size() == 2);
  REQUIRE(rep.crossing_gamma.size() == 2);

  // Crossings come in increasing energy order; gamma therefore decreases.
  CHECK(rep.crossings[0].E_star < rep.crossings[1].E_star);
  CHECK(rep.crossing_gamma[0] > rep.crossing_gamma[1]);

  // The realized crossings track the comparator plan within 10%.
  CHECK(rep.crossing_gamma[0] == doctest::Approx(0.02).epsilon(0.10));
  CHECK(rep.crossing_gamma[1] == doctest::Approx(0.01).epsilon(0.10));

  for (const auto& t : rep.crossings) {
    CHECK(t.found);
    CHECK(t.beta_minus < t.beta_plus);  // each hop is a first-order jump
    CHECK(t.E_star > 0.085);
    CHECK(t.E_star < 0.17);
    CHECK(t.beta_minus < -8.0 * kPiD);  // deep in the condensed regime
  }
}

TEST_CASE("gamma_at_energy: inverse of the branch energy") {
  deformed::HighEnergyPlan plan = deformed::plan_sequences(3, 1e-3);
  branch::Domain d = plan.domain();

  for (int i : {1, 2, 3}) {
    long double gamma0 = 0.013L;
    branch::PointLD p = deformed::high_energy_branch_point(d, i, gamma0);
    long double back = deformed::gamma_at_energy(d, i, p.E);
    CHECK(static_cast<double>(back) == doctest::Approx(0.013).epsilon(1e-10));
  }

  // An energy below the branch's range is refused.
  CHECK_THROWS_AS(deformed::gamma_at_energy(d, 1, 1e-9L), Error);
}
