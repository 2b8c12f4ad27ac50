#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "branch_builder.hpp"
#include "disk_core.hpp"

using namespace vpl;
using doctest::Approx;

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// Trapezoid of f(r) * 2*pi*r over a radial grid.
double radial_integral(const std::vector<double>& r, const std::vector<double>& f) {
  double acc = 0;
  for (std::size_t i = 1; i < r.size(); ++i)
    acc += 0.5 * (f[i] * r[i] + f[i - 1] * r[i - 1]) * (r[i] - r[i - 1]);
  return kTwoPi * acc;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

}  // namespace

TEST_CASE("scaled energy e(mu): anchors, monotonicity, divergence") {
  // Continuity at the origin: e(0+) = 1/(16 pi).
  CHECK(disk::e_of_mu(1e-9) == Approx(1.0 / (16.0 * kPi)).epsilon(1e-8));

  // Midpoint value, frozen from the closed form evaluated in extended
  // precision (and re-confirmed against the radial solver in unit_oracle).
  CHECK(disk::e_of_mu(0.5) == Approx(0.0307403285303781288).epsilon(1e-14));

  // Strictly increasing on (0,1).
  double prev = disk::e_of_mu(1e-6);
  for (double mu = 0.01; mu < 0.999; mu += 0.01) {
    double cur = disk::e_of_mu(mu);
    CHECK(cur > prev);
    prev = cur;
  }

  // Logarithmic divergence toward mu = 1: the clamped endpoint is huge.
  CHECK(disk::e_of_mu(1.0 - 1e-9) > 0.08);

  // Series and log branches agree where they meet.
  CHECK(disk::e_of_mu(0.5 + 1e-12) == Approx(disk::e_of_mu(0.5 - 1e-12)).epsilon(1e-12));

  CHECK_THROWS_AS(disk::e_of_mu(-0.1), Error);
  CHECK_THROWS_AS(disk::e_of_mu(1.2), Error);
}

TEST_CASE("normalization z(mu, area)") {
  CHECK(disk::z_of_mu(1e-9, 1.0) == Approx(1.0).epsilon(1e-8));
  CHECK(disk::z_of_mu(0.5, 1.0) == Approx(2.0).epsilon(1e-15));
  CHECK(disk::z_of_mu(0.75, 2.0) == Approx(8.0).epsilon(1e-15));
  CHECK_THROWS_AS(disk::z_of_mu(0.5, -1.0), Error);
}

TEST_CASE("disk energy as a function of beta") {
  // Uniform state.
  CHECK(disk::disk_energy_of_beta(0.0) == Approx(1.0 / (16.0 * kPi)).epsilon(1e-15));

  // Positive-temperature anchor: E(8 pi) = (1 - ln 2)/(8 pi).
  CHECK(disk::disk_energy_of_beta(8.0 * kPi) ==
        Approx((1.0 - std::log(2.0)) / (8.0 * kPi)).epsilon(1e-14));

  // Substitution mu = -beta/(8 pi) for beta < 0, unit mass.
  CHECK(disk::disk_energy_of_beta(-4.0 * kPi) == Approx(disk::e_of_mu(0.5)).epsilon(1e-14));
  for (double mu = 0.05; mu < 0.999; mu += 0.05)
    CHECK(disk::disk_energy_of_beta(-8.0 * kPi * mu) == Approx(disk::e_of_mu(mu)).epsilon(1e-13));

  // Series handoff at |beta| = 4 pi is seamless.
  CHECK(disk::disk_energy_of_beta(4.0 * kPi + 1e-9) ==
        Approx(disk::disk_energy_of_beta(4.0 * kPi - 1e-9)).epsilon(1e-12));

  CHECK_THROWS_AS(disk::disk_energy_of_beta(-8.0 * kPi), Error);
  CHECK_THROWS_AS(disk::disk_energy_of_beta(-9.0 * kPi), Error);
}

TEST_CASE("parametric unit-disk state: round trips and invariants") {
  for (long double u : {-3.0L, -1.0L, -0.3L, 0.0L, 0.5L, 2.0L}) {
    auto st = disk::state_of_u(u);
    CHECK(static_cast<double>(st.Z) == Approx(std::exp(-static_cast<double>(u))).epsilon(1e-14));
    CHECK(static_cast<double>(st.beta) ==
          Approx(8.0 * kPi * std::expm1(static_cast<double>(u))).epsilon(1e-13));
    CHECK(static_cast<double>(st.energy) ==
          Approx(disk::disk_energy_of_beta(static_cast<double>(st.beta))).epsilon(1e-12));
    CHECK(static_cast<double>(st.entropy) ==
          Approx(static_cast<double>(-u + 2.0L * st.beta * st.energy)).epsilon(1e-13));

    auto back_e = disk::state_of_energy(st.energy);
    CHECK(static_cast<double>(back_e.u) == Approx(static_cast<double>(u)).epsilon(1e-10));
    auto back_b = disk::state_of_beta(st.beta);
    CHECK(static_cast<double>(back_b.u) == Approx(static_cast<double>(u)).epsilon(1e-10));
  }

  // The uniform state is the entropy maximum: S = ln(area) = 0, E = 1/(16 pi).
  auto um = disk::state_of_energy(1.0L / (16.0L * kPi));
  CHECK(std::fabs(static_cast<double>(um.u)) < 1e-10);
  CHECK(std::fabs(static_cast<double>(um.entropy)) < 1e-10);
}

TEST_CASE("entropy rescaling in mass and area") {
  auto s1 = [](double E) { return disk::scaled_entropy(1.0, E, 1.0); };
  double E0 = 0.03;

  CHECK(disk::scaled_entropy(1.0, E0, 1.0) == Approx(s1(E0)).epsilon(1e-15));
  CHECK(disk::scaled_entropy(2.0, 4.0 * E0, 1.0) ==
        Approx(2.0 * s1(E0) - 2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(disk::scaled_entropy(0.5, E0 / 4.0, 1.0) ==
        Approx(0.5 * s1(E0) + 0.5 * std::log(2.0)).epsilon(1e-12));

  // Area enters only through the additive M ln(area) dilation shift.
  CHECK(disk::scaled_entropy(0.7, E0, 2.5) ==
        Approx(disk::scaled_entropy(0.7, E0, 1.0) + 0.7 * std::log(2.5)).epsilon(1e-12));
}

TEST_CASE("stream profile: boundary value, density contrast, mass") {
  auto grid = linspace(0.0, 1.0, 4001);

  for (double mu : {0.1, 0.5, 0.9}) {
    auto prof = disk::stream_profile(mu, kPi, grid);  // unit radius
    CHECK(prof.psi.back() == 0.0);
    CHECK(prof.rho.front() / prof.rho.back() == Approx(1.0 / ((1 - mu) * (1 - mu))).epsilon(1e-12));
    CHECK(radial_integral(prof.r, prof.rho) == Approx(1.0).epsilon(1e-6));
  }

  // mu = 0.9 centre value, frozen from the closed form (2/beta) ln(1 - mu).
  auto hot = disk::stream_profile(0.9, kPi, {0.0, 1.0});
  CHECK(hot.psi[0] == Approx(0.20359322191095215).epsilon(1e-13));
  CHECK(hot.beta == Approx(-8.0 * kPi * 0.9).epsilon(1e-14));

  // mu = 0.5: centre density is 4x the rim density.
  auto half = disk::stream_profile(0.5, kPi, {0.0, 1.0});
  CHECK(half.rho[0] == Approx(4.0 * half.rho[1]).epsilon(1e-12));

  // Small mu: density is uniform 1/area up to O(mu).
  auto cold = disk::stream_profile(1e-7, 4.0 * kPi, {0.0, 1.0, 2.0});  // R = 2
  for (double rho : cold.rho) CHECK(rho == Approx(1.0 / (4.0 * kPi)).epsilon(1e-5));
}

TEST_CASE("two-root structure of mu(1-mu) = gamma a") {
  // gamma a = 0.05: frozen closed-form roots (1 -+ sqrt(0.8))/2.
  auto [lo, hi] = branch::mu_pm(0.1, 0.5);
  CHECK(lo == Approx(0.05278640450004206).epsilon(1e-14));
  CHECK(hi == Approx(0.94721359549995794).epsilon(1e-14));

  // gamma a = 0.24 gives the rational pair (0.4, 0.6).
  auto [l2, h2] = branch::mu_pm(0.24, 1.0);
  CHECK(l2 == Approx(0.4).epsilon(1e-14));
  CHECK(h2 == Approx(0.6).epsilon(1e-14));

  // At the fold the roots merge at 1/2.
  auto [l3, h3] = branch::mu_pm(0.25, 1.0);
  CHECK(l3 == Approx(0.5).epsilon(1e-12));
  CHECK(h3 == Approx(0.5).epsilon(1e-12));

  // Both roots satisfy the defining equation, across scales.
  for (double ga : {1e-8, 1e-4, 0.01, 0.2, 0.2499}) {
    auto [m, p] = branch::mu_pm_ld(ga, 1.0L);
    CHECK(static_cast<double>(m * (1.0L - m)) == Approx(ga).epsilon(1e-15));
    CHECK(static_cast<double>(p * (1.0L - p)) == Approx(ga).epsilon(1e-15));
    CHECK(m <= p);
  }

  CHECK_THROWS_AS(branch::mu_pm(0.26, 1.0), Error);
  CHECK_THROWS_AS(branch::mu_pm(0.1, 3.0), Error);  // gamma > 1/(4 area)
  try {
    branch::mu_pm(0.26, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::fold_violation);
  }
}

TEST_CASE("domain construction: ordering, validation, normalization") {
  auto d = branch::make_disk_domain({0.2, 1.0, 0.6});
  CHECK(d.reordered);
  CHECK(d.area(0) == 1.0);
  CHECK(d.area(1) == 0.6);
  CHECK(d.area(2) == 0.2);
  CHECK(d.total_area() == Approx(1.8).epsilon(1e-15));
  CHECK_FALSE(d.identical_areas());

  auto sorted = branch::make_disk_domain({1.0, 0.6, 0.2});
  CHECK_FALSE(sorted.reordered);

  auto norm = branch::make_disk_domain({4.0, 2.0}, true);
  CHECK(norm.area(0) == Approx(1.0));
  CHECK(norm.area(1) == Approx(0.5));
  CHECK(norm.area_scale == Approx(4.0));

  CHECK(branch::make_disk_domain({1.0, 1.0, 1.0}).identical_areas());
  CHECK_THROWS_AS(branch::make_disk_domain({1.0, 0.0}), Error);
  CHECK_THROWS_AS(branch::make_disk_domain({}), Error);
}

TEST_CASE("branch selectors: labels and validation") {
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  CHECK(branch::Selector::zero_branch().label() == "b0");
  CHECK(branch::Selector::k_branch({3, 2}).label() == "b+2+3");  // sorted
  CHECK(branch::Selector::merged(1).label() == "m1");

  CHECK_NOTHROW(branch::Selector::zero_branch().validate(d));
  CHECK_NOTHROW(branch::Selector::k_branch({2}).validate(d));
  CHECK_THROWS_AS(branch::Selector::k_branch({1}).validate(d), Error);   // sweep slot
  CHECK_THROWS_AS(branch::Selector::k_branch({4}).validate(d), Error);   // out of range
  CHECK_THROWS_AS(branch::Selector::k_branch({2, 2}).validate(d), Error);
  CHECK_THROWS_AS(branch::Selector::merged(1).validate(d), Error);  // unequal areas

  auto eq = branch::make_disk_domain({1.0, 1.0, 1.0, 1.0});
  CHECK_NOTHROW(branch::Selector::merged(2).validate(eq));
  CHECK_THROWS_AS(branch::Selector::merged(4).validate(eq), Error);
}

TEST_CASE("zero-branch state assembly on three unequal disks") {
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  auto sel = branch::Selector::zero_branch();
  auto p = branch::branch_point(d, sel, 0.3);

  // Frozen root/beta values for gamma = 0.3*0.7 = 0.21.
  CHECK(p.gamma == Approx(0.21).epsilon(1e-15));
  CHECK(p.mu_i[0] == Approx(0.3).epsilon(1e-15));
  CHECK(p.mu_i[1] == Approx(0.14786366276681982).epsilon(1e-13));
  CHECK(p.mu_i[2] == Approx(0.04392982996034481).epsilon(1e-13));
  CHECK(p.beta == Approx(-12.360118590679406).epsilon(1e-13));

  // Mass fractions sum to one and are proportional to mu_i.
  double msum = 0;
  for (double m : p.M_i) msum += m;
  CHECK(msum == Approx(1.0).epsilon(1e-14));
  CHECK(p.M_i[1] / p.M_i[0] == Approx(p.mu_i[1] / p.mu_i[0]).epsilon(1e-13));

  // Component energies reassemble the total.
  double esum = 0;
  for (double e : p.E_i) esum += e;
  CHECK(esum == Approx(p.E).epsilon(1e-14));

  // lambda = -beta/Z.
  CHECK(p.lambda == Approx(-p.beta / p.Z).epsilon(1e-14));
}

TEST_CASE("entropy consistency: assembled S equals the mass-split sum") {
  // S = ln Z + 2 beta E must match sum_i S_i(M_i, E_i, a_i) with the
  // per-component rescaled one-disk entropies.
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  for (auto sel : {branch::Selector::zero_branch(), branch::Selector::k_branch({2}),
                   branch::Selector::k_branch({2, 3})}) {
    for (double mu : {0.05, 0.2, 0.45, 0.7, 0.9}) {
      auto p = branch::branch_point(d, sel, mu);
      double split = 0;
      for (int i = 0; i < d.size(); ++i)
        split += disk::scaled_entropy(p.M_i[i], p.E_i[i], d.area(i));
      CHECK(p.S == Approx(split).epsilon(1e-10));
    }
  }
}

TEST_CASE("zero-branch endpoints: uniform state on the union") {
  // As mu -> 0 the zero branch tends to the uniform state: S -> ln(total
  // area) and E -> e(0) * sum a_i^2 / (sum a_i)^2 (each disk carries mass
  // proportional to its area).
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  auto p = branch::branch_point(d, branch::Selector::zero_branch(), 1e-6);
  CHECK(p.S == Approx(std::log(1.8)).epsilon(1e-4));
  CHECK(p.E == Approx((1.0 / (16.0 * kPi)) * 1.4 / (1.8 * 1.8)).epsilon(1e-4));
  CHECK(p.beta == Approx(0.0).epsilon(1e-3));
}

TEST_CASE("plus-root branches live beyond the one-disk fold") {
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  for (auto sel : {branch::Selector::k_branch({2}), branch::Selector::k_branch({3}),
                   branch::Selector::k_branch({2, 3})}) {
    for (double mu = 0.02; mu < 0.99; mu += 0.02) {
      auto p = branch::branch_point(d, sel, mu);
      CHECK(p.beta < -8.0 * kPi);
    }
  }
}

TEST_CASE("merged branches on identical disks") {
  // Common point: at mu = 1/2 every merged branch of N unit disks sits at
  // beta = -4 pi N, independent of k.
  for (int N : {2, 3, 4, 6}) {
    for (int k = 0; k < N; ++k) {
      auto p = branch::merged_branch_point(N, k, 0.5);
      CHECK(p.beta == Approx(-4.0 * kPi * N).epsilon(1e-14));
    }
  }

  // Half-split branch: beta is constant in mu (sum of mu_i is frozen at N/2).
  for (int N : {2, 4}) {
    for (double mu : {0.1, 0.3, 0.5, 0.8}) {
      auto p = branch::merged_branch_point(N, N / 2, mu);
      CHECK(p.beta == Approx(-4.0 * kPi * N).epsilon(1e-13));
    }
    // ... but the energy still varies, symmetric about 1/2.
    auto a = branch::merged_branch_point(N, N / 2, 0.3);
    auto b = branch::merged_branch_point(N, N / 2, 0.7);
    CHECK(a.E == Approx(b.E).epsilon(1e-12));
    CHECK(a.E != Approx(branch::merged_branch_point(N, N / 2, 0.5).E).epsilon(1e-4));
  }

  // k = 0 merged equals the zero branch of the identical-area domain.
  auto eq = branch::make_disk_domain({1.0, 1.0});
  auto m0 = branch::branch_point(eq, branch::Selector::merged(0), 0.3);
  auto b0 = branch::branch_point(eq, branch::Selector::zero_branch(), 0.3);
  CHECK(m0.beta == Approx(b0.beta).epsilon(1e-14));
  CHECK(m0.E == Approx(b0.E).epsilon(1e-14));
}

TEST_CASE("thermodynamic slope: dS/dE = beta along branches") {
  auto d = branch::make_disk_domain({1.0, 0.6, 0.2});
  auto sel = branch::Selector::zero_branch();
  const double h = 1e-6;
  for (double mu : {0.1, 0.25, 0.6, 0.85}) {
    auto pm = branch::branch_point(d, sel, mu - h);
    auto pp = branch::branch_point(d, sel, mu + h);
    auto pc = branch::branch_point(d, sel, mu);
    double slope = (pp.S - pm.S) / (pp.E - pm.E);
    CHECK(slope == Approx(pc.beta).epsilon(1e-4));
  }
}

TEST_CASE("consistency with the gamma parametrization") {
  auto d = branch::make_disk_domain({1.0, 0.6});
  auto p1 = branch::branch_point(d, branch::Selector::k_branch({2}), 0.2);
  auto p2 = branch::from_gamma(d, p1.gamma, {-1, +1});
  CHECK(p2.beta == Approx(p1.beta).epsilon(1e-14));
  CHECK(p2.E == Approx(p1.E).epsilon(1e-14));
  CHECK(p2.S == Approx(p1.S).epsilon(1e-13));

  CHECK_THROWS_AS(branch::from_gamma(d, 0.3, {-1, -1}), Error);       // beyond fold
  CHECK_THROWS_AS(branch::from_gamma(d, 0.1, {-1}), Error);           // size mismatch
  CHECK_THROWS_AS(branch::from_gamma(d, 0.1, {-1, 2}), Error);        // bad sign
}

TEST_CASE("branch sampling: ordering, densification near energy folds") {
  // One large disk plus two slightly smaller equal ones: the zero branch has
  // the energy fold pair (local max then local min) just past mu = 1/2.
  auto d = branch::make_disk_domain({1.0, 1.0 - 1e-4, 1.0 - 1e-4});
  auto curve = branch::sample_branch(d, branch::Selector::zero_branch(),
                                     branch::uniform_grid(800));
  REQUIRE(curve.points.size() >= 800);
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    CHECK(curve.points[i].mu > curve.points[i - 1].mu);

  int sign_changes = 0;
  for (std::size_t i = 2; i < curve.points.size(); ++i) {
    double d0 = curve.points[i - 1].E - curve.points[i - 2].E;
    double d1 = curve.points[i].E - curve.points[i - 1].E;
    if (d0 != 0 && d1 != 0 && (d0 > 0) != (d1 > 0)) ++sign_changes;
  }
  CHECK(sign_changes == 2);

  CHECK_THROWS_AS(branch::sample_branch(d, branch::Selector::zero_branch(), {0.5}), Error);
  CHECK_THROWS_AS(branch::sample_branch(d, branch::Selector::zero_branch(), {0.5, 0.4}), Error);
}

TEST_CASE("grid helpers") {
  auto u = branch::uniform_grid(11, 0.1, 0.9);
  CHECK(u.size() == 11);
  CHECK(u.front() == Approx(0.1));
  CHECK(u.back() == Approx(0.9));

  auto c = branch::clustered_grid(10, 50, 0.5, 0.01);
  CHECK(c.size() > 10);
  int inside = 0;
  for (double x : c)
    if (x >= 0.49 && x <= 0.51) ++inside;
  CHECK(inside >= 50);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] > c[i - 1]);

  CHECK_THROWS_AS(branch::uniform_grid(1), Error);
  CHECK_THROWS_AS(branch::uniform_grid(10, 0.0, 0.5), Error);
}
