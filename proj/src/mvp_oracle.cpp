#include "mvp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "common.hpp"
#include "disk_core.hpp"

namespace vpl::oracle {

double disk_entropy_of_energy(double E, double M, double area) {
  return disk::scaled_entropy(M, E, area);
}

namespace {

// ====== Fast unit-disk entropy lookup ======
//
// S_1(e) on a log-uniform energy grid, built once by walking the parametric
// u-representation (warm-started secant per node). Cubic interpolation keeps
// the table error far below the refinement resolution of grid_mvp.

struct DiskTable {
  static constexpr double kLogLo = -27.631021115928547;  // ln 1e-12
  static constexpr double kLogHi = 27.631021115928547;   // ln 1e12
  static constexpr int kNodes = 120001;
  std::vector<double> S;
  double dx;

  DiskTable() : S(kNodes) {
    dx = (kLogHi - kLogLo) / (kNodes - 1);
    long double u = disk::state_of_energy(std::exp((long double)kLogLo)).u;
    for (int j = 0; j < kNodes; ++j) {
      long double target = std::exp((long double)(kLogLo + j * dx));
      // Secant refinement of E(u) = target from the previous node's u.
      long double u0 = u, u1 = u - 1e-4L;
      long double f0 = disk::state_of_u(u0).energy - target;
      long double f1 = disk::state_of_u(u1).energy - target;
      bool ok = false;
      for (int it = 0; it < 60; ++it) {
        if (f1 == f0) break;
        long double u2 = u1 - f1 * (u1 - u0) / (f1 - f0);
        u0 = u1;
        f0 = f1;
        u1 = u2;
        f1 = disk::state_of_u(u1).energy - target;
        if (std::fabs(f1) <= 1e-17L * target) {
          ok = true;
          break;
        }
      }
      disk::UnitDiskState st = ok ? disk::state_of_u(u1) : disk::state_of_energy(target);
      u = st.u;
      S[j] = static_cast<double>(st.entropy);
    }
  }

  // S_1 at energy e; exact slow path outside the tabulated range.
  double operator()(double e) const {
    double x = std::log(e);
    if (x < kLogLo + dx || x > kLogHi - 2 * dx)
      return static_cast<double>(disk::state_of_energy(e).entropy);
    double s = (x - kLogLo) / dx;
    int j = static_cast<int>(s);
    j = std::min(std::max(j, 1), kNodes - 3);
    double t = s - j;
    double wm = -t * (t - 1) * (t - 2) / 6;
    double w0 = (t * t - 1) * (t - 2) / 2;
    double w1 = -t * (t + 1) * (t - 2) / 2;
    double w2 = t * (t * t - 1) / 6;
    return wm * S[j - 1] + w0 * S[j] + w1 * S[j + 1] + w2 * S[j + 2];
  }
};

const DiskTable& disk_table() {
  static const DiskTable table;
  return table;
}

// Component entropy via the lookup table: M S_1(E/M^2) - M ln M + M ln a.
double entropy_fast(double M, double E, double area) {
  return M * (disk_table()(E / (M * M)) - std::log(M) + std::log(area));
}

// ====== Exhaustive simplex search, N <= 3 ======

struct TiePos {
  int m1 = 0, k1 = 0, m2 = 0, k2 = 0;
};

// Per-component value table over the integer grid: w[m][k] with
// M = m/nM (m in 1..nM-1), E_i = E k/nE (k in 1..nE-1).
std::vector<double> build_table(double area, double E, int nM, int nE) {
  std::vector<double> w(static_cast<std::size_t>(nM + 1) * (nE + 1),
                        -std::numeric_limits<double>::infinity());
  for (int m = 1; m < nM; ++m)
    for (int k = 1; k < nE; ++k)
      w[static_cast<std::size_t>(m) * (nE + 1) + k] =
          entropy_fast(static_cast<double>(m) / nM, E * k / nE, area);
  return w;
}

struct RefineResult {
  double S;
  std::vector<double> M, E_i;
};

// Local continuous refinement around a feasible split: nested uniform grids
// over the free coordinates, window shrinking by 10x per round.
RefineResult refine_split(const branch::Domain& d, double E, std::vector<double> M,
                          std::vector<double> E_i, double hM, double hE,
                          const GridMvpOptions& opts) {
  const std::size_t N = d.size();
  const int P = opts.refine_points;
  const double mass_floor = 1e-9, energy_floor = 1e-12 * E;
  double best_S = 0;
  for (std::size_t i = 0; i < N; ++i) best_S += entropy_fast(M[i], E_i[i], d.area(i));

  double wM = 2 * hM, wE = 2 * hE;
  for (int round = 0; round < opts.refine_rounds; ++round) {
    if (N == 2) {
      double lo1 = std::max(M[0] - wM, mass_floor), hi1 = std::min(M[0] + wM, 1 - mass_floor);
      double loE = std::max(E_i[0] - wE, energy_floor), hiE = std::min(E_i[0] + wE, E - energy_floor);
      double bm = M[0], be = E_i[0];
      for (int a = 0; a < P; ++a) {
        double m1 = lo1 + (hi1 - lo1) * a / (P - 1);
        for (int b = 0; b < P; ++b) {
          double e1 = loE + (hiE - loE) * b / (P - 1);
          double S = entropy_fast(m1, e1, d.area(0)) + entropy_fast(1 - m1, E - e1, d.area(1));
          if (S > best_S) {
            best_S = S;
            bm = m1;
            be = e1;
          }
        }
      }
      M = {bm, 1 - bm};
      E_i = {be, E - be};
    } else {  // N == 3
      double lo1 = std::max(M[0] - wM, mass_floor), hi1 = std::min(M[0] + wM, 1 - 2 * mass_floor);
      double lo2 = std::max(M[1] - wM, mass_floor), hi2 = std::min(M[1] + wM, 1 - 2 * mass_floor);
      double lE1 = std::max(E_i[0] - wE, energy_floor), hE1 = std::min(E_i[0] + wE, E - 2 * energy_floor);
      double lE2 = std::max(E_i[1] - wE, energy_floor), hE2 = std::min(E_i[1] + wE, E - 2 * energy_floor);
      double bm1 = M[0], bm2 = M[1], be1 = E_i[0], be2 = E_i[1];
      for (int a = 0; a < P; ++a) {
        double m1 = lo1 + (hi1 - lo1) * a / (P - 1);
        for (int b = 0; b < P; ++b) {
          double m2 = lo2 + (hi2 - lo2) * b / (P - 1);
          double m3 = 1 - m1 - m2;
          if (m3 < mass_floor) continue;
          for (int cc = 0; cc < P; ++cc) {
            double e1 = lE1 + (hE1 - lE1) * cc / (P - 1);
            double s1 = entropy_fast(m1, e1, d.area(0));
            for (int dd = 0; dd < P; ++dd) {
              double e2 = lE2 + (hE2 - lE2) * dd / (P - 1);
              double e3 = E - e1 - e2;
              if (e3 < energy_floor) continue;
              double S = s1 + entropy_fast(m2, e2, d.area(1)) + entropy_fast(m3, e3, d.area(2));
              if (S > best_S) {
                best_S = S;
                bm1 = m1;
                bm2 = m2;
                be1 = e1;
                be2 = e2;
              }
            }
          }
        }
      }
      M = {bm1, bm2, 1 - bm1 - bm2};
      E_i = {be1, be2, E - be1 - be2};
    }
    wM /= 10;
    wE /= 10;
  }

  // Re-evaluate the winner exactly (table error is tiny but free to remove).
  double S_exact = 0;
  for (std::size_t i = 0; i < N; ++i) S_exact += disk::scaled_entropy(M[i], E_i[i], d.area(i));
  return {S_exact, std::move(M), std::move(E_i)};
}

GridMvpResult exhaustive_mvp(const branch::Domain& d, double E, const GridMvpOptions& opts) {
  const int nM = opts.mass_points, nE = opts.energy_points;
  const std::size_t N = d.size();
  GridMvpResult res;

  std::vector<double> M0, E0;
  if (N == 2) {
    std::vector<double> w1 = build_table(d.area(0), E, nM, nE);
    std::vector<double> w2 = build_table(d.area(1), E, nM, nE);
    double best = -std::numeric_limits<double>::infinity();
    int bm = 1, bk = 1;
    for (int m = 1; m < nM; ++m)
      for (int k = 1; k < nE; ++k) {
        double S = w1[static_cast<std::size_t>(m) * (nE + 1) + k] +
                   w2[static_cast<std::size_t>(nM - m) * (nE + 1) + (nE - k)];
        if (S > best) {
          best = S;
          bm = m;
          bk = k;
        }
      }
    M0 = {static_cast<double>(bm) / nM, static_cast<double>(nM - bm) / nM};
    E0 = {E * bk / nE, E * (nE - bk) / nE};
  } else {  // N == 3
    std::vector<double> w1 = build_table(d.area(0), E, nM, nE);
    std::vector<double> w2 = build_table(d.area(1), E, nM, nE);
    std::vector<double> w3 = build_table(d.area(2), E, nM, nE);
    // Max-plus convolution of components 1 and 2 with argmax backtracking.
    const std::size_t stride = nE + 1;
    std::vector<double> c12(static_cast<std::size_t>(nM + 1) * stride,
                            -std::numeric_limits<double>::infinity());
    std::vector<std::uint32_t> arg12(c12.size(), 0);
    for (int m = 2; m <= nM; ++m) {
      for (int k = 2; k <= nE; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t barg = 0;
        for (int m1 = 1; m1 < m; ++m1) {
          const double* row1 = &w1[static_cast<std::size_t>(m1) * stride];
          const double* row2 = &w2[static_cast<std::size_t>(m - m1) * stride];
          for (int k1 = 1; k1 < k; ++k1) {
            double v = row1[k1] + row2[k - k1];
            if (v > best) {
              best = v;
              barg = static_cast<std::uint32_t>(m1) << 16 | static_cast<std::uint32_t>(k1);
            }
          }
        }
        c12[static_cast<std::size_t>(m) * stride + k] = best;
        arg12[static_cast<std::size_t>(m) * stride + k] = barg;
      }
    }
    double best = -std::numeric_limits<double>::infinity();
    int bm3 = 1, bk3 = 1;
    for (int m3 = 1; m3 <= nM - 2; ++m3)
      for (int k3 = 1; k3 <= nE - 2; ++k3) {
        double v = c12[static_cast<std::size_t>(nM - m3) * stride + (nE - k3)] +
                   w3[static_cast<std::size_t>(m3) * stride + k3];
        if (v > best) {
          best = v;
          bm3 = m3;
          bk3 = k3;
        }
      }
    std::uint32_t packed = arg12[static_cast<std::size_t>(nM - bm3) * stride + (nE - bk3)];
    int m1 = static_cast<int>(packed >> 16), k1 = static_cast<int>(packed & 0xffffu);
    int m2 = nM - bm3 - m1, k2 = nE - bk3 - k1;
    M0 = {static_cast<double>(m1) / nM, static_cast<double>(m2) / nM,
          static_cast<double>(bm3) / nM};
    E0 = {E * k1 / nE, E * k2 / nE, E * bk3 / nE};
  }

  RefineResult ref = refine_split(d, E, M0, E0, 1.0 / nM, E / nE, opts);
  res.S = ref.S;
  res.M = std::move(ref.M);
  res.E_i = std::move(ref.E_i);
  return res;
}

// ====== Multi-start coordinate ascent, N > 3 ======

double total_entropy_fast(const branch::Domain& d, const std::vector<double>& M,
                          const std::vector<double>& E_i) {
  double S = 0;
  for (int i = 0; i < d.size(); ++i) S += entropy_fast(M[i], E_i[i], d.area(i));
  return S;
}

GridMvpResult multistart_mvp(const branch::Domain& d, double E, const GridMvpOptions& opts) {
  (void)opts;
  const std::size_t N = d.size();
  const double mass_floor = 1e-9, energy_floor = 1e-12 * E;

  double area_sum = d.total_area();
  double area_sq = 0;
  for (std::size_t i = 0; i < N; ++i) area_sq += d.area(i) * d.area(i);

  std::vector<std::pair<std::vector<double>, std::vector<double>>> starts;
  {
    std::vector<double> Mu(N, 1.0 / N), Eu(N, E / N);
    starts.push_back({Mu, Eu});
    std::vector<double> Ma(N), Ea(N);
    for (std::size_t i = 0; i < N; ++i) {
      Ma[i] = d.area(i) / area_sum;
      Ea[i] = E * d.area(i) * d.area(i) / area_sq;
    }
    starts.push_back({Ma, Ea});
    for (std::size_t lead = 0; lead < std::min<std::size_t>(N, 4); ++lead) {
      std::vector<double> Mc(N, 0.1 / (N - 1)), Ec(N, 0.1 * E / (N - 1));
      Mc[lead] = 0.9;
      Ec[lead] = 0.9 * E;
      starts.push_back({Mc, Ec});
    }
  }

  double best_S = -std::numeric_limits<double>::infinity();
  std::vector<double> best_M, best_E;
  for (auto& [M, E_i] : starts) {
    double S = total_entropy_fast(d, M, E_i);
    for (int sweep = 0; sweep < 60; ++sweep) {
      double S_before = S;
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j) {
          // Mass transfer i -> j.
          {
            double lo = -(M[i] - mass_floor), hi = M[j] - mass_floor;
            if (hi - lo > 1e-12) {
              auto f = [&](double t) {
                return entropy_fast(M[i] + t, E_i[i], d.area(i)) +
                       entropy_fast(M[j] - t, E_i[j], d.area(j));
              };
              auto ext = golden_extremum<double>(f, lo, hi, true, 1e-14, 1e-12);
              double base = f(0);
              if (ext.fx > base) {
                M[i] += ext.x;
                M[j] -= ext.x;
                S += ext.fx - base;
              }
            }
          }
          // Energy transfer i -> j.
          {
            double lo = -(E_i[i] - energy_floor), hi = E_i[j] - energy_floor;
            if (hi - lo > 1e-12 * E) {
              auto f = [&](double t) {
                return entropy_fast(M[i], E_i[i] + t, d.area(i)) +
                       entropy_fast(M[j], E_i[j] - t, d.area(j));
              };
              auto ext = golden_extremum<double>(f, lo, hi, true, 1e-14, 1e-12);
              double base = f(0);
              if (ext.fx > base) {
                E_i[i] += ext.x;
                E_i[j] -= ext.x;
                S += ext.fx - base;
              }
            }
          }
        }
      if (S - S_before <= 1e-13 * std::max(1.0, std::fabs(S))) break;
    }
    if (S > best_S) {
      best_S = S;
      best_M = M;
      best_E = E_i;
    }
  }

  GridMvpResult res;
  res.exhaustive = false;
  res.M = std::move(best_M);
  res.E_i = std::move(best_E);
  res.S = 0;
  for (std::size_t i = 0; i < N; ++i) res.S += disk::scaled_entropy(res.M[i], res.E_i[i], d.area(i));
  return res;
}

}  // namespace

GridMvpResult grid_mvp(const branch::Domain& d, double E, const GridMvpOptions& opts) {
  if (!(E > 0)) throw Error(ErrorKind::invalid_argument, "grid_mvp: energy must be positive");
  if (!d.all_round())
    throw Error(ErrorKind::invalid_argument, "grid_mvp: deformed components are not supported");
  if (opts.mass_points < 3 || opts.energy_points < 3 || opts.refine_points < 3)
    throw Error(ErrorKind::invalid_argument, "grid_mvp: grids too coarse");

  const std::size_t N = d.size();
  GridMvpResult res;
  if (N == 1) {
    res.S = disk::scaled_entropy(1.0, E, d.area(0));
    res.M = {1.0};
    res.E_i = {E};
  } else if (N <= 3) {
    res = exhaustive_mvp(d, E, opts);
  } else if (opts.exhaustive_only) {
    throw Error(ErrorKind::invalid_argument,
                "grid_mvp: exhaustive search is limited to 3 components; use the "
                "branch-based entropy envelope for larger domains");
  } else {
    res = multistart_mvp(d, E, opts);
  }

  res.beta_hat.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    double delta = 1e-6 * res.E_i[i];
    res.beta_hat[i] = (disk::scaled_entropy(res.M[i], res.E_i[i] + delta, d.area(i)) -
                       disk::scaled_entropy(res.M[i], res.E_i[i] - delta, d.area(i))) /
                      (2 * delta);
  }
  return res;
}

// ====== Radial finite-difference oracle ======

namespace {

// Gaussian elimination with partial pivoting for the arrow system
// (tridiagonal + dense last column + dense last row), augmented with the
// right-hand side. Row storage: band diag/upper1/upper2 + border column.
struct ArrowSystem {
  int n;  // band rows (the dense row is row n, unknown n is the border)
  std::vector<long double> sub, diag, up1, up2, col, rhs;
  std::vector<long double> last;  // dense last row, length n + 1
  long double last_rhs = 0;

  explicit ArrowSystem(int n_)
      : n(n_), sub(n_, 0), diag(n_, 0), up1(n_, 0), up2(n_, 0), col(n_, 0), rhs(n_, 0),
        last(n_ + 1, 0) {}

  // Solves in place; returns the solution (size n + 1). Columns 0..n-2 are
  // eliminated with band pivoting (rows i and i+1 only; the sub-diagonal of
  // our Jacobians never vanishes, so a pivot always exists); the final
  // (psi_{n-1}, Z) pair is solved as a full 2x2 block, which stays regular
  // at the lambda-fold where the tridiagonal block alone goes singular.
  std::vector<long double> solve() {
    for (int i = 0; i + 1 < n; ++i) {
      if (std::fabs(sub[i + 1]) > std::fabs(diag[i])) {
        std::swap(diag[i], sub[i + 1]);
        long double t;
        t = up1[i]; up1[i] = diag[i + 1]; diag[i + 1] = t;
        t = up2[i]; up2[i] = up1[i + 1]; up1[i + 1] = t;
        t = col[i]; col[i] = col[i + 1]; col[i + 1] = t;
        t = rhs[i]; rhs[i] = rhs[i + 1]; rhs[i + 1] = t;
      }
      if (diag[i] == 0.0L) throw Error(ErrorKind::no_convergence, "arrow solve: zero pivot");
      long double f = sub[i + 1] / diag[i];
      if (f != 0.0L) {
        diag[i + 1] -= f * up1[i];
        up1[i + 1] -= f * up2[i];
        col[i + 1] -= f * col[i];
        rhs[i + 1] -= f * rhs[i];
        sub[i + 1] = 0;
      }
      long double g = last[i] / diag[i];
      if (g != 0.0L) {
        last[i + 1] -= g * up1[i];
        if (i + 2 < n) last[i + 2] -= g * up2[i];
        last[n] -= g * col[i];
        last_rhs -= g * rhs[i];
        last[i] = 0;
      }
    }
    long double a11 = diag[n - 1], a12 = col[n - 1], b1 = rhs[n - 1];
    long double a21 = last[n - 1], a22 = last[n], b2 = last_rhs;
    long double det = a11 * a22 - a12 * a21;
    long double scale = std::fabs(a11) * std::fabs(a22) + std::fabs(a12) * std::fabs(a21);
    if (!(std::fabs(det) > 1e-30L * (scale + 1e-300L)))
      throw Error(ErrorKind::no_convergence, "arrow solve: singular tail block");
    std::vector<long double> x(n + 1);
    x[n - 1] = (b1 * a22 - a12 * b2) / det;
    x[n] = (a11 * b2 - a21 * b1) / det;
    for (int i = n - 2; i >= 0; --i) {
      long double v = rhs[i] - col[i] * x[n] - up1[i] * x[i + 1];
      if (i + 2 < n) v -= up2[i] * x[i + 2];
      x[i] = v / diag[i];
    }
    return x;
  }
};

struct RadialState {
  std::vector<long double> psi;  // interior nodes 0..n-1 (node n pinned to 0)
  long double Z;
};

// One Newton solve at fixed beta from the given state; returns iterations.
int radial_newton(long double beta, long double R, int n, RadialState& st, long double tol,
                  int max_iter) {
  const long double h = R / n;
  auto residual = [&](const RadialState& s, std::vector<long double>& F, long double& FZ) {
    long double Q = 0;  // trapezoid of exp(-beta psi) r dr; r=0 contributes 0
    for (int i = 1; i < n; ++i) Q += std::exp(-beta * s.psi[i]) * (i * h) * h;
    Q += 0.5L * R * h;  // boundary node, psi = 0
    FZ = (2.0L * kPi / s.Z) * Q - 1.0L;
    for (int i = 0; i < n; ++i) {
      long double rho = std::exp(-beta * s.psi[i]) / s.Z;
      long double lap;
      if (i == 0) {
        lap = 4.0L * (s.psi[1] - s.psi[0]) / (h * h);
      } else {
        long double up = i + 1 < n ? s.psi[i + 1] : 0.0L;
        lap = (up - 2.0L * s.psi[i] + s.psi[i - 1]) / (h * h) +
              (up - s.psi[i - 1]) / (2.0L * i * h * h);
      }
      F[i] = lap + rho;
    }
  };

  std::vector<long double> F(n);
  long double FZ;
  residual(st, F, FZ);
  auto norm = [&](const std::vector<long double>& v, long double s) {
    long double m = std::fabs(s);
    for (long double x : v) m = std::max(m, std::fabs(x));
    return m;
  };

  for (int it = 1; it <= max_iter; ++it) {
    long double fn = norm(F, FZ);
    // Roundoff floor of the residual scales like |psi| eps / h^2.
    long double psi_max = 0;
    for (long double p : st.psi) psi_max = std::max(psi_max, std::fabs(p));
    long double floor_res = 64.0L * 1e-19L * (psi_max + 1.0L) / (h * h);
    if (fn <= std::max(tol, floor_res)) return it - 1;

    ArrowSystem sys(n);
    long double Q = 0;
    for (int i = 0; i < n; ++i) {
      long double w = std::exp(-beta * st.psi[i]);
      long double rho = w / st.Z;
      if (i == 0) {
        sys.diag[0] = -4.0L / (h * h) - beta * rho;
        sys.up1[0] = 4.0L / (h * h);
      } else {
        long double inv = 1.0L / (h * h);
        long double half = 1.0L / (2.0L * i * h * h);
        sys.sub[i] = inv - half;
        sys.diag[i] = -2.0L * inv - beta * rho;
        if (i + 1 < n) sys.up1[i] = inv + half;
      }
      sys.col[i] = -w / (st.Z * st.Z);
      if (i >= 1) {
        sys.last[i] = (2.0L * kPi / st.Z) * (-beta) * w * (i * h) * h;
        Q += w * (i * h) * h;
      }
      sys.rhs[i] = -F[i];
    }
    Q += 0.5L * R * h;
    sys.last[n] = -(2.0L * kPi / (st.Z * st.Z)) * Q;
    sys.last_rhs = -FZ;

    std::vector<long double> delta = sys.solve();

    long double step = 1.0L;
    for (int back = 0; back < 10; ++back) {
      RadialState trial;
      trial.psi.resize(n);
      for (int i = 0; i < n; ++i) trial.psi[i] = st.psi[i] + step * delta[i];
      trial.Z = st.Z + step * delta[n];
      if (trial.Z > 0) {
        std::vector<long double> Ft(n);
        long double FZt;
        residual(trial, Ft, FZt);
        if (norm(Ft, FZt) < fn || step < 0.02L) {
          st = std::move(trial);
          F = std::move(Ft);
          FZ = FZt;
          break;
        }
      }
      step *= 0.5L;
    }
  }
  throw Error(ErrorKind::no_convergence, "radial solve: Newton did not converge");
}

}  // namespace

RadialSolution radial_mfe_solve(double beta, double area, const RadialSolveOptions& opts) {
  if (!(area > 0)) throw Error(ErrorKind::invalid_argument, "radial solve: area must be positive");
  if (!(beta > -8 * kPi))
    throw Error(ErrorKind::invalid_argument, "radial solve: beta must exceed -8*pi");
  if (opts.nodes < 16) throw Error(ErrorKind::invalid_argument, "radial solve: too few nodes");

  const int n = opts.nodes;
  const long double R = std::sqrt((long double)area / kPi);
  const long double h = R / n;

  RadialState st;
  st.psi.assign(n, 0.0L);
  st.Z = area;

  // Walk beta from 0 to the target in unit-pi steps, re-solving each time;
  // every intermediate problem is well inside Newton's basin from the
  // previous solution.
  int total_its = 0;
  long double target = beta;
  int steps = std::max(1, (int)std::ceil(std::fabs((double)target) / kPi));
  for (int s = 1; s <= steps; ++s) {
    long double b = target * s / steps;
    total_its += radial_newton(b, R, n, st, (long double)opts.tolerance, opts.max_iterations);
  }

  RadialSolution out;
  out.beta = beta;
  out.iterations = total_its;
  out.Z = static_cast<double>(st.Z);
  out.r.resize(n + 1);
  out.psi.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    out.r[i] = static_cast<double>(i * h);
    out.psi[i] = i < n ? static_cast<double>(st.psi[i]) : 0.0;
  }

  // E = pi * int (psi')^2 r dr via edge midpoints, plus the virial form
  // (1/2) int psi rho as an independent cross-check.
  KahanSum<long double> grad, virial;
  for (int i = 0; i < n; ++i) {
    long double up = i + 1 < n ? st.psi[i + 1] : 0.0L;
    long double slope = (up - st.psi[i]) / h;
    grad.add(slope * slope * ((i + 0.5L) * h) * h);
  }
  for (int i = 1; i < n; ++i)
    virial.add(st.psi[i] * std::exp(-((long double)beta) * st.psi[i]) * (i * h) * h);
  out.E = static_cast<double>(kPi * grad.value());
  out.E_virial = static_cast<double>(kPi * virial.value() / st.Z);
  return out;
}

}  // namespace vpl::oracle
