#include "pde_lab.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace vpl::pde {
namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

constexpr double kPiD = static_cast<double>(kPi);

double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::string fmt_e(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// ====== Geometry ======

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  double vx = bx - ax, vy = by - ay;
  double wx = px - ax, wy = py - ay;
  double vv = vx * vx + vy * vy;
  double t = vv > 0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
  double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

double signed_distance(const GeometrySpec& g, double x, double y) {
  double s = std::numeric_limits<double>::infinity();
  for (const auto& d : g.disks) {
    double dx = x - d.cx, dy = y - d.cy;
    s = std::min(s, std::sqrt(dx * dx + dy * dy) - d.r);
  }
  for (const auto& c : g.channels) {
    const auto& a = g.disks[static_cast<std::size_t>(c.i)];
    const auto& b = g.disks[static_cast<std::size_t>(c.j)];
    s = std::min(s, segment_distance(x, y, a.cx, a.cy, b.cx, b.cy) - 0.5 * c.width);
  }
  return s;
}

double Mesh::area() const {
  KahanSum<double> a;
  for (double w : weight) a.add(w);
  return a.value();
}

// ====== Rasterization ======

namespace {

// Fraction of the grid arm from an interior node to the wall, by bisection on
// the signed distance along the arm. The result is clamped away from zero so
// a node grazing the boundary cannot blow up the stencil.
double arm_fraction(const GeometrySpec& g, double x, double y, double dx, double dy) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 48; ++it) {
    double mid = 0.5 * (lo + hi);
    if (signed_distance(g, x + mid * dx, y + mid * dy) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return std::clamp(0.5 * (lo + hi), 0.01, 1.0);
}

// Quadrature weight of a node: the area of its h-by-h cell clipped against the
// wall. Corners are classified by signed distance, crossings are placed by
// linear interpolation along the cell edges, and the clipped polygon area
// comes from the shoelace formula. Exact for straight walls through the cell,
// one chord per cell otherwise, so the total boundary area error is O(h^2)
// without the parity oscillation a rectangle model shows on curved walls.
double cell_weight(const GeometrySpec& g, double x, double y, double h) {
  const double cx[4] = {x - 0.5 * h, x + 0.5 * h, x + 0.5 * h, x - 0.5 * h};
  const double cy[4] = {y - 0.5 * h, y - 0.5 * h, y + 0.5 * h, y + 0.5 * h};
  double s[4];
  bool all_in = true;
  for (int c = 0; c < 4; ++c) {
    s[c] = signed_distance(g, cx[c], cy[c]);
    all_in = all_in && s[c] < 0.0;
  }
  if (all_in) return h * h;
  double px[8], py[8];
  int n = 0;
  for (int c = 0; c < 4; ++c) {
    int d = (c + 1) & 3;
    if (s[c] < 0.0) {
      px[n] = cx[c];
      py[n] = cy[c];
      ++n;
    }
    if ((s[c] < 0.0) != (s[d] < 0.0)) {
      double t = s[c] / (s[c] - s[d]);
      px[n] = cx[c] + t * (cx[d] - cx[c]);
      py[n] = cy[c] + t * (cy[d] - cy[c]);
      ++n;
    }
  }
  if (n < 3) return 0.0;  // cell-wall intersection below corner resolution
  double twice = 0.0;
  for (int c = 0; c < n; ++c) {
    int d = (c + 1) % n;
    twice += px[c] * py[d] - px[d] * py[c];
  }
  return 0.5 * std::fabs(twice);
}

}  // namespace

Mesh rasterize(const GeometrySpec& g, double h) {
  if (!(h > 0.0) || h > 0.25)
    throw Error(ErrorKind::invalid_argument, "rasterize: spacing must lie in (0, 0.25]");
  if (g.disks.empty()) throw Error(ErrorKind::invalid_argument, "rasterize: no disks given");
  for (const auto& d : g.disks)
    if (!(d.r > 0.0)) throw Error(ErrorKind::invalid_argument, "rasterize: disk radius must be positive");
  int nd = static_cast<int>(g.disks.size());
  for (const auto& c : g.channels) {
    if (c.i < 0 || c.j < 0 || c.i >= nd || c.j >= nd || c.i == c.j)
      throw Error(ErrorKind::invalid_argument, "rasterize: channel joins unknown disks");
    if (!(c.width > 0.0))
      throw Error(ErrorKind::invalid_argument, "rasterize: channel width must be positive");
    if (c.width < 2.0 * h)
      throw Error(ErrorKind::invalid_argument,
                  "rasterize: channel width " + std::to_string(c.width) +
                      " is thinner than two cells at spacing " + std::to_string(h));
  }
  if (g.conformal_eps < 0.0 || g.conformal_eps > 0.15)
    throw Error(ErrorKind::invalid_argument, "rasterize: conformal amplitude must lie in [0, 0.15]");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = xmax;
  for (const auto& d : g.disks) {
    xmin = std::min(xmin, d.cx - d.r);
    xmax = std::max(xmax, d.cx + d.r);
    ymin = std::min(ymin, d.cy - d.r);
    ymax = std::max(ymax, d.cy + d.r);
  }
  for (const auto& c : g.channels) {
    for (int e : {c.i, c.j}) {
      const auto& d = g.disks[static_cast<std::size_t>(e)];
      xmin = std::min(xmin, d.cx - 0.5 * c.width);
      xmax = std::max(xmax, d.cx + 0.5 * c.width);
      ymin = std::min(ymin, d.cy - 0.5 * c.width);
      ymax = std::max(ymax, d.cy + 0.5 * c.width);
    }
  }

  Mesh m;
  m.h = h;
  // Snap the origin to the global lattice so equal geometries mesh equally
  // regardless of how the bounding box was reached.
  m.x0 = (std::floor(xmin / h) - 2.0) * h;
  m.y0 = (std::floor(ymin / h) - 2.0) * h;
  m.nx = static_cast<int>(std::ceil((xmax - m.x0) / h)) + 3;
  m.ny = static_cast<int>(std::ceil((ymax - m.y0) / h)) + 3;
  m.index.assign(static_cast<std::size_t>(m.nx) * m.ny, -1);

  for (int j = 0; j < m.ny; ++j) {
    double yj = m.y0 + j * h;
    for (int i = 0; i < m.nx; ++i) {
      double xi = m.x0 + i * h;
      if (signed_distance(g, xi, yj) < 0.0) {
        m.index[static_cast<std::size_t>(j) * m.nx + i] = m.size();
        m.x.push_back(xi);
        m.y.push_back(yj);
      }
    }
  }
  int n = m.size();
  if (n < 8) throw Error(ErrorKind::invalid_argument, "rasterize: interior has fewer than 8 nodes");

  // Flood fill over 4-neighbors: a geometry that claims to be connected must
  // rasterize to one component.
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  auto coords = [&](int k) {
    // Recover (i, j) from the coordinates; cheaper than storing both maps.
    int i = static_cast<int>(std::lround((m.x[static_cast<std::size_t>(k)] - m.x0) / h));
    int j = static_cast<int>(std::lround((m.y[static_cast<std::size_t>(k)] - m.y0) / h));
    return std::pair<int, int>{i, j};
  };
  while (!stack.empty()) {
    int k = stack.back();
    stack.pop_back();
    auto [i, j] = coords(k);
    for (auto [di, dj] : {std::pair<int, int>{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      int nb = m.at(i + di, j + dj);
      if (nb >= 0 && !seen[static_cast<std::size_t>(nb)]) {
        seen[static_cast<std::size_t>(nb)] = 1;
        stack.push_back(nb);
        ++reached;
      }
    }
  }
  if (reached != n && g.connected_expected)
    throw Error(ErrorKind::invalid_argument,
                "rasterize: interior is disconnected at spacing " + std::to_string(h));

  m.arm.resize(static_cast<std::size_t>(n));
  m.weight.resize(static_cast<std::size_t>(n));
  m.jac.resize(static_cast<std::size_t>(n));
  const double eps = g.conformal_eps;
  for (int k = 0; k < n; ++k) {
    auto [i, j] = coords(k);
    double xk = m.x[static_cast<std::size_t>(k)], yk = m.y[static_cast<std::size_t>(k)];
    std::array<double, 4> a;
    const std::array<std::array<int, 2>, 4> dirs{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (int d = 0; d < 4; ++d) {
      int nb = m.at(i + dirs[static_cast<std::size_t>(d)][0], j + dirs[static_cast<std::size_t>(d)][1]);
      if (nb >= 0) {
        a[static_cast<std::size_t>(d)] = 1.0;
      } else {
        a[static_cast<std::size_t>(d)] = arm_fraction(g, xk, yk, h * dirs[static_cast<std::size_t>(d)][0],
                                                      h * dirs[static_cast<std::size_t>(d)][1]);
      }
    }
    m.arm[static_cast<std::size_t>(k)] = a;
    m.weight[static_cast<std::size_t>(k)] = cell_weight(g, xk, yk, h);
  }
  // The interior-node cells alone miss the domain band whose nearest lattice
  // node lies outside (the wall can sit up to a full spacing past the last
  // node). Every exterior cell that still intersects the domain donates its
  // clipped area to an adjacent interior node: the cells then tile the domain
  // to chord accuracy, and evaluating the integrand one node away from the
  // donated sliver is an O(h) error on an O(h) total area.
  for (int j = 0; j < m.ny; ++j) {
    for (int i = 0; i < m.nx; ++i) {
      if (m.at(i, j) >= 0) continue;
      int target = -1;
      for (auto [di, dj] : {std::pair<int, int>{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                            {-1, -1}, {-1, 1}, {1, -1}, {1, 1}}) {
        target = m.at(i + di, j + dj);
        if (target >= 0) break;
      }
      if (target < 0) continue;
      double A = cell_weight(g, m.x0 + i * h, m.y0 + j * h, h);
      if (A > 0.0) m.weight[static_cast<std::size_t>(target)] += A;
    }
  }
  for (int k = 0; k < n; ++k) {
    double xk = m.x[static_cast<std::size_t>(k)], yk = m.y[static_cast<std::size_t>(k)];
    double r2 = xk * xk + yk * yk;
    m.jac[static_cast<std::size_t>(k)] =
        eps == 0.0 ? 1.0 : 1.0 + 6.0 * eps * (xk * xk - yk * yk) + 9.0 * eps * eps * r2 * r2;
  }
  return m;
}

// ====== Discrete operator and quadratures ======

namespace {

// Negative Laplacian with Shortley-Weller boundary arms; Dirichlet walls
// contribute nothing (the arm value is zero).
SpMat laplacian(const Mesh& m) {
  int n = m.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  double h = m.h;
  for (int k = 0; k < n; ++k) {
    int i = static_cast<int>(std::lround((m.x[static_cast<std::size_t>(k)] - m.x0) / h));
    int j = static_cast<int>(std::lround((m.y[static_cast<std::size_t>(k)] - m.y0) / h));
    const auto& a = m.arm[static_cast<std::size_t>(k)];
    double hW = a[0] * h, hE = a[1] * h, hS = a[2] * h, hN = a[3] * h;
    trip.emplace_back(k, k, 2.0 / (hW * hE) + 2.0 / (hS * hN));
    int nb = m.at(i - 1, j);
    if (nb >= 0) trip.emplace_back(k, nb, -2.0 / (hW * (hW + hE)));
    nb = m.at(i + 1, j);
    if (nb >= 0) trip.emplace_back(k, nb, -2.0 / (hE * (hW + hE)));
    nb = m.at(i, j - 1);
    if (nb >= 0) trip.emplace_back(k, nb, -2.0 / (hS * (hS + hN)));
    nb = m.at(i, j + 1);
    if (nb >= 0) trip.emplace_back(k, nb, -2.0 / (hN * (hS + hN)));
  }
  SpMat A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

Vec weighted_exp(const Mesh& m, const Vec& U) {
  int n = m.size();
  Vec c(n);
  for (int k = 0; k < n; ++k) c[k] = m.jac[static_cast<std::size_t>(k)] * std::exp(U[k]);
  return c;
}

// Edge-based Dirichlet energy: each interior edge once, boundary arms once,
// gradient over the true arm length against the edge's strip area.
double dirichlet_energy(const Mesh& m, const Vec& U) {
  KahanSum<double> D;
  double h = m.h;
  int n = m.size();
  for (int k = 0; k < n; ++k) {
    int i = static_cast<int>(std::lround((m.x[static_cast<std::size_t>(k)] - m.x0) / h));
    int j = static_cast<int>(std::lround((m.y[static_cast<std::size_t>(k)] - m.y0) / h));
    const auto& a = m.arm[static_cast<std::size_t>(k)];
    int nE = m.at(i + 1, j);
    double dE = (nE >= 0 ? U[nE] : 0.0) - U[k];
    D.add(dE * dE / a[1]);
    int nN = m.at(i, j + 1);
    double dN = (nN >= 0 ? U[nN] : 0.0) - U[k];
    D.add(dN * dN / a[3]);
    if (m.at(i - 1, j) < 0) D.add(U[k] * U[k] / a[0]);
    if (m.at(i, j - 1) < 0) D.add(U[k] * U[k] / a[2]);
  }
  return D.value();
}

PDESolution finish(const Mesh& m, double lambda, const Vec& U, int iters, double residual,
                   std::string tag) {
  PDESolution s;
  s.lambda = lambda;
  s.U.assign(U.data(), U.data() + U.size());
  KahanSum<double> Zs, UJe;
  for (int k = 0; k < m.size(); ++k) {
    double t = m.weight[static_cast<std::size_t>(k)] * m.jac[static_cast<std::size_t>(k)] *
               std::exp(U[k]);
    Zs.add(t);
    UJe.add(U[k] * t);
  }
  s.Z = Zs.value();
  s.beta = -lambda * s.Z;
  s.E = UJe.value() / (2.0 * lambda * s.Z * s.Z);
  s.E_alt = dirichlet_energy(m, U) / (2.0 * lambda * lambda * s.Z * s.Z);
  s.S = std::log(s.Z) + 2.0 * s.beta * s.E;
  s.residual = residual;
  s.newton_iterations = iters;
  s.tag = std::move(tag);
  return s;
}

// ====== Linear algebra: bordered operator, ILUT block preconditioner, GMRES ======

// Wall-cut stencil rows are orders of magnitude heavier than interior rows,
// which stalls restarted GMRES; every linear solve therefore runs on
// diag(A)^{-1}-scaled rows. The unscaled operator stays around for the true
// Newton residuals.
struct ScaledSystem {
  SpMat A;   // negative Laplacian
  SpMat As;  // diag(A)^{-1} * A
  Vec s;     // the row scales

  explicit ScaledSystem(SpMat lap) : A(std::move(lap)) {
    s = A.diagonal().cwiseInverse();
    As = s.asDiagonal() * A;
    As.makeCompressed();
  }
};

// (A - diag(shift)) on the leading block, optionally closed by a border
// column/row and corner for the scalar unknown of a normalized or
// arclength-constrained Newton system.
struct BorderedOp {
  const SpMat& A;
  const Vec& shift;
  const Vec* col = nullptr;
  const Vec* row = nullptr;
  double corner = 0;
  int n() const { return static_cast<int>(A.rows()); }
  int size() const { return n() + (col ? 1 : 0); }
  Vec apply(const Vec& v) const {
    Vec w(size());
    w.head(n()) = A * v.head(n()) - shift.cwiseProduct(v.head(n()));
    if (col) {
      w.head(n()) += (*col) * v[n()];
      w[n()] = row->dot(v.head(n())) + corner * v[n()];
    }
    return w;
  }
};

// Incomplete LU of the leading block; the border unknown passes through with
// a fixed scale. Rebuilt lazily when the iterate has drifted far enough for
// GMRES to slow down.
struct BlockPrecon {
  Eigen::IncompleteLUT<double> ilut;
  bool ready = false;
  double corner_scale = 1.0;

  void build(const SpMat& A, const Vec& shift, double corner) {
    SpMat J = A;
    for (int k = 0; k < J.outerSize(); ++k)
      for (SpMat::InnerIterator it(J, k); it; ++it)
        if (it.row() == it.col()) it.valueRef() -= shift[it.row()];
    ilut.setDroptol(1e-4);
    ilut.setFillfactor(10);
    ilut.compute(J);
    ready = ilut.info() == Eigen::Success;
    if (!ready) {
      // A grazing fold can make the block factorization break down; a small
      // diagonal lift keeps the preconditioner usable (GMRES still solves
      // the exact system).
      double emergency = 1e-8 * A.coeffs().cwiseAbs().maxCoeff();
      SpMat Jl = J;
      for (int k = 0; k < Jl.outerSize(); ++k)
        for (SpMat::InnerIterator it(Jl, k); it; ++it)
          if (it.row() == it.col()) it.valueRef() += emergency;
      ilut.compute(Jl);
      ready = ilut.info() == Eigen::Success;
    }
    corner_scale = std::max(1.0, std::fabs(corner));
  }

  Vec solve(const BorderedOp& op, const Vec& v) const {
    Vec z(v.size());
    if (ready)
      z.head(op.n()) = ilut.solve(v.head(op.n()));
    else
      z.head(op.n()) = v.head(op.n());
    if (op.col) z[op.n()] = v[op.n()] / corner_scale;
    return z;
  }
};

struct GmresResult {
  int iterations = 0;
  bool converged = false;
  double residual = 0;
};

// Right-preconditioned restarted GMRES with modified Gram-Schmidt and Givens
// updates. Solves op(x) = b in place; x holds the initial guess.
GmresResult gmres(const BorderedOp& op, const BlockPrecon& M, const Vec& b, Vec& x,
                  double rel_tol, int restart, int max_iterations) {
  GmresResult out;
  double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero(op.size());
    out.converged = true;
    return out;
  }
  while (true) {
    Vec r = b - op.apply(x);
    double beta = r.norm();
    out.residual = beta / bnorm;
    if (out.residual <= rel_tol) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= max_iterations) return out;
    int mkrylov = std::min(restart, max_iterations - out.iterations);
    std::vector<Vec> V;
    V.reserve(static_cast<std::size_t>(mkrylov) + 1);
    V.push_back(r / beta);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(mkrylov + 1, mkrylov);
    std::vector<double> cs(static_cast<std::size_t>(mkrylov)), sn(static_cast<std::size_t>(mkrylov));
    Vec g = Vec::Zero(mkrylov + 1);
    g[0] = beta;
    int j = 0;
    bool breakdown = false;
    for (; j < mkrylov; ++j) {
      Vec w = op.apply(M.solve(op, V[static_cast<std::size_t>(j)]));
      for (int i = 0; i <= j; ++i) {
        H(i, j) = w.dot(V[static_cast<std::size_t>(i)]);
        w -= H(i, j) * V[static_cast<std::size_t>(i)];
      }
      H(j + 1, j) = w.norm();
      ++out.iterations;
      if (H(j + 1, j) > 0.0)
        V.push_back(w / H(j + 1, j));
      else
        breakdown = true;
      for (int i = 0; i < j; ++i) {
        double t = cs[static_cast<std::size_t>(i)] * H(i, j) + sn[static_cast<std::size_t>(i)] * H(i + 1, j);
        H(i + 1, j) = -sn[static_cast<std::size_t>(i)] * H(i, j) +
                      cs[static_cast<std::size_t>(i)] * H(i + 1, j);
        H(i, j) = t;
      }
      double denom = std::hypot(H(j, j), H(j + 1, j));
      if (denom == 0.0) {
        cs[static_cast<std::size_t>(j)] = 1.0;
        sn[static_cast<std::size_t>(j)] = 0.0;
      } else {
        cs[static_cast<std::size_t>(j)] = H(j, j) / denom;
        sn[static_cast<std::size_t>(j)] = H(j + 1, j) / denom;
      }
      H(j, j) = denom;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[static_cast<std::size_t>(j)] * g[j];
      g[j] = cs[static_cast<std::size_t>(j)] * g[j];
      if (std::fabs(g[j + 1]) <= rel_tol * bnorm || breakdown) {
        ++j;
        break;
      }
    }
    // Back-substitution on the j-by-j triangle, then update through the
    // preconditioner (right preconditioning keeps the true residual).
    Vec y = Vec::Zero(j);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int l = i + 1; l < j; ++l) s -= H(i, l) * y[l];
      y[i] = H(i, i) != 0.0 ? s / H(i, i) : 0.0;
    }
    Vec corr = Vec::Zero(op.size());
    for (int i = 0; i < j; ++i) corr += y[i] * V[static_cast<std::size_t>(i)];
    x += M.solve(op, corr);
    if (breakdown) {
      Vec rf = b - op.apply(x);
      out.residual = rf.norm() / bnorm;
      out.converged = out.residual <= rel_tol;
      return out;
    }
  }
}

// ====== Newton drivers ======

struct NewtonState {
  Vec U;
  double residual = 0;
  int iterations = 0;
  bool ok = false;
  std::string note;
};

// Shared preconditioner policy: factor at first use, refresh once the
// iterate drifts (the diagonal of the Jacobian moves like e^U) or when GMRES
// visibly struggles.
struct PreconKit {
  BlockPrecon M;
  Vec U_at_build;
  bool has = false;

  void ensure(const SpMat& A, const Vec& shift, double corner, const Vec& U) {
    if (!has || sup_norm(U - U_at_build) > 0.4) {
      M.build(A, shift, corner);
      U_at_build = U;
      has = true;
    }
  }
  void force(const SpMat& A, const Vec& shift, double corner, const Vec& U) {
    M.build(A, shift, corner);
    U_at_build = U;
    has = true;
  }
};

// Last-resort linear solve: assemble the bordered matrix and factor it
// exactly. Near a fold the block is almost singular and the incomplete
// factorization can defeat GMRES outright; the bordered system itself stays
// regular there, so a full sparse LU always produces a usable direction. Too
// expensive for the common path, cheap as a rescue.
Vec direct_solve(const BorderedOp& op, const Vec& b, bool& ok) {
  int n = op.n();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(op.A.nonZeros()) + 2 * static_cast<std::size_t>(n) + 1);
  for (int k = 0; k < op.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.A, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value() - (it.row() == it.col() ? op.shift[it.row()] : 0.0));
  if (op.col) {
    for (int i = 0; i < n; ++i) {
      if ((*op.col)[i] != 0.0) trip.emplace_back(i, n, (*op.col)[i]);
      if ((*op.row)[i] != 0.0) trip.emplace_back(n, i, (*op.row)[i]);
    }
    trip.emplace_back(n, n, op.corner);
  }
  SpMat M(op.size(), op.size());
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(M);
  ok = lu.info() == Eigen::Success;
  return ok ? Vec(lu.solve(b)) : Vec(Vec::Zero(op.size()));
}

NewtonState newton_lambda(const Mesh& m, const ScaledSystem& sys, double lambda, Vec U,
                          const SolveOptions& o) {
  int n = m.size();
  NewtonState st;
  auto resid = [&](const Vec& u) -> Vec { return sys.A * u - lambda * weighted_exp(m, u); };
  Vec F = resid(U);
  double fn = sup_norm(F);
  PreconKit kit;
  for (int it = 0; it < o.max_newton; ++it) {
    if (fn <= o.tol) {
      st.U = U;
      st.residual = fn;
      st.iterations = it;
      st.ok = true;
      return st;
    }
    Vec shift = sys.s.cwiseProduct(lambda * weighted_exp(m, U));
    BorderedOp op{sys.As, shift, nullptr, nullptr, 0.0};
    kit.ensure(sys.As, shift, 0.0, U);
    Vec d = Vec::Zero(n);
    Vec rhs = -sys.s.cwiseProduct(F);
    auto lin = gmres(op, kit.M, rhs, d, o.gmres_tol, o.gmres_restart, o.gmres_max_iterations);
    if (!lin.converged) {
      kit.force(sys.As, shift, 0.0, U);
      d.setZero();
      lin = gmres(op, kit.M, rhs, d, o.gmres_tol, o.gmres_restart, o.gmres_max_iterations);
      if (!lin.converged) {
        bool ok = false;
        d = direct_solve(op, rhs, ok);
        lin.converged = ok;
      }
      if (!lin.converged) {
        st.U = U;
        st.residual = fn;
        st.iterations = it;
        st.note = "linear solve stalled (relative residual " + fmt_e(lin.residual) + " after " +
                  std::to_string(lin.iterations) + " iterations, precond " +
                  (kit.M.ready ? "ok" : "degraded") + ")";
        return st;
      }
    }
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 14; ++ls, t *= 0.5) {
      Vec Ut = U + t * d;
      if (sup_norm(Ut) > 120.0) continue;  // keep exp() in range
      Vec Ft = resid(Ut);
      double fnt = sup_norm(Ft);
      if (fnt <= o.tol || fnt < fn * (1.0 - 0.25 * t)) {
        U = std::move(Ut);
        F = std::move(Ft);
        fn = fnt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      st.U = U;
      st.residual = fn;
      st.iterations = it;
      st.note = "no descent direction (residual " + std::to_string(fn) + ")";
      return st;
    }
  }
  st.U = U;
  st.residual = fn;
  st.iterations = o.max_newton;
  st.ok = fn <= o.tol;
  if (!st.ok) st.note = "iteration budget exhausted (residual " + std::to_string(fn) + ")";
  return st;
}

}  // namespace

PDESolution solve_lambda(const Mesh& m, double lambda, const std::vector<double>& U0,
                         const SolveOptions& opts) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorKind::invalid_argument, "solve_lambda: lambda must be positive");
  int n = m.size();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "solve_lambda: empty mesh");
  if (!U0.empty() && static_cast<int>(U0.size()) != n)
    throw Error(ErrorKind::invalid_argument, "solve_lambda: seed size does not match the mesh");
  Vec U = Vec::Zero(n);
  if (!U0.empty()) U = Eigen::Map<const Vec>(U0.data(), n);
  ScaledSystem sys(laplacian(m));
  NewtonState st = newton_lambda(m, sys, lambda, std::move(U), opts);
  if (!st.ok)
    throw NewtonDivergence("solve_lambda: Newton diverged at lambda " + std::to_string(lambda) +
                               ": " + st.note,
                           std::vector<double>(st.U.data(), st.U.data() + st.U.size()),
                           st.residual);
  return finish(m, lambda, st.U, st.iterations, st.residual, "");
}

// ====== Fixed-beta (normalized) solve ======

PDESolution solve_beta(const Mesh& m, double beta, const std::vector<double>& U0,
                       const SolveOptions& opts) {
  if (!(beta > -8.0 * kPiD) || !(beta < 0.0))
    throw Error(ErrorKind::invalid_argument, "solve_beta: beta must lie in (-8*pi, 0)");
  int n = m.size();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "solve_beta: empty mesh");
  if (!U0.empty() && static_cast<int>(U0.size()) != n)
    throw Error(ErrorKind::invalid_argument, "solve_beta: seed size does not match the mesh");

  ScaledSystem sys(laplacian(m));
  Vec w = Eigen::Map<const Vec>(m.weight.data(), n);
  Vec U = Vec::Zero(n);
  if (!U0.empty()) U = Eigen::Map<const Vec>(U0.data(), n);
  Vec c = weighted_exp(m, U);
  double Z = w.dot(c);
  double nu = -beta / Z;

  PreconKit kit;
  double fn = 0.0, fc = 0.0;
  int it = 0;
  for (; it < opts.max_newton; ++it) {
    c = weighted_exp(m, U);
    Z = w.dot(c);
    Vec FU = sys.A * U - nu * c;
    fc = nu * Z + beta;
    fn = sup_norm(FU);
    if (fn <= opts.tol && std::fabs(fc) <= opts.tol * (1.0 + std::fabs(beta)))
      return finish(m, nu, U, it, fn, "");

    Vec shift = sys.s.cwiseProduct(nu * c);  // Jacobian block diagonal correction
    Vec col = -sys.s.cwiseProduct(c);        // d F_U / d nu, row-scaled
    Vec row = nu * w.cwiseProduct(c);        // d F_c / d U
    double sb = 1.0 / (std::fabs(Z) + sup_norm(row));  // border equation scale
    Vec row_s = sb * row;
    double corner = sb * Z;
    BorderedOp op{sys.As, shift, &col, &row_s, corner};
    kit.ensure(sys.As, shift, corner, U);
    Vec rhs(n + 1);
    rhs.head(n) = -sys.s.cwiseProduct(FU);
    rhs[n] = -sb * fc;
    Vec d = Vec::Zero(n + 1);
    auto lin = gmres(op, kit.M, rhs, d, opts.gmres_tol, opts.gmres_restart,
                     opts.gmres_max_iterations);
    if (!lin.converged) {
      kit.force(sys.As, shift, corner, U);
      d.setZero();
      lin = gmres(op, kit.M, rhs, d, opts.gmres_tol, opts.gmres_restart,
                  opts.gmres_max_iterations);
      if (!lin.converged) {
        bool ok = false;
        d = direct_solve(op, rhs, ok);
        lin.converged = ok;
      }
      if (!lin.converged)
        throw NewtonDivergence(
            "solve_beta: linear solve stalled at beta " + std::to_string(beta),
            std::vector<double>(U.data(), U.data() + n), fn);
    }
    double merit0 = std::max(fn, std::fabs(fc));
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 14; ++ls, t *= 0.5) {
      Vec Ut = U + t * d.head(n);
      double nut = nu + t * d[n];
      if (!(nut > 0.0) || sup_norm(Ut) > 120.0) continue;
      Vec ct = weighted_exp(m, Ut);
      double Zt = w.dot(ct);
      double fct = nut * Zt + beta;
      double fnt = sup_norm(sys.A * Ut - nut * ct);
      double merit = std::max(fnt, std::fabs(fct));
      if (merit < merit0 * (1.0 - 0.25 * t) || merit <= opts.tol) {
        U = std::move(Ut);
        nu = nut;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NewtonDivergence("solve_beta: Newton stalled at beta " + std::to_string(beta) +
                                 " (residual " + std::to_string(fn) + ")",
                             std::vector<double>(U.data(), U.data() + n), fn);
  }
  c = weighted_exp(m, U);
  Z = w.dot(c);
  fn = sup_norm(sys.A * U - nu * c);
  fc = nu * Z + beta;
  if (fn <= opts.tol && std::fabs(fc) <= opts.tol * (1.0 + std::fabs(beta)))
    return finish(m, nu, U, it, fn, "");
  throw NewtonDivergence("solve_beta: iteration budget exhausted at beta " + std::to_string(beta),
                         std::vector<double>(U.data(), U.data() + n), fn);
}

// ====== Pseudo-arclength continuation ======

namespace {

// Tangent of the solution curve at (U, lambda): solve the corrector's own
// bordered system against (0, ..., 0, 1), which keeps the result positively
// oriented along the previous tangent, then renormalize in the metric. A
// secant between accepted points badly overestimates the lambda component
// when the last step was long and the fold is near, sending predictors past
// the fold into the region with no solutions; the solved tangent turns with
// the curve.
bool solve_tangent(const Mesh& m, const ScaledSystem& sys, const Vec& w, double area, const Vec& U,
                   double lambda, Vec& tU, double& tl, const SolveOptions& o, PreconKit& kit) {
  int n = m.size();
  Vec c = weighted_exp(m, U);
  Vec shift = sys.s.cwiseProduct(lambda * c);
  Vec col = -sys.s.cwiseProduct(c);
  Vec row = w.cwiseProduct(tU) / area;
  double sb = 1.0 / (std::fabs(tl) + sup_norm(row));
  Vec row_s = sb * row;
  double corner = sb * tl;
  BorderedOp op{sys.As, shift, &col, &row_s, corner};
  kit.ensure(sys.As, shift, corner, U);
  Vec rhs = Vec::Zero(n + 1);
  rhs[n] = sb;
  Vec d = Vec::Zero(n + 1);
  auto lin = gmres(op, kit.M, rhs, d, o.gmres_tol, o.gmres_restart, o.gmres_max_iterations);
  if (!lin.converged) {
    bool ok = false;
    d = direct_solve(op, rhs, ok);
    if (!ok) return false;
  }
  double dist = std::sqrt(w.dot(d.head(n).cwiseProduct(d.head(n))) / area + d[n] * d[n]);
  if (!(dist > 0.0) || !std::isfinite(dist)) return false;
  tU = d.head(n) / dist;
  tl = d[n] / dist;
  return true;
}

// Corrector for the arclength constraint through (U1, l1) along tangent
// (tU, tl): same bordered machinery with the tangent as the border row.
NewtonState newton_arclength(const Mesh& m, const ScaledSystem& sys, const Vec& w, double area,
                             const Vec& tU, double tl, const Vec& U1, double l1, double ds,
                             Vec U, double& lambda, const SolveOptions& o, PreconKit& kit) {
  int n = m.size();
  NewtonState st;
  double l = lambda;
  Vec row = w.cwiseProduct(tU) / area;
  double sb = 1.0 / (std::fabs(tl) + sup_norm(row));
  Vec row_s = sb * row;
  double corner = sb * tl;
  for (int it = 0; it < o.max_newton; ++it) {
    Vec c = weighted_exp(m, U);
    Vec FU = sys.A * U - l * c;
    double fc = row.dot(U - U1) + tl * (l - l1) - ds;
    double fn = sup_norm(FU);
    if (fn <= o.tol && std::fabs(fc) <= 1e-12 * (1.0 + std::fabs(ds))) {
      st.U = U;
      st.residual = fn;
      st.iterations = it;
      st.ok = true;
      lambda = l;
      return st;
    }
    Vec shift = sys.s.cwiseProduct(l * c);
    Vec col = -sys.s.cwiseProduct(c);
    BorderedOp op{sys.As, shift, &col, &row_s, corner};
    kit.ensure(sys.As, shift, corner, U);
    Vec rhs(n + 1);
    rhs.head(n) = -sys.s.cwiseProduct(FU);
    rhs[n] = -sb * fc;
    Vec d = Vec::Zero(n + 1);
    bool exact_dir = false;
    auto lin = gmres(op, kit.M, rhs, d, o.gmres_tol, o.gmres_restart, o.gmres_max_iterations);
    if (!lin.converged) {
      kit.force(sys.As, shift, corner, U);
      d.setZero();
      lin = gmres(op, kit.M, rhs, d, o.gmres_tol, o.gmres_restart, o.gmres_max_iterations);
      if (!lin.converged) {
        bool ok = false;
        d = direct_solve(op, rhs, ok);
        lin.converged = ok;
        exact_dir = ok;
      }
      if (!lin.converged) {
        st.note = "linear solve stalled";
        st.U = U;
        st.residual = fn;
        return st;
      }
    }
    double merit0 = std::max(fn, std::fabs(fc));
    auto try_direction = [&](const Vec& dd) {
      double t = 1.0;
      for (int ls = 0; ls < 12; ++ls, t *= 0.5) {
        Vec Ut = U + t * dd.head(n);
        double lt = l + t * dd[n];
        if (!(lt > 0.0) || sup_norm(Ut) > 120.0) continue;
        Vec ct = weighted_exp(m, Ut);
        double fct = row.dot(Ut - U1) + tl * (lt - l1) - ds;
        double fnt = sup_norm(sys.A * Ut - lt * ct);
        double merit = std::max(fnt, std::fabs(fct));
        if (merit < merit0 * (1.0 - 0.25 * t) || merit <= o.tol) {
          U = std::move(Ut);
          l = lt;
          return true;
        }
      }
      return false;
    };
    bool accepted = try_direction(d);
    if (!accepted && !exact_dir) {
      // A direction that merely met the iterative tolerance can point
      // nowhere useful once the block is nearly singular; retry the step
      // with the exact one before giving up.
      bool ok = false;
      Vec dd = direct_solve(op, rhs, ok);
      if (ok) accepted = try_direction(dd);
    }
    if (!accepted) {
      st.note = "no descent";
      st.U = U;
      return st;
    }
  }
  st.note = "iteration budget";
  st.U = U;
  return st;
}

}  // namespace

BranchRun continue_branch(const Mesh& m, const ContinuationOptions& opts) {
  if (!(opts.lambda_start > 0.0))
    throw Error(ErrorKind::invalid_argument, "continue_branch: lambda_start must be positive");
  if (opts.max_steps < 3)
    throw Error(ErrorKind::invalid_argument, "continue_branch: max_steps must be at least 3");
  int n = m.size();
  ScaledSystem sys(laplacian(m));
  Vec w = Eigen::Map<const Vec>(m.weight.data(), n);
  double area = m.area();

  BranchRun run;
  auto push = [&](double lambda, const Vec& U, int iters, double res, bool upper) {
    run.points.push_back(finish(m, lambda, U, iters, res, upper ? "upper" : "lower"));
    run.lambda_fold = std::max(run.lambda_fold, lambda);
  };

  // Two natural-continuation seeds fix the first secant tangent.
  NewtonState s0 = newton_lambda(m, sys, opts.lambda_start, Vec::Zero(n), opts.solve);
  if (!s0.ok)
    throw Error(ErrorKind::no_convergence,
                "continue_branch: no solution at lambda_start (" + s0.note + ")");
  push(opts.lambda_start, s0.U, s0.iterations, s0.residual, false);
  double l1 = opts.lambda_start * 1.2;
  NewtonState s1 = newton_lambda(m, sys, l1, s0.U, opts.solve);
  if (!s1.ok)
    throw Error(ErrorKind::no_convergence,
                "continue_branch: natural step failed (" + s1.note + ")");
  push(l1, s1.U, s1.iterations, s1.residual, false);

  // Arclength metric: mass-weighted rms of dU plus the lambda move.
  auto metric = [&](const Vec& dU, double dl) {
    return std::sqrt(w.dot(dU.cwiseProduct(dU)) / area + dl * dl);
  };

  Vec Uprev = s0.U, Ucur = s1.U;
  double lprev = opts.lambda_start, lcur = l1;
  double ds = opts.ds > 0.0 ? opts.ds : std::max(0.02, 0.15 * opts.lambda_start);
  const double ds_max = opts.ds > 0.0 ? opts.ds * 4.0 : 0.5;
  bool upper = false;
  int halvings = 0;
  PreconKit kit;

  // Seed the tangent with the secant of the two natural steps, then let the
  // bordered solve turn it to the true curve direction at the current point.
  double dist0 = metric(Ucur - Uprev, lcur - lprev);
  Vec tU = (Ucur - Uprev) / dist0;
  double tl = (lcur - lprev) / dist0;
  solve_tangent(m, sys, w, area, Ucur, lcur, tU, tl, opts.solve, kit);

  while (static_cast<int>(run.points.size()) < opts.max_steps) {
    Vec Upred = Ucur + ds * tU;
    double lpred = lcur + ds * tl;
    double lnew = lpred;
    NewtonState st = newton_arclength(m, sys, w, area, tU, tl, Ucur, lcur, ds, Upred, lnew,
                                      opts.solve, kit);
    if (!st.ok) {
      run.note = st.note;
      ds *= 0.5;
      if (++halvings >= 5) {
        run.partial = true;
        break;
      }
      continue;
    }
    halvings = 0;
    if (lnew < lcur && !upper) {
      upper = true;
      run.hit_fold = true;
    }
    Uprev = std::move(Ucur);
    lprev = lcur;
    Ucur = st.U;
    lcur = lnew;
    push(lcur, Ucur, st.iterations, st.residual, upper);
    if (!solve_tangent(m, sys, w, area, Ucur, lcur, tU, tl, opts.solve, kit)) {
      double dist = metric(Ucur - Uprev, lcur - lprev);
      if (dist == 0.0) break;
      tU = (Ucur - Uprev) / dist;
      tl = (lcur - lprev) / dist;
    }
    if (run.points.back().E >= opts.E_stop) {
      run.note.clear();
      return run;
    }
    if (st.iterations <= 4)
      ds = std::min(ds * 1.4, ds_max);
    else if (st.iterations > 8)
      ds *= 0.7;
    if (upper && lcur < 0.02 * std::max(run.lambda_fold, opts.lambda_start)) break;
  }
  if (run.points.empty() || run.points.back().E < opts.E_stop) run.partial = true;
  if (!run.partial) run.note.clear();
  return run;
}

// ====== Closed-form radial seeds ======

std::vector<double> liouville_seed(const Mesh& m, const GeometrySpec& g, double lambda,
                                   const std::vector<int>& heavy) {
  if (!(lambda > 0.0))
    throw Error(ErrorKind::invalid_argument, "liouville_seed: lambda must be positive");
  if (heavy.size() != g.disks.size())
    throw Error(ErrorKind::invalid_argument, "liouville_seed: one branch choice per disk");
  std::vector<double> delta(g.disks.size());
  for (std::size_t i = 0; i < g.disks.size(); ++i) {
    double R2 = g.disks[i].r * g.disks[i].r;
    double disc = 64.0 - 32.0 * lambda * R2;
    if (disc < 0.0)
      throw Error(ErrorKind::fold_violation,
                  "liouville_seed: lambda beyond the fold of disk " + std::to_string(i));
    double root = std::sqrt(disc);
    delta[i] = heavy[static_cast<std::size_t>(i)]
                   ? ((8.0 - 2.0 * lambda * R2) + root) / (2.0 * lambda * R2 * R2)
                   : ((8.0 - 2.0 * lambda * R2) - root) / (2.0 * lambda * R2 * R2);
  }
  std::vector<double> U(static_cast<std::size_t>(m.size()), 0.0);
  for (int k = 0; k < m.size(); ++k) {
    double xk = m.x[static_cast<std::size_t>(k)], yk = m.y[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < g.disks.size(); ++i) {
      double dx = xk - g.disks[i].cx, dy = yk - g.disks[i].cy;
      double r2 = dx * dx + dy * dy;
      if (r2 < g.disks[i].r * g.disks[i].r) {
        U[static_cast<std::size_t>(k)] =
            std::log(8.0 * delta[i] / lambda) - 2.0 * std::log1p(delta[i] * r2);
        break;
      }
    }
  }
  return U;
}

// ====== Conformally deformed disk free energy ======

FreeEnergyResult deformed_free_energy_check(double epsilon, double beta, double h,
                                            const SolveOptions& opts) {
  if (epsilon < 0.0 || epsilon > 0.15)
    throw Error(ErrorKind::invalid_argument,
                "deformed_free_energy_check: amplitude must lie in [0, 0.15]");
  if (!(beta > -8.0 * kPiD) || !(beta < 0.0))
    throw Error(ErrorKind::invalid_argument,
                "deformed_free_energy_check: beta must lie in (-8*pi, 0)");
  GeometrySpec g;
  g.disks.push_back({0.0, 0.0, 1.0});
  g.conformal_eps = epsilon;
  Mesh m = rasterize(g, h);

  // Walk beta down in steps of at most 2*pi, re-seeding from the previous
  // solve; the last stretch toward the fold needs the warm start.
  int ladder = std::max(1, static_cast<int>(std::ceil(-beta / (2.0 * kPiD))));
  std::vector<double> seed;
  PDESolution sol;
  for (int k = 1; k <= ladder; ++k) {
    double bk = beta * static_cast<double>(k) / static_cast<double>(ladder);
    sol = solve_beta(m, bk, seed, opts);
    seed = sol.U;
  }
  FreeEnergyResult out;
  out.F = -sol.E - std::log(sol.Z) / beta;
  out.sol = std::move(sol);
  return out;
}

}  // namespace vpl::pde
