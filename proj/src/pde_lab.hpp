#pragma once

// 2D finite-difference laboratory for -Delta U = lambda J e^U on rasterized
// domains (disk unions joined by capsule channels, conformally weighted
// disks), with damped Newton at fixed lambda, a normalized bordered Newton at
// fixed beta, and pseudo-arclength continuation through the fold.

#include <array>
#include <string>
#include <vector>

#include "common.hpp"

namespace vpl::pde {

struct DiskPrim {
  double cx = 0, cy = 0, r = 1;
};

// Capsule of the given width joining the centers of disks i and j (0-based).
struct ChannelPrim {
  int i = 0, j = 0;
  double width = 0;
};

struct GeometrySpec {
  std::vector<DiskPrim> disks;
  std::vector<ChannelPrim> channels;
  // Conformal weight amplitude for the unit-radius disk: the nonlinearity is
  // multiplied by J = 1 + 6 eps (x^2 - y^2) + 9 eps^2 (x^2 + y^2)^2, the
  // Jacobian of z -> z + eps z^3. Zero means an unweighted domain.
  double conformal_eps = 0;
  bool connected_expected = true;
};

// Signed distance to the domain boundary, negative inside.
double signed_distance(const GeometrySpec& g, double x, double y);

struct Mesh {
  double h = 0;
  double x0 = 0, y0 = 0;  // coordinates of grid node (0, 0)
  int nx = 0, ny = 0;     // grid nodes per direction
  std::vector<int> index;                  // (i,j) -> interior index or -1
  std::vector<std::array<double, 4>> arm;  // boundary arm fractions W,E,S,N
  std::vector<double> x, y;                // interior node coordinates
  std::vector<double> weight;              // quadrature weight per node
  std::vector<double> jac;                 // nonlinearity weight J per node

  int size() const { return static_cast<int>(x.size()); }
  int at(int i, int j) const {
    return (i < 0 || j < 0 || i >= nx || j >= ny) ? -1 : index[static_cast<std::size_t>(j) * nx + i];
  }
  double area() const;
};

// Node-based rasterization with Shortley-Weller boundary arms; throws when a
// channel is thinner than two cells or the interior splits while the
// geometry claims to be connected.
Mesh rasterize(const GeometrySpec& g, double h);

struct PDESolution {
  double lambda = 0;
  std::vector<double> U;
  double Z = 0;     // integral of J e^U
  double beta = 0;  // -lambda Z
  double E = 0;     // (1/(2 lambda Z^2)) integral of U J e^U
  double E_alt = 0; // (1/(2 lambda^2 Z^2)) integral of |grad U|^2
  double S = 0;     // ln Z + 2 beta E
  double residual = 0;
  int newton_iterations = 0;
  std::string tag;  // continuation annotation
};

struct SolveOptions {
  double tol = 1e-10;  // Newton residual sup-norm
  int max_newton = 60;
  // Inner linear tolerance, relative to the step's own right-hand side; the
  // outer iteration still lands on `tol` because the right-hand side shrinks
  // with the Newton residual.
  double gmres_tol = 1e-8;
  int gmres_restart = 80;
  int gmres_max_iterations = 2000;
};

// Newton stall: carries the last iterate so a caller can re-seed (the
// continuation driver does this internally when a step is too greedy).
class NewtonDivergence : public Error {
public:
  NewtonDivergence(const std::string& msg, std::vector<double> iterate, double res)
      : Error(ErrorKind::no_convergence, msg), last_iterate(std::move(iterate)), residual(res) {}
  std::vector<double> last_iterate;
  double residual = 0;
};

// Damped Newton at fixed lambda > 0 from iterate U0 (zero when empty).
// Throws no_convergence when Newton stalls; the message carries the residual
// reached (continuation callers re-seed instead of aborting).
PDESolution solve_lambda(const Mesh& m, double lambda, const std::vector<double>& U0 = {},
                         const SolveOptions& opts = {});

// Normalized problem at fixed beta in (-8 pi, 0): finds (U, nu) with
// A U = nu J e^U and nu Z + beta = 0, bordered so the solve stays regular at
// the fold beta = -4 pi where the fixed-lambda linearization is singular.
PDESolution solve_beta(const Mesh& m, double beta, const std::vector<double>& U0 = {},
                       const SolveOptions& opts = {});

struct ContinuationOptions {
  double lambda_start = 0.05;  // natural-continuation seed value
  double ds = 0.0;             // arclength step; 0 picks a scale automatically
  int max_steps = 400;
  double E_stop = 0.25;        // stop once E exceeds this on the upper branch
  SolveOptions solve;
};

struct BranchRun {
  std::vector<PDESolution> points;  // in arclength order
  bool hit_fold = false;
  bool partial = false;  // step control gave up before E_stop
  double lambda_fold = 0;  // largest lambda reached (fold estimate)
  std::string note;  // last corrector failure, when any step was rejected
};

// Lower branch by natural continuation, then pseudo-arclength (secant
// tangent) around the fold and up the upper branch until E_stop. Solutions
// are tagged "lower"/"upper" by the sign of d lambda / ds.
BranchRun continue_branch(const Mesh& m, const ContinuationOptions& opts = {});

// Closed-form radial profiles patched together as a Newton seed: per disk,
// pick the small (heavy[i] == 0) or large (heavy[i] == 1) root of the
// fixed-lambda single-disk problem; channel nodes start at zero. On
// thin-channel domains Newton refines the seed into the matching solution,
// which is how coexisting states at one energy are produced.
std::vector<double> liouville_seed(const Mesh& m, const GeometrySpec& g, double lambda,
                                   const std::vector<int>& heavy);

struct FreeEnergyResult {
  double F = 0;  // -E - (1/beta) ln Z
  PDESolution sol;
};

// Free energy of the unit-radius disk with conformal weight amplitude eps at
// inverse temperature beta, from the fixed-beta solve at spacing h. The
// eps^2 slope of F against the unperturbed disk isolates the first-order
// domain-deformation response.
FreeEnergyResult deformed_free_energy_check(double epsilon, double beta, double h,
                                            const SolveOptions& opts = {});

}  // namespace vpl::pde
