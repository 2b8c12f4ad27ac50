#pragma once

// Shared numerics utilities: error type, root finding, extremum search,
// compensated summation, and the bounded thread pool used by the batch loops.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vpl {

inline constexpr long double kPi = 3.141592653589793238462643383279502884L;

#define VPL_VERSION_STRING "0.1.0"
inline constexpr int kSchemaVersion = 1;

// ====== Errors ======

enum class ErrorKind {
  invalid_argument,  // bad input value or malformed config
  fold_violation,    // branch parameter beyond a fold (negative discriminant)
  out_of_range,      // query outside a segment/table range
  no_convergence,    // iteration budget exhausted
  ambiguous,         // unresolvable oscillation in sampled data
  io,                // file read/write failure
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  const char* kind_name() const {
    switch (kind_) {
      case ErrorKind::invalid_argument: return "invalid_argument";
      case ErrorKind::fold_violation: return "fold_violation";
      case ErrorKind::out_of_range: return "out_of_range";
      case ErrorKind::no_convergence: return "no_convergence";
      case ErrorKind::ambiguous: return "ambiguous";
      case ErrorKind::io: return "io";
    }
    return "unknown";
  }

private:
  ErrorKind kind_;
};

// ====== Root finding ======

// Brent's method on a bracketing interval [a,b] with f(a)*f(b) <= 0.
// Returns the root to relative x-tolerance rtol (plus a tiny absolute floor).
template <class T, class F>
T brent_root(F&& f, T a, T b, T fa, T fb, T rtol, int max_iter = 200) {
  if (fa == T(0)) return a;
  if (fb == T(0)) return b;
  if ((fa > T(0)) == (fb > T(0)))
    throw Error(ErrorKind::invalid_argument, "brent_root: interval does not bracket a root");
  T c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iter; ++it) {
    if ((fb > T(0)) == (fc > T(0))) { c = a; fc = fa; d = b - a; e = d; }
    if (std::fabs(fc) < std::fabs(fb)) { a = b; b = c; c = a; fa = fb; fb = fc; fc = fa; }
    T tol = T(2) * rtol * std::fabs(b) + T(1e-300);
    T m = (c - b) / T(2);
    if (std::fabs(m) <= tol || fb == T(0)) return b;
    if (std::fabs(e) < tol || std::fabs(fa) <= std::fabs(fb)) {
      d = m; e = m;  // bisection
    } else {
      T s = fb / fa, p, q;
      if (a == c) {  // secant
        p = T(2) * m * s;
        q = T(1) - s;
      } else {  // inverse quadratic
        T r = fb / fc, t = fa / fc;
        p = s * (T(2) * m * t * (t - r) - (b - a) * (r - T(1)));
        q = (t - T(1)) * (r - T(1)) * (s - T(1));
      }
      if (p > T(0)) q = -q; else p = -p;
      if (T(2) * p < std::min(T(3) * m * q - std::fabs(tol * q), std::fabs(e * q))) {
        e = d; d = p / q;
      } else {
        d = m; e = m;
      }
    }
    a = b; fa = fb;
    b += (std::fabs(d) > tol) ? d : (m > T(0) ? tol : -tol);
    fb = f(b);
    if (fb == T(0)) return b;
  }
  return b;
}

template <class T, class F>
T brent_root(F&& f, T a, T b, T rtol, int max_iter = 200) {
  T fa = f(a), fb = f(b);
  return brent_root(std::forward<F>(f), a, b, fa, fb, rtol, max_iter);
}

// Golden-section search for a local extremum of f on [a,b].
// maximize=true looks for a max. Stops when the bracket's f-variation drops
// below ftol_rel*|f| or the bracket shrinks below xtol_rel*|x|.
template <class T>
struct ExtremumResult { T x; T fx; };

template <class T, class F>
ExtremumResult<T> golden_extremum(F&& f, T a, T b, bool maximize, T ftol_rel, T xtol_rel,
                                  int max_iter = 400) {
  const T invphi = T(0.6180339887498948482045868343656381L);
  T x1 = b - invphi * (b - a);
  T x2 = a + invphi * (b - a);
  T f1 = f(x1), f2 = f(x2);
  T sgn = maximize ? T(1) : T(-1);
  T fa = f(a), fb = f(b);
  for (int it = 0; it < max_iter; ++it) {
    if (sgn * f1 > sgn * f2) {
      b = x2; fb = f2; x2 = x1; f2 = f1;
      x1 = b - invphi * (b - a); f1 = f(x1);
    } else {
      a = x1; fa = f1; x1 = x2; f1 = f2;
      x2 = a + invphi * (b - a); f2 = f(x2);
    }
    T fbest = sgn * f1 > sgn * f2 ? f1 : f2;
    T fspread = std::fabs(std::max({sgn * fa, sgn * fb, sgn * f1, sgn * f2}) -
                          std::min({sgn * fa, sgn * fb, sgn * f1, sgn * f2}));
    if (fspread <= ftol_rel * std::fabs(fbest)) break;
    if (std::fabs(b - a) <= xtol_rel * (std::fabs(a) + std::fabs(b)) / T(2)) break;
  }
  if (sgn * f1 > sgn * f2) return {x1, f1};
  return {x2, f2};
}

// ====== Compensated summation ======

template <class T>
class KahanSum {
public:
  void add(T x) {
    T y = x - c_;
    T t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  T value() const { return s_; }

private:
  T s_ = T(0);
  T c_ = T(0);
};

// ====== Threads ======

// Thread budget: min(VPL_THREADS, hardware). Defaults to hardware concurrency.
inline int max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int n = static_cast<int>(hw);
  if (const char* env = std::getenv("VPL_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v <= 256) n = static_cast<int>(std::min<long>(v, 256));
  }
  return n;
}

// Static-chunk parallel loop. fn(i) must write only to its own slot so the
// result is identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int nt = max_threads();
  if (nt <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t chunk = (n + nt - 1) / nt;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ====== Misc ======

// FNV-1a 64-bit hash, used to fingerprint config files in output metadata.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace vpl
