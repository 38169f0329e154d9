#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <stdexcept>
#include <thread>
#include <type_traits>
#include <vector>

namespace backflow {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using RMatrix3 = Eigen::Matrix3d;
using RMatrix2 = Eigen::Matrix2d;
using Vec3 = Eigen::Vector3d;

/// Module-wide tolerance defaults. Every check that consumes one of these
/// also accepts an override parameter; these are the documented baselines.
namespace defaults {
inline constexpr double hermitian_tol = 1e-12;      // input Hermiticity
inline constexpr double unitary_tol = 1e-12;        // basis / unitary columns
inline constexpr double reconstruction_tol = 1e-10; // decomposition round-trips
inline constexpr double cptp_eig_tol = 1e-9;        // Choi PSD acceptance
inline constexpr double kraus_rank_tol = 1e-9;      // Choi eigenvalue rank cut
inline constexpr double commutant_tol = 1e-9;       // DIO / containment residuals
inline constexpr double propagator_eig_tol = 1e-8;  // CP-divisibility step test
inline constexpr double derivative_tol = 1e-8;      // derivative-positivity checks
inline constexpr double witness_tol = 1e-9;         // X > 1 + witness_tol refutes
inline constexpr double gram_tol = 1e-8;            // extremality Gram cut
inline constexpr double strong_margin_tol = 1e-9;   // strong-certificate margin
inline constexpr double analytic_step = 1e-5;       // finite-difference step
inline constexpr double cond_limit = 1e10;          // propagator inversion cutoff
} // namespace defaults

/// Uniform sampling grid on [t_start, t_end], n_samples >= 3.
struct TimeGrid {
  double t_start;
  double t_end;
  int n_samples;

  TimeGrid(double a, double b, int n) : t_start(a), t_end(b), n_samples(n) {
    if (!(b > a))
      throw std::invalid_argument("TimeGrid: t_end must exceed t_start");
    if (n < 3)
      throw std::invalid_argument("TimeGrid: need at least 3 samples");
  }

  double step() const { return (t_end - t_start) / (n_samples - 1); }

  double at(int i) const {
    if (i < 0 || i >= n_samples)
      throw std::invalid_argument("TimeGrid: index out of range");
    return (i == n_samples - 1) ? t_end : t_start + i * step();
  }

  std::vector<double> points() const {
    std::vector<double> ts(n_samples);
    for (int i = 0; i < n_samples; ++i) ts[i] = at(i);
    return ts;
  }

  bool contains(double t, double slack = 1e-12) const {
    return t >= t_start - slack && t <= t_end + slack;
  }

  /// Nearest grid index if t lies on the lattice within tol, else -1.
  int snap_index(double t, double tol = 1e-9) const {
    double x = (t - t_start) / step();
    int i = static_cast<int>(std::lround(x));
    if (i < 0 || i >= n_samples) return -1;
    return (std::abs(t - at(i)) <= tol) ? i : -1;
  }
};

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}
inline double max_abs(const RMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

struct HermitianEig {
  Eigen::VectorXd values; // ascending
  CMatrix vectors;        // columns aligned with values
};

/// Eigendecomposition of a Hermitian matrix. Rejects inputs whose
/// anti-Hermitian part exceeds herm_tol (entrywise).
inline HermitianEig hermitian_eig(const CMatrix& a,
                                  double herm_tol = defaults::hermitian_tol) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("hermitian_eig: matrix must be square");
  if (max_abs(CMatrix(a - a.adjoint())) > herm_tol)
    throw std::invalid_argument("hermitian_eig: input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("hermitian_eig: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

struct SvdResult {
  CMatrix u;
  Eigen::VectorXd sigma; // descending
  CMatrix v;             // a = u * diag(sigma) * v.adjoint()
};

inline SvdResult svd(const CMatrix& a) {
  Eigen::JacobiSVD<CMatrix> s(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {s.matrixU(), s.singularValues(), s.matrixV()};
}

struct RSvdResult {
  RMatrix u;
  Eigen::VectorXd sigma;
  RMatrix v;
};

inline RSvdResult svd(const RMatrix& a) {
  Eigen::JacobiSVD<RMatrix> s(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {s.matrixU(), s.singularValues(), s.matrixV()};
}

inline double trace_norm(const CMatrix& a) {
  return Eigen::JacobiSVD<CMatrix>(a).singularValues().sum();
}
inline double trace_norm(const RMatrix& a) {
  return Eigen::JacobiSVD<RMatrix>(a).singularValues().sum();
}

inline double operator_norm(const CMatrix& a) {
  return a.size() == 0 ? 0.0
                       : Eigen::JacobiSVD<CMatrix>(a).singularValues()(0);
}
inline double operator_norm(const RMatrix& a) {
  return a.size() == 0 ? 0.0
                       : Eigen::JacobiSVD<RMatrix>(a).singularValues()(0);
}

/// Orthogonal factor of the polar decomposition T = O P, chosen so that
/// Tr(O^T T) equals the trace norm of T. When T is singular the factor is
/// not unique; the free directions are fixed by requiring det(O) = +1.
inline RMatrix polar_orthogonal(const RMatrix& t,
                                double singular_tol = 1e-12) {
  if (t.rows() != t.cols())
    throw std::invalid_argument("polar_orthogonal: matrix must be square");
  Eigen::JacobiSVD<RMatrix> s(t, Eigen::ComputeFullU | Eigen::ComputeFullV);
  RMatrix u = s.matrixU();
  const RMatrix& v = s.matrixV();
  const auto& sig = s.singularValues();
  double smax = sig.size() ? sig(0) : 0.0;
  RMatrix o = u * v.transpose();
  bool singular = sig.size() == 0 ||
                  sig(sig.size() - 1) <= singular_tol * std::max(1.0, smax);
  if (singular && o.determinant() < 0.0) {
    u.col(u.cols() - 1) *= -1.0;
    o = u * v.transpose();
  }
  return o;
}

/// Second-order central difference; no domain awareness.
template <class F>
auto central_diff(F&& f, double t, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_diff: h must be > 0");
  using R = std::invoke_result_t<F&, double>;
  if constexpr (std::is_arithmetic_v<R>) {
    return (f(t + h) - f(t - h)) / (2.0 * h);
  } else {
    return ((f(t + h) - f(t - h)) / (2.0 * h)).eval();
  }
}

/// Central difference clamped to [lo, hi]; falls back to one-sided
/// second-order stencils within h of either boundary.
template <class F>
auto central_diff_bounded(F&& f, double t, double h, double lo, double hi) {
  if (!(h > 0.0))
    throw std::invalid_argument("central_diff_bounded: h must be > 0");
  if (t < lo - 1e-12 || t > hi + 1e-12)
    throw std::invalid_argument("central_diff_bounded: t outside [lo, hi]");
  if (hi - lo < 2.0 * h)
    throw std::invalid_argument("central_diff_bounded: domain shorter than 2h");
  using R = std::invoke_result_t<F&, double>;
  auto combine = [&](auto a, double ca, auto b, double cb, auto c, double cc) {
    if constexpr (std::is_arithmetic_v<R>)
      return (ca * a + cb * b + cc * c) / (2.0 * h);
    else
      return ((ca * a + cb * b + cc * c) / (2.0 * h)).eval();
  };
  if (t - h >= lo && t + h <= hi)
    return combine(f(t + h), 1.0, f(t - h), -1.0, f(t), 0.0);
  if (t - h < lo) // forward stencil
    return combine(f(t), -3.0, f(t + h), 4.0, f(t + 2.0 * h), -1.0);
  return combine(f(t), 3.0, f(t - h), -4.0, f(t - 2.0 * h), 1.0);
}

/// Composite Simpson rule with n panels (2n+1 evaluations), O(n^-4).
template <class G>
double quadrature(G&& g, double a, double b, int panels) {
  if (a > b) throw std::invalid_argument("quadrature: need a <= b");
  if (panels < 2) throw std::invalid_argument("quadrature: need >= 2 panels");
  if (a == b) return 0.0;
  double h = (b - a) / panels;
  double acc = 0.0;
  for (int i = 0; i < panels; ++i) {
    double x0 = a + i * h;
    double x1 = (i == panels - 1) ? b : x0 + h;
    acc += (x1 - x0) / 6.0 * (g(x0) + 4.0 * g(0.5 * (x0 + x1)) + g(x1));
  }
  return acc;
}

/// Simpson rule with panel edges snapped to the breakpoints that fall
/// strictly inside (a, b); exact for piecewise-cubic integrands whose
/// pieces are delimited by those breakpoints.
template <class G>
double quadrature_segmented(G&& g, double a, double b,
                            const std::vector<double>& breakpoints,
                            int panels_per_segment = 16) {
  if (a > b) throw std::invalid_argument("quadrature: need a <= b");
  if (a == b) return 0.0;
  std::vector<double> edges{a};
  for (double x : breakpoints)
    if (x > a + 1e-15 && x < b - 1e-15) edges.push_back(x);
  std::sort(edges.begin(), edges.end());
  edges.push_back(b);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    acc += quadrature(g, edges[i], edges[i + 1], panels_per_segment);
  return acc;
}

/// Runs fn(i) for i in [0, n) across `threads` workers. Each index owns its
/// output slot, so reductions done afterwards in index order are
/// deterministic regardless of thread count. If workers throw, the
/// exception of the lowest worker slot is rethrown after all joins.
template <class Fn>
void parallel_for_index(int n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace backflow
