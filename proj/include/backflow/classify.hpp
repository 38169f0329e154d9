#pragma once

#include <backflow/dynamics.hpp>
#include <backflow/verdict.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace backflow {

/// Deterministic orthogonal matrix whose third column is n (normalized);
/// the first two columns span the plane orthogonal to n.
inline RMatrix3 orthogonal_completion(const Vec3& n_in) {
  double len = n_in.norm();
  if (len < 1e-12)
    throw std::invalid_argument("orthogonal_completion: zero axis");
  Vec3 n = n_in / len;
  int k = 0;
  n.cwiseAbs().minCoeff(&k);
  Vec3 u = Vec3::Unit(k) - n(k) * n;
  u.normalize();
  Vec3 v = n.cross(u);
  RMatrix3 r;
  r.col(0) = u;
  r.col(1) = v;
  r.col(2) = n;
  return r;
}

/// T(t) and X(t) at every grid point, evaluated once so that several
/// exact checks can share the same family sweep.
inline std::vector<BlochDerivative> bloch_derivative_sweep(
    const DynamicalMap& map, int threads = 1) {
  const TimeGrid& g = map.grid();
  std::vector<BlochDerivative> sweep(g.n_samples);
  parallel_for_index(g.n_samples, threads, [&](int i) {
    sweep[i] = bloch_T_derivative(map, g.at(i));
  });
  return sweep;
}

namespace detail {

inline double sweep_tolerance(const std::vector<BlochDerivative>& sweep,
                              double tol_scale) {
  double tmax = 0.0;
  for (const auto& d : sweep) tmax = std::max(tmax, max_abs(RMatrix(d.t)));
  return tol_scale * std::max(1.0, tmax);
}

inline CMatrix random_density_matrix(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = Complex(n(rng), n(rng));
  CMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

/// Shared fail/indeterminate/pass fold for the sampled (d > 2) paths:
/// an interior grid point fails when both one-sided difference quotients
/// of the trace-distance series exceed tol, and is indeterminate when
/// they disagree about it (the derivative of the trace norm need not
/// exist at eigenvalue crossings).
inline Verdict sampled_monotonicity(
    const DynamicalMap& map,
    const std::function<std::pair<CMatrix, CMatrix>(std::mt19937_64&)>& draw,
    int pair_samples, unsigned seed, double tol_scale) {
  const TimeGrid& g = map.grid();
  const double h = g.step();
  std::mt19937_64 rng(seed);
  double established = -std::numeric_limits<double>::infinity();
  double one_sided = established;
  double est_time = g.t_start, os_time = g.t_start;
  double fmax = 0.0;
  for (int p = 0; p < pair_samples; ++p) {
    auto [rho1, rho2] = draw(rng);
    auto f = trace_distance_series(map, rho1, rho2);
    for (double v : f) fmax = std::max(fmax, v);
    for (int k = 1; k + 1 < g.n_samples; ++k) {
      double dl = (f[k] - f[k - 1]) / h;
      double dr = (f[k + 1] - f[k]) / h;
      double lo = std::min(dl, dr), hi = std::max(dl, dr);
      if (lo > established) {
        established = lo;
        est_time = g.at(k);
      }
      if (hi > one_sided) {
        one_sided = hi;
        os_time = g.at(k);
      }
    }
  }
  Verdict v;
  v.grid = g;
  v.mode = "sampled";
  v.tolerance = tol_scale * std::max(1.0, fmax);
  v.margin = established;
  if (established > v.tolerance) {
    v.status = VerdictStatus::fail;
    v.witness = WitnessPoint{est_time, std::nullopt,
                             "two-sided trace-distance increase"};
  } else if (one_sided > v.tolerance) {
    v.status = VerdictStatus::indeterminate;
    v.witness = WitnessPoint{
        os_time, std::nullopt,
        "one-sided difference quotients disagree; derivative may not exist"};
  } else {
    v.status = VerdictStatus::pass;
  }
  return v;
}

inline RMatrix3 validated_completion(const Vec3& axis,
                                     const std::optional<RMatrix3>& completion) {
  if (!completion) return orthogonal_completion(axis);
  const RMatrix3& r = *completion;
  if (max_abs(RMatrix(r.transpose() * r - RMatrix3::Identity())) > 1e-10)
    throw std::invalid_argument("completion is not orthogonal");
  if ((r.col(2) - axis / axis.norm()).norm() > 1e-9)
    throw std::invalid_argument("completion's third column must be the axis");
  return r;
}

} // namespace detail

/// Largest trace-distance growth rate over all state pairs of a qubit
/// family: pass iff the top eigenvalue of X(t) = d/dt T^T T stays below
/// tol at every grid point. The trace distance of the pair
/// (I +- m.sigma)/2 is |T m|, so X(t) <= 0 in every direction is exactly
/// monotone distinguishability. Families with d > 2 fall back to sampled
/// state pairs (mode "sampled").
inline Verdict check_blp(const TimeGrid& grid,
                         const std::vector<BlochDerivative>& sweep,
                         double tol_scale = defaults::derivative_tol) {
  Verdict v;
  v.grid = grid;
  v.mode = "exact";
  v.tolerance = detail::sweep_tolerance(sweep, tol_scale);
  double worst = -std::numeric_limits<double>::infinity();
  int at = 0;
  for (int i = 0; i < int(sweep.size()); ++i) {
    double top =
        Eigen::SelfAdjointEigenSolver<RMatrix3>(sweep[i].x).eigenvalues()(2);
    if (top > worst) {
      worst = top;
      at = i;
    }
  }
  v.margin = worst;
  if (worst <= v.tolerance) {
    v.status = VerdictStatus::pass;
  } else {
    v.status = VerdictStatus::fail;
    Eigen::SelfAdjointEigenSolver<RMatrix3> es(sweep[at].x);
    v.witness = WitnessPoint{grid.at(at), Vec3(es.eigenvectors().col(2)),
                             "fastest-growing Bloch direction"};
  }
  return v;
}

inline Verdict check_blp(const DynamicalMap& map,
                         double tol_scale = defaults::derivative_tol,
                         int threads = 1, int pair_samples = 200,
                         unsigned seed = 1905u) {
  if (map.dim() == 2)
    return check_blp(map.grid(), bloch_derivative_sweep(map, threads),
                     tol_scale);
  return detail::sampled_monotonicity(
      map,
      [&map](std::mt19937_64& rng) {
        return std::make_pair(detail::random_density_matrix(map.dim(), rng),
                              detail::random_density_matrix(map.dim(), rng));
      },
      pair_samples, seed, tol_scale);
}

/// One-step propagator positivity: for every consecutive grid pair
/// (s, t) the superoperator V = S(t) S(s)^-1 must have a Choi matrix
/// with min eigenvalue >= -tol and preserve the trace within tol.
/// Steps where S(s) is too ill-conditioned to invert are reported
/// indeterminate rather than guessed.
inline Verdict check_cp_divisible(const DynamicalMap& map,
                                  double tol = defaults::propagator_eig_tol,
                                  double cond_limit = defaults::cond_limit,
                                  int threads = 1) {
  const TimeGrid& g = map.grid();
  const int d = map.dim();
  const int n = d * d;
  const int steps = g.n_samples - 1;
  struct Step {
    double violation = 0.0;
    double tp_residual = 0.0;
    bool indeterminate = false;
  };
  std::vector<Step> rows(steps);
  parallel_for_index(steps, threads, [&](int k) {
    CMatrix ss = map.at_index(k).superop();
    CMatrix st = map.at_index(k + 1).superop();
    Eigen::JacobiSVD<CMatrix> dec(ss,
                                  Eigen::ComputeFullU | Eigen::ComputeFullV);
    double smax = dec.singularValues()(0);
    double smin = dec.singularValues()(n - 1);
    if (!(smin > 0.0) || smax / smin > cond_limit) {
      rows[k].indeterminate = true;
      return;
    }
    CMatrix v = st * dec.solve(CMatrix::Identity(n, n));
    CMatrix choi = choi_of_superop(v, d);
    choi = 0.5 * (choi + choi.adjoint()).eval();
    double mineig =
        Eigen::SelfAdjointEigenSolver<CMatrix>(choi).eigenvalues().minCoeff();
    rows[k].violation = -mineig;
    CMatrix marg = CMatrix::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        marg(i, j) = choi.block(i * d, j * d, d, d).trace();
    rows[k].tp_residual =
        max_abs(CMatrix(marg - CMatrix::Identity(d, d) / double(d)));
  });
  Verdict v;
  v.grid = g;
  v.mode = "exact";
  v.tolerance = tol;
  double worst = -std::numeric_limits<double>::infinity();
  double worst_tp = 0.0;
  int at = -1, tp_at = -1, indet_at = -1;
  for (int k = 0; k < steps; ++k) {
    if (rows[k].indeterminate) {
      if (indet_at < 0) indet_at = k;
      continue;
    }
    if (rows[k].violation > worst) {
      worst = rows[k].violation;
      at = k;
    }
    if (rows[k].tp_residual > worst_tp) {
      worst_tp = rows[k].tp_residual;
      tp_at = k;
    }
  }
  if (at < 0) { // nothing was computable
    v.status = VerdictStatus::indeterminate;
    v.margin = 0.0;
    v.witness = WitnessPoint{g.at(indet_at + 1), std::nullopt,
                             "every propagator step was ill-conditioned"};
    return v;
  }
  v.margin = worst;
  if (worst_tp > tol) {
    v.status = VerdictStatus::fail;
    v.margin = std::max(worst, worst_tp);
    v.witness = WitnessPoint{g.at(tp_at + 1), std::nullopt,
                             "propagator does not preserve the trace"};
  } else if (worst > tol) {
    v.status = VerdictStatus::fail;
    v.witness = WitnessPoint{g.at(at + 1), std::nullopt,
                             "propagator Choi matrix has a negative eigenvalue"};
  } else if (indet_at >= 0) {
    v.status = VerdictStatus::indeterminate;
    v.witness = WitnessPoint{g.at(indet_at + 1), std::nullopt,
                             "propagator too ill-conditioned to invert"};
  } else {
    v.status = VerdictStatus::pass;
  }
  return v;
}

/// Exact qubit test for elementary families w.r.t. the basis with Bloch
/// axis n: with R completing n to an orthogonal frame and A(t) the first
/// two columns of T(t) R, the family is elementary iff
/// M(t) = d/dt A^T A never has a positive eigenvalue. The margin is the
/// closed form M11 + M22 + sqrt((M11 - M22)^2 + (M12 + M21)^2), i.e.
/// twice the top eigenvalue of M.
inline Verdict check_elementary(
    const TimeGrid& grid, const std::vector<BlochDerivative>& sweep,
    const Vec3& axis, double tol_scale = defaults::derivative_tol,
    const std::optional<RMatrix3>& completion = {}) {
  RMatrix3 r = detail::validated_completion(axis, completion);
  Eigen::Matrix<double, 3, 2> r12 = r.leftCols<2>();
  Verdict v;
  v.grid = grid;
  v.mode = "exact";
  v.tolerance = detail::sweep_tolerance(sweep, tol_scale);
  double worst = -std::numeric_limits<double>::infinity();
  int at = 0;
  RMatrix2 worst_m = RMatrix2::Zero();
  for (int i = 0; i < int(sweep.size()); ++i) {
    RMatrix2 m = r12.transpose() * sweep[i].x * r12;
    double margin = m(0, 0) + m(1, 1) +
                    std::sqrt((m(0, 0) - m(1, 1)) * (m(0, 0) - m(1, 1)) +
                              (m(0, 1) + m(1, 0)) * (m(0, 1) + m(1, 0)));
    if (margin > worst) {
      worst = margin;
      at = i;
      worst_m = m;
    }
  }
  v.margin = worst;
  if (worst <= v.tolerance) {
    v.status = VerdictStatus::pass;
  } else {
    v.status = VerdictStatus::fail;
    Eigen::SelfAdjointEigenSolver<RMatrix2> es(worst_m);
    Vec3 dir = r12 * es.eigenvectors().col(1);
    v.witness = WitnessPoint{
        grid.at(at), dir,
        "fastest-growing direction orthogonal to the basis axis"};
  }
  return v;
}

inline Verdict check_elementary(const DynamicalMap& map, const Basis& b,
                                double tol_scale = defaults::derivative_tol,
                                int threads = 1,
                                const std::optional<RMatrix3>& completion = {},
                                int pair_samples = 200, unsigned seed = 1905u) {
  if (map.dim() == 2)
    return check_elementary(map.grid(), bloch_derivative_sweep(map, threads),
                            b.bloch_axis(), tol_scale, completion);
  if (b.dim() != map.dim())
    throw std::invalid_argument("check_elementary: basis dimension mismatch");
  // sampled path: pairs with equal diagonals in b
  auto draw = [&map, &b](std::mt19937_64& rng) {
    const int d = map.dim();
    CMatrix rho1 = detail::random_density_matrix(d, rng);
    CMatrix sigma = detail::random_density_matrix(d, rng);
    CMatrix delta = (sigma - rho1) -
                    dephasing_map(CMatrix(sigma - rho1), b);
    double s = 1.0;
    CMatrix rho2 = rho1 + delta;
    for (int it = 0; it < 60; ++it) {
      double mineig = Eigen::SelfAdjointEigenSolver<CMatrix>(
                          CMatrix(0.5 * (rho2 + rho2.adjoint())))
                          .eigenvalues()
                          .minCoeff();
      if (mineig >= 1e-12) break;
      s *= 0.5;
      rho2 = rho1 + s * delta;
    }
    return std::make_pair(rho1, rho2);
  };
  return detail::sampled_monotonicity(map, draw, pair_samples, seed,
                                      tol_scale);
}

/// The two singular-value screens for the exact qubit criterion:
/// necessary = the larger singular value of A(t) never increases along
/// the grid; sufficient = the larger singular value at t stays below
/// every earlier smaller singular value.
struct ScreenResult {
  Verdict necessary;
  Verdict sufficient;
};

inline ScreenResult elementary_screen(const DynamicalMap& map, const Basis& b,
                                      double value_tol = 1e-10,
                                      int threads = 1) {
  if (map.dim() != 2)
    throw std::invalid_argument("elementary_screen: qubit families only");
  const TimeGrid& g = map.grid();
  RMatrix3 r = orthogonal_completion(b.bloch_axis());
  Eigen::Matrix<double, 3, 2> r12 = r.leftCols<2>();
  std::vector<double> smax(g.n_samples), smin(g.n_samples);
  parallel_for_index(g.n_samples, threads, [&](int i) {
    RMatrix3 t = bloch_from_channel(map.at_index(i)).t;
    Eigen::JacobiSVD<RMatrix> dec(RMatrix(t * r12));
    smax[i] = dec.singularValues()(0);
    smin[i] = dec.singularValues()(1);
  });
  auto fold = [&](auto&& violation_at) {
    Verdict v;
    v.grid = g;
    v.mode = "exact";
    v.tolerance = value_tol;
    double worst = -std::numeric_limits<double>::infinity();
    int at = 1;
    for (int k = 1; k < g.n_samples; ++k) {
      double viol = violation_at(k);
      if (viol > worst) {
        worst = viol;
        at = k;
      }
    }
    v.margin = worst;
    if (worst <= v.tolerance) {
      v.status = VerdictStatus::pass;
    } else {
      v.status = VerdictStatus::fail;
      v.witness =
          WitnessPoint{g.at(at), std::nullopt, "singular-value screen"};
    }
    return v;
  };
  ScreenResult out{
      fold([&](int k) { return smax[k] - smax[k - 1]; }),
      Verdict{},
  };
  double prefix_min = smin[0];
  std::vector<double> prefix(g.n_samples, 0.0);
  for (int k = 1; k < g.n_samples; ++k) {
    prefix[k] = prefix_min;
    prefix_min = std::min(prefix_min, smin[k]);
  }
  out.sufficient = fold([&](int k) { return smax[k] - prefix[k]; });
  return out;
}

/// Containment part of the block-diagonal criterion: the frame-conjugated
/// map rho -> U(t) Lambda_t(rho) U(t)^dag must send basis-diagonal
/// operators to basis-diagonal operators and (unless diagonal_only)
/// off-diagonal ones to off-diagonal ones, checked on the operator basis
/// at every grid point. The overall verdict also requires
/// check_elementary to pass; its margin is the worst sub-check slack.
inline Verdict check_block_diagonal_elementary(
    const DynamicalMap& map, const Basis& b,
    const std::function<CMatrix(double)>& frame, bool diagonal_only = false,
    double containment_tol = defaults::commutant_tol,
    double tol_scale = defaults::derivative_tol, int threads = 1) {
  const int d = map.dim();
  if (b.dim() != d)
    throw std::invalid_argument(
        "check_block_diagonal_elementary: basis dimension mismatch");
  if (!frame)
    throw std::invalid_argument(
        "check_block_diagonal_elementary: missing frame U(t)");
  const TimeGrid& g = map.grid();
  std::vector<double> residuals(g.n_samples, 0.0);
  parallel_for_index(g.n_samples, threads, [&](int idx) {
    double t = g.at(idx);
    CMatrix u = frame(t);
    if (u.rows() != d || u.cols() != d ||
        max_abs(CMatrix(u.adjoint() * u - CMatrix::Identity(d, d))) >
            defaults::reconstruction_tol)
      throw std::invalid_argument(
          "check_block_diagonal_elementary: frame is not unitary");
    Channel c = map.at(t);
    double worst = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        if (diagonal_only && i != j) continue;
        CMatrix f = b.ket(i) * b.ket(j).adjoint();
        CMatrix img = u * c.apply(f) * u.adjoint();
        CMatrix w = b.matrix().adjoint() * img * b.matrix();
        for (int p = 0; p < d; ++p)
          for (int q = 0; q < d; ++q) {
            bool diag_entry = (p == q);
            if (diag_entry == (i == j)) continue;
            worst = std::max(worst, std::abs(w(p, q)));
          }
      }
    residuals[idx] = worst;
  });
  double residual = 0.0;
  int at = 0;
  for (int i = 0; i < g.n_samples; ++i)
    if (residuals[i] > residual) {
      residual = residuals[i];
      at = i;
    }
  Verdict elem = check_elementary(map, b, tol_scale, threads);
  Verdict v;
  v.grid = g;
  v.mode = elem.mode;
  v.tolerance = 0.0;
  v.margin = std::max(residual - containment_tol,
                      elem.margin - elem.tolerance);
  if (residual > containment_tol) {
    v.status = VerdictStatus::fail;
    v.witness = WitnessPoint{g.at(at), std::nullopt,
                             diagonal_only
                                 ? "diagonal subspace not preserved"
                                 : "diagonal/off-diagonal split not preserved"};
  } else if (elem.failed()) {
    v.status = VerdictStatus::fail;
    v.witness = elem.witness;
  } else if (!elem.passed()) {
    v.status = VerdictStatus::indeterminate;
    v.witness = elem.witness;
  } else {
    v.status = VerdictStatus::pass;
  }
  return v;
}

/// Monotonicity of the l1 coherence of U(t) Lambda_t(rho) U(t)^dag in
/// basis b, probed on a circle of pure states whose off-diagonal phases
/// cover [0, 2pi). The coherence is a norm of the off-diagonal part, so
/// the axis states at multiples of pi/2 only see the diagonal of the
/// underlying quadratic form; the full circle is what makes this verdict
/// agree with check_elementary on block-diagonal families. Assumes the
/// block-diagonal containment has been verified separately.
inline Verdict check_coherence_monotone(
    const DynamicalMap& map, const Basis& b,
    const std::function<CMatrix(double)>& frame,
    double tol = defaults::derivative_tol, int angles = 64, int threads = 1) {
  if (map.dim() != 2)
    throw std::invalid_argument(
        "check_coherence_monotone: qubit families only");
  if (b.dim() != 2)
    throw std::invalid_argument("check_coherence_monotone: need a qubit basis");
  if (!frame)
    throw std::invalid_argument("check_coherence_monotone: missing frame U(t)");
  if (angles < 4)
    throw std::invalid_argument("check_coherence_monotone: need >= 4 angles");
  const TimeGrid& g = map.grid();
  const double h = map.derivative_step();
  const CMatrix& u = b.matrix();
  CMatrix s1 = u * pauli(1) * u.adjoint();
  CMatrix s2 = u * pauli(2) * u.adjoint();
  std::vector<CMatrix> probes;
  probes.reserve(angles);
  for (int j = 0; j < angles; ++j) {
    double a = 2.0 * std::numbers::pi * j / angles;
    probes.push_back(0.5 *
                     (pauli(0) + std::cos(a) * s1 + std::sin(a) * s2));
  }
  struct Row {
    double worst = -std::numeric_limits<double>::infinity();
    int angle = 0;
  };
  std::vector<Row> rows(g.n_samples);
  parallel_for_index(g.n_samples, threads, [&](int i) {
    double t = g.at(i);
    std::array<double, 3> ts;
    std::array<double, 3> cs;
    if (t - h >= g.t_start && t + h <= g.t_end) {
      ts = {t + h, t - h, t};
      cs = {1.0, -1.0, 0.0};
    } else if (t - h < g.t_start) {
      ts = {t, t + h, t + 2.0 * h};
      cs = {-3.0, 4.0, -1.0};
    } else {
      ts = {t, t - h, t - 2.0 * h};
      cs = {3.0, -4.0, 1.0};
    }
    std::array<std::optional<Channel>, 3> chans;
    std::array<CMatrix, 3> frames;
    for (int k = 0; k < 3; ++k) {
      chans[k] = map.at(ts[k]);
      frames[k] = frame(ts[k]);
      if (frames[k].rows() != 2 || frames[k].cols() != 2)
        throw std::invalid_argument(
            "check_coherence_monotone: frame must be a qubit unitary");
    }
    for (int j = 0; j < angles; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        if (cs[k] == 0.0) continue;
        CMatrix img =
            frames[k] * chans[k]->apply(probes[j]) * frames[k].adjoint();
        acc += cs[k] * l1_coherence(img, b);
      }
      double deriv = acc / (2.0 * h);
      if (deriv > rows[i].worst) {
        rows[i].worst = deriv;
        rows[i].angle = j;
      }
    }
  });
  Verdict v;
  v.grid = g;
  v.mode = "exact";
  v.tolerance = tol;
  double worst = -std::numeric_limits<double>::infinity();
  int at = 0;
  for (int i = 0; i < g.n_samples; ++i)
    if (rows[i].worst > worst) {
      worst = rows[i].worst;
      at = i;
    }
  v.margin = worst;
  if (worst <= tol) {
    v.status = VerdictStatus::pass;
  } else {
    v.status = VerdictStatus::fail;
    double a = 2.0 * std::numbers::pi * rows[at].angle / angles;
    Vec3 s1_axis, s2_axis;
    for (int i = 0; i < 3; ++i) {
      s1_axis(i) = 0.5 * std::real((pauli(i + 1) * s1).trace());
      s2_axis(i) = 0.5 * std::real((pauli(i + 1) * s2).trace());
    }
    v.witness = WitnessPoint{g.at(at),
                             Vec3(std::cos(a) * s1_axis + std::sin(a) * s2_axis),
                             "coherence-increasing probe state"};
  }
  return v;
}

/// Precomposition closure: with omega dephasing-covariant in b, the
/// family t -> Lambda_t . omega is checked for elementariness w.r.t. b.
/// A non-covariant omega is rejected.
inline Verdict check_dio_composition(const DynamicalMap& map, const Basis& b,
                                     const Channel& omega,
                                     double tol_scale = defaults::derivative_tol,
                                     int threads = 1) {
  const int d = map.dim();
  if (omega.dim() != d)
    throw std::invalid_argument("check_dio_composition: dimension mismatch");
  if (!is_dio(omega, b).passed())
    throw std::invalid_argument(
        "check_dio_composition: channel is not dephasing-covariant in b");
  CMatrix om = omega.superop();
  if (map.kind() == DynamicalMap::Kind::analytic) {
    DynamicalMap pre = DynamicalMap::analytic(
        d, map.grid(), [map, om, d](double t) {
          return Channel::trusted(
              choi_of_superop(CMatrix(map.at(t).superop() * om), d));
        });
    return check_elementary(pre, b, tol_scale, threads);
  }
  std::vector<Channel> chans;
  chans.reserve(map.grid().n_samples);
  for (int i = 0; i < map.grid().n_samples; ++i)
    chans.push_back(Channel::trusted(
        choi_of_superop(CMatrix(map.at_index(i).superop() * om), d)));
  return check_elementary(DynamicalMap::tabulated(map.grid(), std::move(chans)),
                          b, tol_scale, threads);
}

} // namespace backflow
