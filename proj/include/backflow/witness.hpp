#pragma once

#include <backflow/dynamics.hpp>
#include <backflow/verdict.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace backflow {

/// Pauli expansion of a two-qubit operator,
/// rho = (1/4) (I + a.(sigma x I) + b.(I x sigma) + sum c_ij sigma_i x sigma_j):
/// `a` lives on the input copy of a Choi state, `b` on the output, and
/// `c` is the correlation matrix.
struct TwoQubitBloch {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  RMatrix3 c = RMatrix3::Zero();
};

inline TwoQubitBloch two_qubit_bloch(const CMatrix& rho) {
  if (rho.rows() != 4 || rho.cols() != 4)
    throw std::invalid_argument("two_qubit_bloch: need a 4 x 4 matrix");
  if (max_abs(CMatrix(rho - rho.adjoint())) > 1e-10)
    throw std::invalid_argument("two_qubit_bloch: matrix is not Hermitian");
  TwoQubitBloch out;
  CMatrix id = CMatrix::Identity(2, 2);
  for (int i = 0; i < 3; ++i) {
    out.a(i) = std::real((detail::kron(pauli(i + 1), id) * rho).trace());
    out.b(i) = std::real((detail::kron(id, pauli(i + 1)) * rho).trace());
    for (int j = 0; j < 3; ++j)
      out.c(i, j) =
          std::real((detail::kron(pauli(i + 1), pauli(j + 1)) * rho).trace());
  }
  return out;
}

inline CMatrix state_from_bloch(const TwoQubitBloch& p) {
  CMatrix id = CMatrix::Identity(2, 2);
  CMatrix rho = detail::kron(id, id);
  for (int i = 0; i < 3; ++i) {
    rho += p.a(i) * detail::kron(pauli(i + 1), id);
    rho += p.b(i) * detail::kron(id, pauli(i + 1));
    for (int j = 0; j < 3; ++j)
      rho += p.c(i, j) * detail::kron(pauli(i + 1), pauli(j + 1));
  }
  return 0.25 * rho;
}

/// The Choi matrix viewed as a bipartite state (input copy first).
inline CMatrix choi_state(const Channel& c) { return c.choi(); }

/// X(rho) = |b| + ||c||_1: at most 1 exactly on the convex hull of
/// classical-classical states with maximally mixed input marginal, and
/// up to 3 in general (the Choi state of the identity channel).
inline double x_functional(const TwoQubitBloch& p) {
  return p.b.norm() + trace_norm(RMatrix(p.c));
}

inline double x_functional(const CMatrix& rho) {
  return x_functional(two_qubit_bloch(rho));
}

inline double x_functional(const Channel& c) {
  if (c.dim() != 2)
    throw std::invalid_argument("x_functional: qubit channels only");
  return x_functional(choi_state(c));
}

/// Block form of the witnesses dual to the X functional:
/// W = (1/4) (I + s.(I x sigma) + sum t_ij sigma_i x sigma_j).
struct Witness {
  Vec3 s = Vec3::Zero();
  RMatrix3 t = RMatrix3::Zero();
};

inline CMatrix witness_operator(const Witness& w) {
  TwoQubitBloch p;
  p.b = w.s;
  p.c = w.t;
  return state_from_bloch(p);
}

/// Valid witnesses (|s| <= 1 and ||t|| <= 1 in operator norm) are
/// non-negative on every classical-classical state with maximally mixed
/// input marginal. The margin is the worst constraint violation.
inline Verdict is_valid_witness(const Witness& w,
                                double tol = defaults::witness_tol) {
  Verdict v;
  v.mode = "exact";
  v.tolerance = tol;
  v.margin = std::max(w.s.norm() - 1.0, operator_norm(RMatrix(w.t)) - 1.0);
  v.status = v.margin <= tol ? VerdictStatus::pass : VerdictStatus::fail;
  return v;
}

/// Witness minimizing Tr(W rho): s = -b/|b| and t = -O with O the
/// orthogonal polar factor of c, achieving Tr(W rho) = (1 - X(rho)) / 4.
inline Witness optimal_witness(const TwoQubitBloch& p) {
  Witness w;
  double nb = p.b.norm();
  if (nb > 1e-14) w.s = -p.b / nb;
  w.t = -polar_orthogonal(RMatrix(p.c));
  return w;
}

inline Witness optimal_witness(const CMatrix& rho) {
  return optimal_witness(two_qubit_bloch(rho));
}

inline double witness_value(const Witness& w, const TwoQubitBloch& p) {
  return 0.25 * (1.0 + w.s.dot(p.b) + (w.t.transpose() * p.c).trace());
}

inline double witness_value(const Witness& w, const CMatrix& rho) {
  return witness_value(w, two_qubit_bloch(rho));
}

/// Classical-classical state sum_ij p_ij |f_i><f_i| x |e_j><e_j|. Each
/// row of p must sum to 1/d so the input marginal is maximally mixed.
inline CMatrix cc_state(const RMatrix& p, const Basis& f, const Basis& e) {
  const int d = f.dim();
  if (e.dim() != d)
    throw std::invalid_argument("cc_state: basis dimensions differ");
  if (p.rows() != d || p.cols() != d)
    throw std::invalid_argument("cc_state: probability table has wrong shape");
  if (p.minCoeff() < -1e-12)
    throw std::invalid_argument("cc_state: negative probability");
  for (int i = 0; i < d; ++i)
    if (std::abs(p.row(i).sum() - 1.0 / d) > 1e-10)
      throw std::invalid_argument(
          "cc_state: input marginal is not maximally mixed");
  CMatrix rho = CMatrix::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      CMatrix fi = f.ket(i) * f.ket(i).adjoint();
      CMatrix ej = e.ket(j) * e.ket(j).adjoint();
      rho += p(i, j) * detail::kron(fi, ej);
    }
  return rho;
}

/// Scans the Choi states of a qubit family for X > 1. pass means the
/// refutation is established: at the witness time no convex mixture of
/// maps that are classical w.r.t. fixed bases can reproduce the family.
/// The tolerance is negative (margin = 1 - max X must fall below -tol),
/// so a borderline X close to 1 reports fail, i.e. no refutation.
inline Verdict refute_type0(const DynamicalMap& map,
                            double tol = defaults::witness_tol,
                            int threads = 1) {
  if (map.dim() != 2)
    throw std::invalid_argument("refute_type0: qubit families only");
  const TimeGrid& g = map.grid();
  std::vector<double> xs(g.n_samples);
  parallel_for_index(g.n_samples, threads, [&](int i) {
    xs[i] = x_functional(choi_state(map.at_index(i)));
  });
  double best = -std::numeric_limits<double>::infinity();
  int at = 0;
  for (int i = 0; i < g.n_samples; ++i)
    if (xs[i] > best) {
      best = xs[i];
      at = i;
    }
  Verdict v;
  v.grid = g;
  v.mode = "exact";
  v.tolerance = -tol;
  v.margin = 1.0 - best;
  if (v.margin <= v.tolerance) {
    v.status = VerdictStatus::pass;
    v.witness = WitnessPoint{g.at(at), std::nullopt,
                             "X exceeds the classical-mixture bound"};
  } else {
    v.status = VerdictStatus::fail;
    v.witness =
        WitnessPoint{g.at(at), std::nullopt, "largest X stays within bound"};
  }
  return v;
}

} // namespace backflow
