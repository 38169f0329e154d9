#pragma once

#include <backflow/errors.hpp>
#include <backflow/numerics.hpp>
#include <backflow/verdict.hpp>

#include <array>
#include <functional>
#include <vector>

namespace backflow {

/// Pauli matrices; index 0 is the identity.
inline const CMatrix& pauli(int i) {
  static const std::array<CMatrix, 4> s = [] {
    std::array<CMatrix, 4> m;
    for (auto& x : m) x = CMatrix::Zero(2, 2);
    m[0](0, 0) = 1.0;
    m[0](1, 1) = 1.0;
    m[1](0, 1) = 1.0;
    m[1](1, 0) = 1.0;
    m[2](0, 1) = Complex(0.0, -1.0);
    m[2](1, 0) = Complex(0.0, 1.0);
    m[3](0, 0) = 1.0;
    m[3](1, 1) = -1.0;
    return m;
  }();
  if (i < 0 || i > 3) throw std::invalid_argument("pauli: index out of range");
  return s[i];
}

inline Eigen::VectorXcd vec(const CMatrix& m) {
  return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline CMatrix unvec(const Eigen::VectorXcd& v, int d) {
  if (v.size() != d * d) throw std::invalid_argument("unvec: size mismatch");
  return Eigen::Map<const CMatrix>(v.data(), d, d);
}

/// Orthonormal basis of C^d, stored as the columns of a unitary.
class Basis {
 public:
  static Basis computational(int d) {
    if (d < 2) throw std::invalid_argument("Basis: dimension must be >= 2");
    return Basis(CMatrix::Identity(d, d));
  }

  static Basis from_columns(const CMatrix& u,
                            double tol = defaults::unitary_tol) {
    if (u.rows() != u.cols() || u.rows() < 2)
      throw std::invalid_argument("Basis: need a square matrix, d >= 2");
    if (max_abs(CMatrix(u.adjoint() * u -
                        CMatrix::Identity(u.cols(), u.cols()))) > tol)
      throw std::invalid_argument("Basis: columns are not orthonormal");
    return Basis(u);
  }

  /// Qubit eigenbasis of n.sigma: first column the +1 eigenvector.
  static Basis pauli_axis(const Vec3& n_in) {
    double len = n_in.norm();
    if (len < 1e-12)
      throw std::invalid_argument("Basis: axis must be nonzero");
    Vec3 n = n_in / len;
    double theta = std::atan2(std::hypot(n.x(), n.y()), n.z());
    double phi = std::atan2(n.y(), n.x());
    Complex eip(std::cos(phi), std::sin(phi));
    CMatrix u(2, 2);
    u(0, 0) = std::cos(theta / 2.0);
    u(1, 0) = eip * std::sin(theta / 2.0);
    u(0, 1) = -std::conj(eip) * std::sin(theta / 2.0);
    u(1, 1) = std::cos(theta / 2.0);
    return Basis(u);
  }

  int dim() const { return static_cast<int>(u_.rows()); }
  const CMatrix& matrix() const { return u_; }
  CMatrix ket(int i) const { return u_.col(i); }

  /// Bloch vector of the first basis ket (the qubit axis n).
  Vec3 bloch_axis() const {
    if (dim() != 2)
      throw std::invalid_argument("Basis: bloch_axis is qubit-only");
    CMatrix p = u_.col(0) * u_.col(0).adjoint();
    Vec3 n;
    for (int i = 0; i < 3; ++i) n(i) = std::real((pauli(i + 1) * p).trace());
    return n;
  }

 private:
  explicit Basis(CMatrix u) : u_(std::move(u)) {}
  CMatrix u_;
};

/// Column-stochastic matrix: entries >= 0, every column sums to 1.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(RMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 2)
      throw std::invalid_argument("StochasticMatrix: need square, d >= 2");
    if (m_.minCoeff() < -1e-12)
      throw std::invalid_argument("StochasticMatrix: negative entry");
    for (int j = 0; j < m_.cols(); ++j)
      if (std::abs(m_.col(j).sum() - 1.0) > 1e-10)
        throw std::invalid_argument("StochasticMatrix: column sum != 1");
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const RMatrix& matrix() const { return m_; }

 private:
  RMatrix m_;
};

/// Completely positive trace-preserving map, stored canonically as its
/// Choi matrix with the normalization
///   choi = (1/d) sum_ij E_ij (x) Lambda(E_ij),
/// i.e. block (i,j) of the Choi matrix is Lambda(E_ij)/d. With this
/// convention the Choi matrix is a two-party density matrix: trace one,
/// PSD, and its first marginal is I/d exactly when the map preserves
/// trace. The superoperator acting on column-major vec(rho) is kept
/// alongside; both views are immutable after construction.
class Channel {
 public:
  static Channel from_action(
      int d, const std::function<CMatrix(const CMatrix&)>& action,
      double eig_tol = defaults::cptp_eig_tol) {
    Channel c = trusted_action(d, action);
    c.validate(eig_tol);
    return c;
  }

  static Channel from_kraus(const std::vector<CMatrix>& ks,
                            double eig_tol = defaults::cptp_eig_tol) {
    if (ks.empty()) throw std::invalid_argument("Channel: empty Kraus list");
    const int d = static_cast<int>(ks[0].rows());
    CMatrix comp = CMatrix::Zero(d, d);
    for (const auto& k : ks) {
      if (k.rows() != d || k.cols() != d)
        throw std::invalid_argument("Channel: Kraus shapes disagree");
      comp += k.adjoint() * k;
    }
    if (max_abs(CMatrix(comp - CMatrix::Identity(d, d))) >
        defaults::reconstruction_tol)
      throw std::invalid_argument("Channel: Kraus completeness fails");
    return from_action(
        d,
        [&ks](const CMatrix& rho) {
          CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
          for (const auto& k : ks) out += k * rho * k.adjoint();
          return out;
        },
        eig_tol);
  }

  static Channel from_choi(const CMatrix& choi,
                           double eig_tol = defaults::cptp_eig_tol) {
    Channel c = trusted(choi);
    c.validate(eig_tol);
    return c;
  }

  /// Wraps a Choi matrix without CPTP validation. Meant for integrator
  /// output and propagator analysis, where small or deliberate
  /// negativity must be representable.
  static Channel trusted(const CMatrix& choi) {
    const int n = static_cast<int>(choi.rows());
    const int d = static_cast<int>(std::lround(std::sqrt(double(n))));
    if (choi.rows() != choi.cols() || d * d != n || d < 2)
      throw std::invalid_argument("Channel: Choi must be d^2 x d^2, d >= 2");
    CMatrix sup(n, n);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        CMatrix img = double(d) * choi.block(a * d, b * d, d, d);
        sup.col(a + b * d) = vec(img);
      }
    return Channel(d, choi, std::move(sup));
  }

  int dim() const { return d_; }
  const CMatrix& choi() const { return choi_; }
  const CMatrix& superop() const { return superop_; }

  CMatrix apply(const CMatrix& rho) const {
    if (rho.rows() != d_ || rho.cols() != d_)
      throw std::invalid_argument("Channel: state dimension mismatch");
    return unvec(superop_ * vec(rho), d_);
  }

  double min_choi_eigenvalue() const {
    CMatrix h = 0.5 * (choi_ + choi_.adjoint());
    return Eigen::SelfAdjointEigenSolver<CMatrix>(h).eigenvalues().minCoeff();
  }

  /// Residual of the trace-preservation marginal, max|Tr_2(choi) - I/d|.
  double marginal_residual() const {
    CMatrix m = CMatrix::Zero(d_, d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        m(i, j) = choi_.block(i * d_, j * d_, d_, d_).trace();
    return max_abs(CMatrix(m - CMatrix::Identity(d_, d_) / double(d_)));
  }

 private:
  Channel(int d, CMatrix choi, CMatrix sup)
      : d_(d), choi_(std::move(choi)), superop_(std::move(sup)) {}

  static Channel trusted_action(
      int d, const std::function<CMatrix(const CMatrix&)>& action) {
    if (d < 2) throw std::invalid_argument("Channel: dimension must be >= 2");
    CMatrix choi = CMatrix::Zero(d * d, d * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        CMatrix e = CMatrix::Zero(d, d);
        e(i, j) = 1.0;
        CMatrix img = action(e);
        if (img.rows() != d || img.cols() != d)
          throw std::invalid_argument("Channel: action changes dimension");
        choi.block(i * d, j * d, d, d) = img / double(d);
      }
    return trusted(choi);
  }

  void validate(double eig_tol) const {
    if (max_abs(CMatrix(choi_ - choi_.adjoint())) > 1e-10)
      throw std::invalid_argument("Channel: Choi is not Hermitian");
    double mine = min_choi_eigenvalue();
    if (mine < -eig_tol)
      throw cptp_error("Channel: Choi matrix is not PSD, min eigenvalue " +
                           std::to_string(mine),
                       mine);
    if (marginal_residual() > defaults::reconstruction_tol)
      throw std::invalid_argument("Channel: map is not trace-preserving");
  }

  int d_;
  CMatrix choi_;
  CMatrix superop_;
};

/// Choi matrix of an arbitrary superoperator (column-major vec
/// convention); no positivity is implied or checked.
inline CMatrix choi_of_superop(const CMatrix& sup, int d) {
  if (sup.rows() != d * d || sup.cols() != d * d)
    throw std::invalid_argument("choi_of_superop: size mismatch");
  CMatrix choi(d * d, d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      choi.block(a * d, b * d, d, d) =
          unvec(sup.col(a + b * d), d) / double(d);
  return choi;
}

/// Kraus operators from the Choi eigendecomposition, keeping eigenvalues
/// above rank_tol. Round-trips the channel action within numerical error.
inline std::vector<CMatrix> kraus_from_channel(
    const Channel& c, double rank_tol = defaults::kraus_rank_tol) {
  const int d = c.dim();
  CMatrix h = 0.5 * (c.choi() + c.choi().adjoint());
  auto eig = hermitian_eig(h, 1e-8);
  std::vector<CMatrix> ks;
  for (int m = 0; m < eig.values.size(); ++m) {
    double lam = eig.values(m);
    if (lam <= rank_tol) continue;
    CMatrix k(d, d);
    for (int i = 0; i < d; ++i)
      for (int kk = 0; kk < d; ++kk)
        k(kk, i) = std::sqrt(double(d) * lam) * eig.vectors(i * d + kk, m);
    ks.push_back(std::move(k));
  }
  if (ks.empty())
    throw std::invalid_argument("kraus_from_channel: Choi has no rank");
  return ks;
}

/// Affine Bloch form of a qubit channel: m -> r + T m.
struct BlochAffine {
  Vec3 r;
  RMatrix3 t;
};

inline BlochAffine bloch_from_channel(const Channel& c) {
  if (c.dim() != 2)
    throw std::invalid_argument("bloch_from_channel: qubit-only");
  BlochAffine b;
  CMatrix half = 0.5 * c.apply(CMatrix::Identity(2, 2));
  for (int i = 0; i < 3; ++i)
    b.r(i) = std::real((pauli(i + 1) * half).trace());
  for (int j = 0; j < 3; ++j) {
    CMatrix img = c.apply(pauli(j + 1));
    for (int i = 0; i < 3; ++i)
      b.t(i, j) = 0.5 * std::real((pauli(i + 1) * img).trace());
  }
  return b;
}

inline Channel channel_from_bloch(const BlochAffine& b,
                                  double eig_tol = defaults::cptp_eig_tol) {
  auto action = [b](const CMatrix& rho) {
    Complex tr = rho.trace();
    std::array<Complex, 3> m;
    for (int j = 0; j < 3; ++j) m[j] = (pauli(j + 1) * rho).trace();
    CMatrix out = 0.5 * tr * pauli(0);
    for (int i = 0; i < 3; ++i) {
      Complex coeff = 0.5 * b.r(i) * tr;
      for (int j = 0; j < 3; ++j) coeff += 0.5 * b.t(i, j) * m[j];
      out += coeff * pauli(i + 1);
    }
    return out;
  };
  return Channel::from_action(2, action, eig_tol);
}

/// Pauli channel in Bloch form (r, diag(lambda)). Throws cptp_error with
/// the most negative Choi eigenvalue if the pair is not CPTP.
inline Channel pauli_channel(const Vec3& lambda, const Vec3& r = Vec3::Zero(),
                             double eig_tol = defaults::cptp_eig_tol) {
  BlochAffine b;
  b.r = r;
  b.t = lambda.asDiagonal();
  return channel_from_bloch(b, eig_tol);
}

/// Classical map w.r.t. basis B: rho -> sum_ij M_ij <e_j|rho|e_j>
/// |e_i><e_i|. The Choi matrix is assembled numerically from this action.
inline Channel classical_channel(const StochasticMatrix& m, const Basis& b) {
  const int d = b.dim();
  if (m.dim() != d)
    throw std::invalid_argument("classical_channel: dimension mismatch");
  auto action = [&m, &b, d](const CMatrix& rho) {
    CMatrix out = CMatrix::Zero(d, d);
    for (int j = 0; j < d; ++j) {
      Complex pj = (b.ket(j).adjoint() * rho * b.ket(j))(0, 0);
      for (int i = 0; i < d; ++i)
        out += m.matrix()(i, j) * pj * (b.ket(i) * b.ket(i).adjoint());
    }
    return out;
  };
  return Channel::from_action(d, action);
}

/// Generalized classical map: rho -> U Lambda_cl(rho) U^dag.
inline Channel generalized_classical_channel(const StochasticMatrix& m,
                                             const Basis& b,
                                             const CMatrix& u) {
  const int d = b.dim();
  if (u.rows() != d || u.cols() != d)
    throw std::invalid_argument("generalized_classical: U dimension mismatch");
  if (max_abs(CMatrix(u.adjoint() * u - CMatrix::Identity(d, d))) >
      defaults::unitary_tol)
    throw std::invalid_argument("generalized_classical: U is not unitary");
  Channel cl = classical_channel(m, b);
  return Channel::from_action(d, [&](const CMatrix& rho) {
    return CMatrix(u * cl.apply(rho) * u.adjoint());
  });
}

/// Full dephasing w.r.t. B: keeps the B-diagonal of rho.
inline CMatrix dephasing_map(const CMatrix& rho, const Basis& b) {
  const int d = b.dim();
  if (rho.rows() != d || rho.cols() != d)
    throw std::invalid_argument("dephasing_map: dimension mismatch");
  CMatrix in_b = b.matrix().adjoint() * rho * b.matrix();
  CMatrix diag = in_b.diagonal().asDiagonal();
  return b.matrix() * diag * b.matrix().adjoint();
}

/// l1 coherence of rho in basis B: sum of |off-diagonal| entries.
inline double l1_coherence(const CMatrix& rho, const Basis& b) {
  const int d = b.dim();
  if (rho.rows() != d || rho.cols() != d)
    throw std::invalid_argument("l1_coherence: dimension mismatch");
  CMatrix in_b = b.matrix().adjoint() * rho * b.matrix();
  double acc = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) acc += std::abs(in_b(i, j));
  return acc;
}

/// Dephasing-covariant (DIO) test: the channel must commute with full
/// dephasing in B on every operator-basis element.
inline Verdict is_dio(const Channel& c, const Basis& b,
                      double tol = defaults::commutant_tol) {
  const int d = c.dim();
  if (b.dim() != d) throw std::invalid_argument("is_dio: dimension mismatch");
  double worst = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      CMatrix e = CMatrix::Zero(d, d);
      e(i, j) = 1.0;
      CMatrix lhs = c.apply(dephasing_map(e, b));
      CMatrix rhs = dephasing_map(c.apply(e), b);
      worst = std::max(worst, trace_norm(CMatrix(lhs - rhs)));
    }
  Verdict v;
  v.status = worst <= tol ? VerdictStatus::pass : VerdictStatus::fail;
  v.margin = worst;
  v.tolerance = tol;
  v.mode = "exact";
  return v;
}

} // namespace backflow
