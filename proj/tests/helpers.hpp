#pragma once

#include <backflow/channel.hpp>

#include <random>

namespace testutil {

using backflow::Basis;
using backflow::Channel;
using backflow::CMatrix;
using backflow::Complex;
using backflow::RMatrix;
using backflow::Vec3;

inline CMatrix random_complex(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = Complex(n(rng), n(rng));
  return m;
}

inline CMatrix random_hermitian(int d, std::mt19937_64& rng) {
  CMatrix g = random_complex(d, d, rng);
  return 0.5 * (g + g.adjoint());
}

inline CMatrix random_density(int d, std::mt19937_64& rng) {
  CMatrix g = random_complex(d, d, rng);
  CMatrix rho = g * g.adjoint();
  return rho / rho.trace();
}

inline CMatrix random_unitary(int d, std::mt19937_64& rng) {
  CMatrix g = random_complex(d, d, rng);
  Eigen::HouseholderQR<CMatrix> qr(g);
  CMatrix q = qr.householderQ();
  CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i) {
    Complex ph = r(i, i) / std::abs(r(i, i));
    q.col(i) *= ph;
  }
  return q;
}

inline Vec3 random_unit3(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6) v = Vec3(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline Basis random_basis(int d, std::mt19937_64& rng) {
  return Basis::from_columns(random_unitary(d, rng));
}

inline Channel random_channel(int d, int kraus_count, std::mt19937_64& rng) {
  std::vector<CMatrix> gs;
  CMatrix s = CMatrix::Zero(d, d);
  for (int i = 0; i < kraus_count; ++i) {
    gs.push_back(random_complex(d, d, rng));
    s += gs.back().adjoint() * gs.back();
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(s);
  CMatrix inv_sqrt = es.eigenvectors() *
                     es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                     es.eigenvectors().adjoint();
  std::vector<CMatrix> ks;
  for (auto& g : gs) ks.push_back(g * inv_sqrt);
  return Channel::from_kraus(ks);
}

inline RMatrix random_column_stochastic(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RMatrix m(d, d);
  for (int j = 0; j < d; ++j) {
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
      m(i, j) = u(rng);
      sum += m(i, j);
    }
    m.col(j) /= sum;
  }
  return m;
}

} // namespace testutil
