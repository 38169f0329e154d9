#pragma once

#include <backflow/channel.hpp>
#include <backflow/numerics.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace backflow {

/// Piecewise-polynomial rate function of time. Pieces are evaluated on
/// [from, to) with the final piece keeping its right endpoint; outside
/// all pieces the rate is zero. Integrals use the exact per-piece
/// antiderivative, so piece boundaries never cost accuracy.
class Rate {
 public:
  struct Piece {
    double from;
    double to;
    std::vector<double> coeffs; // ascending powers
  };

  Rate() = default; // identically zero

  static Rate constant(double c) { return polynomial({c}); }

  /// One polynomial valid at all times.
  static Rate polynomial(std::vector<double> coeffs) {
    Piece p{-std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity(), std::move(coeffs)};
    Rate r;
    r.pieces_.push_back(std::move(p));
    return r;
  }

  static Rate piecewise(std::vector<Piece> pieces) {
    if (pieces.empty()) throw std::invalid_argument("Rate: no pieces");
    for (const auto& p : pieces)
      if (!(p.from < p.to))
        throw std::invalid_argument("Rate: piece needs from < to");
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i)
      if (pieces[i + 1].from < pieces[i].to - 1e-15)
        throw std::invalid_argument("Rate: pieces overlap or are unsorted");
    Rate r;
    r.pieces_ = std::move(pieces);
    return r;
  }

  double operator()(double t) const {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const auto& p = pieces_[i];
      bool last = i + 1 == pieces_.size();
      if (t >= p.from && (t < p.to || (last && t <= p.to)))
        return eval_poly(p.coeffs, t);
    }
    return 0.0;
  }

  /// Exact integral over [a, b].
  double integral(double a, double b) const {
    if (a > b) throw std::invalid_argument("Rate: integral needs a <= b");
    double acc = 0.0;
    for (const auto& p : pieces_) {
      double lo = std::max(a, p.from);
      double hi = std::min(b, p.to);
      if (hi > lo)
        acc += antiderivative(p.coeffs, hi) - antiderivative(p.coeffs, lo);
    }
    return acc;
  }

  /// Finite piece boundaries, sorted and deduplicated.
  std::vector<double> breakpoints() const {
    std::vector<double> bs;
    for (const auto& p : pieces_) {
      if (std::isfinite(p.from)) bs.push_back(p.from);
      if (std::isfinite(p.to)) bs.push_back(p.to);
    }
    std::sort(bs.begin(), bs.end());
    bs.erase(std::unique(bs.begin(), bs.end()), bs.end());
    return bs;
  }

 private:
  static double eval_poly(const std::vector<double>& c, double t) {
    double v = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) v = v * t + c[k];
    return v;
  }

  static double antiderivative(const std::vector<double>& c, double t) {
    double v = 0.0;
    for (std::size_t k = c.size(); k-- > 0;)
      v = (v + c[k] / double(k + 1)) * t;
    return v;
  }

  std::vector<Piece> pieces_;
};

namespace detail {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

} // namespace detail

/// Time-dependent generator in diagonal dissipator form,
///   L_t(rho) = sum_i gamma_i(t) (L_i rho L_i^dag - (1/2){L_i^dag L_i, rho}).
/// The constant dissipator superoperators are precomputed and each is
/// checked to annihilate the trace on every operator-basis element.
class GKLSGenerator {
 public:
  using RateFn = std::function<double(double)>;

  GKLSGenerator(int d, std::vector<RateFn> rates, std::vector<CMatrix> jumps,
                std::vector<double> breakpoints = {})
      : d_(d), rates_(std::move(rates)), breakpoints_(std::move(breakpoints)) {
    if (d < 2)
      throw std::invalid_argument("GKLSGenerator: dimension must be >= 2");
    if (rates_.empty() || rates_.size() != jumps.size())
      throw std::invalid_argument("GKLSGenerator: rates/jumps mismatch");
    for (const auto& r : rates_)
      if (!r) throw std::invalid_argument("GKLSGenerator: empty rate");
    CMatrix id = CMatrix::Identity(d, d);
    Eigen::VectorXcd trace_form = vec(CMatrix(id));
    for (const auto& l : jumps) {
      if (l.rows() != d || l.cols() != d)
        throw std::invalid_argument("GKLSGenerator: jump operator shape");
      CMatrix ldl = l.adjoint() * l;
      CMatrix dis = detail::kron(l.conjugate(), l) -
                    0.5 * detail::kron(id, ldl) -
                    0.5 * detail::kron(CMatrix(ldl.transpose()), id);
      double residual =
          (trace_form.adjoint() * dis).cwiseAbs().maxCoeff();
      if (residual > 1e-12 * std::max(1.0, max_abs(dis)))
        throw std::invalid_argument(
            "GKLSGenerator: dissipator does not annihilate the trace");
      dissipators_.push_back(std::move(dis));
    }
    std::sort(breakpoints_.begin(), breakpoints_.end());
    breakpoints_.erase(
        std::unique(breakpoints_.begin(), breakpoints_.end()),
        breakpoints_.end());
  }

  GKLSGenerator(int d, const std::vector<Rate>& rates,
                std::vector<CMatrix> jumps)
      : GKLSGenerator(d, wrap(rates), std::move(jumps), merge(rates)) {}

  int dim() const { return d_; }
  std::size_t terms() const { return rates_.size(); }
  double rate_value(std::size_t i, double t) const { return rates_.at(i)(t); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  /// Superoperator of L_t.
  CMatrix superop(double t) const {
    CMatrix acc = CMatrix::Zero(d_ * d_, d_ * d_);
    for (std::size_t i = 0; i < dissipators_.size(); ++i)
      acc += rates_[i](t) * dissipators_[i];
    return acc;
  }

 private:
  static std::vector<RateFn> wrap(const std::vector<Rate>& rates) {
    std::vector<RateFn> fns;
    fns.reserve(rates.size());
    for (const auto& r : rates)
      fns.push_back([r](double t) { return r(t); });
    return fns;
  }

  static std::vector<double> merge(const std::vector<Rate>& rates) {
    std::vector<double> bs;
    for (const auto& r : rates)
      for (double x : r.breakpoints()) bs.push_back(x);
    return bs;
  }

  int d_;
  std::vector<RateFn> rates_;
  std::vector<CMatrix> dissipators_;
  std::vector<double> breakpoints_;
};

/// A time-parametrized family of channels on a uniform grid. Analytic
/// maps carry a sampler valid anywhere inside the grid span and cache
/// validated grid-point evaluations; tabulated maps are defined exactly
/// on grid points and refuse to interpolate.
class DynamicalMap {
 public:
  enum class Kind { analytic, tabulated };

  static DynamicalMap analytic(int d, const TimeGrid& grid,
                               std::function<Channel(double)> sampler) {
    if (d < 2)
      throw std::invalid_argument("DynamicalMap: dimension must be >= 2");
    if (!sampler) throw std::invalid_argument("DynamicalMap: empty sampler");
    DynamicalMap m(d, grid, Kind::analytic);
    m.sampler_ = std::move(sampler);
    m.cache_ = std::make_shared<Cache>(grid.n_samples);
    return m;
  }

  static DynamicalMap tabulated(const TimeGrid& grid,
                                std::vector<Channel> channels) {
    if (static_cast<int>(channels.size()) != grid.n_samples)
      throw std::invalid_argument(
          "DynamicalMap: need one channel per grid point");
    const int d = channels.front().dim();
    for (const auto& c : channels)
      if (c.dim() != d)
        throw std::invalid_argument("DynamicalMap: channel dimensions differ");
    DynamicalMap m(d, grid, Kind::tabulated);
    m.table_ =
        std::make_shared<const std::vector<Channel>>(std::move(channels));
    return m;
  }

  int dim() const { return d_; }
  Kind kind() const { return kind_; }
  const TimeGrid& grid() const { return grid_; }

  /// Channel at time t. Analytic maps accept any t inside the grid span;
  /// tabulated maps require t to coincide with a grid point.
  Channel at(double t) const {
    if (kind_ == Kind::tabulated) {
      int i = grid_.snap_index(t, 1e-9 * time_scale());
      if (i < 0)
        throw std::invalid_argument(
            "DynamicalMap: tabulated map sampled off-grid");
      return (*table_)[i];
    }
    if (!grid_.contains(t, 1e-9 * time_scale()))
      throw std::invalid_argument("DynamicalMap: time outside grid span");
    int i = grid_.snap_index(t, 1e-13 * time_scale());
    if (i >= 0) return cached(i);
    return sampler_(t);
  }

  Channel at_index(int i) const {
    if (i < 0 || i >= grid_.n_samples)
      throw std::invalid_argument("DynamicalMap: index out of range");
    return kind_ == Kind::tabulated ? (*table_)[i] : cached(i);
  }

  /// Step used by finite-difference consumers.
  double derivative_step() const {
    return kind_ == Kind::analytic ? defaults::analytic_step : grid_.step();
  }

  /// Same family on a different grid. Analytic maps only require the new
  /// span to fit inside the old one; tabulated maps additionally require
  /// every new point to land on an existing sample.
  DynamicalMap with_grid(const TimeGrid& sub) const {
    if (kind_ == Kind::analytic) {
      if (!grid_.contains(sub.t_start, 1e-9 * time_scale()) ||
          !grid_.contains(sub.t_end, 1e-9 * time_scale()))
        throw std::invalid_argument("DynamicalMap: subgrid outside span");
      DynamicalMap m(d_, sub, Kind::analytic);
      m.sampler_ = sampler_;
      m.cache_ = std::make_shared<Cache>(sub.n_samples);
      m.warnings_ = warnings_;
      return m;
    }
    std::vector<Channel> chans;
    chans.reserve(sub.n_samples);
    for (double t : sub.points()) {
      int i = grid_.snap_index(t, 1e-9 * time_scale());
      if (i < 0)
        throw std::invalid_argument(
            "DynamicalMap: subgrid point is not tabulated");
      chans.push_back((*table_)[i]);
    }
    DynamicalMap m = tabulated(sub, std::move(chans));
    m.warnings_ = warnings_;
    return m;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  struct Cache {
    explicit Cache(int n) : slots(n) {}
    std::mutex mu;
    std::vector<std::optional<Channel>> slots;
  };

  DynamicalMap(int d, const TimeGrid& grid, Kind kind)
      : d_(d), grid_(grid), kind_(kind) {}

  double time_scale() const {
    return std::max(
        {1.0, std::abs(grid_.t_start), std::abs(grid_.t_end)});
  }

  Channel cached(int i) const {
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      if (cache_->slots[i]) return *cache_->slots[i];
    }
    Channel c = sampler_(grid_.at(i)); // pure; duplicate work is benign
    std::lock_guard<std::mutex> lock(cache_->mu);
    if (!cache_->slots[i]) cache_->slots[i] = std::move(c);
    return *cache_->slots[i];
  }

  int d_;
  TimeGrid grid_;
  Kind kind_;
  std::function<Channel(double)> sampler_;
  std::shared_ptr<Cache> cache_;
  std::shared_ptr<const std::vector<Channel>> table_;
  std::vector<std::string> warnings_;
};

/// Integrates S'(t) = L_sup(t) S(t) with S(0) = Id by classical RK4,
/// with substeps no longer than max_substep and segment edges aligned to
/// the generator's rate breakpoints. The returned map is tabulated from
/// unvalidated Choi matrices; eigenvalue drift below -1e-6 is recorded
/// as a warning (and drift below the CPTP tolerance too, while every
/// rate has stayed nonnegative), never thrown.
inline DynamicalMap evolve_from_generator(const GKLSGenerator& g,
                                          const TimeGrid& grid,
                                          double max_substep = 1e-3) {
  if (grid.t_start < 0.0)
    throw std::invalid_argument("evolve_from_generator: grid starts before 0");
  if (!(max_substep > 0.0))
    throw std::invalid_argument("evolve_from_generator: bad substep");
  const int d = g.dim();
  const int n = d * d;
  CMatrix s = CMatrix::Identity(n, n);
  bool rates_nonneg = true;
  std::vector<std::string> warnings;
  std::vector<Channel> channels;
  channels.reserve(grid.n_samples);

  auto probe_rates = [&](double t) {
    for (std::size_t i = 0; i < g.terms(); ++i)
      if (g.rate_value(i, t) < -1e-12) rates_nonneg = false;
  };

  auto march = [&](double a, double b) {
    if (b <= a) return;
    std::vector<double> edges{a};
    for (double x : g.breakpoints())
      if (x > a + 1e-15 && x < b - 1e-15) edges.push_back(x);
    std::sort(edges.begin(), edges.end());
    edges.push_back(b);
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      double lo = edges[e], hi = edges[e + 1];
      int steps = std::max(1, int(std::ceil((hi - lo) / max_substep)));
      double h = (hi - lo) / steps;
      for (int k = 0; k < steps; ++k) {
        double t = lo + k * h;
        probe_rates(t);
        probe_rates(t + 0.5 * h);
        CMatrix a1 = g.superop(t);
        CMatrix a2 = g.superop(t + 0.5 * h);
        CMatrix a4 = g.superop(t + h);
        CMatrix k1 = a1 * s;
        CMatrix k2 = a2 * (s + 0.5 * h * k1);
        CMatrix k3 = a2 * (s + 0.5 * h * k2);
        CMatrix k4 = a4 * (s + h * k3);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      probe_rates(hi);
    }
  };

  double prev = 0.0;
  for (int i = 0; i < grid.n_samples; ++i) {
    double t = grid.at(i);
    march(prev, t);
    prev = t;
    CMatrix choi = choi_of_superop(s, d);
    choi = 0.5 * (choi + choi.adjoint()).eval();
    Channel c = Channel::trusted(choi);
    double mineig = c.min_choi_eigenvalue();
    if (mineig < -1e-6)
      warnings.push_back("integration left the CPTP set: choi eigenvalue " +
                         std::to_string(mineig) + " at t=" +
                         std::to_string(t));
    else if (rates_nonneg && mineig < -defaults::cptp_eig_tol)
      warnings.push_back("choi eigenvalue " + std::to_string(mineig) +
                         " at t=" + std::to_string(t) +
                         " despite nonnegative rates");
    channels.push_back(std::move(c));
  }
  DynamicalMap m = DynamicalMap::tabulated(grid, std::move(channels));
  for (auto& w : warnings) m.add_warning(std::move(w));
  return m;
}

/// One component of a convex mixture, optionally annotated with the
/// basis it is elementary for and the frame U(t) used by the
/// decomposition checks.
struct MixtureComponent {
  DynamicalMap map;
  std::optional<Basis> basis;
  std::function<CMatrix(double)> frame;
};

/// Time-independent convex combination of dynamical maps.
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<MixtureComponent> components;
};

/// Mixes the components as Choi-matrix convex combinations (exactly
/// linear, so shifted Bloch components mix correctly too). The result is
/// analytic when every component is; otherwise it is tabulated on the
/// shared grid.
inline DynamicalMap mix(const MixtureSpec& spec) {
  if (spec.components.empty())
    throw std::invalid_argument("mix: no components");
  if (spec.weights.size() != spec.components.size())
    throw std::invalid_argument("mix: one weight per component");
  double sum = 0.0;
  for (double w : spec.weights) {
    if (w < 0.0) throw std::invalid_argument("mix: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("mix: weights must sum to 1");
  const TimeGrid& g0 = spec.components.front().map.grid();
  const int d = spec.components.front().map.dim();
  bool all_analytic = true;
  for (const auto& comp : spec.components) {
    if (comp.map.dim() != d)
      throw std::invalid_argument("mix: component dimensions differ");
    const TimeGrid& g = comp.map.grid();
    if (std::abs(g.t_start - g0.t_start) > 1e-12 ||
        std::abs(g.t_end - g0.t_end) > 1e-12 || g.n_samples != g0.n_samples)
      throw std::invalid_argument("mix: components must share a grid");
    if (comp.map.kind() != DynamicalMap::Kind::analytic) all_analytic = false;
  }
  std::vector<double> weights = spec.weights;
  std::vector<DynamicalMap> maps;
  maps.reserve(spec.components.size());
  for (const auto& comp : spec.components) maps.push_back(comp.map);
  if (all_analytic) {
    auto sampler = [weights, maps, d](double t) {
      CMatrix choi = CMatrix::Zero(d * d, d * d);
      for (std::size_t i = 0; i < maps.size(); ++i)
        choi += weights[i] * maps[i].at(t).choi();
      return Channel::from_choi(choi);
    };
    return DynamicalMap::analytic(d, g0, sampler);
  }
  std::vector<Channel> chans;
  chans.reserve(g0.n_samples);
  for (int k = 0; k < g0.n_samples; ++k) {
    CMatrix choi = CMatrix::Zero(d * d, d * d);
    for (std::size_t i = 0; i < maps.size(); ++i)
      choi += weights[i] * maps[i].at_index(k).choi();
    chans.push_back(Channel::from_choi(choi));
  }
  return DynamicalMap::tabulated(g0, std::move(chans));
}

/// Contraction parameter of the piecewise depolarizing family: a
/// quadratic relaxation on [0, t0) joined continuously (both branches
/// give (2-eps)/6 at t0) to a damped cosine on [t0, inf).
inline double depolarizing_lambda(double t, double eps, double t0) {
  if (t < t0)
    return (4.0 + eps) / (6.0 * t0 * t0) * (t - t0) * (t - t0) +
           (2.0 - eps) / 6.0;
  return 1.0 / 6.0 + (1.0 - eps) / 6.0 * std::cos(t - t0);
}

/// Depolarizing family with lambda(t) = depolarizing_lambda.
inline DynamicalMap depolarizing_example(double eps, double t0,
                                         const TimeGrid& grid) {
  if (!(eps > 0.0))
    throw std::invalid_argument("depolarizing_example: eps must be > 0");
  if (!(t0 > 0.0))
    throw std::invalid_argument("depolarizing_example: t0 must be > 0");
  auto sampler = [eps, t0](double t) {
    double l = depolarizing_lambda(t, eps, t0);
    return pauli_channel(Vec3(l, l, l));
  };
  return DynamicalMap::analytic(2, grid, sampler);
}

/// The three-classical-map decomposition of the depolarizing family,
/// valid on grids starting at or after t0, where each component is a
/// bistochastic classical map w.r.t. one Pauli eigenbasis. Components
/// carry their basis and the identity frame.
inline MixtureSpec depolarizing_mixture(double eps, double t0,
                                        const TimeGrid& grid) {
  if (!(eps > 0.0))
    throw std::invalid_argument("depolarizing_mixture: eps must be > 0");
  if (grid.t_start < t0 - 1e-12)
    throw std::invalid_argument(
        "depolarizing_mixture: grid must start at or after t0");
  MixtureSpec spec;
  spec.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  for (int k = 1; k <= 3; ++k) {
    Basis b = Basis::pauli_axis(Vec3::Unit(k - 1));
    auto sampler = [eps, t0, b](double t) {
      double m11 = 0.75 + (1.0 - eps) / 4.0 * std::cos(t - t0);
      RMatrix m(2, 2);
      m << m11, 1.0 - m11, 1.0 - m11, m11;
      return classical_channel(StochasticMatrix(m), b);
    };
    spec.components.push_back(MixtureComponent{
        DynamicalMap::analytic(2, grid, sampler), b,
        [](double) { return CMatrix(CMatrix::Identity(2, 2)); }});
  }
  return spec;
}

/// Shared rate of the two non-distinguished axes of the Pauli family:
/// gamma_a(t) = 2t^2 - 6t + 4, negative exactly on (1, 2).
inline Rate pauli_example_rate_a() {
  return Rate::polynomial({4.0, -6.0, 2.0});
}

/// Rate of the distinguished axis: zero outside [1, 2] and
/// -gamma_a + eps inside, so gamma_a + gamma_b = eps > 0 there.
inline Rate pauli_example_rate_b(double eps) {
  return Rate::piecewise({{1.0, 2.0, {-4.0 + eps, 6.0, -2.0}}});
}

/// Pauli family whose k-th axis carries rate gamma_b and the other two
/// carry gamma_a: lambda_i(t) = exp(-Gamma_j(t) - Gamma_k(t)) over
/// cyclic index triples, with the Gammas integrated exactly.
inline DynamicalMap pauli_example(int k, double eps, const TimeGrid& grid) {
  if (k < 1 || k > 3)
    throw std::invalid_argument("pauli_example: k must be 1, 2 or 3");
  if (!(eps > 0.0))
    throw std::invalid_argument("pauli_example: eps must be > 0");
  if (grid.t_start < 0.0)
    throw std::invalid_argument("pauli_example: grid starts before 0");
  Rate ga = pauli_example_rate_a();
  Rate gb = pauli_example_rate_b(eps);
  auto sampler = [k, ga, gb](double t) {
    std::array<double, 3> big;
    for (int i = 1; i <= 3; ++i)
      big[i - 1] = (i == k ? gb : ga).integral(0.0, t);
    Vec3 lam;
    for (int i = 0; i < 3; ++i)
      lam(i) = std::exp(-big[(i + 1) % 3] - big[(i + 2) % 3]);
    return pauli_channel(lam);
  };
  return DynamicalMap::analytic(2, grid, sampler);
}

/// Equal mixture of the three Pauli components, each annotated with its
/// distinguished eigenbasis and the identity frame.
inline MixtureSpec pauli_mixture(double eps, const TimeGrid& grid) {
  MixtureSpec spec;
  spec.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  for (int k = 1; k <= 3; ++k)
    spec.components.push_back(MixtureComponent{
        pauli_example(k, eps, grid), Basis::pauli_axis(Vec3::Unit(k - 1)),
        [](double) { return CMatrix(CMatrix::Identity(2, 2)); }});
  return spec;
}

/// Isotropic contraction of the mixed Pauli family,
/// (exp(-2 Gamma_a) + 2 exp(-Gamma_a - Gamma_b)) / 3.
inline double pauli_mixture_lambda(double t, double eps) {
  double ga = pauli_example_rate_a().integral(0.0, t);
  double gb = pauli_example_rate_b(eps).integral(0.0, t);
  return (std::exp(-2.0 * ga) + 2.0 * std::exp(-ga - gb)) / 3.0;
}

/// The eps at which lambda(2) - lambda(1) of the mixed Pauli family
/// changes sign (the contraction stops rebounding), found by bisection.
/// The difference is strictly decreasing in eps, positive near 0 and
/// negative at 1.
inline double pauli_threshold() {
  auto f = [](double eps) {
    return pauli_mixture_lambda(2.0, eps) - pauli_mixture_lambda(1.0, eps);
  };
  double lo = 1e-9, hi = 1.0;
  if (!(f(lo) > 0.0) || !(f(hi) < 0.0))
    throw std::runtime_error("pauli_threshold: bracket failed");
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Family of non-unital channels with Bloch data T = diag(l1, l1, l1^2)
/// and shift (0, 0, 1 - l1^2), l1 = 1/2 + sin(t)/4. Each channel is
/// rank-2 and an extreme point of the CPTP set for t in (0, pi/2).
inline DynamicalMap extremal_example(const TimeGrid& grid) {
  if (!(grid.t_start > 0.0) ||
      !(grid.t_end < std::numbers::pi / 2.0))
    throw std::invalid_argument(
        "extremal_example: grid must lie inside (0, pi/2)");
  auto sampler = [](double t) {
    double l1 = 0.5 + 0.25 * std::sin(t);
    double l3 = l1 * l1;
    return pauli_channel(Vec3(l1, l1, l3), Vec3(0.0, 0.0, 1.0 - l3));
  };
  return DynamicalMap::analytic(2, grid, sampler);
}

/// ||Lambda_t(rho1 - rho2)||_1 at every grid point.
inline std::vector<double> trace_distance_series(const DynamicalMap& map,
                                                 const CMatrix& rho1,
                                                 const CMatrix& rho2) {
  const int d = map.dim();
  auto check_state = [d](const CMatrix& rho, const char* which) {
    if (rho.rows() != d || rho.cols() != d)
      throw std::invalid_argument(std::string("trace_distance_series: ") +
                                  which + " has wrong dimension");
    if (max_abs(CMatrix(rho - rho.adjoint())) > 1e-10 ||
        std::abs(rho.trace() - Complex(1.0)) > 1e-10)
      throw std::invalid_argument(std::string("trace_distance_series: ") +
                                  which + " is not a state");
  };
  check_state(rho1, "rho1");
  check_state(rho2, "rho2");
  CMatrix diff = rho1 - rho2;
  std::vector<double> out(map.grid().n_samples);
  for (int i = 0; i < map.grid().n_samples; ++i)
    out[i] = trace_norm(CMatrix(map.at_index(i).apply(diff)));
  return out;
}

/// T(t) plus X(t) = d/dt T^T(t) T(t) for a qubit family, computed with
/// bounded central differences at the map's derivative step. X is
/// symmetrized after an asymmetry check; one_sided flags boundary
/// stencils.
struct BlochDerivative {
  RMatrix3 t;
  RMatrix3 x;
  bool one_sided = false;
};

inline BlochDerivative bloch_T_derivative(const DynamicalMap& map, double t) {
  if (map.dim() != 2)
    throw std::invalid_argument("bloch_T_derivative: qubit families only");
  const TimeGrid& g = map.grid();
  double scale = std::max({1.0, std::abs(g.t_start), std::abs(g.t_end)});
  if (!g.contains(t, 1e-9 * scale))
    throw std::invalid_argument("bloch_T_derivative: t outside grid span");
  double h = map.derivative_step();
  auto gram = [&map](double s) {
    RMatrix3 tt = bloch_from_channel(map.at(s)).t;
    return RMatrix(tt.transpose() * tt);
  };
  BlochDerivative out;
  out.t = bloch_from_channel(map.at(t)).t;
  out.one_sided = (t - h < g.t_start) || (t + h > g.t_end);
  RMatrix x = central_diff_bounded(gram, t, h, g.t_start, g.t_end);
  if (max_abs(RMatrix(x - x.transpose())) > 1e-9 * std::max(1.0, max_abs(x)))
    throw std::runtime_error("bloch_T_derivative: asymmetric derivative");
  out.x = 0.5 * (x + x.transpose());
  return out;
}

} // namespace backflow
