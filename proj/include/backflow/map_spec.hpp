#pragma once

#include <backflow/dynamics.hpp>

#include <json.hpp>

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace backflow {

/// Reports stay diff-stable across runs, so insertion order matters.
using json = nlohmann::ordered_json;

/// Schema violation in a map-specification document. The message names
/// the offending field by its path inside the document.
struct spec_error : std::invalid_argument {
  explicit spec_error(const std::string& what) : std::invalid_argument(what) {}
};

/// A dynamical map built from a specification document, with the
/// declared kind and, for mixtures, the annotated decomposition.
struct MapBundle {
  DynamicalMap map;
  std::string kind;
  std::optional<MixtureSpec> mixture;
};

namespace detail {

[[noreturn]] inline void fail_spec(const std::string& path,
                                   const std::string& why) {
  throw spec_error("map spec: " + path + ": " + why);
}

inline void check_keys(const json& j, std::initializer_list<const char*> keys,
                       const std::string& path) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) known = true;
    if (!known) fail_spec(path + "." + item.key(), "unknown field");
  }
}

inline const json& require_field(const json& j, const char* key,
                                 const std::string& path) {
  if (!j.is_object()) fail_spec(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end())
    fail_spec(path + "." + key, "missing required field");
  return *it;
}

inline double parse_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail_spec(path, "expected a number");
  return j.get<double>();
}

inline int parse_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail_spec(path, "expected an integer");
  return j.get<int>();
}

inline Complex parse_complex(const json& j, const std::string& path) {
  if (j.is_number()) return Complex(j.get<double>(), 0.0);
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return Complex(j[0].get<double>(), j[1].get<double>());
  fail_spec(path, "expected a number or an [re, im] pair");
}

inline CMatrix parse_complex_matrix(const json& j, int rows, int cols,
                                    const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    fail_spec(path, "expected " + std::to_string(rows) + " rows");
  CMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j[i];
    std::string rp = path + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      fail_spec(rp, "expected " + std::to_string(cols) + " entries");
    for (int k = 0; k < cols; ++k)
      m(i, k) = parse_complex(row[k], rp + "[" + std::to_string(k) + "]");
  }
  return m;
}

inline RMatrix parse_real_matrix(const json& j, int rows, int cols,
                                 const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    fail_spec(path, "expected " + std::to_string(rows) + " rows");
  RMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j[i];
    std::string rp = path + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      fail_spec(rp, "expected " + std::to_string(cols) + " entries");
    for (int k = 0; k < cols; ++k)
      m(i, k) = parse_number(row[k], rp + "[" + std::to_string(k) + "]");
  }
  return m;
}

inline Vec3 parse_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail_spec(path, "expected 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i)
    v(i) = parse_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline TimeGrid parse_grid(const json& j, const std::string& path) {
  check_keys(j, {"t_start", "t_end", "n_samples"}, path);
  double a = parse_number(require_field(j, "t_start", path), path + ".t_start");
  double b = parse_number(require_field(j, "t_end", path), path + ".t_end");
  int n = parse_integer(require_field(j, "n_samples", path),
                        path + ".n_samples");
  try {
    return TimeGrid{a, b, n};
  } catch (const std::invalid_argument& e) {
    fail_spec(path, e.what());
  }
}

/// Rate descriptors: {"const": c}, {"poly": [c0, c1, ...]} in ascending
/// powers, or {"pieces": [{"from": a, "to": b, "poly": [...]}, ...]}.
inline Rate parse_rate(const json& j, const std::string& path) {
  if (!j.is_object()) fail_spec(path, "expected a rate object");
  check_keys(j, {"const", "poly", "pieces"}, path);
  if (j.size() != 1)
    fail_spec(path, "expected exactly one of const, poly, pieces");
  if (j.contains("const"))
    return Rate::constant(parse_number(j["const"], path + ".const"));
  if (j.contains("poly")) {
    const json& c = j["poly"];
    if (!c.is_array() || c.empty())
      fail_spec(path + ".poly", "expected a coefficient array");
    std::vector<double> coeffs;
    for (std::size_t i = 0; i < c.size(); ++i)
      coeffs.push_back(
          parse_number(c[i], path + ".poly[" + std::to_string(i) + "]"));
    return Rate::polynomial(std::move(coeffs));
  }
  const json& ps = j["pieces"];
  if (!ps.is_array() || ps.empty())
    fail_spec(path + ".pieces", "expected a piece array");
  std::vector<Rate::Piece> pieces;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::string pp = path + ".pieces[" + std::to_string(i) + "]";
    const json& p = ps[i];
    check_keys(p, {"from", "to", "poly"}, pp);
    Rate::Piece piece;
    piece.from = parse_number(require_field(p, "from", pp), pp + ".from");
    piece.to = parse_number(require_field(p, "to", pp), pp + ".to");
    const json& c = require_field(p, "poly", pp);
    if (!c.is_array() || c.empty())
      fail_spec(pp + ".poly", "expected a coefficient array");
    for (std::size_t k = 0; k < c.size(); ++k)
      piece.coeffs.push_back(
          parse_number(c[k], pp + ".poly[" + std::to_string(k) + "]"));
    pieces.push_back(std::move(piece));
  }
  try {
    return Rate::piecewise(std::move(pieces));
  } catch (const std::invalid_argument& e) {
    fail_spec(path + ".pieces", e.what());
  }
}

/// Basis descriptors: {"axis": [x, y, z]} (qubit Pauli-axis eigenbasis)
/// or {"columns": [[...], ...]} (explicit unitary columns).
inline Basis parse_basis(const json& j, int d, const std::string& path) {
  if (!j.is_object()) fail_spec(path, "expected a basis object");
  check_keys(j, {"axis", "columns"}, path);
  if (j.size() != 1) fail_spec(path, "expected exactly one of axis, columns");
  try {
    if (j.contains("axis")) {
      if (d != 2)
        fail_spec(path + ".axis", "axis bases are qubit-only");
      return Basis::pauli_axis(parse_vec3(j["axis"], path + ".axis"));
    }
    return Basis::from_columns(
        parse_complex_matrix(j["columns"], d, d, path + ".columns"));
  } catch (const std::invalid_argument& e) {
    fail_spec(path, e.what());
  }
}

inline CMatrix parse_unitary(const json& j, int d, const std::string& path) {
  CMatrix u = parse_complex_matrix(j, d, d, path);
  if (max_abs(CMatrix(u.adjoint() * u - CMatrix::Identity(d, d))) >
      defaults::unitary_tol)
    fail_spec(path, "matrix is not unitary");
  return u;
}

inline DynamicalMap build_kind(const json& j, const TimeGrid& grid,
                               double cptp_tol, const std::string& path,
                               std::optional<MixtureSpec>* mixture_out);

inline DynamicalMap build_mixture(const json& j, const TimeGrid& grid,
                                  double cptp_tol, const std::string& path,
                                  std::optional<MixtureSpec>* mixture_out) {
  const json& weights = require_field(j, "weights", path);
  const json& comps = require_field(j, "components", path);
  if (!weights.is_array() || weights.empty())
    fail_spec(path + ".weights", "expected a weight array");
  if (!comps.is_array() || comps.size() != weights.size())
    fail_spec(path + ".components", "expected one component per weight");
  MixtureSpec spec;
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double wt = parse_number(weights[i],
                             path + ".weights[" + std::to_string(i) + "]");
    if (wt < 0.0)
      fail_spec(path + ".weights[" + std::to_string(i) + "]",
                "weights must be nonnegative");
    spec.weights.push_back(wt);
    sum += wt;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    fail_spec(path + ".weights", "weights must sum to 1");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    std::string cp = path + ".components[" + std::to_string(i) + "]";
    const json& c = comps[i];
    if (!c.is_object()) fail_spec(cp, "expected a component object");
    check_keys(c, {"spec", "basis", "frame"}, cp);
    const json& nested = require_field(c, "spec", cp);
    if (nested.is_object() && nested.contains("kind") &&
        nested["kind"] == "mixture")
      fail_spec(cp + ".spec", "nested mixtures are not supported");
    MixtureComponent comp{
        build_kind(nested, grid, cptp_tol, cp + ".spec", nullptr),
        std::nullopt,
        [](double) { return CMatrix(CMatrix::Identity(2, 2)); }};
    const int d = comp.map.dim();
    if (c.contains("basis"))
      comp.basis = parse_basis(c["basis"], d, cp + ".basis");
    CMatrix frame = c.contains("frame")
                        ? parse_unitary(c["frame"], d, cp + ".frame")
                        : CMatrix(CMatrix::Identity(d, d));
    comp.frame = [frame](double) { return frame; };
    spec.components.push_back(std::move(comp));
  }
  try {
    DynamicalMap mixed = mix(spec);
    if (mixture_out) *mixture_out = std::move(spec);
    return mixed;
  } catch (const std::invalid_argument& e) {
    fail_spec(path, e.what());
  }
}

inline DynamicalMap build_kind(const json& j, const TimeGrid& grid,
                               double cptp_tol, const std::string& path,
                               std::optional<MixtureSpec>* mixture_out) {
  const json& kind_field = require_field(j, "kind", path);
  if (!kind_field.is_string()) fail_spec(path + ".kind", "expected a string");
  const std::string kind = kind_field.get<std::string>();
  const bool top = mixture_out != nullptr;
  auto keys = [&](std::initializer_list<const char*> ks) {
    check_keys(j, ks, path);
    if (!top && j.contains("grid"))
      fail_spec(path + ".grid", "components inherit the mixture grid");
  };

  if (kind == "depolarizing") {
    keys({"kind", "grid", "epsilon", "t0"});
    double eps =
        parse_number(require_field(j, "epsilon", path), path + ".epsilon");
    double t0 = parse_number(require_field(j, "t0", path), path + ".t0");
    if (!(eps > 0.0)) fail_spec(path + ".epsilon", "must be > 0");
    if (!(t0 > 0.0)) fail_spec(path + ".t0", "must be > 0");
    return depolarizing_example(eps, t0, grid);
  }

  if (kind == "pauli-rates") {
    keys({"kind", "grid", "rates"});
    const json& rates = require_field(j, "rates", path);
    if (!rates.is_array() || rates.size() != 3)
      fail_spec(path + ".rates", "expected 3 rate descriptors");
    if (grid.t_start < 0.0)
      fail_spec(path + ".grid.t_start",
                "pauli-rates integrates rates from 0, grid must start at 0 "
                "or later");
    std::array<Rate, 3> gs;
    for (int i = 0; i < 3; ++i)
      gs[i] = parse_rate(rates[i], path + ".rates[" + std::to_string(i) + "]");
    return DynamicalMap::analytic(2, grid, [gs, cptp_tol](double t) {
      std::array<double, 3> big;
      for (int i = 0; i < 3; ++i) big[i] = gs[i].integral(0.0, t);
      Vec3 lam;
      for (int i = 0; i < 3; ++i)
        lam(i) = std::exp(-big[(i + 1) % 3] - big[(i + 2) % 3]);
      return pauli_channel(lam, Vec3::Zero(), cptp_tol);
    });
  }

  if (kind == "bloch-affine-table") {
    keys({"kind", "grid", "T", "r"});
    const json& table = require_field(j, "T", path);
    if (!table.is_array() ||
        static_cast<int>(table.size()) != grid.n_samples)
      fail_spec(path + ".T", "expected one 3x3 matrix per grid sample");
    const json* shifts = j.contains("r") ? &j["r"] : nullptr;
    if (shifts && (!shifts->is_array() ||
                   static_cast<int>(shifts->size()) != grid.n_samples))
      fail_spec(path + ".r", "expected one 3-vector per grid sample");
    std::vector<Channel> chans;
    chans.reserve(grid.n_samples);
    for (int i = 0; i < grid.n_samples; ++i) {
      BlochAffine b;
      b.t = parse_real_matrix(table[i], 3, 3,
                              path + ".T[" + std::to_string(i) + "]");
      b.r = shifts ? parse_vec3((*shifts)[i],
                                path + ".r[" + std::to_string(i) + "]")
                   : Vec3(Vec3::Zero());
      chans.push_back(channel_from_bloch(b, cptp_tol));
    }
    return DynamicalMap::tabulated(grid, std::move(chans));
  }

  if (kind == "classical" || kind == "gcl") {
    if (kind == "classical")
      keys({"kind", "grid", "matrix", "basis"});
    else
      keys({"kind", "grid", "matrix", "basis", "unitary"});
    const json& mj = require_field(j, "matrix", path);
    if (!mj.is_array() || mj.empty())
      fail_spec(path + ".matrix", "expected a square stochastic matrix");
    const int d = static_cast<int>(mj.size());
    RMatrix m = parse_real_matrix(mj, d, d, path + ".matrix");
    Basis b = parse_basis(require_field(j, "basis", path), d, path + ".basis");
    try {
      StochasticMatrix sm(m);
      Channel c =
          kind == "classical"
              ? classical_channel(sm, b)
              : generalized_classical_channel(
                    sm, b,
                    parse_unitary(require_field(j, "unitary", path), d,
                                  path + ".unitary"));
      return DynamicalMap::analytic(d, grid, [c](double) { return c; });
    } catch (const spec_error&) {
      throw;
    } catch (const std::invalid_argument& e) {
      fail_spec(path, e.what());
    }
  }

  if (kind == "mixture") {
    if (!top) fail_spec(path + ".kind", "nested mixtures are not supported");
    keys({"kind", "grid", "weights", "components"});
    return build_mixture(j, grid, cptp_tol, path, mixture_out);
  }

  if (kind == "gkls") {
    keys({"kind", "grid", "dim", "terms", "max_substep"});
    int d = parse_integer(require_field(j, "dim", path), path + ".dim");
    if (d < 2) fail_spec(path + ".dim", "dimension must be >= 2");
    if (grid.t_start < 0.0)
      fail_spec(path + ".grid.t_start",
                "gkls evolution starts at 0, grid must start at 0 or later");
    const json& terms = require_field(j, "terms", path);
    if (!terms.is_array() || terms.empty())
      fail_spec(path + ".terms", "expected at least one term");
    std::vector<Rate> rates;
    std::vector<CMatrix> jumps;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      std::string tp = path + ".terms[" + std::to_string(i) + "]";
      const json& term = terms[i];
      check_keys(term, {"rate", "jump"}, tp);
      rates.push_back(parse_rate(require_field(term, "rate", tp),
                                 tp + ".rate"));
      jumps.push_back(parse_complex_matrix(require_field(term, "jump", tp),
                                           d, d, tp + ".jump"));
    }
    double substep = 1e-3;
    if (j.contains("max_substep")) {
      substep = parse_number(j["max_substep"], path + ".max_substep");
      if (!(substep > 0.0)) fail_spec(path + ".max_substep", "must be > 0");
    }
    try {
      return evolve_from_generator(GKLSGenerator(d, rates, std::move(jumps)),
                                   grid, substep);
    } catch (const std::invalid_argument& e) {
      fail_spec(path, e.what());
    }
  }

  fail_spec(path + ".kind", "unknown kind '" + kind + "'");
}

} // namespace detail

/// Builds the dynamical map a specification document describes.
/// Schema violations throw spec_error naming the field; channels that
/// fail CPTP validation while being built from user-supplied numbers
/// throw cptp_error carrying the most negative eigenvalue. cptp_tol
/// applies wherever the document supplies raw channel data.
inline MapBundle build_map(const json& doc,
                           double cptp_tol = defaults::cptp_eig_tol) {
  const std::string path = "$";
  TimeGrid grid =
      detail::parse_grid(detail::require_field(doc, "grid", path),
                         path + ".grid");
  std::optional<MixtureSpec> mixture;
  DynamicalMap map = detail::build_kind(doc, grid, cptp_tol, path, &mixture);
  const json& kind = doc["kind"];
  return MapBundle{std::move(map), kind.get<std::string>(),
                   std::move(mixture)};
}

/// Reads and parses a specification file; parse failures are reported
/// as spec_error with the parser's position diagnostics.
inline json load_spec_file(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw spec_error("map spec: cannot read '" + filename + "'");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw spec_error("map spec: " + filename + ": " + e.what());
  }
}

} // namespace backflow
