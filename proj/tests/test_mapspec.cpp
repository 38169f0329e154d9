#include <backflow/map_spec.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace backflow;
using Catch::Approx;

namespace {

auto msg(const char* text) {
  return Catch::Matchers::MessageMatches(
      Catch::Matchers::ContainsSubstring(text));
}

json grid_json(double a, double b, int n) {
  json g;
  g["t_start"] = a;
  g["t_end"] = b;
  g["n_samples"] = n;
  return g;
}

json rate_a_json() { return json{{"poly", {4.0, -6.0, 2.0}}}; }

json rate_b_json(double eps) {
  json piece;
  piece["from"] = 1.0;
  piece["to"] = 2.0;
  piece["poly"] = json::array({-4.0 + eps, 6.0, -2.0});
  return json{{"pieces", json::array({piece})}};
}

json pauli_rates_spec(int k, double eps) {
  json rates = json::array();
  for (int i = 1; i <= 3; ++i)
    rates.push_back(i == k ? rate_b_json(eps) : rate_a_json());
  json spec;
  spec["kind"] = "pauli-rates";
  spec["rates"] = rates;
  return spec;
}

double max_choi_distance(const DynamicalMap& a, const DynamicalMap& b) {
  double worst = 0.0;
  for (int i = 0; i < a.grid().n_samples; ++i)
    worst = std::max(
        worst, max_abs(CMatrix(a.at_index(i).choi() - b.at_index(i).choi())));
  return worst;
}

} // namespace

TEST_CASE("specification documents build every map kind") {
  SECTION("depolarizing") {
    json doc;
    doc["kind"] = "depolarizing";
    doc["epsilon"] = 0.01;
    doc["t0"] = 1.0;
    doc["grid"] = grid_json(0.0, 3.0, 31);
    MapBundle b = build_map(doc);
    REQUIRE(b.kind == "depolarizing");
    REQUIRE(b.map.dim() == 2);
    REQUIRE_FALSE(b.mixture.has_value());
    DynamicalMap ref = depolarizing_example(0.01, 1.0, TimeGrid{0.0, 3.0, 31});
    REQUIRE(max_choi_distance(b.map, ref) <= 1e-14);
  }

  SECTION("pauli-rates matches the library pauli family") {
    json doc = pauli_rates_spec(3, 0.05);
    doc["grid"] = grid_json(0.0, 2.5, 41);
    MapBundle b = build_map(doc);
    DynamicalMap ref = pauli_example(3, 0.05, TimeGrid{0.0, 2.5, 41});
    REQUIRE(max_choi_distance(b.map, ref) <= 1e-14);
  }

  SECTION("bloch-affine-table with and without shifts") {
    TimeGrid g{0.0, 1.0, 3};
    json table = json::array();
    std::vector<Channel> ref;
    for (int i = 0; i < 3; ++i) {
      double l = 1.0 - 0.2 * i;
      ref.push_back(pauli_channel(Vec3(l, l, 1.0 - 0.3 * i)));
      json rows = json::array();
      rows.push_back(json::array({l, 0.0, 0.0}));
      rows.push_back(json::array({0.0, l, 0.0}));
      rows.push_back(json::array({0.0, 0.0, 1.0 - 0.3 * i}));
      table.push_back(rows);
    }
    json doc;
    doc["kind"] = "bloch-affine-table";
    doc["T"] = table;
    doc["grid"] = grid_json(0.0, 1.0, 3);
    MapBundle b = build_map(doc);
    for (int i = 0; i < 3; ++i)
      REQUIRE(max_abs(CMatrix(b.map.at_index(i).choi() - ref[i].choi())) <=
              1e-14);

    json shifts = json::array();
    shifts.push_back(json::array({0.0, 0.0, 0.0}));
    shifts.push_back(json::array({0.0, 0.0, 0.1}));
    shifts.push_back(json::array({0.0, 0.0, 0.2}));
    doc["r"] = shifts;
    MapBundle bs = build_map(doc);
    BlochAffine affine = bloch_from_channel(bs.map.at_index(2));
    REQUIRE(affine.r(2) == Approx(0.2).margin(1e-12));
  }

  SECTION("classical and gcl constant maps") {
    RMatrix m(2, 2);
    m << 0.9, 0.3, 0.1, 0.7;
    json mj = json::array();
    mj.push_back(json::array({0.9, 0.3}));
    mj.push_back(json::array({0.1, 0.7}));
    json doc;
    doc["kind"] = "classical";
    doc["matrix"] = mj;
    doc["basis"] = json{{"axis", {0.0, 0.0, 1.0}}};
    doc["grid"] = grid_json(0.0, 1.0, 5);
    MapBundle b = build_map(doc);
    Channel ref =
        classical_channel(StochasticMatrix(m), Basis::pauli_axis(Vec3(0, 0, 1)));
    REQUIRE(max_abs(CMatrix(b.map.at(0.37).choi() - ref.choi())) <= 1e-14);

    CMatrix h(2, 2);
    double s = 1.0 / std::sqrt(2.0);
    h << Complex(s, 0), Complex(s, 0), Complex(s, 0), Complex(-s, 0);
    json hj = json::array();
    hj.push_back(json::array({s, s}));
    hj.push_back(json::array({s, -s}));
    doc["kind"] = "gcl";
    doc["unitary"] = hj;
    MapBundle bg = build_map(doc);
    Channel gref = generalized_classical_channel(
        StochasticMatrix(m), Basis::pauli_axis(Vec3(0, 0, 1)), h);
    REQUIRE(max_abs(CMatrix(bg.map.at(0.8).choi() - gref.choi())) <= 1e-14);
  }

  SECTION("mixture builds the annotated decomposition") {
    json doc;
    doc["kind"] = "mixture";
    doc["weights"] = json::array({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    json comps = json::array();
    json axes = json::array({json::array({1.0, 0.0, 0.0}),
                             json::array({0.0, 1.0, 0.0}),
                             json::array({0.0, 0.0, 1.0})});
    for (int k = 1; k <= 3; ++k) {
      json comp;
      comp["spec"] = pauli_rates_spec(k, 0.05);
      comp["basis"] = json{{"axis", axes[k - 1]}};
      comps.push_back(comp);
    }
    doc["components"] = comps;
    doc["grid"] = grid_json(0.0, 3.0, 61);
    MapBundle b = build_map(doc);
    REQUIRE(b.kind == "mixture");
    REQUIRE(b.mixture.has_value());
    REQUIRE(b.mixture->components.size() == 3);
    for (const auto& c : b.mixture->components) {
      REQUIRE(c.basis.has_value());
      REQUIRE(max_abs(CMatrix(c.frame(1.3) - CMatrix::Identity(2, 2))) == 0.0);
    }
    DynamicalMap ref = mix(pauli_mixture(0.05, TimeGrid{0.0, 3.0, 61}));
    REQUIRE(max_choi_distance(b.map, ref) <= 1e-14);
  }

  SECTION("gkls evolution matches closed-form amplitude damping") {
    json jump = json::array();
    jump.push_back(json::array({0.0, 1.0}));
    jump.push_back(json::array({0.0, 0.0}));
    json term;
    term["rate"] = json{{"const", 1.0}};
    term["jump"] = jump;
    json doc;
    doc["kind"] = "gkls";
    doc["dim"] = 2;
    doc["terms"] = json::array({term});
    doc["grid"] = grid_json(0.0, 1.0, 11);
    MapBundle b = build_map(doc);
    for (int i = 0; i < 11; ++i) {
      double t = b.map.grid().at(i);
      CMatrix k1 = CMatrix::Zero(2, 2), k2 = CMatrix::Zero(2, 2);
      k1(0, 0) = 1.0;
      k1(1, 1) = std::exp(-0.5 * t);
      k2(0, 1) = std::sqrt(1.0 - std::exp(-t));
      Channel ref = Channel::from_kraus({k1, k2});
      REQUIRE(max_abs(CMatrix(b.map.at_index(i).choi() - ref.choi())) <= 1e-9);
    }
  }
}

TEST_CASE("schema violations name the offending field") {
  json good;
  good["kind"] = "depolarizing";
  good["epsilon"] = 0.01;
  good["t0"] = 1.0;
  good["grid"] = grid_json(0.0, 3.0, 31);

  SECTION("top-level shape") {
    REQUIRE_THROWS_MATCHES(build_map(json::array()), spec_error,
                           msg("$"));
    json no_kind = good;
    no_kind.erase("kind");
    REQUIRE_THROWS_MATCHES(build_map(no_kind), spec_error,
                           msg("$.kind"));
    json bad_kind = good;
    bad_kind["kind"] = "banana";
    REQUIRE_THROWS_MATCHES(build_map(bad_kind), spec_error,
                           msg("unknown kind 'banana'"));
    json typo = good;
    typo.erase("epsilon");
    typo["epsilom"] = 0.01;
    REQUIRE_THROWS_MATCHES(build_map(typo), spec_error,
                           msg("$.epsilom"));
    json no_grid = good;
    no_grid.erase("grid");
    REQUIRE_THROWS_MATCHES(build_map(no_grid), spec_error,
                           msg("$.grid"));
    json tiny = good;
    tiny["grid"]["n_samples"] = 2;
    REQUIRE_THROWS_MATCHES(build_map(tiny), spec_error,
                           msg("$.grid"));
    json neg = good;
    neg["epsilon"] = -0.5;
    REQUIRE_THROWS_MATCHES(build_map(neg), spec_error,
                           msg("$.epsilon"));
  }

  SECTION("rates and entries") {
    json doc = pauli_rates_spec(1, 0.05);
    doc["grid"] = grid_json(0.0, 2.0, 21);
    json two = doc;
    two["rates"].erase(2);
    REQUIRE_THROWS_MATCHES(build_map(two), spec_error,
                           msg("$.rates"));
    json early = doc;
    early["grid"] = grid_json(-0.5, 2.0, 21);
    REQUIRE_THROWS_MATCHES(build_map(early), spec_error,
                           msg("$.grid.t_start"));
    json both = doc;
    both["rates"][0]["const"] = 1.0;
    REQUIRE_THROWS_MATCHES(build_map(both), spec_error,
                           msg("$.rates[0]"));
    json badpiece = doc;
    badpiece["rates"][1] = json{{"pieces", json::array({json{
                                    {"from", 2.0},
                                    {"to", 1.0},
                                    {"poly", json::array({1.0})}}})}};
    REQUIRE_THROWS_MATCHES(build_map(badpiece), spec_error,
                           msg("$.rates[1].pieces"));
  }

  SECTION("bloch table shape and entries") {
    json doc;
    doc["kind"] = "bloch-affine-table";
    doc["grid"] = grid_json(0.0, 1.0, 3);
    doc["T"] = json::array();
    REQUIRE_THROWS_MATCHES(build_map(doc), spec_error,
                           msg("$.T"));
    json rows = json::array();
    rows.push_back(json::array({1.0, 0.0, 0.0}));
    rows.push_back(json::array({0.0, 1.0, 0.0}));
    rows.push_back(json::array({0.0, 0.0, "x"}));
    doc["T"] = json::array({rows, rows, rows});
    REQUIRE_THROWS_MATCHES(build_map(doc), spec_error,
                           msg("$.T[0][2][2]"));
  }

  SECTION("classical structure") {
    json doc;
    doc["kind"] = "classical";
    doc["grid"] = grid_json(0.0, 1.0, 5);
    json mj = json::array();
    mj.push_back(json::array({0.9, 0.3}));
    mj.push_back(json::array({0.2, 0.7}));
    doc["matrix"] = mj;
    doc["basis"] = json{{"axis", {0.0, 0.0, 1.0}}};
    REQUIRE_THROWS_AS(build_map(doc), spec_error);

    doc["matrix"][1][0] = 0.1;
    json both_basis = doc;
    both_basis["basis"]["columns"] = json::array(
        {json::array({1.0, 0.0}), json::array({0.0, 1.0})});
    REQUIRE_THROWS_MATCHES(build_map(both_basis), spec_error,
                           msg("$.basis"));
    REQUIRE_NOTHROW(build_map(doc));
  }

  SECTION("mixtures") {
    json doc;
    doc["kind"] = "mixture";
    doc["grid"] = grid_json(0.0, 2.0, 21);
    doc["weights"] = json::array({0.5, 0.6});
    json comp;
    comp["spec"] = pauli_rates_spec(1, 0.05);
    doc["components"] = json::array({comp, comp});
    REQUIRE_THROWS_MATCHES(build_map(doc), spec_error,
                           msg("$.weights"));
    doc["weights"] = json::array({0.5, -0.5});
    REQUIRE_THROWS_MATCHES(build_map(doc), spec_error,
                           msg("$.weights[1]"));
    doc["weights"] = json::array({0.5, 0.5});
    REQUIRE_NOTHROW(build_map(doc));

    json nested = doc;
    nested["components"][1]["spec"] = doc;
    REQUIRE_THROWS_MATCHES(build_map(nested), spec_error,
                           msg("$.components[1].spec"));
    json with_grid = doc;
    with_grid["components"][0]["spec"]["grid"] = grid_json(0.0, 1.0, 5);
    REQUIRE_THROWS_MATCHES(build_map(with_grid), spec_error,
                           msg("$.components[0].spec.grid"));
    json bad_frame = doc;
    bad_frame["components"][0]["frame"] = json::array(
        {json::array({2.0, 0.0}), json::array({0.0, 1.0})});
    REQUIRE_THROWS_MATCHES(build_map(bad_frame), spec_error,
                           msg("$.components[0].frame"));
  }

  SECTION("gkls parameters") {
    json jump = json::array();
    jump.push_back(json::array({0.0, 1.0}));
    jump.push_back(json::array({0.0, 0.0}));
    json term;
    term["rate"] = json{{"const", 1.0}};
    term["jump"] = jump;
    json doc;
    doc["kind"] = "gkls";
    doc["dim"] = 2;
    doc["terms"] = json::array({term});
    doc["grid"] = grid_json(0.0, 1.0, 5);
    json bad_dim = doc;
    bad_dim["dim"] = 1;
    REQUIRE_THROWS_MATCHES(build_map(bad_dim), spec_error,
                           msg("$.dim"));
    json bad_sub = doc;
    bad_sub["max_substep"] = 0.0;
    REQUIRE_THROWS_MATCHES(build_map(bad_sub), spec_error,
                           msg("$.max_substep"));
    json bad_jump = doc;
    bad_jump["terms"][0]["jump"] = json::array({json::array({0.0, 1.0})});
    REQUIRE_THROWS_MATCHES(build_map(bad_jump), spec_error,
                           msg("$.terms[0].jump"));
  }

  SECTION("CPTP violations surface as cptp_error with the eigenvalue") {
    json rows = json::array();
    rows.push_back(json::array({1.2, 0.0, 0.0}));
    rows.push_back(json::array({0.0, 1.0, 0.0}));
    rows.push_back(json::array({0.0, 0.0, 1.0}));
    json doc;
    doc["kind"] = "bloch-affine-table";
    doc["T"] = json::array({rows, rows, rows});
    doc["grid"] = grid_json(0.0, 1.0, 3);
    try {
      build_map(doc);
      FAIL("expected cptp_error");
    } catch (const cptp_error& e) {
      REQUIRE(e.min_eigenvalue < -0.01);
    }
    REQUIRE_NOTHROW(build_map(doc, 0.2));
  }
}

TEST_CASE("load_spec_file reads documents and reports parse failures") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "backflow-mapspec-test";
  fs::create_directories(dir);

  fs::path good = dir / "good.json";
  {
    std::ofstream out(good);
    out << "{\"kind\": \"depolarizing\", \"epsilon\": 0.01, \"t0\": 1.0, "
           "\"grid\": {\"t_start\": 0, \"t_end\": 2, \"n_samples\": 5}}\n";
  }
  json doc = load_spec_file(good.string());
  REQUIRE(doc["kind"] == "depolarizing");
  REQUIRE_NOTHROW(build_map(doc));

  fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{\"kind\": \n";
  }
  REQUIRE_THROWS_MATCHES(load_spec_file(bad.string()), spec_error,
                         msg("bad.json"));
  REQUIRE_THROWS_MATCHES(load_spec_file((dir / "absent.json").string()),
                         spec_error, msg("cannot read"));
  fs::remove_all(dir);
}
