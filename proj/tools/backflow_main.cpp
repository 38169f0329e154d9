#include <backflow/report.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace bf = backflow;

std::optional<double> env_number(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  double x = std::strtod(v, &end);
  if (end == v || *end != '\0')
    throw bf::spec_error(std::string(name) + ": invalid number '" + v + "'");
  return x;
}

std::optional<int> env_integer(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  long x = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || x < 1)
    throw bf::spec_error(std::string(name) + ": invalid count '" + v + "'");
  return static_cast<int>(x);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bf::DecompositionType claimed_from_label(const std::string& s) {
  if (s == "strong-none") return bf::DecompositionType::strong_none;
  if (s == "type-I") return bf::DecompositionType::type_i;
  if (s == "type-II") return bf::DecompositionType::type_ii;
  if (s == "type-0") return bf::DecompositionType::type_0;
  throw bf::spec_error("--claimed '" + s +
                       "': expected strong-none, type-I, type-II or type-0");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bf::spec_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw bf::spec_error("write to '" + path + "' failed");
}

void emit(const std::optional<std::string>& path, const std::string& text) {
  if (path)
    write_text(*path, text);
  else
    std::cout << text;
}

struct ClassifyArgs {
  std::string map_file;
  std::string checks = "blp,cpdiv,witness,weak";
  std::vector<std::string> bases{"z"};
  std::vector<double> interval;
  int samples = 201;
  std::vector<double> strong_times;
  std::string claimed = "strong-none";
  std::optional<std::string> out;
  std::optional<std::string> series;
  bf::ReportOptions opt;
  bool no_timing = false;
};

int run_classify(ClassifyArgs& a) {
  a.opt.checks = split_csv(a.checks);
  if (a.opt.checks.empty())
    throw bf::spec_error("--checks: expected at least one check name");
  a.opt.bases = a.bases;
  a.opt.timing = !a.no_timing;
  a.opt.claimed = claimed_from_label(a.claimed);
  if (!a.interval.empty())
    a.opt.interval = bf::TimeGrid{a.interval[0], a.interval[1], a.samples};
  if (!a.strong_times.empty())
    a.opt.strong_times = std::make_pair(a.strong_times[0], a.strong_times[1]);
  bf::MapBundle bundle =
      bf::build_map(bf::load_spec_file(a.map_file), a.opt.tol_cptp);
  bf::json report = bf::run_report(bundle, a.opt);
  emit(a.out, report.dump(2) + "\n");
  if (a.series) write_text(*a.series, bf::series_csv(bundle, a.opt));
  return 0;
}

struct ExampleArgs {
  std::string name;
  std::string out_dir = ".";
  bf::ReportOptions opt;
  bool no_timing = false;
  std::optional<double> epsilon;
  std::optional<double> t0;
};

int run_example(ExampleArgs& a) {
  a.opt.timing = !a.no_timing;
  bf::ExampleArtifacts art =
      bf::example_artifacts(a.name, a.opt, a.epsilon, a.t0);
  std::filesystem::create_directories(a.out_dir);
  auto file = [&](const char* suffix) {
    return (std::filesystem::path(a.out_dir) / (art.name + suffix)).string();
  };
  write_text(file("-spec.json"), art.spec.dump(2) + "\n");
  write_text(file("-report.json"), art.report.dump(2) + "\n");
  write_text(file("-series.csv"), art.series);
  std::cout << file("-spec.json") << "\n"
            << file("-report.json") << "\n"
            << file("-series.csv") << "\n";
  return 0;
}

struct WitnessArgs {
  std::string choi_file;
  std::string map_file;
  double time = 0.0;
  bool time_set = false;
  double tol = bf::defaults::witness_tol;
  std::optional<std::string> out;
};

int run_witness(WitnessArgs& a) {
  bf::CMatrix rho;
  if (!a.choi_file.empty()) {
    bf::json doc = bf::load_spec_file(a.choi_file);
    rho = bf::detail::parse_complex_matrix(
        bf::detail::require_field(doc, "matrix", "$"), 4, 4, "$.matrix");
  } else {
    if (!a.time_set)
      throw bf::spec_error("witness: --map requires --time");
    bf::MapBundle bundle = bf::build_map(bf::load_spec_file(a.map_file));
    if (bundle.map.dim() != 2)
      throw bf::spec_error("witness: qubit maps only");
    rho = bundle.map.at(a.time).choi();
  }
  bf::json report = bf::witness_report(rho, a.tol);
  emit(a.out, report.dump(2) + "\n");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  try {
    CLI::App app{"memory character of quantum dynamical maps"};
    app.set_version_flag("--version",
                         std::string("backflow ") + bf::version);
    app.require_subcommand(1);

    bf::ReportOptions base;
    base.threads = env_integer("BACKFLOW_THREADS").value_or(1);
    base.tol_eig = env_number("BACKFLOW_TOL_EIG")
                       .value_or(bf::defaults::derivative_tol);
    base.tol_cptp = env_number("BACKFLOW_TOL_CPTP")
                        .value_or(bf::defaults::cptp_eig_tol);

    ClassifyArgs cl;
    cl.opt = base;
    CLI::App* classify =
        app.add_subcommand("classify", "run checks on a map specification");
    classify->add_option("--map", cl.map_file, "map specification JSON file")
        ->required();
    classify->add_option("--checks", cl.checks,
                         "comma-separated checks: blp, cpdiv, elementary, "
                         "block-elementary, coherence, witness, weak, "
                         "strong, decomposition");
    classify->add_option("--basis", cl.bases,
                         "basis labels (x, y, z, computational, ax,ay,az)");
    classify->add_option("--interval", cl.interval,
                         "window for witness/weak/decomposition")
        ->expected(2);
    classify->add_option("--samples", cl.samples, "samples in --interval");
    classify->add_option("--strong-times", cl.strong_times,
                         "times s w for the strong certificate")
        ->expected(2);
    classify->add_option("--sphere", cl.opt.sphere_points,
                         "directions for the strong certificate sweep");
    classify->add_option("--claimed", cl.claimed,
                         "decomposition claim: strong-none, type-I, "
                         "type-II, type-0");
    classify->add_option("--threads", cl.opt.threads, "worker threads");
    classify->add_option("--tol-eig", cl.opt.tol_eig,
                         "derivative/propagator eigenvalue tolerance");
    classify->add_option("--tol-cptp", cl.opt.tol_cptp,
                         "CPTP eigenvalue tolerance for user-supplied data");
    classify->add_flag("--no-timing", cl.no_timing,
                       "omit wall times for reproducible output");
    std::string out_path, series_path;
    classify->add_option("--out", out_path, "report file (default stdout)");
    classify->add_option("--series", series_path, "also write the CSV series");

    ExampleArgs ex;
    ex.opt = base;
    CLI::App* example =
        app.add_subcommand("example", "reproduce a worked example");
    example->add_option("name", ex.name, "ex1, ex2 or ex3")->required();
    example->add_option("--out", ex.out_dir, "output directory");
    example->add_option("--epsilon", ex.epsilon,
                        "family parameter (ex1 default 0.01, ex2 default "
                        "0.05)");
    example->add_option("--t0", ex.t0, "rebound onset time (ex1 only)");
    example->add_option("--threads", ex.opt.threads, "worker threads");
    example->add_flag("--no-timing", ex.no_timing,
                      "omit wall times for reproducible output");

    WitnessArgs wi;
    CLI::App* witness = app.add_subcommand(
        "witness", "evaluate the memory witness on a two-qubit state");
    CLI::Option* wchoi = witness->add_option("--choi", wi.choi_file,
                                             "JSON file with a 4x4 matrix");
    CLI::Option* wmap =
        witness->add_option("--map", wi.map_file, "map specification file");
    CLI::Option* wtime =
        witness->add_option("--time", wi.time, "evaluation time for --map");
    witness->add_option("--tol", wi.tol, "refutation tolerance");
    std::string wout;
    CLI::Option* wout_opt =
        witness->add_option("--out", wout, "report file (default stdout)");
    wchoi->excludes(wmap);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (classify->parsed()) {
      if (classify->count("--out")) cl.out = out_path;
      if (classify->count("--series")) cl.series = series_path;
      return run_classify(cl);
    }
    if (example->parsed()) return run_example(ex);
    if (witness->parsed()) {
      wi.time_set = wtime->count() > 0;
      if (wout_opt->count()) wi.out = wout;
      if (wi.choi_file.empty() && wi.map_file.empty())
        throw bf::spec_error("witness: need --choi or --map");
      return run_witness(wi);
    }
    return 0;
  } catch (const bf::cptp_error& e) {
    std::cerr << "error: " << e.what() << " (min eigenvalue "
              << e.min_eigenvalue << ")\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
