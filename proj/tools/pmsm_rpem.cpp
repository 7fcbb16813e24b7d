// Command line front end: closed-loop runs, preset sweeps, analysis maps and eigenvalue tables.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "pmsm/analysis.hpp"
#include "pmsm/errors.hpp"
#include "pmsm/kv_file.hpp"
#include "pmsm/runner.hpp"
#include "pmsm/scenario.hpp"

namespace fs = std::filesystem;
using namespace pmsm;

namespace {

enum Exit { kOk = 0, kValidation = 1, kDivergence = 2 };

struct Globals {
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string format{"csv"};
  std::string algorithm;
};

scenario::Scenario prepare(const std::string& name, const Globals& g) {
  auto s = scenario::resolve(name);
  if (g.seed) s.run.seed = *g.seed;
  if (!g.algorithm.empty()) scenario::set_algorithm(s, rpem::algorithm_from_string(g.algorithm));
  s.validate();
  return s;
}

std::string run_label(const scenario::Scenario& s) {
  return (s.run.name.empty() ? std::string("scenario") : s.run.name) + "_" +
         rpem::to_string(s.estimator.gains.algorithm);
}

void print_report(std::ostream& out, const std::string& label, const char* param, const runner::ConvergenceReport& r) {
  out << label << ' ' << param << ": ";
  if (r.converged) {
    out << "converged in " << kv::format_double(*r.convergence_time) << " s";
  } else {
    out << "not converged";
  }
  out << ", steady error " << kv::format_double(r.steady_state_error * 100.0) << " %, overshoot "
      << kv::format_double(r.overshoot * 100.0) << " %\n";
}

// Runs one scenario, writing its log to <out>/<label>.csv or stdout when no directory is set.
std::string run_one(const scenario::Scenario& s, const Globals& g) {
  std::ostringstream report;
  const std::string label = run_label(s);
  runner::RunResult res;
  if (g.out_dir.empty()) {
    res = runner::run(s, &std::cout);
  } else {
    fs::create_directories(g.out_dir);
    const fs::path path = fs::path(g.out_dir) / (label + ".csv");
    std::ofstream log(path);
    if (!log) throw ValidationError("cannot write " + path.string());
    res = runner::run(s, &log);
  }
  print_report(report, label, "psi_m", res.psi_m);
  print_report(report, label, "r_s", res.r_s);
  return report.str();
}

std::regex glob_to_regex(const std::string& glob) {
  std::string re;
  for (char c : glob) {
    switch (c) {
      case '*': re += ".*"; break;
      case '?': re += '.'; break;
      case '[': case ']': re += c; break;
      default:
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
          re += c;
        } else {
          re += '\\';
          re += c;
        }
    }
  }
  return std::regex(re);
}

std::vector<double> parse_range(const std::string& text) {
  // lo:hi:count
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw ValidationError("range '" + text + "' must be lo:hi:count");
  const double lo = kv::parse_double(parts[0], "range lo");
  const double hi = kv::parse_double(parts[1], "range hi");
  const long long count = kv::parse_int(parts[2], "range count");
  if (count < 1 || count > 100000) throw ValidationError("range count out of bounds");
  return analysis::OperatingGrid::uniform(lo, hi, static_cast<std::size_t>(count), 0.0, 1.0, 2).speed_axis;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IPMSM drive simulation with online flux-linkage and resistance estimation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--out", g.out_dir, "output directory (stdout when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv"}));
  app.add_option("--algorithm", g.algorithm, "override the estimator algorithm (SGA, GNA, PhyInt)");

  std::string target;
  auto* sim = app.add_subcommand("sim", "run one scenario file or preset");
  sim->add_option("scenario", target, "scenario file or preset name")->required();

  std::string pattern;
  auto* sweep = app.add_subcommand("sweep", "run every preset matching a glob, in parallel");
  sweep->add_option("glob", pattern, "preset name glob, e.g. 'fig7*'")->required();

  std::string surface;
  std::string speed_range = "-1:1:81";
  std::string torque_range = "-1:1:81";
  double delta_psi = -0.1;
  double delta_rs = 0.0;
  double delta_xd = 0.0;
  double delta_xq = 0.0;
  bool q_axis = false;
  auto* map = app.add_subcommand("map", "steady-state surfaces over the speed-torque plane");
  map->add_option("surface", surface, "sensitivity, gradient, hessian, eigen or all")->required();
  map->add_option("--speed", speed_range, "speed axis lo:hi:count");
  map->add_option("--torque", torque_range, "torque axis lo:hi:count");
  map->add_option("--delta-psi-m", delta_psi, "relative psi_m error (true/estimate - 1)");
  map->add_option("--delta-r-s", delta_rs, "relative r_s error");
  map->add_option("--delta-x-d", delta_xd, "relative x_d error");
  map->add_option("--delta-x-q", delta_xq, "relative x_q error");
  map->add_flag("--q-axis", q_axis, "load cells with i_d = 0 instead of MTPA currents");

  std::string eig_range = "0:1:101";
  auto* eig = app.add_subcommand("eig", "predictor eigenvalues and discrete pole magnitudes against speed");
  eig->add_option("--speed-range", eig_range, "lo:hi:count");

  std::string file;
  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("scenario", file, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;

  try {
    if (*sim) {
      std::cerr << run_one(prepare(target, g), g);
    } else if (*sweep) {
      const std::regex re = glob_to_regex(pattern);
      std::vector<scenario::Scenario> runs;
      for (const auto& name : scenario::preset_names()) {
        if (std::regex_match(name, re)) runs.push_back(prepare(name, g));
      }
      if (runs.empty()) throw ValidationError("no preset matches '" + pattern + "'");
      if (g.out_dir.empty()) g.out_dir = "sweep_out";
      std::vector<std::string> reports(runs.size());
      std::vector<int> codes(runs.size(), kOk);
      const auto count = static_cast<std::ptrdiff_t>(runs.size());
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t k = 0; k < count; ++k) {
        try {
          reports[k] = run_one(runs[k], g);
        } catch (const NumericalDivergence& e) {
          reports[k] = std::string("divergence: ") + e.what() + "\n";
          codes[k] = kDivergence;
        } catch (const std::exception& e) {
          reports[k] = std::string("error: ") + e.what() + "\n";
          codes[k] = kValidation;
        }
      }
      int code = kOk;
      for (std::size_t k = 0; k < runs.size(); ++k) {
        std::cerr << reports[k];
        code = std::max(code, codes[k]);
      }
      return code;
    } else if (*map) {
      const unsigned surfaces = analysis::surface_from_string(surface);
      analysis::OperatingGrid grid{parse_range(speed_range), parse_range(torque_range)};
      grid.validate();
      const auto machine = reference_machine();
      analysis::MapInputs in;
      in.estimated = machine.params;
      in.omega_n = machine.base.omega_n;
      in.delta = {delta_psi * in.estimated.psi_m, delta_rs * in.estimated.r_s, delta_xd * in.estimated.x_d,
                  delta_xq * in.estimated.x_q};
      in.loading = q_axis ? analysis::Loading::q_axis : analysis::Loading::mtpa;
      const auto cells = analysis::evaluate_grid_parallel(grid, in);
      if (g.out_dir.empty()) {
        analysis::write_map_csv(std::cout, cells, surfaces);
      } else {
        fs::create_directories(g.out_dir);
        std::ofstream out(fs::path(g.out_dir) / ("map_" + surface + ".csv"));
        analysis::write_map_csv(out, cells, surfaces);
      }
    } else if (*eig) {
      analysis::OperatingGrid grid{parse_range(eig_range), {0.0}};
      grid.validate();
      const auto machine = reference_machine();
      analysis::MapInputs in;
      in.estimated = machine.params;
      in.omega_n = machine.base.omega_n;
      const auto cells = analysis::evaluate_grid_parallel(grid, in);
      std::ostream* out = &std::cout;
      std::ofstream file_out;
      if (!g.out_dir.empty()) {
        fs::create_directories(g.out_dir);
        file_out.open(fs::path(g.out_dir) / "eig.csv");
        out = &file_out;
      }
      analysis::write_map_csv(*out, cells, analysis::kEigen);
    } else if (*validate) {
      const auto s = scenario::load(file);
      std::cout << "ok: " << (s.run.name.empty() ? file : s.run.name) << ", " << s.step_count() << " steps, "
                << s.events.size() << " events\n";
    }
  } catch (const NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << " (last valid step " << e.last_valid_step() << ")\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kOk;
}
