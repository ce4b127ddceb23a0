// Command-line front end for the Bloch-band Gaussian beam toolkit.
//
//   blochbeam bands     --config c.cfg [--out dir]   band structure scan
//   blochbeam propagate --config c.cfg [--out dir]   single-beam trajectory
//   blochbeam simulate  --config c.cfg [--out dir]   beam-superposed fields
//   blochbeam reference --config c.cfg [--out dir]   grid reference fields
//   blochbeam converge  --config c.cfg [--out dir]   epsilon ladder study
//   blochbeam residual  --config c.cfg [--out dir]   phase-defect ladder
//
// --serial forces single-threaded execution, --no-a1 drops the first-order
// corrector from superposed fields.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "blochbeam/study.hpp"

namespace {

using namespace blochbeam;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  bool serial = false;
  bool no_a1 = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "study configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory (created if absent)");
  cmd->add_flag("--serial", args.serial, "disable beam-level parallelism");
  cmd->add_flag("--no-a1", args.no_a1, "superpose the leading profile only");
}

StudyConfig load(const CommonArgs& args) {
  StudyConfig cfg = load_config(args.config_path);
  for (const std::string& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
  if (args.serial) cfg.parallel = false;
  if (args.no_a1) cfg.with_a1 = false;
  std::filesystem::create_directories(args.out_dir);
  return cfg;
}

std::ofstream open_out(const CommonArgs& args, const std::string& name) {
  std::filesystem::path p = std::filesystem::path(args.out_dir) / name;
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  std::cout << p.string() << "\n";
  return f;
}

int cmd_bands(const CommonArgs& args) {
  StudyConfig cfg = load(args);
  PlaneWaveBasis basis{cfg.mpw};
  basis.require_resolves(cfg.V);
  int nb = cfg.data.bands.back() + 2;

  std::ofstream f = open_out(args, "bands.csv");
  f << "k";
  for (int n = 1; n <= nb; ++n) f << ",E" << n;
  f << "\n";
  const int nk = 101;
  for (int i = 0; i < nk; ++i) {
    double k = -0.5 + i / double(nk - 1);
    CellSolution cs = solve_cell(cfg.V, basis, k);
    f << detail::fmt17(k);
    for (int n = 1; n <= nb; ++n) f << ',' << detail::fmt17(cs.E[n - 1]);
    f << "\n";
  }
  return 0;
}

int cmd_propagate(const CommonArgs& args) {
  StudyConfig cfg = load(args);
  PlaneWaveBasis basis{cfg.mpw};
  basis.require_resolves(cfg.V);

  BeamState st = init_beam(cfg.V, basis, cfg.data, cfg.data.bands.front(), cfg.residual_x0);
  std::ofstream f = open_out(args, "trajectory.csv");
  f << "t,xt,p,S,re_M,im_M,re_a,im_a\n";
  auto dump = [&](const BeamState& s) {
    f << detail::fmt17(s.t) << ',' << detail::fmt17(s.xt) << ',' << detail::fmt17(s.p)
      << ',' << detail::fmt17(s.S) << ',' << detail::fmt17(s.M.real()) << ','
      << detail::fmt17(s.M.imag()) << ',' << detail::fmt17(s.a.real()) << ','
      << detail::fmt17(s.a.imag()) << "\n";
  };
  if (cfg.T > 0.0)
    rk4_propagate(cfg.V, basis, cfg.Ve, st, cfg.T, cfg.dt_beam_factor, cfg.gap_min, dump);
  else
    dump(st);
  return 0;
}

void write_field(std::ofstream f, const WaveField& u) {
  f << "x,re_u,im_u\n";
  for (int j = 0; j < u.size(); ++j)
    f << detail::fmt17(u.x(j)) << ',' << detail::fmt17(u.u[j].real()) << ','
      << detail::fmt17(u.u[j].imag()) << "\n";
}

int cmd_fields(const CommonArgs& args, bool reference) {
  StudyConfig cfg = load(args);
  int status = 0;
  for (double eps : cfg.epsilons) {
    detail::RowFields fields;
    StudyRow row = run_row(cfg, eps, &fields);
    int denom = static_cast<int>(std::lround(1.0 / eps));
    if (!row.ok) {
      std::cerr << "eps = 1/" << denom << " failed: " << row.error << "\n";
      status = 1;
      continue;
    }
    std::string tag = "eps" + std::to_string(denom) + ".csv";
    if (reference) {
      write_field(open_out(args, "field_ref_" + tag), fields.reference);
    } else {
      write_field(open_out(args, "field_gb_initial_" + tag), fields.gb_initial);
      write_field(open_out(args, "field_gb_" + tag), fields.gb_total);
    }
  }
  return status;
}

int cmd_converge(const CommonArgs& args) {
  StudyConfig cfg = load(args);
  StudyResult res = run_study(cfg, &std::cout);
  std::ofstream csv = open_out(args, "study.csv");
  write_csv(res, csv);
  std::ofstream svg = open_out(args, "plot.svg");
  emit_plot(res, svg);
  return res.all_ok ? 0 : 1;
}

int cmd_residual(const CommonArgs& args) {
  StudyConfig cfg = load(args);
  auto rows = run_residual(cfg, cfg.epsilons.front());
  std::ofstream csv = open_out(args, "residual.csv");
  write_residual_csv(rows, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bloch-band Gaussian beam toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonArgs> args;
  std::map<std::string, std::function<int(const CommonArgs&)>> actions = {
      {"bands", cmd_bands},
      {"propagate", cmd_propagate},
      {"simulate", [](const CommonArgs& a) { return cmd_fields(a, false); }},
      {"reference", [](const CommonArgs& a) { return cmd_fields(a, true); }},
      {"converge", cmd_converge},
      {"residual", cmd_residual},
  };
  std::map<std::string, std::string> blurbs = {
      {"bands", "scan the band structure over the Brillouin zone"},
      {"propagate", "integrate one beam and dump its trajectory"},
      {"simulate", "superpose beams into wave fields for each epsilon"},
      {"reference", "solve the grid reference for each epsilon"},
      {"converge", "run the epsilon ladder and write study.csv + plot.svg"},
      {"residual", "tabulate the quadratic-phase defect ladder"},
  };
  for (auto& [name, fn] : actions) add_common(app.add_subcommand(name, blurbs[name]), args[name]);

  CLI11_PARSE(app, argc, argv);

  for (auto& [name, fn] : actions) {
    if (app.get_subcommand(name)->parsed()) {
      try {
        return fn(args[name]);
      } catch (const blochbeam::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
    }
  }
  return 1;
}
