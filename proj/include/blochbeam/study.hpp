#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "blochbeam/reference.hpp"
#include "blochbeam/wavefield.hpp"

namespace blochbeam {

// Full description of one convergence study: the physical setup, the
// epsilon ladder, and the numerical knobs with their standard defaults.
struct StudyConfig {
  PeriodicPotential V = PeriodicPotential::free_space();
  ExternalPotential Ve = ExternalPotential::zero();
  InitialData data{{1}, {Envelope::gaussian(1.0, 1.0, 0.0)}, PhaseS0::linear(0.0), -1.0, 1.0};
  std::vector<double> epsilons;
  double T = 0.0;

  int mpw = 16;                  // plane-wave cutoff
  double dt_beam_factor = 1e-3;  // ray integrator step
  double dx0_factor = 0.25;      // beam spacing = dx0_factor * sqrt(eps)
  double rcut_factor = 6.0;      // evaluation radius = rcut_factor * sqrt(eps/delta)
  double dt_ref_factor = 0.5;    // reference step = dt_ref_factor * eps^{3/2}
  int ppc = 32;                  // reference grid points per lattice cell
  double box_margin = 0.5;
  double ref_gate_tol = 1e-8;    // resolution gate for the reference solve
  double gap_min = kGapMinDefault;
  bool with_a1 = true;
  bool parallel = true;

  double residual_t = 0.5;       // phase-defect probe: evolution time,
  double residual_x0 = 0.0;      // launch point (defaults to the support middle),
  std::vector<double> residual_h{1e-2, 5e-3, 2.5e-3};  // and offset ladder
  bool residual_x0_set = false;

  std::vector<std::string> warnings;  // non-fatal parse notes

  int threads() const {
    if (!parallel) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    return std::max(2u, hw);  // exercise the concurrent path even on one core
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Numbers may be plain floating-point literals or fractions like 1/32.
inline bool parse_number(const std::string& s, double* out) {
  std::string t = trim(s);
  size_t slash = t.find('/');
  if (slash != std::string::npos) {
    double num, den;
    if (!parse_number(t.substr(0, slash), &num)) return false;
    if (!parse_number(t.substr(slash + 1), &den)) return false;
    if (den == 0.0) return false;
    *out = num / den;
    return true;
  }
  try {
    size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) return false;
    *out = v;
    return true;
  } catch (...) {
    return false;
  }
}

inline bool parse_bool(const std::string& s, bool* out) {
  std::string t = trim(s);
  if (t == "true" || t == "yes" || t == "1") { *out = true; return true; }
  if (t == "false" || t == "no" || t == "0") { *out = false; return true; }
  return false;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct RawConfig {
  struct Entry {
    std::string value;
    int line;
    mutable bool used = false;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  const std::string* get(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  bool number(const std::string& key, double* out) {
    const std::string* v = get(key);
    if (!v) return false;
    if (!parse_number(*v, out)) {
      violations.push_back("line " + std::to_string(entries.at(key).line) + ": key '" +
                           key + "': cannot parse number from '" + *v + "'");
      return false;
    }
    return true;
  }

  double number_or(const std::string& key, double dflt) {
    double v = dflt;
    number(key, &v);
    return v;
  }

  double required_number(const std::string& key) {
    double v = 0.0;
    if (entries.find(key) == entries.end()) {
      violations.push_back("missing required key '" + key + "'");
      return 0.0;
    }
    number(key, &v);
    return v;
  }

  std::string required_string(const std::string& key) {
    const std::string* v = get(key);
    if (!v) {
      violations.push_back("missing required key '" + key + "'");
      return "";
    }
    return *v;
  }
};

inline RawConfig tokenize_config(const std::string& text) {
  RawConfig raw;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      raw.violations.push_back("line " + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      raw.violations.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    auto it = raw.entries.find(key);
    if (it != raw.entries.end()) {
      raw.warnings.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key +
                             "' overrides line " + std::to_string(it->second.line));
      it->second = {value, lineno, false};
    } else {
      raw.entries.emplace(key, RawConfig::Entry{value, lineno, false});
    }
  }
  return raw;
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

}  // namespace detail

// Parse a study description in `key = value` form ('#' starts a comment,
// numbers may be fractions). All problems are collected and reported in one
// configuration error rather than stopping at the first.
inline StudyConfig parse_config(const std::string& text) {
  detail::RawConfig raw = detail::tokenize_config(text);
  StudyConfig cfg;

  // lattice potential: v0, v1, v1_im, v2, ... (defaults to free space)
  {
    int max_m = -1;
    for (const auto& [key, e] : raw.entries) {
      if (key.rfind("potential.v", 0) == 0) {
        std::string tail = key.substr(11);
        if (tail.size() >= 3 && tail.substr(tail.size() - 3) == "_im")
          tail = tail.substr(0, tail.size() - 3);
        try {
          max_m = std::max(max_m, std::stoi(tail));
        } catch (...) {
          raw.violations.push_back("line " + std::to_string(e.line) +
                                   ": unrecognized potential key '" + key + "'");
        }
      }
    }
    if (max_m >= 0) {
      std::vector<Complex> coeffs(max_m + 1, Complex(0.0));
      for (int m = 0; m <= max_m; ++m) {
        double re = raw.number_or("potential.v" + std::to_string(m), 0.0);
        double im = raw.number_or("potential.v" + std::to_string(m) + "_im", 0.0);
        coeffs[m] = Complex(re, im);
      }
      try {
        cfg.V = PeriodicPotential(coeffs);
      } catch (const ConfigError& e) {
        raw.violations.push_back(e.what());
      }
    }
  }

  // external potential
  {
    const std::string* form = raw.get("external.form");
    std::string f = form ? detail::trim(*form) : "zero";
    try {
      if (f == "zero") {
        cfg.Ve = ExternalPotential::zero();
      } else if (f == "harmonic") {
        cfg.Ve = ExternalPotential::harmonic(raw.required_number("external.omega"));
      } else if (f == "gaussian_well") {
        cfg.Ve = ExternalPotential::gaussian_well(raw.required_number("external.depth"),
                                                  raw.required_number("external.width"),
                                                  raw.number_or("external.center", 0.0));
      } else if (f == "cosine") {
        cfg.Ve = ExternalPotential::cosine(raw.required_number("external.amplitude"),
                                           raw.required_number("external.wavenumber"));
      } else {
        raw.violations.push_back("external.form: unknown form '" + f + "'");
      }
    } catch (const ConfigError& e) {
      raw.violations.push_back(e.what());
    }
  }

  // initial phase
  PhaseS0 S0 = PhaseS0::linear(0.0);
  {
    std::string f = raw.required_string("s0.form");
    if (f == "linear") {
      S0 = PhaseS0::linear(raw.required_number("s0.c"));
    } else if (f == "quadratic") {
      S0 = PhaseS0::quadratic(raw.required_number("s0.alpha"));
    } else if (f == "gaussian_phase") {
      S0 = PhaseS0::gaussian_phase(raw.required_number("s0.beta"),
                                   raw.required_number("s0.sigma"));
    } else if (!f.empty()) {
      raw.violations.push_back("s0.form: unknown form '" + f + "'");
    }
  }

  // bands and envelopes
  std::vector<int> bands;
  std::vector<Envelope> envelopes;
  {
    std::string bl = raw.required_string("bands");
    for (const std::string& tok : detail::split_list(bl)) {
      double v = 0.0;
      if (!detail::parse_number(tok, &v) || v != std::floor(v) || v < 1) {
        raw.violations.push_back("bands: '" + tok + "' is not a positive integer");
      } else {
        bands.push_back(static_cast<int>(v));
      }
    }
    for (size_t i = 1; i <= bands.size(); ++i) {
      std::string pre = "envelope" + std::to_string(i) + ".";
      std::string f = raw.required_string(pre + "form");
      double A = raw.number_or(pre + "amplitude", 1.0);
      double c = raw.number_or(pre + "center", 0.0);
      if (f == "gaussian") {
        double sg = raw.required_number(pre + "sigma");
        if (sg > 0) envelopes.push_back(Envelope::gaussian(A, sg, c));
      } else if (f == "cosine_bump") {
        double w = raw.required_number(pre + "width");
        if (w > 0) envelopes.push_back(Envelope::cosine_bump(A, w, c));
      } else if (!f.empty()) {
        raw.violations.push_back(pre + "form: unknown form '" + f + "'");
      } else {
        envelopes.emplace_back(Envelope::gaussian(1.0, 1.0, 0.0));  // placeholder
      }
      if (envelopes.size() < i) envelopes.emplace_back(Envelope::gaussian(1.0, 1.0, 0.0));
    }
  }
  double lo = raw.required_number("support.lo");
  double hi = raw.required_number("support.hi");
  if (!bands.empty() && envelopes.size() == bands.size() && hi > lo) {
    cfg.data = InitialData{bands, envelopes, S0, lo, hi};
    try {
      cfg.data.validate();
    } catch (const ConfigError& e) {
      raw.violations.push_back(e.what());
    }
  }

  // epsilon ladder: all at most 1/8, consecutive entries halving
  {
    std::string el = raw.required_string("epsilons");
    for (const std::string& tok : detail::split_list(el)) {
      double v = 0.0;
      if (!detail::parse_number(tok, &v) || !(v > 0.0)) {
        raw.violations.push_back("epsilons: cannot parse '" + tok + "'");
      } else {
        cfg.epsilons.push_back(v);
      }
    }
    if (cfg.epsilons.empty()) {
      raw.violations.push_back("epsilons: at least one value required");
    } else {
      for (size_t i = 0; i < cfg.epsilons.size(); ++i) {
        if (cfg.epsilons[i] > 1.0 / 8.0 + 1e-15)
          raw.violations.push_back("epsilons: entry " + std::to_string(i + 1) +
                                   " exceeds 1/8");
        if (i > 0) {
          double ratio = cfg.epsilons[i - 1] / cfg.epsilons[i];
          if (std::abs(ratio - 2.0) > 1e-12)
            raw.violations.push_back(
                "epsilons: consecutive entries must halve, but entries " +
                std::to_string(i) + " and " + std::to_string(i + 1) + " have ratio " +
                std::to_string(ratio));
        }
      }
    }
  }

  cfg.T = raw.required_number("T");
  if (cfg.T < 0) raw.violations.push_back("T: must be >= 0");

  cfg.mpw = static_cast<int>(raw.number_or("mpw", cfg.mpw));
  cfg.dt_beam_factor = raw.number_or("dt_beam_factor", cfg.dt_beam_factor);
  cfg.dx0_factor = raw.number_or("dx0_factor", cfg.dx0_factor);
  cfg.rcut_factor = raw.number_or("rcut_factor", cfg.rcut_factor);
  cfg.dt_ref_factor = raw.number_or("dt_ref_factor", cfg.dt_ref_factor);
  cfg.ppc = static_cast<int>(raw.number_or("ppc", cfg.ppc));
  cfg.box_margin = raw.number_or("box_margin", cfg.box_margin);
  cfg.ref_gate_tol = raw.number_or("ref_gate_tol", cfg.ref_gate_tol);
  cfg.gap_min = raw.number_or("gap_min", cfg.gap_min);
  if (const std::string* v = raw.get("with_a1")) {
    if (!detail::parse_bool(*v, &cfg.with_a1))
      raw.violations.push_back("with_a1: cannot parse boolean from '" + *v + "'");
  }
  if (const std::string* v = raw.get("parallel")) {
    if (!detail::parse_bool(*v, &cfg.parallel))
      raw.violations.push_back("parallel: cannot parse boolean from '" + *v + "'");
  }
  cfg.residual_t = raw.number_or("residual.t", cfg.residual_t);
  if (raw.entries.count("residual.x0")) {
    cfg.residual_x0 = raw.number_or("residual.x0", 0.0);
    cfg.residual_x0_set = true;
  }
  if (const std::string* v = raw.get("residual.h")) {
    std::vector<double> hs;
    for (const std::string& tok : detail::split_list(*v)) {
      double h = 0.0;
      if (!detail::parse_number(tok, &h) || !(h > 0)) {
        raw.violations.push_back("residual.h: cannot parse '" + tok + "'");
      } else {
        hs.push_back(h);
      }
    }
    if (!hs.empty()) cfg.residual_h = hs;
  }
  if (!cfg.residual_x0_set)
    cfg.residual_x0 = 0.5 * (cfg.data.support_lo + cfg.data.support_hi);

  for (const auto& [key, e] : raw.entries)
    if (!e.used)
      raw.violations.push_back("line " + std::to_string(e.line) + ": unknown key '" + key +
                               "'");

  if (!(cfg.mpw >= 1)) raw.violations.push_back("mpw: must be >= 1");
  if (!(cfg.ppc >= 2)) raw.violations.push_back("ppc: must be >= 2");
  if (!(cfg.dt_beam_factor > 0)) raw.violations.push_back("dt_beam_factor: must be > 0");
  if (!(cfg.dx0_factor > 0)) raw.violations.push_back("dx0_factor: must be > 0");
  if (!(cfg.rcut_factor > 0)) raw.violations.push_back("rcut_factor: must be > 0");
  if (!(cfg.dt_ref_factor > 0)) raw.violations.push_back("dt_ref_factor: must be > 0");
  if (!(cfg.box_margin >= 0)) raw.violations.push_back("box_margin: must be >= 0");
  if (!(cfg.ref_gate_tol > 0)) raw.violations.push_back("ref_gate_tol: must be > 0");

  if (!raw.violations.empty()) {
    std::string msg = "configuration errors:";
    for (const std::string& v : raw.violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  cfg.warnings = raw.warnings;
  return cfg;
}

inline StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// One epsilon row of a study. Failed rows keep the error text and leave the
// data cells as NaN.
struct StudyRow {
  double epsilon = 0.0;
  bool ok = false;
  std::string error;
  double err_initial = std::numeric_limits<double>::quiet_NaN();
  double err_total = std::numeric_limits<double>::quiet_NaN();
  double ref_mass_drift = std::numeric_limits<double>::quiet_NaN();
  double min_ImM = std::numeric_limits<double>::quiet_NaN();
  double min_gap = std::numeric_limits<double>::quiet_NaN();
  double runtime_s = std::numeric_limits<double>::quiet_NaN();
};

struct StudyResult {
  std::vector<StudyRow> rows;
  bool all_ok = false;
};

namespace detail {

struct RowFields {
  WaveField gb_initial;   // superposed launch lattice
  WaveField gb_total;     // superposed evolved beams (possibly == initial at T = 0)
  WaveField exact0;       // direct two-scale data
  WaveField reference;    // resolved evolved reference
};

}  // namespace detail

// Run one epsilon row; optionally hand back the four fields for inspection.
inline StudyRow run_row(const StudyConfig& cfg, double eps,
                        detail::RowFields* fields = nullptr) {
  auto t_start = std::chrono::steady_clock::now();
  StudyRow row;
  row.epsilon = eps;
  try {
    PlaneWaveBasis basis{cfg.mpw};
    basis.require_resolves(cfg.V);
    cfg.data.validate();
    int threads = cfg.threads();

    double dx0max = cfg.dx0_factor * std::sqrt(eps);
    double dx0 = 0.0;
    std::vector<BeamState> launched = launch_beams(cfg.V, basis, cfg.data, dx0max, &dx0);

    // evolve the beam ensemble
    std::vector<BeamState> finals(launched.size());
    std::vector<double> imM(launched.size()), gaps(launched.size());
    detail::run_indexed(static_cast<int>(launched.size()), threads, [&](int i) {
      if (cfg.T == 0.0) {
        finals[i] = launched[i];
        imM[i] = launched[i].M.imag();
        gaps[i] = band_local(cfg.V, basis, launched[i].p, launched[i].band, cfg.gap_min).gap;
      } else {
        PropagationResult pr = rk4_propagate(cfg.V, basis, cfg.Ve, launched[i], cfg.T,
                                             cfg.dt_beam_factor, cfg.gap_min);
        finals[i] = pr.state;
        imM[i] = pr.min_ImM;
        gaps[i] = pr.min_gap;
      }
    });
    row.min_ImM = *std::min_element(imM.begin(), imM.end());
    row.min_gap = *std::min_element(gaps.begin(), gaps.end());
    if (!(row.min_ImM > 0))
      throw NumericsError("beam ensemble lost positivity of Im M");

    // evaluation radii from the narrowest beam width
    double rcut0 = cfg.rcut_factor * std::sqrt(eps / 0.5);  // Im M = 1 at launch
    double deltaT = std::numeric_limits<double>::infinity();
    for (const BeamState& st : finals) deltaT = std::min(deltaT, st.M.imag() / 2.0);
    double rcutT = cfg.rcut_factor * std::sqrt(eps / deltaT);
    double reach = std::max(rcut0, rcutT) + cfg.box_margin;

    // periodic box: whole lattice cells covering every beam's support
    double lo = cfg.data.support_lo, hi = cfg.data.support_hi;
    for (const BeamState& st : finals) {
      lo = std::min(lo, st.xt);
      hi = std::max(hi, st.xt);
    }
    lo -= reach;
    hi += reach;
    double cell = 2.0 * kPi * eps;
    int ncell = static_cast<int>(std::ceil((hi - lo) / cell - 1e-12));
    double L = ncell * cell;
    double x_lo = 0.5 * (lo + hi) - L / 2.0;
    int ng = detail::next_pow2(ncell * cfg.ppc);
    WaveField grid(x_lo, L / ng, ng);

    detail::RowFields f;
    f.exact0 = exact_initial(cfg.V, basis, cfg.data, eps, grid, cfg.gap_min);
    f.gb_initial = initial_superposition(cfg.V, basis, cfg.data, eps, grid, dx0max, rcut0,
                                         threads);
    row.err_initial = l2_error(f.gb_initial, f.exact0);

    if (cfg.T == 0.0) {
      // the evolved field degenerates to the launch lattice
      f.gb_total = f.gb_initial;
      f.reference = f.exact0;
      row.err_total = row.err_initial;
      row.ref_mass_drift = 0.0;
    } else {
      ResolvedReference ref =
          resolved_reference(cfg.V, basis, cfg.Ve, cfg.data, eps, cfg.T, grid,
                             cfg.dt_ref_factor * std::pow(eps, 1.5), cfg.ref_gate_tol);
      row.ref_mass_drift = ref.mass_drift;

      SuperposeOptions opt;
      opt.dx0 = dx0;
      opt.rcut = rcutT;
      opt.with_a1 = cfg.with_a1;
      opt.threads = threads;
      opt.gap_min = cfg.gap_min;
      f.gb_total = superpose(cfg.V, basis, cfg.Ve, finals, eps, grid, opt);
      row.err_total = l2_error(f.gb_total, ref.u);
      f.reference = std::move(ref.u);
    }
    if (fields) *fields = std::move(f);
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return row;
}

// Run the whole ladder; rows never abort the study, failures are recorded.
inline StudyResult run_study(const StudyConfig& cfg, std::ostream* log = nullptr) {
  StudyResult out;
  out.all_ok = true;
  for (double eps : cfg.epsilons) {
    StudyRow row = run_row(cfg, eps);
    if (log) {
      if (row.ok)
        *log << "eps = " << eps << ": err_initial = " << row.err_initial
             << ", err_total = " << row.err_total << " (" << row.runtime_s << " s)\n";
      else
        *log << "eps = " << eps << ": FAILED: " << row.error << "\n";
    }
    out.all_ok = out.all_ok && row.ok;
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Convergence order between two ladder rows (the mesh halves): empty when
// either row is missing, "nan" when a zero error makes the order undefined.
inline std::string order_cell(const StudyRow* prev, const StudyRow& cur, bool initial) {
  if (!prev || !prev->ok || !cur.ok) return "";
  double a = initial ? prev->err_initial : prev->err_total;
  double b = initial ? cur.err_initial : cur.err_total;
  if (!(a > 0.0) || !(b > 0.0)) return "nan";
  return fmt17(std::log2(a / b));
}

}  // namespace detail

inline void write_csv(const StudyResult& res, std::ostream& os) {
  os << "epsilon,err_initial_L2,err_total_L2,order_initial,order_total,"
        "ref_mass_drift,min_ImM,min_gap,runtime_s\n";
  for (size_t i = 0; i < res.rows.size(); ++i) {
    const StudyRow& r = res.rows[i];
    const StudyRow* prev = i > 0 ? &res.rows[i - 1] : nullptr;
    os << detail::fmt17(r.epsilon) << ',' << detail::fmt17(r.err_initial) << ','
       << detail::fmt17(r.err_total) << ',' << detail::order_cell(prev, r, true) << ','
       << detail::order_cell(prev, r, false) << ',' << detail::fmt17(r.ref_mass_drift)
       << ',' << detail::fmt17(r.min_ImM) << ',' << detail::fmt17(r.min_gap) << ','
       << detail::fmt17(r.runtime_s) << '\n';
  }
}

inline std::string csv_string(const StudyResult& res) {
  std::stringstream ss;
  write_csv(res, ss);
  return ss.str();
}

// Log-log convergence plot as a standalone SVG: both error series against
// epsilon plus a half-order guide line through the first total-error point.
inline void emit_plot(const StudyResult& res, std::ostream& os) {
  std::vector<const StudyRow*> rows;
  for (const StudyRow& r : res.rows)
    if (r.ok && r.err_total > 0 && r.err_initial > 0) rows.push_back(&r);

  const int W = 640, H = 480, ML = 70, MR = 30, MT = 30, MB = 50;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";

  if (rows.size() < 2) {
    os << "<text x=\"" << W / 2 << "\" y=\"" << H / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\">not enough completed rows"
          "</text>\n</svg>\n";
    return;
  }

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const StudyRow* r : rows) {
    xmin = std::min(xmin, std::log10(r->epsilon));
    xmax = std::max(xmax, std::log10(r->epsilon));
    for (double e : {r->err_initial, r->err_total}) {
      ymin = std::min(ymin, std::log10(e));
      ymax = std::max(ymax, std::log10(e));
    }
  }
  double xpad = 0.05 * (xmax - xmin), ypad = 0.1 * std::max(ymax - ymin, 0.5);
  xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;
  auto px = [&](double lx) { return ML + (lx - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto py = [&](double ly) { return H - MB - (ly - ymin) / (ymax - ymin) * (H - MT - MB); };

  char buf[256];
  // axes
  os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
     << H - MB << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
     << "\" stroke=\"black\"/>\n";
  // x ticks at the epsilon values, labelled as fractions
  for (const StudyRow* r : rows) {
    double X = px(std::log10(r->epsilon));
    os << "<line x1=\"" << X << "\" y1=\"" << H - MB << "\" x2=\"" << X << "\" y2=\""
       << H - MB + 5 << "\" stroke=\"black\"/>\n";
    int denom = static_cast<int>(std::lround(1.0 / r->epsilon));
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"12\" "
                  "font-family=\"sans-serif\">1/%d</text>\n",
                  X, H - MB + 20, denom);
    os << buf;
  }
  // y ticks at decades
  for (int d = static_cast<int>(std::floor(ymin)); d <= static_cast<int>(std::ceil(ymax));
       ++d) {
    if (d < ymin || d > ymax) continue;
    double Y = py(d);
    os << "<line x1=\"" << ML - 5 << "\" y1=\"" << Y << "\" x2=\"" << ML << "\" y2=\"" << Y
       << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"12\" "
                  "font-family=\"sans-serif\">1e%d</text>\n",
                  ML - 8, Y + 4, d);
    os << buf;
  }
  os << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        "epsilon</text>\n";
  os << "<text x=\"15\" y=\"" << (MT + H - MB) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 15 "
     << (MT + H - MB) / 2 << ")\">L2 error</text>\n";

  auto series = [&](bool initial, const char* color) {
    std::string pts;
    for (const StudyRow* r : rows) {
      double e = initial ? r->err_initial : r->err_total;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(std::log10(r->epsilon)),
                    py(std::log10(e)));
      pts += buf;
    }
    os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    for (const StudyRow* r : rows) {
      double e = initial ? r->err_initial : r->err_total;
      os << "<circle cx=\"" << px(std::log10(r->epsilon)) << "\" cy=\""
         << py(std::log10(e)) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
  };
  series(false, "#c0392b");
  series(true, "#2980b9");

  // half-order guide through the largest-epsilon total point
  {
    const StudyRow* r0 = rows.front();
    double lx0 = std::log10(r0->epsilon), ly0 = std::log10(r0->err_total);
    double lx1 = std::log10(rows.back()->epsilon);
    double ly1 = ly0 + 0.5 * (lx1 - lx0);
    os << "<line x1=\"" << px(lx0) << "\" y1=\"" << py(ly0) << "\" x2=\"" << px(lx1)
       << "\" y2=\"" << py(ly1)
       << "\" stroke=\"gray\" stroke-dasharray=\"6,4\" stroke-width=\"1\"/>\n";
  }
  os << "<text x=\"" << W - MR - 10 << "\" y=\"" << MT + 15
     << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" "
        "fill=\"#c0392b\">evolved field error</text>\n";
  os << "<text x=\"" << W - MR - 10 << "\" y=\"" << MT + 32
     << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" "
        "fill=\"#2980b9\">initial field error</text>\n";
  os << "<text x=\"" << W - MR - 10 << "\" y=\"" << MT + 49
     << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" "
        "fill=\"gray\">slope 1/2 guide</text>\n";
  os << "</svg>\n";
}

// Phase-defect table for one beam of the configured setup: the launch point
// comes from residual.x0, the evolution time from residual.t, and each row
// holds |F(h)| plus the ratio against the previous (doubled) offset.
struct ResidualRow {
  double h;
  double absF;
  double ratio;  // NaN on the first row
};

inline std::vector<ResidualRow> run_residual(const StudyConfig& cfg, double eps) {
  PlaneWaveBasis basis{cfg.mpw};
  basis.require_resolves(cfg.V);
  (void)eps;  // the defect is a ray-level diagnostic; eps only labels the run

  int band = cfg.data.bands.front();
  BeamState st = init_beam(cfg.V, basis, cfg.data, band, cfg.residual_x0);
  if (std::abs(st.a) == 0.0)
    throw ConfigError("residual probe: the envelope vanishes at x0 = " +
                      std::to_string(cfg.residual_x0));
  if (cfg.residual_t > 0.0)
    st = rk4_propagate(cfg.V, basis, cfg.Ve, st, cfg.residual_t, cfg.dt_beam_factor,
                       cfg.gap_min)
             .state;

  std::vector<double> hs = cfg.residual_h;
  std::vector<double> F = hj_residual(cfg.V, basis, cfg.Ve, st, hs, cfg.gap_min);
  std::vector<ResidualRow> rows;
  for (size_t i = 0; i < hs.size(); ++i) {
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (i > 0 && F[i] > 0) ratio = F[i - 1] / F[i];
    rows.push_back({hs[i], F[i], ratio});
  }
  return rows;
}

inline void write_residual_csv(const std::vector<ResidualRow>& rows, std::ostream& os) {
  os << "h,abs_F,ratio\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    os << detail::fmt17(rows[i].h) << ',' << detail::fmt17(rows[i].absF) << ',';
    if (i == 0)
      os << '\n';
    else
      os << detail::fmt17(rows[i].ratio) << '\n';
  }
}

}  // namespace blochbeam
