// ionlab command-line front end: modes, run, fit, gatespeed.
#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ionlab/ionlab.hpp"

namespace ionlab::cli {

inline constexpr const char* kVersion = "ionlab 0.1.0";

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// --- configuration layering -------------------------------------------------------------

/// sequence header < --config file < --set lines.
inline Header layered_header(const Header& from_sequence, const std::string& config_path,
                             const std::vector<std::string>& set_lines) {
  Header h = from_sequence;
  if (!config_path.empty()) h = merge(h, parse_config(read_file(config_path)));
  std::string joined;
  for (const auto& l : set_lines) joined += l + "\n";
  if (!joined.empty()) h = merge(h, parse_config(joined));
  return h;
}

inline nlohmann::json config_json(const LabConfig& c) {
  nlohmann::json j;
  j["trap_hz"] = {c.trap.secular_frequencies[0] / constants::two_pi,
                  c.trap.secular_frequencies[1] / constants::two_pi,
                  c.trap.secular_frequencies[2] / constants::two_pi};
  j["beam"] = c.trap.laser_direction_cosines;
  j["species"] = {{"name", c.species.name},
                  {"mass_kg", c.species.mass},
                  {"wavelength_m", c.species.qubit_wavelength},
                  {"linewidth_rad_s", c.species.dipole_linewidth},
                  {"d_lifetime_s", c.species.d_state_lifetime}};
  j["ions"] = c.n_ions;
  j["noise"] = {{"dephasing_rate", c.noise.dephasing_rate},
                {"d_decay_rate", c.noise.d_decay_rate},
                {"heating_rate", c.noise.heating_rate},
                {"convention", c.convention == DecayConvention::rate ? "rate" : "angular"}};
  j["omega_rad_s"] = c.default_omega;
  j["sidebands"] = c.sidebands;
  j["rwa"] = c.rwa;
  j["nmax"] = c.n_max;
  j["detection"] = c.detection_efficiency;
  return j;
}

inline std::string gnuplot_script(const std::string& csv_path, const std::string& xlabel,
                                  const std::string& ylabel, const std::string& columns) {
  return "set datafile separator ','\nset key off\nset xlabel '" + xlabel + "'\nset ylabel '" + ylabel +
         "'\nplot '" + csv_path + "' every ::1 using " + columns + "\npause -1\n";
}

// --- modes ------------------------------------------------------------------------------

struct ModesArgs {
  std::string config;
  std::vector<std::string> set;
  std::optional<int> ions;
  int order = 2;
  std::string out;
};

inline int cmd_modes(const ModesArgs& a, Streams io) {
  Header h = layered_header({}, a.config, a.set);
  if (a.ions) h.n_ions = *a.ions;
  const LabConfig cfg = resolve(h);
  const Axis along = crystal_axis(cfg.trap);
  const auto eq = equilibrium_positions(cfg.n_ions, cfg.species, cfg.trap.frequency(along));
  const auto spectrum = crystal_spectrum(cfg.n_ions, cfg.trap);

  char buf[256];
  io.out << "crystal axis: " << axis_name(along) << ", ions: " << cfg.n_ions << "\n";
  io.out << "equilibrium positions (um):";
  for (double u : eq.u) {
    std::snprintf(buf, sizeof buf, " %.4f", u * eq.length_scale * 1e6);
    io.out << buf;
  }
  io.out << "\n";
  if (cfg.n_ions > 1) {
    io.out << "spacing (um):";
    for (std::size_t i = 1; i < eq.u.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.4f", (eq.u[i] - eq.u[i - 1]) * eq.length_scale * 1e6);
      io.out << buf;
    }
    io.out << "\n";
  }
  io.out << "\nmode            frequency_MHz   ratio_to_axial  eta(ion 1)\n";
  std::string csv = "mode,axis,label,frequency_hz,ratio_to_axial,lamb_dicke\n";
  for (const auto& m : spectrum.modes) {
    const double eta = m.frequency > 0.0 ? mode_lamb_dicke(m, cfg.species, cfg.trap)[0] : 0.0;
    const double ratio = m.frequency / cfg.trap.frequency(along);
    std::snprintf(buf, sizeof buf, "%-15s %13.6f %16.9f %11.5f\n", m.name().c_str(),
                  m.frequency / constants::two_pi / 1e6, ratio, eta);
    io.out << buf;
    csv += m.name() + "," + std::string(1, axis_name(m.axis)) + "," + m.label + "," +
           dsl::num(m.frequency / constants::two_pi) + "," + dsl::num(ratio) + "," + dsl::num(eta) + "\n";
  }
  if (spectrum.stable) {
    io.out << "\nsideband lines to order " << a.order << " (MHz):\n";
    for (const auto& line : identify_sidebands(spectrum, a.order)) {
      std::snprintf(buf, sizeof buf, "  %10.6f  ", line.detuning_magnitude / constants::two_pi / 1e6);
      io.out << buf << line.describe() << "\n";
    }
  }
  if (!a.out.empty()) write_file(a.out, csv);
  for (const auto& w : spectrum.warnings) io.err << "warning: " << w << "\n";
  if (!spectrum.stable) {
    io.err << "error: crystal is unstable in this trap\n";
    return static_cast<int>(ErrorKind::physics);
  }
  return 0;
}

// --- run --------------------------------------------------------------------------------

struct RunArgs {
  std::string sequence;
  std::string config;
  std::vector<std::string> set;
  std::uint64_t seed = 1;
  std::optional<int> shots;
  bool oracle = false;
  std::string out;
  std::string gnuplot;
  std::string replay;
};

struct RunInputs {
  std::string sequence_text;
  std::string header_text;  // canonical merged header
  std::uint64_t seed = 1;
  std::optional<int> shots;
  bool oracle = false;
};

inline std::string manifest_path(const std::string& csv_path) { return csv_path + ".manifest.json"; }

inline std::string execute_run(const RunInputs& in, std::vector<std::string>& warnings, LabConfig& cfg_out) {
  const Program prog = parse_sequence(in.sequence_text);
  cfg_out = resolve(parse_config(in.header_text));
  std::optional<int> shots = in.oracle ? std::optional<int>(0) : in.shots;
  const auto result = run_scan(prog.sequence, cfg_out, in.seed, shots);
  warnings = result.warnings;
  return scan_csv(result);
}

inline int cmd_run(const RunArgs& a, Streams io) {
  RunInputs in;
  std::string out_path = a.out;
  std::vector<std::string> input_paths;
  if (!a.replay.empty()) {
    const auto j = nlohmann::json::parse(read_file(a.replay));
    in.sequence_text = j.at("sequence_text").get<std::string>();
    in.header_text = j.at("config_header").get<std::string>();
    in.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("shots").is_null()) in.shots = j.at("shots").get<int>();
    in.oracle = j.at("oracle").get<bool>();
    input_paths = j.at("inputs").get<std::vector<std::string>>();
    if (out_path.empty()) out_path = j.at("output").get<std::string>();
  } else {
    if (a.sequence.empty()) throw SchemaError("run requires a sequence file or --replay");
    in.sequence_text = read_file(a.sequence);
    const Program prog = parse_sequence(in.sequence_text);
    in.header_text = print_header(layered_header(prog.header, a.config, a.set));
    in.seed = a.seed;
    in.shots = a.shots;
    in.oracle = a.oracle;
    input_paths.push_back(a.sequence);
    if (!a.config.empty()) input_paths.push_back(a.config);
  }

  std::vector<std::string> warnings;
  LabConfig cfg;
  const std::string csv = execute_run(in, warnings, cfg);
  for (const auto& w : warnings) io.err << "warning: " << w << "\n";
  if (out_path.empty()) {
    io.out << csv;
    return 0;
  }
  write_file(out_path, csv);
  nlohmann::json m;
  m["subcommand"] = "run";
  m["inputs"] = input_paths;
  m["sequence_text"] = in.sequence_text;
  m["config_header"] = in.header_text;
  m["config"] = config_json(cfg);
  m["seed"] = in.seed;
  m["shots"] = in.shots ? nlohmann::json(*in.shots) : nlohmann::json(nullptr);
  m["oracle"] = in.oracle;
  m["output"] = out_path;
  m["version"] = kVersion;
  write_file(manifest_path(out_path), m.dump(2) + "\n");
  if (!a.gnuplot.empty()) {
    const auto rows = parse_scan_csv(csv).rows;
    const std::string xl = rows.empty() ? "value" : rows.front().param;
    write_file(a.gnuplot, gnuplot_script(out_path, xl, "P_D", "2:4:5 with yerrorbars"));
  }
  io.out << "wrote " << out_path << " (" << std::count(csv.begin(), csv.end(), '\n') - 1 << " points)\n";
  return 0;
}

// --- fit --------------------------------------------------------------------------------

struct FitArgs {
  std::string kind;
  std::vector<std::string> inputs;
  std::string sequence;
  std::string config;
  std::vector<std::string> set;
  std::string out;
  int n_cut = 4;
  int peaks = 1;
  bool per_component_decay = false;
  std::optional<double> eta;
  std::optional<double> omega_hz;
  std::optional<double> pulse_us;
  std::optional<double> gap_us;
};

struct Report {
  std::vector<std::tuple<std::string, double, double>> rows;
  std::string summary;

  void add(const std::string& q, double v, double e = 0.0) { rows.emplace_back(q, v, e); }
  std::string csv() const {
    std::string s = "quantity,value,stderr\n";
    for (const auto& [q, v, e] : rows) s += q + "," + dsl::num(v) + "," + dsl::num(e) + "\n";
    return s;
  }
};

namespace detail {

inline void require_inputs(const FitArgs& a, std::size_t n, const char* what) {
  if (a.inputs.size() != n) throw SchemaError(std::string("fit ") + a.kind + " expects " + what);
}

inline ScanResult load_scan(const std::string& path) { return parse_scan_csv(read_file(path)); }

// Knowns (eta, Omega, pulse timing) taken from the sequence used to produce the data.
struct SequenceKnowns {
  Program program;
  LabConfig config;
  DynamicsMode mode;
};

inline SequenceKnowns knowns(const FitArgs& a) {
  if (a.sequence.empty()) throw SchemaError("fit " + a.kind + " needs --sequence (or explicit knowns)");
  SequenceKnowns k;
  k.program = parse_sequence(read_file(a.sequence));
  k.config = resolve(layered_header(k.program.header, a.config, a.set));
  k.mode = resolve_mode(dynamics_mode_ref(k.program.sequence, k.config), k.config);
  return k;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void thermometry_rows(Report& r, const ThermometryResult& t) {
  r.add("ratio", t.ratio, t.ratio_error);
  r.add("nbar", t.nbar, t.nbar_error);
  r.add("p0", t.p0, t.p0_error);
  r.add("p0_ci95_low", t.p0_ci_low);
  r.add("p0_ci95_high", t.p0_ci_high);
  r.add("thermal_consistent", t.thermal_consistent ? 1.0 : 0.0);
}

inline Report fit_thermometry(const FitArgs& a) {
  require_inputs(a, 2, "RED.csv BLUE.csv");
  const auto red = load_scan(a.inputs[0]), blue = load_scan(a.inputs[1]);
  Report r;
  ThermometryResult t;
  if (red.rows.size() == 1 && blue.rows.size() == 1) {
    const auto& rr = red.rows[0];
    const auto& bb = blue.rows[0];
    t = sideband_thermometry({rr.p_est, rr.stderr_}, {bb.p_est, bb.stderr_});
  } else {
    const auto s = thermometry_from_scans(red, blue);
    r.add("blue_center_hz", s.blue.center, s.blue.center_error);
    r.add("blue_height", s.blue.height, s.blue.height_error);
    r.add("blue_width_hz", s.blue.width, s.blue.width_error);
    r.add("red_height", s.red.height, s.red.height_error);
    t = s.thermometry;
  }
  thermometry_rows(r, t);
  r.summary = t.thermal_consistent
                  ? "R = " + fmt("%.5g", t.ratio) + " +- " + fmt("%.2g", t.ratio_error) + ", nbar = " +
                        fmt("%.5g", t.nbar) + ", p0 = " + fmt("%.5f", t.p0) + " (95% CI " +
                        fmt("%.5f", t.p0_ci_low) + " .. " + fmt("%.5f", t.p0_ci_high) + ")"
                  : "R = " + fmt("%.5g", t.ratio) + ": not thermal-consistent (R >= 1)";
  return r;
}

inline Report fit_flop(const FitArgs& a) {
  require_inputs(a, 1, "FLOP.csv");
  const auto scan = load_scan(a.inputs[0]);
  double eta = 0.0, rabi = 0.0;
  if (a.eta && a.omega_hz) {
    eta = *a.eta;
    rabi = *a.omega_hz * constants::two_pi;
  } else {
    const auto k = knowns(a);
    eta = k.mode.lamb_dicke;
    rabi = k.config.default_omega;
    for (const auto& s : k.program.sequence.steps)
      if (auto* p = std::get_if<step::ApplyPulse>(&s))
        if (p->pulse.duration && p->pulse.duration->scan && p->pulse.omega) rabi = p->pulse.omega->value;
    if (a.eta) eta = *a.eta;
    if (a.omega_hz) rabi = *a.omega_hz * constants::two_pi;
  }
  FlopOptions o;
  o.n_cut = a.n_cut;
  o.per_component_decay = a.per_component_decay;
  const auto f = extract_fock_populations(scan, eta, rabi, o);
  Report r;
  double sum = 0.0;
  for (std::size_t n = 0; n < f.populations.size(); ++n) {
    r.add("p" + std::to_string(n), f.populations[n], f.errors[n]);
    sum += f.populations[n];
  }
  r.add("population_sum", sum);
  for (std::size_t n = 0; n < f.decay_rates.size(); ++n)
    r.add("decay_rate" + std::to_string(n) + "_per_s", f.decay_rates[n]);
  r.add("dominant_n", f.dominant());
  r.add("residual_norm", f.residual_norm);
  r.add("condition_number", f.condition_number);
  r.summary = "dominant Fock state n = " + std::to_string(f.dominant()) + ", populations:";
  for (double p : f.populations) r.summary += " " + fmt("%.4f", p);
  return r;
}

inline Report fit_ramsey_cmd(const FitArgs& a) {
  require_inputs(a, 1, "RAMSEY.csv");
  const auto scan = load_scan(a.inputs[0]);
  if (scan.rows.empty()) throw SchemaError("empty scan");
  const std::string param = scan.rows.front().param;
  RamseyScan kind;
  if (param == "detuning_hz")
    kind = RamseyScan::detuning;
  else if (param == "wait_s")
    kind = RamseyScan::gap;
  else
    throw SchemaError("Ramsey fit needs a detuning_hz or wait_s scan, got '" + param + "'");

  RamseySetup setup;
  if (!a.sequence.empty()) {
    const auto k = knowns(a);
    setup.convention = k.config.convention;
    setup.d_decay_rate = k.config.noise.d_decay_rate;
    std::vector<const Pulse*> pulses;
    const Value* wait = nullptr;
    for (const auto& s : k.program.sequence.steps) {
      if (auto* p = std::get_if<step::ApplyPulse>(&s)) pulses.push_back(&p->pulse);
      if (auto* w = std::get_if<step::Wait>(&s)) wait = &w->duration;
    }
    if (pulses.size() != 2 || !wait) throw SchemaError("Ramsey sequence must have two pulses and one wait");
    for (int i = 0; i < 2; ++i) {
      const Pulse& p = *pulses[i];
      const double rabi = p.omega ? p.omega->value : k.config.default_omega;
      const double dur = p.area ? pulse_duration_for_area(*p.area, rabi, k.mode.lamb_dicke, 0, 0) : p.duration->value;
      (i == 0 ? setup.pulse1 : setup.pulse2) = dur;
      (i == 0 ? setup.phase1 : setup.phase2) = p.phase;
    }
    setup.gap = wait->value;
    setup.scan_first_pulse = pulses[0]->detune.scan.has_value();
    setup.detuning = pulses[1]->detune.value;
  }
  if (a.pulse_us) setup.pulse1 = setup.pulse2 = *a.pulse_us * 1e-6;
  if (a.gap_us) setup.gap = *a.gap_us * 1e-6;
  const auto x = scan_values(scan), y = scan_estimates(scan);
  const auto s = scan_is_oracle(scan) ? std::vector<double>{} : scan_sigmas(scan);
  const auto f = fit_ramsey(kind, x, y, s, setup);
  Report r;
  r.add("area_error", f.area_error, f.area_error_stderr);
  r.add("decay_rate_per_s", f.decay_rate, f.decay_rate_stderr);
  r.add("decay_constant", f.decay_constant,
        setup.convention == DecayConvention::angular ? f.decay_rate_stderr / constants::two_pi : f.decay_rate_stderr);
  r.add("contrast", f.contrast);
  r.add("detuning_offset_hz", f.detuning_offset / constants::two_pi);
  r.add("gap_s", f.gap);
  r.add("fringe_frequency_hz", f.fringe_frequency);
  r.add("chi2_per_dof", f.chi2 / f.dof);
  r.summary = "pulse area error " + fmt("%+.2f", 100.0 * f.area_error) + " %, decay constant " +
              fmt("%.4g", f.decay_constant) + (setup.convention == DecayConvention::angular ? " Hz (angular)" : " 1/s") +
              ", contrast " + fmt("%.3f", f.contrast) + ", fringe " + fmt("%.4g", f.fringe_frequency) + " Hz";
  return r;
}

inline Report fit_lorentzian_cmd(const FitArgs& a) {
  require_inputs(a, 1, "SCAN.csv");
  LorentzianOptions o;
  o.n_peaks = a.peaks;
  const auto f = fit_lorentzian_peaks(load_scan(a.inputs[0]), o);
  Report r;
  for (std::size_t k = 0; k < f.peaks.size(); ++k) {
    const auto& p = f.peaks[k];
    const std::string i = std::to_string(k + 1);
    r.add("center" + i, p.center, p.center_error);
    r.add("height" + i, p.height, p.height_error);
    r.add("width" + i, p.width, p.width_error);
    r.summary += (k ? "; " : "") + std::string("peak ") + i + ": center " + fmt("%.6g", p.center) + ", height " +
                 fmt("%.4g", p.height) + ", FWHM " + fmt("%.4g", p.width);
  }
  r.add("chi2_per_dof", f.chi2 / f.dof);
  return r;
}

inline Report fit_heating(const FitArgs& a) {
  require_inputs(a, 2, "RED_WAIT.csv BLUE_WAIT.csv");
  const auto red = load_scan(a.inputs[0]), blue = load_scan(a.inputs[1]);
  if (red.rows.size() != blue.rows.size() || red.rows.empty())
    throw SchemaError("red and blue wait scans must have the same grid");
  std::vector<double> t, n, e;
  Report r;
  for (std::size_t i = 0; i < red.rows.size(); ++i) {
    if (red.rows[i].value != blue.rows[i].value) throw SchemaError("red and blue wait grids differ");
    const auto th = sideband_thermometry({red.rows[i].p_est, red.rows[i].stderr_},
                                         {blue.rows[i].p_est, blue.rows[i].stderr_});
    if (!th.thermal_consistent) continue;
    t.push_back(red.rows[i].value);
    n.push_back(th.nbar);
    e.push_back(th.nbar_error);
    r.add("nbar_at_" + dsl::num(red.rows[i].value) + "s", th.nbar, th.nbar_error);
  }
  const bool oracle = std::all_of(e.begin(), e.end(), [](double v) { return v == 0.0; });
  const auto h = heating_rate(t, n, oracle ? std::vector<double>{} : e);
  r.add("heating_rate_per_s", h.rate, h.rate_error);
  r.add("time_per_quantum_s", 1.0 / h.rate, h.rate_error / (h.rate * h.rate));
  r.add("initial_nbar", h.intercept, h.intercept_error);
  r.add("negative_slope_flag", h.negative_flag ? 1.0 : 0.0);
  r.summary = "heating rate " + fmt("%.4g", h.rate) + " +- " + fmt("%.2g", h.rate_error) + " quanta/s (" +
              fmt("%.4g", 1e3 / h.rate) + " ms per quantum)" + (h.negative_flag ? " [negative slope > 2 sigma]" : "");
  return r;
}

}  // namespace detail

inline int cmd_fit(const FitArgs& a, Streams io) {
  Report r;
  if (a.kind == "thermometry")
    r = detail::fit_thermometry(a);
  else if (a.kind == "flop")
    r = detail::fit_flop(a);
  else if (a.kind == "ramsey")
    r = detail::fit_ramsey_cmd(a);
  else if (a.kind == "lorentzian")
    r = detail::fit_lorentzian_cmd(a);
  else if (a.kind == "heating")
    r = detail::fit_heating(a);
  else
    throw SchemaError("unknown fit kind '" + a.kind + "'");
  if (a.out.empty())
    io.out << r.csv();
  else
    write_file(a.out, r.csv());
  io.out << r.summary << "\n";
  return 0;
}

// --- gatespeed --------------------------------------------------------------------------

struct GateArgs {
  std::string config;
  std::vector<std::string> set;
  std::string mode = "z";
  double fidelity = 0.99;
  double t_start_us = 2.0;
  double t_stop_us = 200.0;
  int points = 48;
  std::optional<double> coherence_time_ms;
  int n_max = 6;
  std::string out;
  std::string gnuplot;
};

inline int cmd_gatespeed(const GateArgs& a, Streams io) {
  const LabConfig cfg = resolve(layered_header({}, a.config, a.set));
  if (a.points < 2 || !(a.t_start_us > 0.0) || !(a.t_stop_us > a.t_start_us))
    throw SchemaError("gatespeed grid needs 0 < start < stop and at least two points");
  ModeRef ref;
  {
    dsl::Token t{a.mode, 1};
    dsl::LineParser p({t}, 0);
    ref = dsl::parse_mode(a.mode, t, p);
  }
  const DynamicsMode mode = resolve_mode(ref, cfg);
  std::vector<double> grid(a.points);
  for (int i = 0; i < a.points; ++i)
    grid[i] = a.t_start_us * 1e-6 * std::pow(a.t_stop_us / a.t_start_us, i / (a.points - 1.0));
  const auto r = gate_speed_scan(mode.frequency, mode.lamb_dicke, a.fidelity, grid, a.n_max);

  std::string csv = "t_s,infidelity,envelope,detuning_hz\n";
  for (std::size_t i = 0; i < r.times.size(); ++i)
    csv += dsl::num(r.times[i]) + "," + dsl::num(r.infidelity[i]) + "," + dsl::num(r.envelope[i]) + "," +
           dsl::num(r.best_detuning[i] / constants::two_pi) + "\n";
  if (a.out.empty())
    io.out << csv;
  else
    write_file(a.out, csv);
  if (!a.gnuplot.empty() && !a.out.empty())
    write_file(a.gnuplot, "set logscale xy\n" + gnuplot_script(a.out, "t (s)", "1 - F", "1:2 with linespoints, '' every ::1 using 1:3 with lines"));

  io.out << "mode " << mode.name << ": eta = " << detail::fmt("%.5f", mode.lamb_dicke)
         << ", recoil frequency = 2pi x " << detail::fmt("%.4g", recoil_frequency(cfg.species) / constants::two_pi / 1e3)
         << " kHz\n";
  if (!r.reachable()) {
    io.err << "error: fidelity target " << a.fidelity << " not reached on the grid\n";
    return static_cast<int>(ErrorKind::physics);
  }
  double t_coh = std::numeric_limits<double>::infinity();
  if (a.coherence_time_ms)
    t_coh = *a.coherence_time_ms * 1e-3;
  else if (cfg.noise.dephasing_rate > 0.0)
    t_coh = 1.0 / cfg.noise.dephasing_rate;
  io.out << "t_min=" << detail::fmt("%.4g", r.t_min * 1e6) << "us, ops_within_coherence=";
  if (std::isfinite(t_coh))
    io.out << static_cast<long>(std::floor(t_coh / r.t_min)) << "\n";
  else
    io.out << "unbounded (no coherence time configured)\n";
  return 0;
}

// --- entry point ------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, Streams io) {
  CLI::App app{"ionlab: trapped-ion experiment simulator and analysis toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  ModesArgs ma;
  auto* modes = app.add_subcommand("modes", "equilibrium positions, normal modes and sideband lines");
  modes->add_option("--config", ma.config, "header-syntax configuration file")->check(CLI::ExistingFile);
  modes->add_option("--set", ma.set, "extra header line, e.g. \"ions 2\" (overrides --config)");
  modes->add_option("--ions", ma.ions, "number of ions");
  modes->add_option("--order", ma.order, "maximum sideband order")->check(CLI::Range(1, 4));
  modes->add_option("--out", ma.out, "mode table CSV");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "execute a sequence file and write the scan CSV");
  run->add_option("sequence", ra.sequence, "sequence file");
  run->add_option("--config", ra.config, "configuration file (overrides the sequence header)")->check(CLI::ExistingFile);
  run->add_option("--set", ra.set, "extra header line (overrides --config)");
  run->add_option("--seed", ra.seed, "master seed");
  run->add_option("--shots", ra.shots, "shots per point (overrides measure)");
  run->add_flag("--oracle", ra.oracle, "exact probabilities, no sampling");
  run->add_option("--out", ra.out, "output CSV (a manifest is written next to it)");
  run->add_option("--gnuplot-script", ra.gnuplot, "write a gnuplot script for the CSV");
  run->add_option("--replay", ra.replay, "re-run from a manifest")->check(CLI::ExistingFile);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit scan CSVs: thermometry, flop, ramsey, lorentzian, heating");
  fit->add_option("kind", fa.kind, "fit kind")->required()->check(
      CLI::IsMember({"thermometry", "flop", "ramsey", "lorentzian", "heating"}));
  fit->add_option("inputs", fa.inputs, "input CSV files")->required();
  fit->add_option("--sequence", fa.sequence, "sequence that produced the data (knowns)");
  fit->add_option("--config", fa.config, "configuration file")->check(CLI::ExistingFile);
  fit->add_option("--set", fa.set, "extra header line");
  fit->add_option("--out", fa.out, "report CSV");
  fit->add_option("--ncut", fa.n_cut, "highest Fock state in flop fits")->check(CLI::Range(0, 30));
  fit->add_option("--peaks", fa.peaks, "number of Lorentzian peaks")->check(CLI::Range(1, 20));
  fit->add_flag("--per-component-decay", fa.per_component_decay, "independent decay per Fock component");
  fit->add_option("--eta", fa.eta, "Lamb-Dicke parameter (flop)");
  fit->add_option("--omega-hz", fa.omega_hz, "carrier Rabi frequency in Hz (flop)");
  fit->add_option("--pulse-us", fa.pulse_us, "Ramsey pulse length in us");
  fit->add_option("--gap-us", fa.gap_us, "Ramsey gap in us");

  GateArgs ga;
  auto* gate = app.add_subcommand("gatespeed", "blue-sideband pi-pulse infidelity versus pulse time");
  gate->add_option("--config", ga.config, "configuration file")->check(CLI::ExistingFile);
  gate->add_option("--set", ga.set, "extra header line");
  gate->add_option("--mode", ga.mode, "mode, e.g. z or y.rocking");
  gate->add_option("--fidelity", ga.fidelity, "fidelity target")->check(CLI::Range(0.0, 1.0));
  gate->add_option("--t-start-us", ga.t_start_us, "shortest pulse time");
  gate->add_option("--t-stop-us", ga.t_stop_us, "longest pulse time");
  gate->add_option("--points", ga.points, "log-spaced grid points");
  gate->add_option("--coherence-time-ms", ga.coherence_time_ms, "coherence time for the operation count");
  gate->add_option("--nmax", ga.n_max, "Fock cutoff")->check(CLI::Range(2, 40));
  gate->add_option("--out", ga.out, "infidelity CSV");
  gate->add_option("--gnuplot-script", ga.gnuplot, "write a gnuplot script for the CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    io.out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*modes) return cmd_modes(ma, io);
    if (*run) return cmd_run(ra, io);
    if (*fit) return cmd_fit(fa, io);
    if (*gate) return cmd_gatespeed(ga, io);
  } catch (const Error& e) {
    io.err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    io.err << "error: manifest: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ionlab::cli
