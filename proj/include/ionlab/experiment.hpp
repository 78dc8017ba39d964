// Sequence execution, shot sampling, parallel scans and the scan CSV format.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ionlab/crystal_modes.hpp"
#include "ionlab/dynamics.hpp"
#include "ionlab/sequence.hpp"

namespace ionlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of scan point `index`; independent of thread scheduling.
inline std::uint64_t point_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ index);
}

/// Number of successes in `shots` Bernoulli(p) draws.
inline int sample_shots(double p, int shots, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int k = 0;
  for (int i = 0; i < shots; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    k += u < p;
  }
  return k;
}

struct PointResult {
  double p_true = 0.0;  // P_D before detection errors
  double p_est = 0.0;
  double stderr_ = 0.0;
  int shots = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// The phonon mode a run couples to.
struct DynamicsMode {
  ModeRef ref;
  std::string name;
  double frequency = 0.0;  // rad/s
  double lamb_dicke = 0.0;
};

inline DynamicsMode resolve_mode(const ModeRef& ref, const LabConfig& cfg) {
  const auto spectrum = crystal_spectrum(cfg.n_ions, cfg.trap);
  const Axis along = crystal_axis(cfg.trap);
  std::string label = ref.label;
  if (label.empty()) label = ref.axis == along ? "com" : "radial-com";
  const Mode* m = spectrum.find(ref.axis, label);
  if (!m) {
    std::string known;
    for (const auto& mm : spectrum.modes) known += " " + mm.name();
    throw DomainError("no mode '" + std::string(1, axis_name(ref.axis)) + "." + label +
                      "' for this crystal; available:" + known);
  }
  if (!(m->frequency > 0.0)) throw DomainError("mode " + m->name() + " is unstable");
  DynamicsMode d;
  d.ref = ref;
  d.name = m->name();
  d.frequency = m->frequency;
  d.lamb_dicke = std::abs(mode_lamb_dicke(*m, cfg.species, cfg.trap)[0]);
  return d;
}

/// Every sideband and cooling step must address one mode; carrier-only sequences use the
/// centre-of-mass mode along the crystal axis.
inline ModeRef dynamics_mode_ref(const Sequence& seq, const LabConfig& cfg) {
  std::optional<ModeRef> ref;
  auto use = [&](const ModeRef& m) {
    if (ref && !(*ref == m))
      throw DomainError("sequence addresses more than one motional mode (" +
                        dsl::mode_text(*ref) + ", " + dsl::mode_text(m) + ")");
    ref = m;
  };
  for (const auto& s : seq.steps) {
    if (auto* p = std::get_if<step::ApplyPulse>(&s)) {
      if (p->pulse.target.kind != Target::Kind::carrier) use(p->pulse.target.mode);
    } else if (auto* c = std::get_if<step::Cool>(&s)) {
      use(c->mode);
    }
  }
  return ref.value_or(ModeRef{crystal_axis(cfg.trap), ""});
}

namespace detail {

inline double init_nbar(const Sequence& seq, const DynamicsMode& mode, const LabConfig& cfg) {
  for (const auto& s : seq.steps)
    if (auto* t = std::get_if<step::InitThermal>(&s))
      return t->nbar ? *t->nbar : doppler_limit_nbar(cfg.species, mode.frequency).nbar;
  return 0.0;
}

inline double max_value(const Value& v) {
  return v.scan ? std::max(v.scan->start, v.scan->stop) : v.value;
}

}  // namespace detail

/// Fock truncation for a sequence: the configured value, or enough for the initial
/// occupation plus heating over the longest total wait and one quantum per blue pulse.
inline int choose_n_max(const Sequence& seq, const DynamicsMode& mode, const LabConfig& cfg) {
  if (cfg.n_max > 0) return cfg.n_max;
  double nbar = detail::init_nbar(seq, mode, cfg);
  double wait = 0.0;
  int blue = 0;
  for (const auto& s : seq.steps) {
    if (auto* w = std::get_if<step::Wait>(&s)) wait += detail::max_value(w->duration);
    if (auto* p = std::get_if<step::ApplyPulse>(&s))
      blue += p->pulse.target.kind == Target::Kind::blue;
  }
  nbar += cfg.noise.heating_rate * wait;
  return default_n_max(nbar) + blue;
}

namespace detail {

inline std::vector<DriveTerm> pulse_terms(const Pulse& p, const DynamicsMode& mode,
                                          const LabConfig& cfg, double& duration) {
  const int order = p.target.sideband_order();
  LaserSettings laser;
  laser.rabi_frequency = p.omega ? p.omega->value : cfg.default_omega;
  if (!(laser.rabi_frequency > 0.0)) throw DomainError("pulse Rabi frequency must be positive");
  laser.detuning = order * mode.frequency + p.detune.value;
  laser.phase = p.phase;
  if (p.area) {
    const int reference_n = order < 0 ? 1 : 0;
    duration = pulse_duration_for_area(*p.area, laser.rabi_frequency, mode.lamb_dicke, order,
                                       reference_n);
  } else {
    duration = p.duration->value;
  }
  if (duration < 0.0) throw DomainError("pulse duration must be non-negative");
  auto terms = build_drive(laser, mode.lamb_dicke, mode.frequency, cfg.sidebands);
  if (cfg.rwa) {
    std::erase_if(terms, [order](const DriveTerm& t) { return t.order != order; });
  }
  return terms;
}

// Phonon-conserving |D,n> -> |S,n> transfer with probability `fidelity`; coherences
// between S and D are destroyed.
inline QuantumState repump(const QuantumState& state, double fidelity) {
  const int n_max = state.n_max();
  const int N = n_max + 1;
  ComplexMatrix rho = state.rho();
  ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
  out.topLeftCorner(N, N) = rho.topLeftCorner(N, N) + fidelity * rho.bottomRightCorner(N, N);
  out.bottomRightCorner(N, N) = (1.0 - fidelity) * rho.bottomRightCorner(N, N);
  const double keep = std::sqrt(std::max(0.0, 1.0 - fidelity));
  out.topRightCorner(N, N) = keep * rho.topRightCorner(N, N);
  out.bottomLeftCorner(N, N) = keep * rho.bottomLeftCorner(N, N);
  return QuantumState(std::move(out), n_max, QuantumState::unchecked);
}

// Electronic reset to S with the phonon populations kept (diagonal in n).
inline QuantumState pump_to_s(const QuantumState& state) {
  return QuantumState::electronic_ground(PhononDistribution(state.phonon_populations()));
}

}  // namespace detail

/// Executes a sequence without a scan placeholder and samples the measurement.
/// shots <= 0 returns the exact probability with zero error.
inline PointResult run_point(const Sequence& seq, const LabConfig& cfg, std::uint64_t seed,
                             std::optional<int> shots_override = std::nullopt) {
  if (find_scan(seq)) throw DomainError("run_point requires a bound sequence");
  const DynamicsMode mode = resolve_mode(dynamics_mode_ref(seq, cfg), cfg);
  const int n_max = choose_n_max(seq, mode, cfg);

  PointResult r;
  r.seed = seed;
  std::optional<QuantumState> state;
  double clock = 0.0;
  int shots = 0;
  for (const auto& s : seq.steps) {
    if (std::holds_alternative<step::InitGround>(s)) {
      state = QuantumState::ground(n_max);
    } else if (auto* t = std::get_if<step::InitThermal>(&s)) {
      double nbar = 0.0;
      if (t->nbar) {
        nbar = *t->nbar;
      } else {
        const auto d = doppler_limit_nbar(cfg.species, mode.frequency);
        if (d.clamped) r.warnings.push_back("Doppler limit clamped for mode " + mode.name);
        nbar = d.nbar;
      }
      state = QuantumState::electronic_ground(thermal_distribution(nbar, n_max));
    } else if (std::holds_alternative<step::OpticalPump>(s)) {
      state = detail::pump_to_s(*state);
    } else if (auto* c = std::get_if<step::Cool>(&s)) {
      const auto cooled = sideband_cool(PhononDistribution(state->phonon_populations()), c->params);
      state = QuantumState::electronic_ground(cooled);
      clock += c->params.duration;
    } else if (auto* p = std::get_if<step::ApplyPulse>(&s)) {
      double duration = 0.0;
      const auto terms = detail::pulse_terms(p->pulse, mode, cfg, duration);
      state = evolve_lindblad(*state, terms, cfg.noise, clock, duration, {cfg.integrator_tolerance});
      clock += duration;
    } else if (auto* rp = std::get_if<step::Repump854>(&s)) {
      state = detail::repump(*state, rp->fidelity);
    } else if (auto* w = std::get_if<step::Wait>(&s)) {
      if (w->duration.value < 0.0) throw DomainError("wait must be non-negative");
      state = evolve_lindblad(*state, {}, cfg.noise, clock, w->duration.value,
                              {cfg.integrator_tolerance});
      clock += w->duration.value;
    } else if (auto* m = std::get_if<step::Measure>(&s)) {
      shots = m->shots;
    }
  }

  const double top = state->phonon_populations().back();
  if (top > 1e-4)
    r.warnings.push_back("population " + dsl::num(top) + " at the Fock cutoff n=" +
                         std::to_string(n_max));
  r.p_true = std::clamp(state->excited_population(), 0.0, 1.0);
  const double eps = cfg.detection_efficiency;
  const double p_obs = eps * r.p_true + (1.0 - eps) * (1.0 - r.p_true);
  r.shots = shots_override.value_or(shots);
  if (r.shots <= 0) {
    r.shots = 0;
    r.p_est = p_obs;
    r.stderr_ = 0.0;
  } else {
    const int k = sample_shots(p_obs, r.shots, seed);
    r.p_est = static_cast<double>(k) / r.shots;
    r.stderr_ = std::sqrt(r.p_est * (1.0 - r.p_est) / r.shots);
  }
  return r;
}

struct ScanRow {
  std::string param;
  double value = 0.0;  // CSV units: s or Hz
  double p_true = 0.0;
  double p_est = 0.0;
  double stderr_ = 0.0;
  int shots = 0;
  std::uint64_t seed = 0;
  bool operator==(const ScanRow&) const = default;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  std::vector<std::string> warnings;
};

inline int worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IONLAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs every grid point of the program's scan (or the single point when there is none).
/// Output is independent of the worker count.
inline ScanResult run_scan(const Sequence& seq, const LabConfig& cfg, std::uint64_t master_seed,
                           std::optional<int> shots_override = std::nullopt) {
  const auto site = find_scan(seq);
  const std::vector<double> grid = site ? site->spec.grid() : std::vector<double>{0.0};
  const std::size_t n = grid.size();
  std::vector<PointResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const Sequence bound = site ? bind_scan(seq, grid[i]) : seq;
        results[i] = run_point(bound, cfg, point_seed(master_seed, i), shots_override);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = worker_count(n);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ScanResult out;
  for (std::size_t i = 0; i < n; ++i) {
    ScanRow row;
    row.param = site ? site->parameter : "none";
    row.value = site ? grid[i] * site->output_scale : 0.0;
    row.p_true = results[i].p_true;
    row.p_est = results[i].p_est;
    row.stderr_ = results[i].stderr_;
    row.shots = results[i].shots;
    row.seed = results[i].seed;
    out.rows.push_back(row);
    for (const auto& w : results[i].warnings)
      if (std::find(out.warnings.begin(), out.warnings.end(), w) == out.warnings.end())
        out.warnings.push_back(w);
  }
  return out;
}

// --- CSV -------------------------------------------------------------------------------

inline constexpr const char* kScanColumns[] = {"param", "value", "p_true", "p_est",
                                               "stderr", "shots", "seed"};

inline std::string scan_csv(const ScanResult& r) {
  std::string out = "param,value,p_true,p_est,stderr,shots,seed\n";
  for (const auto& row : r.rows) {
    out += row.param + "," + dsl::num(row.value) + "," + dsl::num(row.p_true) + "," +
           dsl::num(row.p_est) + "," + dsl::num(row.stderr_) + "," + std::to_string(row.shots) +
           "," + std::to_string(row.seed) + "\n";
  }
  return out;
}

/// Generic column table read from CSV text; requires the named columns.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  std::vector<double> numbers(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw SchemaError("missing column '" + name + "'");
    std::vector<double> v;
    v.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string& cell = rows[r][c];
      auto nu = dsl::split_number(cell);
      if (!nu || !nu->unit.empty())
        throw SchemaError("row " + std::to_string(r + 2) + ", column '" + name +
                          "': not a number: '" + cell + "'");
      v.push_back(nu->number);
    }
    return v;
  }
};

inline CsvTable parse_csv(const std::string& text, std::initializer_list<const char*> required) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(dsl::strip(cell));
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    if (dsl::strip(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split(dsl::strip(line));
      continue;
    }
    auto cells = split(dsl::strip(line));
    if (cells.size() != t.header.size())
      throw SchemaError("row " + std::to_string(t.rows.size() + 2) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw SchemaError("empty CSV");
  for (const char* r : required)
    if (t.column(r) < 0) throw SchemaError(std::string("missing column '") + r + "'");
  return t;
}

inline ScanResult parse_scan_csv(const std::string& text) {
  const CsvTable t = parse_csv(text, {"param", "value", "p_true", "p_est", "stderr", "shots", "seed"});
  const auto value = t.numbers("value"), p_true = t.numbers("p_true"), p_est = t.numbers("p_est"),
             err = t.numbers("stderr"), shots = t.numbers("shots");
  const int pc = t.column("param"), sc = t.column("seed");
  ScanResult r;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ScanRow row;
    row.param = t.rows[i][pc];
    row.value = value[i];
    row.p_true = p_true[i];
    row.p_est = p_est[i];
    row.stderr_ = err[i];
    row.shots = static_cast<int>(shots[i]);
    row.seed = std::stoull(t.rows[i][sc]);
    r.rows.push_back(row);
  }
  return r;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << content;
}

}  // namespace ionlab
