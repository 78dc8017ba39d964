// Experiment protocol DSL: data model, parser and canonical printer.
//
//   trap x=2.16MHz, y=2.07MHz, z=4.51MHz
//   ion ca40
//   init ground
//   pulse bsb(z) pi
//   repump854
//   pulse bsb(z) t=scan(0us, 500us, 101)
//   measure shots=100
//
// Optional header lines: beam, ions, noise, omega, sidebands, rwa, nmax, detection.
// Frequencies in Hz/kHz/MHz are cycle frequencies and are stored as rad/s.

#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ionlab/constants.hpp"
#include "ionlab/crystal_modes.hpp"
#include "ionlab/dynamics.hpp"
#include "ionlab/error.hpp"
#include "ionlab/quantum_core.hpp"

namespace ionlab {

struct ScanSpec {
  double start = 0.0;  // SI internal units (s or rad/s)
  double stop = 0.0;
  int points = 0;

  std::vector<double> grid() const {
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i)
      g[i] = points == 1 ? start : start + (stop - start) * i / (points - 1.0);
    return g;
  }
  bool operator==(const ScanSpec&) const = default;
};

/// A scalar that may instead be the program's scan placeholder.
struct Value {
  double value = 0.0;
  std::optional<ScanSpec> scan;

  bool operator==(const Value&) const = default;
};

struct ModeRef {
  Axis axis = Axis::z;
  std::string label;  // empty: the COM mode along this axis
  bool operator==(const ModeRef&) const = default;
};

struct Target {
  enum class Kind { carrier, red, blue };
  Kind kind = Kind::carrier;
  ModeRef mode;  // meaningful for sidebands

  int sideband_order() const { return kind == Kind::blue ? 1 : kind == Kind::red ? -1 : 0; }
  bool operator==(const Target&) const = default;
};

struct Pulse {
  Target target;
  std::optional<double> area;      // rad
  std::optional<Value> duration;   // s
  double phase = 0.0;              // rad
  std::optional<Value> omega;      // rad/s; configuration default when absent
  Value detune;                    // rad/s on top of the target resonance
  bool operator==(const Pulse&) const = default;
};

namespace step {
struct InitGround {
  bool operator==(const InitGround&) const = default;
};
struct InitThermal {
  std::optional<double> nbar;  // empty: Doppler limit of the dynamics mode
  bool operator==(const InitThermal&) const = default;
};
struct OpticalPump {
  bool operator==(const OpticalPump&) const = default;
};
struct Cool {
  ModeRef mode;
  CoolingParams params;
  bool operator==(const Cool&) const = default;
};
struct ApplyPulse {
  Pulse pulse;
  bool operator==(const ApplyPulse&) const = default;
};
struct Repump854 {
  double fidelity = 1.0;
  bool operator==(const Repump854&) const = default;
};
struct Wait {
  Value duration;
  bool operator==(const Wait&) const = default;
};
struct Measure {
  int shots = 0;
  bool operator==(const Measure&) const = default;
};
}  // namespace step

using Step = std::variant<step::InitGround, step::InitThermal, step::OpticalPump, step::Cool,
                          step::ApplyPulse, step::Repump854, step::Wait, step::Measure>;

struct Sequence {
  std::vector<Step> steps;
  bool operator==(const Sequence&) const = default;
};

enum class DecayConvention { rate, angular };

/// Header / configuration-file settings. Every field is optional so a config file and
/// command-line flags can be layered over a program header.
struct Header {
  std::array<std::optional<double>, 3> trap;  // rad/s
  std::optional<IonSpecies> species;
  std::optional<std::array<double, 3>> beam;
  std::optional<int> n_ions;
  std::optional<double> dephasing;  // decay constant as written, interpreted by convention
  std::optional<double> d_decay_rate;
  std::optional<double> heating_rate;
  std::optional<DecayConvention> convention;
  std::optional<double> omega;  // rad/s
  std::optional<int> sidebands;
  std::optional<bool> rwa;
  std::optional<int> n_max;
  std::optional<double> detection;

  bool empty() const { return *this == Header{}; }
  bool operator==(const Header&) const = default;
};

/// `over` wins field by field.
inline Header merge(const Header& base, const Header& over) {
  Header h = base;
  for (int a = 0; a < 3; ++a)
    if (over.trap[a]) h.trap[a] = over.trap[a];
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  take(h.species, over.species);
  take(h.beam, over.beam);
  take(h.n_ions, over.n_ions);
  take(h.dephasing, over.dephasing);
  take(h.d_decay_rate, over.d_decay_rate);
  take(h.heating_rate, over.heating_rate);
  take(h.convention, over.convention);
  take(h.omega, over.omega);
  take(h.sidebands, over.sidebands);
  take(h.rwa, over.rwa);
  take(h.n_max, over.n_max);
  take(h.detection, over.detection);
  return h;
}

/// Fully resolved lab configuration.
struct LabConfig {
  TrapConfig trap;
  IonSpecies species;
  int n_ions = 1;
  NoiseModel noise;
  DecayConvention convention = DecayConvention::rate;
  double default_omega = 100.0 * units::kHz;
  int sidebands = 2;
  bool rwa = false;
  int n_max = 0;  // 0: chosen from the sequence
  double detection_efficiency = 1.0;
  double integrator_tolerance = 1e-6;  // Lindblad splitting error budget, far below shot noise
};

inline double dephasing_rate_from_constant(double constant, DecayConvention c) {
  return c == DecayConvention::angular ? constants::two_pi * constant : constant;
}

inline LabConfig resolve(const Header& h) {
  LabConfig cfg;
  for (int a = 0; a < 3; ++a) {
    if (!h.trap[a])
      throw ParseError(std::string("missing trap frequency for axis ") + "xyz"[a], 0, 0);
    cfg.trap.secular_frequencies[a] = *h.trap[a];
  }
  if (!h.species) throw ParseError("missing ion species", 0, 0);
  cfg.species = *h.species;
  const double r = 1.0 / std::sqrt(3.0);
  cfg.trap.laser_direction_cosines = h.beam.value_or(std::array<double, 3>{r, r, r});
  cfg.trap.validate();
  cfg.species.validate();
  cfg.n_ions = h.n_ions.value_or(1);
  cfg.convention = h.convention.value_or(DecayConvention::rate);
  cfg.noise.dephasing_rate = dephasing_rate_from_constant(h.dephasing.value_or(0.0), cfg.convention);
  cfg.noise.d_decay_rate = h.d_decay_rate.value_or(0.0);
  cfg.noise.heating_rate = h.heating_rate.value_or(0.0);
  cfg.noise.validate();
  cfg.default_omega = h.omega.value_or(cfg.default_omega);
  cfg.sidebands = h.sidebands.value_or(cfg.sidebands);
  cfg.rwa = h.rwa.value_or(false);
  cfg.n_max = h.n_max.value_or(0);
  cfg.detection_efficiency = h.detection.value_or(1.0);
  if (cfg.n_ions < 1 || cfg.n_ions > 32) throw DomainError("ions must lie in [1, 32]");
  if (cfg.sidebands < 1) throw DomainError("sidebands must be at least 1");
  if (cfg.n_max < 0) throw DomainError("nmax must be non-negative");
  if (!(cfg.default_omega > 0.0)) throw DomainError("omega must be positive");
  if (cfg.detection_efficiency < 0.5 || cfg.detection_efficiency > 1.0)
    throw DomainError("detection efficiency must lie in [0.5, 1]");
  return cfg;
}

struct Program {
  Header header;
  Sequence sequence;
  bool operator==(const Program&) const = default;
};

/// Description of the program's single scan placeholder.
struct ScanSite {
  ScanSpec spec;
  std::string parameter;  // CSV parameter name
  double output_scale = 1.0;  // internal value * scale = CSV value
};

namespace dsl {

struct Token {
  std::string text;
  int column = 1;
};

inline std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Splits on whitespace and commas outside parentheses.
inline std::vector<Token> tokenize(std::string_view line, int line_no) {
  std::vector<Token> out;
  int depth = 0;
  std::string cur;
  int start = 0;
  for (int i = 0; i <= static_cast<int>(line.size()); ++i) {
    const char c = i < static_cast<int>(line.size()) ? line[i] : ' ';
    const bool sep = depth == 0 && (c == ' ' || c == '\t' || c == ',' || c == '\r');
    if (sep) {
      if (!cur.empty()) out.push_back({cur, start + 1});
      cur.clear();
      continue;
    }
    if (cur.empty()) start = i;
    if (c == '(') ++depth;
    if (c == ')' && --depth < 0) throw ParseError("unbalanced ')'", line_no, i + 1);
    if (depth > 0 && (c == ' ' || c == '\t')) continue;
    cur += c;
  }
  if (depth != 0) throw ParseError("unbalanced '('", line_no, static_cast<int>(line.size()));
  return out;
}

class LineParser {
 public:
  LineParser(std::vector<Token> tokens, int line_no) : tokens_(std::move(tokens)), line_(line_no) {}

  [[noreturn]] void fail(const std::string& msg, const Token& t) const {
    throw ParseError(msg, line_, t.column);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line_, tokens_.empty() ? 1 : tokens_.back().column);
  }

  bool done() const { return pos_ >= tokens_.size(); }
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() {
    if (done()) fail("unexpected end of line");
    return tokens_[pos_++];
  }
  void expect_done() const {
    if (!done()) fail("unexpected token '" + tokens_[pos_].text + "'", tokens_[pos_]);
  }

  // key=value; returns nullopt when the next token is not of that form.
  std::optional<std::pair<std::string, Token>> key_value() {
    if (done()) return std::nullopt;
    const Token& t = peek();
    const auto eq = t.text.find('=');
    if (eq == std::string::npos || eq == 0) return std::nullopt;
    ++pos_;
    Token v{t.text.substr(eq + 1), t.column + static_cast<int>(eq) + 1};
    if (v.text.empty()) fail("missing value after '" + t.text + "'", t);
    return std::make_pair(t.text.substr(0, eq + 1), v);
  }

  int line() const { return line_; }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int line_;
};

struct NumberUnit {
  double number = 0.0;
  std::string unit;
};

inline std::optional<NumberUnit> split_number(const std::string& s) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc()) return std::nullopt;
  return NumberUnit{v, std::string(ptr, last)};
}

inline double parse_time(const Token& t, const LineParser& p) {
  auto nu = split_number(t.text);
  if (!nu) p.fail("expected a time, got '" + t.text + "'", t);
  const std::string& u = nu->unit;
  if (u == "s") return nu->number;
  if (u == "ms") return nu->number * units::ms;
  if (u == "us" || u == "\xC2\xB5s" || u == "\xCE\xBCs") return nu->number * units::us;
  if (u == "ns") return nu->number * 1e-9;
  p.fail("unit error: expected a time unit (s, ms, us, ns) in '" + t.text + "'", t);
}

inline double parse_frequency(const Token& t, const LineParser& p) {
  auto nu = split_number(t.text);
  if (!nu) p.fail("expected a frequency, got '" + t.text + "'", t);
  const std::string& u = nu->unit;
  if (u == "Hz") return nu->number * units::Hz;
  if (u == "kHz") return nu->number * units::kHz;
  if (u == "MHz") return nu->number * units::MHz;
  if (u == "rad/s") return nu->number;
  p.fail("unit error: expected a frequency unit (Hz, kHz, MHz, rad/s) in '" + t.text + "'", t);
}

// Decay constant as written: Hz-family values are NOT multiplied by 2 pi here.
inline double parse_decay_constant(const Token& t, const LineParser& p) {
  auto nu = split_number(t.text);
  if (!nu) p.fail("expected a decay constant, got '" + t.text + "'", t);
  const std::string& u = nu->unit;
  if (u.empty() || u == "/s" || u == "Hz") return nu->number;
  if (u == "kHz") return nu->number * 1e3;
  if (u == "MHz") return nu->number * 1e6;
  p.fail("unit error: expected a decay constant (/s, Hz, kHz) in '" + t.text + "'", t);
}

// Rate in 1/s: "5.26/s", "5.26", or "1/190ms".
inline double parse_rate(const Token& t, const LineParser& p) {
  if (t.text.rfind("1/", 0) == 0 && t.text.size() > 2 && t.text != "1/s") {
    Token inner{t.text.substr(2), t.column + 2};
    const double tau = parse_time(inner, p);
    if (!(tau > 0.0)) p.fail("rate period must be positive", t);
    return 1.0 / tau;
  }
  auto nu = split_number(t.text);
  if (!nu) p.fail("expected a rate, got '" + t.text + "'", t);
  if (nu->unit.empty() || nu->unit == "/s") return nu->number;
  p.fail("unit error: expected a rate (/s) in '" + t.text + "'", t);
}

// pi, pi/2, -pi/2, 0.5pi, 3pi/4, 1.2rad, 1.2
inline std::optional<double> parse_angle_text(const std::string& s) {
  const auto p = s.find("pi");
  if (p != std::string::npos) {
    double coef = 1.0;
    const std::string head = s.substr(0, p);
    if (head == "-") {
      coef = -1.0;
    } else if (!head.empty() && head != "+") {
      auto nu = split_number(head);
      if (!nu || !nu->unit.empty()) return std::nullopt;
      coef = nu->number;
    }
    const std::string tail = s.substr(p + 2);
    double div = 1.0;
    if (!tail.empty()) {
      if (tail[0] != '/') return std::nullopt;
      auto nu = split_number(tail.substr(1));
      if (!nu || !nu->unit.empty() || nu->number == 0.0) return std::nullopt;
      div = nu->number;
    }
    return coef * constants::pi / div;
  }
  auto nu = split_number(s);
  if (!nu || !(nu->unit.empty() || nu->unit == "rad")) return std::nullopt;
  return nu->number;
}

inline double parse_angle(const Token& t, const LineParser& p) {
  auto a = parse_angle_text(t.text);
  if (!a) p.fail("expected an angle (rad, pi, pi/2), got '" + t.text + "'", t);
  return *a;
}

inline double parse_float(const Token& t, const LineParser& p) {
  auto nu = split_number(t.text);
  if (!nu || !nu->unit.empty()) p.fail("expected a number, got '" + t.text + "'", t);
  return nu->number;
}

inline int parse_int(const Token& t, const LineParser& p) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || ptr != t.text.data() + t.text.size())
    p.fail("expected an integer, got '" + t.text + "'", t);
  return v;
}

template <class Scalar>
Value parse_value_or_scan(const Token& t, const LineParser& p, Scalar scalar) {
  if (t.text.rfind("scan(", 0) != 0) return Value{scalar(t, p), std::nullopt};
  if (t.text.back() != ')') p.fail("malformed scan(...)", t);
  const std::string inner = t.text.substr(5, t.text.size() - 6);
  std::vector<Token> parts;
  std::size_t b = 0;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    if (i == inner.size() || inner[i] == ',') {
      parts.push_back({inner.substr(b, i - b), t.column + 5 + static_cast<int>(b)});
      b = i + 1;
    }
  }
  if (parts.size() != 3) p.fail("scan(...) expects start, stop, points", t);
  ScanSpec s{scalar(parts[0], p), scalar(parts[1], p), parse_int(parts[2], p)};
  if (s.points < 1) p.fail("zero-length scan grid", parts[2]);
  return Value{s.start, s};
}

inline ModeRef parse_mode(const std::string& text, const Token& t, const LineParser& p) {
  if (text.empty()) p.fail("missing mode", t);
  ModeRef m;
  const char a = text[0];
  if (a != 'x' && a != 'y' && a != 'z') p.fail("unknown axis '" + text + "'", t);
  m.axis = static_cast<Axis>(a - 'x');
  if (text.size() > 1) {
    if (text[1] != '.' || text.size() < 3) p.fail("malformed mode '" + text + "'", t);
    m.label = text.substr(2);
  }
  return m;
}

inline Target parse_target(const Token& t, const LineParser& p) {
  if (t.text == "carrier") return {};
  Target target;
  if (t.text.rfind("rsb(", 0) == 0)
    target.kind = Target::Kind::red;
  else if (t.text.rfind("bsb(", 0) == 0)
    target.kind = Target::Kind::blue;
  else
    p.fail("unknown pulse target '" + t.text + "'", t);
  if (t.text.back() != ')') p.fail("malformed target '" + t.text + "'", t);
  target.mode = parse_mode(t.text.substr(4, t.text.size() - 5), t, p);
  return target;
}

inline IonSpecies builtin_species(const std::string& name) {
  if (name == "ca40" || name == "40ca+" || name == "Ca40") return IonSpecies::calcium40();
  throw DomainError("unknown species '" + name + "'");
}

// Returns true when the line was a header line.
inline bool parse_header_line(LineParser& p, const Token& kw, Header& h) {
  const std::string& k = kw.text;
  if (k == "trap") {
    bool any = false;
    while (auto kv = p.key_value()) {
      const std::string& key = kv->first;
      if (key != "x=" && key != "y=" && key != "z=")
        p.fail("unknown trap axis '" + key + "'", kv->second);
      h.trap[key[0] - 'x'] = parse_frequency(kv->second, p);
      any = true;
    }
    if (!any) p.fail("trap needs at least one axis=frequency", kw);
  } else if (k == "ion") {
    const Token& name = p.next();
    IonSpecies s;
    try {
      s = builtin_species(name.text);
    } catch (const DomainError& e) {
      p.fail(e.what(), name);
    }
    while (auto kv = p.key_value()) {
      const auto& [key, v] = *kv;
      if (key == "mass=") {
        auto nu = split_number(v.text);
        if (!nu) p.fail("expected a mass", v);
        if (nu->unit == "u")
          s.mass = nu->number * constants::atomic_mass_unit;
        else if (nu->unit == "kg")
          s.mass = nu->number;
        else
          p.fail("unit error: expected a mass unit (u, kg) in '" + v.text + "'", v);
      } else if (key == "lambda=") {
        auto nu = split_number(v.text);
        if (!nu) p.fail("expected a wavelength", v);
        if (nu->unit == "nm")
          s.qubit_wavelength = nu->number * units::nm;
        else if (nu->unit == "m")
          s.qubit_wavelength = nu->number;
        else
          p.fail("unit error: expected a length unit (nm, m) in '" + v.text + "'", v);
      } else if (key == "gamma=") {
        s.dipole_linewidth = parse_frequency(v, p);
      } else if (key == "lifetime=") {
        s.d_state_lifetime = parse_time(v, p);
      } else {
        p.fail("unknown ion option '" + key + "'", v);
      }
    }
    s.name = name.text;
    try {
      s.validate();
    } catch (const DomainError& e) {
      p.fail(e.what(), name);
    }
    h.species = s;
  } else if (k == "beam") {
    std::array<double, 3> c{0.0, 0.0, 0.0};
    bool any = false;
    while (auto kv = p.key_value()) {
      const std::string& key = kv->first;
      if (key != "x=" && key != "y=" && key != "z=")
        p.fail("unknown beam axis '" + key + "'", kv->second);
      c[key[0] - 'x'] = parse_float(kv->second, p);
      any = true;
    }
    const double norm = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    if (!any || norm == 0.0) p.fail("beam direction must be non-zero", kw);
    for (double& x : c) x /= norm;
    // Renormalize once more so the stored vector is unit within rounding.
    const double n2 = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    for (double& x : c) x /= n2;
    h.beam = c;
  } else if (k == "ions") {
    h.n_ions = parse_int(p.next(), p);
  } else if (k == "noise") {
    while (auto kv = p.key_value()) {
      const auto& [key, v] = *kv;
      if (key == "dephasing=")
        h.dephasing = parse_decay_constant(v, p);
      else if (key == "decay=")
        h.d_decay_rate = parse_rate(v, p);
      else if (key == "heating=")
        h.heating_rate = parse_rate(v, p);
      else if (key == "convention=") {
        if (v.text == "rate")
          h.convention = DecayConvention::rate;
        else if (v.text == "angular")
          h.convention = DecayConvention::angular;
        else
          p.fail("unknown decay convention '" + v.text + "'", v);
      } else {
        p.fail("unknown noise option '" + key + "'", v);
      }
    }
  } else if (k == "omega") {
    h.omega = parse_frequency(p.next(), p);
  } else if (k == "sidebands") {
    h.sidebands = parse_int(p.next(), p);
  } else if (k == "rwa") {
    const Token& v = p.next();
    if (v.text != "on" && v.text != "off") p.fail("rwa expects on|off", v);
    h.rwa = v.text == "on";
  } else if (k == "nmax") {
    h.n_max = parse_int(p.next(), p);
  } else if (k == "detection") {
    h.detection = parse_float(p.next(), p);
  } else {
    return false;
  }
  p.expect_done();
  return true;
}

inline Step parse_statement(LineParser& p, const Token& kw) {
  const std::string& k = kw.text;
  if (k == "init") {
    const Token& what = p.next();
    if (what.text == "ground") {
      p.expect_done();
      return step::InitGround{};
    }
    if (what.text != "thermal") p.fail("init expects 'ground' or 'thermal'", what);
    const Token& arg = p.next();
    step::InitThermal s;
    if (arg.text == "doppler") {
    } else if (arg.text.rfind("nbar=", 0) == 0) {
      Token v{arg.text.substr(5), arg.column + 5};
      s.nbar = parse_float(v, p);
      if (*s.nbar < 0.0) p.fail("nbar must be non-negative", v);
    } else {
      p.fail("init thermal expects nbar=<float> or doppler", arg);
    }
    p.expect_done();
    return s;
  }
  if (k == "optical_pump") {
    p.expect_done();
    return step::OpticalPump{};
  }
  if (k == "cool") {
    step::Cool c;
    bool have_mode = false, have_minus = false, have_plus = false, have_t = false;
    while (auto kv = p.key_value()) {
      const auto& [key, v] = *kv;
      if (key == "mode=")
        c.mode = parse_mode(v.text, v, p), have_mode = true;
      else if (key == "A-=")
        c.params.a_minus = parse_rate(v, p), have_minus = true;
      else if (key == "A+=")
        c.params.a_plus = parse_rate(v, p), have_plus = true;
      else if (key == "t=")
        c.params.duration = parse_time(v, p), have_t = true;
      else
        p.fail("unknown cool option '" + key + "'", v);
    }
    p.expect_done();
    if (!have_mode || !have_minus || !have_plus || !have_t)
      p.fail("cool requires mode=, A-=, A+= and t=", kw);
    if (!(c.params.a_minus > c.params.a_plus)) p.fail("cool requires A- > A+", kw);
    return c;
  }
  if (k == "pulse") {
    Pulse pulse;
    pulse.target = parse_target(p.next(), p);
    const Token& amount = p.next();
    if (amount.text.rfind("t=", 0) == 0) {
      Token v{amount.text.substr(2), amount.column + 2};
      pulse.duration = parse_value_or_scan(v, p, parse_time);
    } else {
      pulse.area = parse_angle(amount, p);
    }
    while (auto kv = p.key_value()) {
      const auto& [key, v] = *kv;
      if (key == "phase=")
        pulse.phase = parse_angle(v, p);
      else if (key == "omega=")
        pulse.omega = parse_value_or_scan(v, p, parse_frequency);
      else if (key == "detune=")
        pulse.detune = parse_value_or_scan(v, p, parse_frequency);
      else
        p.fail("unknown pulse option '" + key + "'", v);
    }
    p.expect_done();
    if (pulse.omega && !pulse.omega->scan && !(pulse.omega->value > 0.0))
      p.fail("omega must be positive", kw);
    return step::ApplyPulse{pulse};
  }
  if (k == "repump854") {
    step::Repump854 r;
    while (auto kv = p.key_value()) {
      if (kv->first != "fidelity=") p.fail("unknown repump854 option '" + kv->first + "'", kv->second);
      r.fidelity = parse_float(kv->second, p);
      if (r.fidelity < 0.0 || r.fidelity > 1.0) p.fail("fidelity must lie in [0, 1]", kv->second);
    }
    p.expect_done();
    return r;
  }
  if (k == "wait") {
    step::Wait w{parse_value_or_scan(p.next(), p, parse_time)};
    p.expect_done();
    return w;
  }
  if (k == "measure") {
    auto kv = p.key_value();
    if (!kv || kv->first != "shots=") p.fail("measure expects shots=<int>", kw);
    step::Measure m{parse_int(kv->second, p)};
    if (m.shots < 0) p.fail("shots must be non-negative", kv->second);
    p.expect_done();
    return m;
  }
  p.fail("unknown keyword '" + k + "'", kw);
}

inline bool is_init(const Step& s) {
  return std::holds_alternative<step::InitGround>(s) || std::holds_alternative<step::InitThermal>(s);
}

template <class F>
void for_each_value(const Step& s, F&& f) {
  if (auto* p = std::get_if<step::ApplyPulse>(&s)) {
    if (p->pulse.duration) f(*p->pulse.duration, 's');
    if (p->pulse.omega) f(*p->pulse.omega, 'o');
    f(p->pulse.detune, 'd');
  } else if (auto* w = std::get_if<step::Wait>(&s)) {
    f(w->duration, 'w');
  }
}

}  // namespace dsl

/// Header lines only (configuration files).
inline Header parse_config(std::string_view text) {
  Header h;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = dsl::strip(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto tokens = dsl::tokenize(line, line_no);
    dsl::LineParser p(tokens, line_no);
    const dsl::Token kw = p.next();
    if (!dsl::parse_header_line(p, kw, h))
      p.fail("unknown configuration keyword '" + kw.text + "'", kw);
  }
  return h;
}

inline Program parse_sequence(std::string_view text) {
  Program prog;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  int scans = 0;
  int init_line = 0;
  bool saw_trap = false, saw_ion = false;
  int measure_line = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = dsl::strip(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto tokens = dsl::tokenize(line, line_no);
    dsl::LineParser p(tokens, line_no);
    const dsl::Token kw = p.next();
    if (dsl::parse_header_line(p, kw, prog.header)) {
      if (!prog.sequence.steps.empty())
        p.fail("header line '" + kw.text + "' after the first statement", kw);
      saw_trap |= kw.text == "trap";
      saw_ion |= kw.text == "ion";
      continue;
    }
    Step s = dsl::parse_statement(p, kw);
    if (measure_line) p.fail("measure must be the last step", kw);
    if (dsl::is_init(s)) {
      if (init_line) p.fail("duplicate init (first on line " + std::to_string(init_line) + ")", kw);
      if (!prog.sequence.steps.empty()) p.fail("init must be the first step", kw);
      init_line = line_no;
    } else if (prog.sequence.steps.empty()) {
      p.fail("the first step must be init", kw);
    }
    if (std::holds_alternative<step::Measure>(s)) measure_line = line_no;
    dsl::for_each_value(s, [&](const Value& v, char) {
      if (v.scan && ++scans > 1) p.fail("more than one scan(...) placeholder", kw);
    });
    prog.sequence.steps.push_back(std::move(s));
  }
  if (!init_line && !measure_line) throw ParseError("missing init/measure", line_no, 1);
  if (!init_line) throw ParseError("missing init step", line_no, 1);
  if (!measure_line) throw ParseError("missing measure step", line_no, 1);
  if (!saw_trap) throw ParseError("missing trap header", 1, 1);
  if (!saw_ion) throw ParseError("missing ion header", 1, 1);
  return prog;
}

/// The single scan placeholder, if any.
inline std::optional<ScanSite> find_scan(const Sequence& seq) {
  std::optional<ScanSite> site;
  for (const auto& s : seq.steps)
    dsl::for_each_value(s, [&](const Value& v, char kind) {
      if (!v.scan) return;
      switch (kind) {
        case 's': site = ScanSite{*v.scan, "pulse_duration_s", 1.0}; break;
        case 'w': site = ScanSite{*v.scan, "wait_s", 1.0}; break;
        case 'd': site = ScanSite{*v.scan, "detuning_hz", 1.0 / constants::two_pi}; break;
        case 'o': site = ScanSite{*v.scan, "omega_hz", 1.0 / constants::two_pi}; break;
      }
    });
  return site;
}

/// Replaces the scan placeholder with a concrete value.
inline Sequence bind_scan(Sequence seq, double value) {
  for (auto& s : seq.steps) {
    auto set = [&](Value& v) {
      if (v.scan) v = Value{value, std::nullopt};
    };
    if (auto* p = std::get_if<step::ApplyPulse>(&s)) {
      if (p->pulse.duration) set(*p->pulse.duration);
      if (p->pulse.omega) set(*p->pulse.omega);
      set(p->pulse.detune);
    } else if (auto* w = std::get_if<step::Wait>(&s)) {
      set(w->duration);
    }
  }
  return seq;
}

namespace dsl {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string value_text(const Value& v, const char* unit) {
  if (!v.scan) return num(v.value) + unit;
  return "scan(" + num(v.scan->start) + unit + ", " + num(v.scan->stop) + unit + ", " +
         std::to_string(v.scan->points) + ")";
}

inline std::string mode_text(const ModeRef& m) {
  std::string s(1, axis_name(m.axis));
  if (!m.label.empty()) s += "." + m.label;
  return s;
}

}  // namespace dsl

/// Canonical text form in SI units; parse(print(p)) == p.
inline std::string print_header(const Header& h) {
  using dsl::num;
  std::string out;
  std::string trap;
  for (int a = 0; a < 3; ++a)
    if (h.trap[a]) trap += (trap.empty() ? "" : ", ") + std::string(1, "xyz"[a]) + "=" + num(*h.trap[a]) + "rad/s";
  if (!trap.empty()) out += "trap " + trap + "\n";
  if (h.species)
    out += "ion " + h.species->name + " mass=" + num(h.species->mass) + "kg lambda=" +
           num(h.species->qubit_wavelength) + "m gamma=" + num(h.species->dipole_linewidth) +
           "rad/s lifetime=" + num(h.species->d_state_lifetime) + "s\n";
  if (h.beam)
    out += "beam x=" + num((*h.beam)[0]) + ", y=" + num((*h.beam)[1]) + ", z=" + num((*h.beam)[2]) + "\n";
  if (h.n_ions) out += "ions " + std::to_string(*h.n_ions) + "\n";
  std::string noise;
  if (h.dephasing) noise += " dephasing=" + num(*h.dephasing) + "/s";
  if (h.d_decay_rate) noise += " decay=" + num(*h.d_decay_rate) + "/s";
  if (h.heating_rate) noise += " heating=" + num(*h.heating_rate) + "/s";
  if (h.convention)
    noise += std::string(" convention=") + (*h.convention == DecayConvention::rate ? "rate" : "angular");
  if (!noise.empty()) out += "noise" + noise + "\n";
  if (h.omega) out += "omega " + num(*h.omega) + "rad/s\n";
  if (h.sidebands) out += "sidebands " + std::to_string(*h.sidebands) + "\n";
  if (h.rwa) out += std::string("rwa ") + (*h.rwa ? "on" : "off") + "\n";
  if (h.n_max) out += "nmax " + std::to_string(*h.n_max) + "\n";
  if (h.detection) out += "detection " + num(*h.detection) + "\n";
  return out;
}

inline std::string print_step(const Step& s) {
  using dsl::num;
  return std::visit(
      [](const auto& st) -> std::string {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, step::InitGround>) {
          return "init ground";
        } else if constexpr (std::is_same_v<T, step::InitThermal>) {
          return st.nbar ? "init thermal nbar=" + num(*st.nbar) : "init thermal doppler";
        } else if constexpr (std::is_same_v<T, step::OpticalPump>) {
          return "optical_pump";
        } else if constexpr (std::is_same_v<T, step::Cool>) {
          return "cool mode=" + dsl::mode_text(st.mode) + " A-=" + num(st.params.a_minus) +
                 "/s A+=" + num(st.params.a_plus) + "/s t=" + num(st.params.duration) + "s";
        } else if constexpr (std::is_same_v<T, step::ApplyPulse>) {
          const Pulse& p = st.pulse;
          std::string out = "pulse ";
          switch (p.target.kind) {
            case Target::Kind::carrier: out += "carrier"; break;
            case Target::Kind::red: out += "rsb(" + dsl::mode_text(p.target.mode) + ")"; break;
            case Target::Kind::blue: out += "bsb(" + dsl::mode_text(p.target.mode) + ")"; break;
          }
          out += p.area ? " " + num(*p.area) + "rad" : " t=" + dsl::value_text(*p.duration, "s");
          out += " phase=" + num(p.phase) + "rad";
          if (p.omega) out += " omega=" + dsl::value_text(*p.omega, "rad/s");
          out += " detune=" + dsl::value_text(p.detune, "rad/s");
          return out;
        } else if constexpr (std::is_same_v<T, step::Repump854>) {
          return "repump854 fidelity=" + num(st.fidelity);
        } else if constexpr (std::is_same_v<T, step::Wait>) {
          return "wait " + dsl::value_text(st.duration, "s");
        } else {
          return "measure shots=" + std::to_string(st.shots);
        }
      },
      s);
}

inline std::string print_program(const Program& prog) {
  std::string out = print_header(prog.header);
  for (const auto& s : prog.sequence.steps) out += print_step(s) + "\n";
  return out;
}

}  // namespace ionlab
