// Fits that turn scan data into thermometry, populations, coherence and heating numbers.

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ionlab/constants.hpp"
#include "ionlab/error.hpp"
#include "ionlab/experiment.hpp"
#include "ionlab/optimize.hpp"
#include "ionlab/quantum_core.hpp"
#include "ionlab/sequence.hpp"

namespace ionlab {

struct Measurement {
  double value = 0.0;
  double error = 0.0;
};

/// Shot-noise variance with a 1/N floor so that p = 0 or 1 keeps a finite weight.
inline double shot_sigma(double p, int shots) {
  if (shots <= 0) return 1.0;
  return std::sqrt((p * (1.0 - p) + 1.0 / shots) / shots);
}

/// Per-point uncertainties of a scan; oracle data (no shots) gets unit weights.
inline std::vector<double> scan_sigmas(const ScanResult& scan) {
  std::vector<double> s;
  for (const auto& r : scan.rows) s.push_back(shot_sigma(r.p_est, r.shots));
  return s;
}

inline bool scan_is_oracle(const ScanResult& scan) {
  return std::all_of(scan.rows.begin(), scan.rows.end(), [](const auto& r) { return r.shots == 0; });
}

inline std::vector<double> scan_values(const ScanResult& scan) {
  std::vector<double> v;
  for (const auto& r : scan.rows) v.push_back(r.value);
  return v;
}

inline std::vector<double> scan_estimates(const ScanResult& scan) {
  std::vector<double> v;
  for (const auto& r : scan.rows) v.push_back(r.p_est);
  return v;
}

// --- Sideband thermometry ---------------------------------------------------------------

struct ThermometryResult {
  double ratio = 0.0;
  double ratio_error = 0.0;
  double nbar = 0.0;
  double nbar_error = 0.0;
  double p0 = 1.0;
  double p0_error = 0.0;
  double p0_ci_low = 1.0;  // 95 %
  double p0_ci_high = 1.0;
  bool thermal_consistent = true;
};

/// R = P_red / P_blue; for a thermal state nbar = R / (1 - R) and p0 = 1 - R.
inline ThermometryResult sideband_thermometry(Measurement red, Measurement blue) {
  if (!(blue.value > 0.0)) throw DomainError("thermometry requires P_blue > 0");
  ThermometryResult t;
  t.ratio = red.value / blue.value;
  t.ratio_error = std::hypot(red.error / blue.value, red.value * blue.error / (blue.value * blue.value));
  if (t.ratio >= 1.0 || t.ratio < 0.0) {
    t.thermal_consistent = false;
    t.nbar = std::numeric_limits<double>::infinity();
    t.nbar_error = std::numeric_limits<double>::infinity();
    t.p0 = std::clamp(1.0 - t.ratio, 0.0, 1.0);
    t.p0_error = t.ratio_error;
  } else {
    t.nbar = t.ratio / (1.0 - t.ratio);
    t.nbar_error = t.ratio_error / ((1.0 - t.ratio) * (1.0 - t.ratio));
    t.p0 = 1.0 - t.ratio;
    t.p0_error = t.ratio_error;
  }
  t.p0_ci_low = std::max(0.0, t.p0 - 1.959964 * t.p0_error);
  t.p0_ci_high = std::min(1.0, t.p0 + 1.959964 * t.p0_error);
  return t;
}

// --- Lorentzian peaks -------------------------------------------------------------------

struct Peak {
  double center = 0.0;
  double height = 0.0;
  double width = 0.0;  // full width at half maximum
  double center_error = 0.0;
  double height_error = 0.0;
  double width_error = 0.0;
};

inline double lorentzian(double x, const Peak& p) {
  const double u = 2.0 * (x - p.center) / p.width;
  return p.height / (1.0 + u * u);
}

struct LorentzianOptions {
  int n_peaks = 1;
  bool fit_offset = false;
  std::vector<std::optional<double>> fixed_centers;  // per peak; empty = all free
  std::vector<std::optional<double>> fixed_widths;
};

struct LorentzianFit {
  std::vector<Peak> peaks;  // ascending center
  double offset = 0.0;
  double offset_error = 0.0;
  double chi2 = 0.0;
  int dof = 0;
};

namespace detail {

inline std::optional<double> pick(const std::vector<std::optional<double>>& v, int k) {
  return k < static_cast<int>(v.size()) ? v[k] : std::nullopt;
}

// Greedy peak seeds from the residual after subtracting earlier seeds.
inline std::vector<Peak> seed_peaks(std::span<const double> x, std::span<const double> y,
                                    const LorentzianOptions& o) {
  const int n = static_cast<int>(x.size());
  double spacing = std::abs(x[n - 1] - x[0]) / std::max(1, n - 1);
  std::vector<double> r(y.begin(), y.end());
  std::vector<Peak> seeds;
  for (int k = 0; k < o.n_peaks; ++k) {
    Peak p;
    int i0 = 0;
    if (auto c = pick(o.fixed_centers, k)) {
      p.center = *c;
      for (int i = 0; i < n; ++i)
        if (std::abs(x[i] - *c) < std::abs(x[i0] - *c)) i0 = i;
    } else {
      i0 = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
      p.center = x[i0];
    }
    p.height = std::max(r[i0], 1e-6);
    int lo = i0, hi = i0;
    while (lo > 0 && r[lo] > 0.5 * p.height) --lo;
    while (hi < n - 1 && r[hi] > 0.5 * p.height) ++hi;
    p.width = std::max(std::abs(x[hi] - x[lo]), 2.0 * spacing);
    if (auto w = pick(o.fixed_widths, k)) p.width = *w;
    for (int i = 0; i < n; ++i) r[i] -= lorentzian(x[i], p);
    seeds.push_back(p);
  }
  return seeds;
}

}  // namespace detail

/// Weighted least squares sum of Lorentzians (plus optional constant offset). Heights are
/// kept non-negative by pinning any negative height to zero and refitting.
inline LorentzianFit fit_lorentzian_peaks(std::span<const double> x, std::span<const double> y,
                                          std::span<const double> sigma,
                                          const LorentzianOptions& options = {}) {
  const int n = static_cast<int>(x.size());
  if (n == 0 || y.size() != x.size()) throw FitError("Lorentzian fit needs matching x and y");
  if (!sigma.empty() && sigma.size() != x.size()) throw FitError("sigma size mismatch");
  if (options.n_peaks < 1) throw FitError("n_peaks must be at least 1");
  const bool weighted = !sigma.empty();
  auto sig = [&](int i) { return weighted ? sigma[i] : 1.0; };

  std::vector<Peak> peaks = detail::seed_peaks(x, y, options);
  const int K = options.n_peaks;
  std::vector<bool> height_pinned(K, false);

  // Parameter layout: per peak [center?, width?, height?], then offset?.
  struct Slot {
    int peak;
    int field;  // 0 center, 1 width, 2 height
  };
  LorentzianFit fit;
  for (int pass = 0; pass <= K; ++pass) {
    std::vector<Slot> slots;
    for (int k = 0; k < K; ++k) {
      if (!detail::pick(options.fixed_centers, k)) slots.push_back({k, 0});
      if (!detail::pick(options.fixed_widths, k)) slots.push_back({k, 1});
      if (!height_pinned[k]) slots.push_back({k, 2});
    }
    const int np = static_cast<int>(slots.size()) + (options.fit_offset ? 1 : 0);
    Eigen::VectorXd p0(np);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const Peak& pk = peaks[slots[s].peak];
      p0(s) = slots[s].field == 0 ? pk.center : slots[s].field == 1 ? pk.width : pk.height;
    }
    if (options.fit_offset) p0(np - 1) = fit.offset;

    auto unpack = [&](const Eigen::VectorXd& p, std::vector<Peak>& pk, double& off) {
      pk = peaks;
      for (int k = 0; k < K; ++k)
        if (height_pinned[k]) pk[k].height = 0.0;
      for (std::size_t s = 0; s < slots.size(); ++s) {
        Peak& q = pk[slots[s].peak];
        (slots[s].field == 0 ? q.center : slots[s].field == 1 ? q.width : q.height) = p(s);
      }
      for (auto& q : pk) q.width = std::abs(q.width);
      off = options.fit_offset ? p(np - 1) : 0.0;
    };
    auto residuals = [&](const Eigen::VectorXd& p) {
      std::vector<Peak> pk;
      double off = 0.0;
      unpack(p, pk, off);
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i) {
        double m = off;
        for (const auto& q : pk) m += q.width > 0.0 ? lorentzian(x[i], q) : 0.0;
        r(i) = (m - y[i]) / sig(i);
      }
      return r;
    };

    Eigen::VectorXd best = p0;
    if (np > 0) {
      if (np > 1) {
        Eigen::VectorXd step(np);
        for (int j = 0; j < np; ++j) step(j) = 0.1 * (std::abs(p0(j)) + 1e-3);
        for (std::size_t s = 0; s < slots.size(); ++s)
          if (slots[s].field == 0) step(s) = 0.2 * peaks[slots[s].peak].width;
        const auto nm = optimize::nelder_mead(
            [&](const Eigen::VectorXd& p) { return residuals(p).squaredNorm(); }, p0, step, 3000);
        best = nm.x;
      }
      const auto lm = optimize::levenberg_marquardt(residuals, best, 400);
      if (!std::isfinite(lm.cost)) throw FitError("Lorentzian fit diverged", lm.cost);
      best = lm.x;
      fit.chi2 = lm.cost;
      fit.dof = std::max(1, n - np);
      const double scale = weighted ? 1.0 : fit.chi2 / fit.dof;
      std::vector<Peak> pk;
      unpack(best, pk, fit.offset);
      for (auto& q : pk) q.center_error = q.width_error = q.height_error = 0.0;
      for (std::size_t s = 0; s < slots.size(); ++s) {
        const double e = std::sqrt(std::max(0.0, lm.covariance(s, s) * scale));
        Peak& q = pk[slots[s].peak];
        (slots[s].field == 0 ? q.center_error : slots[s].field == 1 ? q.width_error : q.height_error) = e;
      }
      if (options.fit_offset)
        fit.offset_error = std::sqrt(std::max(0.0, lm.covariance(np - 1, np - 1) * scale));
      peaks = pk;
    } else {
      fit.chi2 = residuals(p0).squaredNorm();
      fit.dof = n;
    }

    // Pinned heights: report the one-sided linear sensitivity as the error.
    for (int k = 0; k < K; ++k) {
      if (!height_pinned[k]) continue;
      Peak unit = peaks[k];
      unit.height = 1.0;
      double info = 0.0;
      for (int i = 0; i < n; ++i) info += std::pow(lorentzian(x[i], unit) / sig(i), 2);
      const double scale = weighted ? 1.0 : fit.chi2 / fit.dof;
      peaks[k].height_error = info > 0.0 ? std::sqrt(scale / info) : 0.0;
    }

    bool changed = false;
    for (int k = 0; k < K; ++k)
      if (!height_pinned[k] && peaks[k].height < 0.0) height_pinned[k] = changed = true;
    if (!changed) break;
  }
  for (const auto& q : peaks)
    if (!std::isfinite(q.center) || !std::isfinite(q.height) || !(q.width > 0.0))
      throw FitError("Lorentzian fit did not converge", fit.chi2);
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.center < b.center; });
  fit.peaks = peaks;
  return fit;
}

inline LorentzianFit fit_lorentzian_peaks(const ScanResult& scan, const LorentzianOptions& options = {}) {
  const auto x = scan_values(scan), y = scan_estimates(scan);
  const auto s = scan_is_oracle(scan) ? std::vector<double>{} : scan_sigmas(scan);
  return fit_lorentzian_peaks(x, y, s, options);
}

/// Thermometry from a blue-sideband scan and an equal-duration red-sideband scan, both in
/// detuning relative to their nominal sideband. The red peak shares the blue width and sits
/// at the mirrored light-shifted position.
struct SidebandScanThermometry {
  Peak blue;
  Peak red;
  ThermometryResult thermometry;
};

inline SidebandScanThermometry thermometry_from_scans(const ScanResult& red, const ScanResult& blue) {
  SidebandScanThermometry out;
  out.blue = fit_lorentzian_peaks(blue).peaks.front();
  LorentzianOptions ro;
  ro.fixed_centers = {-out.blue.center};
  ro.fixed_widths = {out.blue.width};
  out.red = fit_lorentzian_peaks(red, ro).peaks.front();
  out.thermometry = sideband_thermometry({out.red.height, out.red.height_error},
                                         {out.blue.height, out.blue.height_error});
  return out;
}

// --- Fock populations from blue-sideband flopping ---------------------------------------

struct FlopOptions {
  int n_cut = 4;  // populations p_0 .. p_{n_cut}
  bool per_component_decay = false;
  std::optional<double> fixed_decay;  // 1/s; otherwise fitted
  double sum_weight = 10.0;  // soft constraint sum p = 1, in units of the median weight
  double max_condition = 1e8;
};

struct FlopAnalysis {
  std::vector<double> populations;
  std::vector<double> errors;
  std::vector<double> decay_rates;  // 1/s per component
  std::vector<double> frequencies;  // Omega_{n,n+1}, rad/s
  double residual_norm = 0.0;       // weighted, without the constraint row
  double condition_number = 0.0;
  int dominant() const {
    return static_cast<int>(std::max_element(populations.begin(), populations.end()) - populations.begin());
  }
};

/// Model P_D(t) = sum_n p_n (1 - exp(-g_n t) cos(W_n t)) / 2 with W_n = Omega M_{n,n+1}(eta).
inline double flop_signal(double t, std::span<const double> p, std::span<const double> freqs,
                          std::span<const double> decay) {
  double s = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n)
    s += p[n] * 0.5 * (1.0 - std::exp(-decay[n] * t) * std::cos(freqs[n] * t));
  return s;
}

inline std::vector<double> blue_flop_frequencies(double rabi, double eta, int n_cut) {
  std::vector<double> w;
  for (int n = 0; n <= n_cut; ++n) w.push_back(rabi * coupling_strength(n, 1, eta));
  return w;
}

namespace detail {

struct NnlsSolve {
  Eigen::VectorXd p;
  double residual = 0.0;
  Eigen::MatrixXd design;  // weighted, without constraint row
};

inline NnlsSolve flop_nnls(std::span<const double> t, std::span<const double> y, std::span<const double> sigma,
                           std::span<const double> freqs, std::span<const double> decay, double sum_weight) {
  const int m = static_cast<int>(t.size());
  const int k = static_cast<int>(freqs.size());
  Eigen::MatrixXd A(m + 1, k);
  Eigen::VectorXd b(m + 1);
  std::vector<double> w(m);
  for (int i = 0; i < m; ++i) {
    w[i] = 1.0 / sigma[i];
    for (int n = 0; n < k; ++n)
      A(i, n) = w[i] * 0.5 * (1.0 - std::exp(-decay[n] * t[i]) * std::cos(freqs[n] * t[i]));
    b(i) = w[i] * y[i];
  }
  std::vector<double> ws = w;
  std::nth_element(ws.begin(), ws.begin() + m / 2, ws.end());
  const double lam = sum_weight * ws[m / 2] * std::sqrt(static_cast<double>(m));
  A.row(m).setConstant(lam);
  b(m) = lam;
  NnlsSolve s;
  s.p = optimize::nnls(A, b);
  s.design = A.topRows(m);
  s.residual = (s.design * s.p - b.head(m)).norm();
  return s;
}

}  // namespace detail

inline FlopAnalysis extract_fock_populations(std::span<const double> t, std::span<const double> y,
                                             std::span<const double> sigma, double eta, double rabi,
                                             const FlopOptions& options = {}) {
  const int m = static_cast<int>(t.size());
  if (m == 0 || y.size() != t.size()) throw FitError("flop data needs matching time and signal");
  if (!sigma.empty() && sigma.size() != t.size()) throw FitError("sigma size mismatch");
  if (options.n_cut < 0) throw FitError("n_cut must be non-negative");
  if (!(rabi > 0.0) || !(eta > 0.0)) throw DomainError("flop extraction needs positive Omega and eta");
  std::vector<double> sig = sigma.empty() ? std::vector<double>(m, 1.0) : std::vector<double>(sigma.begin(), sigma.end());

  FlopAnalysis out;
  out.frequencies = blue_flop_frequencies(rabi, eta, options.n_cut);
  const int k = options.n_cut + 1;

  const double span = *std::max_element(t.begin(), t.end()) - *std::min_element(t.begin(), t.end());
  const double slow_period = constants::two_pi / out.frequencies.front();
  {
    std::vector<double> zero(k, 0.0);
    const auto probe = detail::flop_nnls(t, y, sig, out.frequencies, zero, options.sum_weight);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(probe.design);
    const auto& sv = svd.singularValues();
    out.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  }
  if (span < 3.0 * slow_period || out.condition_number > options.max_condition)
    throw FitError("ill-conditioned flop basis: grid spans " + dsl::num(span / slow_period) +
                   " slowest periods (need 3), condition number " + dsl::num(out.condition_number));

  auto solve_with = [&](const std::vector<double>& decay) {
    return detail::flop_nnls(t, y, sig, out.frequencies, decay, options.sum_weight);
  };
  std::vector<double> decay(k, options.fixed_decay.value_or(0.0));
  if (!options.fixed_decay) {
    const double g_max = 10.0 / span;
    auto cost = [&](double g) {
      std::fill(decay.begin(), decay.end(), g);
      return solve_with(decay).residual;
    };
    double g = optimize::golden_section(cost, 0.0, g_max, 1e-9);
    if (cost(0.0) <= cost(g)) g = 0.0;
    std::fill(decay.begin(), decay.end(), g);
    if (options.per_component_decay) {
      Eigen::VectorXd x0 = Eigen::VectorXd::Constant(k, std::sqrt(g));
      Eigen::VectorXd step = Eigen::VectorXd::Constant(k, std::sqrt(g_max) * 0.1);
      const auto nm = optimize::nelder_mead(
          [&](const Eigen::VectorXd& x) {
            std::vector<double> d(k);
            for (int i = 0; i < k; ++i) d[i] = x(i) * x(i);
            return solve_with(d).residual;
          },
          x0, step, 2000, 1e-12);
      for (int i = 0; i < k; ++i) decay[i] = nm.x(i) * nm.x(i);
    }
  }
  const auto sol = solve_with(decay);
  out.decay_rates = decay;
  out.residual_norm = sol.residual;
  out.populations.assign(sol.p.data(), sol.p.data() + k);

  // Errors from the active components' normal equations.
  out.errors.assign(k, 0.0);
  std::vector<int> active;
  for (int n = 0; n < k; ++n)
    if (out.populations[n] > 0.0) active.push_back(n);
  if (!active.empty()) {
    Eigen::MatrixXd Aa(m, active.size());
    for (std::size_t j = 0; j < active.size(); ++j) Aa.col(j) = sol.design.col(active[j]);
    const Eigen::MatrixXd cov = (Aa.transpose() * Aa).completeOrthogonalDecomposition().pseudoInverse();
    const double scale = sigma.empty() ? sol.residual * sol.residual / std::max(1, m - static_cast<int>(active.size())) : 1.0;
    for (std::size_t j = 0; j < active.size(); ++j) out.errors[active[j]] = std::sqrt(std::max(0.0, cov(j, j) * scale));
  }
  return out;
}

inline FlopAnalysis extract_fock_populations(const ScanResult& flop, double eta, double rabi,
                                             const FlopOptions& options = {}) {
  const auto t = scan_values(flop), y = scan_estimates(flop);
  const auto s = scan_is_oracle(flop) ? std::vector<double>{} : scan_sigmas(flop);
  return extract_fock_populations(t, y, s, eta, rabi, options);
}

/// Lomb-style power spectrum |sum (y - mean) exp(-i w t)|^2 / N on a frequency grid (Hz).
inline std::vector<std::pair<double, double>> periodogram(std::span<const double> t, std::span<const double> y,
                                                          double f_max_hz, int points = 512) {
  std::vector<std::pair<double, double>> out;
  if (t.empty()) return out;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  for (int j = 0; j < points; ++j) {
    const double f = f_max_hz * j / (points - 1.0);
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += (y[i] - mean) * std::polar(1.0, -constants::two_pi * f * t[i]);
    out.emplace_back(f, std::norm(acc) / static_cast<double>(t.size()));
  }
  return out;
}

// --- Single-frequency Rabi fit ----------------------------------------------------------

struct RabiFit {
  double frequency = 0.0;  // rad/s
  double frequency_error = 0.0;
  double amplitude = 0.0;
  double decay = 0.0;
};

/// Fits y = a (1 - exp(-g t) cos(W t)) / 2 + c.
inline RabiFit fit_rabi_frequency(std::span<const double> t, std::span<const double> y,
                                  std::span<const double> sigma = {}) {
  const int m = static_cast<int>(t.size());
  if (m < 5) throw FitError("Rabi fit needs at least five points");
  const double t_max = *std::max_element(t.begin(), t.end());
  const auto spec = periodogram(t, y, 0.5 * (m - 1) / t_max, 4 * m);
  const auto peak = std::max_element(spec.begin() + 1, spec.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  auto sig = [&](int i) { return sigma.empty() ? 1.0 : sigma[i]; };
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) {
      const double model = p(1) * 0.5 * (1.0 - std::exp(-p(2) * p(2) * t[i]) * std::cos(p(0) * t[i])) + p(3);
      r(i) = (model - y[i]) / sig(i);
    }
    return r;
  };
  Eigen::VectorXd p0(4);
  p0 << constants::two_pi * peak->first, 1.0, 0.0, 0.0;
  Eigen::VectorXd step(4);
  step << 0.05 * p0(0), 0.1, 1.0 / std::sqrt(t_max), 0.02;
  const auto nm = optimize::nelder_mead([&](const Eigen::VectorXd& p) { return residuals(p).squaredNorm(); }, p0,
                                        step, 4000);
  const auto lm = optimize::levenberg_marquardt(residuals, nm.x, 300);
  RabiFit f;
  f.frequency = std::abs(lm.x(0));
  const double scale = sigma.empty() ? lm.cost / std::max(1, m - 4) : 1.0;
  f.frequency_error = std::sqrt(std::max(0.0, lm.covariance(0, 0) * scale));
  f.amplitude = lm.x(1);
  f.decay = lm.x(2) * lm.x(2);
  return f;
}

// --- Ramsey -----------------------------------------------------------------------------

enum class RamseyScan { detuning, gap };

/// Pulse timing of a two-pulse Ramsey experiment. Laser phases are referenced to t = 0,
/// the start of the first pulse. A detuning scan adds the scanned value to pulse 2 (and to
/// pulse 1 when scan_first_pulse is set).
struct RamseySetup {
  double pulse1 = 0.0;   // s
  double pulse2 = 0.0;   // s
  double gap = 0.0;      // s, for detuning scans
  double detuning = 0.0;  // rad/s applied to both pulses, for gap scans
  bool scan_first_pulse = false;
  double phase1 = 0.0;
  double phase2 = 0.0;
  double d_decay_rate = 0.0;  // 1/s, known
  DecayConvention convention = DecayConvention::rate;
};

struct RamseyFit {
  double area_error = 0.0;  // pulse area = (1 + area_error) * pi/2 for pulse 1
  double area_error_stderr = 0.0;
  double decay_rate = 0.0;  // coherence decay rate, 1/s
  double decay_rate_stderr = 0.0;
  double decay_constant = 0.0;  // decay_rate expressed in the setup's convention
  double contrast = 1.0;  // exp(-decay_rate * gap)
  double detuning_offset = 0.0;  // rad/s
  double gap = 0.0;  // fitted free-evolution time, s
  double fringe_frequency = 0.0;  // fringe spacing in detuning (Hz), or oscillation frequency in gap (Hz)
  double chi2 = 0.0;
  int dof = 0;
};

namespace detail {

using Mat4 = Eigen::Matrix<std::complex<double>, 4, 4>;
using Vec4 = Eigen::Matrix<std::complex<double>, 4, 1>;

// rho vectorized as (SS, SD, DS, DD); rotating frame with H = [[0, c*], [c, -delta]].
inline Mat4 two_level_liouvillian(double half_rabi, double delta, double phase, double dephasing, double decay) {
  const Complex c = half_rabi * std::polar(1.0, phase);
  Eigen::Matrix2cd H;
  H << 0.0, std::conj(c), c, -delta;
  Mat4 L = Mat4::Zero();
  for (int k = 0; k < 4; ++k) {
    Eigen::Matrix2cd e = Eigen::Matrix2cd::Zero();
    e(k / 2, k % 2) = 1.0;
    Eigen::Matrix2cd d = -Complex(0.0, 1.0) * (H * e - e * H);
    d(0, 1) -= dephasing * e(0, 1);
    d(1, 0) -= dephasing * e(1, 0);
    d(0, 0) += decay * e(1, 1);
    d(1, 1) -= decay * e(1, 1);
    d(0, 1) -= 0.5 * decay * e(0, 1);
    d(1, 0) -= 0.5 * decay * e(1, 0);
    for (int j = 0; j < 4; ++j) L(j, k) = d(j / 2, j % 2);
  }
  return L;
}

// Interaction-picture phases of (SS, SD, DS, DD) for energies (0, -delta) at time t.
inline Vec4 frame_phase(double delta, double t) {
  Vec4 p;
  p << 1.0, phase_factor(delta * t), phase_factor(-delta * t), 1.0;
  return p;
}

inline Vec4 two_level_pulse(const Vec4& rho, double half_rabi, double delta, double phase, double t0,
                            double duration, double dephasing, double decay) {
  Vec4 r = rho.cwiseProduct(frame_phase(delta, t0).conjugate());
  const Mat4 U = (two_level_liouvillian(half_rabi, delta, phase, dephasing, decay) * duration).exp();
  r = U * r;
  return r.cwiseProduct(frame_phase(delta, t0 + duration));
}

inline Vec4 two_level_wait(Vec4 rho, double duration, double dephasing, double decay) {
  const double pd = rho(3).real() * std::exp(-decay * duration);
  rho(0) += rho(3) - pd;
  rho(3) = pd;
  const double coh = std::exp(-(dephasing + 0.5 * decay) * duration);
  rho(1) *= coh;
  rho(2) *= coh;
  return rho;
}

}  // namespace detail

/// Exact two-level Ramsey signal, P_D after pulse 1, free evolution and pulse 2.
inline double ramsey_signal(double rabi_eff, double delta1, double delta2, const RamseySetup& s, double gap,
                            double dephasing) {
  detail::Vec4 rho;
  rho << 1.0, 0.0, 0.0, 0.0;
  rho = detail::two_level_pulse(rho, 0.5 * rabi_eff, delta1, s.phase1, 0.0, s.pulse1, dephasing, s.d_decay_rate);
  rho = detail::two_level_wait(rho, gap, dephasing, s.d_decay_rate);
  rho = detail::two_level_pulse(rho, 0.5 * rabi_eff, delta2, s.phase2, s.pulse1 + gap, s.pulse2, dephasing,
                                s.d_decay_rate);
  return rho(3).real();
}

inline RamseyFit fit_ramsey(RamseyScan kind, std::span<const double> x, std::span<const double> y,
                            std::span<const double> sigma, const RamseySetup& setup) {
  const int m = static_cast<int>(x.size());
  if (m < 8 || y.size() != x.size()) throw FitError("Ramsey fit needs at least eight points");
  if (!(setup.pulse1 > 0.0) || !(setup.pulse2 > 0.0)) throw FitError("Ramsey fit needs pulse durations");
  auto sig = [&](int i) { return sigma.empty() ? 1.0 : sigma[i]; };
  const bool det = kind == RamseyScan::detuning;
  const double nominal = constants::pi / (2.0 * setup.pulse1);

  // p = [eps, sqrt(gamma), delta offset (rad/s), gap (detuning scans)]
  auto model = [&](const Eigen::VectorXd& p, double xi) {
    const double rabi = (1.0 + p(0)) * nominal;
    const double g = p(1) * p(1);
    if (det) {
      const double d = constants::two_pi * xi;
      const double d1 = p(2) + (setup.scan_first_pulse ? d : 0.0);
      return ramsey_signal(rabi, d1, p(2) + d, setup, p(3), g);
    }
    return ramsey_signal(rabi, p(2), p(2), setup, xi, g);
  };
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    if (det && !setup.scan_first_pulse) {
      // Pulse 1 and the wait do not depend on the scanned detuning.
      const double half = 0.5 * (1.0 + p(0)) * nominal, g = p(1) * p(1);
      detail::Vec4 rho;
      rho << 1.0, 0.0, 0.0, 0.0;
      rho = detail::two_level_pulse(rho, half, p(2), setup.phase1, 0.0, setup.pulse1, g, setup.d_decay_rate);
      rho = detail::two_level_wait(rho, p(3), g, setup.d_decay_rate);
      for (int i = 0; i < m; ++i) {
        const auto out = detail::two_level_pulse(rho, half, p(2) + constants::two_pi * x[i], setup.phase2,
                                                 setup.pulse1 + p(3), setup.pulse2, g, setup.d_decay_rate);
        r(i) = (out(3).real() - y[i]) / sig(i);
      }
      return r;
    }
    for (int i = 0; i < m; ++i) r(i) = (model(p, x[i]) - y[i]) / sig(i);
    return r;
  };
  const int np = det ? 4 : 3;
  const double t_ref = det ? setup.gap : *std::max_element(x.begin(), x.end());
  const double g_scale = 1.0 / std::max(t_ref, setup.pulse1);

  optimize::LeastSquaresResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (double eps0 : {-0.1, 0.1}) {
    for (double g0 : {0.1 * g_scale, g_scale}) {
      Eigen::VectorXd p0(np), step(np);
      p0(0) = eps0, p0(1) = std::sqrt(g0), p0(2) = det ? 0.0 : setup.detuning;
      step(0) = 0.05, step(1) = 0.3 * std::sqrt(g_scale);
      step(2) = det ? 0.05 * constants::two_pi / std::max(t_ref, 1e-9) : 0.02 * std::abs(setup.detuning) + 1.0;
      if (det) p0(3) = setup.gap, step(3) = 0.01 * setup.gap + 1e-9;
      const auto nm = optimize::nelder_mead([&](const Eigen::VectorXd& p) { return residuals(p).squaredNorm(); },
                                            p0, step, 1000);
      const auto lm = optimize::levenberg_marquardt(residuals, nm.x, 300);
      if (lm.cost < best.cost) best = lm;
    }
  }
  if (!std::isfinite(best.cost)) throw FitError("Ramsey fit did not converge", best.cost);

  RamseyFit f;
  f.dof = std::max(1, m - np);
  f.chi2 = best.cost;
  const double scale = sigma.empty() ? best.cost / f.dof : 1.0;
  f.area_error = best.x(0);
  f.area_error_stderr = std::sqrt(std::max(0.0, best.covariance(0, 0) * scale));
  f.decay_rate = best.x(1) * best.x(1);
  f.decay_rate_stderr = 2.0 * std::abs(best.x(1)) * std::sqrt(std::max(0.0, best.covariance(1, 1) * scale));
  f.decay_constant = setup.convention == DecayConvention::angular ? f.decay_rate / constants::two_pi : f.decay_rate;
  f.detuning_offset = best.x(2);
  f.gap = det ? best.x(3) : t_ref;
  f.contrast = std::exp(-f.decay_rate * f.gap);
  if (det)
    f.fringe_frequency = 1.0 / (setup.scan_first_pulse
                                    ? f.gap + 2.0 * (setup.pulse1 + setup.pulse2) / constants::pi
                                    : setup.pulse1 + f.gap);
  else
    f.fringe_frequency = std::abs(f.detuning_offset) / constants::two_pi;
  return f;
}

// --- Heating ----------------------------------------------------------------------------

struct HeatingFit {
  double rate = 0.0;  // quanta/s
  double rate_error = 0.0;
  double intercept = 0.0;
  double intercept_error = 0.0;
  bool negative_flag = false;  // slope < 0 by more than 2 sigma
};

inline HeatingFit heating_rate(std::span<const double> wait, std::span<const double> nbar,
                               std::span<const double> nbar_error) {
  if (wait.size() < 3) throw FitError("heating fit needs at least three wait times");
  std::vector<double> err(nbar_error.begin(), nbar_error.end());
  if (err.empty()) err.assign(wait.size(), 1.0);
  const auto lin = optimize::weighted_linear_fit(wait, nbar, err);
  HeatingFit h;
  h.rate = lin.slope;
  h.intercept = lin.intercept;
  const double scale = nbar_error.empty() ? std::sqrt(lin.chi2 / std::max<double>(1.0, wait.size() - 2.0)) : 1.0;
  h.rate_error = lin.slope_error * scale;
  h.intercept_error = lin.intercept_error * scale;
  h.negative_flag = h.rate < -2.0 * h.rate_error;
  return h;
}

}  // namespace ionlab
