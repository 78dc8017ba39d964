// Small dense optimizers for the analysis fits.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ionlab/error.hpp"

namespace ionlab::optimize {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nelder-Mead simplex on an unconstrained objective.
inline MinimizeResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                                  const VectorXd& step, int max_iter = 4000, double ftol = 1e-14) {
  const int n = static_cast<int>(x0.size());
  std::vector<VectorXd> s(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) s[i + 1](i) += step(i);
  for (int i = 0; i <= n; ++i) fv[i] = f(s[i]);

  MinimizeResult r;
  std::vector<int> idx(n + 1);
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = idx[0], worst = idx[n], second = idx[n - 1];
    if (std::abs(fv[worst] - fv[best]) <= ftol * (std::abs(fv[best]) + 1e-300) + 1e-300) {
      r.converged = true;
      break;
    }
    VectorXd c = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) c += s[idx[i]];
    c /= n;
    const VectorXd xr = c + (c - s[worst]);
    const double fr = f(xr);
    if (fr < fv[best]) {
      const VectorXd xe = c + 2.0 * (c - s[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        s[worst] = xe, fv[worst] = fe;
      } else {
        s[worst] = xr, fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      s[worst] = xr, fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const VectorXd xc = outside ? VectorXd(c + 0.5 * (xr - c)) : VectorXd(c + 0.5 * (s[worst] - c));
      const double fc = f(xc);
      if (fc < std::min(fr, fv[worst])) {
        s[worst] = xc, fv[worst] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          s[idx[i]] = s[best] + 0.5 * (s[idx[i]] - s[best]);
          fv[idx[i]] = f(s[idx[i]]);
        }
      }
    }
  }
  const int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  r.x = s[best];
  r.value = fv[best];
  return r;
}

struct LeastSquaresResult {
  VectorXd x;
  double cost = 0.0;          // sum of squared residuals
  MatrixXd covariance;        // (J^T J)^-1 at the solution
  int iterations = 0;
  bool converged = false;
  int n_residuals = 0;
};

/// Forward-difference Jacobian with per-parameter relative steps.
inline MatrixXd numerical_jacobian(const std::function<VectorXd(const VectorXd&)>& r, const VectorXd& x,
                                   const VectorXd& r0) {
  MatrixXd J(r0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    const double h = 1e-7 * std::max(std::abs(x(j)), 1e-3);
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (r(xp) - r(xm)) / (2.0 * h);
  }
  return J;
}

/// Levenberg-Marquardt (Gauss-Newton with damping) on residuals r(x).
inline LeastSquaresResult levenberg_marquardt(const std::function<VectorXd(const VectorXd&)>& r,
                                              const VectorXd& x0, int max_iter = 200,
                                              double tol = 1e-15) {
  LeastSquaresResult out;
  VectorXd x = x0;
  VectorXd res = r(x);
  double cost = res.squaredNorm();
  double lambda = 1e-3;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const MatrixXd J = numerical_jacobian(r, x, res);
    const MatrixXd JtJ = J.transpose() * J;
    const VectorXd g = J.transpose() * res;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      MatrixXd A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const VectorXd dx = A.ldlt().solve(-g);
      const VectorXd xn = x + dx;
      const VectorXd rn = r(xn);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn <= cost) {
        const double rel = (cost - cn) / std::max(cost, 1e-300);
        x = xn, res = rn;
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (rel < tol || dx.norm() <= 1e-14 * (x.norm() + 1e-14)) out.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!improved || out.converged) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  out.cost = cost;
  out.n_residuals = static_cast<int>(res.size());
  const MatrixXd J = numerical_jacobian(r, x, res);
  out.covariance = (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse();
  return out;
}

/// Golden-section minimization on [a, b].
inline double golden_section(const std::function<double(double)>& f, double a, double b,
                             double tol = 1e-10, int max_iter = 200) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && std::abs(b - a) > tol * (std::abs(a) + std::abs(b) + 1e-300); ++i) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

/// Lawson-Hanson active-set solution of min |Ax - b| subject to x >= 0.
inline VectorXd nnls(const MatrixXd& A, const VectorXd& b, int max_iter = 0) {
  const int n = static_cast<int>(A.cols());
  if (max_iter <= 0) max_iter = 30 * n + 30;
  VectorXd x = VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * A.cwiseAbs().maxCoeff() * std::max<double>(A.rows(), n);

  auto solve_passive = [&](VectorXd& z) {
    std::vector<int> P;
    for (int j = 0; j < n; ++j)
      if (passive[j]) P.push_back(j);
    MatrixXd Ap(A.rows(), P.size());
    for (std::size_t k = 0; k < P.size(); ++k) Ap.col(k) = A.col(P[k]);
    const VectorXd zp = Ap.colPivHouseholderQr().solve(b);
    z = VectorXd::Zero(n);
    for (std::size_t k = 0; k < P.size(); ++k) z(P[k]) = zp(k);
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    const VectorXd w = A.transpose() * (b - A * x);
    int best = -1;
    double wmax = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && w(j) > wmax) wmax = w(j), best = j;
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < max_iter; ++inner) {
      VectorXd z;
      solve_passive(z);
      bool feasible = true;
      for (int j = 0; j < n; ++j)
        if (passive[j] && z(j) <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (int j = 0; j < n; ++j)
        if (passive[j] && z(j) <= 0.0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      for (int j = 0; j < n; ++j)
        if (passive[j] && x(j) <= 1e-15) passive[j] = false, x(j) = 0.0;
    }
  }
  return x;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_error = 0.0;
  double intercept_error = 0.0;
  double chi2 = 0.0;
};

/// Weighted straight-line fit; sigma <= 0 entries are rejected.
inline LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                                     std::span<const double> sigma) {
  if (x.size() != y.size() || x.size() != sigma.size()) throw FitError("size mismatch in linear fit");
  if (x.size() < 2) throw FitError("linear fit needs at least two points");
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw FitError("linear fit requires positive uncertainties");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    S += w, Sx += w * x[i], Sy += w * y[i], Sxx += w * x[i] * x[i], Sxy += w * x[i] * y[i];
  }
  const double det = S * Sxx - Sx * Sx;
  if (!(det > 0.0)) throw FitError("degenerate abscissae in linear fit");
  LinearFit f;
  f.slope = (S * Sxy - Sx * Sy) / det;
  f.intercept = (Sxx * Sy - Sx * Sxy) / det;
  f.slope_error = std::sqrt(S / det);
  f.intercept_error = std::sqrt(Sxx / det);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (y[i] - f.intercept - f.slope * x[i]) / sigma[i];
    f.chi2 += d * d;
  }
  return f;
}

}  // namespace ionlab::optimize
