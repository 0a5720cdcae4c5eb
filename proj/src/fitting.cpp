#include "dlcz/fitting.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "dlcz/afc_memory.hpp"

namespace dlcz::fit {

namespace {

void require_same_size(std::span<const double> x, std::span<const double> y,
                       std::span<const double> sigma) {
  if (x.size() != y.size() || (!sigma.empty() && sigma.size() != x.size())) {
    throw FitError("fit: x, y and sigma must have equal length");
  }
  for (double s : sigma) {
    if (!(s > 0.0)) throw FitError("fit: sigmas must be > 0");
  }
}

std::size_t distinct_count(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

constexpr double kSigmaToFwhm = 2.3548200450309493;  // 2 sqrt(2 ln 2)

}  // namespace

LinearFit fit_linear(std::span<const double> x, std::span<const double> y,
                     std::span<const double> sigma) {
  require_same_size(x, y, sigma);
  if (distinct_count(x) < 2) throw FitError("fit_linear: need at least 2 distinct abscissae");
  const bool weighted = !sigma.empty();
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  const double xm = sx / sw;
  const double ym = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
    sxx += w * (x[i] - xm) * (x[i] - xm);
    sxy += w * (x[i] - xm) * (y[i] - ym);
  }
  LinearFit out;
  out.slope.value = sxy / sxx;
  out.intercept.value = ym - out.slope.value * xm;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - out.intercept.value - out.slope.value * x[i];
    out.chi2 += weighted ? r * r / (sigma[i] * sigma[i]) : r * r;
  }
  double scale = 1.0;
  if (!weighted) {
    scale = x.size() > 2 ? out.chi2 / static_cast<double>(x.size() - 2) : 0.0;
  }
  out.slope.sigma = std::sqrt(scale / sxx);
  out.intercept.sigma = std::sqrt(scale * (1.0 / sw + xm * xm / sxx));
  return out;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require_same_size(x, y, {});
  if (x.size() < 2) throw FitError("pearson_r: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i] / n;
    ym += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - xm) * (y[i] - ym);
    sxx += (x[i] - xm) * (x[i] - xm);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  if (sxx == 0.0 || syy == 0.0) throw FitError("pearson_r: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

LevenbergMarquardtResult levenberg_marquardt(const ModelFn& model, std::span<const double> x,
                                             std::span<const double> y,
                                             std::span<const double> sigma,
                                             std::vector<double> initial,
                                             const LevenbergMarquardtOptions& options) {
  require_same_size(x, y, sigma);
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto p = static_cast<Eigen::Index>(initial.size());
  if (n < p) throw FitError("levenberg_marquardt: fewer points than parameters");

  Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(initial.data(), p);
  Eigen::MatrixXd J(n, p);
  Eigen::VectorXd r(n);
  std::vector<double> grad(static_cast<std::size_t>(p));

  const auto evaluate = [&](const Eigen::VectorXd& at, bool with_jacobian) {
    double chi2 = 0.0;
    const std::span<const double> ps(at.data(), static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = sigma.empty() ? 1.0 : 1.0 / sigma[static_cast<std::size_t>(i)];
      const double f = model(x[static_cast<std::size_t>(i)], ps, grad);
      r(i) = (y[static_cast<std::size_t>(i)] - f) * w;
      chi2 += r(i) * r(i);
      if (with_jacobian) {
        for (Eigen::Index k = 0; k < p; ++k) J(i, k) = grad[static_cast<std::size_t>(k)] * w;
      }
    }
    return chi2;
  };

  LevenbergMarquardtResult out;
  double lambda = options.initial_lambda;
  double chi2 = evaluate(params, true);
  for (out.iterations = 1; out.iterations <= options.max_iterations; ++out.iterations) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * r;
    Eigen::MatrixXd A = JtJ;
    A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
    const Eigen::VectorXd step = A.ldlt().solve(Jtr);
    const Eigen::VectorXd trial = params + step;
    const Eigen::VectorXd r_saved = r;
    const double trial_chi2 = evaluate(trial, false);
    if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
      params = trial;
      chi2 = evaluate(params, true);
      lambda = std::max(lambda * 0.1, 1e-12);
      if (step.norm() <= options.relative_step * (params.norm() + options.relative_step)) {
        out.converged = true;
        break;
      }
    } else {
      r = r_saved;
      lambda *= 10.0;
      if (lambda > 1e16) {
        out.converged = true;  // no downhill step left at machine precision
        break;
      }
    }
  }
  evaluate(params, true);
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::MatrixXd cov = JtJ.completeOrthogonalDecomposition().pseudoInverse();
  if (sigma.empty()) {
    cov *= n > p ? chi2 / static_cast<double>(n - p) : 0.0;
  }
  out.params.assign(params.data(), params.data() + p);
  out.sigmas.resize(static_cast<std::size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) {
    out.sigmas[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, cov(k, k)));
  }
  out.chi2 = chi2;
  return out;
}

std::pair<double, double> gaussian_decay_loglinear(std::span<const double> t,
                                                   std::span<const double> y) {
  require_same_size(t, y, {});
  std::vector<double> u;
  std::vector<double> ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (y[i] > 0.0) {
      u.push_back(t[i] * t[i]);
      ly.push_back(std::log(y[i]));
    }
  }
  if (distinct_count(u) < 2) {
    throw FitError("gaussian_decay_loglinear: need 2 positive points at distinct |t|");
  }
  const auto line = fit_linear(u, ly);
  if (!(line.slope.value < 0.0)) {
    throw FitError("gaussian_decay_loglinear: data does not decay");
  }
  return {std::exp(line.intercept.value), 1.0 / std::sqrt(-line.slope.value)};
}

DecayFit fit_gaussian_decay(std::span<const double> t, std::span<const double> y,
                            std::span<const double> sigma) {
  require_same_size(t, y, sigma);
  if (t.size() < 3) throw FitError("fit_gaussian_decay: need at least 3 points");
  if (distinct_count(t) < 2) throw FitError("fit_gaussian_decay: all storage times are equal");

  std::vector<double> init;
  try {
    const auto [a0, tau0] = gaussian_decay_loglinear(t, y);
    init = {a0, tau0};
  } catch (const FitError&) {
    const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
    init = {*std::max_element(y.begin(), y.end()), std::max(1e-6, *tmax - *tmin)};
  }
  const ModelFn model = [](double x, std::span<const double> q, std::span<double> g) {
    const double z = x / q[1];
    const double e = std::exp(-z * z);
    g[0] = e;
    g[1] = q[0] * e * 2.0 * z * z / q[1];
    return q[0] * e;
  };
  const auto res = levenberg_marquardt(model, t, y, sigma, init);
  DecayFit out;
  out.amplitude = {res.params[0], res.sigmas[0]};
  const double tau = std::abs(res.params[1]);
  out.tau_us = {tau, res.sigmas[1]};
  const double gamma = afc::linewidth_kHz(tau);
  out.linewidth_kHz = {gamma, gamma * res.sigmas[1] / tau};
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

PeakFit fit_gaussian_peak(std::span<const double> x, std::span<const double> y,
                          std::span<const double> sigma) {
  require_same_size(x, y, sigma);
  if (x.size() < 3) throw FitError("fit_gaussian_peak: need at least 3 points");
  if (distinct_count(x) < 3) throw FitError("fit_gaussian_peak: need 3 distinct abscissae");
  // Moments of the positive part give the starting point.
  double w = 0, m1 = 0, m2 = 0, amp = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::max(0.0, y[i]);
    w += v;
    m1 += v * x[i];
    amp = std::max(amp, y[i]);
  }
  if (!(w > 0.0)) throw FitError("fit_gaussian_peak: no positive signal");
  m1 /= w;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::max(0.0, y[i]);
    m2 += v * (x[i] - m1) * (x[i] - m1);
  }
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const double s0 = std::clamp(std::sqrt(m2 / w), (*xmax - *xmin) / (4.0 * static_cast<double>(x.size())),
                               *xmax - *xmin);
  const ModelFn model = [](double xv, std::span<const double> q, std::span<double> g) {
    const double d = xv - q[1];
    const double s2 = q[2] * q[2];
    const double e = std::exp(-0.5 * d * d / s2);
    g[0] = e;
    g[1] = q[0] * e * d / s2;
    g[2] = q[0] * e * d * d / (s2 * q[2]);
    return q[0] * e;
  };
  const auto res = levenberg_marquardt(model, x, y, sigma, {amp, m1, s0});
  PeakFit out;
  out.amplitude = {res.params[0], res.sigmas[0]};
  out.center = {res.params[1], res.sigmas[1]};
  out.sigma = {std::abs(res.params[2]), res.sigmas[2]};
  out.fwhm = {kSigmaToFwhm * out.sigma.value, kSigmaToFwhm * out.sigma.sigma};
  out.converged = res.converged;
  return out;
}

}  // namespace dlcz::fit
