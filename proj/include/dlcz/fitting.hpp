#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dlcz/measurement.hpp"

namespace dlcz::fit {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LinearFit {
  Measurement slope;
  Measurement intercept;
  double chi2 = 0.0;  ///< weighted when sigmas are given, else the residual sum of squares
};

/// Least-squares straight line. With empty `sigma` the fit is ordinary least
/// squares and parameter errors come from the residual scatter; otherwise it
/// is weighted by 1/sigma^2 and the errors are absolute.
[[nodiscard]] LinearFit fit_linear(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> sigma = {});

/// Pearson correlation coefficient.
[[nodiscard]] double pearson_r(std::span<const double> x, std::span<const double> y);

struct LevenbergMarquardtOptions {
  int max_iterations = 200;
  double relative_step = 1e-9;
  double initial_lambda = 1e-3;
};

struct LevenbergMarquardtResult {
  std::vector<double> params;
  std::vector<double> sigmas;  ///< sqrt of the covariance diagonal
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Model value and analytic gradient w.r.t. the parameters at one abscissa.
using ModelFn = std::function<double(double x, std::span<const double> params, std::span<double> grad)>;

/// Damped least squares with analytic Jacobian. Parameter errors are absolute
/// when sigmas are given, otherwise scaled by chi2 / (n - p).
[[nodiscard]] LevenbergMarquardtResult levenberg_marquardt(
    const ModelFn& model, std::span<const double> x, std::span<const double> y,
    std::span<const double> sigma, std::vector<double> initial,
    const LevenbergMarquardtOptions& options = {});

struct DecayFit {
  Measurement amplitude;
  Measurement tau_us;         ///< 1/e time of A exp(-(t/tau)^2)
  Measurement linewidth_kHz;  ///< implied spin inhomogeneous linewidth (FWHM)
  int iterations = 0;
  bool converged = false;
};

/// Closed-form fit of ln y = ln A - t^2 / tau^2. Requires y > 0.
/// Returns {A, tau}.
[[nodiscard]] std::pair<double, double> gaussian_decay_loglinear(std::span<const double> t,
                                                                 std::span<const double> y);

/// Fits A exp(-(t/tau)^2), initialised from the log-linear solution.
[[nodiscard]] DecayFit fit_gaussian_decay(std::span<const double> t, std::span<const double> y,
                                          std::span<const double> sigma = {});

struct PeakFit {
  Measurement amplitude;
  Measurement center;
  Measurement sigma;
  Measurement fwhm;
  bool converged = false;
};

/// Fits A exp(-(x - mu)^2 / (2 s^2)) with no baseline.
[[nodiscard]] PeakFit fit_gaussian_peak(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> sigma = {});

}  // namespace dlcz::fit
