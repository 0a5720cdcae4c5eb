#include <doctest.h>

#include <cmath>
#include <vector>

#include "dlcz/afc_memory.hpp"
#include "dlcz/fitting.hpp"

using namespace dlcz;
using doctest::Approx;

namespace {

// Coarse-to-fine grid search of the weighted squared error; shares nothing with fit_linear.
std::pair<double, double> grid_minimize_line(const std::vector<double>& x, const std::vector<double>& y,
                                             const std::vector<double>& s) {
  const auto chi2 = [&](double a, double b) {
    double c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = (y[i] - a - b * x[i]) / s[i];
      c += r * r;
    }
    return c;
  };
  double a = 0, b = 0, span = 10;
  for (int level = 0; level < 40; ++level) {
    double best = INFINITY, ba = a, bb = b;
    for (int i = -20; i <= 20; ++i) {
      for (int j = -20; j <= 20; ++j) {
        const double ca = a + span * i / 20.0;
        const double cb = b + span * j / 20.0;
        const double c = chi2(ca, cb);
        if (c < best) {
          best = c;
          ba = ca;
          bb = cb;
        }
      }
    }
    a = ba;
    b = bb;
    span /= 4.0;
  }
  return {a, b};
}

}  // namespace

TEST_SUITE("fitting") {
  TEST_CASE("exact line") {
    const std::vector<double> x{1, 2, 3}, y{2, 4, 6};
    const auto f = fit::fit_linear(x, y);
    CHECK(f.slope.value == Approx(2.0));
    CHECK(std::abs(f.intercept.value) < 1e-12);
    CHECK(f.slope.sigma == Approx(0.0));
  }

  TEST_CASE("heteroscedastic line agrees with a grid minimiser") {
    const std::vector<double> x{0.5, 1, 2, 4, 8, 16, 32};
    const std::vector<double> y{1.3, 1.1, 2.9, 4.2, 9.5, 15.1, 33.8};
    const std::vector<double> s{0.1, 0.5, 0.2, 1.0, 0.3, 2.0, 1.5};
    const auto f = fit::fit_linear(x, y, s);
    const auto [a, b] = grid_minimize_line(x, y, s);
    CHECK(std::abs(f.intercept.value - a) < 1e-6);
    CHECK(std::abs(f.slope.value - b) < 1e-6);
  }

  TEST_CASE("linear fit rejects degenerate input") {
    const std::vector<double> x{1, 1, 1}, y{1, 2, 3};
    CHECK_THROWS_AS((void)fit::fit_linear(x, y), fit::FitError);
    const std::vector<double> x2{1, 2}, y2{1, 2}, bad{1, 0};
    CHECK_THROWS_AS((void)fit::fit_linear(x2, y2, bad), fit::FitError);
  }

  TEST_CASE("pearson r") {
    const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{8, 6, 4, 2};
    CHECK(fit::pearson_r(x, y) == Approx(1.0));
    CHECK(fit::pearson_r(x, z) == Approx(-1.0));
  }

  TEST_CASE("noiseless gaussian decay is recovered exactly") {
    std::vector<double> t, y;
    for (double v : {0.0, 1.0, 2.5, 4.0, 6.0, 9.0}) {
      t.push_back(v);
      y.push_back(std::exp(-(v / 5.0) * (v / 5.0)));
    }
    const auto f = fit::fit_gaussian_decay(t, y);
    CHECK(std::abs(f.amplitude.value - 1.0) < 1e-6);
    CHECK(std::abs(f.tau_us.value - 5.0) < 1e-6);
    CHECK(f.converged);
    CHECK(f.linewidth_kHz.value == Approx(afc::linewidth_kHz(5.0)));
  }

  TEST_CASE("log-linear and iterative decay fits agree on three exact points") {
    const std::vector<double> t{2.0, 5.0, 12.0};
    std::vector<double> y;
    for (double v : t) y.push_back(0.04 * std::exp(-(v / 8.33) * (v / 8.33)));
    const auto [a0, tau0] = fit::gaussian_decay_loglinear(t, y);
    const auto f = fit::fit_gaussian_decay(t, y);
    CHECK(std::abs(tau0 - f.tau_us.value) < 1e-6);
    CHECK(std::abs(a0 - f.amplitude.value) < 1e-6);
    CHECK(std::abs(tau0 - 8.33) < 1e-6);
  }

  TEST_CASE("decay fit with starting point far off still converges") {
    const std::vector<double> t{1, 3, 5, 7, 9, 11};
    std::vector<double> y, s;
    for (double v : t) {
      y.push_back(2.0 * std::exp(-(v / 6.0) * (v / 6.0)));
      s.push_back(0.01);
    }
    const auto f = fit::fit_gaussian_decay(t, y, s);
    CHECK(f.tau_us.value == Approx(6.0).epsilon(1e-8));
    CHECK(f.tau_us.sigma > 0.0);
  }

  TEST_CASE("decay fit rejects degenerate input") {
    const std::vector<double> t{3, 3, 3}, y{1, 1, 1};
    CHECK_THROWS_AS((void)fit::fit_gaussian_decay(t, y), fit::FitError);
    const std::vector<double> t2{1, 2}, y2{1, 0.5};
    CHECK_THROWS_AS((void)fit::fit_gaussian_decay(t2, y2), fit::FitError);
  }

  TEST_CASE("gaussian peak") {
    std::vector<double> x, y;
    for (int i = -10; i <= 10; ++i) {
      const double v = 8000.0 + 100.0 * i;
      x.push_back(v);
      y.push_back(50.0 * std::exp(-0.5 * std::pow((v - 8030.0) / 400.0, 2)));
    }
    const auto p = fit::fit_gaussian_peak(x, y);
    CHECK(p.center.value == Approx(8030.0).epsilon(1e-8));
    CHECK(p.fwhm.value == Approx(400.0 * 2.0 * std::sqrt(2.0 * std::log(2.0))).epsilon(1e-8));
    CHECK(p.amplitude.value == Approx(50.0).epsilon(1e-8));
  }

  TEST_CASE("levenberg-marquardt on a straight line matches the closed form") {
    const std::vector<double> x{0, 1, 2, 3, 4}, y{1.1, 2.9, 5.2, 6.8, 9.1};
    const fit::ModelFn line = [](double xv, std::span<const double> q, std::span<double> g) {
      g[0] = 1.0;
      g[1] = xv;
      return q[0] + q[1] * xv;
    };
    const auto lm = fit::levenberg_marquardt(line, x, y, {}, {0.0, 0.0});
    const auto ls = fit::fit_linear(x, y);
    CHECK(lm.params[0] == Approx(ls.intercept.value).epsilon(1e-9));
    CHECK(lm.params[1] == Approx(ls.slope.value).epsilon(1e-9));
    CHECK(lm.sigmas[1] == Approx(ls.slope.sigma).epsilon(1e-6));
  }
}
