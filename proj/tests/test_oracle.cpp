#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dlcz_oracle/photon_number_oracle.hpp"
#include "selftest.hpp"

using doctest::Approx;
using dlcz_oracle::PairMode;

TEST_SUITE("oracle") {
  TEST_CASE("thermal distribution") {
    const auto p = dlcz_oracle::thermal_distribution(0.05, 20);
    CHECK(p.size() == 21);
    CHECK(p[0] == Approx(1.0 / 1.05));
    CHECK(p[1] / p[0] == Approx(0.05 / 1.05));
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("lossless single mode: closed forms") {
    for (double m : {0.01, 0.05, 0.2}) {
      const auto s = dlcz_oracle::click_statistics({PairMode{m, 1.0, 1.0}});
      CHECK(s.p_s == Approx(m / (1 + m)));
      CHECK(s.p_sas == Approx(s.p_s));
      CHECK(s.g2_cross() == Approx(1.0 + 1.0 / m).epsilon(1e-9));
      CHECK(s.truncated_mass < 1e-12);
      // Click-detector thermal autocorrelation tends to 2 at low occupation.
      CHECK(s.g2_ss() <= 2.0);
      CHECK(s.g2_ss() > 2.0 - 4.0 * m);
    }
  }

  TEST_CASE("retrieval efficiency and two modes") {
    const auto s = dlcz_oracle::click_statistics({PairMode{0.05, 1.0, 0.5}});
    CHECK(s.eta_RO() == Approx(0.4878).epsilon(1e-3));
    const auto two = dlcz_oracle::click_statistics({PairMode{0.05, 1.0, 1.0}, PairMode{0.05, 1.0, 1.0}});
    CHECK(two.p_s == Approx(1.0 - std::pow(1.0 / 1.05, 2)));
    CHECK(two.g2_ss() < 2.0);
    CHECK_THROWS((void)dlcz_oracle::click_statistics({PairMode{}, PairMode{}, PairMode{}}));
  }

  TEST_CASE("Monte-Carlo agrees with the oracle for two modes") {
    for (const auto& c : dlcz::selftest::oracle_comparison({0.1, 0.7, 2}, 1000000, 11)) {
      INFO(c.quantity, " ", c.measured.value, " +/- ", c.measured.sigma, " vs ", c.exact);
      CHECK(c.z() <= 3.0);
    }
  }
}
