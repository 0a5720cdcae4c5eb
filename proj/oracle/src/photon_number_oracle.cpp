#include "dlcz_oracle/photon_number_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace dlcz_oracle {

namespace {

double binomial(std::size_t n, std::size_t k, double p) {
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c * std::pow(p, static_cast<double>(k)) * std::pow(1.0 - p, static_cast<double>(n - k));
}

// Per channel: probabilities that detector 0 / detector 1 receive nothing,
// given that k photons were detected and split 50/50.
struct SplitOutcome {
  double none = 0.0;    // k = 0
  double only0 = 0.0;
  double only1 = 0.0;
  double both = 0.0;
};

SplitOutcome split(std::size_t k) {
  SplitOutcome s;
  if (k == 0) {
    s.none = 1.0;
    return s;
  }
  for (std::size_t j = 0; j <= k; ++j) {
    const double p = binomial(k, j, 0.5);  // j photons to detector 0
    if (j == k) s.only0 += p;
    else if (j == 0) s.only1 += p;
    else s.both += p;
  }
  return s;
}

// Joint distribution over (Stokes detected count, anti-Stokes detected count)
// for one mode, summed over the pair number.
std::vector<std::vector<double>> mode_table(const PairMode& m, std::size_t n_max, double& kept) {
  const auto pn = thermal_distribution(m.mean_pairs, n_max);
  std::vector<std::vector<double>> t(n_max + 1, std::vector<double>(n_max + 1, 0.0));
  kept = 0.0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    kept += pn[n];
    for (std::size_t ks = 0; ks <= n; ++ks) {
      const double ps = binomial(n, ks, m.stokes_detect);
      for (std::size_t ka = 0; ka <= n; ++ka) {
        t[ks][ka] += pn[n] * ps * binomial(n, ka, m.antistokes_detect);
      }
    }
  }
  return t;
}

}  // namespace

std::vector<double> thermal_distribution(double mean, std::size_t n_max) {
  if (mean < 0.0) throw std::invalid_argument("thermal_distribution: negative mean");
  std::vector<double> p(n_max + 1);
  const double r = mean / (1.0 + mean);
  for (std::size_t n = 0; n <= n_max; ++n) p[n] = std::pow(r, static_cast<double>(n)) / (1.0 + mean);
  return p;
}

ClickStatistics click_statistics(const std::vector<PairMode>& modes, std::size_t n_max) {
  if (modes.empty() || modes.size() > 2) {
    throw std::invalid_argument("click_statistics: supports 1 or 2 modes");
  }
  std::vector<std::vector<std::vector<double>>> tables;
  double kept_total = 1.0;
  for (const auto& m : modes) {
    double kept = 0.0;
    tables.push_back(mode_table(m, n_max, kept));
    kept_total *= kept;
  }
  // Combine modes: total detected counts per channel.
  const std::size_t kmax = n_max * modes.size();
  std::vector<std::vector<double>> joint(kmax + 1, std::vector<double>(kmax + 1, 0.0));
  if (tables.size() == 1) {
    for (std::size_t a = 0; a <= n_max; ++a)
      for (std::size_t b = 0; b <= n_max; ++b) joint[a][b] = tables[0][a][b];
  } else {
    for (std::size_t a1 = 0; a1 <= n_max; ++a1)
      for (std::size_t b1 = 0; b1 <= n_max; ++b1)
        for (std::size_t a2 = 0; a2 <= n_max; ++a2)
          for (std::size_t b2 = 0; b2 <= n_max; ++b2)
            joint[a1 + a2][b1 + b2] += tables[0][a1][b1] * tables[1][a2][b2];
  }

  ClickStatistics s;
  s.truncated_mass = 1.0 - kept_total;
  for (std::size_t ks = 0; ks <= kmax; ++ks) {
    const SplitOutcome so = split(ks);
    for (std::size_t ka = 0; ka <= kmax; ++ka) {
      const double p = joint[ks][ka];
      if (p == 0.0) continue;
      const SplitOutcome ao = split(ka);
      if (ks > 0) s.p_s += p;
      if (ka > 0) s.p_as += p;
      if (ks > 0 && ka > 0) s.p_sas += p;
      s.p_s_d0 += p * (so.only0 + so.both);
      s.p_s_d1 += p * (so.only1 + so.both);
      s.p_s_d0d1 += p * so.both;
      s.p_as_d0 += p * (ao.only0 + ao.both);
      s.p_as_d1 += p * (ao.only1 + ao.both);
      s.p_as_d0d1 += p * ao.both;
    }
  }
  return s;
}

}  // namespace dlcz_oracle
