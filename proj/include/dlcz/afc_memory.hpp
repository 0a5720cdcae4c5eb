#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dlcz/config.hpp"

namespace dlcz::afc {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// tau_1/e * Gamma_FWHM for a Gaussian spin-inhomogeneous line: sqrt(2 ln 2) / pi.
/// Gives tau in microseconds for Gamma in MHz.
inline constexpr double kGaussianDecayConstant = 0.3747812502585552;

/// Write-in efficiency of a comb with peak optical depth d and finesse F: 1 - exp(-d/F).
[[nodiscard]] double eta_write(double d, double F);

/// Passive background loss exp(-d0).
[[nodiscard]] double eta_loss(double d0);

/// Rephasing efficiency implied by a measured AFC efficiency,
/// eta_AFC / (eta_write * eta_loss).
[[nodiscard]] double infer_eta_rephasing(double eta_AFC, double d, double F, double d0);
[[nodiscard]] double infer_eta_rephasing(const AFCParams& params);

/// Ideal square-comb dephasing factor sinc^2(pi / F). Diagnostic only.
[[nodiscard]] double square_comb_dephasing(double F);

/// 1/e time of the Gaussian spin-wave decay, in microseconds.
[[nodiscard]] double decay_time_us(double spin_linewidth_kHz,
                                   double constant = kGaussianDecayConstant);

/// Inverse of decay_time_us.
[[nodiscard]] double linewidth_kHz(double decay_time_us, double constant = kGaussianDecayConstant);

/// Survival of the spin-wave coherence after t_S: exp(-(t_S / tau)^2).
[[nodiscard]] double eta_decoh(double t_S_us, double spin_linewidth_kHz,
                               double constant = kGaussianDecayConstant);

/// Five-factor product eta_RP * eta_reph * eta_decoh * beta_BR * beta_G.
[[nodiscard]] double readout_budget(const EfficiencyBudget& b, double eta_decoh);

/// Clamps a composed efficiency into [0,1]; `clamped` is set when it had to.
[[nodiscard]] double clamp_efficiency(double value, bool* clamped = nullptr);

struct BudgetRow {
  std::string symbol;
  std::string description;
  double value = 0.0;
};

struct BudgetTable {
  std::vector<BudgetRow> rows;
  double product = 0.0;
  double mean_storage_time_us = 0.0;
  std::vector<std::string> warnings;
};

/// Budget for a config: eta_decoh evaluated at the mean storage time of a
/// heralded excitation (read delay minus the centre of the Stokes gate).
[[nodiscard]] BudgetTable budget_table(const ExperimentConfig& config);

/// Budget with an explicitly supplied eta_decoh.
[[nodiscard]] BudgetTable budget_table(const EfficiencyBudget& b, double eta_decoh);

/// Human-readable table, one factor per line, ending with the product both
/// as a value rounded to three decimals and as a percentage.
[[nodiscard]] std::string format_budget(const BudgetTable& table);

}  // namespace dlcz::afc
