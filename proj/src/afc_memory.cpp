#include "dlcz/afc_memory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dlcz::afc {

double eta_write(double d, double F) {
  if (d < 0.0) throw DomainError(fmt::format("eta_write: optical depth d = {} < 0", d));
  if (F < 1.0) throw DomainError(fmt::format("eta_write: finesse F = {} < 1", F));
  return -std::expm1(-d / F);
}

double eta_loss(double d0) {
  if (d0 < 0.0) throw DomainError(fmt::format("eta_loss: background d0 = {} < 0", d0));
  return std::exp(-d0);
}

double infer_eta_rephasing(double eta_AFC, double d, double F, double d0) {
  if (eta_AFC < 0.0 || eta_AFC > 1.0) {
    throw DomainError(fmt::format("infer_eta_rephasing: eta_AFC = {} out of [0,1]", eta_AFC));
  }
  const double denom = eta_write(d, F) * eta_loss(d0);
  if (!(denom > 0.0)) {
    throw DomainError("infer_eta_rephasing: eta_write * eta_loss is zero (d = 0 or d0 too large)");
  }
  return eta_AFC / denom;
}

double infer_eta_rephasing(const AFCParams& p) {
  if (!p.eta_AFC_measured) throw DomainError("infer_eta_rephasing: no measured eta_AFC");
  return infer_eta_rephasing(*p.eta_AFC_measured, p.d, p.F, p.d0);
}

double square_comb_dephasing(double F) {
  if (F < 1.0) throw DomainError(fmt::format("square_comb_dephasing: F = {} < 1", F));
  const double x = std::numbers::pi / F;
  const double s = std::sin(x) / x;
  return s * s;
}

double decay_time_us(double spin_linewidth_kHz, double constant) {
  if (!(spin_linewidth_kHz > 0.0)) {
    throw DomainError(fmt::format("decay_time_us: linewidth {} kHz must be > 0", spin_linewidth_kHz));
  }
  return constant / (spin_linewidth_kHz * 1e-3);
}

double linewidth_kHz(double decay_time_us, double constant) {
  if (!(decay_time_us > 0.0)) {
    throw DomainError(fmt::format("linewidth_kHz: decay time {} us must be > 0", decay_time_us));
  }
  return constant / decay_time_us * 1e3;
}

double eta_decoh(double t_S_us, double spin_linewidth_kHz, double constant) {
  if (t_S_us < 0.0) throw DomainError(fmt::format("eta_decoh: negative storage time {}", t_S_us));
  const double x = t_S_us / decay_time_us(spin_linewidth_kHz, constant);
  return std::exp(-x * x);
}

double readout_budget(const EfficiencyBudget& b, double eta_decoh) {
  return b.eta_RP * b.eta_reph * eta_decoh * b.beta_BR * b.beta_G;
}

double clamp_efficiency(double value, bool* clamped) {
  const double out = std::clamp(value, 0.0, 1.0);
  if (clamped) *clamped = out != value;
  return out;
}

BudgetTable budget_table(const EfficiencyBudget& b, double eta_decoh_value) {
  BudgetTable t;
  t.rows = {
      {"eta_RP", "read-pulse transfer efficiency", b.eta_RP},
      {"eta_reph", "AFC rephasing efficiency", b.eta_reph},
      {"eta_decoh", "spin-state decoherence (survival)", eta_decoh_value},
      {"beta_BR", "branching ratio", b.beta_BR},
      {"beta_G", "fraction of coincidence peak in window", b.beta_G},
  };
  for (const auto& row : t.rows) {
    if (row.value < 0.0 || row.value > 1.0) {
      t.warnings.push_back(fmt::format("{} = {} outside [0,1]", row.symbol, row.value));
    }
  }
  bool clamped = false;
  t.product = clamp_efficiency(readout_budget(b, eta_decoh_value), &clamped);
  if (clamped) t.warnings.emplace_back("product clamped to [0,1]");
  return t;
}

BudgetTable budget_table(const ExperimentConfig& config) {
  const double mean_ts =
      config.read_delay_us - (config.stokes_gate_offset_us + 0.5 * config.stokes_window_us);
  auto t = budget_table(config.budget(), eta_decoh(mean_ts, config.spin_linewidth_kHz));
  t.mean_storage_time_us = mean_ts;
  return t;
}

std::string format_budget(const BudgetTable& table) {
  std::string out;
  if (table.mean_storage_time_us > 0.0) {
    out += fmt::format("mean spin storage time t_S = {:.3f} us\n", table.mean_storage_time_us);
  }
  for (const auto& row : table.rows) {
    out += fmt::format("{:<10} = {:>8.4f}   {}\n", row.symbol, row.value, row.description);
  }
  std::string expr;
  for (const auto& row : table.rows) {
    if (!expr.empty()) expr += " * ";
    expr += fmt::format("{:.0f}%", row.value * 100.0);
  }
  out += fmt::format("eta_RO_exp = {} = {:.1f}%\n", expr, table.product * 100.0);
  out += fmt::format("eta_RO_exp = {:.3f}\n", table.product);
  out += fmt::format("eta_RO_exp_exact = {:.10g}\n", table.product);
  for (const auto& w : table.warnings) out += fmt::format("warning: {}\n", w);
  return out;
}

}  // namespace dlcz::afc
