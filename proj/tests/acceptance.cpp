// One PASS/FAIL line per primary acceptance criterion.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <string>

#include "dlcz/afc_memory.hpp"
#include "dlcz/analysis.hpp"
#include "dlcz/presets.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace dlcz;

namespace {

// Tolerances.
constexpr double kBudgetTarget = 0.042;
constexpr double kBudgetTol = 1e-6;
constexpr double kRephasingTarget = 0.359;
constexpr double kRephasingTol = 0.005;
constexpr double kRTarget = 43.7;
constexpr double kRTol = 0.1;
constexpr double kTauLo = 7.5, kTauHi = 9.1;
constexpr double kGammaLo = 43.0, kGammaHi = 47.0;
constexpr double kG2Lo = 17.0, kG2Hi = 25.0;
constexpr double kAutoLo = 1.3, kAutoHi = 2.3;
constexpr double kRSigmas = 3.0;
constexpr double kPearsonMin = 0.99;
constexpr double kSlopeSigmas = 2.0;
constexpr double kOracleSigmas = 3.0;
constexpr double kBinNs = 400.0;
constexpr double kFwhmTarget = 940.0, kFwhmTol = 150.0;
constexpr double kBetaGTarget = 0.76, kBetaGTol = 0.05;
constexpr std::uint64_t kDeterminismTrials = 2000000;

int failures = 0;

void report(bool pass, std::string_view name, const std::string& detail, double seconds) {
  if (!pass) ++failures;
  fmt::print("{} {}: {} [{:.1f} s]\n", pass ? "PASS" : "FAIL", name, detail, seconds);
  std::fflush(stdout);
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string run_command(const std::string& cmd) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  pclose(p);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

const Measurement& value(const PresetResult& r, const std::string& key) { return r.values.at(key); }

PresetResult preset(const std::string& name, const fs::path& dir) {
  PresetOptions o;
  o.out_dir = dir;
  return run_preset(name, o);
}

void budget_identity(const std::string& cli) {
  Stopwatch sw;
  const auto out = run_command(cli + " budget --factors 0.40,0.36,0.64,0.60,0.76");
  std::smatch m;
  const std::regex printed(R"(eta_RO_exp = ([0-9.eE+-]+)\n)");
  const std::regex exact(R"(eta_RO_exp_exact = ([0-9.eE+-]+))");
  if (!std::regex_search(out, m, printed)) {
    report(false, "budget identity", "no 'eta_RO_exp = <value>' line in budget output", sw.seconds());
    return;
  }
  const double v = std::stod(m[1]);
  std::string exact_note;
  if (std::regex_search(out, m, exact)) exact_note = fmt::format("; unrounded product {}", m[1].str());
  report(std::abs(v - kBudgetTarget) <= kBudgetTol, "budget identity",
         fmt::format("printed eta_RO_exp = {} vs {} +/- {:g}{}", v, kBudgetTarget, kBudgetTol, exact_note),
         sw.seconds());
}

void afc_decomposition() {
  Stopwatch sw;
  const double v = afc::infer_eta_rephasing(0.17, 5.4, 4.4, 0.4);
  report(std::abs(v - kRephasingTarget) <= kRephasingTol, "AFC decomposition",
         fmt::format("infer_eta_rephasing(0.17, 5.4, 4.4, 0.4) = {:.5f} vs {} +/- {}", v, kRephasingTarget,
                     kRephasingTol),
         sw.seconds());
}

void cs_arithmetic() {
  Stopwatch sw;
  const double r = cauchy_schwarz_R(11.9, 1.85, 1.75);
  report(std::abs(r - kRTarget) <= kRTol, "Cauchy-Schwarz arithmetic",
         fmt::format("R(11.9, 1.85, 1.75) = {:.4f} vs {} +/- {}", r, kRTarget, kRTol), sw.seconds());
}

void decay_round_trip(const fs::path& dir) {
  Stopwatch sw;
  const auto r = preset("fig4a", dir);
  const BandCheck* tau = nullptr;
  const BandCheck* gamma = nullptr;
  for (const auto& c : r.checks) {
    if (c.name.find("decay time") != std::string::npos) tau = &c;
    if (c.name.find("linewidth") != std::string::npos) gamma = &c;
  }
  const bool have = tau && gamma;
  const bool pass = have && r.trials_per_point >= 1000000 && tau->value.value >= kTauLo &&
                    tau->value.value <= kTauHi && gamma->value.value >= kGammaLo && gamma->value.value <= kGammaHi;
  report(pass, "decay round-trip",
         have ? fmt::format("tau = {:.3f} +/- {:.3f} us in [{}, {}], linewidth = {:.2f} +/- {:.2f} kHz in [{}, {}], "
                            "{:.0e} trials/point",
                            tau->value.value, tau->value.sigma, kTauLo, kTauHi, gamma->value.value,
                            gamma->value.sigma, kGammaLo, kGammaHi, static_cast<double>(r.trials_per_point))
              : "fit missing",
         sw.seconds());
}

void non_classicality_and_timing(const fs::path& dir) {
  Stopwatch sw;
  const auto r = preset("fig3b", dir);
  const double t = sw.seconds();
  const auto& g = value(r, "g2_cross");
  const auto& gss = value(r, "g2_ss");
  const auto& gaa = value(r, "g2_asas");
  const bool has_r = r.values.count("R") != 0;
  const double z = has_r ? value(r, "R_significance").value : 0.0;
  const bool pass = g.value >= kG2Lo && g.value <= kG2Hi && gss.value >= kAutoLo && gss.value <= kAutoHi &&
                    gaa.value >= kAutoLo && gaa.value <= kAutoHi && has_r && z >= kRSigmas;
  report(pass, "non-classicality",
         fmt::format("g2_s,as = {:.2f} +/- {:.2f} in [{}, {}]; g2_ss = {:.3f} +/- {:.3f}, g2_as,as = {:.3f} +/- {:.3f} "
                     "in [{}, {}]; R = {} ({:.1f} sigma above 1, need {})",
                     g.value, g.sigma, kG2Lo, kG2Hi, gss.value, gss.sigma, gaa.value, gaa.sigma, kAutoLo, kAutoHi,
                     has_r ? fmt::format("{:.1f} +/- {:.1f}", value(r, "R").value, value(r, "R").sigma) : "undefined",
                     z, kRSigmas),
         t);

  if (!r.values.count("peak_centroid_ns")) {
    report(false, "timing law", "coincidence peak fit failed", t);
    return;
  }
  const auto& c = value(r, "peak_centroid_ns");
  const auto& w = value(r, "peak_fwhm_ns");
  const auto& b = value(r, "beta_G");
  const double tau = preset_config("fig3b").afc_delay_us * 1e3;
  const bool ok = std::abs(c.value - tau) <= kBinNs && std::abs(w.value - kFwhmTarget) <= kFwhmTol &&
                  std::abs(b.value - kBetaGTarget) <= kBetaGTol;
  report(ok, "timing law",
         fmt::format("centroid = {:.1f} ns vs {} +/- {}; FWHM = {:.1f} +/- {:.1f} ns vs {} +/- {}; "
                     "beta_G = {:.4f} +/- {:.4f} vs {} +/- {}",
                     c.value, tau, kBinNs, w.value, w.sigma, kFwhmTarget, kFwhmTol, b.value, b.sigma,
                     kBetaGTarget, kBetaGTol),
         t);
}

void multimode(const fs::path& dir) {
  Stopwatch sw;
  const auto r = preset("fig4c", dir);
  const auto nm = static_cast<long>(value(r, "n_modes").value);
  const double pr = value(r, "pearson_r").value;
  const auto& s = value(r, "g2_slope_per_us");
  const double z = s.deviations_from(0.0);
  report(nm == 11 && pr > kPearsonMin && z <= kSlopeSigmas, "multimode tradeoff",
         fmt::format("N_m = {} (need 11); Pearson r = {:.5f} > {}; g2 slope = {:.4f} +/- {:.4f} per us "
                     "({:.2f} sigma, need <= {})",
                     nm, pr, kPearsonMin, s.value, s.sigma, z, kSlopeSigmas),
         sw.seconds());
}

void oracle_equivalence() {
  Stopwatch sw;
  double worst = 0.0;
  std::string worst_name;
  std::size_t n = 0;
  bool ok = true;
  for (double pbar : {0.01, 0.05, 0.2}) {
    for (const auto& c : selftest::oracle_comparison({pbar, 0.5, 1}, 2000000, 1)) {
      ++n;
      const double z = c.z();
      ok = ok && z <= kOracleSigmas;
      if (z > worst) {
        worst = z;
        worst_name = fmt::format("{} at p={}", c.quantity, pbar);
      }
    }
  }
  double worst_r = -INFINITY;
  const auto classical = selftest::classical_R(selftest::kClassicalPowers, 20000000, 1);
  std::string r_list;
  for (const auto& p : classical) {
    const double z = (p.R.value - 1.0) / p.R.sigma;
    ok = ok && p.R.value <= 1.0 + kOracleSigmas * p.R.sigma;
    worst_r = std::max(worst_r, z);
    r_list += fmt::format("{}{:.3f}", r_list.empty() ? "" : ", ", p.R.value);
  }
  report(ok && classical.size() == 5, "oracle equivalence",
         fmt::format("{} oracle comparisons, worst {:.2f} sigma ({}); classical R = [{}], max (R-1)/sigma = {:.2f} "
                     "(need <= {})",
                     n, worst, worst_name, r_list, worst_r, kOracleSigmas),
         sw.seconds());
}

void determinism(const fs::path& dir) {
  Stopwatch sw;
  std::size_t compared = 0;
  std::string mismatch;
  for (const auto& name : preset_names()) {
    for (const char* run : {"a", "b"}) {
      PresetOptions o;
      o.out_dir = dir / name / run;
      o.trials = kDeterminismTrials;
      o.write_events = true;
      o.threads = run[0] == 'a' ? 1 : 2;
      (void)run_preset(name, o);
    }
    for (const auto& entry : fs::directory_iterator(dir / name / "a")) {
      const auto other = dir / name / "b" / entry.path().filename();
      ++compared;
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
        mismatch = entry.path().filename().string();
      }
    }
  }
  report(mismatch.empty() && compared > 0, "determinism",
         mismatch.empty() ? fmt::format("{} files byte-identical across two runs of every preset ({} trials, "
                                        "1 vs 2 threads)",
                                        compared, kDeterminismTrials)
                          : fmt::format("{} differs", mismatch),
         sw.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    fmt::print(stderr, "usage: acceptance <path to dlczsim> [work dir]\n");
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path dir = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "dlcz_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const auto guarded = [](std::string_view name, const auto& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, fmt::format("threw: {}", e.what()), 0.0);
    }
  };
  guarded("budget identity", [&] { budget_identity(cli); });
  guarded("AFC decomposition", afc_decomposition);
  guarded("Cauchy-Schwarz arithmetic", cs_arithmetic);
  guarded("decay round-trip", [&] { decay_round_trip(dir / "fig4a"); });
  guarded("non-classicality / timing law", [&] { non_classicality_and_timing(dir / "fig3b"); });
  guarded("multimode tradeoff", [&] { multimode(dir / "fig4c"); });
  guarded("oracle equivalence", oracle_equivalence);
  guarded("determinism", [&] { determinism(dir / "determinism"); });

  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
