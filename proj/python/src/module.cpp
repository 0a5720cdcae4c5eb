#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "dlcz/afc_memory.hpp"
#include "dlcz/analysis.hpp"
#include "dlcz/config.hpp"
#include "dlcz/emission.hpp"
#include "dlcz/pipeline.hpp"
#include "dlcz/presets.hpp"
#include "dlcz/version.hpp"

namespace py = pybind11;
using namespace dlcz;

namespace {

ExperimentConfig config_from(const std::optional<std::string>& text, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = text ? parse_config(*text) : calibrated_config();
  if (seed) cfg.rng_seed = *seed;
  require_valid(cfg);
  return cfg;
}

py::dict measurement(const Measurement& m) {
  py::dict d;
  d["value"] = m.value;
  d["sigma"] = m.sigma;
  return d;
}

py::dict events_to_arrays(const std::vector<DetectionEvent>& ev) {
  const auto n = static_cast<py::ssize_t>(ev.size());
  py::array_t<std::uint64_t> trial(n);
  py::array_t<std::uint8_t> channel(n), detector(n);
  py::array_t<std::uint32_t> t(n);
  auto tr = trial.mutable_unchecked<1>();
  auto ch = channel.mutable_unchecked<1>();
  auto de = detector.mutable_unchecked<1>();
  auto tt = t.mutable_unchecked<1>();
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& e = ev[static_cast<std::size_t>(i)];
    tr(i) = e.trial_id;
    ch(i) = static_cast<std::uint8_t>(e.channel);
    de(i) = e.detector_id;
    tt(i) = e.t_ns;
  }
  py::dict d;
  d["trial_id"] = trial;
  d["channel"] = channel;
  d["detector_id"] = detector;
  d["t_ns"] = t;
  return d;
}

py::dict report_to_dict(const CorrelationReport& r) {
  py::dict d;
  d["n_trials"] = r.n_trials;
  d["center_ns"] = r.center_ns;
  d["window_ns"] = r.window_ns;
  d["p_s"] = r.p_s;
  d["p_as"] = r.p_as;
  d["p_coinc"] = r.p_coinc;
  d["p_coinc_accidental"] = r.p_coinc_accidental;
  d["g2_cross"] = measurement(r.g2_cross);
  d["eta_RO"] = measurement(r.eta_RO);
  if (r.eta_RO_crystal) d["eta_RO_crystal"] = measurement(*r.eta_RO_crystal);
  if (r.g2_ss) d["g2_ss"] = measurement(*r.g2_ss);
  if (r.g2_asas) d["g2_asas"] = measurement(*r.g2_asas);
  if (r.R) d["R"] = measurement(*r.R);
  if (r.peak) {
    d["peak_centroid_ns"] = measurement(r.peak->centroid_ns);
    d["peak_fwhm_ns"] = measurement(r.peak->fwhm_ns);
    d["beta_G"] = measurement(r.peak->window_fraction);
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_dlczsim, m) {
  m.doc() = "DLCZ photon-pair Monte-Carlo simulator and coincidence analysis";
  m.attr("__version__") = std::string(kToolVersion);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<AnalysisError>(m, "AnalysisError", PyExc_RuntimeError);
  py::register_exception<afc::DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("default_config", [] { return serialize_config(calibrated_config()); },
        "Default configuration with the calibrated noise floor as flat key = value text.");
  m.def("validate", [](const std::string& text) { return validate(parse_config(text)); }, py::arg("config"));

  m.def("eta_write", &afc::eta_write, py::arg("d"), py::arg("F"));
  m.def("eta_loss", &afc::eta_loss, py::arg("d0"));
  m.def("infer_eta_rephasing", py::overload_cast<double, double, double, double>(&afc::infer_eta_rephasing),
        py::arg("eta_AFC"), py::arg("d"), py::arg("F"), py::arg("d0"));
  m.def("eta_decoh", &afc::eta_decoh, py::arg("t_S_us"), py::arg("spin_linewidth_kHz"),
        py::arg("constant") = afc::kGaussianDecayConstant);
  m.def("decay_time_us", &afc::decay_time_us, py::arg("spin_linewidth_kHz"),
        py::arg("constant") = afc::kGaussianDecayConstant);
  m.def("linewidth_kHz", &afc::linewidth_kHz, py::arg("decay_time_us"),
        py::arg("constant") = afc::kGaussianDecayConstant);
  m.def(
      "readout_budget",
      [](double eta_RP, double eta_reph, double eta_decoh, double beta_BR, double beta_G) {
        return afc::readout_budget({eta_RP, eta_reph, beta_BR, beta_G}, eta_decoh);
      },
      py::arg("eta_RP"), py::arg("eta_reph"), py::arg("eta_decoh"), py::arg("beta_BR"), py::arg("beta_G"));
  m.def("cauchy_schwarz_R", py::overload_cast<double, double, double>(&cauchy_schwarz_R), py::arg("g2_cross"),
        py::arg("g2_ss"), py::arg("g2_asas"));

  m.def(
      "simulate",
      [](std::uint64_t trials, std::optional<std::string> config, std::optional<std::uint64_t> seed,
         unsigned threads) {
        const auto cfg = config_from(config, seed);
        RunOptions ro;
        ro.threads = threads;
        std::vector<DetectionEvent> ev;
        {
          py::gil_scoped_release release;
          ev = run_trials(cfg, trials, ro);
        }
        return events_to_arrays(ev);
      },
      py::arg("trials"), py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("threads") = 1,
      "Event stream as a dict of numpy arrays (trial_id, channel, detector_id, t_ns).");

  m.def(
      "simulate_and_analyze",
      [](std::uint64_t trials, std::optional<std::string> config, std::optional<std::uint64_t> seed,
         std::int64_t bin_ns, std::int64_t window_ns, std::optional<std::int64_t> center_ns, bool include_auto,
         unsigned threads) {
        const auto cfg = config_from(config, seed);
        ReportOptions ro;
        ro.bin_ns = bin_ns;
        ro.window_ns = window_ns;
        ro.center_ns = center_ns;
        ro.include_auto = include_auto;
        ro.antistokes_transmission = cfg.antistokes_transmission;
        ro.trials_per_hour = cfg.trials_per_hour();
        CorrelationReport r;
        {
          py::gil_scoped_release release;
          PipelineOptions po;
          po.threads = threads;
          r = analyze(simulate_and_accumulate(EmissionSimulator(cfg), AnalysisSpec::from_config(cfg), trials, po),
                      ro);
        }
        return report_to_dict(r);
      },
      py::arg("trials"), py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("bin_ns") = 400,
      py::arg("window_ns") = 1000, py::arg("center_ns") = py::none(), py::arg("include_auto") = false,
      py::arg("threads") = 1);

  m.def("preset_names", &preset_names);
  m.def(
      "run_preset",
      [](const std::string& name, const std::string& out_dir, std::optional<std::uint64_t> trials,
         std::optional<std::uint64_t> seed, unsigned threads) {
        PresetOptions o;
        o.out_dir = out_dir;
        o.trials = trials;
        o.seed = seed;
        o.threads = threads;
        PresetResult r;
        {
          py::gil_scoped_release release;
          r = run_preset(name, o);
        }
        py::dict values;
        for (const auto& [k, v] : r.values) values[py::str(k)] = measurement(v);
        py::list checks;
        for (const auto& c : r.checks) {
          py::dict d;
          d["name"] = c.name;
          d["value"] = measurement(c.value);
          d["band"] = c.band;
          d["pass"] = c.pass;
          checks.append(d);
        }
        py::dict d;
        d["preset"] = r.preset;
        d["passed"] = r.passed();
        d["values"] = values;
        d["checks"] = checks;
        d["summary"] = r.summary();
        return d;
      },
      py::arg("name"), py::arg("out_dir"), py::arg("trials") = py::none(), py::arg("seed") = py::none(),
      py::arg("threads") = 1);
}
