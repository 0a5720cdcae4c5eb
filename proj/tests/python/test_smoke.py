import math

import numpy as np
import pytest

import dlczsim


def test_afc_numbers():
    assert dlczsim.eta_write(5.4, 4.4) == pytest.approx(0.707, abs=5e-4)
    assert dlczsim.eta_loss(0.4) == pytest.approx(0.670, abs=5e-4)
    assert dlczsim.infer_eta_rephasing(0.17, 5.4, 4.4, 0.4) == pytest.approx(0.359, abs=5e-3)
    assert dlczsim.decay_time_us(45.0) == pytest.approx(8.33, abs=0.01)
    assert dlczsim.readout_budget(0.40, 0.36, 0.64, 0.60, 0.76) == pytest.approx(0.042, abs=5e-4)
    assert dlczsim.cauchy_schwarz_R(11.9, 1.85, 1.75) == pytest.approx(43.74, abs=0.01)


def test_domain_errors_become_python_exceptions():
    with pytest.raises(ValueError):
        dlczsim.eta_loss(-1.0)
    with pytest.raises(ValueError):
        dlczsim.simulate(10, config="branching_ratio = 1.2\n")
    assert dlczsim.validate("branching_ratio = 1.2\n") == ["branching_ratio out of [0,1]"]


def test_simulate_is_deterministic_and_sorted():
    a = dlczsim.simulate(20000, seed=3)
    b = dlczsim.simulate(20000, seed=3, threads=2)
    for key in ("trial_id", "channel", "detector_id", "t_ns"):
        assert np.array_equal(a[key], b[key])
    assert len(a["trial_id"]) > 0
    order = np.lexsort((a["t_ns"], a["trial_id"]))
    assert np.array_equal(order, np.arange(len(order)))
    assert set(np.unique(a["channel"])) <= {0, 1}


def test_config_text_round_trip():
    text = dlczsim.default_config()
    assert "write_power_uW" in text
    assert dlczsim.validate(text) == []


def test_simulate_and_analyze():
    r = dlczsim.simulate_and_analyze(2_000_000, seed=1)
    assert r["n_trials"] == 2_000_000
    assert abs(r["center_ns"] - 8000) <= 400
    assert r["g2_cross"]["value"] > 2.0
    assert math.isfinite(r["g2_cross"]["sigma"])
    assert "R" not in r


def test_run_preset(tmp_path):
    r = dlczsim.run_preset("fig4c", str(tmp_path), trials=200_000)
    assert r["values"]["n_modes"]["value"] == 11
    assert (tmp_path / "fig4c_multimode.csv").exists()
    assert "fig4c" in dlczsim.preset_names()
