import json
import math

import numpy as np
import pytest

import ktraffic


def test_tensor_is_stochastic_and_matches_dense_layout():
    t = ktraffic.build_tensor("delta", 1 / 3, 4, 0.4)
    assert t.size == 13
    a = t.dense()
    assert a.shape == (13, 13, 13)
    assert np.abs(a.sum(axis=0) - 1).max() <= 1e-12
    assert t.max_stochasticity_deviation() <= 1e-12
    chi = ktraffic.build_tensor("chi", 1 / 3, 2, 0.4)
    assert np.abs(chi.dense().sum(axis=0) - 1).max() <= 1e-12


def test_rhs_conserves_mass():
    t = ktraffic.build_tensor("chi", 0.5, 3, 0.3)
    f = np.linspace(0.01, 0.1, t.size)
    assert abs(ktraffic.rhs(t, f).sum()) <= 1e-15


def test_steady_state_matches_closed_form():
    t = ktraffic.build_tensor("delta", 1 / 3, 1, 0.4)
    s = ktraffic.steady_state(t, [0.15] * 4)
    expected = ktraffic.closed_form_equilibrium(0.6, 0.4, 3)
    assert np.allclose(expected, [0.2, 0.2, 0.112311, 0.087689], atol=1e-6)
    assert np.abs(s["f"] - expected).max() <= 1e-6
    assert s["residual"] <= 1e-10


def test_integrate_returns_samples():
    t = ktraffic.build_tensor("delta", 1 / 3, 2, 0.85, eta=10.0)
    f0 = np.zeros(t.size)
    f0[0] = 0.15
    out = ktraffic.integrate(t, f0, 2.0, sample_interval=0.5)
    assert list(out["t"]) == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert out["f"].shape == (5, t.size)
    assert np.allclose(out["f"].sum(axis=1), 0.15, atol=1e-12)


def test_diagram_and_capacity_drop():
    rho = [0.0005 + 0.001 * i for i in range(1000)]
    d = ktraffic.fundamental_diagram("delta", 4, 1, rho)
    cd = ktraffic.capacity_drop(d["rho"], d["flux"])
    lo, hi = cd["bracket"]
    assert lo <= 0.5 <= hi
    inf = ktraffic.infinite_r_diagram(4, rho)
    gap = np.abs(d["flux"] - inf["flux"]) - np.asarray(rho) * 0.25 / 4
    assert gap.max() <= 1e-15
    assert inf["r"] is None


def test_errors_are_typed():
    with pytest.raises(ktraffic.ConfigError):
        ktraffic.build_tensor("gauss", 1 / 3, 1, 0.5)
    with pytest.raises(ValueError):
        ktraffic.build_tensor("delta", 1 / 3, 1.5, 0.5)
    t = ktraffic.build_tensor("delta", 1 / 3, 1, 0.6)
    with pytest.raises(ktraffic.ConvergenceError) as info:
        ktraffic.steady_state(t, [0.1] * 4, t_max=0.5)
    assert info.value.time == 0.5
    assert len(info.value.last_state) == 4
    assert isinstance(info.value, ktraffic.NumericalError)


def test_run_writes_manifest(tmp_path):
    manifest = ktraffic.run(
        "equilibrium",
        {"rho": 0.6, "output": {"dir": str(tmp_path), "prefix": "py"}},
    )
    assert manifest["outputs"][0]["max_abs_difference"] <= 1e-6
    on_disk = json.loads((tmp_path / "py_manifest.json").read_text())
    assert on_disk["command"] == "equilibrium"
    assert (tmp_path / "py_equilibrium.csv").exists()
    assert math.isfinite(manifest["wall_time_s"])
