import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmcfoliate.cli import GridSpec, RunConfig, main
from cmcfoliate.errors import ConfigError


def write_config(tmp_path, **kw):
    cfg = RunConfig(**kw).to_dict()
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(2, 4),
    L=st.integers(2, 8),
    tol=st.floats(1e-12, 1e-4),
    start=st.floats(0.001, 0.1),
    count=st.integers(1, 20),
    spacing=st.sampled_from(["linear", "geometric"]),
    seed=st.integers(0, 2**31),
)
def test_config_roundtrip(n, L, tol, start, count, spacing, seed):
    cfg = RunConfig(
        n=n,
        model={"kind": "euclidean"},
        L_max=L,
        quadrature_order=2 * L + 4,
        tol_perp=tol,
        r_grid=GridSpec(start, 0.25, count, spacing),
        seed=seed,
    ).validate()
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


@pytest.mark.parametrize(
    "change",
    [{"n": 1}, {"r_grid": {"start": 0.1, "stop": 0.3, "count": 3}}, {"tol_K": 0}, {"quadrature_order": 10}, {"bogus": 1}],
)
def test_config_rejects(change):
    base = RunConfig().to_dict()
    base.update(change)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(base)


def test_expand_bump(tmp_path, capsys):
    assert main(["expand", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "expand.json").read_text())
    assert data["exact_inversion"]["passed"]
    t11 = [e for e in data["entries"] if e["i"] == 1 and e["j"] == 1 and e["exponent"] == [0, 0, 1]]
    assert t11[0]["coefficient"] == 1.0


def test_expand_euclidean_identity(tmp_path):
    cfg = write_config(tmp_path, model={"kind": "euclidean"})
    assert main(["expand", "--config", cfg, "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "expand.json").read_text())
    assert all(e["exponent"] == [0, 0, 0] and e["i"] == e["j"] for e in data["entries"])
    assert len(data["entries"]) == 3


def test_table_with_broken_symmetry(tmp_path, capsys):
    Rb = np.zeros((2, 2, 2, 2))
    Rb[0, 1, 0, 1] = 1.0
    (tmp_path / "table.json").write_text(json.dumps([{"tau": [0, 0], "jet": {"Rb": Rb.tolist()}}]))
    cfg = write_config(tmp_path, model={"kind": "table", "path": "table.json"})
    assert main(["expand", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "antisymmetric" in capsys.readouterr().err
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "ValidationError" and err["exit_code"] == 2


def test_moments(tmp_path):
    assert main(["moments", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "moments.json").read_text())
    assert data["quadrature"]["int_x1x1"] == pytest.approx(2 * np.pi / 3, abs=1e-12)
    assert data["quadrature"]["P_tx"] == pytest.approx(0.375, abs=1e-12)
    assert data["c_n_drift"] < 1e-10
    assert data["deviation_from_closed_form"]["P_tx"] == pytest.approx(0.1875, abs=1e-12)


def test_leaf_euclidean_pinned(tmp_path):
    cfg = write_config(tmp_path, model={"kind": "euclidean"})
    assert main(["leaf", "--config", cfg, "--out", str(tmp_path), "--r", "0.1", "--tau", "0,0"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    leaf = rep["leaves"][0]
    assert leaf["kperp_residual"] <= 1e-10 and leaf["kernel_residual"] <= 1e-10


def test_foliate_verify_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = write_config(tmp_path, r_grid=GridSpec(0.02, 0.1, 4))
    assert main(["foliate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["foliate", "--config", cfg, "--out", str(b)]) == 0
    for name in ("leaves.csv", "points.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["schema"] == "cmcfoliate/1"
    assert rep["diagnostics"]["det_min"] > 0
    assert main(["verify", "--config", cfg, "--out", str(a)]) == 0
    assert not [p for p in os.listdir(a) if p.endswith(".tmp")]


def test_verify_two_leaves_is_insufficient(tmp_path):
    cfg = write_config(tmp_path, r_grid=GridSpec(0.05, 0.1, 2))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "InsufficientDataError"


def test_nondegeneracy_exit_code(tmp_path):
    cfg = write_config(tmp_path, model={"kind": "euclidean"})
    assert main(["foliate", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_selftest_and_mutation(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    cfg = write_config(tmp_path, metric_overrides={"ttt_hhh": "41/10"})
    assert main(["selftest", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "umbilic_metric" in capsys.readouterr().out


def test_selftest_rejects_low_quadrature(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"L_max": 8, "quadrature_order": 12}))
    assert main(["selftest", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_module_entry_and_threads(tmp_path):
    env = dict(os.environ, CMC_THREADS="zero")
    proc = subprocess.run(
        [sys.executable, "-m", "cmcfoliate", "moments", "--out", str(tmp_path)], env=env, capture_output=True, text=True
    )
    assert proc.returncode == 2
    env["CMC_THREADS"] = "1"
    proc = subprocess.run(
        [sys.executable, "-m", "cmcfoliate", "moments", "--out", str(tmp_path)], env=env, capture_output=True, text=True
    )
    assert proc.returncode == 0 and "c_2" in proc.stdout
