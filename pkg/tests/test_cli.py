import json

import numpy as np
import pytest

from conftest import small_config
from qwei import cli, pipeline, tables, weights


def run(tmp_path, raw, command, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    out = tmp_path / f"out-{command}"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["bound", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["bound", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize(
    "over",
    [
        {"basis": {"L": -1.0}},
        {"window": {"tau_a": 5.0, "tau_b": -5.0}},
        {"theta": {"kind": "constant", "matrix_real": np.eye(4).tolist()}},
        {"weight": {"support_radius": 10.0}},
        {"grids": {"n_tau": 60}},
        {"unknown_key": 1},
    ],
)
def test_config_errors_exit_2(tmp_path, over):
    code, _ = run(tmp_path, small_config(**over), "bound")
    assert code == 2


def test_bound_writes_report_and_tables(tmp_path):
    code, out = run(tmp_path, small_config(), "bound")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["command"] == "bound"
    assert doc["bound"]["B"] > 0
    assert doc["summary"]["passed"]
    header, data = tables.read_csv(out / "Y.csv")
    assert header == ["lam"] + [f"Ydot_{a}" for a in range(1, 5)] + [f"Ygamma_{a}" for a in range(1, 5)] + ["sigma"]
    assert data.shape[0] == doc["model"]["n_lam"]
    h2, s = tables.read_csv(out / "sigma.csv")
    assert h2 == ["lam", "sigma", "sigma_reflected"]
    assert np.all(s[:, 1] >= 1.0)
    assert np.array_equal(s[:, 1], data[:, 9])
    h3, f = tables.read_csv(out / "fhat.csv")
    assert abs(f[np.argmin(np.abs(f[:, 0])), 1] - np.sqrt(np.pi)) < 1e-10


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    cols = [rng.standard_normal(17) * 10.0 ** rng.integers(-30, 30, 17) for _ in range(3)]
    tables.write_csv(tmp_path / "t.csv", ["a", "b", "c"], cols)
    header, data = tables.read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "c"]
    assert np.array_equal(data, np.column_stack(cols))


def test_report_is_byte_identical_across_runs(tmp_path):
    raw = small_config()
    _, a = run(tmp_path, raw, "verify", name="a.json")
    first = (a / "report.json").read_bytes()
    _, b = run(tmp_path, raw, "verify", name="a.json")
    assert (b / "report.json").read_bytes() == first


def test_zero_weight_gives_zero_bound(tmp_path):
    raw = small_config(weight={"kind": "zero", "support_radius": 4.0, "dtau": 0.05})
    code, out = run(tmp_path, raw, "verify")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["bound"]["B"] == 0.0
    assert all(r["I_time"] == 0.0 for r in doc["states"])


def test_empty_basis_selfcheck(tmp_path):
    raw = small_config(basis={"L": 6.3, "m": 0.0, "K_max": 0.5, "allow_empty": True})
    code, out = run(tmp_path, raw, "selfcheck")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert all(c["passed"] for c in doc["checks"].values())


def test_spectra_command(tmp_path):
    code, out = run(tmp_path, small_config(), "spectra")
    assert code == 0
    _, rho = tables.read_csv(out / "rho_vacuum.csv")
    assert np.abs(rho[:, 1]).max() <= 1e-14
    _, one = tables.read_csv(out / "rho_particle.csv")
    assert np.allclose(one[:, 1], 1.0 / 6.3**3, rtol=1e-12)
    n_states = len(list(out.glob("rho_*.csv")))
    assert n_states == 1 + 7 + 1 + 4


def _peak_positions(out):
    _, Y = tables.read_csv(out / "Y.csv")
    lam = Y[:, 0]
    nd = np.linalg.norm(Y[:, 1:5], axis=1)
    ng = np.linalg.norm(Y[:, 5:9], axis=1)
    return lam[nd.argmax()], lam[ng.argmax()]


@pytest.mark.parametrize("m", [1.0, 2.0])
def test_Y_peaks_sit_at_mode_frequencies(tmp_path, m):
    raw = small_config(basis={"L": 6.3, "m": m, "K_max": 1.0})
    code, out = run(tmp_path, raw, "bound")
    assert code == 0
    omegas = np.sqrt(m * m + np.array([0.0, (2 * np.pi / 6.3) ** 2]))
    pd, pg = _peak_positions(out)
    # within one λ-step of ±ω for some shell
    assert np.abs(pg - omegas).min() <= 0.1 + 1e-12
    assert np.abs(pd + omegas).min() <= 0.1 + 1e-12


def test_strict_mode_exits_3(tmp_path):
    raw = small_config(grids={"lam_margin": 0.5, "decay_margin": 0.5})
    code, _ = run(tmp_path, raw, "bound", "--strict")
    assert code == 3


def test_out_directory_precedence(tmp_path, monkeypatch):
    raw = small_config(output={"dir": str(tmp_path / "from-config")})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    monkeypatch.setenv("QWEI_OUT", str(tmp_path / "from-env"))
    assert cli.main(["spectra", "--config", str(path)]) == 0
    assert (tmp_path / "from-env" / "Y.csv").exists()
    assert not (tmp_path / "from-config").exists()


def test_violation_exits_4(tmp_path, monkeypatch):
    real = pipeline.compute_bound

    def tiny(model):
        report, J = real(model)
        report.B = 1e-12
        return report, J

    monkeypatch.setattr(pipeline, "compute_bound", tiny)
    code, out = run(tmp_path, small_config(), "verify")
    assert code == 4
    doc = json.loads((out / "report.json").read_text())
    assert doc["summary"]["violations"]


def test_sign_mutation_fails_selfcheck(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(weights, "_SIGN", -1)
    code, out = run(tmp_path, small_config(), "selfcheck")
    assert code == 5
    doc = json.loads((out / "report.json").read_text())
    assert not doc["checks"]["quadrant_structure"]["passed"]
    assert "quadrant_structure" in capsys.readouterr().err


def test_explicit_states(tmp_path):
    entry = {
        "id": "mix",
        "terms": [
            {"coefficient": [0.6, 0.0], "particles": [[0, 0, 0, 1]], "antiparticles": []},
            {"coefficient": [0.0, 0.8], "particles": [], "antiparticles": [[1, 0, 0, 2]]},
        ],
    }
    code, out = run(tmp_path, small_config(states={"explicit": [entry]}), "verify")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert "mix" in [r["id"] for r in doc["states"]]
    bad = dict(entry, terms=[dict(entry["terms"][0], particles=[[9, 9, 9, 1]])])
    assert run(tmp_path, small_config(states={"explicit": [bad]}), "verify")[0] == 2
