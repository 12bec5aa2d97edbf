"""The ten acceptance criteria on the demo configuration.

Each test records one ``PASS``/``FAIL`` line that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""
import json
import time

import numpy as np
import pytest

import conftest
from qwei import bounds, cli, pipeline, spectra, spinors, states, weights

PI = np.pi


def record(number, name, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"[{number:2d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def timed_run(demo_raw):
    """The whole verify pipeline from a fresh configuration, timed."""
    t0 = time.perf_counter()
    model = pipeline.build_model(pipeline.RunConfig.from_dict(demo_raw))
    report, J = pipeline.compute_bound(model)
    corpus = pipeline.build_corpus(model)
    rows = pipeline.evaluate_states(model, corpus, J, report.B)
    elapsed = time.perf_counter() - t0
    return model, report, corpus, rows, elapsed


def test_01_end_to_end_qwei(timed_run):
    model, report, corpus, rows, elapsed = timed_run
    B = report.B
    kinds = {r["id"]: r for r in rows}
    structured = [e.id for e in corpus if e.kind == "vector"]
    random_ids = [e.id for e in corpus if e.id.startswith("random-")]
    neg_structured = sum(kinds[i]["I_time"] < 0 for i in structured)
    tol = -1e-9 * (1 + B)
    worst = min(r["I_time"] + B for r in rows)
    ok = (
        20 <= model.basis.size <= 60
        and len(model.cfg.tau) >= 1024
        and len(rows) >= 50
        and "vacuum" in kinds
        and len(structured) == 10
        and neg_structured >= 3
        and len(random_ids) >= len(rows) - 12
        and worst >= tol
        and min(r["I_time"] for r in rows) < 0
        and elapsed <= 300
    )
    record(
        1,
        "end-to-end QWEI",
        ok,
        f"{model.basis.size} modes, {len(rows)} states, B={B:.4e}, min I={min(r['I_time'] for r in rows):.3e}, "
        f"{neg_structured} negative structured, min margin={worst:.4e}, {elapsed:.1f}s",
    )


@pytest.mark.parametrize("dummy", [None])
def test_02_kernel_identity(dummy):
    ws = [
        weights.windowed_gaussian(0.0, 1.0, 12.0, 0.02),
        weights.windowed_gaussian(1.5, 0.7, 6.0, 0.02),
        weights.Weight(
            np.linspace(-6, 6, 1201),
            weights.bump(np.linspace(-6, 6, 1201), 6.0) * np.cos(np.linspace(-6, 6, 1201)),
        ),
    ]
    rng = np.random.default_rng(2)
    worst = 0.0
    for w in ws:
        ext = weights.spectral_extent(w)
        for a, b in rng.uniform(-5, 5, size=(100, 2)):
            lhs, rhs = weights.kernel_identity(w, a, b, extent=ext)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-12 * w.integral()))
    record(2, "kernel identity", worst <= 1e-6, f"max rel err {worst:.2e} over 3 weights x 100 points")


def test_03_wtilde_positive_trace_class(demo_model):
    model = demo_model
    lam = pipeline.positive_half(model.lam)
    sig = model.sigma1(lam)
    test_states = pipeline._check_states(model, 20, 5, seed=11)
    worst_rel, traces = -np.inf, []
    for _, st in test_states:
        b = states.two_point_blocks(st, model.cfg)
        W = states.w_transform(b, b.labels["GdG"], lam)
        mn, tr = bounds.wtilde_check(W, lam, sig)
        worst_rel = max(worst_rel, -mn / tr if tr > 0 else -mn)
        traces.append(tr)
    vac = states.two_point_blocks(states.vacuum_projection(model.basis), model.cfg)
    _, vtr = bounds.wtilde_check(states.w_transform(vac, vac.labels["GdG"], lam), lam, sig)
    ok = worst_rel <= 1e-8 and min(traces) >= 0 and max(traces) <= PI / 2 + 1e-6 and vtr == 0.0
    record(
        3,
        "W-tilde positive trace class",
        ok,
        f"{len(test_states)} states, worst -min/trace {worst_rel:.2e}, trace in [{min(traces):.3e}, "
        f"{max(traces):.3e}], vacuum trace {vtr}",
    )


def test_04_jtilde_bounded_below(demo_bound):
    report, _ = demo_bound
    sweep = report.diagnostics["lambda_sweep"]
    cap1 = report.C_inf + report.Cpp_inf
    cap3 = report.C_inf_3 + report.Cpp_inf_3
    ok = True
    dmax = 0.0
    parts = []
    for row in sweep:
        d = row["delta_disc"]
        dmax = max(dmax, d)
        ok &= row["jtilde_min_eig"] >= -(row["C_Lambda"] + row["Cpp_Lambda"]) - d
        ok &= row["jtilde_min_eig_3"] >= -(row["C_Lambda_3"] + row["Cpp_Lambda_3"]) - d
        ok &= row["jtilde_min_eig"] >= -cap1 - d and row["jtilde_min_eig_3"] >= -cap3 - d
        parts.append(f"Λ={row['Lambda']:g}: {row['jtilde_min_eig']:.3e}>={-row['C_Lambda']:.3e}")
    ok &= dmax <= 1e-3 * (max(cap1, cap3) + 1)
    ok &= [r["Lambda"] for r in sweep] == [5.0, 10.0, 20.0, 40.0]
    record(4, "J-tilde bounded below", bool(ok), "; ".join(parts) + f"; δ_disc={dmax:.1e}")


def test_05_kminus_positive(demo_model):
    model = demo_model
    worst, recon = -np.inf, 0.0
    for Lam in (5.0, 10.0, 20.0, 40.0):
        r = bounds.kminus_positivity(model.weight, model.sigma1, Lam, h=0.1)
        worst = max(worst, -r.min_eig_minus / r.trace_minus)
        recon = max(recon, r.reconstruction)
    record(5, "K-minus positivity", worst <= 1e-8 and recon <= 1e-10,
           f"worst -min/trace {worst:.2e}, reconstruction {recon:.2e}")


def test_06_transforms_dominated_by_Y(demo_model):
    model = demo_model
    Y = {"dot": model.ref.Y_dot, "gamma": model.ref.Y_gamma}
    pairs = {"dGd": ("dot", "dot"), "Gdd": ("gamma", "dot"), "ddG": ("dot", "gamma"), "GdG": ("gamma", "gamma")}
    seeds = pipeline.random_seeds(23, 20)
    violations, worst = 0, -np.inf
    for s in seeds:
        Q = states.random_hadamard_Q(model.basis, 4, 0.5, s)
        b = states.two_point_blocks(Q, model.cfg)
        for k, (a, c) in pairs.items():
            W = np.abs(states.w_transform(b, b.labels[k], model.lam))
            excess = W - Y[a][:, None, :, None] * Y[c][None, :, None, :]
            violations += int(np.count_nonzero(excess > 1e-8))
            worst = max(worst, float(excess.max()))
    record(6, "transforms bounded by Y", violations == 0,
           f"20 states x 4 blocks, {violations} violations, max excess {worst:.2e}")


def test_07_cross_domain(timed_run):
    _, _, _, rows, _ = timed_run
    worst = max(r["parseval_gap"] / (1 + abs(r["I_time"])) for r in rows)
    record(7, "cross-domain consistency", worst <= 1e-6, f"max |I_freq-I_time|/(1+|I_time|) = {worst:.2e}")


def test_08_algebraic_layer(demo_model):
    model = demo_model
    g = spinors.verify_gamma_set(model.gammas)
    res = spinors.mode_residuals(model.basis)
    frame = spinors.frame_vectors(model.gammas)
    exact = np.array_equal(frame.decomposition(), model.gammas.gammas[0])
    vac = states.two_point_blocks(states.vacuum_projection(model.basis), model.cfg)
    rho = float(np.abs(states.density_at(vac, model.cfg.tau)).max())
    ok = max(g.residuals.values()) <= 1e-14 and res["dirac"] <= 1e-12 and exact and rho <= 1e-14
    record(
        8,
        "algebraic layer",
        ok,
        f"gamma {max(g.residuals.values()):.1e}, dirac {res['dirac']:.1e}, frame exact {exact}, vacuum rho {rho:.1e}",
    )


def test_09_decay_surrogates(demo_model):
    model = demo_model
    nd, ng = model.ref.norms()
    dot_edge = nd[-1] / nd.max()
    gam_edge = ng[0] / ng.max()
    tail = pipeline.fhat_tail_fraction(model.weight, float(model.lam[-1]))
    ok = dot_edge <= 1e-10 and gam_edge <= 1e-10 and tail <= 1e-12
    record(9, "decay surrogates", ok,
           f"Y-dot edge {dot_edge:.1e}, Y-gamma edge {gam_edge:.1e}, f-hat tail {tail:.1e}")


def test_10_determinism(tmp_path, demo_raw):
    cfg = tmp_path / "demo.json"
    cfg.write_text(json.dumps(demo_raw))
    blobs = []
    for name in ("a", "b"):
        assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        blobs.append((tmp_path / name / "report.json").read_bytes())
    record(10, "determinism", blobs[0] == blobs[1], f"report.json {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
