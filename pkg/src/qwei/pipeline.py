"""Run configuration, model assembly and the bound/verify/selfcheck drivers."""
from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from . import bounds, spectra, spinors, states, weights
from .errors import BasisMismatch, ConfigError, InvalidGrid, TruncationWarning

SCHEMA_VERSION = 1

DEFAULTS = {
    "basis": {"allow_empty": False},
    "window": {"edge_width": 1.0},
    "grids": {
        "lam_margin": 10.0,
        "decay_margin": 20.0,
        "operator_step": 0.1,
        "constant_step": 0.01,
    },
    "theta": {"kind": "zero"},
    "machinery_test": False,
    "states": {"vacuum": True, "structured": 10, "optimal_quasifree": True, "explicit": []},
    "checks": {"random_states": 20, "vector_states": 5, "kernel_pairs": 100, "seed": 7},
    "output": {"dir": "qwei-out"},
}


def load_schema():
    text = resources.files("qwei").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw):
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{path}: {exc.message}") from None
        data = _merge(DEFAULTS, raw)
        w = data["window"]
        if w["tau_b"] <= w["tau_a"]:
            raise ConfigError("window: tau_b must exceed tau_a")
        if data["theta"]["kind"] != "zero" and not data["machinery_test"]:
            raise ConfigError("theta: nonzero θ profiles need machinery_test = true")
        return cls(data)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def __getitem__(self, key):
        return self.data[key]


# ---------------------------------------------------------------------------
# model


@dataclass
class Model:
    rc: RunConfig
    gammas: object
    basis: object
    cfg: object
    weight: object
    theta: object
    lam: np.ndarray
    density: object
    sigma1: object
    sigma3: object
    ref: object
    fits: dict
    diagnostics: dict = field(default_factory=dict)


def _build_weight(spec, tau_cfg):
    kind = spec["kind"]
    if kind == "windowed_gaussian":
        return weights.windowed_gaussian(spec["center"], spec["width"], spec["support_radius"], spec["dtau"])
    if kind == "samples":
        return weights.weight_from_samples(spec["samples"])
    h = spec["dtau"]
    n = int(np.ceil(spec["support_radius"] / h)) + 1
    return weights.zero_weight(spec.get("center", 0.0) + h * np.arange(-n, n + 1))


def _build_theta(spec, tau):
    if spec["kind"] == "zero":
        return bounds.zero_theta(tau)
    mat = np.asarray(spec.get("matrix_real", np.zeros((4, 4))), float) + 1j * np.asarray(
        spec.get("matrix_imag", np.zeros((4, 4))), float
    )
    try:
        return bounds.constant_theta(tau, mat)
    except ValueError as exc:
        raise ConfigError(f"theta: {exc}") from None


def symmetric_grid(half_width, step):
    n = int(np.ceil(half_width / step))
    return step * np.arange(-n, n + 1)


def build_model(rc):
    d = rc.data
    G = spinors.build_standard_gammas()
    b = d["basis"]
    try:
        basis = spinors.build_mode_basis(b["L"], b["m"], b["K_max"], G, allow_empty=b["allow_empty"])
    except ValueError as exc:
        raise ConfigError(f"basis: {exc}") from None
    g = d["grids"]
    tau = np.linspace(g["tau_min"], g["tau_max"], g["n_tau"])
    omega_max = float(basis.omega.max(initial=0.0))
    if omega_max > 0 and tau[1] - tau[0] > np.pi / (4 * omega_max):
        raise ConfigError("grids: τ-step does not resolve the largest mode frequency")
    win = spectra.Window(d["window"]["tau_a"], d["window"]["tau_b"], d["window"]["edge_width"])
    try:
        cfg = spectra.WorldlineConfig(basis, win, tau)
        weight = _build_weight(d["weight"], tau)
    except InvalidGrid as exc:
        raise ConfigError(f"grids: {exc}") from None
    lo, hi = weight.support()
    if not weight.is_zero() and (lo < win.tau_a or hi > win.tau_b):
        raise ConfigError("weight: support leaves the interval where the window equals 1")
    theta = _build_theta(d["theta"], weight.tau)
    s = win.edge_width
    # f̂ = (ĝ * ĝ)/2π reaches at most twice as far as ĝ
    f_extent = 2 * weights.spectral_extent(weight)
    lam = symmetric_grid(max(omega_max + g["lam_margin"] / s, f_extent), g["dlam"])
    density = spectra.mode_density(cfg)
    ref = spectra.compute_Y(density, cfg.window_hat, lam)
    decay_lam = symmetric_grid(omega_max + g["decay_margin"] / s, g["dlam"])
    decay_ref = spectra.compute_Y(density, cfg.window_hat, decay_lam)
    fits = spectra.decay_report(decay_ref)
    return Model(
        rc,
        G,
        basis,
        cfg,
        weight,
        theta,
        lam,
        density,
        spectra.sigma_function(density, cfg.window_hat),
        spectra.sigma_function(density, cfg.window_hat, reflected=True),
        ref,
        fits,
        {"omega_max": omega_max, "n_modes": basis.size, "n_lam": len(lam)},
    )


# ---------------------------------------------------------------------------
# bound


def compute_bound(model):
    """Constants over the Λ list, the quadrant bounds and the assembled ``B``."""
    g = model.rc["grids"]
    w, th = model.weight, model.theta
    J = bounds.build_J(w, th, model.lam)
    quad = bounds.quadrant_bounds(J, model.ref, model.fits)
    Lams = sorted(float(x) for x in model.rc["Lambdas"])
    h = g["constant_step"]
    per = {"C1": [], "C3": [], "Cpp1": [], "Cpp3": []}
    sweep = []
    for L in Lams:
        c1 = bounds.compute_C(w, model.sigma1, L, h)
        c3 = bounds.compute_C(w, model.sigma3, L, h)
        p1 = bounds.compute_Cpp(w, th, model.sigma1, L, h)
        p3 = bounds.compute_Cpp(w, th, model.sigma3, L, h)
        j1 = bounds.jtilde_min_eig(w, th, model.sigma1, L, 1, g["operator_step"])
        j3 = bounds.jtilde_min_eig(w, th, model.sigma3, L, 3, g["operator_step"])
        for k, v in zip(per, (c1, c3, p1, p3)):
            per[k].append(v)
        sweep.append(
            {
                "Lambda": L,
                "C_Lambda": c1.value,
                "C_Lambda_3": c3.value,
                "Cpp_Lambda": p1.value,
                "Cpp_Lambda_3": p3.value,
                "jtilde_min_eig": j1.min_eig,
                "jtilde_min_eig_3": j3.min_eig,
                "delta_disc": max(j1.delta_disc, j3.delta_disc),
            }
        )
    Lstar, idx = bounds.select_lambda_star(Lams, per["C1"], per["C3"], per["Cpp1"], per["Cpp3"])
    i = idx if idx is not None else len(Lams) - 1
    parts = {
        "Lambda": Lstar,
        "C1": per["C1"][i],
        "C3": per["C3"][i],
        "Cpp1": per["Cpp1"][i],
        "Cpp3": per["Cpp3"][i],
        "quadrants": quad,
        "C_prime": th.C_prime,
    }
    if idx is None:
        for k in ("C1", "C3", "Cpp1", "Cpp3"):
            parts[k] = bounds.CResult(parts[k].value, parts[k].cap, parts[k].u, parts[k].profile, Lstar)
    report = bounds.assemble_bound(parts)
    report.diagnostics.update(
        {
            "lambda_sweep": sweep,
            "decay_rates": {k: v.rate for k, v in sorted(model.fits.items())},
            "lam_grid": [float(model.lam[0]), float(model.lam[-1]), len(model.lam)],
        }
    )
    return report, J


# ---------------------------------------------------------------------------
# state corpus


@dataclass
class CorpusEntry:
    id: str
    kind: str
    state: object


def _explicit_state(entry, basis):
    terms = []
    for t in entry["terms"]:
        try:
            parts = tuple(basis.index(p[:3], p[3]) for p in t.get("particles", []))
            antis = tuple(basis.index(p[:3], p[3]) for p in t.get("antiparticles", []))
        except KeyError as exc:
            raise ConfigError(f"states/{entry['id']}: {exc.args[0]}") from None
        terms.append((complex(*t["coefficient"]), parts, antis))
    try:
        return states.StateSpec(tuple(terms), entry["id"])
    except ValueError as exc:
        raise ConfigError(f"states/{entry['id']}: {exc}") from None


def random_seeds(seed, count):
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, count)]


def build_corpus(model):
    sc = model.rc["states"]
    basis = model.basis
    out = []
    if sc["vacuum"]:
        out.append(CorpusEntry("vacuum", "quasifree", states.vacuum_projection(basis)))
    for sid, spec in states.structured_states(model.cfg, model.weight, sc["structured"]):
        out.append(CorpusEntry(sid, "vector", spec))
    for entry in sc["explicit"]:
        out.append(CorpusEntry(entry["id"], "vector", _explicit_state(entry, basis)))
    if sc["optimal_quasifree"] and basis.size and not model.weight.is_zero():
        Q, _ = states.optimal_quasifree(model.cfg, model.weight)
        out.append(CorpusEntry("quasifree-min", "quasifree", Q))
    rnd = sc.get("random")
    if rnd and rnd["count"]:
        rank = min(rnd["rank"], basis.size)
        for i, s in enumerate(random_seeds(rnd["seed"], rnd["count"])):
            Q = states.random_hadamard_Q(basis, rank, rnd["strength"], s)
            out.append(CorpusEntry(f"random-{i:03d}", "quasifree", Q))
    ids = [e.id for e in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("state ids must be unique")
    return out


def evaluate_states(model, corpus, J, B):
    """Per-state averages in both domains and margins against ``B``."""
    rows = []
    for e in corpus:
        try:
            blocks = states.two_point_blocks(e.state, model.cfg)
        except BasisMismatch as exc:
            raise ConfigError(f"states/{e.id}: {exc}") from None
        I_time = states.averaged_density(blocks, model.weight) if not model.weight.is_zero() else 0.0
        if J.scalar:
            I_freq = bounds.averaged_density_freq(J, states.w_trace(blocks, model.lam))
        else:
            W = states.w_transforms(blocks, model.lam)["normal"]
            I_freq = bounds.averaged_density_freq(J, W)
        rows.append(
            {
                "id": e.id,
                "kind": e.kind,
                "I_time": I_time,
                "I_freq": I_freq.real,
                "I_freq_imag": I_freq.imag,
                "parseval_gap": abs(I_freq.real - I_time),
                "margin": I_time + B,
            }
        )
    return rows


def verify_rows(rows, B):
    tol = 1e-9 * (1 + B)
    violations = [r["id"] for r in rows if r["margin"] < -tol]
    most = min(rows, key=lambda r: r["I_time"]) if rows else None
    return {
        "passed": not violations,
        "violations": violations,
        "min_I_time": most["I_time"] if most else 0.0,
        "min_I_time_state": most["id"] if most else None,
        "min_margin": min((r["margin"] for r in rows), default=B),
        "negative_states": sum(r["I_time"] < 0 for r in rows),
    }


# ---------------------------------------------------------------------------
# self-checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict


def _check(name, passed, **detail):
    return CheckResult(name, bool(passed), {k: _plain(v) for k, v in detail.items()})


def check_algebra(model):
    gam = spinors.verify_gamma_set(model.gammas)
    frame = spinors.frame_vectors(model.gammas)
    dec = float(np.abs(frame.decomposition() - model.gammas.gammas[0]).max())
    res = spinors.mode_residuals(model.basis) if model.basis.size else {"dirac": 0.0}
    ok = gam.passed and dec == 0.0 and max(res.values()) <= 1e-12
    return _check("algebra", ok, clifford=gam.residuals["clifford"], frame=dec, **res)


def check_vacuum_density(model):
    blocks = states.two_point_blocks(states.vacuum_projection(model.basis), model.cfg)
    rho = states.density_at(blocks, model.cfg.tau)
    m = float(np.abs(rho).max(initial=0.0))
    return _check("vacuum_density", m <= 1e-14, max_abs=m)


def check_kernel_identity(model, n_pairs, seed):
    w = model.weight
    if w.is_zero():
        return _check("kernel_identity", True, max_rel=0.0, pairs=0)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5, 5, size=(n_pairs, 2))
    ext = weights.spectral_extent(w)
    scale = 1e-12 * abs(w.integral())
    worst = 0.0
    for a, b in pts:
        lhs, rhs = weights.kernel_identity(w, a, b, extent=ext)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), scale))
    return _check("kernel_identity", worst <= 1e-6, max_rel=worst, pairs=n_pairs)


def check_quadrant_structure(model, n_points=61, stride=None):
    """Diagonal of the double transform of each vacuum kernel against ``|Y|²``."""
    cfg = model.cfg
    if model.basis.size == 0:
        return _check("quadrant_structure", True, max_rel=0.0)
    if stride is None:
        stride = max(1, len(cfg.tau) // 512)
    tau = cfg.tau[::stride]
    if (len(cfg.tau) - 1) % stride:
        tau = cfg.tau[: (len(cfg.tau) - 1) // stride * stride + 1 : stride]
    idx = np.linspace(0, len(model.lam) - 1, n_points).round().astype(int)
    lam = model.lam[idx]
    worst = 0.0
    for sector, Y in (("dot", model.ref.Y_dot), ("gamma", model.ref.Y_gamma)):
        K = spectra.worldline_twopoint(cfg, sector, tau, tau)
        tr = np.einsum("aast->st", K)
        diag = spectra.double_transform_diagonal(tr, tau, lam).real
        target = (Y[idx] ** 2).sum(axis=1)
        worst = max(worst, float(np.abs(diag - target).max() / max(target.max(), 1e-300)))
    return _check("quadrant_structure", worst <= 1e-6, max_rel=worst)


def _check_states(model, n_random, n_vector, seed):
    basis = model.basis
    out = []
    rank = min(4, basis.size)
    for i, s in enumerate(random_seeds(seed, n_random)):
        out.append((f"random-{i}", states.random_hadamard_Q(basis, rank, 0.5, s)))
    for sid, spec in states.structured_states(model.cfg, model.weight, 6 + max(0, n_vector - 6))[:n_vector]:
        out.append((sid, spec))
    return out


_CS_PAIRS = {"dGd": ("dot", "dot"), "Gdd": ("gamma", "dot"), "ddG": ("dot", "gamma"), "GdG": ("gamma", "gamma")}


def check_cauchy_schwarz(model, test_states):
    Y = {"dot": model.ref.Y_dot, "gamma": model.ref.Y_gamma}
    worst = -np.inf
    for _, st in test_states:
        blocks = states.two_point_blocks(st, model.cfg)
        W = states.w_transforms(blocks, model.lam)
        for k, (a, b) in _CS_PAIRS.items():
            bound = Y[a][:, None, :, None] * Y[b][None, :, None, :]
            worst = max(worst, float((np.abs(W[k]) - bound).max()))
    worst = worst if np.isfinite(worst) else 0.0
    return _check("cauchy_schwarz", worst <= 1e-8, max_excess=worst, states=len(test_states))


def positive_half(lam):
    return lam[lam >= -1e-12 * max(1.0, abs(lam[0]))].clip(min=0.0)


def check_wtilde(model, test_states):
    lam = positive_half(model.lam)
    sig = model.sigma1(lam)
    worst_neg, worst_trace = 0.0, 0.0
    ok = True
    vac = states.two_point_blocks(states.vacuum_projection(model.basis), model.cfg)
    Wv = states.w_transform(vac, vac.labels["GdG"], lam)
    _, vac_trace = bounds.wtilde_check(Wv, lam, sig)
    for _, st in test_states:
        blocks = states.two_point_blocks(st, model.cfg)
        W = states.w_transform(blocks, blocks.labels["GdG"], lam)
        mn, tr = bounds.wtilde_check(W, lam, sig)
        ok &= mn >= -1e-8 * max(tr, 0.0) and -1e-12 <= tr <= np.pi / 2 + 1e-6
        worst_neg = min(worst_neg, mn)
        worst_trace = max(worst_trace, tr)
    ok &= vac_trace == 0.0
    return _check("wtilde", ok, min_eig=worst_neg, max_trace=worst_trace, vacuum_trace=vac_trace)


def check_jtilde(model, report):
    sweep = report.diagnostics["lambda_sweep"]
    cap = report.C_inf + report.Cpp_inf
    cap3 = report.C_inf_3 + report.Cpp_inf_3
    ok = True
    worst_gap = np.inf
    dmax = 0.0
    for row in sweep:
        d = row["delta_disc"]
        dmax = max(dmax, d)
        lim1 = -(row["C_Lambda"] + row["Cpp_Lambda"]) * (1 + 1e-6) - d
        lim3 = -(row["C_Lambda_3"] + row["Cpp_Lambda_3"]) * (1 + 1e-6) - d
        ok &= row["jtilde_min_eig"] >= lim1 and row["jtilde_min_eig_3"] >= lim3
        ok &= row["jtilde_min_eig"] >= -cap - d and row["jtilde_min_eig_3"] >= -cap3 - d
        worst_gap = min(worst_gap, row["jtilde_min_eig"] - lim1, row["jtilde_min_eig_3"] - lim3)
    ok &= dmax <= 1e-3 * (max(cap, cap3) + 1)
    return _check("jtilde", ok, min_gap=worst_gap if sweep else 0.0, delta_disc=dmax)


def check_kminus(model, Lam=10.0):
    r = bounds.kminus_positivity(model.weight, model.sigma1, Lam, model.rc["grids"]["operator_step"])
    ok = (
        r.min_eig_minus >= -1e-8 * r.trace_minus
        and r.min_eig_plus >= -1e-8 * r.trace_plus
        and r.reconstruction <= 1e-10
    )
    return _check(
        "kminus",
        ok,
        min_eig_minus=r.min_eig_minus,
        trace_minus=r.trace_minus,
        min_eig_plus=r.min_eig_plus,
        reconstruction=r.reconstruction,
    )


def check_hermiticity(J):
    r = J.hermiticity_residual()
    return _check("j_hermiticity", r <= 1e-10, residual=r)


def check_parseval(rows):
    worst = max((r["parseval_gap"] / (1 + abs(r["I_time"])) for r in rows), default=0.0)
    imag = max((abs(r["I_freq_imag"]) - 1e-9 * abs(r["I_freq"]) for r in rows), default=-1.0)
    return _check("parseval", worst <= 1e-6 and imag <= 1e-15, max_rel_gap=worst)


def fhat_tail_fraction(weight, lam_max):
    if weight.is_zero():
        return 0.0
    probe = np.linspace(-lam_max - 40, lam_max + 40, 8001)
    a = np.abs(weight.fhat(probe))
    wts = weights.trapezoid_weights(probe)
    out = np.abs(probe) > lam_max
    return float(np.sum((a * wts)[out]) / np.sum(a * wts))


def check_decay(model):
    nd, ng = model.ref.norms()
    dot_edge = float(nd[-1] / nd.max()) if nd.max() > 0 else 0.0
    gam_edge = float(ng[0] / ng.max()) if ng.max() > 0 else 0.0
    tail = fhat_tail_fraction(model.weight, float(model.lam[-1]))
    ok = dot_edge <= 1e-10 and gam_edge <= 1e-10 and tail <= 1e-12
    return _check("decay", ok, dot_edge=dot_edge, gamma_edge=gam_edge, fhat_tail=tail)


def run_selfcheck(model):
    c = model.rc["checks"]
    report, J = compute_bound(model)
    test_states = _check_states(model, c["random_states"], c["vector_states"], c["seed"])
    corpus = [CorpusEntry(sid, "check", st) for sid, st in test_states]
    corpus.insert(0, CorpusEntry("vacuum", "quasifree", states.vacuum_projection(model.basis)))
    rows = evaluate_states(model, corpus, J, report.B)
    return [
        check_algebra(model),
        check_vacuum_density(model),
        check_kernel_identity(model, c["kernel_pairs"], c["seed"]),
        check_quadrant_structure(model),
        check_hermiticity(J),
        check_cauchy_schwarz(model, test_states),
        check_wtilde(model, test_states),
        check_jtilde(model, report),
        check_kminus(model),
        check_parseval(rows),
        check_decay(model),
    ]


# ---------------------------------------------------------------------------
# serialisation helpers


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if np.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def dump_json(obj, path):
    text = json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def report_header(model, command):
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": model.rc.data,
        "model": model.diagnostics,
    }


def capture_warnings(fn, *args, strict=False):
    """Run ``fn`` and return its result with the truncation warnings raised.

    Under ``strict`` the first truncation warning propagates as an exception.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("error" if strict else "always", TruncationWarning)
        result = fn(*args)
    msgs = sorted({str(w.message) for w in caught if issubclass(w.category, TruncationWarning)})
    return result, msgs
