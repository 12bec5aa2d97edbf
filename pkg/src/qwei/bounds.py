r"""The kernel J, the cutoff machinery and the certified lower bound.

With transforms in the ``+i`` convention, the weighted average of the
normal-ordered energy density along the worldline is

.. math:: I = \int dλ\,dλ'\, J^{AB}(λ,λ')\, W_{AB}(λ,λ'),
          \qquad J^{AB} = \frac{1}{8π^2}\Big\{(λ+λ')\hat f(λ-λ')δ^{AB}
                          + [θ^{AB} f]^\wedge(λ-λ')\Big\}.

The λλ'-plane is split into quadrants.  The off-diagonal quadrants and the
non-positive-type parts of the diagonal ones are bounded directly by the
vacuum spectra ``Y``; the remaining diagonal pieces are bounded through the
spectrum of the rescaled operator ``σ_Λ J σ_Λ``, which the constants
``C_Λ`` and ``C''_Λ`` control.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline
from scipy.special import erfc

from . import weights
from .errors import (
    GridMismatch,
    InconsistentParts,
    InsufficientRange,
    TailEstimateFailed,
    TruncationWarning,
)
from .spectra import decay_report

PI = np.pi


# ---------------------------------------------------------------------------
# θ, cutoffs and J


@dataclass(frozen=True)
class ThetaProfile:
    """Hermitian 4x4 matrices ``θ^{AB}(τ)`` on a τ-grid, shape ``(nτ, 4, 4)``."""

    tau: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=complex)
        if th.shape != (len(self.tau), 4, 4):
            raise GridMismatch("θ samples must have shape (len(tau), 4, 4)")
        if np.abs(th - th.conj().transpose(0, 2, 1)).max(initial=0.0) > 1e-12:
            raise ValueError("θ(τ) is not hermitian")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))

    @property
    def C_prime(self):
        """``sup_τ ‖θ(τ)‖`` in the operator norm."""
        if not np.any(self.theta):
            return 0.0
        return float(np.linalg.norm(self.theta, ord=2, axis=(1, 2)).max())

    def is_zero(self):
        return not np.any(self.theta)


def zero_theta(tau):
    return ThetaProfile(tau, np.zeros((len(tau), 4, 4)))


def constant_theta(tau, matrix):
    return ThetaProfile(tau, np.broadcast_to(np.asarray(matrix, complex), (len(tau), 4, 4)))


def chi(lam, Lam):
    """Quintic smoothstep cutoff: 1 on ``[0, Λ]``, 0 on ``[Λ+1, ∞)``."""
    lam = np.asarray(lam, dtype=float)
    if np.isinf(Lam):
        return np.ones_like(lam)
    t = np.clip(lam - Lam, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


@dataclass(frozen=True)
class CutoffFamily:
    """``χ_Λ`` and ``σ_Λ = χ_Λ σ`` for a callable ``σ``."""

    Lam: float
    sigma: object

    def chi(self, lam):
        return chi(lam, self.Lam)

    def sigma_cut(self, lam):
        return self.chi(lam) * self.sigma(lam)


def _transform_on(h, tau, x):
    """``ĥ`` at ``x`` evaluated once per distinct value (to 1e-10)."""
    x = np.asarray(x, dtype=float)
    key = np.round(x, 10)
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    vals = weights.fourier_at(h, tau, uniq)
    return vals[..., inv].reshape(vals.shape[:-1] + x.shape)


@dataclass
class KernelJ:
    """Samples of ``J^{AB}(λ_i, λ'_j)``.

    ``K`` holds the scalar part multiplying ``δ^{AB}``; ``extra`` the θ-term
    (shape ``(n1, n2, 4, 4)``) or ``None`` when θ vanishes.
    """

    lam: np.ndarray
    lam2: np.ndarray
    K: np.ndarray
    extra: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def scalar(self):
        return self.extra is None

    def entries(self):
        full = self.K[:, :, None, None] * np.eye(4)
        return full if self.extra is None else full + self.extra

    def abs_entries(self):
        """``|J^{AB}|``; diagonal-only when θ vanishes."""
        if self.extra is None:
            return np.abs(self.K)
        return np.abs(self.entries())

    def hermiticity_residual(self):
        if self.lam.shape != self.lam2.shape or not np.array_equal(self.lam, self.lam2):
            raise GridMismatch("hermiticity needs a square grid")
        E = self.entries()
        return float(np.abs(E - E.conj().transpose(1, 0, 3, 2)).max(initial=0.0))


def build_J(f, theta, lam, lam2=None):
    """Sample ``J`` on ``lam x lam2`` from the weight and θ."""
    lam = np.asarray(lam, dtype=float)
    lam2 = lam if lam2 is None else np.asarray(lam2, dtype=float)
    if theta is not None and (len(theta.tau) != len(f.tau) or np.abs(theta.tau - f.tau).max() > 1e-12):
        raise GridMismatch("θ and the weight live on different τ-grids")
    d = lam[:, None] - lam2[None, :]
    K = (lam[:, None] + lam2[None, :]) * _transform_on(f.f, f.tau, d) / (8 * PI**2)
    extra = None
    cp = 0.0
    if theta is not None and not theta.is_zero():
        tf = theta.theta.transpose(1, 2, 0) * f.f
        extra = _transform_on(tf, f.tau, d).transpose(2, 3, 0, 1) / (8 * PI**2)
        cp = theta.C_prime
    meta = {"f_integral": f.integral(), "C_prime": cp}
    return KernelJ(lam, lam2, K, extra, meta)


# ---------------------------------------------------------------------------
# constants C_Λ and C''_Λ


@dataclass
class CResult:
    value: float
    cap: float
    u: np.ndarray
    profile: np.ndarray
    Lam: float
    truncation: float = 0.0


def _g_range(g, h):
    extent = weights.spectral_extent(g)
    u_max = h * np.ceil((extent + 1.0) / h)
    return u_max


def _tail_fraction(g, u_max):
    """``∫_{u_max}^∞ |ĝ|² / ∫_0^∞ |ĝ|²`` on a probe grid."""
    probe = np.linspace(0, u_max + 40, 4001)
    p = np.abs(g.ghat(probe)) ** 2
    total = simpson(p, x=probe)
    out = p * (probe >= u_max)
    return float(simpson(out, x=probe) / total) if total > 0 else 0.0


def compute_C(g, sigma, Lam, h=0.01, u_max=None):
    r"""``C_Λ = ∫_0^∞ du |ĝ(u)|² F_Λ(u)`` and its σ-cap ``C_∞``.

    ``F_Λ(u) = (4π³)^{-1} ∫_0^u (u-λ') σ_Λ(λ')² dλ'`` is evaluated from
    cumulative Simpson integrals of ``σ_Λ²`` and ``λσ_Λ²``.

    Parameters
    ----------
    g : Weight
    sigma : callable
        σ on ``λ >= 0``.
    Lam : float
        Cutoff; ``np.inf`` gives the cap directly.
    """
    if g.is_zero():
        return CResult(0.0, 0.0, np.zeros(1), np.zeros(1), Lam)
    if u_max is None:
        u_max = _g_range(g, h)
    u = np.linspace(0.0, u_max, int(round(u_max / h)) + 1)
    tail = _tail_fraction(g, u_max)
    if tail > 1e-12:
        warnings.warn(f"|ĝ|² tail beyond u={u_max} is {tail:.2e} of the total", TruncationWarning, stacklevel=2)
    g2 = np.abs(g.ghat(u)) ** 2
    s = sigma(u)

    def const(cut):
        s2 = (cut * s) ** 2
        A0 = cumulative_simpson(s2, x=u, initial=0.0)
        A1 = cumulative_simpson(u * s2, x=u, initial=0.0)
        F = (u * A0 - A1) / (4 * PI**3)
        return float(simpson(g2 * F, x=u)), F

    value, F = const(chi(u, Lam))
    cap, _ = const(np.ones_like(u))
    return CResult(value, cap, u, F, Lam, tail)


def compute_Cpp(g, theta, sigma, Lam, h=0.01, u_max=None):
    r"""``C''_Λ = ∫_{-C'}^∞ du |ĝ(u)|² G_Λ(u)`` and its cap.

    ``G_Λ(u) = C'/(16π³) ∫_{max(u-C',0)}^{u+C'} σ_Λ(λ')² dλ'``.
    """
    cp = theta if isinstance(theta, float) else (theta.C_prime if theta is not None else 0.0)
    if cp == 0.0 or g.is_zero():
        return CResult(0.0, 0.0, np.zeros(1), np.zeros(1), Lam)
    if u_max is None:
        u_max = _g_range(g, h)
    tail = _tail_fraction(g, u_max)
    if tail > 1e-12:
        warnings.warn(f"|ĝ|² tail beyond u={u_max} is {tail:.2e} of the total", TruncationWarning, stacklevel=2)
    x = np.linspace(0.0, u_max + cp, int(np.ceil((u_max + cp) / h)) + 1)
    u = np.linspace(-cp, u_max, int(np.ceil((u_max + cp) / h)) + 1)
    g2 = np.abs(g.ghat(u)) ** 2
    s = sigma(x)

    def const(cut):
        A0 = CubicSpline(x, cumulative_simpson((cut * s) ** 2, x=x, initial=0.0))
        G = cp / (16 * PI**3) * (A0(u + cp) - A0(np.maximum(u - cp, 0.0)))
        return float(simpson(g2 * G, x=u)), G

    value, G = const(chi(x, Lam))
    cap, _ = const(np.ones_like(x))
    return CResult(value, cap, u, G, Lam, tail)


# ---------------------------------------------------------------------------
# quadrant bounds


@dataclass
class QuadrantBounds:
    B24: float
    B_rem1: float
    B_rem3: float
    tails: dict


def half_line_weights(lam):
    """1 on λ > 0, ½ at λ = 0, 0 on λ < 0."""
    lam = np.asarray(lam)
    return np.where(lam > 0, 1.0, np.where(lam == 0, 0.5, 0.0))


def _envelope_moment(fit, a, k):
    r""":math:`\int_a^∞ λ^k\, y_{max} e^{-c(λ-λ_e)^2} dλ` along the fit's side, k ∈ {0, 1}."""
    if fit.y_max == 0 or np.isinf(fit.rate):
        return 0.0
    if fit.rate <= 0:
        raise TailEstimateFailed(f"no decay envelope on side {fit.side}")
    c = fit.rate
    e = fit.lam_edge if fit.side == "+" else -fit.lam_edge
    d = a - e
    if d < 1.0:
        raise TailEstimateFailed("grid edge is inside the fitted region")
    m0 = 0.5 * np.sqrt(PI / c) * erfc(np.sqrt(c) * d)
    if k == 0:
        return fit.y_max * m0
    return fit.y_max * (e * m0 + np.exp(-c * d * d) / (2 * c))


def tail_estimate(spectra, f_integral, c_prime=0.0, fits=None):
    r"""Bound on ``∫∫ |J| Σ X`` over the exterior of the λ-grid square.

    Uses ``|J^{AB}| <= ((|λ|+|λ'|) + C') ∫f / (8π²)`` and, on each side, the
    Gaussian envelopes of ``|Y^·|`` and ``|Y^Γ|`` from :func:`decay_report`.
    """
    lam = spectra.lam
    nd, ng = spectra.norms()
    s = nd + ng
    if not np.any(s):
        return 0.0
    if fits is None:
        try:
            fits = decay_report(spectra)
        except InsufficientRange as exc:
            raise TailEstimateFailed(str(exc)) from exc
    a = float(min(-lam[0], lam[-1]))
    wts = weights.trapezoid_weights(lam)
    out = [0.0, 0.0]
    for k in (0, 1):
        for key in ("dot+", "dot-", "gamma+", "gamma-"):
            out[k] += _envelope_moment(fits[key], a, k)
    inside = [float(np.sum(wts * s)), float(np.sum(wts * np.abs(lam) * s))]
    total = [inside[0] + out[0], inside[1] + out[1]]
    factor = 4.0 if c_prime else 1.0
    # exterior ⊂ {|λ| > a} ∪ {|λ'| > a}
    bound = 2 * (out[1] * total[0] + out[0] * total[1] + c_prime * out[0] * total[0])
    return float(factor * f_integral / (8 * PI**2) * bound)


def _weighted_sum(absJ, wa, Ya, Yb, wb):
    """``Σ_ij wa_i wb_j Σ_AB |J^{AB}_{ij}| Ya_{iA} Yb_{jB}``."""
    if absJ.ndim == 2:
        return float(np.einsum("i,ij,ij,j->", wa, absJ, Ya @ Yb.T, wb, optimize=True))
    return float(np.einsum("i,ijab,ia,jb,j->", wa, absJ, Ya, Yb, wb, optimize=True))


def quadrant_bounds(J, spectra, fits=None):
    """Direct bounds on the off-diagonal quadrants and diagonal remainders.

    Returns
    -------
    QuadrantBounds
        ``B24`` bounds quadrants 2 and 4 with all four blocks, ``B_rem1`` and
        ``B_rem3`` the blocks of quadrants 1 and 3 not handled spectrally.
        Each includes the same exterior tail estimate.
    """
    lam = spectra.lam
    if not (np.array_equal(J.lam, lam) and np.array_equal(J.lam2, lam)):
        raise GridMismatch("J and the spectra use different λ-grids")
    wts = weights.trapezoid_weights(lam)
    pos = half_line_weights(lam) * wts
    neg = (1 - half_line_weights(lam)) * wts
    absJ = J.abs_entries()
    Yd, Yg = spectra.Y_dot, spectra.Y_gamma
    S = Yd + Yg
    b24 = _weighted_sum(absJ, pos, S, S, neg) + _weighted_sum(absJ, neg, S, S, pos)
    r1 = sum(_weighted_sum(absJ, pos, A, B, pos) for A, B in ((Yd, Yd), (Yg, Yd), (Yd, Yg)))
    r3 = sum(_weighted_sum(absJ, neg, A, B, neg) for A, B in ((Yg, Yg), (Yd, Yg), (Yg, Yd)))
    t = tail_estimate(spectra, J.meta.get("f_integral", 0.0), J.meta.get("C_prime", 0.0), fits)
    return QuadrantBounds(b24 + t, r1 + t, r3 + t, {"exterior": t})


# ---------------------------------------------------------------------------
# operator checks


def half_grid(upper, h):
    n = int(round(upper / h))
    return h * np.arange(n + 1)


def _sym_weights(x):
    return np.sqrt(weights.trapezoid_weights(x))


def jtilde_matrix(f, theta, sigma, Lam, h, quadrant=1, grid=None):
    r"""Symmetrised discretisation of ``σ_Λ(λ) J(λ,λ') σ_Λ(λ')`` on ``[0, Λ+1]``.

    Quadrant 3 uses ``-J(-λ,-λ')``; the caller passes the matching σ.
    ``grid`` replaces the default uniform grid of step ``h``.
    """
    x = half_grid(Lam + 1, h) if grid is None else np.asarray(grid, dtype=float)
    src = x if quadrant == 1 else -x
    J = build_J(f, theta, src)
    sgn = 1.0 if quadrant == 1 else -1.0
    v = _sym_weights(x) * chi(x, Lam) * sigma(x)
    if J.scalar:
        return sgn * v[:, None] * J.K * v[None, :]
    E = sgn * J.entries() * (v[:, None] * v[None, :])[:, :, None, None]
    n = len(x)
    return E.transpose(0, 2, 1, 3).reshape(4 * n, 4 * n)


@dataclass
class JTildeResult:
    Lam: float
    quadrant: int
    min_eig: float
    min_eig_coarse: float
    delta_disc: float


def jtilde_min_eig(f, theta, sigma, Lam, quadrant=1, h=0.1):
    """Smallest eigenvalue of the discretised rescaled kernel at ``h/2``.

    ``delta_disc`` is the change from step ``h`` to ``h/2``.
    """
    coarse = float(np.linalg.eigvalsh(jtilde_matrix(f, theta, sigma, Lam, h, quadrant)).min())
    fine = float(np.linalg.eigvalsh(jtilde_matrix(f, theta, sigma, Lam, h / 2, quadrant)).min())
    return JTildeResult(Lam, quadrant, fine, coarse, abs(fine - coarse))


def wtilde_matrix(W, lam, sigma_vals):
    r"""Symmetrised ``W_{CD}(λ,λ')/(σ(λ)σ(λ'))`` on a grid ``0 = λ_0 < λ_1 < …``."""
    v = _sym_weights(lam) / sigma_vals
    n = len(lam)
    E = W * (v[:, None] * v[None, :])[:, :, None, None]
    return E.transpose(0, 2, 1, 3).reshape(4 * n, 4 * n)


def wtilde_check(W, lam, sigma_vals):
    """Smallest eigenvalue and trace of the discretised ``W̃``."""
    A = wtilde_matrix(W, lam, sigma_vals)
    A = 0.5 * (A + A.conj().T)
    return float(np.linalg.eigvalsh(A).min()), float(np.trace(A).real)


def averaged_density_freq(J, W):
    """``∫∫ J^{AB} W_{AB}`` by trapezoid.

    ``W`` may be the full ``(n, n, 4, 4)`` grid or, for θ = 0, the
    ``(n, n)`` trace ``Σ_A W_{AA}``.
    """
    wa = weights.trapezoid_weights(J.lam)
    wb = weights.trapezoid_weights(J.lam2)
    if W.shape[:2] != J.K.shape:
        raise GridMismatch("W and J sampled on different grids")
    if W.ndim == 2:
        if not J.scalar:
            raise GridMismatch("a traced W needs θ = 0")
        val = np.einsum("i,ij,ij,j->", wa, J.K, W, wb, optimize=True)
    else:
        val = np.einsum("i,ijab,ijab,j->", wa, J.entries(), W, wb, optimize=True)
    return complex(val)


@dataclass
class KMinusResult:
    min_eig_minus: float
    trace_minus: float
    min_eig_plus: float
    trace_plus: float
    reconstruction: float
    mu: np.ndarray = field(repr=False, default=None)


def k_split(g, lam, mu_step=0.05, extent=None):
    r"""Unscaled kernels on ``lam``: ``K`` from ``f̂`` and ``K^±`` from ``ĝ``.

    .. math::
        K^+ = \frac{1}{8π^3}\int |μ|\,\hat g(λ-μ)\overline{\hat g(λ'-μ)}\,dμ,\quad
        K^- = \frac{1}{4π^3}\int_{-∞}^0 |μ|\,\hat g(λ-μ)\overline{\hat g(λ'-μ)}\,dμ.
    """
    lam = np.asarray(lam, dtype=float)
    if extent is None:
        extent = weights.spectral_extent(g)
    k_lo = int(np.floor((lam.min() - extent) / mu_step))
    k_hi = int(np.ceil((lam.max() + extent) / mu_step))
    mu = mu_step * np.arange(k_lo, k_hi + 1)
    A = _transform_on(g.g, g.tau, lam[None, :] - mu[:, None])  # (nμ, nλ)
    w = weights.trapezoid_weights(mu) * np.abs(mu)
    Kp = np.einsum("k,ki,kj->ij", w, A, A.conj(), optimize=True) / (8 * PI**3)
    wm = np.where(mu < 0, w, 0.0)
    Km = np.einsum("k,ki,kj->ij", wm, A, A.conj(), optimize=True) / (4 * PI**3)
    K = (lam[:, None] + lam[None, :]) * _transform_on(g.f, g.tau, lam[:, None] - lam[None, :]) / (8 * PI**2)
    return K, Kp, Km, mu


def kminus_positivity(g, sigma, Lam, h=0.1, mu_step=0.05):
    """Spectra of the discretised ``σ_Λ K^± σ_Λ`` and the split's reconstruction error."""
    x = half_grid(Lam + 1, h)
    if g.is_zero():
        return KMinusResult(0.0, 0.0, 0.0, 0.0, 0.0, np.zeros(0))
    K, Kp, Km, mu = k_split(g, x, mu_step)
    s = chi(x, Lam) * sigma(x)
    S = s[:, None] * s[None, :]
    recon = float(np.abs(S * (Kp - Km) - S * K).max())
    v = _sym_weights(x)
    V = v[:, None] * v[None, :]
    Mm = V * S * Km
    Mp = V * S * Kp
    em = np.linalg.eigvalsh(0.5 * (Mm + Mm.conj().T))
    ep = np.linalg.eigvalsh(0.5 * (Mp + Mp.conj().T))
    return KMinusResult(
        float(em.min()), float(np.trace(Mm).real), float(ep.min()), float(np.trace(Mp).real), recon, mu
    )


# ---------------------------------------------------------------------------
# assembly


@dataclass
class BoundReport:
    Lambda_star: float
    C_Lambda: float
    C_Lambda_3: float
    C_inf: float
    C_inf_3: float
    C_prime: float
    Cpp_Lambda: float
    Cpp_Lambda_3: float
    Cpp_inf: float
    Cpp_inf_3: float
    B24: float
    B_rem1: float
    B_rem3: float
    B_R1: float
    B_R3: float
    B: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def select_lambda_star(Lams, C1, C3, Cpp1, Cpp3, tol=1e-9):
    """Smallest Λ whose constants sit within ``tol`` of their caps, else ``inf``."""
    for i, L in enumerate(sorted(Lams)):
        parts = (C1[i], C3[i], Cpp1[i], Cpp3[i])
        if all(abs(p.cap - p.value) <= tol for p in parts):
            return float(L), i
    return float("inf"), None


def assemble_bound(parts):
    r"""Total bound ``B`` from its parts.

    ``parts`` is a mapping with keys ``Lambda``, ``C1``, ``C3``, ``Cpp1``,
    ``Cpp3`` (:class:`CResult`, all at the same Λ), ``quadrants``
    (:class:`QuadrantBounds`) and ``C_prime``.  An infinite Λ means the caps
    are used.
    """
    Lam = parts["Lambda"]
    cs = [parts[k] for k in ("C1", "C3", "Cpp1", "Cpp3")]
    for c in cs:
        if c.Lam != Lam and not (c.value == 0 and c.cap == 0):
            raise InconsistentParts(f"constant computed at Λ={c.Lam}, expected {Lam}")
    q = parts["quadrants"]
    vals = [q.B24, q.B_rem1, q.B_rem3] + [c.value for c in cs] + [c.cap for c in cs]
    if any(v < 0 or not np.isfinite(v) for v in vals):
        raise InconsistentParts("bound components must be finite and nonnegative")
    pick = (lambda c: c.cap) if np.isinf(Lam) else (lambda c: c.value)
    C1, C3, P1, P3 = (pick(c) for c in cs)
    BR1 = 0.5 * PI * (C1 + P1)
    BR3 = 0.5 * PI * (C3 + P3)
    B = q.B24 + q.B_rem1 + q.B_rem3 + BR1 + BR3
    return BoundReport(
        Lambda_star=float(Lam),
        C_Lambda=C1,
        C_Lambda_3=C3,
        C_inf=cs[0].cap,
        C_inf_3=cs[1].cap,
        C_prime=float(parts.get("C_prime", 0.0)),
        Cpp_Lambda=P1,
        Cpp_Lambda_3=P3,
        Cpp_inf=cs[2].cap,
        Cpp_inf_3=cs[3].cap,
        B24=q.B24,
        B_rem1=q.B_rem1,
        B_rem3=q.B_rem3,
        B_R1=BR1,
        B_R3=BR3,
        B=B,
        diagnostics=dict(parts.get("diagnostics", {}), exterior_tail=q.tails.get("exterior", 0.0)),
    )
