r"""Vacuum two-point functions along an inertial worldline and their spectra.

The field at the observer's position is expanded over "c-modes": the first
``N`` are particle modes (spinor ``u``, energy ``+ω``), the last ``N``
antiparticle modes (spinor ``v``, energy ``-ω``), so that on the worldline

.. math:: Ψ(τ) = L^{-3/2} \sum_J a_J e^{-iE_Jτ} c_J,
          \qquad c = (b_1,…,b_N, d_1^†,…,d_N^†).

A two-point function labelled by a ``2N x 2N`` operator ``X`` then reads
:math:`ω_X(τ,τ')_{AB} = \sum_{IJ}\overline{α_{IA}(τ)}X_{IJ}α_{JB}(τ')`,
with :math:`α_{JB}(τ) = v_B^+ a_J e^{-iE_Jτ}/L^{3/2}` the frame-contracted
mode functions.  Transforms follow the ``+i`` convention of
:mod:`qwei.weights`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import weights
from .errors import InsufficientRange, InvalidGrid, TruncationWarning
from .spinors import frame_vectors

# Window edges sit this many edge-widths outside the observation interval,
# where 1 - w is below 1e-18.
EDGE_OFFSET = 9.0


@dataclass(frozen=True)
class Window:
    """Smoothed indicator: 1 on ``[tau_a, tau_b]``, Gaussian-blurred edges.

    ``w = box * gaussian(edge_width)`` with the box edges pushed out by
    ``EDGE_OFFSET * edge_width``, which keeps ``w == 1`` on the interval to
    machine precision and gives ``ŵ`` a Gaussian envelope.
    """

    tau_a: float
    tau_b: float
    edge_width: float = 1.0

    @property
    def _edges(self):
        d = EDGE_OFFSET * self.edge_width
        return self.tau_a - d, self.tau_b + d

    def __call__(self, tau):
        lo, hi = self._edges
        s = np.sqrt(2.0) * self.edge_width
        tau = np.asarray(tau, dtype=float)
        return 0.5 * (erf((tau - lo) / s) - erf((tau - hi) / s))

    def ft(self, lam):
        """Closed-form transform, used as an oracle."""
        lo, hi = self._edges
        lam = np.asarray(lam, dtype=float)
        gauss = np.exp(-0.5 * (self.edge_width * lam) ** 2)
        small = np.abs(lam) < 1e-8
        safe = np.where(small, 1.0, lam)
        box = (np.exp(1j * safe * hi) - np.exp(1j * safe * lo)) / (1j * safe)
        box = np.where(small, (hi - lo) + 0j, box)
        return box * gauss

    def extent(self):
        """Interval outside which ``w`` is below 1e-18."""
        lo, hi = self._edges
        d = EDGE_OFFSET * self.edge_width
        return lo - d, hi + d


@dataclass(frozen=True)
class WorldlineConfig:
    """Mode basis, window and τ-grid for an inertial observer at the origin."""

    basis: object
    window: Window
    tau: np.ndarray
    frame: object = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        weights.uniform_step(tau)
        object.__setattr__(self, "tau", tau)
        if self.frame is None:
            object.__setattr__(self, "frame", frame_vectors(self.basis.gammas))
        w = self.window(tau)
        lo, hi = self.window.extent()
        if tau[0] > lo or tau[-1] < hi or max(w[0], w[-1]) > 1e-15:
            raise InvalidGrid("τ-grid must contain the whole window support")
        inside = (tau >= self.window.tau_a) & (tau <= self.window.tau_b)
        if inside.any() and np.abs(w[inside] - 1).max() > 1e-15:
            raise InvalidGrid("window is not 1 on the observation interval")

    @property
    def window_samples(self):
        return self.window(self.tau)

    def window_hat(self, lam):
        """Trapezoidal transform of the sampled window."""
        return weights.fourier_at(self.window_samples, self.tau, lam)

    def cmodes(self):
        """Frame-contracted amplitudes ``α`` (2N, 4) and energies ``E`` (2N,)."""
        b = self.basis
        a = np.concatenate([b.u, b.v]) if b.size else np.zeros((0, 4), complex)
        alpha = a @ self.frame.adjoints.T / np.sqrt(b.volume)
        E = np.concatenate([b.omega, -b.omega])
        return alpha, E

    def sector_projector(self, sector):
        """Vacuum labels: ``'dot'`` -> antiparticle block, ``'gamma'`` -> particle block."""
        n = self.basis.size
        p = np.zeros(2 * n)
        if sector == "gamma":
            p[:n] = 1
        elif sector == "dot":
            p[n:] = 1
        else:
            raise ValueError(f"unknown sector {sector!r}")
        return np.diag(p)


def mode_functions(cfg, tau):
    """``α_{JB}(τ)`` on the points ``tau``: shape ``(len(tau), 2N, 4)``."""
    alpha, E = cfg.cmodes()
    phase = np.exp(-1j * np.outer(np.asarray(tau, float), E))
    return phase[:, :, None] * alpha[None, :, :]


def labelled_kernel(cfg, X, tau1=None, tau2=None, windowed=True):
    """Sample the 4x4 kernel of the two-point function labelled by ``X``.

    Returns an array of shape ``(4, 4, len(tau1), len(tau2))``.
    """
    tau1 = cfg.tau if tau1 is None else np.asarray(tau1, float)
    tau2 = tau1 if tau2 is None else np.asarray(tau2, float)
    m1 = mode_functions(cfg, tau1)
    m2 = mode_functions(cfg, tau2)
    K = np.einsum("sia,ij,tjb->abst", m1.conj(), X, m2, optimize=True)
    if windowed:
        K = K * np.outer(cfg.window(tau1), cfg.window(tau2))
    return K


def worldline_twopoint(cfg, sector, tau1=None, tau2=None):
    """Windowed vacuum kernel of sector ``'dot'`` (ΨΨ⁺ ordering ⟨Ψ⁺Ψ⟩) or ``'gamma'`` (⟨ΨΨ⁺⟩)."""
    return labelled_kernel(cfg, cfg.sector_projector(sector), tau1, tau2)


def spectral_amplitudes(cfg, lam, what=None):
    r"""Transforms :math:`Φ_{JB}(λ) = α_{JB}\,\hat w(λ - E_J)`, shape ``(nλ, 2N, 4)``.

    ``what`` overrides the window transform (defaults to quadrature).
    """
    alpha, E = cfg.cmodes()
    lam = np.asarray(lam, dtype=float)
    what = cfg.window_hat if what is None else what
    uniq, inv = np.unique(np.round(E, 12), return_inverse=True)
    wh = what(lam[:, None] - uniq[None, :])
    return wh[:, inv][:, :, None] * alpha[None, :, :]


@dataclass(frozen=True)
class SpectralDensityTable:
    """Vacuum weights per frame index and distinct frequency (units 1/volume)."""

    freqs: np.ndarray
    rho_dot: np.ndarray
    rho_gamma: np.ndarray

    @property
    def empty(self):
        return len(self.freqs) == 0


def mode_density(cfg):
    """Collect ``|α|²`` by frequency: antiparticle spinors feed the dot sector."""
    b = cfg.basis
    alpha, _ = cfg.cmodes()
    n = b.size
    if n == 0:
        z = np.zeros((0, 4))
        return SpectralDensityTable(np.zeros(0), z, z)
    freqs, inv = np.unique(np.round(b.omega, 12), return_inverse=True)
    rho_dot = np.zeros((len(freqs), 4))
    rho_gamma = np.zeros((len(freqs), 4))
    np.add.at(rho_gamma, inv, np.abs(alpha[:n]) ** 2)
    np.add.at(rho_dot, inv, np.abs(alpha[n:]) ** 2)
    return SpectralDensityTable(freqs, rho_dot, rho_gamma)


@dataclass(frozen=True)
class ReferenceSpectra:
    """``Y^·_A``, ``Y^Γ_A`` (shape ``(nλ, 4)``) and σ on a λ-grid."""

    lam: np.ndarray
    Y_dot: np.ndarray
    Y_gamma: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def sigma(self):
        return sigma_from(self.lam, self.Y_gamma)

    @property
    def sigma_reflected(self):
        """σ for the third quadrant, ``λ -> -λ`` with ``Y^·`` in place of ``Y^Γ``."""
        return sigma_from(self.lam, self.Y_dot[::-1]) if _symmetric(self.lam) else None

    def norms(self):
        return np.linalg.norm(self.Y_dot, axis=1), np.linalg.norm(self.Y_gamma, axis=1)

    def scaled(self, factor):
        return ReferenceSpectra(self.lam, factor * self.Y_dot, factor * self.Y_gamma, dict(self.meta))


def _symmetric(lam):
    return np.allclose(lam, -lam[::-1], atol=1e-12)


def sigma_from(lam, Y):
    r""":math:`σ(λ) = (1+λ^2)^{1/2}(1 + |Y(λ)|_{ℂ^4})`."""
    return np.sqrt(1 + np.asarray(lam) ** 2) * (1 + np.linalg.norm(Y, axis=-1))


def compute_Y(density, what, lam, tail_tol=1e-12):
    r"""Positive square roots of the windowed vacuum spectra.

    .. math::
        Y^·_A(λ)^2 = \sum_ω ρ^·_A(ω)|\hat w(λ+ω)|^2, \qquad
        Y^Γ_A(λ)^2 = \sum_ω ρ^Γ_A(ω)|\hat w(λ-ω)|^2.

    Parameters
    ----------
    density : SpectralDensityTable
    what : callable
        Window transform, evaluated at arbitrary points.
    lam : array
    """
    lam = np.asarray(lam, dtype=float)
    if density.empty:
        z = np.zeros((len(lam), 4))
        return ReferenceSpectra(lam, z, z.copy(), {"frequencies": []})
    plus = np.abs(what(lam[:, None] + density.freqs[None, :])) ** 2
    minus = np.abs(what(lam[:, None] - density.freqs[None, :])) ** 2
    Y2_dot = plus @ density.rho_dot
    Y2_gamma = minus @ density.rho_gamma
    for Y2 in (Y2_dot, Y2_gamma):
        tot = Y2.sum(axis=1)
        if tot.max() > 0 and max(tot[0], tot[-1]) > tail_tol * tot.max():
            warnings.warn(
                "windowed spectrum is not negligible at the λ-grid edge", TruncationWarning, stacklevel=2
            )
            break
    meta = {"frequencies": [float(x) for x in density.freqs]}
    return ReferenceSpectra(lam, np.sqrt(Y2_dot), np.sqrt(Y2_gamma), meta)


def reference_spectra(cfg, lam):
    return compute_Y(mode_density(cfg), cfg.window_hat, lam)


def double_transform_diagonal(K, tau, lam):
    r"""Trapezoidal :math:`\hat K(-λ, λ)` of kernels ``K[..., τ, τ']``."""
    wts = weights.trapezoid_weights(tau)
    e = np.exp(weights._SIGN * 1j * np.outer(tau, lam)) * wts[:, None]
    # ∫∫ e^{-iλτ} e^{iλτ'} K(τ,τ')
    left = np.einsum("tl,...ts->...ls", e.conj(), K, optimize=True)
    return np.einsum("...ls,sl->...l", left, e, optimize=True)


@dataclass
class DecayFit:
    side: str
    lam_edge: float
    y_max: float
    rate: float
    floor_at: float
    below_1e10_within_grid: bool


def _fit_side(lam, y, direction, min_range, floor_rel):
    ymax = float(y.max())
    if ymax == 0:
        return DecayFit("+" if direction > 0 else "-", 0.0, 0.0, np.inf, np.nan, True)
    x = lam * direction
    order = np.argsort(x)
    x, yy = x[order], y[order]
    big = np.nonzero(yy >= 1e-2 * ymax)[0]
    edge = x[big[-1]]
    if x[-1] - edge < min_range:
        raise InsufficientRange(
            f"grid extends only {x[-1] - edge:.3g} beyond the spectral edge (need {min_range})"
        )
    sel = (x >= edge + 1.0) & (yy > floor_rel * ymax)
    floor_at = float(x[sel].max() * direction) if sel.any() else float(edge * direction)
    if sel.sum() < 3:
        rate = np.inf if np.all(yy[x >= edge + 1.0] <= floor_rel * ymax) else 0.0
    else:
        rate = float(np.min(-np.log(yy[sel] / ymax) / (x[sel] - edge) ** 2))
    below = bool(yy[-1] <= 1e-10 * ymax)
    return DecayFit("+" if direction > 0 else "-", float(edge * direction), ymax, rate, floor_at, below)


def decay_report(spectra, min_range=5.0, floor_rel=1e-15):
    """Gaussian decay envelopes of ``|Y|`` on each side of the λ-grid.

    For each sector and side the envelope is ``y_max exp(-rate (λ - λ_edge)²)``
    with ``rate`` the largest value that every sample above the roundoff
    floor respects.  ``Y^·`` decays toward ``+∞``, ``Y^Γ`` toward ``-∞``;
    the opposite sides are reported too, since mode truncation makes them
    decay as well.
    """
    nd, ng = spectra.norms()
    return {
        "dot+": _fit_side(spectra.lam, nd, +1, min_range, floor_rel),
        "dot-": _fit_side(spectra.lam, nd, -1, 0.0, floor_rel),
        "gamma-": _fit_side(spectra.lam, ng, -1, min_range, floor_rel),
        "gamma+": _fit_side(spectra.lam, ng, +1, 0.0, floor_rel),
    }


def sigma_function(density, what, reflected=False):
    """σ as a callable on arbitrary λ ≥ 0.

    ``reflected=True`` gives the third-quadrant version
    ``(1+λ²)^{1/2}(1 + |Y^·(-λ)|)``.
    """

    def sigma(lam):
        lam = np.asarray(lam, dtype=float)
        if density.empty:
            return np.sqrt(1 + lam**2)
        if reflected:
            amp = np.abs(what(-lam[:, None] + density.freqs[None, :])) ** 2 @ density.rho_dot
        else:
            amp = np.abs(what(lam[:, None] - density.freqs[None, :])) ** 2 @ density.rho_gamma
        return sigma_from(lam, np.sqrt(amp))

    return sigma
