r"""Weight functions :math:`f = g^2` and their Fourier transforms.

Transforms use the convention :math:`\hat h(λ) = \int e^{iλτ} h(τ)\,dτ`,
inverse :math:`\check h(τ) = (2π)^{-1}\int e^{-iλτ} h(λ)\,dλ`.  All integrals
are trapezoidal sums on uniform grids; the integrands are smooth and
compactly supported, where the trapezoid rule converges faster than any
power of the step.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, InvalidGrid, TruncationWarning

# Sign of the exponent in the forward transform.  Tests flip it to check
# that the quadrant-structure diagnostics notice a convention error.
_SIGN = 1

_CHUNK = 512


def uniform_step(x, rtol=1e-9):
    """Spacing of a uniform grid, or ``InvalidGrid`` if ``x`` is not uniform."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise InvalidGrid("grid needs at least two points")
    d = np.diff(x)
    h = (x[-1] - x[0]) / (len(x) - 1)
    if h <= 0 or np.abs(d - h).max() > rtol * max(abs(h), 1.0):
        raise InvalidGrid("grid is not uniform and increasing")
    return float(h)


def trapezoid_weights(x):
    h = uniform_step(x)
    w = np.full(len(x), h)
    w[0] = w[-1] = h / 2
    return w


@dataclass(frozen=True)
class SpectralFunction:
    """Complex samples of a transform on a λ-grid."""

    lam: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def step(self):
        return uniform_step(self.lam)


def fourier_at(h, tau, lam):
    """Trapezoidal :math:`\\int e^{iλτ} h(τ) dτ` at arbitrary points ``lam``.

    ``h`` may carry leading batch axes; the last axis runs over ``tau``.
    """
    wts = trapezoid_weights(tau)
    h = np.asarray(h)
    lam = np.asarray(lam, dtype=float)
    flat = lam.ravel()
    out = np.empty(h.shape[:-1] + (flat.size,), dtype=complex)
    hw = h * wts
    for s in range(0, flat.size, _CHUNK):
        phase = np.exp(_SIGN * 1j * np.outer(tau, flat[s : s + _CHUNK]))
        out[..., s : s + _CHUNK] = hw @ phase
    return out.reshape(h.shape[:-1] + lam.shape)


def _fourier_extended(h, tau, lam):
    """:func:`fourier_at` for a 1-D ``h`` carried out in ``np.longdouble``.

    The nodes are taken as the exact progression ``τ_0 + j dτ`` and the
    phase is factorised as ``e^{iλ(τ_0 + Qp dτ)} e^{iλq dτ}`` with
    ``j = Qp + q``, so only about ``2√n`` extended-precision trig calls are
    needed per point.  Returns the real and imaginary parts.  On platforms
    where ``longdouble`` is plain double this reduces to ordinary precision.
    """
    ld = np.longdouble
    n = len(tau)
    Q = int(np.ceil(np.sqrt(n)))
    P = -(-n // Q)
    hw = np.zeros(P * Q, dtype=ld)
    hw[:n] = np.asarray(h, dtype=ld) * trapezoid_weights(tau).astype(ld)
    H = hw.reshape(P, Q).T
    t0 = ld(tau[0])
    dt = (ld(tau[-1]) - t0) / ld(n - 1)
    x = np.asarray(lam, dtype=ld).ravel()
    inner_arg = np.outer(x, dt * np.arange(Q, dtype=ld))
    outer_arg = np.outer(x, t0 + dt * Q * np.arange(P, dtype=ld))
    # real matmuls only: complex longdouble has no fast loops
    in_re = np.cos(inner_arg) @ H
    in_im = _SIGN * (np.sin(inner_arg) @ H)
    c, s = np.cos(outer_arg), _SIGN * np.sin(outer_arg)
    return (c * in_re - s * in_im).sum(axis=1), (c * in_im + s * in_re).sum(axis=1)


def fourier(h, tau, lam):
    """Transform samples ``h`` on ``tau`` onto the uniform grid ``lam``."""
    uniform_step(lam)
    vals = fourier_at(h, tau, lam)
    return SpectralFunction(np.asarray(lam, dtype=float), vals, {"source": "trapezoid"})


def inverse_fourier(spec, tau):
    r"""Trapezoidal :math:`(2π)^{-1}\int e^{-iλτ} \hat h(λ) dλ` on ``tau``."""
    wts = trapezoid_weights(spec.lam) / (2 * np.pi)
    tau = np.asarray(tau, dtype=float)
    phase = np.exp(-_SIGN * 1j * np.outer(tau, spec.lam))
    return phase @ (spec.values * wts)


def convolve(h1, h2):
    r"""Convolution :math:`\int dλ'/(2π)\, h_1(λ-λ') h_2(λ')` on the summed grid."""
    d1, d2 = h1.step, h2.step
    if abs(d1 - d2) > 1e-12 * max(d1, d2):
        raise GridMismatch(f"grid steps differ: {d1} vs {d2}")
    vals = np.convolve(h1.values, h2.values) * d1 / (2 * np.pi)
    lo = h1.lam[0] + h2.lam[0]
    lam = lo + d1 * np.arange(len(vals))
    return SpectralFunction(lam, vals, {"source": "convolution"})


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.zeros_like(t)
    inner = (t > 0) & (t < 1)
    a = np.exp(-1.0 / t[inner])
    b = np.exp(-1.0 / (1.0 - t[inner]))
    out[inner] = a / (a + b)
    out[t >= 1] = 1.0
    return out


def bump(x, radius):
    """Mollifier equal to 1 on ``|x| <= radius/2`` and 0 on ``|x| >= radius``."""
    half = radius / 2
    return 1.0 - smooth_step((np.abs(x) - half) / half)


@dataclass(frozen=True)
class Weight:
    """A weight ``f = g**2`` sampled on a uniform τ-grid.

    Only ``g`` is ever supplied; ``f`` is derived so that membership in the
    class of squares of smooth real functions holds by construction.
    """

    tau: np.ndarray
    g: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        g = np.asarray(self.g, dtype=float)
        uniform_step(tau)
        if g.shape != tau.shape:
            raise InvalidGrid("g and tau differ in length")
        if g[0] != 0 or g[-1] != 0:
            raise InvalidGrid("g must vanish at the grid endpoints")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "g", g)

    @property
    def f(self):
        return self.g**2

    @property
    def dtau(self):
        return uniform_step(self.tau)

    def integral(self):
        return float(np.sum(self.f * trapezoid_weights(self.tau)))

    def support(self):
        """Smallest interval containing every nonzero sample of ``g``."""
        nz = np.nonzero(self.g)[0]
        if nz.size == 0:
            return (0.0, 0.0)
        h = self.dtau
        return (float(self.tau[nz[0]] - h), float(self.tau[nz[-1]] + h))

    def ghat(self, lam):
        return fourier_at(self.g, self.tau, lam)

    def fhat(self, lam):
        return fourier_at(self.f, self.tau, lam)

    def is_zero(self):
        return not np.any(self.g)

    def reflected(self):
        """The weight with ``g(τ) -> g(-τ)`` on the mirrored grid."""
        return Weight(-self.tau[::-1], self.g[::-1].copy(), dict(self.descriptor, reflected=True))

    def resample(self, tau):
        """Cubic-spline resampling of ``g`` onto another uniform grid."""
        from scipy.interpolate import CubicSpline

        tau = np.asarray(tau, dtype=float)
        spline = CubicSpline(self.tau, self.g, bc_type="clamped")
        g = np.where((tau > self.tau[0]) & (tau < self.tau[-1]), spline(tau), 0.0)
        return Weight(tau, g, dict(self.descriptor))


def windowed_gaussian(center, width, support_radius, dtau, tau=None):
    """Gaussian ``g`` cut off smoothly at ``support_radius`` around ``center``.

    ``g(τ) = exp(-(τ-center)²/(2 width²)) * bump(τ - center)``.  When ``tau``
    is omitted a grid of step ``dtau`` covering the support is built.
    """
    if width <= 0 or support_radius <= 0:
        raise InvalidGrid("width and support_radius must be positive")
    if dtau > width / 8:
        raise InvalidGrid(f"dtau={dtau} does not resolve width={width} (need dtau <= width/8)")
    if tau is None:
        n = int(np.ceil(support_radius / dtau)) + 1
        tau = center + dtau * np.arange(-n, n + 1)
    else:
        tau = np.asarray(tau, dtype=float)
        if uniform_step(tau) > width / 8 * (1 + 1e-12):
            raise InvalidGrid("tau grid does not resolve the weight width")
        if tau[0] > center - support_radius or tau[-1] < center + support_radius:
            raise InvalidGrid("tau grid does not cover the weight support")
    x = tau - center
    g = np.exp(-(x**2) / (2 * width**2)) * bump(x, support_radius)
    g[np.abs(x) >= support_radius] = 0.0
    desc = {
        "kind": "windowed_gaussian",
        "center": float(center),
        "width": float(width),
        "support_radius": float(support_radius),
    }
    return Weight(tau, g, desc)


def weight_from_samples(pairs, tau=None):
    """Weight from explicit ``(τ, g)`` pairs on a uniform grid."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidGrid("samples must be a list of (tau, g) pairs")
    w = Weight(arr[:, 0], arr[:, 1], {"kind": "samples"})
    return w.resample(tau) if tau is not None else w


def zero_weight(tau):
    tau = np.asarray(tau, dtype=float)
    return Weight(tau, np.zeros_like(tau), {"kind": "zero"})


def spectral_extent(weight, rel=1e-17, probe_max=400.0, step=0.25):
    """Half-width beyond which ``|ĝ|²`` stays below ``rel`` times its peak.

    The probe stops at half the Nyquist frequency ``π/dτ``, beyond which the
    trapezoidal transform starts to repeat itself.
    """
    if weight.is_zero():
        return 0.0
    probe_max = min(probe_max, 0.5 * np.pi / weight.dtau)
    grid = np.arange(-probe_max, probe_max + step, step)
    p = np.abs(weight.ghat(grid)) ** 2
    above = np.nonzero(p > rel * p.max())[0]
    if max(abs(grid[above[0]]), abs(grid[above[-1]])) >= probe_max - step:
        warnings.warn("ĝ does not decay within the resolvable band", TruncationWarning, stacklevel=2)
    return float(max(abs(grid[above[0]]), abs(grid[above[-1]]))) + step


def kernel_identity(weight, lam, lam2, mu_step=0.05, extent=None, tail_tol=1e-12):
    r"""Both sides of :math:`(λ+λ')\hat f(λ-λ') = \int dμ/π\, μ\,\hat g(λ-μ)\overline{\hat g(λ'-μ)}`.

    Parameters
    ----------
    weight : Weight
    lam, lam2 : float
    mu_step : float
        Step of the μ quadrature.
    extent : float, optional
        Half-width of the numerical support of ``ĝ``; measured if omitted.

    Returns
    -------
    lhs, rhs : complex
    """
    if extent is None:
        extent = spectral_extent(weight)
    if weight.is_zero():
        return 0j, 0j
    # both sides in extended precision: where f̂(λ-λ') is ~1e-11 of its peak
    # the double-precision roundoff of ĝ alone would cost ~1e-6 relative
    g = np.asarray(weight.g, dtype=np.longdouble)
    fr, fi = _fourier_extended(g * g, weight.tau, [lam - lam2])
    lhs = (lam + lam2) * complex(float(fr[0]), float(fi[0]))
    lo = min(lam, lam2) - extent
    hi = max(lam, lam2) + extent
    n = int(np.ceil((hi - lo) / mu_step))
    mu = lo + mu_step * np.arange(n + 1)
    ar, ai = _fourier_extended(g, weight.tau, lam - mu)
    br, bi = _fourier_extended(g, weight.tau, lam2 - mu)
    w = trapezoid_weights(mu).astype(np.longdouble) * mu
    re = np.sum(w * (ar * br + ai * bi)) / np.pi
    im = np.sum(w * (ai * br - ar * bi)) / np.pi
    rhs = complex(float(re), float(im))
    a = ar.astype(float) + 1j * ai.astype(float)
    b = br.astype(float) + 1j * bi.astype(float)
    edge = max(abs(a[0]) ** 2, abs(a[-1]) ** 2, abs(b[0]) ** 2, abs(b[-1]) ** 2)
    peak = max(np.abs(a).max() ** 2, np.abs(b).max() ** 2)
    if edge > tail_tol * peak:
        warnings.warn(
            f"|ĝ|² at the μ-grid edge is {edge / peak:.2e} of its peak", TruncationWarning, stacklevel=2
        )
    return lhs, complex(rhs)
