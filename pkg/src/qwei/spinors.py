"""Dirac matrices, the spinor frame along the worldline and plane-wave modes.

Conventions: signature (+,-,-,-), tetrad indices lowered, so ``gammas[a]``
is :math:`γ_a` with :math:`γ_a γ_b + γ_b γ_a = 2 η_{ab}`.  Spinors are unit
normalised (:math:`u^† u = v^† v = 1`).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBasis

ETA = np.diag([1.0, -1.0, -1.0, -1.0])

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class GammaSet:
    """Four 4x4 Dirac matrices with lower tetrad index, shape ``(4, 4, 4)``."""

    gammas: np.ndarray

    def __post_init__(self):
        g = np.array(self.gammas, dtype=complex)
        g.setflags(write=False)
        object.__setattr__(self, "gammas", g)

    def slash(self, k0, kvec):
        r"""Return :math:`γ^a k_a` for contravariant momentum ``(k0, kvec)``."""
        # k_a = (k0, -kvec) and γ^a = η^{ab} γ_b
        out = k0 * self.gammas[0]
        for j in range(3):
            out = out + kvec[j] * self.gammas[j + 1]
        return out


@dataclass
class ValidationReport:
    """Max-norm residuals of a set of identities and the tolerance they must meet."""

    residuals: dict
    tolerance: float

    @property
    def passed(self):
        return all(r <= self.tolerance for r in self.residuals.values())

    @property
    def max_residual(self):
        return max(self.residuals.values(), default=0.0)


def build_standard_gammas():
    """Dirac (standard) representation: γ₀ = diag(1, 1, -1, -1)."""
    zero = np.zeros((2, 2), dtype=complex)
    one = np.eye(2, dtype=complex)
    g0 = np.block([[one, zero], [zero, -one]])
    # lower-index spatial matrices are minus the usual upper-index ones
    gk = [np.block([[zero, -s], [s, zero]]) for s in PAULI]
    return GammaSet(np.stack([g0, *gk]))


def verify_gamma_set(G, tol=1e-14):
    """Report the Clifford and standard-representation residuals of ``G``.

    The Clifford residual is the largest entry of
    ``γ_a γ_b + γ_b γ_a - 2 η_ab 1`` over all pairs; the adjointness residual
    the largest entry of ``γ_0 - γ_0†`` and ``γ_k + γ_k†``.
    """
    g = G.gammas
    eye = np.eye(4)
    clifford = 0.0
    for a in range(4):
        for b in range(4):
            r = g[a] @ g[b] + g[b] @ g[a] - 2 * ETA[a, b] * eye
            clifford = max(clifford, float(np.abs(r).max()))
    adjoint = float(np.abs(g[0] - g[0].conj().T).max())
    for k in range(1, 4):
        adjoint = max(adjoint, float(np.abs(g[k] + g[k].conj().T).max()))
    return ValidationReport({"clifford": clifford, "adjointness": adjoint}, tol)


@dataclass(frozen=True)
class FrameVectors:
    """Spinor frame ``v_A`` (rows of ``vectors``) and Dirac adjoints ``v_A^+``."""

    vectors: np.ndarray
    adjoints: np.ndarray

    def decomposition(self):
        r"""Return :math:`\sum_A v_A ⊗ v_A^+` as a 4x4 matrix."""
        return np.einsum("ai,aj->ij", self.vectors, self.adjoints)


def frame_vectors(G):
    """Standard-basis frame, for which Σ_A v_A ⊗ v_A⁺ = γ₀ exactly."""
    v = np.eye(4, dtype=complex)
    adj = v.conj() @ G.gammas[0]
    return FrameVectors(v, adj)


@dataclass(frozen=True)
class ModeBasis:
    """Plane-wave modes of the Dirac field on a periodic box of side ``L``.

    Attributes
    ----------
    n : (N, 3) int array
        Integer lattice labels, ``k = 2π n / L``.
    spin : (N,) int array
        Spin label 1 or 2.
    k, omega : arrays
        Wave vectors and frequencies ``sqrt(|k|² + m²)``.
    u, v : (N, 4) complex arrays
        Particle spinor ``u_s(k)`` and antiparticle spinor ``v_s(k)``.
    """

    L: float
    m: float
    k_max: float
    gammas: GammaSet
    n: np.ndarray
    spin: np.ndarray
    k: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    v: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.omega)

    @property
    def volume(self):
        return self.L**3

    def index(self, n, s):
        """Position of mode ``(n, s)`` in the ordered mode list."""
        key = tuple(int(x) for x in n)
        for i, (nn, ss) in enumerate(zip(self.n, self.spin)):
            if tuple(nn) == key and ss == s:
                return i
        raise KeyError(f"mode {key}, s={s} not in basis")

    def fingerprint(self):
        return (float(self.L), float(self.m), float(self.k_max), self.size)


def _spinors(kvec, omega, m):
    sk = np.einsum("j,jab->ab", kvec, PAULI)
    norm = np.sqrt((omega + m) / (2 * omega))
    us, vs = [], []
    for chi in np.eye(2, dtype=complex):
        us.append(norm * np.concatenate([chi, sk @ chi / (omega + m)]))
        vs.append(norm * np.concatenate([sk @ chi / (omega + m), chi]))
    return us, vs


def build_mode_basis(L, m, K_max, G, allow_empty=False):
    """Enumerate modes ``|k| <= K_max``, lexicographic in ``n`` then spin.

    The ``k = 0`` mode is dropped for ``m = 0``, where its frequency vanishes.
    """
    if L <= 0 or m < 0 or K_max <= 0:
        raise ValueError("need L > 0, m >= 0, K_max > 0")
    dk = 2 * np.pi / L
    nmax = int(np.floor(K_max / dk))
    rows = {"n": [], "spin": [], "k": [], "omega": [], "u": [], "v": []}
    excluded = False
    for n in itertools.product(range(-nmax, nmax + 1), repeat=3):
        kvec = dk * np.array(n, dtype=float)
        kk = float(np.sqrt(kvec @ kvec))
        if kk > K_max * (1 + 1e-12):
            continue
        if m == 0 and kk == 0:
            excluded = True
            continue
        omega = float(np.sqrt(kk**2 + m**2))
        us, vs = _spinors(kvec, omega, m)
        for s in (1, 2):
            rows["n"].append(n)
            rows["spin"].append(s)
            rows["k"].append(kvec)
            rows["omega"].append(omega)
            rows["u"].append(us[s - 1])
            rows["v"].append(vs[s - 1])
    if not rows["n"] and not allow_empty:
        raise EmptyBasis(f"no lattice modes with |k| <= {K_max} for L={L}, m={m}")
    return ModeBasis(
        L=float(L),
        m=float(m),
        k_max=float(K_max),
        gammas=G,
        n=np.array(rows["n"], dtype=int).reshape(-1, 3),
        spin=np.array(rows["spin"], dtype=int),
        k=np.array(rows["k"], dtype=float).reshape(-1, 3),
        omega=np.array(rows["omega"], dtype=float),
        u=np.array(rows["u"], dtype=complex).reshape(-1, 4),
        v=np.array(rows["v"], dtype=complex).reshape(-1, 4),
        metadata={"massless_zero_mode_excluded": excluded},
    )


def mode_residuals(basis):
    """Largest Dirac-equation, orthonormality and completeness residuals."""
    G = basis.gammas
    eye = np.eye(4)
    dirac = ortho = complete = 0.0
    for i in range(basis.size):
        ks = G.slash(basis.omega[i], basis.k[i])
        dirac = max(
            dirac,
            float(np.linalg.norm((ks - basis.m * eye) @ basis.u[i])),
            float(np.linalg.norm((ks + basis.m * eye) @ basis.v[i])),
        )
    for nvec in {tuple(n) for n in basis.n}:
        idx = [i for i in range(basis.size) if tuple(basis.n[i]) == nvec]
        try:
            opp = [basis.index([-x for x in nvec], s) for s in (1, 2)]
        except KeyError:
            continue
        U = basis.u[idx].T
        V = basis.v[opp].T
        ortho = max(
            ortho,
            float(np.abs(U.conj().T @ U - np.eye(2)).max()),
            float(np.abs(V.conj().T @ V - np.eye(2)).max()),
            float(np.abs(U.conj().T @ V).max()),
        )
        complete = max(complete, float(np.abs(U @ U.conj().T + V @ V.conj().T - eye).max()))
    return {"dirac": dirac, "orthonormality": ortho, "completeness": complete}
