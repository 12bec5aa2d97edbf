r"""States of the truncated Dirac field and their worldline observables.

Every state is reduced to its "c-mode" correlation matrix
:math:`G_{IJ} = ⟨c_I^† c_J⟩` with :math:`c = (b_1,…,b_N,d_1^†,…,d_N^†)`;
for the vacuum :math:`G = Π_a = \mathrm{diag}(0_N, 1_N)`.

Quasifree states are labelled by a self-dual operator on the doubled
space :math:`ℂ^{2N}⊕ℂ^{2N}`,

.. math:: S = \begin{pmatrix} G & F \\ F^† & 𝟙 - G^T \end{pmatrix},
          \qquad F_{IJ} = ⟨c_I^† c_J^†⟩,

with conjugation :math:`ΓXΓ = Σ\bar XΣ` (Σ swaps the two halves).  The
two conditions :math:`0 ≤ S ≤ 𝟙` and :math:`S + ΓSΓ = 𝟙` then encode the
CAR positivity of the state.  Vector states (finite superpositions of Fock
vectors) are evaluated exactly by a small occupation-number engine.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectra, weights
from .errors import BasisMismatch, ConstraintProjectionFailed, SupportViolation
from .spinors import ValidationReport

# ---------------------------------------------------------------------------
# quasifree states


def _swap(n2):
    """Σ for a doubled space of total dimension ``2 * n2``."""
    z = np.zeros((n2, n2))
    e = np.eye(n2)
    return np.block([[z, e], [e, z]])


def gamma_conjugate(X):
    """``Γ X Γ`` for an operator on the doubled space."""
    n2 = X.shape[0] // 2
    S = _swap(n2)
    return S @ X.conj() @ S


@dataclass(frozen=True)
class QOperator:
    """Self-dual label ``S`` of a quasifree state and the vacuum label ``P``."""

    S: np.ndarray
    P: np.ndarray
    basis_id: tuple = ()

    @property
    def n_modes(self):
        return self.S.shape[0] // 4

    @property
    def G(self):
        """Correlation matrix ``⟨c_I† c_J⟩``."""
        n2 = 2 * self.n_modes
        return self.S[:n2, :n2]

    def gamma(self):
        return gamma_conjugate(self.S)


def vacuum_G(n):
    return np.diag(np.r_[np.zeros(n), np.ones(n)]).astype(complex)


def vacuum_projection(basis):
    n = basis.size
    Pa = vacuum_G(n)
    P = np.zeros((4 * n, 4 * n), dtype=complex)
    P[: 2 * n, : 2 * n] = Pa
    P[2 * n :, 2 * n :] = np.eye(2 * n) - Pa
    return QOperator(P, P.copy(), basis.fingerprint())


def quasifree_from_G(G, basis):
    """Charge-conserving quasifree state (``F = 0``) with correlation matrix ``G``."""
    n2 = 2 * basis.size
    G = np.asarray(G, dtype=complex)
    S = np.zeros((2 * n2, 2 * n2), dtype=complex)
    S[:n2, :n2] = G
    S[n2:, n2:] = np.eye(n2) - G.T
    return QOperator(S, vacuum_projection(basis).P, basis.fingerprint())


def validate_Q(Q, tol=1e-10):
    S = Q.S
    eig = np.linalg.eigvalsh(0.5 * (S + S.conj().T)) if S.size else np.zeros(0)
    spec = float(max(0.0, -eig.min(), eig.max() - 1)) if eig.size else 0.0
    res = {
        "hermitian": float(np.abs(S - S.conj().T).max(initial=0.0)),
        "spectrum": spec,
        "gamma": float(np.abs(S + Q.gamma() - np.eye(len(S))).max(initial=0.0)),
    }
    return ValidationReport(res, tol)


def _clip(S):
    lam, V = np.linalg.eigh(S)
    return (V * np.clip(lam, 0.0, 1.0)) @ V.conj().T


def project_constraints(S, tol=1e-10, max_iter=1000):
    """Alternate Γ-symmetrisation and spectral clipping until both constraints hold."""
    one = np.eye(len(S))
    for _ in range(max_iter):
        S = 0.5 * (S + S.conj().T)
        S = 0.5 * (S + one - gamma_conjugate(S))
        S = _clip(S)
        gam = np.abs(S + gamma_conjugate(S) - one).max(initial=0.0)
        eig = np.linalg.eigvalsh(S)
        if gam <= tol and eig.min(initial=0) >= -tol and eig.max(initial=0) <= 1 + tol:
            return S
    raise ConstraintProjectionFailed(f"constraint projection did not converge in {max_iter} steps")


def random_hadamard_Q(basis, rank, strength, seed):
    """Random quasifree state near the vacuum.

    A random hermitian perturbation ``D`` of rank ``rank`` and unit operator
    norm enters as ``P + ε (D - ΓDΓ)/2``, which is exactly Γ-compatible; the
    result is then projected onto ``0 <= S <= 1``.
    """
    if not 0 <= strength <= 1:
        raise ValueError("strength must lie in [0, 1]")
    n = basis.size
    if rank > n or rank < 0:
        raise ValueError("rank must satisfy 0 <= rank <= N")
    vac = vacuum_projection(basis)
    if strength == 0 or rank == 0 or n == 0:
        return vac
    rng = np.random.default_rng(seed)
    dim = 4 * n
    X = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    X, _ = np.linalg.qr(X)
    D = (X * rng.uniform(-1, 1, rank)) @ X.conj().T
    D /= np.abs(np.linalg.eigvalsh(D)).max()
    S = vac.P + strength * 0.5 * (D - gamma_conjugate(D))
    return QOperator(project_constraints(S), vac.P, basis.fingerprint())


# ---------------------------------------------------------------------------
# vector states


@dataclass(frozen=True)
class StateSpec:
    """Superposition ``Σ c_t |particles_t; antiparticles_t⟩`` over Fock vectors.

    Each occupation is a pair of tuples of mode indices.  The vector
    ``|p; a⟩`` is ``b†_{p1} b†_{p2} … d†_{a1} … |0⟩`` with both index lists
    ascending.
    """

    terms: tuple
    label: str = ""

    def __post_init__(self):
        clean = []
        for coef, parts, antis in self.terms:
            parts, antis = tuple(int(x) for x in parts), tuple(int(x) for x in antis)
            if len(set(parts)) != len(parts) or len(set(antis)) != len(antis):
                raise ValueError("repeated mode in an occupation set")
            clean.append((complex(coef), tuple(sorted(parts)), tuple(sorted(antis))))
        norm = sum(abs(c) ** 2 for c, _, _ in clean)
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"coefficients are not normalised (Σ|c|² = {norm})")
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def normalized(cls, terms, label=""):
        norm = np.sqrt(sum(abs(c) ** 2 for c, _, _ in terms))
        return cls(tuple((c / norm, p, a) for c, p, a in terms), label)

    def max_index(self):
        idx = [i for _, p, a in self.terms for i in p + a]
        return max(idx, default=-1)


def _vector(spec, n):
    """Map bitmask -> amplitude; bits 0..n-1 are b-modes, n..2n-1 d-modes."""
    vec = {}
    for coef, parts, antis in spec.terms:
        if any(i >= n for i in parts + antis):
            raise BasisMismatch("state refers to a mode outside the basis")
        mask = 0
        for i in parts:
            mask |= 1 << i
        for i in antis:
            mask |= 1 << (n + i)
        vec[mask] = vec.get(mask, 0) + coef
    return vec


def _sign(mask, p):
    return -1 if bin(mask & ((1 << p) - 1)).count("1") % 2 else 1


def _annihilate(mask, p):
    if not mask >> p & 1:
        return None, 0
    return mask ^ (1 << p), _sign(mask, p)


def _create(mask, p):
    if mask >> p & 1:
        return None, 0
    return mask | (1 << p), _sign(mask, p)


def fock_correlators(spec, n, bra=None):
    """``N[p,q] = ⟨a_p† a_q⟩`` and ``A[p,q] = ⟨a_p a_q⟩`` over the 2n fermion modes.

    With ``bra`` given, the transition elements ``⟨bra|…|spec⟩`` are returned.
    """
    vec = _vector(spec, n)
    left = vec if bra is None else _vector(bra, n)
    m = 2 * n
    Nc = np.zeros((m, m), dtype=complex)
    Ac = np.zeros((m, m), dtype=complex)
    for mask, c in vec.items():
        occ = [q for q in range(m) if mask >> q & 1]
        for q in occ:
            m1, s1 = _annihilate(mask, q)
            for p in range(m):
                m2, s2 = _create(m1, p)
                if m2 is not None and m2 in left:
                    Nc[p, q] += np.conj(left[m2]) * c * s1 * s2
                m3, s3 = _annihilate(m1, p)
                if m3 is not None and m3 in left:
                    Ac[p, q] += np.conj(left[m3]) * c * s1 * s3
    return Nc, Ac


def _overlap(bra, ket, n):
    left, right = _vector(bra, n), _vector(ket, n)
    return sum(np.conj(left[k]) * v for k, v in right.items() if k in left)


def G_from_spec(spec, basis, bra=None):
    """Correlation matrix ``⟨c_I† c_J⟩`` of a vector state (or transition element)."""
    n = basis.size
    Nc, Ac = fock_correlators(spec, n, bra)
    ov = 1.0 if bra is None else _overlap(bra, spec, n)
    # ⟨c_I† c_J⟩ with c = (b, d†); the d-d block uses d d† = 1 - d† d
    Nb, Ab = (Nc, Ac) if bra is None else fock_correlators(bra, n, spec)
    G = np.empty((2 * n, 2 * n), dtype=complex)
    G[:n, :n] = Nc[:n, :n]
    G[:n, n:] = Ab[n:, :n].T.conj()
    G[n:, :n] = Ac[n:, :n]
    G[n:, n:] = ov * np.eye(n) - Nc[n:, n:].T
    return G


def state_G(state, basis):
    if isinstance(state, QOperator):
        if state.n_modes != basis.size or (state.basis_id and state.basis_id != basis.fingerprint()):
            raise BasisMismatch("Q operator built on a different basis")
        return state.G
    if isinstance(state, StateSpec):
        return G_from_spec(state, basis)
    G = np.asarray(state, dtype=complex)
    if G.shape != (2 * basis.size, 2 * basis.size):
        raise BasisMismatch("correlation matrix has the wrong size")
    return G


# ---------------------------------------------------------------------------
# worldline blocks

BLOCKS = ("dGd", "Gdd", "ddG", "GdG")
BLOCK_SIGNS = {"dGd": -1, "Gdd": 1, "ddG": 1, "GdG": 1}
# labels: "d" = vacuum projection, "G" = its Γ-conjugate, middle letter = Q or Q^Γ
BLOCK_NAMES = {"dGd": "·Γ·", "Gdd": "Γ··", "ddG": "··Γ", "GdG": "Γ·Γ"}


@dataclass
class TwoPointBlocks:
    """The four sector blocks of the normal-ordered two-point function.

    Each block is stored by its mode-space label ``X``; the windowed kernel
    is ``ω_X(τ,τ')_{AB} = w(τ)w(τ') Σ conj(α_{IA}(τ)) X_{IJ} α_{JB}(τ')``.
    """

    cfg: object
    G: np.ndarray
    labels: dict = field(default_factory=dict)

    @property
    def normal(self):
        """``:ω: = -ω^{·Γ·} + ω^{Γ··} + ω^{··Γ} + ω^{Γ·Γ}``, i.e. ``G - P``."""
        return sum(BLOCK_SIGNS[k] * self.labels[k] for k in BLOCKS)

    def kernel(self, name, tau1=None, tau2=None):
        X = self.normal if name == "normal" else self.labels[name]
        return spectra.labelled_kernel(self.cfg, X, tau1, tau2)


def two_point_blocks(state, cfg):
    basis = cfg.basis
    n = basis.size
    G = state_G(state, basis)
    Pa = vacuum_G(n)
    Pp = np.eye(2 * n) - Pa
    labels = {
        "dGd": Pa @ (np.eye(2 * n) - G) @ Pa,
        "Gdd": Pp @ G @ Pa,
        "ddG": Pa @ G @ Pp,
        "GdG": Pp @ G @ Pp,
    }
    return TwoPointBlocks(cfg, G, labels)


@dataclass(frozen=True)
class EnergyDensitySamples:
    tau: np.ndarray
    rho: np.ndarray
    provenance: dict = field(default_factory=dict)


def energy_matrix(cfg):
    r""":math:`½(E_I+E_J)\,α_I^†α_J`, the coincidence limit of the point-split density."""
    alpha, E = cfg.cmodes()
    return 0.5 * (E[:, None] + E[None, :]) * (alpha.conj() @ alpha.T)


def density_at(blocks, tau):
    """Normal-ordered energy density on the worldline at the points ``tau``."""
    _, E = blocks.cfg.cmodes()
    C = energy_matrix(blocks.cfg) * blocks.normal
    tau = np.asarray(tau, dtype=float)
    ph = np.exp(1j * np.outer(tau, E))
    rho = np.einsum("ti,ij,tj->t", ph, C, ph.conj(), optimize=True)
    scale = np.abs(rho).max(initial=0.0)
    # the floor covers states whose density cancels to roundoff
    floor = 1e-14 * np.abs(C).sum()
    if np.abs(rho.imag).max(initial=0.0) > 1e-10 * scale + floor:
        raise ArithmeticError("energy density has a non-negligible imaginary part")
    return rho.real


def energy_density(blocks, frame=None, tau=None, state_id=""):
    """Samples of ``ρ(τ)``; derivatives enter analytically through mode phases.

    ``frame`` must match the frame the worldline configuration was built with.
    """
    if frame is not None and not np.allclose(frame.adjoints, blocks.cfg.frame.adjoints):
        raise BasisMismatch("frame differs from the worldline configuration's frame")
    tau = blocks.cfg.tau if tau is None else np.asarray(tau, float)
    prov = {"state": state_id, "basis": blocks.cfg.basis.fingerprint()}
    return EnergyDensitySamples(tau, density_at(blocks, tau), prov)


def density_finite_difference(blocks, tau, h=1e-4):
    """Point-split density by central differences of the unwindowed kernel (oracle)."""
    out = []
    for t in np.atleast_1d(tau):
        pts = np.array([t - h, t, t + h])
        K = spectra.labelled_kernel(blocks.cfg, blocks.normal, pts, pts, windowed=False)
        tr = np.einsum("aast->st", K)
        d2 = (tr[1, 2] - tr[1, 0]) / (2 * h)  # ∂_τ'
        d1 = (tr[2, 1] - tr[0, 1]) / (2 * h)  # ∂_τ
        out.append((0.5j * (d2 - d1)).real)
    return np.array(out)


def averaged_density(blocks, weight):
    """``∫ ρ(τ) f(τ) dτ`` by trapezoid on the weight's grid."""
    win = blocks.cfg.window
    lo, hi = weight.support()
    if not weight.is_zero() and (lo < win.tau_a or hi > win.tau_b):
        raise SupportViolation(f"weight support [{lo}, {hi}] leaves [{win.tau_a}, {win.tau_b}]")
    if weight.is_zero():
        return 0.0
    rho = density_at(blocks, weight.tau)
    return float(np.sum(rho * weight.f * weights.trapezoid_weights(weight.tau)))


def averaged_energy_matrix(cfg, weight):
    r"""Hermitian ``M_f`` with ``∫ρf = Σ_{IJ} (M_f)_{IJ} (G-P)_{IJ}``."""
    _, E = cfg.cmodes()
    fh = weight.fhat(E[:, None] - E[None, :])
    return energy_matrix(cfg) * fh


def _flat_amplitudes(cfg, lam, what=None):
    Phi = spectra.spectral_amplitudes(cfg, lam, what)
    n_lam, n2, _ = Phi.shape
    return Phi.transpose(1, 0, 2).reshape(n2, 4 * n_lam), n_lam


def w_transform(blocks, X, lam, what=None):
    r"""``W^X_{AB}(λ,λ') = Σ conj(Φ_{IA}(λ)) X_{IJ} Φ_{JB}(λ')``, shape ``(nλ, nλ, 4, 4)``."""
    F, n = _flat_amplitudes(blocks.cfg, lam, what)
    W = F.conj().T @ (X @ F)
    return W.reshape(n, 4, n, 4).transpose(0, 2, 1, 3)


def w_transforms(blocks, lam, what=None):
    """``W`` grids of the four blocks and of the assembled ``:ω:`` (key ``"normal"``)."""
    F, n = _flat_amplitudes(blocks.cfg, lam, what)
    out = {}
    for k in BLOCKS + ("normal",):
        X = blocks.normal if k == "normal" else blocks.labels[k]
        out[k] = (F.conj().T @ (X @ F)).reshape(n, 4, n, 4).transpose(0, 2, 1, 3)
    return out


def w_trace(blocks, lam, what=None):
    """``Σ_A W_{AA}(λ,λ')`` of ``:ω:``, all that ``J`` sees when θ vanishes."""
    Phi = spectra.spectral_amplitudes(blocks.cfg, lam, what)
    X = blocks.normal
    return sum(Phi[:, :, a].conj() @ X @ Phi[:, :, a].T for a in range(4))


# ---------------------------------------------------------------------------
# state families


def single_particle(basis, n, s, antiparticle=False):
    i = basis.index(n, s)
    occ = ((), (i,)) if antiparticle else ((i,), ())
    kind = "antiparticle" if antiparticle else "particle"
    return StateSpec(((1.0, *occ),), label=f"{kind} n={tuple(n)} s={s}")


def superposition(basis, amplitudes, antiparticle=False, label=""):
    """One-particle (or one-antiparticle) superposition ``Σ x_j b_j† |0⟩``."""
    x = np.asarray(amplitudes, dtype=complex)
    terms = [(c, (j,), ()) if not antiparticle else (c, (), (j,)) for j, c in enumerate(x) if abs(c) > 0]
    return StateSpec.normalized(terms, label)


def most_negative_one_particle(cfg, weight, sector="particle", which=0):
    """Superposition along the ``which``-th lowest eigenvector of the averaged density.

    Within the one-particle sector ``∫ρf = x† M x`` (particle block of
    ``M_f``) and within the one-antiparticle sector ``∫ρf = -y^T M ȳ``
    (antiparticle block), so the eigenvectors give the extremal states.
    """
    n = cfg.basis.size
    M = averaged_energy_matrix(cfg, weight)
    if sector == "particle":
        lam, V = np.linalg.eigh(M[:n, :n])
        x = V[:, which]
        return superposition(cfg.basis, x, label=f"negative particle packet {which}"), float(lam[which])
    lam, V = np.linalg.eigh(-M[n:, n:].T)
    y = V[:, which]
    return superposition(cfg.basis, y, True, label=f"negative antiparticle packet {which}"), float(lam[which])


def optimal_quasifree(cfg, weight):
    r"""Charge-conserving quasifree state minimising ``∫ρf`` at this truncation.

    ``∫ρf = Tr(M (G-P)^T)`` is minimised over ``0 ≤ G ≤ 1`` by letting
    ``G^T`` project onto the negative spectral subspace of ``M``.
    """
    M = averaged_energy_matrix(cfg, weight)
    lam, V = np.linalg.eigh(M)
    neg = V[:, lam < 0]
    G = (neg @ neg.conj().T).T
    value = float(lam[lam < 0].sum() - np.trace(M @ vacuum_G(cfg.basis.size)).real)
    return quasifree_from_G(G, cfg.basis), value


def transition_matrix(cfg, weight, specs):
    r"""Matrix ``⟨s| ∫:ρ:f |t⟩`` of the averaged density on the span of ``specs``.

    ``specs`` must be orthonormal Fock vectors.
    """
    basis = cfg.basis
    M = averaged_energy_matrix(cfg, weight)
    Pa = vacuum_G(basis.size)
    k = len(specs)
    out = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(i, k):
            dG = G_from_spec(specs[j], basis, bra=specs[i])
            if i == j:
                dG = dG - Pa
            out[i, j] = np.sum(M * dG)
            out[j, i] = np.conj(out[i, j])
    return out


def pair_witnesses(cfg, weight, count=3, pairs_per_family=12):
    """Vector states ``α|0⟩ + Σ β_ij b_i† d_j†|0⟩`` with negative averaged density.

    Pair families are formed from the pairs most strongly coupled to the
    vacuum by ``∫:ρ:f``; family ``k`` takes every ``count``-th pair in that
    ranking starting at ``k``, so the families are disjoint.  Each witness is
    the lowest eigenvector of the averaged density on span{vacuum, family}.

    Returns
    -------
    list of (StateSpec, float)
        States and their exact averaged densities.
    """
    basis = cfg.basis
    n = basis.size
    M = averaged_energy_matrix(cfg, weight)
    # ⟨0| ∫:ρ:f b_i† d_j† |0⟩ = M[i, n+j]
    coupling = np.abs(M[:n, n:]).ravel()
    order = np.argsort(-coupling, kind="stable")
    vac = StateSpec(((1.0, (), ()),), "vacuum")
    out = []
    for k in range(count):
        idx = order[k::count][:pairs_per_family]
        pairs = [StateSpec(((1.0, (int(i // n),), (int(i % n),)),)) for i in idx]
        specs = [vac] + pairs
        H = transition_matrix(cfg, weight, specs)
        lam, V = np.linalg.eigh(H)
        x = V[:, 0] * np.exp(-1j * np.angle(V[0, 0]))
        terms = [(x[0], (), ())] + [(x[i + 1], s.terms[0][1], s.terms[0][2]) for i, s in enumerate(pairs)]
        out.append((StateSpec.normalized(terms, label=f"pair witness {k}"), float(lam[0])))
    return out


def structured_states(cfg, weight, count=10):
    """A fixed family of vector states, ending with pair witnesses.

    The first six are simple Fock vectors and superpositions built on the
    two lowest frequency shells; the remaining ``count - 6`` are
    :func:`pair_witnesses`.  Returns ``(id, StateSpec)`` pairs.
    """
    basis = cfg.basis
    n = basis.size
    if n < 2 or count <= 0:
        return []
    w = np.round(basis.omega, 12)
    order = np.argsort(w, kind="stable")
    i0 = int(order[0])
    higher = [i for i in order if w[i] > w[i0]]
    i1 = int(higher[0]) if higher else int(order[1])
    same = [i for i in order if w[i] == w[i1] and i != i1]
    j1 = int(same[0]) if same else i0
    r = 1 / np.sqrt(2)
    simple = [
        ("particle", StateSpec(((1.0, (i0,), ()),))),
        ("antiparticle", StateSpec(((1.0, (), (i1,)),))),
        ("two-particle", StateSpec(((1.0, (i0, i1), ()),))),
        ("pair", StateSpec(((1.0, (i1,), (j1,)),))),
        ("vacuum-pair", StateSpec(((r, (), ()), (r, (i0,), (i1,))))),
        ("one-particle-superposition", StateSpec(((r, (i0,), ()), (r * np.exp(1j * np.pi / 3), (i1,), ())))),
    ]
    out = simple[:count]
    k = count - len(out)
    if k > 0:
        for idx, (spec, _) in enumerate(pair_witnesses(cfg, weight, k)):
            out.append((f"pair-witness-{idx}", spec))
    return out
