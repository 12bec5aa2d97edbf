import numpy as np
import pytest

from qwei import spectra, spinors, weights
from qwei.errors import InsufficientRange, InvalidGrid, TruncationWarning


def test_window_is_one_on_interval_and_vanishes_at_grid_ends(small_cfg):
    w = small_cfg.window_samples
    tau = small_cfg.tau
    inside = (tau >= -8) & (tau <= 8)
    assert np.abs(w[inside] - 1).max() <= 1e-15
    assert w[0] < 1e-18 and w[-1] < 1e-18


def test_window_transform_matches_closed_form(small_cfg):
    lam = np.linspace(-10, 10, 81)
    quad = small_cfg.window_hat(lam)
    exact = small_cfg.window.ft(lam)
    assert np.abs(quad - exact).max() < 1e-12


def test_config_rejects_short_grid(small_basis):
    with pytest.raises(InvalidGrid):
        spectra.WorldlineConfig(small_basis, spectra.Window(-8, 8, 1.0), np.linspace(-15, 15, 600))


def test_mode_density_totals(small_cfg, small_basis):
    # unit spinors: summed over the frame index each mode carries 1/L³
    dens = spectra.mode_density(small_cfg)
    counts = np.array([np.isclose(small_basis.omega, w).sum() for w in dens.freqs])
    assert np.allclose(dens.rho_gamma.sum(axis=1), counts / small_basis.volume, rtol=1e-13)
    assert np.allclose(dens.rho_dot.sum(axis=1), counts / small_basis.volume, rtol=1e-13)


def test_vacuum_kernels_are_hermitian_and_positive(small_cfg):
    tau = np.linspace(-10, 10, 60)
    for sector in ("dot", "gamma"):
        K = spectra.worldline_twopoint(small_cfg, sector, tau)
        # K_AB(τ,τ') = conj K_BA(τ',τ)
        assert np.abs(K - K.conj().transpose(1, 0, 3, 2)).max() < 1e-14
        gram = K.transpose(2, 0, 3, 1).reshape(4 * len(tau), 4 * len(tau))
        ev = np.linalg.eigvalsh(gram)
        assert ev.min() >= -1e-10 * ev.sum()


def test_Y_mirror_symmetry_and_peaks(small_cfg, small_basis):
    lam = np.round(np.arange(-14, 14.0001, 0.05), 12)
    ref = spectra.reference_spectra(small_cfg, lam)
    nd, ng = ref.norms()
    # charge symmetry of the plane-wave basis: |Y^·(-λ)| = |Y^Γ(λ)|
    assert np.abs(nd[::-1] - ng).max() < 1e-12 * ng.max()
    # Y^Γ peaks near the positive mode frequencies, Y^· near the negative ones
    assert np.abs(lam[ng.argmax()] - small_basis.omega).min() < 0.1
    assert np.abs(lam[nd.argmax()] + small_basis.omega).min() < 0.1


@pytest.mark.filterwarnings("ignore::qwei.errors.TruncationWarning")
def test_Y_squared_is_diagonal_of_double_transform(small_cfg):
    # independent route: transform the sampled vacuum kernel in both arguments
    tau = small_cfg.tau[::2]
    lam = np.linspace(-4, 4, 17)
    ref = spectra.reference_spectra(small_cfg, np.linspace(-14, 14, 281))
    Yd = spectra.compute_Y(spectra.mode_density(small_cfg), small_cfg.window_hat, lam)
    for sector, Y in (("dot", Yd.Y_dot), ("gamma", Yd.Y_gamma)):
        K = spectra.worldline_twopoint(small_cfg, sector, tau)
        diag = spectra.double_transform_diagonal(np.einsum("aast->st", K), tau, lam)
        assert np.abs(diag.real - (Y**2).sum(axis=1)).max() < 1e-9 * (Y**2).sum(axis=1).max()
        assert np.abs(diag.imag).max() < 1e-9 * (Y**2).sum(axis=1).max()
    assert ref.sigma.min() >= 1.0


def test_compute_Y_warns_on_short_grid(small_cfg):
    with pytest.warns(TruncationWarning):
        spectra.reference_spectra(small_cfg, np.linspace(-2, 2, 41))


def test_empty_basis_spectra(gammas):
    b = spinors.build_mode_basis(6.3, 0.0, 0.5, gammas, allow_empty=True)
    cfg = spectra.WorldlineConfig(b, spectra.Window(-4, 4, 1.0), np.linspace(-24, 24, 800))
    ref = spectra.reference_spectra(cfg, np.linspace(-5, 5, 11))
    assert not ref.Y_dot.any() and not ref.Y_gamma.any()
    assert np.allclose(ref.sigma, np.sqrt(1 + ref.lam**2))


def test_decay_report(small_cfg, small_basis):
    lam = np.round(np.arange(-25, 25.0001, 0.1), 12)
    ref = spectra.reference_spectra(small_cfg, lam)
    fits = spectra.decay_report(ref)
    nd, _ = ref.norms()
    for key in ("dot+", "gamma-"):
        f = fits[key]
        assert f.rate > 0
        assert f.below_1e10_within_grid
    # the envelope dominates every sample past the edge
    f = fits["dot+"]
    x = lam[lam >= f.lam_edge + 1]
    y = nd[lam >= f.lam_edge + 1]
    env = f.y_max * np.exp(-f.rate * (x - f.lam_edge) ** 2)
    keep = y > 1e-15 * f.y_max
    assert np.all(y[keep] <= env[keep] * (1 + 1e-12))


def test_decay_report_needs_range(small_cfg):
    ref = spectra.reference_spectra(small_cfg, np.round(np.arange(-6, 6.0001, 0.1), 12))
    with pytest.raises(InsufficientRange):
        spectra.decay_report(ref, min_range=10.0)


def test_sigma_function_matches_sampled(small_cfg):
    lam = np.round(np.arange(-12, 12.0001, 0.1), 12)
    ref = spectra.reference_spectra(small_cfg, lam)
    dens = spectra.mode_density(small_cfg)
    s1 = spectra.sigma_function(dens, small_cfg.window_hat)
    s3 = spectra.sigma_function(dens, small_cfg.window_hat, reflected=True)
    pos = lam >= 0
    assert np.allclose(s1(lam[pos]), ref.sigma[pos], rtol=1e-13)
    assert np.allclose(s3(lam[pos]), ref.sigma_reflected[pos], rtol=1e-13)


def test_spectral_amplitudes_agree_with_kernel_transform(small_cfg):
    # Φ-route W against a brute-force 2-D trapezoid of the sampled kernel
    X = small_cfg.sector_projector("gamma")
    tau = small_cfg.tau
    lam = np.array([-1.3, 0.0, 1.2])
    Phi = spectra.spectral_amplitudes(small_cfg, lam)
    W = np.einsum("lia,ij,mjb->lmab", Phi.conj(), X, Phi)
    K = spectra.labelled_kernel(small_cfg, X, tau[::2], tau[::2])
    t = tau[::2]
    wts = weights.trapezoid_weights(t)
    e_minus = np.exp(-1j * np.outer(lam, t)) * wts
    e_plus = np.exp(1j * np.outer(lam, t)) * wts
    brute = np.einsum("ls,abst,mt->lmab", e_minus, K, e_plus)
    assert np.abs(brute - W).max() < 1e-10 * np.abs(W).max()
