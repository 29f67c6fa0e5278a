import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rabi_sidebands.eigensolver import (AmbiguousLabelError, ConvergenceError, NotSymmetricError, diagonalize,
                                        dressed_label, eigenvalues, find_dressed_state)
from rabi_sidebands.hamiltonian import (QubitSpec, SystemConfig, build_hamiltonian, flux_for_qubit_frequency,
                                        paper_modes)
from rabi_sidebands.operators import ModeSpec


def _sym(a):
    return a + a.T


@pytest.mark.parametrize("n", [1, 2, 3, 10, 64, 200])
def test_against_numpy_reference(n, rng):
    h = _sym(rng.standard_normal((n, n)))
    dec = diagonalize(h)
    ref = np.linalg.eigvalsh(h)
    assert np.allclose(dec.values, ref, atol=1e-11 * max(1.0, np.abs(ref).max()))
    assert np.allclose(eigenvalues(h), ref, atol=1e-11 * max(1.0, np.abs(ref).max()))
    v = dec.vectors
    assert np.linalg.norm(v.T @ v - np.eye(n)) < 1e-12 * n
    assert np.linalg.norm(h @ v - v * dec.values) < 1e-11 * np.linalg.norm(h)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (7, 7), elements=st.floats(-50, 50, allow_nan=False)))
def test_property_reconstruction(a):
    h = _sym(a)
    dec = diagonalize(h)
    v, lam = dec.vectors, dec.values
    scale = max(1.0, np.linalg.norm(h))
    assert np.linalg.norm(v @ np.diag(lam) @ v.T - h) < 1e-12 * scale
    assert np.all(np.diff(lam) >= 0)
    lead = np.argmax(np.abs(v), axis=0)
    assert np.all(v[lead, np.arange(7)] > 0)


def test_two_by_two_closed_form():
    a, b, c = 1.3, -0.4, 0.7
    h = np.array([[a, c], [c, b]])
    mid, rad = (a + b) / 2, math.hypot((a - b) / 2, c)
    assert np.allclose(diagonalize(h).values, [mid - rad, mid + rad], atol=1e-15)


def test_three_by_three_closed_form():
    # tridiagonal Toeplitz: eigenvalues a + 2 b cos(k pi / 4)
    a, b = 0.5, 1.2
    h = np.diag([a] * 3) + np.diag([b] * 2, 1) + np.diag([b] * 2, -1)
    ref = sorted(a + 2 * b * math.cos(k * math.pi / 4) for k in (1, 2, 3))
    assert np.allclose(diagonalize(h).values, ref, atol=1e-14)


def test_degenerate_cluster_is_canonical():
    h = np.diag([1.0, 2.0, 1.0, 3.0])
    dec = diagonalize(h)
    assert np.allclose(dec.values, [1, 1, 2, 3])
    assert np.allclose(np.abs(dec.vectors), np.eye(4)[:, [0, 2, 1, 3]])


def test_identity_and_zero():
    assert np.allclose(diagonalize(np.eye(5)).vectors, np.eye(5))
    assert np.allclose(diagonalize(np.zeros((4, 4))).values, 0.0)


def test_rejects_asymmetric_and_nonsquare():
    with pytest.raises(NotSymmetricError):
        diagonalize(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotSymmetricError):
        eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        diagonalize(np.ones((2, 3)))


def test_convergence_failure_reports():
    h = _sym(np.random.default_rng(1).standard_normal((30, 30)))
    with pytest.raises(ConvergenceError, match="did not converge"):
        diagonalize(h, max_iter=0)


def test_jaynes_cummings_vacuum_rabi_splitting():
    # qubit gap tuned onto the mode; at the degeneracy point the RWA coupling is g
    g = 0.05
    cfg = SystemConfig(QubitSpec(3.143, 500.0), (ModeSpec(1, 3.143, g, 6),), rwa=True)
    ev = diagonalize(build_hamiltonian(cfg, 0.0, "eigen")).values
    # ground is |g0> at -nu/2 + nu/2 = 0, then the split doublet
    assert ev[0] == pytest.approx(0.0, abs=1e-12)
    assert ev[2] - ev[1] == pytest.approx(2 * g, abs=1e-12)
    assert ev[4] - ev[3] == pytest.approx(2 * g * math.sqrt(2), abs=1e-12)


def test_dressed_labels_in_dispersive_regime(device):
    dec = diagonalize(build_hamiltonian(device, 0.8, "eigen"))
    sp = device.space("eigen")
    info = dressed_label(dec, 0)
    assert info.label == sp.label("g")
    assert not info.ambiguous
    k = find_dressed_state(dec, sp.label("g", {1: 1}))
    assert dressed_label(dec, k).label == sp.label("g", {1: 1})
    with pytest.raises(IndexError):
        dressed_label(dec, dec.dim)


def test_ambiguous_label_at_resonance(device):
    flux = flux_for_qubit_frequency(device.qubit, 9.42)
    assert 2.2 < flux < 2.5
    dec = diagonalize(build_hamiltonian(device, flux, "eigen"))
    sp = device.space("eigen")
    with pytest.raises(AmbiguousLabelError):
        find_dressed_state(dec, sp.label("e"))


def test_operator_matrix_keeps_basis(device):
    h = build_hamiltonian(device, 0.0)
    dec = diagonalize(h)
    assert dec.basis == h.basis
    with pytest.raises(ValueError):
        find_dressed_state(diagonalize(np.asarray(h.entries)), h.basis[0])


def test_large_paper_device_against_numpy():
    cfg = SystemConfig(QubitSpec(), paper_modes(True, (8, 2, 6)))
    h = build_hamiltonian(cfg, 1.0).entries
    ref = np.linalg.eigvalsh(h)
    assert np.max(np.abs(eigenvalues(h) - ref)) < 1e-10
