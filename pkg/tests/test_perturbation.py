import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabi_sidebands.eigensolver import eigenvalues
from rabi_sidebands.hamiltonian import (SystemConfig, build_hamiltonian, flux_for_qubit_frequency, mixing_angle,
                                        qubit_frequency)
from rabi_sidebands.perturbation import (GapViolationError, check_gap, coupling_table, default_coupling_kinds,
                                         dispersive_shift, effective_hamiltonian, effective_operator,
                                         effective_sideband_coupling, exact_effective_element,
                                         lowdin_effective_element, lowdin_series, minimal_order,
                                         predicted_drive_element, sw_generators, validate_against_exact,
                                         write_coupling_table)
from rabi_sidebands.spectroscopy import DispersiveRegimeError, Sideband


def _toy(delta, g):
    return np.array([[0.0, g], [g, delta]])


def test_second_order_toy_shift():
    delta, g = 2.0, 0.01
    assert dispersive_shift(_toy(delta, g), 0) == pytest.approx(-g * g / delta, rel=1e-12)
    exact = (delta - math.hypot(delta, 2 * g)) / 2
    assert dispersive_shift(_toy(delta, g), 0) == pytest.approx(exact, rel=1e-4)


def test_toy_three_level_effective_coupling():
    # |a> and |b> coupled only through |c>: H_eff_ab = g1 g2 / 2 (1/(Ea-Ec) + 1/(Eb-Ec))
    h = np.array([[0.0, 0.0, 0.02], [0.0, 0.3, 0.03], [0.02, 0.03, 5.0]])
    val = lowdin_effective_element(h, [0, 1], 0, 1, 2)
    assert val == pytest.approx(0.5 * 0.02 * 0.03 * (1 / -5.0 + 1 / (0.3 - 5.0)), rel=1e-14)
    assert lowdin_effective_element(h, [0, 1], 0, 1, 1) == 0.0


def _random_block_problem(seed, n=7, scale=0.05):
    r = np.random.default_rng(seed)
    e = np.sort(r.uniform(0, 10, n))
    e[:2] = [0.0, 0.4]
    e[2:] = np.maximum(e[2:], 2.0)
    v = r.normal(0, scale, (n, n))
    return np.diag(e) + v + v.T


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_explicit_sums_match_matrix_route(seed):
    h = _random_block_problem(seed)
    gen = sw_generators(h, [0, 1])
    for order, term in ((2, gen.h_terms[1]), (3, gen.h_terms[2])):
        for i, j in ((0, 0), (0, 1), (1, 1)):
            assert lowdin_effective_element(h, [0, 1], i, j, order) == pytest.approx(term[i, j], abs=1e-14)


def _block_error(h, order):
    heff = np.array([[lowdin_series(h, [0, 1], i, j, order)[-1] for j in (0, 1)] for i in (0, 1)])
    return np.max(np.abs(np.linalg.eigvalsh(heff) - eigenvalues(h)[:2]))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_series_converges_to_exact_block_eigenvalues(seed):
    h = _random_block_problem(seed, scale=0.02)
    errs = [_block_error(h, order) for order in (1, 2, 3)]
    assert errs[2] < errs[1] < errs[0]
    # the residual after third order is fourth order in the coupling
    d = np.diag(np.diag(h))
    ratio = _block_error(d + (h - d) / 2, 3) / errs[2]
    assert 1 / 24 < ratio < 1 / 10


def test_fourth_order_toy_shift():
    # E0 = (delta - sqrt(delta^2 + 4 g^2)) / 2 = -g^2/delta + g^4/delta^3 - ...
    delta, g = 2.0, 0.05
    gen = sw_generators(_toy(delta, g), [0])
    assert gen.h_terms[2][0, 0] == 0.0
    assert gen.h_terms[3][0, 0] == pytest.approx(g**4 / delta**3, rel=1e-12)


def test_quasi_degenerate_partner_in_model_space(device):
    # |g30> and |g01> are 9 MHz apart, so red(3) carries |g01> in its block
    c = effective_sideband_coupling(device, 0.8, Sideband.red(3, 1))
    assert [str(p) for p in c.partners] == ["|g01>"]
    assert c.to_dict()["quasi_degenerate_partners"] == ["|g01>"]
    assert effective_sideband_coupling(device, 0.8, Sideband.red(1, 1)).partners == ()


def test_sw_block_diagonalizes():
    h = _random_block_problem(5, scale=0.01)
    gen = sw_generators(h, [0, 1])
    heff = effective_hamiltonian(gen, 3)
    assert np.max(np.abs(heff[:2, 2:])) == 0.0
    assert np.allclose(np.linalg.eigvalsh(heff[:2, :2]), eigenvalues(h)[:2], atol=1e-8)
    d = np.diag(np.arange(7.0))
    assert np.array_equal(effective_operator(gen, d, 0), d)
    with pytest.raises(ValueError):
        effective_hamiltonian(gen, 5)
    with pytest.raises(ValueError):
        effective_operator(gen, d, 4)


def test_lowdin_argument_errors():
    h = _toy(1.0, 0.1)
    with pytest.raises(ValueError):
        lowdin_effective_element(h, [0], 0, 1, 2)
    with pytest.raises(ValueError):
        lowdin_effective_element(h, [0], 0, 0, 4)


def test_gap_check():
    check_gap(_toy(1.0, 0.1), [0])
    with pytest.raises(GapViolationError) as exc:
        check_gap(_toy(0.4, 0.1), [0])
    assert exc.value.pairs


def test_first_order_couplings(device):
    cos_t, sin_t = mixing_angle(device.qubit, 0.8)
    z = effective_sideband_coupling(device, 0.8, Sideband.longitudinal(1, 1))
    assert abs(z.value) == pytest.approx(0.306 * cos_t, rel=1e-12)
    r = effective_sideband_coupling(device, 0.8, Sideband.red(1, 3))
    assert abs(r.value) == pytest.approx(0.521 * sin_t, rel=1e-12)
    assert r.order == 1 and [str(p) for p in r.pair] == ["|g01>", "|e00>"]


def test_dispersive_shift_against_exact(device):
    h = build_hamiltonian(device, 0.8, "eigen")
    sp = device.space("eigen")
    i = sp.index(sp.label("g"))
    bare = h.entries[i, i]
    exact = eigenvalues(h)[0] - bare
    approx = dispersive_shift(h, i) - bare
    assert approx == pytest.approx(exact, rel=0.05)


def test_rwa_removes_first_order_blue(small_device):
    cfg = SystemConfig(small_device.qubit, small_device.modes, rwa=True)
    assert effective_sideband_coupling(cfg, 0.8, Sideband.blue(1, 1)).value == 0.0
    assert effective_sideband_coupling(small_device, 0.8, Sideband.blue(1, 1)).value != 0.0


def test_flux_symmetry_of_couplings(small_device):
    for kind in (Sideband.red(2, 1), Sideband.cross_mode(1, 3)):
        a = effective_sideband_coupling(small_device, 0.9, kind)
        b = effective_sideband_coupling(small_device, -0.9, kind)
        assert abs(a.value) == pytest.approx(abs(b.value), rel=1e-10)
        assert a.drive_element == pytest.approx(b.drive_element, rel=1e-10)


def test_guards_near_resonance(device):
    x = flux_for_qubit_frequency(device.qubit, 9.42)
    with pytest.raises(DispersiveRegimeError):
        effective_sideband_coupling(device, x, Sideband.red(1, 1))
    # the dispersive guard passes but |g30> and |g01> sit 9 MHz apart
    cfg = _weak(device, 4.0, 0.05)
    with pytest.raises(GapViolationError):
        effective_sideband_coupling(cfg, 4.0, Sideband.red(1, 1))


def _weak(config, flux, ratio):
    nu_q = qubit_frequency(config.qubit, flux)
    for m in config.modes:
        config = config.with_mode(m.index, g_ghz=ratio * abs(nu_q - m.omega_ghz))
    return config


@pytest.mark.parametrize("kind", [Sideband.red(1, 1), Sideband.red(2, 1), Sideband.red(3, 1), Sideband.blue(1, 1),
                                  Sideband.cross_mode(1, 3)])
def test_predicted_drive_element_at_weak_coupling(small_device, kind):
    cfg = _weak(small_device, 0.8, 0.01)
    assert validate_against_exact(cfg, 0.8, kind) < 0.05


def test_exact_effective_element_matches_series(small_device):
    cfg = _weak(small_device, 0.8, 0.01)
    for kind in (Sideband.red(1, 1), Sideband.red(2, 1)):
        c = effective_sideband_coupling(cfg, 0.8, kind)
        assert abs(exact_effective_element(cfg, 0.8, kind)) == pytest.approx(abs(c.value), rel=0.05)


def test_predicted_drive_element_bare_limit():
    h = np.diag([0.0, 1.0, 3.0])
    d = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert predicted_drive_element(h, d, 0, 1, 1) == pytest.approx(1.0)


def test_minimal_order():
    assert minimal_order(Sideband.red(3, 1)) == 3
    assert minimal_order(Sideband.cross_mode(1, 3)) == 2
    assert minimal_order(Sideband.longitudinal_cross(1, 3)) == 2
    with pytest.raises(ValueError):
        minimal_order(Sideband.zeroth())


def test_coupling_table_records_errors(device, tmp_path):
    x_res = flux_for_qubit_frequency(device.qubit, 9.42)
    kinds = default_coupling_kinds(device)
    assert Sideband.cross_mode(1, 3) in kinds
    rows = coupling_table(device, [0.8, x_res], kinds[:2])
    assert rows[0]["value_GHz"] is not None and "error" not in rows[0]
    assert rows[0]["detunings"]["1"]["minus_GHz"] == pytest.approx(qubit_frequency(device.qubit, 0.8) - 3.143)
    assert rows[2]["value_GHz"] is None and "dispersive" in rows[2]["error"]
    write_coupling_table(rows, tmp_path / "c.json")
    payload = json.loads((tmp_path / "c.json").read_text())
    assert payload["metadata"]["units"] == "GHz"
    assert len(payload["couplings"]) == 4


def test_paper_device_red_hierarchy(device):
    vals = [abs(effective_sideband_coupling(device, 0.8, Sideband.red(s, 1)).value) for s in (1, 2, 3)]
    assert vals[0] > vals[1] > vals[2] > 0
