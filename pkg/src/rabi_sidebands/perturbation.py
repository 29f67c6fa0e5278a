"""Numerical quasi-degenerate perturbation theory (Loewdin partitioning / Schrieffer-Wolff).

The Hamiltonian is split as H = H0 + V with H0 = diag(H) in the bare
(qubit-eigenbasis x Fock) basis.  A block A of bare states is decoupled from
its complement B order by order.

Two routes are provided:

* :func:`lowdin_effective_element` evaluates the explicit second- and
  third-order sums for a single element of the effective Hamiltonian.
* :func:`sw_generators` builds the anti-Hermitian generators S1, S2, S3 as
  matrices, which also transforms the pump operator tau_z into the block
  (:func:`effective_operator`).  The transformed pump, re-diagonalized inside
  the block, predicts the dressed sideband amplitude that exact
  diagonalization measures.

For a sideband the block is the bare pair plus every bare state lying within
QUASI_DEGENERATE_GHZ of either member (e.g. |g30> and |g01>, 9 MHz apart in
the measured device).  Such partners are coupled to the pair only at high
order, so a two-state block would put a tiny denominator in the series.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .hamiltonian import SystemConfig, build_hamiltonian, detunings, drive_operator, is_dispersive
from .operators import BasisLabel, OperatorMatrix
from .spectroscopy import (DispersiveRegimeError, Sideband, dressed_pair, eigen_problem,
                           sideband_matrix_element)

MIN_DENOMINATOR_GHZ = 1e-6
GAP_FACTOR = 5.0
QUASI_DEGENERATE_GHZ = 0.05


class GapViolationError(ValueError):
    """Block not separated from its complement; carries the offending (block, complement) pairs."""

    def __init__(self, message: str, pairs: Sequence[tuple] = ()):
        super().__init__(message)
        self.pairs = list(pairs)


def _split(h) -> tuple[np.ndarray, np.ndarray, tuple | None]:
    basis = h.basis if isinstance(h, OperatorMatrix) else None
    m = np.asarray(h, dtype=float)
    e = m.diagonal().copy()
    v = m - np.diag(e)
    return e, v, basis


def _block_mask(n: int, block: Sequence[int]) -> np.ndarray:
    in_a = np.zeros(n, dtype=bool)
    idx = list(block)
    if not idx:
        raise ValueError("block must contain at least one state")
    if min(idx) < 0 or max(idx) >= n:
        raise IndexError(f"block index out of range for dim {n}")
    in_a[idx] = True
    return in_a


def check_gap(h, block: Sequence[int], factor: float = GAP_FACTOR) -> None:
    """Raise GapViolationError if a block state couples to a complement state across a small gap.

    Every directly coupled pair (a in block, l outside) must satisfy
    |E_a - E_l| > factor * |V_al|.
    """
    e, v, basis = _split(h)
    in_a = _block_mask(len(e), block)
    a_idx, l_idx = np.where(in_a[:, None] & ~in_a[None, :] & (v != 0))
    gap = np.abs(e[a_idx] - e[l_idx])
    bad = gap <= factor * np.abs(v[a_idx, l_idx])
    if bad.any():
        name = (lambda k: str(basis[k])) if basis is not None else (lambda k: str(k))
        pairs = [(name(a), name(l)) for a, l in zip(a_idx[bad], l_idx[bad])]
        shown = ", ".join(f"{a}~{l}" for a, l in pairs[:8])
        raise GapViolationError(
            f"{len(pairs)} block/complement pair(s) closer than {factor} x coupling: {shown}", pairs)


def _inverse_gaps(e_ref: np.ndarray, e_b: np.ndarray, weight: np.ndarray, what: str) -> np.ndarray:
    """1/(e_ref - e_b), refusing small denominators that multiply a nonzero weight."""
    den = e_ref[..., None] - e_b if np.ndim(e_ref) else e_ref - e_b
    small = np.abs(den) < MIN_DENOMINATOR_GHZ
    if np.any(small & (weight != 0)):
        raise GapViolationError(f"energy denominator below {MIN_DENOMINATOR_GHZ} GHz in {what}")
    out = np.zeros_like(den, dtype=float)
    np.divide(1.0, den, out=out, where=~small)
    return out


def lowdin_effective_element(h, block: Sequence[int], i: int, j: int, order: int) -> float:
    """Contribution of the given order (1, 2 or 3) to H_eff[i, j] for block states i, j.

    order 1: H_ij (including the bare energy when i == j)
    order 2: 1/2 sum_l V_il V_lj [1/(E_i - E_l) + 1/(E_j - E_l)]
    order 3: -1/2 sum_{l, m} [V_il V_lm V_mj / ((E_j - E_l)(E_m - E_l))
                             + V_im V_ml V_lj / ((E_i - E_l)(E_m - E_l))]
             +1/2 sum_{l, l'} V_il V_ll' V_l'j [1/((E_i - E_l)(E_i - E_l'))
                                                + 1/((E_j - E_l)(E_j - E_l'))]
    with l, l' in the complement and m in the block.  Sum over orders 1..k
    gives the effective element through order k.
    """
    e, v, _ = _split(h)
    in_a = _block_mask(len(e), block)
    if not (in_a[i] and in_a[j]):
        raise ValueError("i and j must both belong to the block")
    if order == 1:
        return float(np.asarray(h, dtype=float)[i, j])
    b = np.flatnonzero(~in_a)
    a = np.flatnonzero(in_a)
    if b.size == 0:
        return 0.0
    eb = e[b]
    v_ib, v_bj = v[i, b], v[b, j]
    w = np.abs(v_ib) + np.abs(v_bj)
    inv_i = _inverse_gaps(e[i], eb, w, "order 2")
    inv_j = _inverse_gaps(e[j], eb, w, "order 2")
    if order == 2:
        return float(0.5 * np.sum(v_ib * v_bj * (inv_i + inv_j)))
    if order != 3:
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    v_bb = v[np.ix_(b, b)]
    # block-internal intermediate m
    v_ba = v[np.ix_(b, a)]  # V_lm
    inv_ma = _inverse_gaps(e[a], eb, v_ba.T, "order 3")  # [m, l] = 1/(E_m - E_l)
    t1 = np.einsum("l,lm,m,l,ml->", v_ib, v_ba, v[a, j], inv_j, inv_ma)
    t2 = np.einsum("m,ml,l,l,ml->", v[i, a], v_ba.T, v_bj, inv_i, inv_ma)
    xi, xj = v_ib * inv_i, v_ib * inv_j
    yi, yj = v_bj * inv_i, v_bj * inv_j
    t3 = xi @ v_bb @ yi + xj @ v_bb @ yj
    return float(-0.5 * (t1 + t2) + 0.5 * t3)


def lowdin_series(h, block: Sequence[int], i: int, j: int, max_order: int = 3) -> np.ndarray:
    """Cumulative H_eff[i, j] through orders 1..max_order."""
    terms = [lowdin_effective_element(h, block, i, j, k) for k in range(1, max_order + 1)]
    return np.cumsum(terms)


def _comm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x @ y - y @ x


@dataclass(frozen=True)
class SWGenerators:
    """Generators S1..S3 and effective-Hamiltonian terms (order 0+1, 2, 3, 4) for a block."""

    s: tuple[np.ndarray, np.ndarray, np.ndarray]
    h_terms: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    block: tuple[int, ...]


def sw_generators(h, block: Sequence[int]) -> SWGenerators:
    """Schrieffer-Wolff generators to third order, as dense matrices.

    With L(X)_ab = X_ab / (E_a - E_b) on block-off-diagonal entries and
    V = V_d (block-diagonal) + V_o (block-off-diagonal):

        S1 = L(V_o)
        S2 = L([S1, V_d])
        S3 = L([S2, V_d] + [S1, [S1, V_o]] / 3)
        H_eff = H0 + V_d + [S1, V_o]/2 + [S2, V_o]/2
                + [S3, V_o]/2 - [S1, [S1, [S1, V_o]]]/24 + O(V^5)
    """
    e, v, _ = _split(h)
    in_a = _block_mask(len(e), block)
    off = in_a[:, None] != in_a[None, :]
    den = e[:, None] - e[None, :]

    def lift(x):
        small = off & (np.abs(den) < MIN_DENOMINATOR_GHZ)
        if np.any(small & (np.abs(x) > 1e-15)):
            raise GapViolationError(f"energy denominator below {MIN_DENOMINATOR_GHZ} GHz in SW generator")
        out = np.zeros_like(x)
        ok = off & ~small
        out[ok] = x[ok] / den[ok]
        return out

    v_o = np.where(off, v, 0.0)
    v_d = v - v_o
    s1 = lift(v_o)
    s2 = lift(_comm(s1, v_d))
    s3 = lift(_comm(s2, v_d) + _comm(s1, _comm(s1, v_o)) / 3.0)
    h4 = 0.5 * _comm(s3, v_o) - _comm(s1, _comm(s1, _comm(s1, v_o))) / 24.0
    h_terms = (np.diag(e) + v_d, 0.5 * _comm(s1, v_o), 0.5 * _comm(s2, v_o), h4)
    return SWGenerators((s1, s2, s3), h_terms, tuple(int(k) for k in block))


def effective_hamiltonian(gen: SWGenerators, order: int) -> np.ndarray:
    """H0 + V_d through the given order (1..4) of the block-diagonalized Hamiltonian."""
    if order < 1 or order > 4:
        raise ValueError("order must be 1, 2, 3 or 4")
    return sum(gen.h_terms[:order])


def effective_operator(gen: SWGenerators, op, order: int) -> np.ndarray:
    """exp(S) O exp(-S) expanded through the given order (0..3) in the coupling."""
    if order < 0 or order > 3:
        raise ValueError("order must be 0..3")
    d = np.asarray(op, dtype=float)
    s1, s2, s3 = gen.s
    c1d = _comm(s1, d)
    terms = [d, c1d]
    if order >= 2:
        terms.append(_comm(s2, d) + 0.5 * _comm(s1, c1d))
    if order >= 3:
        c2d = _comm(s2, d)
        terms.append(_comm(s3, d) + 0.5 * (_comm(s1, c2d) + _comm(s2, c1d)) + _comm(s1, _comm(s1, c1d)) / 6.0)
    return sum(terms[:order + 1])


def quasi_degenerate_partners(h, i: int, f: int, window: float = QUASI_DEGENERATE_GHZ) -> list[int]:
    """Bare states other than i, f whose unperturbed energy lies within ``window`` of E_i or E_f."""
    e = np.asarray(h, dtype=float).diagonal()
    near = (np.abs(e - e[i]) < window) | (np.abs(e - e[f]) < window)
    near[[i, f]] = False
    return [int(k) for k in np.flatnonzero(near)]


def predicted_drive_element(h, drive, i: int, f: int, order: int, partners: Sequence[int] = ()) -> float:
    """Dressed |<f|tau_z|i>| predicted from the SW-transformed block {i, f, partners}.

    The pump operator is transformed through ``order``.  The block Hamiltonian
    is kept through max(2, order); with quasi-degenerate ``partners`` it is
    kept through fourth order, the first order at which e.g. |g30> and |g01>
    couple.  The block Hamiltonian is diagonalized and the pump evaluated
    between the eigenvectors that overlap most with i and f.
    """
    block = [i, f, *partners]
    gen = sw_generators(h, block)
    h_eff = effective_hamiltonian(gen, 4 if partners else max(2, min(order, 3)))
    d_eff = effective_operator(gen, drive, order)
    h2 = h_eff[np.ix_(block, block)]
    h2 = 0.5 * (h2 + h2.T)
    d2 = d_eff[np.ix_(block, block)]
    d2 = 0.5 * (d2 + d2.T)
    _, u = np.linalg.eigh(h2)
    ui = u[:, int(np.argmax(np.abs(u[0])))]
    uf = u[:, int(np.argmax(np.abs(u[1])))]
    return float(abs(uf @ d2 @ ui))


def minimal_order(kind: Sideband) -> int:
    """Lowest order at which the coupling named by ``kind`` is generically nonzero."""
    if kind.kind in ("red", "blue", "longitudinal"):
        return kind.order
    if kind.kind in ("cross_mode", "longitudinal_cross"):
        return 2
    raise ValueError(f"{kind.name} is not an effective sideband coupling")


@dataclass(frozen=True)
class EffectiveCoupling:
    kind: Sideband
    order: int
    value: float
    flux: float
    detunings: dict = field(default_factory=dict)
    drive_element: float = float("nan")
    pair: tuple[BasisLabel, BasisLabel] | None = None
    partners: tuple[BasisLabel, ...] = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.name,
            "order": self.order,
            "flux": self.flux,
            "value_GHz": self.value,
            "detunings": {str(n): {"minus_GHz": dm, "plus_GHz": dp} for n, (dm, dp) in self.detunings.items()},
            "drive_element": self.drive_element,
            "pair": [str(p) for p in self.pair] if self.pair else None,
            "quasi_degenerate_partners": [str(p) for p in self.partners],
        }


def _checked_problem(config: SystemConfig, flux: float, kind: Sideband):
    if not is_dispersive(config, flux):
        raise DispersiveRegimeError(f"flux {flux} mPhi0 is outside the dispersive regime")
    h = build_hamiltonian(config, flux, basis="eigen")
    space = config.space("eigen")
    src, dst = kind.pair(space)
    i, f = space.index(src), space.index(dst)
    partners = quasi_degenerate_partners(h, i, f)
    check_gap(h, [i, f, *partners])
    return h, space, (src, dst), (i, f), partners


def effective_sideband_coupling(config: SystemConfig, flux: float, kind: Sideband) -> EffectiveCoupling:
    """Loewdin coupling between the two bare states named by ``kind``.

    ``value`` is the static H_eff element at the minimal nonvanishing order
    (GHz).  ``drive_element`` is the pump-assisted amplitude |<f|tau_z|i>|
    predicted by the SW-transformed pump at the same order, in units of the
    pump amplitude.
    """
    order = minimal_order(kind)
    h, space, pair, (i, f), partners = _checked_problem(config, flux, kind)
    value = lowdin_effective_element(h, [i, f], i, f, order)
    drive = drive_operator(config, flux, basis="eigen")
    return EffectiveCoupling(kind, order, value, float(flux), detunings(config, flux),
                             predicted_drive_element(h, drive, i, f, order, partners), pair,
                             tuple(space.labels[k] for k in partners))


def validate_against_exact(config: SystemConfig, flux: float, kind: Sideband, zero_tol: float = 1e-14) -> float:
    """|predicted - exact| / exact for the dressed pump amplitude of ``kind``.

    Defined as 0 when both amplitudes are below ``zero_tol``.
    """
    predicted = effective_sideband_coupling(config, flux, kind).drive_element
    exact = sideband_matrix_element(config, flux, kind)
    if exact < zero_tol and predicted < zero_tol:
        return 0.0
    return abs(predicted - exact) / max(exact, zero_tol)


def exact_effective_element(config: SystemConfig, flux: float, kind: Sideband) -> float:
    """Exact effective Hamiltonian element of the block via des Cloizeaux projection.

    The block eigenvector components M (2x2) are symmetrically orthonormalized,
    W = polar(M), and H_eff = W diag(E) W^T.  Reliable only while no complement
    state is nearly degenerate with a block state.
    """
    dec, _ = eigen_problem(config, flux)
    space = config.space("eigen")
    ki, kf = dressed_pair(dec, space, kind)
    src, dst = kind.pair(space)
    rows = [space.index(src), space.index(dst)]
    m = dec.vectors[np.ix_(rows, [ki, kf])]
    u, _, vt = np.linalg.svd(m)
    w = u @ vt
    h_eff = w @ np.diag(dec.values[[ki, kf]]) @ w.T
    return float(h_eff[0, 1])


def dispersive_shift(h, i: int, order: int = 2) -> float:
    """Energy of bare state ``i`` corrected through ``order`` with a single-state block."""
    return float(lowdin_series(h, [i], i, i, order)[-1])


def coupling_table(config: SystemConfig, fluxes: Sequence[float], kinds: Sequence[Sideband]) -> list[dict]:
    """Rows of EffectiveCoupling dicts; points violating the dispersive/gap guards carry an error string."""
    rows = []
    for flux in fluxes:
        for kind in kinds:
            try:
                rows.append(effective_sideband_coupling(config, float(flux), kind).to_dict())
            except (DispersiveRegimeError, GapViolationError) as exc:
                rows.append({"kind": kind.name, "order": minimal_order(kind), "flux": float(flux),
                             "value_GHz": None, "detunings": None, "drive_element": None,
                             "pair": None, "error": str(exc)})
    return rows


def write_coupling_table(rows: list[dict], path) -> None:
    payload = {
        "metadata": {"units": "GHz", "omega_d_factor": "excluded; drive_element is per unit pump amplitude"},
        "couplings": rows,
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def default_coupling_kinds(config: SystemConfig) -> list[Sideband]:
    idx = [m.index for m in config.modes]
    first = idx[0]
    kinds = [Sideband.red(s, first) for s in (1, 2, 3)] + [Sideband.blue(1, first)]
    kinds += [Sideband.red(1, n) for n in idx[1:]]
    kinds += [Sideband.longitudinal(1, n) for n in idx] + [Sideband.longitudinal(2, first)]
    if len(idx) > 1:
        kinds += [Sideband.cross_mode(first, idx[-1]), Sideband.longitudinal_cross(first, idx[-1])]
    return kinds


__all__ = [
    "GapViolationError", "check_gap", "lowdin_effective_element", "lowdin_series", "SWGenerators",
    "sw_generators", "effective_hamiltonian", "effective_operator", "predicted_drive_element",
    "quasi_degenerate_partners",
    "minimal_order", "EffectiveCoupling", "effective_sideband_coupling", "validate_against_exact",
    "exact_effective_element", "dispersive_shift", "coupling_table", "write_coupling_table",
    "default_coupling_kinds",
]
