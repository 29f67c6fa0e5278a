"""Fast invariant suite behind ``rabi-sidebands selfcheck``."""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .eigensolver import diagonalize, eigenvalues
from .hamiltonian import (SystemConfig, build_hamiltonian, decoupled_energies, drive_operator,
                          excitation_operator, parity_operator, qubit_frequency)
from .perturbation import validate_against_exact
from .spectroscopy import Sideband, classify_sideband, drive_elements, sideband_matrix_element


def _check(name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported rather than raised
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return {"name": name, "passed": bool(passed), "detail": detail,
            "seconds": round(time.perf_counter() - t0, 3)}


def _excitation_change(kind: Sideband) -> int:
    src_exc = {"red": kind.order, "cross_mode": 1}.get(kind.kind, 0)
    dst_exc = {"blue": 1 + kind.order, "cross_mode": 2}.get(kind.kind, 1)
    return abs(dst_exc - src_exc)


def run_selfcheck(config: SystemConfig, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    flux_d = 0.8

    def eigensolver():
        worst = 0.0
        for n in (2, 3, 17, 96, 256):
            a = rng.standard_normal((n, n))
            h = a + a.T
            dec = diagonalize(h)
            v, lam = dec.vectors, dec.values
            worst = max(worst, np.linalg.norm(v @ np.diag(lam) @ v.T - h) / np.linalg.norm(h),
                        np.linalg.norm(v.T @ v - np.eye(n)))
        return worst < 1e-8, f"max relative reconstruction/orthogonality error {worst:.2e}"

    def decoupled():
        cfg = config.with_couplings_scaled(0.0)
        ev = eigenvalues(build_hamiltonian(cfg, flux_d))
        ref = decoupled_energies(cfg, flux_d)
        err = float(np.max(np.abs(ev - ref) / np.maximum(np.abs(ref), 1.0)))
        return err < 1e-9, f"max relative deviation {err:.2e}"

    def parity():
        h = np.asarray(build_hamiltonian(config, 0.0))
        p = np.asarray(parity_operator(config))
        rel = np.linalg.norm(h @ p - p @ h) / np.linalg.norm(h)
        return rel < 1e-12, f"||[H, P]|| / ||H|| = {rel:.2e}"

    def flux_symmetry():
        a = eigenvalues(build_hamiltonian(config, 1.3))
        b = eigenvalues(build_hamiltonian(config, -1.3))
        rel = float(np.max(np.abs(a - b)) / np.max(np.abs(a)))
        return rel < 1e-10, f"max relative difference {rel:.2e}"

    def sum_rule():
        dec = diagonalize(build_hamiltonian(config, flux_d, basis="eigen"))
        d = drive_operator(config, flux_d, basis="eigen")
        worst = max(abs(np.sum(drive_elements(dec, d, k) ** 2) - 1.0) for k in range(0, dec.dim, 7))
        return worst < 1e-10, f"max |sum_j |<j|tau_z|i>|^2 - 1| = {worst:.2e}"

    def rwa_rule():
        cfg = replace(config, rwa=True)
        first, last = config.modes[0].index, config.modes[-1].index
        kinds = [Sideband.zeroth(), Sideband.red(1, first), Sideband.red(2, first), Sideband.red(3, first),
                 Sideband.blue(1, first)]
        if first != last:
            kinds.append(Sideband.cross_mode(first, last))
        bad = []
        for k in kinds:
            el = sideband_matrix_element(cfg, flux_d, k)
            if _excitation_change(k) >= 2 and el >= 1e-12:
                bad.append(f"{k.name}={el:.1e} should vanish")
        h = np.asarray(build_hamiltonian(cfg, 0.0, basis="eigen"))
        x = np.asarray(excitation_operator(cfg, 0.0))
        comm = np.linalg.norm(h @ x - x @ h)
        if comm > 1e-10:
            bad.append(f"[H, N_exc] = {comm:.1e}")
        return not bad, "; ".join(bad) or "elements between states two or more excitations apart vanish"

    def classifier():
        nu = {m.index: m.omega_ghz for m in config.modes}
        first = config.modes[0]
        c = classify_sideband(9.76 - 2 * nu[first.index], 9.76, config.modes)
        ok = c.sideband == Sideband.red(2, first.index)
        return ok, f"9.76 - 2 nu_{first.index} -> {c.sideband.name} (matches: {[m.name for m in c.matches]})"

    def perturbative():
        cfg = config
        kind = Sideband.red(1, config.modes[0].index)
        nu_q = qubit_frequency(cfg.qubit, flux_d)
        for m in cfg.modes:
            cfg = cfg.with_mode(m.index, g_ghz=0.01 * abs(nu_q - m.omega_ghz))
        err = validate_against_exact(cfg, flux_d, kind)
        return err < 0.1, f"red(1) relative error at g/Delta = 0.01: {err:.3e}"

    checks = [
        _check("eigensolver reconstruction", eigensolver),
        _check("decoupled limit", decoupled),
        _check("parity at degeneracy", parity),
        _check("flux symmetry", flux_symmetry),
        _check("tau_z sum rule", sum_rule),
        _check("RWA selection rule", rwa_rule),
        _check("sideband classifier", classifier),
        _check("perturbation vs exact", perturbative),
    ]
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
