"""Flux-dependent qubit + multi-mode resonator Hamiltonian.

Units: linear frequency in GHz with h = 1, flux offsets in milli flux quanta
(mPhi0) measured from the degeneracy point, persistent current in nA.

    H = (eps tau_z + delta tau_x)/2 + sum_n nu_n (a_n^dag a_n + 1/2)
        + sum_n g_n (a_n^dag + a_n) tau_z

In the qubit eigenbasis, with cos(theta) = eps/nu_q and sin(theta) = delta/nu_q,

    tau_z = cos(theta) sigma_z - sin(theta) sigma_x
    tau_x = sin(theta) sigma_z + cos(theta) sigma_x
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import constants

from .operators import (ModeSpec, OperatorMatrix, ProductSpace, annihilation, number, pauli,
                        photon_parity)

# eps/h in GHz for I_p = 1 nA and dPhi = 1 mPhi0
GHZ_PER_NA_MPHI0 = 2 * 1e-9 * 1e-3 * constants.physical_constants["mag. flux quantum"][0] / constants.h / 1e9

DEFAULT_MAX_DIM = 4096


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class QubitSpec:
    gap_ghz: float = 6.0
    persistent_current_na: float = 500.0

    def __post_init__(self):
        if not self.gap_ghz > 0:
            raise ValueError(f"gap_ghz must be > 0, got {self.gap_ghz}")
        if not self.persistent_current_na > 0:
            raise ValueError(f"persistent_current_na must be > 0, got {self.persistent_current_na}")


@dataclass(frozen=True)
class FluxSweep:
    start: float = -3.0
    stop: float = 3.0
    count: int = 121

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"flux sweep count must be an integer >= 1, got {self.count}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ValueError("flux sweep bounds must be finite")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, int(self.count))


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to build H at any flux point."""

    qubit: QubitSpec = field(default_factory=QubitSpec)
    modes: tuple[ModeSpec, ...] = ()
    rwa: bool = False
    drive_amplitude_ghz: float = 0.0
    flux_sweep: FluxSweep = field(default_factory=FluxSweep)
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        modes = tuple(sorted(self.modes, key=lambda m: m.index))
        if not modes:
            raise ValueError("at least one resonator mode is required")
        if len({m.index for m in modes}) != len(modes):
            raise ValueError("duplicate mode index")
        if not self.drive_amplitude_ghz >= 0:
            raise ValueError("drive_amplitude_ghz must be >= 0")
        object.__setattr__(self, "modes", modes)

    @property
    def dim(self) -> int:
        return 2 * int(np.prod([m.truncation for m in self.modes]))

    def mode(self, index: int) -> ModeSpec:
        for m in self.modes:
            if m.index == index:
                return m
        raise KeyError(f"mode {index} is not in the configuration")

    def space(self, basis: str = "eigen") -> ProductSpace:
        return ProductSpace.from_modes(self.modes, basis)

    def with_mode(self, index: int, **changes) -> "SystemConfig":
        modes = tuple(replace(m, **changes) if m.index == index else m for m in self.modes)
        return replace(self, modes=modes)

    def with_couplings_scaled(self, factor: float) -> "SystemConfig":
        return replace(self, modes=tuple(replace(m, g_ghz=m.g_ghz * factor) for m in self.modes))


def epsilon_of_flux(qubit: QubitSpec, flux: float) -> float:
    """Flux-induced bias eps/h = 2 I_p dPhi / h in GHz."""
    return GHZ_PER_NA_MPHI0 * qubit.persistent_current_na * flux


def qubit_frequency(qubit: QubitSpec, flux: float) -> float:
    return math.hypot(epsilon_of_flux(qubit, flux), qubit.gap_ghz)


def mixing_angle(qubit: QubitSpec, flux: float) -> tuple[float, float]:
    """(cos theta, sin theta) of the persistent-current -> eigenbasis rotation."""
    eps = epsilon_of_flux(qubit, flux)
    nu_q = math.hypot(eps, qubit.gap_ghz)
    return eps / nu_q, qubit.gap_ghz / nu_q


def flux_for_qubit_frequency(qubit: QubitSpec, nu_q: float) -> float:
    """Non-negative flux offset at which the bare qubit frequency equals ``nu_q``."""
    if nu_q < qubit.gap_ghz:
        raise ValueError(f"qubit frequency {nu_q} GHz is below the gap {qubit.gap_ghz} GHz")
    return math.sqrt(nu_q**2 - qubit.gap_ghz**2) / (GHZ_PER_NA_MPHI0 * qubit.persistent_current_na)


def eigenbasis_rotation(cos_t: float) -> np.ndarray:
    """Columns are |g>, |e> written in the persistent-current basis."""
    c = math.sqrt(max(0.0, (1 + cos_t) / 2))
    s = math.sqrt(max(0.0, (1 - cos_t) / 2))  # sin(theta) > 0 because delta > 0
    return np.array([[-s, c], [c, s]])


def _qubit_factors(config: SystemConfig, flux: float, basis: str) -> dict[str, np.ndarray]:
    eps = epsilon_of_flux(config.qubit, flux)
    delta = config.qubit.gap_ghz
    cos_t, sin_t = mixing_angle(config.qubit, flux)
    if basis == "persistent":
        u = eigenbasis_rotation(cos_t)
        tz, tx = pauli("tau_z"), pauli("tau_x")
        return {
            "h_q": 0.5 * (eps * tz + delta * tx),
            "tau_z": tz,
            "tau_x": tx,
            "sigma_plus": u @ pauli("sigma_plus") @ u.T,
            "sigma_minus": u @ pauli("sigma_minus") @ u.T,
            "sigma_z": u @ pauli("sigma_z") @ u.T,
        }
    if basis == "eigen":
        sz, sx = pauli("sigma_z"), pauli("sigma_x")
        return {
            "h_q": 0.5 * math.hypot(eps, delta) * sz,
            "tau_z": cos_t * sz - sin_t * sx,
            "tau_x": sin_t * sz + cos_t * sx,
            "sigma_plus": pauli("sigma_plus"),
            "sigma_minus": pauli("sigma_minus"),
            "sigma_z": sz,
        }
    raise ValueError(f"unknown basis {basis!r}")


@functools.lru_cache(maxsize=64)
def _static_terms(truncations: tuple[int, ...], mode_indices: tuple[int, ...], basis: str):
    """Flux-independent Kronecker factors, shared across flux points."""
    space = ProductSpace(truncations, mode_indices, basis)
    eye2 = np.eye(2)
    terms = {"space": space, "modes": {}}
    for n, t in zip(mode_indices, truncations):
        a = annihilation(t)
        x = a + a.T
        entry = {
            "number": space.embed(None, {n: number(t) + 0.5 * np.eye(t)}).diagonal().copy(),
            "x": space.embed(eye2, {n: x}),
            "a": space.embed(eye2, {n: a}),
        }
        for arr in entry.values():
            arr.setflags(write=False)
        terms["modes"][n] = entry
    return terms


def _qubit_kron(q: np.ndarray, op: np.ndarray) -> np.ndarray:
    """(q (x) I) @ op for an operator ``op`` that is identity on the qubit factor."""
    half = op.shape[0] // 2
    blk = op[:half, :half]
    return np.block([[q[0, 0] * blk, q[0, 1] * blk], [q[1, 0] * blk, q[1, 1] * blk]])


def build_hamiltonian(config: SystemConfig, flux: float, basis: str = "persistent") -> OperatorMatrix:
    """Full Hamiltonian at flux offset ``flux`` (mPhi0), in GHz.

    With ``config.rwa`` the interaction keeps only the excitation-conserving
    part ``-g_n sin(theta) (sigma_+ a_n + a_n^dag sigma_-)``; the longitudinal
    ``cos(theta) sigma_z (a + a^dag)`` piece and the counter-rotating terms are dropped.
    """
    if config.dim > config.max_dim:
        raise DimensionError(f"Hilbert-space dimension {config.dim} exceeds max_dim={config.max_dim}")
    if basis not in ("persistent", "eigen"):
        raise ValueError(f"unknown basis {basis!r}")
    st = _static_terms(tuple(m.truncation for m in config.modes), tuple(m.index for m in config.modes), basis)
    space = st["space"]
    q = _qubit_factors(config, flux, basis)
    _, sin_t = mixing_angle(config.qubit, flux)

    h = space.embed(q["h_q"])
    diag = sum(m.omega_ghz * st["modes"][m.index]["number"] for m in config.modes)
    h[np.diag_indices_from(h)] += diag
    for m in config.modes:
        if m.g_ghz == 0:
            continue
        if config.rwa:
            jc = _qubit_kron(q["sigma_plus"], st["modes"][m.index]["a"])
            h += -m.g_ghz * sin_t * (jc + jc.T)
        else:
            h += m.g_ghz * _qubit_kron(q["tau_z"], st["modes"][m.index]["x"])
    h = 0.5 * (h + h.T)
    return space.operator(h)


def drive_operator(config: SystemConfig, flux: float = 0.0, basis: str = "persistent") -> OperatorMatrix:
    """Coupling operator tau_z (x) I of the pump; time dependence is handled elsewhere."""
    space = config.space(basis)
    return space.operator(space.embed(_qubit_factors(config, flux, basis)["tau_z"]))


def excitation_operator(config: SystemConfig, flux: float = 0.0, basis: str = "eigen") -> OperatorMatrix:
    """sigma_+ sigma_- (x) I + I (x) sum_n a_n^dag a_n."""
    space = config.space(basis)
    q = _qubit_factors(config, flux, basis)
    op = space.embed(q["sigma_plus"] @ q["sigma_minus"])
    for m in config.modes:
        op += space.embed(None, {m.index: number(m.truncation)})
    return space.operator(op)


def parity_operator(config: SystemConfig) -> OperatorMatrix:
    """tau_x (x) exp(i pi sum_n a_n^dag a_n) in the persistent-current basis."""
    space = config.space("persistent")
    return space.operator(space.embed(pauli("tau_x"),
                                      {m.index: photon_parity(m.truncation) for m in config.modes}))


def decoupled_energies(config: SystemConfig, flux: float) -> np.ndarray:
    """Closed-form sorted spectrum for g_n = 0: +-nu_q/2 + sum_n nu_n (N_n + 1/2)."""
    nu_q = qubit_frequency(config.qubit, flux)
    levels = np.array([-0.5 * nu_q, 0.5 * nu_q])
    for m in config.modes:
        levels = np.add.outer(levels, m.omega_ghz * (np.arange(m.truncation) + 0.5)).ravel()
    return np.sort(levels)


def detunings(config: SystemConfig, flux: float) -> dict[int, tuple[float, float]]:
    """{mode index: (nu_q - nu_n, nu_q + nu_n)}."""
    nu_q = qubit_frequency(config.qubit, flux)
    return {m.index: (nu_q - m.omega_ghz, nu_q + m.omega_ghz) for m in config.modes}


def is_dispersive(config: SystemConfig, flux: float, factor: float = 5.0) -> bool:
    nu_q = qubit_frequency(config.qubit, flux)
    return all(abs(nu_q - m.omega_ghz) > factor * m.g_ghz for m in config.modes)


def paper_modes(include_mode2: bool = False, truncations: Sequence[int] = (8, 2, 6)) -> tuple[ModeSpec, ...]:
    """Measured lambda/2, lambda and 3lambda/2 modes of the device."""
    modes = [ModeSpec(1, 3.143, 0.306, truncations[0]), ModeSpec(3, 9.420, 0.521, truncations[2])]
    if include_mode2:
        modes.insert(1, ModeSpec(2, 6.361, 0.005, truncations[1]))
    return tuple(modes)
