"""Truncated bosonic and qubit operators on the qubit x multi-mode product space.

All matrices are real. The qubit factor always comes first, followed by the
resonator modes in ascending mode index, so a basis state is enumerated
lexicographically as ``(qubit, N_1, N_2, ...)``.

Two qubit bases are used:

* ``"persistent"``: circulating-current states ``("ccw", "cw")`` with
  ``tau_z = diag(1, -1)``.
* ``"eigen"``: qubit eigenstates ``("g", "e")``.  In this ordering
  ``sigma_z = |e><e| - |g><g| = diag(-1, 1)`` and ``sigma_+ = |e><g|``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

QUBIT_STATES = {"eigen": ("g", "e"), "persistent": ("ccw", "cw")}


@dataclass(frozen=True)
class ModeSpec:
    """One resonator mode.

    ``omega_ghz`` and ``g_ghz`` are linear frequencies (omega/2pi, g/2pi) in GHz;
    ``truncation`` is the number of Fock levels kept (photon numbers
    ``0 .. truncation - 1``).
    """

    index: int
    omega_ghz: float
    g_ghz: float
    truncation: int = 6

    def __post_init__(self):
        if not self.omega_ghz > 0:
            raise ValueError(f"mode {self.index}: omega_ghz must be > 0, got {self.omega_ghz}")
        if not self.g_ghz >= 0:
            raise ValueError(f"mode {self.index}: g_ghz must be >= 0, got {self.g_ghz}")
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise ValueError(f"mode {self.index}: truncation must be an integer >= 1")


@dataclass(frozen=True, order=True)
class BasisLabel:
    """Bare product state ``|q N_1 N_3 ...>``."""

    qubit: str
    photons: tuple[int, ...]

    def __str__(self) -> str:
        if all(n < 10 for n in self.photons):
            body = self.qubit + "".join(str(n) for n in self.photons)
        else:
            body = ",".join([self.qubit, *map(str, self.photons)])
        return f"|{body}>"

    def sort_key(self, basis: str = "eigen") -> tuple:
        """Lexicographic key matching the product-space enumeration."""
        return (QUBIT_STATES[basis].index(self.qubit), self.photons)


def annihilation(trunc: int) -> np.ndarray:
    """Bosonic lowering operator with ``a[N-1, N] = sqrt(N)``."""
    if int(trunc) != trunc or trunc < 1:
        raise ValueError(f"truncation must be a positive integer, got {trunc!r}")
    return np.diag(np.sqrt(np.arange(1, trunc, dtype=float)), 1)


def creation(trunc: int) -> np.ndarray:
    return annihilation(trunc).T.copy()


def number(trunc: int) -> np.ndarray:
    return np.diag(np.arange(trunc, dtype=float))


def photon_parity(trunc: int) -> np.ndarray:
    """exp(i pi a^dag a), real and diagonal."""
    return np.diag((-1.0) ** np.arange(trunc))


_PAULI = {
    # persistent-current basis (ccw, cw)
    "tau_z": ((1.0, 0.0), (0.0, -1.0)),
    "tau_x": ((0.0, 1.0), (1.0, 0.0)),
    # qubit eigenbasis (g, e)
    "sigma_z": ((-1.0, 0.0), (0.0, 1.0)),
    "sigma_x": ((0.0, 1.0), (1.0, 0.0)),
    "sigma_plus": ((0.0, 0.0), (1.0, 0.0)),
    "sigma_minus": ((0.0, 1.0), (0.0, 0.0)),
}
_PAULI_ALIASES = {
    "τz": "tau_z", "τx": "tau_x", "σz": "sigma_z", "σx": "sigma_x",
    "σ+": "sigma_plus", "σ-": "sigma_minus", "σ−": "sigma_minus",
    "tz": "tau_z", "tx": "tau_x", "sz": "sigma_z", "sx": "sigma_x",
    "sp": "sigma_plus", "sm": "sigma_minus",
}


def pauli(which: str) -> np.ndarray:
    """2x2 qubit operator by name (``tau_z``, ``sigma_plus``, ``"σ+"``, ...)."""
    key = _PAULI_ALIASES.get(which, which)
    try:
        return np.array(_PAULI[key])
    except KeyError:
        raise ValueError(f"unknown qubit operator {which!r}") from None


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense real matrix on the truncated product space, with its basis labels."""

    entries: np.ndarray
    basis: tuple[BasisLabel, ...]
    qubit_basis: str = "eigen"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] != len(self.basis):
            raise ValueError(f"{m.shape[0]}x{m.shape[0]} matrix but {len(self.basis)} basis labels")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "_index", {lab: k for k, lab in enumerate(self.basis)})

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def index(self, label: BasisLabel) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"{label} is not in this basis") from None

    def element(self, bra: BasisLabel, ket: BasisLabel) -> float:
        return float(self.entries[self.index(bra), self.index(ket)])

    def asymmetry(self) -> float:
        """||M - M^T||_F / ||M||_F (0 for the zero matrix)."""
        norm = np.linalg.norm(self.entries)
        if norm == 0:
            return 0.0
        return float(np.linalg.norm(self.entries - self.entries.T) / norm)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


class ProductSpace:
    """Qubit (x) mode_1 (x) mode_2 ... with lexicographic enumeration."""

    def __init__(self, truncations: Sequence[int], mode_indices: Sequence[int] | None = None,
                 qubit_basis: str = "eigen"):
        if qubit_basis not in QUBIT_STATES:
            raise ValueError(f"qubit_basis must be one of {sorted(QUBIT_STATES)}")
        self.truncations = tuple(int(t) for t in truncations)
        if any(t < 1 for t in self.truncations):
            raise ValueError("truncations must be >= 1")
        if mode_indices is None:
            mode_indices = range(1, len(self.truncations) + 1)
        self.mode_indices = tuple(mode_indices)
        if len(self.mode_indices) != len(self.truncations):
            raise ValueError("one truncation per mode index required")
        if list(self.mode_indices) != sorted(set(self.mode_indices)):
            raise ValueError("mode indices must be unique and ascending")
        self.qubit_basis = qubit_basis
        self.dims = (2, *self.truncations)
        self.dim = int(np.prod(self.dims))
        states = QUBIT_STATES[qubit_basis]
        self.labels = tuple(
            BasisLabel(states[q], tuple(ph))
            for q, *ph in itertools.product(*(range(d) for d in self.dims))
        )
        self._index = {lab: k for k, lab in enumerate(self.labels)}

    @classmethod
    def from_modes(cls, modes: Sequence[ModeSpec], qubit_basis: str = "eigen") -> "ProductSpace":
        modes = sorted(modes, key=lambda m: m.index)
        return cls([m.truncation for m in modes], [m.index for m in modes], qubit_basis)

    def index(self, label: BasisLabel) -> int:
        return self._index[label]

    def label(self, qubit: str, photons: Mapping[int, int] | Sequence[int] = ()) -> BasisLabel:
        """Label from a qubit state and photon numbers (dict by mode index, or full tuple)."""
        if isinstance(photons, Mapping):
            unknown = set(photons) - set(self.mode_indices)
            if unknown:
                raise KeyError(f"modes {sorted(unknown)} are not in this space")
            ph = tuple(int(photons.get(n, 0)) for n in self.mode_indices)
        else:
            ph = tuple(int(p) for p in photons) or (0,) * len(self.mode_indices)
        lab = BasisLabel(qubit, ph)
        if lab not in self._index:
            raise KeyError(f"{lab} outside truncated space {self.dims}")
        return lab

    def embed(self, qubit: np.ndarray | None = None,
              modes: Mapping[int, np.ndarray] | None = None) -> np.ndarray:
        """Kronecker product with identities for omitted factors."""
        modes = dict(modes or {})
        factors = [np.eye(2) if qubit is None else np.asarray(qubit, dtype=float)]
        for n, d in zip(self.mode_indices, self.truncations):
            op = modes.pop(n, None)
            factors.append(np.eye(d) if op is None else np.asarray(op, dtype=float))
        if modes:
            raise ValueError(f"modes {sorted(modes)} are not in this space")
        for f, d in zip(factors, self.dims):
            if f.shape != (d, d):
                raise ValueError(f"factor of shape {f.shape} does not match subsystem dimension {d}")
        out = factors[0]
        for f in factors[1:]:
            out = np.kron(out, f)
        return out

    def operator(self, matrix: np.ndarray) -> OperatorMatrix:
        return OperatorMatrix(matrix, self.labels, self.qubit_basis)


def kron_embed(ops: Sequence[np.ndarray | None], truncations: Sequence[int],
               mode_indices: Sequence[int] | None = None,
               qubit_basis: str = "eigen") -> OperatorMatrix:
    """Tensor a per-subsystem operator list (qubit first) into the product space.

    ``None`` entries, and trailing subsystems missing from ``ops``, become identities.
    """
    space = ProductSpace(truncations, mode_indices, qubit_basis)
    if len(ops) > len(space.dims):
        raise ValueError(f"{len(ops)} factors for {len(space.dims)} subsystems")
    ops = list(ops) + [None] * (len(space.dims) - len(ops))
    mode_ops = {n: op for n, op in zip(space.mode_indices, ops[1:]) if op is not None}
    return space.operator(space.embed(ops[0], mode_ops))
