"""Transition lines, sideband bookkeeping and synthetic two-tone spectroscopy maps.

A pump coupling through tau_z drives transitions between dressed states i -> f
at omega_d = E_f - E_i with amplitude proportional to |<f|tau_z|i>| (in units
of the pump amplitude).  Sidebands are named after the bare states they
connect:

==================  ===================  ===================  =======================
kind                from                 to                   pump frequency
==================  ===================  ===================  =======================
zeroth              |g 0>                |e 0>                nu_q
red(s) on n         |g s_n>              |e 0>                nu_q - s nu_n
blue(s) on n        |g 0>                |e s_n>              nu_q + s nu_n
cross_mode(n, m)    |g 1_m>              |e 1_n>              nu_q - (nu_m - nu_n)
longitudinal(s) n   |g 0>                |g s_n>              s nu_n
longitudinal_cross  |g 1_n>              |g 1_m>              nu_m - nu_n
==================  ===================  ===================  =======================
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .eigensolver import EigenDecomposition, diagonalize, dressed_label, find_dressed_state
from .hamiltonian import (SystemConfig, build_hamiltonian, drive_operator, flux_for_qubit_frequency,
                          is_dispersive, qubit_frequency)
from .operators import BasisLabel, ModeSpec, OperatorMatrix, ProductSpace

DEFAULT_TOL_GHZ = 0.02


class DispersiveRegimeError(ValueError):
    pass


@dataclass(frozen=True)
class Sideband:
    kind: str
    order: int = 0
    mode: int | None = None
    partner: int | None = None

    KINDS = ("zeroth", "red", "blue", "cross_mode", "longitudinal", "longitudinal_cross", "other")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown sideband kind {self.kind!r}")

    @classmethod
    def zeroth(cls) -> "Sideband":
        return cls("zeroth", 0)

    @classmethod
    def red(cls, s: int, mode: int = 1) -> "Sideband":
        return cls("red", s, mode)

    @classmethod
    def blue(cls, s: int, mode: int = 1) -> "Sideband":
        return cls("blue", s, mode)

    @classmethod
    def cross_mode(cls, mode: int = 1, partner: int = 3) -> "Sideband":
        """Photon moves from ``partner`` into ``mode`` while the qubit is raised."""
        return cls("cross_mode", 2, mode, partner)

    @classmethod
    def longitudinal(cls, s: int, mode: int = 1) -> "Sideband":
        return cls("longitudinal", s, mode)

    @classmethod
    def longitudinal_cross(cls, mode: int = 1, partner: int = 3) -> "Sideband":
        return cls("longitudinal_cross", 2, mode, partner)

    @classmethod
    def parse(cls, text: str) -> "Sideband":
        """Inverse of :meth:`name`, e.g. ``"red(2)@1"``, ``"cross_mode(1,3)"``, ``"zeroth"``."""
        text = text.strip()
        if text in ("zeroth", "other"):
            return cls(text)
        head, _, at = text.partition("@")
        kind, _, args = head.partition("(")
        args = [int(a) for a in args.rstrip(")").split(",") if a.strip()]
        if kind in ("cross_mode", "longitudinal_cross"):
            return cls(kind, 2, args[0], args[1])
        if kind in ("red", "blue", "longitudinal") and len(args) == 1:
            return cls(kind, args[0], int(at) if at else 1)
        raise ValueError(f"cannot parse sideband {text!r}")

    @property
    def name(self) -> str:
        if self.kind in ("zeroth", "other"):
            return self.kind
        if self.kind in ("cross_mode", "longitudinal_cross"):
            return f"{self.kind}({self.mode},{self.partner})"
        return f"{self.kind}({self.order})@{self.mode}"

    def __str__(self) -> str:
        return self.name

    def nominal_frequency(self, nu_q: float, nu: dict[int, float]) -> float:
        k = self.kind
        if k == "zeroth":
            return nu_q
        if k == "red":
            return nu_q - self.order * nu[self.mode]
        if k == "blue":
            return nu_q + self.order * nu[self.mode]
        if k == "cross_mode":
            return nu_q - (nu[self.partner] - nu[self.mode])
        if k == "longitudinal":
            return self.order * nu[self.mode]
        if k == "longitudinal_cross":
            return nu[self.partner] - nu[self.mode]
        raise ValueError("'other' has no nominal frequency")

    def pair(self, space: ProductSpace) -> tuple[BasisLabel, BasisLabel]:
        """(from, to) bare states connected by this sideband."""
        k, s, n, m = self.kind, self.order, self.mode, self.partner
        if k == "zeroth":
            return space.label("g"), space.label("e")
        if k == "red":
            return space.label("g", {n: s}), space.label("e")
        if k == "blue":
            return space.label("g"), space.label("e", {n: s})
        if k == "cross_mode":
            return space.label("g", {m: 1}), space.label("e", {n: 1})
        if k == "longitudinal":
            return space.label("g"), space.label("g", {n: s})
        if k == "longitudinal_cross":
            return space.label("g", {n: 1}), space.label("g", {m: 1})
        raise ValueError("'other' has no state pair")


@dataclass(frozen=True)
class Classification:
    sideband: Sideband
    matches: tuple[Sideband, ...] = ()

    @property
    def degenerate(self) -> bool:
        return len(self.matches) > 1

    def to_dict(self) -> dict:
        return {"kind": self.sideband.name, "degenerate": self.degenerate,
                "matches": [s.name for s in self.matches]}


def candidate_sidebands(modes: Sequence[ModeSpec], s_max: int = 3) -> list[Sideband]:
    """All named sidebands in classification priority order."""
    idx = [m.index for m in sorted(modes, key=lambda m: m.index)]
    nu = {m.index: m.omega_ghz for m in modes}
    out = [Sideband.zeroth()]
    out += [Sideband.red(s, n) for s in range(1, s_max + 1) for n in idx]
    out += [Sideband.blue(s, n) for s in range(1, s_max + 1) for n in idx]
    out += [Sideband.cross_mode(n, m) for n in idx for m in idx if nu[m] > nu[n]]
    out += [Sideband.longitudinal(s, n) for s in range(1, s_max + 1) for n in idx]
    out += [Sideband.longitudinal_cross(n, m) for n in idx for m in idx if nu[m] > nu[n]]
    return out


def classify_sideband(line_freq: float, nu_q: float, modes: Sequence[ModeSpec],
                      tol: float = DEFAULT_TOL_GHZ, s_max: int = 3) -> Classification:
    """Name a pump frequency by the first sideband condition it satisfies within ``tol``.

    Every other condition also satisfied is kept in ``matches``; more than one
    match marks the line as degenerate (e.g. red(2) vs cross-mode when
    nu_3 - nu_1 ~ 2 nu_1).
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    nu = {m.index: m.omega_ghz for m in modes}
    matches = tuple(sb for sb in candidate_sidebands(modes, s_max)
                    if abs(line_freq - sb.nominal_frequency(nu_q, nu)) < tol)
    return Classification(matches[0] if matches else Sideband("other"), matches)


@dataclass(frozen=True)
class TransitionLine:
    from_index: int
    to_index: int
    from_label: BasisLabel | None
    to_label: BasisLabel | None
    frequency: float
    drive_element: float
    classification: Classification | None = None

    def to_dict(self) -> dict:
        return {
            "from": {"index": self.from_index, "label": str(self.from_label) if self.from_label else None},
            "to": {"index": self.to_index, "label": str(self.to_label) if self.to_label else None},
            "frequency_ghz": self.frequency,
            "drive_element": self.drive_element,
            "classification": self.classification.to_dict() if self.classification else None,
        }


def drive_elements(dec: EigenDecomposition, drive: OperatorMatrix | np.ndarray, source: int) -> np.ndarray:
    """|<k|D|source>| for every eigenstate k."""
    d = np.asarray(drive, dtype=float)
    return np.abs(dec.vectors.T @ (d @ dec.vectors[:, source]))


def lines_from_state(dec: EigenDecomposition, drive, source: int, max_lines: int | None = None, *,
                     nu_q: float | None = None, modes: Sequence[ModeSpec] = (),
                     tol: float = DEFAULT_TOL_GHZ, min_element: float = 0.0) -> list[TransitionLine]:
    """Upward transitions from eigenstate ``source``, sorted by frequency."""
    elements = drive_elements(dec, drive, source)
    e0 = dec.values[source]
    src_label = dressed_label(dec, source).label if dec.basis else None
    lines = []
    for k in range(dec.dim):
        freq = float(dec.values[k] - e0)
        if k == source or freq <= 0 or elements[k] < min_element:
            continue
        cls = classify_sideband(freq, nu_q, modes, tol) if nu_q is not None and modes else None
        lines.append(TransitionLine(source, k, src_label,
                                    dressed_label(dec, k).label if dec.basis else None,
                                    freq, float(min(elements[k], 1.0)), cls))
    lines.sort(key=lambda ln: (ln.frequency, ln.to_index))
    return lines[:max_lines] if max_lines is not None else lines


def lines_from_ground(dec: EigenDecomposition, drive, max_lines: int | None = None, **kwargs) -> list[TransitionLine]:
    return lines_from_state(dec, drive, 0, max_lines, **kwargs)


def eigen_problem(config: SystemConfig, flux: float) -> tuple[EigenDecomposition, OperatorMatrix]:
    """Decomposition of H and the drive operator, both in the qubit eigenbasis."""
    return (diagonalize(build_hamiltonian(config, flux, basis="eigen")),
            drive_operator(config, flux, basis="eigen"))


def dressed_pair(dec: EigenDecomposition, space: ProductSpace, kind: Sideband) -> tuple[int, int]:
    src, dst = kind.pair(space)
    return find_dressed_state(dec, src), find_dressed_state(dec, dst)


def sideband_matrix_element(config: SystemConfig, flux: float, kind: Sideband,
                            dispersive_factor: float = 5.0) -> float:
    """|<dressed to|tau_z|dressed from>| for the bare pair named by ``kind``.

    Raises DispersiveRegimeError unless |nu_q - nu_n| > dispersive_factor * g_n
    for every mode, and AmbiguousLabelError when either dressed state cannot be
    identified with its bare label.
    """
    if not is_dispersive(config, flux, dispersive_factor):
        raise DispersiveRegimeError(
            f"flux {flux} mPhi0 is outside the dispersive regime (nu_q={qubit_frequency(config.qubit, flux):.4f} GHz)")
    dec, drive = eigen_problem(config, flux)
    i, f = dressed_pair(dec, config.space("eigen"), kind)
    return float(abs(dec.vectors[:, f] @ np.asarray(drive) @ dec.vectors[:, i]))


def sideband_table(config: SystemConfig, fluxes: Sequence[float], s_max: int = 3) -> list[dict]:
    """Predicted pump frequencies nu_q -+ s nu_n (and cross-mode) for each flux point."""
    nu = {m.index: m.omega_ghz for m in config.modes}
    kinds = [sb for sb in candidate_sidebands(config.modes, s_max)
             if sb.kind in ("zeroth", "red", "blue", "cross_mode")]
    rows = []
    for flux in fluxes:
        nu_q = qubit_frequency(config.qubit, flux)
        row = {"flux_mphi0": float(flux), "nu_q_ghz": nu_q}
        row.update({sb.name: sb.nominal_frequency(nu_q, nu) for sb in kinds})
        rows.append(row)
    return rows


def cross_section_peaks(config: SystemConfig, pump_freq: float, mode: int = 1,
                        s_max: int = 3) -> list[tuple[Sideband, float]]:
    """Flux offsets (both signs) where nu_q -+ s nu_mode hits ``pump_freq``.

    This is the peak pattern of a constant-pump-frequency cut through a map.
    Orders whose required qubit frequency is below the gap are unreachable and omitted.
    """
    nu_n = config.mode(mode).omega_ghz
    peaks = []
    targets = [(Sideband.zeroth(), pump_freq)]
    for s in range(1, s_max + 1):
        targets.append((Sideband.red(s, mode), pump_freq + s * nu_n))
        targets.append((Sideband.blue(s, mode), pump_freq - s * nu_n))
    for sb, nu_q in targets:
        if nu_q < config.qubit.gap_ghz:
            continue
        x = flux_for_qubit_frequency(config.qubit, nu_q)
        peaks.extend([(sb, -x), (sb, x)] if x > 0 else [(sb, 0.0)])
    return sorted(peaks, key=lambda p: p[1])


def lorentzian(x, hwhm: float):
    return hwhm**2 / (np.asarray(x) ** 2 + hwhm**2)


@dataclass
class SpectroscopyMap:
    flux_axis: np.ndarray
    freq_axis: np.ndarray
    intensity: np.ndarray  # shape (len(freq_axis), len(flux_axis))
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.flux_axis = np.asarray(self.flux_axis, dtype=float)
        self.freq_axis = np.asarray(self.freq_axis, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.intensity.shape != (self.freq_axis.size, self.flux_axis.size):
            raise ValueError("intensity shape must be (len(freq_axis), len(flux_axis))")

    def cross_section(self, pump_freq: float) -> np.ndarray:
        """Intensity vs flux at the frequency row nearest ``pump_freq``."""
        return self.intensity[int(np.argmin(np.abs(self.freq_axis - pump_freq)))]

    def column(self, flux: float) -> np.ndarray:
        return self.intensity[:, int(np.argmin(np.abs(self.flux_axis - flux)))]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq_GHz\\flux_mPhi0", *(repr(float(x)) for x in self.flux_axis)])
            for f, row in zip(self.freq_axis, self.intensity):
                w.writerow([repr(float(f)), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "SpectroscopyMap":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        flux = [float(x) for x in rows[0][1:]]
        freq = [float(r[0]) for r in rows[1:]]
        inten = [[float(x) for x in r[1:]] for r in rows[1:]]
        return cls(flux, freq, inten)

    def to_json(self, path) -> None:
        payload = {"flux_axis": self.flux_axis.tolist(), "freq_axis": self.freq_axis.tolist(),
                   "intensity": self.intensity.tolist(), "metadata": self.metadata}
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "SpectroscopyMap":
        d = json.loads(Path(path).read_text())
        return cls(d["flux_axis"], d["freq_axis"], d["intensity"], d.get("metadata", {}))

    def plot_script(self, csv_name: str, png_name: str = "map.png") -> str:
        """gnuplot script rendering the CSV as a flux-frequency heat map."""
        return "\n".join([
            "set terminal pngcairo size 900,700",
            f"set output '{png_name}'",
            "set datafile separator ','",
            "set xlabel 'flux offset (mPhi0)'",
            "set ylabel 'pump frequency (GHz)'",
            "set cblabel 'line strength (Omega_d^2)'",
            "set logscale cb",
            f"set xrange [{self.flux_axis.min()}:{self.flux_axis.max()}]",
            f"set yrange [{self.freq_axis.min()}:{self.freq_axis.max()}]",
            f"plot '{csv_name}' matrix nonuniform skip 0 with image notitle",
            "",
        ])


def _source_states(dec: EigenDecomposition, space: ProductSpace, probe_mode: int, max_photons: int) -> list[int]:
    sources = [0]
    for s in range(1, max_photons + 1):
        try:
            lab = space.label("g", {probe_mode: s})
        except KeyError:
            break
        k = int(np.argmax(dec.vectors[space.index(lab), :] ** 2))
        if k not in sources:
            sources.append(k)
    return sources


def render_map(config: SystemConfig, freq_range: tuple[float, float, int], linewidth: float = 0.01, *,
               probe_mode: int | None = None, max_photons: int = 3,
               source_weights: Sequence[float] | None = None) -> SpectroscopyMap:
    """Lorentzian-broadened line strengths over the configured flux sweep.

    Transitions start from the ground state and from the dressed states
    |g, s photons in ``probe_mode``> (s = 1..max_photons), the latter standing
    in for the probe-populated resonator; red sidebands start there.  Strengths
    are |<f|tau_z|i>|^2 in units of Omega_d^2, times the optional source weight.
    """
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    fmin, fmax, count = freq_range
    freqs = np.linspace(fmin, fmax, int(count))
    fluxes = config.flux_sweep.values()
    probe_mode = config.modes[0].index if probe_mode is None else probe_mode
    space = config.space("eigen")
    weights = list(source_weights) if source_weights is not None else [1.0] * (max_photons + 1)
    if len(weights) != max_photons + 1:
        raise ValueError("source_weights needs one entry per source state (ground + max_photons)")
    window = 50 * linewidth
    intensity = np.zeros((freqs.size, fluxes.size))
    for col, flux in enumerate(fluxes):
        dec, drive = eigen_problem(config, flux)
        d = np.asarray(drive)
        for w, src in zip(weights, _source_states(dec, space, probe_mode, max_photons)):
            elements = np.abs(dec.vectors.T @ (d @ dec.vectors[:, src])) ** 2
            line_f = dec.values - dec.values[src]
            keep = (line_f > 0) & (line_f > fmin - window) & (line_f < fmax + window) & (elements > 0)
            for lf, el in zip(line_f[keep], elements[keep]):
                intensity[:, col] += w * el * lorentzian(freqs - lf, linewidth)
    meta = {"linewidth_ghz": linewidth, "probe_mode": probe_mode, "max_photons": max_photons,
            "units": "|<f|tau_z|i>|^2 (multiply by Omega_d^2)"}
    return SpectroscopyMap(fluxes, freqs, intensity, meta)


def local_maxima(values: np.ndarray, axis_values: np.ndarray, rel_height: float = 0.0) -> np.ndarray:
    """Axis positions of strict local maxima above ``rel_height * max``."""
    v = np.asarray(values)
    thresh = rel_height * v.max() if v.size else 0.0
    idx = [i for i in range(1, v.size - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1] and v[i] > thresh]
    return np.asarray(axis_values)[idx]


def nearest_line(lines: Sequence[TransitionLine], freq: float) -> TransitionLine:
    return min(lines, key=lambda ln: abs(ln.frequency - freq))


def nominal_frequencies(config: SystemConfig, flux: float, kinds: Sequence[Sideband]) -> dict[str, float]:
    nu_q = qubit_frequency(config.qubit, flux)
    nu = {m.index: m.omega_ghz for m in config.modes}
    return {k.name: k.nominal_frequency(nu_q, nu) for k in kinds}


__all__ = [
    "Sideband", "Classification", "TransitionLine", "SpectroscopyMap", "DispersiveRegimeError",
    "classify_sideband", "candidate_sidebands", "lines_from_ground", "lines_from_state",
    "sideband_matrix_element", "sideband_table", "cross_section_peaks", "render_map",
    "eigen_problem", "dressed_pair", "drive_elements", "lorentzian", "local_maxima",
    "nearest_line", "nominal_frequencies",
]
