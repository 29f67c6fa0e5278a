"""Recover device parameters from measured line positions.

Each observation is a transition frequency from the ground state at one flux
point.  The forward model diagonalizes the full Hamiltonian and picks the
excitation selected by the observation's mode hint: the dressed state with
the largest |g, 1_n> weight for a mode line, or the largest |e, 0> weight for
the qubit line.  These branches follow the resonator-like (qubit-like) line
through dispersive shifts and switch only at the midpoint of an avoided
crossing.

The optimizer is a Nelder-Mead simplex in coordinates normalized by the
initial values, restarted from the incumbent after each convergence and
re-seeded with jitter when the simplex collapses.  Line data constrain some
parameter combinations only through a narrow avoided crossing, which leaves
a long rippled valley in the objective; between simplex stages the fit scans
that valley along the weakest Jacobian directions to step over the ripples.
"""
from __future__ import annotations

import csv
import functools
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .eigensolver import diagonalize, find_dressed_state
from .hamiltonian import SystemConfig, build_hamiltonian
from .operators import BasisLabel, ProductSpace

PARAM_NAMES = ("delta", "ip", "g1", "g2", "g3", "nu1", "nu2", "nu3")
DEFAULT_FREE = ("delta", "ip", "g1", "g3")


@dataclass(frozen=True)
class LineObservation:
    flux: float
    frequency: float
    mode_hint: int | None = None
    weight: float = 1.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"observed frequency must be > 0, got {self.frequency}")
        if not self.weight >= 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")

    @property
    def selector(self) -> str:
        return "qubit" if self.mode_hint is None else f"mode:{self.mode_hint}"


@dataclass
class FitResult:
    params: dict[str, float]
    free: tuple[str, ...]
    residual_rms: float
    residuals: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    covariance_diag: dict[str, float] = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "free": list(self.free),
            "residual_rms_GHz": self.residual_rms,
            "residuals_GHz": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "covariance_diag": self.covariance_diag,
            "message": self.message,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def config_params(config: SystemConfig) -> dict[str, float]:
    """Named parameter values of a configuration (modes that are absent are skipped)."""
    out = {"delta": config.qubit.gap_ghz, "ip": config.qubit.persistent_current_na}
    for m in config.modes:
        out[f"g{m.index}"] = m.g_ghz
        out[f"nu{m.index}"] = m.omega_ghz
    return out


def apply_params(config: SystemConfig, params: Mapping[str, float] | None) -> SystemConfig:
    """Copy of ``config`` with named parameters replaced; magnitudes are used so g_n >= 0."""
    if not params:
        return config
    unknown = set(params) - set(config_params(config))
    if unknown:
        raise KeyError(f"unknown fit parameters {sorted(unknown)}")
    qubit = config.qubit
    if "delta" in params or "ip" in params:
        qubit = replace(qubit, gap_ghz=abs(params.get("delta", qubit.gap_ghz)),
                        persistent_current_na=abs(params.get("ip", qubit.persistent_current_na)))
    modes = []
    for m in config.modes:
        g = abs(params.get(f"g{m.index}", m.g_ghz))
        nu = abs(params.get(f"nu{m.index}", m.omega_ghz))
        modes.append(replace(m, g_ghz=g, omega_ghz=nu))
    return replace(config, qubit=qubit, modes=tuple(modes))


class SpectrumCache:
    """Thread-safe LRU of excitation spectra keyed on (parameters, flux)."""

    def __init__(self, maxsize: int = 4096):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key, compute: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            self.misses += 1
            self._data[key] = value
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value


_CACHE = SpectrumCache()


def _config_key(config: SystemConfig) -> tuple:
    return (config.qubit.gap_ghz, config.qubit.persistent_current_na, config.rwa,
            tuple((m.index, m.omega_ghz, m.g_ghz, m.truncation) for m in config.modes))


@dataclass(frozen=True)
class _Spectrum:
    excitations: np.ndarray  # E_k - E_0
    dominant: np.ndarray  # for each bare basis row, the eigenstate carrying most of its weight


def excitation_spectrum(config: SystemConfig, flux: float, cache: SpectrumCache | None = _CACHE) -> _Spectrum:
    """Excitation energies and dominant-state map at ``flux``.

    H(-flux) maps onto H(flux) under a -> -a, which keeps every bare label, so
    the spectrum is computed (and cached) at |flux|.
    """
    flux = abs(float(flux))

    def compute():
        dec = diagonalize(build_hamiltonian(config, flux, basis="eigen"))
        return _Spectrum(dec.values - dec.values[0], np.argmax(dec.vectors**2, axis=1))
    if cache is None:
        return compute()
    return cache.get((_config_key(config), flux), compute)


@functools.lru_cache(maxsize=256)
def _selector_row(truncations: tuple[int, ...], mode_indices: tuple[int, ...], selector: str) -> int:
    """Basis index of the bare state that names a line: |e, 0> or |g, 1_n>."""
    space = ProductSpace(truncations, mode_indices, "eigen")
    if selector == "qubit":
        return space.index(space.label("e"))
    if selector.startswith("mode:"):
        return space.index(space.label("g", {int(selector[5:]): 1}))
    raise ValueError(f"unknown line selector {selector!r}")


def _pick(spec: _Spectrum, config: SystemConfig, selector: str) -> float:
    row = _selector_row(tuple(m.truncation for m in config.modes), tuple(m.index for m in config.modes), selector)
    return float(spec.excitations[spec.dominant[row]])


def predict_line(config: SystemConfig, flux: float, selector: str | BasisLabel,
                 params: Mapping[str, float] | None = None, cache: SpectrumCache | None = _CACHE) -> float:
    """Ground-to-excited transition frequency (GHz) for the selected line.

    ``selector`` is ``"mode:n"`` (the dressed state carrying most of |g, 1_n>,
    i.e. the photon-like branch of mode n), ``"qubit"`` (most of |e, 0>), or a
    BasisLabel; the last form raises AmbiguousLabelError near avoided crossings.
    """
    cfg = apply_params(config, params)
    if isinstance(selector, BasisLabel):
        dec = diagonalize(build_hamiltonian(cfg, flux, basis="eigen"))
        k = find_dressed_state(dec, selector)
        return float(dec.values[k] - dec.values[0])
    return _pick(excitation_spectrum(cfg, flux, cache), cfg, selector)


def predict_lines(config: SystemConfig, observations: Sequence[LineObservation],
                  params: Mapping[str, float] | None = None, cache: SpectrumCache | None = _CACHE) -> np.ndarray:
    cfg = apply_params(config, params)
    local: dict[float, _Spectrum] = {}
    out = np.empty(len(observations))
    for k, ob in enumerate(observations):
        key = abs(ob.flux)
        spec = local.get(key)
        if spec is None:
            spec = local[key] = excitation_spectrum(cfg, key, cache)
        out[k] = _pick(spec, cfg, ob.selector)
    return out


def synthetic_observations(config: SystemConfig, fluxes: Iterable[float], mode_hints: Sequence[int | None],
                           noise_ghz: float = 0.0, rng: np.random.Generator | None = None) -> list[LineObservation]:
    """Model-generated line positions, optionally with Gaussian frequency noise."""
    if noise_ghz > 0 and rng is None:
        raise ValueError("a seeded rng is required when noise_ghz > 0")
    obs = []
    for flux in fluxes:
        for hint in mode_hints:
            sel = "qubit" if hint is None else f"mode:{hint}"
            f = predict_line(config, float(flux), sel, cache=None)
            if noise_ghz > 0:
                f += noise_ghz * rng.standard_normal()
            obs.append(LineObservation(float(flux), f, hint))
    return obs


def nelder_mead(fun: Callable[[np.ndarray], float], x0: np.ndarray, *, step: float = 0.1,
                max_evals: int = 2000, ftol: float = 1e-9, xtol: float = 1e-10, restarts: int = 3,
                rng: np.random.Generator | None = None, fatol: float = 0.0):
    """Minimize ``fun`` from ``x0``.

    A simplex has converged when its objective spread is at most
    ``ftol * |f_best| + fatol`` or its diameter falls below ``xtol``.

    Returns (x_best, f_best, iterations, evaluations, converged, history) where
    ``history`` holds the incumbent objective after every accepted step.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n = x0.size
    evals = 0
    iterations = 0
    history: list[float] = []

    def f(x):
        nonlocal evals
        evals += 1
        return float(fun(x))

    def make_simplex(center):
        pts = [center.copy()]
        for i in range(n):
            p = center.copy()
            p[i] += step if p[i] == 0 else step * p[i]
            pts.append(p)
        return np.array(pts)

    x_best = np.array(x0, dtype=float)
    f_best = f(x_best)
    history.append(f_best)
    converged = False
    prev_best = f_best
    for attempt in range(restarts + 1):
        if evals + n > max_evals:
            break
        sim = make_simplex(x_best)
        fs = np.array([f_best] + [f(p) for p in sim[1:]])
        local_conv = False
        # an iteration costs at most n + 2 evaluations (reflect, contract, shrink)
        while evals + n + 2 <= max_evals:
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            spread = fs[-1] - fs[0]
            diam = np.max(np.abs(sim[1:] - sim[0]))
            if spread <= ftol * abs(fs[0]) + fatol + 1e-300 or diam < xtol:
                local_conv = True
                break
            iterations += 1
            centroid = sim[:-1].mean(axis=0)
            xr = centroid + (centroid - sim[-1])
            fr = f(xr)
            if fr < fs[0]:
                xe = centroid + 2.0 * (centroid - sim[-1])
                fe = f(xe)
                sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < fs[-2]:
                sim[-1], fs[-1] = xr, fr
            else:
                inside = fr >= fs[-1]
                xc = centroid + (0.5 * (sim[-1] - centroid) if inside else 0.5 * (xr - centroid))
                fc = f(xc)
                if fc < min(fr, fs[-1]):
                    sim[-1], fs[-1] = xc, fc
                else:
                    sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                    fs[1:] = [f(p) for p in sim[1:]]
            k = int(np.argmin(fs))
            if fs[k] < f_best:
                x_best, f_best = sim[k].copy(), float(fs[k])
            history.append(f_best)
            # a collapsed simplex (rank-deficient edges) cannot explore; re-seed it
            edges = sim[1:] - sim[0]
            if (diam > xtol and evals + n + 1 <= max_evals
                    and np.linalg.matrix_rank(edges, tol=1e-13 * max(diam, 1e-300)) < n):
                sim = make_simplex(x_best + step * 1e-3 * rng.standard_normal(n))
                fs = np.array([f(p) for p in sim])
        if not local_conv:
            break
        if attempt > 0 and prev_best - f_best <= ftol * abs(f_best) + fatol + 1e-300:
            converged = True
            break
        prev_best = f_best
        converged = True
    return x_best, f_best, iterations, evals, converged and evals < max_evals, history


def fit(observations: Sequence[LineObservation], free_params: Sequence[str], init: SystemConfig,
        *, seed: int = 0, max_evals: int = 2000, restarts: int = 3, step: float = 0.1,
        cache: SpectrumCache | None = _CACHE) -> FitResult:
    """Weighted least-squares fit of the named free parameters to observed lines.

    Stages, all drawing on one budget of ``max_evals`` objective calls: a
    coarse simplex search from ``init``; up to four profile scans along the
    least-determined directions (see ``_profile_scan``), each followed by a
    short simplex search when it finds a lower objective; a final polish with
    restarts.  ``seed`` drives the simplex re-seeding jitter.

    Converged when the objective spread over the simplex falls below 1e-9
    relative or below (1 Hz)^2 per unit weight (or the simplex shrinks below
    1e-10 in normalized coordinates)
    and a restart from the incumbent brings no further improvement; otherwise
    the best point found within ``max_evals`` is returned with converged=False.
    """
    free = tuple(free_params)
    base = config_params(init)
    unknown = set(free) - set(base)
    if unknown:
        raise KeyError(f"unknown fit parameters {sorted(unknown)}")
    obs = list(observations)
    if len(obs) < 2 * len(free):
        raise ValueError(f"{len(obs)} observations for {len(free)} free parameters; need at least {2 * len(free)}")
    w = np.array([ob.weight for ob in obs])
    y = np.array([ob.frequency for ob in obs])
    scale = np.array([base[p] if base[p] != 0 else 1.0 for p in free])

    def params_of(x):
        return {p: float(abs(v)) for p, v in zip(free, x * scale)}

    def residuals(x):
        return predict_lines(init, obs, params_of(x), cache) - y

    def objective(x):
        r = residuals(x)
        return float(np.sum(w * r * r))

    def rms(r):
        return float(math.sqrt(np.sum(w * r * r) / max(np.sum(w), 1e-300)))

    x0 = np.ones(len(free))
    if not free:
        r = residuals(x0)
        return FitResult(dict(base), free, rms(r), r, 0, 1, True, {}, [float(np.sum(w * r * r))],
                         "no free parameters")
    rng = np.random.default_rng(seed)
    fatol = _FIT_RESOLUTION_GHZ ** 2 * float(np.sum(w))
    left = max_evals
    its = 0
    hist: list[float] = []

    def simplex(x, step_, budget, restarts_):
        nonlocal left, its
        xs, fs, k, nev, conv, h = nelder_mead(objective, x, step=step_, max_evals=budget,
                                              restarts=restarts_, rng=rng, fatol=fatol)
        left -= nev
        its += k
        hist.extend(min(v, hist[-1]) if hist else v for v in h)
        return xs, fs, conv

    n_min = 2 * len(free) + 2
    xb, fb, conv = simplex(x0, step, min(left, max(n_min, int(0.35 * max_evals))), 1)
    scan_cost = 2 * min(2, len(free)) * _SCAN_STEPS * 3 + len(free) + 1  # worst case
    for _ in range(_SCAN_ROUNDS):
        if left < scan_cost + n_min:
            break
        xs, fs, nev = _profile_scan(residuals, xb, fb, np.sqrt(w))
        left -= nev
        if fs >= fb * (1 - 1e-6) - fatol:
            break
        xb, fb, conv = simplex(xs, 0.2 * step, min(left, max(n_min, int(0.15 * max_evals))), 1)
    if left > n_min:
        xb, fb, conv = simplex(xb, 0.1 * step, left, restarts)
    nev = max_evals - left
    r = residuals(xb)
    fitted = dict(base)
    fitted.update(params_of(xb))
    cov = _covariance_diag(residuals, xb, w, scale, free, len(obs))
    msg = "converged" if conv else f"stopped after {nev} evaluations without meeting the tolerance"
    return FitResult(fitted, free, rms(r), r, its, nev, conv, cov, hist, msg)


_FIT_RESOLUTION_GHZ = 1e-9  # residuals below 1 Hz are converged whatever their relative spread
_SCAN_STEP = 0.01
_SCAN_STEPS = 25
_SCAN_ROUNDS = 4
_SCAN_ABANDON = 4.0


def _profile_scan(residuals, x, f_x, sw, h=1e-4):
    """Escape a ripple of a flat valley by marching along its floor.

    Starting at ``x``, the fit marches in both senses along each of the two
    weakest right-singular vectors of the weighted Jacobian, up to
    ``_SCAN_STEPS`` steps of ``_SCAN_STEP`` (normalized units).  After every
    step two Gauss-Newton corrections in the remaining directions (with the
    Jacobian frozen at ``x``) pull the point back onto the valley floor, so
    the march follows a curved valley.  A branch is abandoned once its
    objective exceeds ``_SCAN_ABANDON`` times ``f_x``.

    Returns (x, f, evaluations); ``x`` is the input when nothing better was found.
    """
    p = x.size
    r0 = sw * residuals(x)
    jac = np.empty((r0.size, p))
    for k in range(p):
        dx = np.zeros(p)
        dx[k] = h
        jac[:, k] = (sw * residuals(x + dx) - r0) / h
    evals = p + 1
    vt = np.linalg.svd(jac, full_matrices=False)[2]
    best_x, best_f = x, f_x
    for j in range(p - 1, max(p - 3, -1), -1):
        rest = np.delete(vt, j, axis=0).T
        jr = jac @ rest
        for sense in (-1.0, 1.0):
            xs = x.copy()
            for _ in range(_SCAN_STEPS):
                xs = xs + sense * _SCAN_STEP * vt[j]
                for _ in range(2 if rest.shape[1] else 0):
                    xs = xs + rest @ np.linalg.lstsq(jr, -sw * residuals(xs), rcond=None)[0]
                    evals += 1
                rs = sw * residuals(xs)
                evals += 1
                fs = float(rs @ rs)
                if fs < best_f:
                    best_x, best_f = xs, fs
                if fs > _SCAN_ABANDON * f_x:
                    break
    return best_x, best_f, evals


def _covariance_diag(residuals, x, w, scale, free, m) -> dict[str, float]:
    """Diagonal of s^2 (J^T W J)^-1 from a central-difference Jacobian (parameter units)."""
    p = len(free)
    h = 1e-6
    jac = np.empty((m, p))
    for k in range(p):
        dx = np.zeros(p)
        dx[k] = h
        jac[:, k] = (residuals(x + dx) - residuals(x - dx)) / (2 * h) / scale[k]
    r = residuals(x)
    dof = max(m - p, 1)
    s2 = float(np.sum(w * r * r)) / dof
    jtj = jac.T @ (w[:, None] * jac)
    inv = np.linalg.pinv(jtj)
    return {name: float(s2 * inv[k, k]) for k, name in enumerate(free)}


OBS_COLUMNS = ("flux_mPhi0", "freq_GHz", "mode_hint", "weight")


def read_observations(path) -> list[LineObservation]:
    """Observation CSV with header ``flux_mPhi0,freq_GHz,mode_hint,weight``.

    ``mode_hint`` may be empty (qubit line); ``weight`` defaults to 1.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"flux_mPhi0", "freq_GHz"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain flux_mPhi0 and freq_GHz")
        extra = set(reader.fieldnames) - set(OBS_COLUMNS)
        if extra:
            raise ValueError(f"{path}: unknown columns {sorted(extra)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                hint = (row.get("mode_hint") or "").strip()
                wt = (row.get("weight") or "").strip()
                out.append(LineObservation(float(row["flux_mPhi0"]), float(row["freq_GHz"]),
                                           int(hint) if hint else None, float(wt) if wt else 1.0))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_observations(observations: Sequence[LineObservation], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(OBS_COLUMNS)
        for ob in observations:
            wr.writerow([repr(ob.flux), repr(ob.frequency), "" if ob.mode_hint is None else ob.mode_hint,
                         repr(ob.weight)])
