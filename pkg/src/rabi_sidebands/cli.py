"""``rabi-sidebands`` command-line interface.

Every run writes its outputs plus ``manifest.json`` (config hash, command,
outputs, version, seed) into ``--out``.  Exit codes: 0 success, 1 validation
failure, 2 configuration error, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, config_to_dict, load_preset, parse_config
from .eigensolver import ConvergenceError, diagonalize
from .hamiltonian import (DimensionError, FluxSweep, SystemConfig, build_hamiltonian, drive_operator,
                          flux_for_qubit_frequency, qubit_frequency)
from .spectroscopy import lines_from_ground, render_map, sideband_table

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3


def _triple(text: str, what: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--{what} expects a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--{what} expects numbers a:b:n, got {text!r}") from None
    if n < 1:
        raise ConfigError(f"--{what}: count must be >= 1")
    return a, b, n


def resolve_config(args) -> SystemConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    cfg = parse_config(args.config) if args.config else load_preset(args.preset or "paper_device")
    if args.rwa:
        cfg = replace(cfg, rwa=True)
    if args.flux_range:
        a, b, n = _triple(args.flux_range, "flux-range")
        cfg = replace(cfg, flux_sweep=FluxSweep(a, b, n))
    return cfg


class Run:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, args, config: SystemConfig, argv: list[str]):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.seed = args.seed
        self.argv = argv
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, payload) -> None:
        self.path(name).write_text(json.dumps(payload, indent=1, sort_keys=True, allow_nan=True) + "\n")

    def finish(self) -> None:
        manifest = {
            "config_hash": config_hash(self.config),
            "config": config_to_dict(self.config),
            "command": self.argv,
            "outputs": sorted(self.outputs),
            "tool_version": __version__,
            "seed": self.seed,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_spectrum(args, run: Run) -> int:
    cfg = run.config
    fluxes = cfg.flux_sweep.values()
    rows = []
    for flux in fluxes:
        dec = diagonalize(build_hamiltonian(cfg, flux, basis="eigen"))
        levels = dec.values if args.levels is None else dec.values[: args.levels]
        rows.append([float(flux), *(float(v) for v in levels)])
    nlev = len(rows[0]) - 1
    _csv(run.path("spectrum.csv"), ["flux_mPhi0", *(f"E{k}_GHz" for k in range(nlev))], rows)
    return EXIT_OK


def cmd_lines(args, run: Run) -> int:
    cfg = run.config
    flux = args.flux
    dec = diagonalize(build_hamiltonian(cfg, flux, basis="eigen"))
    drive = drive_operator(cfg, flux, basis="eigen")
    nu_q = qubit_frequency(cfg.qubit, flux)
    lines = lines_from_ground(dec, drive, args.max_lines, nu_q=nu_q, modes=cfg.modes, tol=args.tol,
                              min_element=args.min_element)
    run.write_json("lines.json", {"flux_mPhi0": flux, "nu_q_GHz": nu_q,
                                  "units": "drive_element per unit pump amplitude",
                                  "lines": [ln.to_dict() for ln in lines]})
    return EXIT_OK


def cmd_sidebands(args, run: Run) -> int:
    cfg = run.config
    if args.qubit_frequency is not None:
        fluxes = [flux_for_qubit_frequency(cfg.qubit, args.qubit_frequency)]
    else:
        fluxes = cfg.flux_sweep.values()
    rows = sideband_table(cfg, fluxes, s_max=args.s_max)
    header = list(rows[0].keys())
    _csv(run.path("sidebands.csv"), header, [[r[h] for h in header] for r in rows])
    return EXIT_OK


def cmd_map(args, run: Run) -> int:
    cfg = run.config
    freq = _triple(args.freq_range, "freq-range") if args.freq_range else (0.0, 14.0, 281)
    smap = render_map(cfg, freq, args.linewidth)
    smap.to_csv(run.path("map.csv"))
    smap.to_json(run.path("map.json"))
    run.path("map.gp").write_text(smap.plot_script("map.csv"))
    return EXIT_OK


def cmd_couplings(args, run: Run) -> int:
    from .perturbation import coupling_table, default_coupling_kinds, write_coupling_table

    cfg = run.config
    rows = coupling_table(cfg, cfg.flux_sweep.values(), default_coupling_kinds(cfg))
    write_coupling_table(rows, run.path("couplings.json"))
    return EXIT_OK


def cmd_fit(args, run: Run) -> int:
    from .fitting import DEFAULT_FREE, fit, read_observations

    if not args.observations:
        raise ConfigError("fit requires --observations CSV")
    try:
        obs = read_observations(args.observations)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    free = tuple(p for p in args.free.split(",") if p) if args.free is not None else DEFAULT_FREE
    result = fit(obs, free, run.config, seed=args.seed, max_evals=args.max_evals)
    result.to_json(run.path("fit.json"))
    return EXIT_OK if result.converged else EXIT_CONVERGENCE


def cmd_selfcheck(args, run: Run) -> int:
    from .selfcheck import run_selfcheck

    report = run_selfcheck(run.config, seed=args.seed)
    run.write_json("selfcheck.json", report)
    for item in report["checks"]:
        print(f"{'PASS' if item['passed'] else 'FAIL'}  {item['name']}: {item['detail']}")
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


COMMANDS = {
    "spectrum": cmd_spectrum,
    "lines": cmd_lines,
    "sidebands": cmd_sidebands,
    "map": cmd_map,
    "couplings": cmd_couplings,
    "fit": cmd_fit,
    "selfcheck": cmd_selfcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file")
    common.add_argument("--preset", choices=["paper_device"], help="bundled configuration (default)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rwa", action="store_true", help="drop counter-rotating and longitudinal terms")
    common.add_argument("--flux-range", metavar="a:b:n", help="override the flux sweep (mPhi0)")

    p = argparse.ArgumentParser(prog="rabi-sidebands", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", parents=[common], help="eigenvalues vs flux (CSV)")
    s.add_argument("--levels", type=int, default=None, help="keep only the lowest N levels")

    s = sub.add_parser("lines", parents=[common], help="transition lines from the ground state (JSON)")
    s.add_argument("--flux", type=float, default=0.0, help="flux offset in mPhi0")
    s.add_argument("--max-lines", type=int, default=None)
    s.add_argument("--tol", type=float, default=0.02, help="classification tolerance in GHz")
    s.add_argument("--min-element", type=float, default=0.0)

    s = sub.add_parser("sidebands", parents=[common], help="predicted sideband frequencies vs flux (CSV)")
    s.add_argument("--qubit-frequency", type=float, default=None,
                   help="evaluate only at the flux where nu_q equals this value (GHz)")
    s.add_argument("--s-max", type=int, default=3)

    s = sub.add_parser("map", parents=[common], help="synthetic spectroscopy map (CSV, JSON, gnuplot)")
    s.add_argument("--freq-range", metavar="a:b:n", help="pump frequency axis in GHz (default 0:14:281)")
    s.add_argument("--linewidth", type=float, default=0.01, help="Lorentzian HWHM in GHz")

    sub.add_parser("couplings", parents=[common], help="effective couplings vs flux (JSON)")

    s = sub.add_parser("fit", parents=[common], help="fit parameters to observed lines (JSON)")
    s.add_argument("--observations", metavar="CSV")
    s.add_argument("--free", default=None, help="comma-separated free parameters (default delta,ip,g1,g3)")
    s.add_argument("--max-evals", type=int, default=2000)

    sub.add_parser("selfcheck", parents=[common], help="run the invariant suite")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = resolve_config(args)
        run = Run(args, cfg, argv)
        code = COMMANDS[args.command](args, run)
        run.finish()
    except (ConfigError, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{args.command}: wrote {run.out} in {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
