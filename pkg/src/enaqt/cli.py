"""Command line: ``point``, ``sweep``, ``validate`` and ``presets``.

Exit codes: 0 success, 2 configuration error, 3 domain error, 4 I/O
failure, 5 failed validation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, ness, oracle
from .config import RunConfig, parse_overrides, schema_table
from .errors import ConvergenceError, DomainError, EnaqtError, ParameterError
from .model import ChainParams, spectrum
from .ness import BathConfig
from .observables import PointEvaluator
from .sweep import PRESETS, SweepResult, run_preset, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4, 5
TIER_TOL = {"dense": 1e-10, "ode": 1e-8, "fock": 1e-4}


class OutputError(EnaqtError):
    """Writing results failed."""


# --------------------------------------------------------------------------
# rendering


def render_value(value) -> str:
    """Shortest round-trip text for floats; everything else via str."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def render_csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([render_value(v) for v in row])
    return buf.getvalue()


def render_table(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(columns)] + [[render_value(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(lines) + "\n"


def atomic_write(path: Path, text: str):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise OutputError(f"cannot write {path}: {exc}") from exc


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.name + ".meta.json")


def emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


# --------------------------------------------------------------------------
# commands


def cmd_point(config: RunConfig, args) -> int:
    params, bath = config.chain(), config.bath()
    evaluator = PointEvaluator(params, bath)
    obs, state = evaluator.observe(bath.gamma)
    record = obs.as_dict()
    record["near_degenerate"] = state.near_degenerate
    for k, eps in enumerate(evaluator.spec.energies):
        record[f"eps_{k + 1}"] = float(eps)
    if args.populations:
        for k, p in enumerate(state.populations_raw):
            record[f"p_raw_{k + 1}"] = float(p)
        for k, p in enumerate(state.populations_norm):
            record[f"p_{k + 1}"] = float(p)
    if args.format == "csv":
        text = render_csv(list(record), [list(record.values())])
    else:
        text = render_table(["field", "value"], list(record.items()))
    emit(text, args.out)
    return EXIT_OK


def write_sweep(result: SweepResult, config: RunConfig, fmt: str, out: Path | None):
    text = render_csv(result.columns, result.rows) if fmt == "csv" else render_table(
        result.columns, result.rows
    )
    emit(text, out)
    if out is not None:
        meta = {"tool": "gaah-enaqt", "version": __version__, "config": config.to_dict(),
                "columns": result.columns, **result.metadata}
        atomic_write(sidecar_path(out), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_sweep(config: RunConfig, args) -> int:
    workers = args.workers if args.workers is not None else config.workers
    preset = args.preset or config.preset
    if preset is not None:
        result = run_preset(preset, config.chain(), config.bath(), workers)
    elif config.axes:
        result = run_sweep(config.sweep_spec(), workers)
    else:
        raise ParameterError("sweep needs --preset or an `axes` entry in the configuration")
    write_sweep(result, config, args.format, args.out)
    return EXIT_OK


def random_instance(rng: np.random.Generator, n_range=(2, 8)) -> tuple[ChainParams, BathConfig]:
    """A valid random chain and bath with a positive spectrum."""
    while True:
        params = ChainParams(
            n_sites=int(rng.integers(n_range[0], n_range[1] + 1)),
            lam=float(rng.uniform(0.0, 3.0)),
            alpha=float(rng.uniform(-0.95, 0.95)),
            phi=float(rng.uniform(0.0, 2 * math.pi)),
        )
        bath = BathConfig(
            t_hot=float(rng.uniform(0.1, 10.0)),
            t_cold=float(rng.uniform(0.1, 10.0)),
            gamma=float(rng.uniform(0.0, 10.0)),
        )
        if spectrum(params).energies.min() > 0:
            return params, bath


def componentwise_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """``max_k |a_k - b_k| / |b_k|``."""
    return float(np.max(np.abs(a - b) / np.abs(b)))


def _instances(config: RunConfig):
    rng = np.random.default_rng(config.seed)
    out = [("config", config.chain(), config.bath())]
    for i in range(config.validate_instances):
        params, bath = random_instance(rng)
        out.append((f"random[{i}] N={params.n_sites}", params, bath))
    return out


def validate_dense(config: RunConfig) -> list[tuple[str, float, float, str]]:
    checks = []
    for label, params, bath in _instances(config):
        spec = spectrum(params)
        eps_ref = abs(params.t)
        rec = ness.steady_state(spec, bath, eps_ref).populations_raw
        dense = ness.steady_state(spec, bath, eps_ref, method="dense").populations_raw
        checks.append((f"dense vs recursion {label}", componentwise_deviation(dense, rec),
                       TIER_TOL["dense"], ""))
    return checks


def validate_ode(config: RunConfig) -> list[tuple[str, float, float, str]]:
    checks = []
    for label, params, bath in _instances(config):
        spec = spectrum(params)
        eps_ref = abs(params.t)
        rec = ness.steady_state(spec, bath, eps_ref).populations_raw
        try:
            sol = oracle.integrate_adjoint(spec, bath, eps_ref=eps_ref)
        except ConvergenceError as exc:
            checks.append((f"adjoint ODE vs recursion {label}", math.inf, TIER_TOL["ode"], str(exc)))
            continue
        note = f"{sol.method}, {sol.n_rhs} rhs calls, residual {sol.residual:.2e}"
        checks.append((f"adjoint ODE vs recursion {label}",
                       componentwise_deviation(sol.populations, rec), TIER_TOL["ode"], note))
    return checks


def validate_fock(config: RunConfig) -> list[tuple[str, float, float, str]]:
    params, bath = config.chain(), config.bath()
    if params.n_sites > 6:
        raise ParameterError("tier fock requires n_sites <= 6")
    trunc = config.fock()
    rec = ness.steady_state(spectrum(params), bath, abs(params.t)).populations_raw
    try:
        history = oracle.converge_cutoff(params, bath, trunc)
    except oracle.CutoffError as exc:
        return [("cutoff convergence", exc.residual, trunc.convergence_tol, str(exc))]
    state = history[-1][0]
    trail = ", ".join(f"n_max={s.n_max}: {sh:.2e}" for s, sh in history[1:])
    return [
        ("cutoff convergence", history[-1][1], trunc.convergence_tol, trail),
        ("Fock vs recursion", componentwise_deviation(state.populations, rec), TIER_TOL["fock"],
         f"n_max={state.n_max}, dim={state.dimension}, {state.method}"),
        ("off-diagonal coherence", state.max_coherence, 1e-8, ""),
        ("generator residual", state.residual, 1e-10, ""),
        ("positivity (-min probability)", -state.min_probability, 1e-12, ""),
    ]


VALIDATORS = {"dense": validate_dense, "ode": validate_ode, "fock": validate_fock}


def cmd_validate(config: RunConfig, args) -> int:
    tiers = list(VALIDATORS) if args.tier == "all" else [args.tier]
    rows, ok = [], True
    if args.tier == "all" and config.n_sites > 6:
        tiers.remove("fock")
        rows.append(("SKIP", "fock", "Fock oracle", "", "", "requires n_sites <= 6"))
    for tier in tiers:
        for name, dev, tol, note in VALIDATORS[tier](config):
            passed = dev <= tol
            ok &= passed
            rows.append(("PASS" if passed else "FAIL", tier, name, f"{dev:.3e}", f"{tol:.0e}", note))
    columns = ["status", "tier", "check", "deviation", "tolerance", "note"]
    text = render_csv(columns, rows) if args.format == "csv" else render_table(columns, rows)
    emit(text, args.out)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_presets(config: RunConfig, args) -> int:
    rows = [(p.name, ",".join(p.columns), p.description) for p in PRESETS.values()]
    if args.schema:
        text = render_table(["key", "default", "meaning"], schema_table())
    elif args.format == "csv":
        text = render_csv(["preset", "columns", "description"], rows)
    else:
        text = render_table(["preset", "columns", "description"], rows)
    emit(text, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--workers", type=int, help="sweep worker processes")
    common.add_argument("--format", choices=("csv", "table"), default=None)
    common.add_argument("--preset", help="named figure preset")

    parser = argparse.ArgumentParser(
        prog="gaah-enaqt",
        description="Steady-state heat transport through a dephased quasiperiodic chain. "
                    "Any configuration key can be overridden with --key=value.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    point = sub.add_parser("point", parents=[common], help="evaluate one parameter point")
    point.add_argument("--populations", action="store_true", help="include mode populations")
    sub.add_parser("sweep", parents=[common], help="run a preset or configured grid")
    validate = sub.add_parser("validate", parents=[common], help="cross-check against oracles")
    validate.add_argument("--tier", choices=("dense", "ode", "fock", "all"), default="dense")
    presets = sub.add_parser("presets", parents=[common], help="list figure presets")
    presets.add_argument("--schema", action="store_true", help="list configuration keys instead")
    return parser


COMMANDS = {"point": cmd_point, "sweep": cmd_sweep, "validate": cmd_validate,
            "presets": cmd_presets}
DEFAULT_FORMAT = {"point": "table", "sweep": "csv", "validate": "table", "presets": "table"}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.format is None:
        args.format = DEFAULT_FORMAT[args.command]
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig()
        config = RunConfig.from_mapping(parse_overrides(extra), base=config)
        if args.workers is not None and args.workers < 1:
            raise ParameterError("--workers must be >= 1")
        return COMMANDS[args.command](config, args)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ConvergenceError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
