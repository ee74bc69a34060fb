"""Grid sweeps, the ENAQT optimizer and the named figure presets."""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import EnaqtError, ParameterError
from .model import ChainParams
from .ness import BathConfig
from .observables import ObservableSet, PointEvaluator

CHAIN_AXES = {"alpha": "alpha", "phi": "phi", "lambda": "lam"}
BATH_AXES = {"gamma": "gamma", "t_hot": "t_hot", "t_cold": "t_cold"}
AXIS_NAMES = tuple(CHAIN_AXES) + tuple(BATH_AXES)
OBSERVABLES = tuple(f.name for f in fields(ObservableSet))
DERIVED_NAMES = OBSERVABLES + ("populations",)


def canonical_axis(name: str) -> str:
    name = "lambda" if name == "lam" else name
    if name not in AXIS_NAMES:
        raise ParameterError(f"unknown sweep axis {name!r}; choose from {list(AXIS_NAMES)}")
    return name


@dataclass(frozen=True)
class SweepSpec:
    """Base parameters, named grids (row-major in declared order) and outputs."""

    params: ChainParams = field(default_factory=ChainParams)
    bath: BathConfig = field(default_factory=BathConfig)
    axes: tuple[tuple[str, tuple[float, ...]], ...] = ()
    derived: tuple[str, ...] = ("current", "current_ratio")

    def __post_init__(self):
        axes = tuple((canonical_axis(name), tuple(float(v) for v in values)) for name, values in self.axes)
        if not axes:
            raise ParameterError("a sweep needs at least one axis")
        names = [name for name, _ in axes]
        if len(set(names)) != len(names):
            raise ParameterError(f"axis names must be distinct, got {names}")
        for name, values in axes:
            if not values:
                raise ParameterError(f"axis {name!r} is empty")
            if not all(math.isfinite(v) for v in values):
                raise ParameterError(f"axis {name!r} has non-finite values")
        derived = tuple(self.derived)
        unknown = [d for d in derived if d not in DERIVED_NAMES]
        if unknown:
            raise ParameterError(f"unknown derived observables {unknown}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "derived", derived)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(values) for _, values in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def columns(self) -> list[str]:
        cols = [name for name, _ in self.axes]
        for d in self.derived:
            if d == "populations":
                cols.extend(f"p_{k + 1}" for k in range(self.params.n_sites))
            else:
                cols.append(d)
        return cols + ["error"]


@dataclass
class SweepResult:
    columns: list[str]
    rows: list[tuple]
    metadata: dict


def point_inputs(params: ChainParams, bath: BathConfig, coords: dict[str, float]):
    chain = {CHAIN_AXES[k]: v for k, v in coords.items() if k in CHAIN_AXES}
    baths = {BATH_AXES[k]: v for k, v in coords.items() if k in BATH_AXES}
    return params.replace(**chain), bath.replace(**baths)


def _row_values(spec: SweepSpec, obs: ObservableSet | None, populations) -> list:
    out = []
    n = spec.params.n_sites
    for d in spec.derived:
        if d == "populations":
            out.extend([math.nan] * n if populations is None else [float(p) for p in populations])
        elif obs is None:
            out.append(math.nan)
        else:
            value = getattr(obs, d)
            out.append(math.nan if value is None else float(value))
    return out


def _group_task(args) -> list[tuple]:
    """All gamma values of one (chain, temperatures) coordinate group."""
    spec, coords, gammas = args
    rows = []
    try:
        params, bath = point_inputs(spec.params, spec.bath, coords)
        evaluator = PointEvaluator(params, bath)
    except EnaqtError as exc:
        message = f"{type(exc).__name__}: {exc}"
        return [tuple(_row_values(spec, None, None)) + (message,) for _ in gammas]
    for gamma in gammas:
        try:
            obs, state = evaluator.observe(gamma)
            rows.append(tuple(_row_values(spec, obs, state.populations_norm)) + ("",))
        except EnaqtError as exc:
            rows.append(tuple(_row_values(spec, None, None)) + (f"{type(exc).__name__}: {exc}",))
    return rows


def _groups(spec: SweepSpec):
    """Split the grid into gamma groups; yields (flat indices, coords, gammas)."""
    names = [name for name, _ in spec.axes]
    values = [vals for _, vals in spec.axes]
    shape = spec.shape
    g_axis = names.index("gamma") if "gamma" in names else None
    other = [i for i in range(len(names)) if i != g_axis]
    for combo in itertools.product(*(range(shape[i]) for i in other)):
        coords = {names[i]: values[i][j] for i, j in zip(other, combo)}
        if g_axis is None:
            idx = [int(np.ravel_multi_index(combo, shape))]
            gammas = [spec.bath.gamma]
        else:
            idx, gammas = [], []
            for j, gamma in enumerate(values[g_axis]):
                full = list(combo)
                full.insert(g_axis, j)
                idx.append(int(np.ravel_multi_index(full, shape)))
                gammas.append(gamma)
        yield idx, coords, gammas


def _map(fn, tasks: list, workers: int) -> Iterable:
    if workers == 1 or len(tasks) <= 1:
        return map(fn, tasks)
    chunk = max(1, len(tasks) // (8 * workers))
    pool = ProcessPoolExecutor(max_workers=workers)
    try:
        return list(pool.map(fn, tasks, chunksize=chunk))
    finally:
        pool.shutdown()


def _check_workers(workers: int) -> int:
    if isinstance(workers, bool) or int(workers) != workers or workers < 1:
        raise ParameterError(f"workers must be a positive integer, got {workers!r}")
    return int(workers)


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Evaluate every grid point; the row order is row-major over ``spec.axes``.

    The reference current J0 is solved once per group of points that differ
    only in gamma. Errors are recorded in the row's ``error`` column.
    """
    workers = _check_workers(workers)
    start = time.perf_counter()
    groups = list(_groups(spec))
    tasks = [(spec, coords, gammas) for _, coords, gammas in groups]
    buffer: list[tuple | None] = [None] * spec.size
    names = [name for name, _ in spec.axes]
    values = [vals for _, vals in spec.axes]
    for (idx, _, _), rows in zip(groups, _map(_group_task, tasks, workers)):
        for flat, row in zip(idx, rows):
            multi = np.unravel_index(flat, spec.shape)
            coords = tuple(values[a][int(j)] for a, j in enumerate(multi))
            buffer[flat] = coords + row
    metadata = {
        "version": __version__,
        "axes": {name: list(vals) for name, vals in zip(names, values)},
        "derived": list(spec.derived),
        "workers": workers,
        "points": spec.size,
        "errors": sum(1 for row in buffer if row[-1]),
        "wall_seconds": time.perf_counter() - start,
    }
    return SweepResult(spec.columns(), buffer, metadata)


# --------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class OptimumRecord:
    lam: float
    max_ratio: float
    alpha_opt: float
    gamma_opt: float
    avg_ipr_opt: float
    error: str = ""


OPTIMUM_COLUMNS = ["lambda", "max_ratio", "alpha_opt", "gamma_opt", "avg_ipr_opt", "error"]


def _ratio_line(args):
    """J/J0 and <I> along a gamma grid; NaN where a point fails."""
    params, bath, gammas = args
    ratios = np.full(len(gammas), math.nan)
    iprs = np.full(len(gammas), math.nan)
    try:
        evaluator = PointEvaluator(params, bath)
    except EnaqtError:
        return ratios, iprs
    for j, gamma in enumerate(gammas):
        try:
            obs, _ = evaluator.observe(gamma)
        except EnaqtError:
            continue
        ratios[j], iprs[j] = obs.current_ratio, obs.avg_ipr
    return ratios, iprs


def _best(candidates: list[tuple[float, float, float, float]]):
    """Largest ratio; ties go to the smallest gamma, then the smallest alpha."""
    finite = [c for c in candidates if math.isfinite(c[0])]
    if not finite:
        return None
    top = max(c[0] for c in finite)
    return min((c for c in finite if c[0] == top), key=lambda c: (c[2], c[1]))


def optimize_enaqt(
    lambda_grid: Sequence[float],
    alpha_grid: Sequence[float],
    gamma_grid: Sequence[float],
    base: ChainParams | None = None,
    bath: BathConfig | None = None,
    workers: int = 1,
    refine_points: int = 9,
) -> list[OptimumRecord]:
    """Maximum J/J0 over the (alpha, gamma) grid for each lambda.

    After the exhaustive search, gamma is refined on a log grid spanning a
    factor of two either side of the best value at the best alpha. Failed
    points are excluded from the argmax.
    """
    workers = _check_workers(workers)
    base = ChainParams() if base is None else base
    bath = BathConfig() if bath is None else bath
    lambdas = [float(v) for v in lambda_grid]
    alphas = [float(v) for v in alpha_grid]
    gammas = [float(v) for v in gamma_grid]
    tasks = [(base.replace(lam=lam, alpha=a), bath, gammas) for lam in lambdas for a in alphas]
    lines = list(_map(_ratio_line, tasks, workers))

    winners, refine_tasks = [], []
    for i, lam in enumerate(lambdas):
        cands = []
        for j, a in enumerate(alphas):
            ratios, iprs = lines[i * len(alphas) + j]
            cands.extend((r, a, g, ipr) for r, g, ipr in zip(ratios, gammas, iprs))
        best = _best(cands)
        winners.append(best)
        if best is not None and best[2] > 0 and refine_points > 0:
            fine = np.geomspace(best[2] / 2, best[2] * 2, refine_points).tolist()
            refine_tasks.append((i, (base.replace(lam=lam, alpha=best[1]), bath, fine)))

    refined = _map(_ratio_line, [t for _, t in refine_tasks], workers)
    for (i, (_, _, fine)), (ratios, iprs) in zip(refine_tasks, refined):
        a = winners[i][1]
        cands = [winners[i]] + [(r, a, g, ipr) for r, g, ipr in zip(ratios, fine, iprs)]
        winners[i] = _best(cands)

    out = []
    for lam, best in zip(lambdas, winners):
        if best is None:
            out.append(OptimumRecord(lam, math.nan, math.nan, math.nan, math.nan, "no valid grid point"))
        else:
            out.append(OptimumRecord(lam, float(best[0]), best[1], best[2], float(best[3])))
    return out


# --------------------------------------------------------------------------
# presets

GAMMA_LOG = tuple(np.geomspace(1e-6, 1e2, 80).tolist())
ALPHA_80 = tuple(np.linspace(-1.0, 1.0, 81)[:-1].tolist())
PHI_GRID = tuple(np.linspace(0.0, 2.0 * math.pi, 121).tolist())


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    columns: tuple[str, ...]
    specs: tuple[SweepSpec, ...] = ()
    optimizer: dict | None = None


def _contour(derived: Sequence[str]) -> SweepSpec:
    return SweepSpec(axes=(("alpha", ALPHA_80), ("gamma", GAMMA_LOG)), derived=tuple(derived))


def _presets() -> dict[str, Preset]:
    fig1_alphas = (-1.0, -0.5, 0.0, 0.3, 0.6, 0.9)
    fig2 = ("current", "current_ratio", "eta", "eta_ratio", "f_loc", "avg_ipr")
    fig3 = ("current", "max_coupling", "eta", "avg_ipr")
    figs1 = ("current_ratio", "avg_ipr", "eta_ratio", "current")
    figs3 = ("eta", "delta_n", "delta_n_ratio")
    phi_points = ((0.1, 0.006), (0.9, 1.0))
    presets = [
        Preset(
            "fig1", "J/J0 and J versus gamma for a few alpha values",
            ("alpha", "gamma", "current", "current_ratio"),
            (SweepSpec(axes=(("alpha", fig1_alphas), ("gamma", GAMMA_LOG)),
                       derived=("current", "current_ratio")),),
        ),
        Preset("fig2", "80 x 80 (alpha, gamma) map of J/J0, spread and localization",
               ("alpha", "gamma") + fig2, (_contour(fig2),)),
        Preset(
            "fig3", "phase sweeps at (alpha, gamma) = (0.1, 0.006) and (0.9, 1)",
            ("alpha", "gamma", "phi") + fig3,
            tuple(SweepSpec(axes=(("alpha", (a,)), ("gamma", (g,)), ("phi", PHI_GRID)), derived=fig3)
                  for a, g in phi_points),
        ),
        Preset(
            "fig4", "maximum J/J0 versus lambda with its optimal alpha, gamma and <I>",
            tuple(OPTIMUM_COLUMNS[:-1]),
            optimizer={
                "lambda_grid": np.linspace(0.0, 3.0, 31).tolist(),
                "alpha_grid": np.linspace(-1.0, 1.0, 41)[:-1].tolist(),
                "gamma_grid": [0.0] + np.geomspace(1e-6, 1e2, 39).tolist(),
            },
        ),
        Preset("figS1", "(alpha, gamma) maps of J/J0, <I>, eta/eta0 and J",
               ("alpha", "gamma") + figs1, (_contour(figs1),)),
        Preset(
            "figS2", "(phi, gamma) maps of J at alpha = 0.1 and alpha = 0.9",
            ("alpha", "phi", "gamma", "current"),
            tuple(SweepSpec(axes=(("alpha", (a,)), ("phi", PHI_GRID[:-1:2] + (PHI_GRID[-1],)),
                                  ("gamma", GAMMA_LOG)), derived=("current",))
                  for a in (0.1, 0.9)),
        ),
        Preset("figS3", "(alpha, gamma) maps of eta, Delta_n and Delta_n/Delta_n0",
               ("alpha", "gamma") + figs3, (_contour(figs3),)),
    ]
    return {p.name: p for p in presets}


PRESETS = _presets()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def run_preset(
    name: str, params: ChainParams | None = None, bath: BathConfig | None = None, workers: int = 1
) -> SweepResult:
    """Run a named preset on top of the given base parameters."""
    preset = get_preset(name)
    params = ChainParams() if params is None else params
    bath = BathConfig() if bath is None else bath
    start = time.perf_counter()
    if preset.optimizer is not None:
        records = optimize_enaqt(base=params, bath=bath, workers=workers, **preset.optimizer)
        rows = [(r.lam, r.max_ratio, r.alpha_opt, r.gamma_opt, r.avg_ipr_opt, r.error) for r in records]
        meta = {"version": __version__, "optimizer": preset.optimizer, "workers": workers,
                "points": len(rows), "errors": sum(1 for r in rows if r[-1])}
        columns = list(OPTIMUM_COLUMNS)
    else:
        rows, meta = [], {"version": __version__, "workers": workers, "parts": []}
        columns = list(preset.columns) + ["error"]
        for spec in preset.specs:
            spec = SweepSpec(params, bath, spec.axes, spec.derived)
            part = run_sweep(spec, workers)
            order = [part.columns.index(c) for c in columns]
            rows.extend(tuple(row[i] for i in order) for row in part.rows)
            meta["parts"].append({k: part.metadata[k] for k in ("axes", "derived", "points", "errors")})
        meta["points"] = len(rows)
        meta["errors"] = sum(1 for r in rows if r[-1])
    meta["preset"] = name
    meta["wall_seconds"] = time.perf_counter() - start
    return SweepResult(columns, rows, meta)
