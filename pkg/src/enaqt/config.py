"""Run configuration: a flat, schema-checked key/value mapping (JSON on disk)."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ParameterError
from .model import GOLDEN_BETA, ChainParams
from .ness import BathConfig, SpectralDensity
from .oracle import TruncatedFockConfig
from .sweep import DERIVED_NAMES, SweepSpec, canonical_axis, get_preset

# key -> (accepted JSON types, help); defaults live on RunConfig
SCHEMA: dict[str, tuple[tuple[type, ...], str]] = {
    "n_sites": ((int,), "number of sites N >= 2"),
    "t": ((int, float), "hopping amplitude (nonzero)"),
    "lam": ((int, float), "quasiperiodic potential strength lambda"),
    "alpha": ((int, float), "mobility-edge parameter, -1 <= alpha < 1"),
    "beta": ((int, float), "potential wavenumber"),
    "phi": ((int, float), "potential phase"),
    "delta": ((int, float), "uniform on-site offset"),
    "t_hot": ((int, float), "hot-bath temperature at site 1"),
    "t_cold": ((int, float), "cold-bath temperature at site N"),
    "gamma": ((int, float), "dephasing rate >= 0"),
    "spectral_density": ((str,), "edge-bath spectral density: flat or ohmic"),
    "normalize_current": ((bool,), "use normalized populations in the current"),
    "preset": ((str, type(None)), "named figure preset for `sweep`"),
    "axes": ((dict,), "sweep grids: name -> list or {linspace|geomspace: [a, b, n], prepend: [...]}"),
    "derived": ((list,), "observables emitted by a custom sweep"),
    "workers": ((int,), "sweep worker processes"),
    "n_max": ((int,), "initial Fock occupation cutoff for `validate --tier fock`"),
    "convergence_tol": ((int, float), "cutoff convergence tolerance"),
    "dim_cap": ((int,), "largest Hilbert dimension the Fock oracle may build"),
    "validate_instances": ((int,), "random instances per dense/ode validation"),
    "seed": ((int,), "seed for random validation instances"),
}

ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class RunConfig:
    n_sites: int = 22
    t: float = 1.0
    lam: float = 0.4
    alpha: float = 0.6
    beta: float = GOLDEN_BETA
    phi: float = math.pi / 3
    delta: float = 2.0
    t_hot: float = 1e3
    t_cold: float = 0.1
    gamma: float = 1e-2
    spectral_density: str = "flat"
    normalize_current: bool = False
    preset: str | None = None
    axes: tuple[tuple[str, tuple[float, ...]], ...] = ()
    derived: tuple[str, ...] = ("current", "current_ratio")
    workers: int = 1
    n_max: int = 3
    convergence_tol: float = 1e-4
    dim_cap: int = 4096
    validate_instances: int = 10
    seed: int = 0

    # ---- construction

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "RunConfig | None" = None) -> "RunConfig":
        """Validate ``data`` against :data:`SCHEMA` and apply it over ``base``."""
        current = cls() if base is None else base
        changes = {}
        for raw_key, value in data.items():
            key = ALIASES.get(raw_key.replace("-", "_"), raw_key.replace("-", "_"))
            if key not in SCHEMA:
                raise ParameterError(f"unknown configuration key {raw_key!r}")
            types, _ = SCHEMA[key]
            if isinstance(value, bool) and bool not in types:
                raise ParameterError(f"{raw_key!r} must be {_type_names(types)}, got a boolean")
            if not isinstance(value, types):
                raise ParameterError(
                    f"{raw_key!r} must be {_type_names(types)}, got {type(value).__name__}"
                )
            changes[key] = _normalize(key, value)
        config = replace(current, **changes)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ParameterError("config file must hold a JSON object")
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["axes"] = {name: list(values) for name, values in self.axes}
        out["derived"] = list(self.derived)
        return out

    def validate(self):
        # constructing the library objects runs their domain checks
        self.chain()
        self.bath()
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.validate_instances < 0:
            raise ParameterError("validate_instances must be >= 0")
        if self.n_max < 1 or self.dim_cap < 1 or self.convergence_tol <= 0:
            raise ParameterError("n_max, dim_cap and convergence_tol must be positive")
        if self.preset is not None:
            get_preset(self.preset)
        if self.axes:
            self.sweep_spec()

    # ---- library objects

    def chain(self) -> ChainParams:
        return ChainParams(self.n_sites, self.t, self.lam, self.alpha, self.beta, self.phi, self.delta)

    def bath(self) -> BathConfig:
        return BathConfig(self.t_hot, self.t_cold, self.gamma, self.spectral_density,
                          self.normalize_current)

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(self.chain(), self.bath(), self.axes, self.derived)

    def fock(self) -> TruncatedFockConfig:
        return TruncatedFockConfig(n_max=self.n_max, n_sites=self.n_sites,
                                   convergence_tol=self.convergence_tol, dim_cap=self.dim_cap)


def _type_names(types) -> str:
    names = {int: "an integer", float: "a number", str: "a string", bool: "a boolean",
             dict: "an object", list: "a list", type(None): "null"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def _normalize(key: str, value):
    if key in ("t", "lam", "alpha", "beta", "phi", "delta", "t_hot", "t_cold", "gamma",
               "convergence_tol"):
        return float(value)
    if key == "spectral_density":
        try:
            return SpectralDensity(value).value
        except ValueError:
            raise ParameterError(
                f"spectral_density must be one of {[s.value for s in SpectralDensity]}"
            ) from None
    if key == "axes":
        return tuple((canonical_axis(name), resolve_grid(name, spec)) for name, spec in value.items())
    if key == "derived":
        bad = [d for d in value if d not in DERIVED_NAMES]
        if bad:
            raise ParameterError(f"unknown derived observables {bad}")
        return tuple(value)
    return value


def resolve_grid(name: str, spec) -> tuple[float, ...]:
    """Explicit values from a list or a ``linspace`` / ``geomspace`` recipe."""
    if isinstance(spec, list):
        values = spec
    elif isinstance(spec, dict):
        allowed = {"linspace", "geomspace", "prepend", "endpoint"}
        if set(spec) - allowed:
            raise ParameterError(f"axis {name!r}: unknown keys {sorted(set(spec) - allowed)}")
        kinds = [k for k in ("linspace", "geomspace") if k in spec]
        if len(kinds) != 1:
            raise ParameterError(f"axis {name!r} needs exactly one of linspace / geomspace")
        try:
            lo, hi, num = spec[kinds[0]]
            maker = np.linspace if kinds[0] == "linspace" else np.geomspace
            values = list(spec.get("prepend", [])) + maker(
                float(lo), float(hi), int(num), endpoint=bool(spec.get("endpoint", True))
            ).tolist()
        except (TypeError, ValueError) as exc:
            raise ParameterError(f"axis {name!r}: bad grid recipe {spec!r} ({exc})") from None
    else:
        raise ParameterError(f"axis {name!r} must be a list or a grid recipe")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ParameterError(f"axis {name!r} must contain numbers only")
    return tuple(float(v) for v in values)


def parse_overrides(tokens: list[str]) -> dict[str, Any]:
    """``--key=value`` flags; values are read as JSON, falling back to strings."""
    out = {}
    for token in tokens:
        if not token.startswith("--") or "=" not in token:
            raise ParameterError(f"overrides must look like --key=value, got {token!r}")
        key, text = token[2:].split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        out[key] = value
    return out


def schema_table() -> list[tuple[str, str, str]]:
    """(key, default, help) for every configuration key."""
    defaults = RunConfig().to_dict()
    return [(key, json.dumps(defaults[key]), text) for key, (_, text) in SCHEMA.items()]

