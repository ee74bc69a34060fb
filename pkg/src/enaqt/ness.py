"""Exact nonequilibrium steady state in the eigenmode basis.

The edge baths sit at sites 1 (hot) and N (cold); dephasing from a zero
temperature bath only moves population from higher to lower modes, so the
population equations are triangular and are solved by back substitution
from the top mode down. Coherences between distinct modes vanish.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import DomainError, ParameterError
from .model import Spectrum

# gaps below this break the resolvable-gap assumption behind the secular
# master equation; the computation proceeds but the state is flagged
NEAR_DEGENERATE_GAP = 1e-9


class SpectralDensity(str, Enum):
    FLAT = "flat"
    OHMIC = "ohmic"


@dataclass(frozen=True)
class BathConfig:
    """Edge-bath temperatures, dephasing rate and modelling policies.

    ``normalize_current`` selects normalized instead of raw populations in
    the energy current; spread measures always use normalized populations.
    """

    t_hot: float = 1e3
    t_cold: float = 0.1
    gamma: float = 1e-2
    spectral_density: SpectralDensity = SpectralDensity.FLAT
    normalize_current: bool = False

    def __post_init__(self):
        for name in ("t_hot", "t_cold", "gamma"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.t_hot <= 0 or self.t_cold <= 0:
            raise ParameterError("bath temperatures must be positive")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        try:
            sd = SpectralDensity(self.spectral_density)
        except ValueError:
            raise ParameterError(
                f"spectral_density must be one of {[s.value for s in SpectralDensity]}"
            ) from None
        object.__setattr__(self, "spectral_density", sd)
        object.__setattr__(self, "normalize_current", bool(self.normalize_current))

    def replace(self, **changes) -> "BathConfig":
        return replace(self, **changes)


def spin_occupation(eps, temperature):
    """Bath spin occupation ``1/(exp(eps/T) + 1)``, overflow safe."""
    temperature = np.asarray(temperature, dtype=float)
    if np.any(temperature <= 0):
        raise ParameterError("temperature must be positive")
    out = expit(-np.asarray(eps, dtype=float) / temperature)
    return float(out) if out.ndim == 0 else out


def occupation_gap(eps, temperature):
    """``1 - 2 n(eps)`` evaluated as ``tanh(eps / 2T)`` to keep digits at high T."""
    out = np.tanh(np.asarray(eps, dtype=float) / (2.0 * np.asarray(temperature, dtype=float)))
    return float(out) if out.ndim == 0 else out


def spectral_weight(eps: np.ndarray, bath: BathConfig, eps_ref: float = 1.0) -> np.ndarray:
    """Edge-bath spectral density J(eps_k): 1 (flat) or eps/eps_ref (ohmic)."""
    if bath.spectral_density is SpectralDensity.OHMIC:
        return np.abs(eps) / eps_ref
    return np.ones_like(eps)


def dephasing_kernel(eps: np.ndarray, bath: BathConfig, eps_ref: float = 1.0) -> np.ndarray:
    """Relative dephasing rate gamma(|eps_i - eps_k|)/gamma for every mode pair."""
    if bath.spectral_density is SpectralDensity.OHMIC:
        return np.abs(eps[:, None] - eps[None, :]) / eps_ref
    return np.ones((eps.size, eps.size))


@dataclass(frozen=True)
class NessCoefficients:
    """Coefficients of the population recursion.

    ``c`` is the mode overlap ``C_ik = sum_n S_ni^2 S_nk^2`` (diagonal equals
    the per-state IPR); ``kernel`` holds the spectral-density weight of each
    dephasing channel, so the transfer rate from mode i to k is
    ``gamma * kernel[i, k] * c[i, k]``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    edge_loss: np.ndarray
    kernel: np.ndarray
    gamma: float

    @property
    def transfer(self) -> np.ndarray:
        return self.gamma * self.kernel * self.c

    def with_gamma(self, gamma: float) -> "NessCoefficients":
        """Same spectrum and temperatures at a different dephasing rate."""
        if gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {gamma}")
        rates = self.kernel * self.c
        a = self.edge_loss + gamma * np.triu(rates, 1).sum(axis=0)
        return NessCoefficients(a, self.b, self.c, self.edge_loss, self.kernel, float(gamma))


def mode_overlaps(spec: Spectrum) -> np.ndarray:
    c = spec.weights.T @ spec.weights
    # pin the diagonal to the IPR so max(C) == max(IPR) holds bit for bit
    np.fill_diagonal(c, spec.ipr)
    return c


def coefficients(spec: Spectrum, bath: BathConfig, eps_ref: float = 1.0) -> NessCoefficients:
    """A_k, B_k, C_ik for the given spectrum and baths.

    Requires every eigenvalue to be positive so that ``1 - 2 n_l(eps_k) > 0``.
    """
    eps = spec.energies
    if np.any(eps <= 0):
        bad = int(np.argmax(eps <= 0))
        raise DomainError(
            f"eigenvalue eps_{bad + 1} = {eps[bad]:.6g} <= 0; the steady state "
            "requires a positive spectrum"
        )
    w_hot, w_cold = spec.weights[0], spec.weights[-1]
    jd = spectral_weight(eps, bath, eps_ref)
    edge_loss = jd * (
        w_hot * occupation_gap(eps, bath.t_hot) + w_cold * occupation_gap(eps, bath.t_cold)
    )
    b = jd * (w_hot * spin_occupation(eps, bath.t_hot) + w_cold * spin_occupation(eps, bath.t_cold))
    c = mode_overlaps(spec)
    kernel = dephasing_kernel(eps, bath, eps_ref)
    base = NessCoefficients(edge_loss, b, c, edge_loss, kernel, 0.0)
    return base.with_gamma(bath.gamma)


@dataclass(frozen=True)
class NessState:
    """Mode populations of the steady state (coherences are identically zero)."""

    populations_raw: np.ndarray
    populations_norm: np.ndarray
    coefficients: NessCoefficients
    near_degenerate: bool = False
    method: str = field(default="recursion", compare=False)

    @property
    def size(self) -> int:
        return self.populations_raw.size


def _make_state(raw: np.ndarray, coeffs: NessCoefficients, near_degenerate: bool, method: str):
    if np.any(raw < 0):
        raise DomainError("negative steady-state population; coefficients are inconsistent")
    total = math.fsum(raw)
    if total <= 0 or not math.isfinite(total):
        raise DomainError(f"population sum {total!r} cannot be normalized")
    raw.setflags(write=False)
    norm = raw / total
    norm.setflags(write=False)
    return NessState(raw, norm, coeffs, near_degenerate, method)


def _check_a(coeffs: NessCoefficients):
    if np.any(coeffs.a <= 0) or not np.all(np.isfinite(coeffs.a)):
        bad = int(np.argmax(~(coeffs.a > 0)))
        raise DomainError(
            f"A_{bad + 1} = {coeffs.a[bad]!r} is not positive; check the spectrum and temperatures"
        )


def solve_recursion(coeffs: NessCoefficients, near_degenerate: bool = False) -> NessState:
    """Back substitution from the top mode.

    ``p_N = B_N / A_N``, then for k = N-1..1
    ``p_k = (B_k + gamma * sum_{i>k} K_ik C_ik p_i) / A_k``. The inner sum runs
    over descending i and is accumulated exactly with ``math.fsum`` since the
    populations span many decades at high hot-bath temperature.
    """
    _check_a(coeffs)
    n = coeffs.a.size
    a, b = coeffs.a.tolist(), coeffs.b.tolist()
    rates = (coeffs.kernel * coeffs.c).tolist()
    gamma = coeffs.gamma
    p = [0.0] * n
    for k in range(n - 1, -1, -1):
        if gamma > 0 and k < n - 1:
            row = rates[k]
            inflow = math.fsum([row[i] * p[i] for i in range(n - 1, k, -1)])
            p[k] = (b[k] + gamma * inflow) / a[k]
        else:
            p[k] = b[k] / a[k]
    return _make_state(np.array(p), coeffs, near_degenerate, "recursion")


def solve_dense(coeffs: NessCoefficients, near_degenerate: bool = False) -> NessState:
    """Same fixed point from one dense LU solve of ``M p = B``.

    ``M_kk = A_k`` and ``M_ki = -gamma K_ik C_ik`` for i > k, assembled in full
    and handed to a general solver (no use of the triangular structure).
    """
    _check_a(coeffs)
    m = -np.triu(coeffs.transfer, 1)
    m[np.diag_indices_from(m)] = coeffs.a
    try:
        with warnings.catch_warnings():
            # ill conditioning is expected for weakly coupled low modes
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            raw = scipy.linalg.solve(m, coeffs.b)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"steady-state system is singular: {exc}") from exc
    return _make_state(np.asarray(raw, dtype=float), coeffs, near_degenerate, "dense")


def steady_state(
    spec: Spectrum, bath: BathConfig, eps_ref: float = 1.0, method: str = "recursion"
) -> NessState:
    """Coefficients plus solve; ``method`` is ``"recursion"`` or ``"dense"``."""
    coeffs = coefficients(spec, bath, eps_ref)
    flag = spec.min_gap() < NEAR_DEGENERATE_GAP
    if method == "recursion":
        return solve_recursion(coeffs, flag)
    if method == "dense":
        return solve_dense(coeffs, flag)
    raise ValueError(f"unknown method {method!r}")
