"""Heat current, ENAQT ratio and population-spread / localization measures."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import ness
from .errors import DomainError, ParameterError
from .model import ChainParams, LocalizationReport, Spectrum, mobility_edge, spectrum
from .ness import BathConfig, NessCoefficients, NessState

# |J0| below this makes J/J0 meaningless
MIN_REFERENCE_CURRENT = 1e-300
# J0 must exceed this many ulps of the summed magnitude of its terms
ROUNDOFF_FACTOR = 1024


@dataclass(frozen=True)
class ObservableSet:
    current: float
    current_ratio: float
    eta: float
    eta_ratio: float
    delta_n: float
    delta_n_ratio: float
    avg_ipr: float
    f_loc: float
    max_coupling: float
    current_ref: float
    e_me: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def current_terms(
    spec: Spectrum, state: NessState, bath: BathConfig, eps_ref: float = 1.0
) -> tuple[np.ndarray, float]:
    """Per-mode contributions to the energy current and their magnitude.

    The magnitude ``sum_k |w_k| ((1 - 2n) <n_k> + n)`` sets the round-off
    scale of the sum, since the two pieces of each term cancel at equilibrium.
    """
    eps = spec.energies
    pops = state.populations_norm if bath.normalize_current else state.populations_raw
    weight = eps * spec.weights[-1] * ness.spectral_weight(eps, bath, eps_ref)
    gain = ness.occupation_gap(eps, bath.t_cold) * pops
    loss = ness.spin_occupation(eps, bath.t_cold)
    return weight * (gain - loss), float(np.sum(np.abs(weight) * (np.abs(gain) + loss)))


def energy_current(spec: Spectrum, state: NessState, bath: BathConfig, eps_ref: float = 1.0) -> float:
    """Energy current into the cold bath at site N.

    ``J = sum_k eps_k S_Nk^2 J(eps_k) [(1 - 2 n_N(eps_k)) <n_k> - n_N(eps_k)]``,
    positive when energy flows from the hot to the cold end. ``<n_k>`` is the
    raw population unless ``bath.normalize_current`` is set.
    """
    return math.fsum(current_terms(spec, state, bath, eps_ref)[0])


def resolvable(reference: float, scale: float = 0.0) -> bool:
    """Whether J0 stands clear of the cancellation noise of its own terms.

    ``scale`` is the magnitude returned by :func:`current_terms`; at equal
    temperatures J0 is pure round-off, which would make J/J0 meaningless.
    """
    floor = max(MIN_REFERENCE_CURRENT, ROUNDOFF_FACTOR * np.finfo(float).eps * scale)
    return abs(reference) > floor


def current_ratio(current: float, reference: float, scale: float = 0.0) -> float:
    if not resolvable(reference, scale):
        raise DomainError(f"reference current J0 = {reference!r} is too small for a ratio")
    return current / reference


def enaqt_ratio(
    spec: Spectrum, bath: BathConfig, bath_gamma0: BathConfig | None = None, eps_ref: float = 1.0
) -> float:
    """``J(gamma) / J(gamma = 0)``; both currents are solved from scratch."""
    if bath_gamma0 is None:
        bath_gamma0 = bath.replace(gamma=0.0)
    if bath_gamma0.gamma != 0.0:
        raise ParameterError("reference bath must have gamma = 0")
    if bath_gamma0.replace(gamma=bath.gamma) != bath:
        raise ParameterError("baths must agree in everything except gamma")
    j = energy_current(spec, ness.steady_state(spec, bath, eps_ref), bath, eps_ref)
    terms0, scale = current_terms(spec, ness.steady_state(spec, bath_gamma0, eps_ref), bath_gamma0, eps_ref)
    return current_ratio(j, math.fsum(terms0), scale)


def entropy_spread(state: NessState) -> float:
    """Normalized entropy ``-sum p log p / log N`` of the mode populations.

    Natural log throughout; ``0 log 0 = 0``.
    """
    p = state.populations_norm
    nz = p[p > 0]
    value = -math.fsum(nz * np.log(nz)) / math.log(p.size)
    return min(1.0, max(0.0, value))


def delta_n_spread(spec: Spectrum, state: NessState) -> float:
    """``1 - (1/N - n_ext)^2`` with ``n_ext = sum_k S_Nk^2 p_k`` (normalized p)."""
    n_ext = math.fsum(spec.weights[-1] * state.populations_norm)
    return 1.0 - (1.0 / spec.size - n_ext) ** 2


def average_ipr(spec: Spectrum, state: NessState) -> float:
    return math.fsum(spec.ipr * state.populations_norm)


def max_coupling(coeffs: NessCoefficients) -> float:
    """Largest mode overlap ``max_{i,k} C_ik``; always attained on the diagonal."""
    return float(np.max(coeffs.c))


class PointEvaluator:
    """Everything at fixed chain and bath parameters except the dephasing rate.

    Diagonalizes once and solves the gamma = 0 reference state once, so a
    sweep along gamma only repeats the O(N^2) recursion.
    """

    def __init__(self, params: ChainParams, bath: BathConfig, spec: Spectrum | None = None):
        self.params = params
        self.bath = bath
        self.eps_ref = abs(params.t)
        self.spec = spectrum(params) if spec is None else spec
        self.localization: LocalizationReport = mobility_edge(params, self.spec)
        self.near_degenerate = self.spec.min_gap() < ness.NEAR_DEGENERATE_GAP
        ref_bath = bath.replace(gamma=0.0)
        self._base = ness.coefficients(self.spec, ref_bath, self.eps_ref)
        self.reference = ness.solve_recursion(self._base, self.near_degenerate)
        terms, scale = current_terms(self.spec, self.reference, ref_bath, self.eps_ref)
        self.current_ref = math.fsum(terms)
        self.ratio_defined = resolvable(self.current_ref, scale)
        self.eta_ref = entropy_spread(self.reference)
        self.delta_n_ref = delta_n_spread(self.spec, self.reference)

    def state(self, gamma: float) -> NessState:
        if gamma == 0.0:
            return self.reference
        return ness.solve_recursion(self._base.with_gamma(gamma), self.near_degenerate)

    def observe(self, gamma: float) -> tuple[ObservableSet, NessState]:
        state = self.state(gamma)
        bath = self.bath.replace(gamma=gamma)
        current = energy_current(self.spec, state, bath, self.eps_ref)
        eta = entropy_spread(state)
        delta_n = delta_n_spread(self.spec, state)
        # e.g. equal bath temperatures: J is still meaningful, J/J0 is not
        ratio = current / self.current_ref if self.ratio_defined else math.nan
        obs = ObservableSet(
            current=current,
            current_ratio=ratio,
            eta=eta,
            eta_ratio=eta / self.eta_ref if self.eta_ref > 0 else math.nan,
            delta_n=delta_n,
            delta_n_ratio=delta_n / self.delta_n_ref,
            avg_ipr=average_ipr(self.spec, state),
            f_loc=self.localization.f_loc,
            max_coupling=max_coupling(state.coefficients),
            current_ref=self.current_ref,
            e_me=self.localization.e_me,
        )
        return obs, state


def evaluate_point(params: ChainParams, bath: BathConfig) -> tuple[ObservableSet, NessState, Spectrum]:
    """Diagonalize, solve the steady state and compute every observable."""
    ev = PointEvaluator(params, bath)
    obs, state = ev.observe(bath.gamma)
    return obs, state, ev.spec
