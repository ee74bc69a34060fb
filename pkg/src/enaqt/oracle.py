"""Brute-force validators for the closed-form steady state.

``integrate_adjoint`` time-integrates the population equations assembled
channel by channel from the adjoint dissipators. ``liouvillian_steady_state``
builds the full Lindblad generator on a truncated many-mode bosonic Fock
space and extracts its kernel. Neither path uses the recursion or its
A/B coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from . import ness
from .errors import ConvergenceError, CutoffError, DomainError, ParameterError
from .model import ChainParams, Spectrum, spectrum
from .ness import BathConfig

# --------------------------------------------------------------------------
# dissipator channels


@dataclass(frozen=True)
class Channel:
    """One Lindblad channel in the eigenmode basis.

    ``kind`` is ``"emit"`` (jump eta_k), ``"absorb"`` (jump eta_k^dag) or
    ``"dephase"`` (jump eta_k^dag eta_src, moving a quantum from ``src`` down
    to ``k``).
    """

    kind: str
    rate: float
    k: int
    src: int = -1


def channels(spec: Spectrum, bath: BathConfig, eps_ref: float = 1.0) -> list[Channel]:
    """All dissipator channels of the master equation with their rates."""
    eps = spec.energies
    amp = spec.vectors
    n = spec.size
    jd = ness.spectral_weight(eps, bath, eps_ref)
    out: list[Channel] = []
    for site, temp in ((0, bath.t_hot), (n - 1, bath.t_cold)):
        occ = ness.spin_occupation(eps, temp)
        for k in range(n):
            w = amp[site, k] ** 2 * jd[k]
            out.append(Channel("emit", float(w * (1.0 - occ[k])), k))
            out.append(Channel("absorb", float(w * occ[k]), k))
    if bath.gamma > 0:
        kernel = ness.dephasing_kernel(eps, bath, eps_ref)
        for low in range(n):
            for high in range(low + 1, n):
                overlap = math.fsum(amp[:, low] ** 2 * amp[:, high] ** 2)
                out.append(Channel("dephase", bath.gamma * kernel[low, high] * overlap, low, high))
    return out


def adjoint_generator(spec: Spectrum, bath: BathConfig, eps_ref: float = 1.0):
    """Linear population equations ``dp/dt = G p + s``.

    Adjoint action on ``<n_k>``: emission gives ``-r n_k``, absorption
    ``+r (n_k + 1)``; a dephasing channel moves ``r n_src`` from ``src`` to
    ``k`` (single-excitation closure of the bosonic product).
    """
    n = spec.size
    g = np.zeros((n, n))
    s = np.zeros(n)
    for ch in channels(spec, bath, eps_ref):
        if ch.kind == "emit":
            g[ch.k, ch.k] -= ch.rate
        elif ch.kind == "absorb":
            g[ch.k, ch.k] += ch.rate
            s[ch.k] += ch.rate
        else:
            g[ch.k, ch.src] += ch.rate
            g[ch.src, ch.src] -= ch.rate
    return g, s


class StiffnessError(ConvergenceError):
    """An explicit integrator exhausted its step budget."""


@dataclass(frozen=True)
class AdjointSolution:
    populations: np.ndarray
    t_final: float
    residual: float
    method: str
    n_rhs: int


def integrate_adjoint(
    spec: Spectrum,
    bath: BathConfig,
    horizon: float | None = None,
    dt: float | None = None,
    *,
    p0: np.ndarray | None = None,
    method: str = "auto",
    rtol: float = 1e-12,
    residual_tol: float = 1e-9,
    max_rhs: int = 500_000,
    eps_ref: float = 1.0,
) -> AdjointSolution:
    """Integrate the adjoint population equations to their fixed point.

    Runs to ``horizon`` (default ``80 / kappa``, with ``kappa`` the slowest
    relaxation rate; every transient has decayed by ``e^-80`` there) and then
    checks the componentwise residual ``|dp_k/dt| / (d_k p_k)``, where
    ``d_k`` is the decay rate of mode k. The generator is triangular, so this
    bounds the relative distance of each component from the fixed point.

    ``method`` is ``"RK45"`` (explicit Dormand-Prince 5(4)), ``"Radau"``
    (implicit, for stiff instances) or ``"auto"``, which picks RK45 unless
    the stiffness ratio predicts more than ``max_rhs`` right-hand-side calls.
    """
    if np.any(spec.energies <= 0):
        raise DomainError("adjoint integration requires a positive spectrum")
    g, s = adjoint_generator(spec, bath, eps_ref)
    decay = -np.diag(g)
    if np.any(decay <= 0):
        raise DomainError("a mode has no net relaxation; no fixed point exists")
    kappa, fastest = float(decay.min()), float(decay.max())
    if horizon is None:
        horizon = 80.0 / kappa
    if method == "auto":
        # explicit RK45 is stability limited: ~6 calls per step of ~3/fastest
        predicted = 2.0 * fastest * horizon
        method = "RK45" if predicted <= 0.5 * max_rhs else "Radau"
    if method not in ("RK45", "Radau"):
        raise ParameterError(f"unknown integration method {method!r}")
    y0 = np.zeros(spec.size) if p0 is None else np.array(p0, dtype=float)

    calls = 0

    def rhs(_t, p):
        nonlocal calls
        calls += 1
        if calls > max_rhs:
            raise StiffnessError(
                f"{method} exhausted {max_rhs} right-hand-side evaluations "
                f"(stiffness ratio {fastest / kappa:.3g})"
            )
        return g @ p + s

    # populations are bounded below by source / decay of each mode
    atol = 1e-3 * rtol * float(np.min(s / decay))
    kwargs = {"rtol": rtol, "atol": max(atol, 1e-300), "first_step": dt}
    if method == "Radau":
        kwargs["jac"] = g
    sol = solve_ivp(rhs, (0.0, horizon), y0, method=method, **kwargs)
    if sol.status < 0:
        raise ConvergenceError(f"{method} integration failed: {sol.message}")
    p_final = sol.y[:, -1]
    scale = np.maximum(decay * np.abs(p_final), 1e-300)
    res = float(np.max(np.abs(g @ p_final + s) / scale))
    # g @ p + s cannot be resolved below round-off of the largest term
    floor = 64 * np.finfo(float).eps * float(np.max(np.abs(g) @ np.abs(p_final) / scale))
    tol = max(residual_tol, floor)
    if res > tol:
        raise ConvergenceError(
            f"no fixed point within horizon {horizon:.3g}: residual {res:.3g} > {tol:.3g}",
            residual=res,
        )
    return AdjointSolution(p_final, float(sol.t[-1]), res, method, calls)


# --------------------------------------------------------------------------
# truncated Fock space


@dataclass(frozen=True)
class TruncatedFockConfig:
    """Occupation cutoff and size limits for the many-mode Fock oracle.

    ``dim_cap`` bounds the Hilbert dimension (n_max+1)^N; ``full_dim_cap``
    bounds the dimension for which the complete vectorized generator
    (size dim^2) is built. Above it only the invariant population sector is
    solved, which has the same kernel.
    """

    n_max: int = 3
    n_sites: int = 4
    convergence_tol: float = 1e-4
    dim_cap: int = 4096
    full_dim_cap: int = 256
    dense_cap: int = 1024

    def __post_init__(self):
        if self.n_max < 1:
            raise ParameterError("n_max must be >= 1")
        if not 1 <= self.n_sites <= 6:
            raise ParameterError("the Fock oracle supports at most 6 sites")
        if self.convergence_tol <= 0:
            raise ParameterError("convergence_tol must be positive")

    def dimension(self, n_max: int | None = None) -> int:
        return ((self.n_max if n_max is None else n_max) + 1) ** self.n_sites


def _mode_operators(n_modes: int, n_max: int) -> list[sp.csr_matrix]:
    local = sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")
    eye = sp.identity(n_max + 1, format="csr")
    ops = []
    for k in range(n_modes):
        op = sp.identity(1, format="csr")
        for j in range(n_modes):
            op = sp.kron(op, local if j == k else eye, format="csr")
        ops.append(op)
    return ops


def _jump_operators(chs: list[Channel], ops: list[sp.csr_matrix]):
    jumps = []
    for ch in chs:
        if ch.rate == 0.0:
            continue
        if ch.kind == "emit":
            jumps.append((ch.rate, ops[ch.k]))
        elif ch.kind == "absorb":
            jumps.append((ch.rate, ops[ch.k].T.tocsr()))
        else:
            jumps.append((ch.rate, (ops[ch.k].T @ ops[ch.src]).tocsr()))
    return jumps


def lindblad_superoperator(h: sp.spmatrix, jumps) -> sp.csr_matrix:
    """Column-stacked generator: ``vec(A X B) = (B^T kron A) vec(X)``."""
    dim = h.shape[0]
    eye = sp.identity(dim, format="csr", dtype=complex)
    out = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for rate, op in jumps:
        lhl = (op.conj().T @ op).tocsr()
        out = out + rate * (
            sp.kron(op.conj(), op) - 0.5 * sp.kron(eye, lhl) - 0.5 * sp.kron(lhl.T, eye)
        )
    return out.tocsc()


def _occupations(n_modes: int, n_max: int) -> np.ndarray:
    grids = np.indices((n_max + 1,) * n_modes).reshape(n_modes, -1)
    return grids.T  # row = basis state, mode 0 most significant


def population_generator(chs: list[Channel], n_modes: int, n_max: int) -> sp.csc_matrix:
    """Rate matrix on Fock-diagonal states (columns sum to zero).

    Every jump maps number states to number states, so the diagonal sector
    of the full generator is invariant; this is that block built directly.
    """
    occ = _occupations(n_modes, n_max)
    dim = occ.shape[0]
    strides = (n_max + 1) ** np.arange(n_modes - 1, -1, -1)
    idx = np.arange(dim)
    rows, cols, vals = [], [], []

    def add(mask, shift, rate):
        src = idx[mask]
        rows.append(src + shift)
        cols.append(src)
        vals.append(rate[mask])

    for ch in chs:
        if ch.rate == 0.0:
            continue
        k = ch.k
        if ch.kind == "emit":
            add(occ[:, k] > 0, -strides[k], ch.rate * occ[:, k])
        elif ch.kind == "absorb":
            add(occ[:, k] < n_max, strides[k], ch.rate * (occ[:, k] + 1))
        else:
            mask = (occ[:, ch.src] > 0) & (occ[:, k] < n_max)
            add(mask, strides[k] - strides[ch.src], ch.rate * occ[:, ch.src] * (occ[:, k] + 1))
    rows = np.concatenate(rows) if rows else np.array([], dtype=int)
    cols = np.concatenate(cols) if cols else np.array([], dtype=int)
    vals = np.concatenate(vals) if vals else np.array([])
    gain = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsc()
    loss = np.asarray(gain.sum(axis=0)).ravel()
    return (gain - sp.diags(loss)).tocsc()


def null_vector(
    gen: sp.spmatrix, dense_cap: int = 1024, normalization: np.ndarray | None = None,
    tol: float = 1e-14,
) -> np.ndarray:
    """Kernel vector of a generator, scaled so that ``normalization @ v = 1``.

    ``normalization`` defaults to all ones and must be a conserved functional
    (for example the trace), which makes row 0 of ``gen`` redundant. Dense SVD
    up to ``dense_cap``. Larger generators solve the bordered system (row 0
    replaced by the functional) with Jacobi-preconditioned BiCGSTAB, falling
    back to shifted inverse iteration when the Krylov solve stalls.
    """
    dim = gen.shape[0]
    if normalization is None:
        normalization = np.ones(dim)
    if dim <= dense_cap:
        dense = gen.toarray()
        basis = scipy.linalg.null_space(dense, rcond=1e-12)
        v = basis[:, 0] if basis.shape[1] == 1 else scipy.linalg.svd(dense)[2][-1].conj()
        return v / (normalization @ v)
    bordered = sp.lil_matrix(gen)
    bordered[0, :] = normalization
    bordered = bordered.tocsr()
    rhs = np.zeros(dim, dtype=gen.dtype)
    rhs[0] = 1.0
    diag = bordered.diagonal()
    diag[diag == 0] = 1.0
    v, info = spla.bicgstab(bordered, rhs, M=sp.diags(1.0 / diag), rtol=tol, maxiter=20 * dim)
    if info == 0:
        return v
    v = _inverse_iteration(gen, tol)
    return v / (normalization @ v)


def _inverse_iteration(gen: sp.spmatrix, tol: float) -> np.ndarray:
    # every nonzero eigenvalue has negative real part, so gen - sigma I with
    # a small sigma > 0 is never singular and the kernel dominates
    dim = gen.shape[0]
    scale = float(abs(gen.diagonal()).max()) or 1.0
    sigma = 1e-10 * scale
    lu = spla.splu((gen - sigma * sp.identity(dim, format="csc", dtype=gen.dtype)).tocsc())
    v = np.ones(dim, dtype=gen.dtype) / math.sqrt(dim)
    for _ in range(50):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        pivot = np.argmax(np.abs(w))
        w *= abs(w[pivot]) / w[pivot]
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


@dataclass(frozen=True)
class FockSteadyState:
    populations: np.ndarray
    max_coherence: float
    residual: float
    n_max: int
    dimension: int
    method: str
    min_probability: float


def _fock_solve(spec: Spectrum, bath: BathConfig, n_max: int, trunc: TruncatedFockConfig,
                eps_ref: float) -> FockSteadyState:
    n_modes = spec.size
    dim = (n_max + 1) ** n_modes
    if dim > trunc.dim_cap:
        raise ParameterError(f"Hilbert dimension {dim} exceeds the cap {trunc.dim_cap}")
    chs = channels(spec, bath, eps_ref)
    occ = _occupations(n_modes, n_max)
    if dim <= trunc.full_dim_cap:
        ops = _mode_operators(n_modes, n_max)
        h = sp.diags(occ @ spec.energies).tocsr()
        gen = lindblad_superoperator(h, _jump_operators(chs, ops))
        trace = np.eye(dim).reshape(-1, order="F")
        vec = null_vector(gen, trunc.dense_cap, normalization=trace)
        rho = vec.reshape(dim, dim, order="F")
        rho = 0.5 * (rho + rho.conj().T)
        residual = float(np.max(np.abs(gen @ rho.reshape(-1, order="F"))))
        diag = rho.diagonal().real
        coherence = 0.0
        for k in range(n_modes):
            for j in range(n_modes):
                if j != k:
                    val = (ops[k].T @ ops[j]).multiply(rho.T).sum()
                    coherence = max(coherence, abs(val))
        method = "full"
    else:
        gen = population_generator(chs, n_modes, n_max)
        vec = null_vector(gen, trunc.dense_cap).real
        diag = vec / vec.sum()
        residual = float(np.max(np.abs(gen @ diag)))
        coherence = 0.0  # other sectors carry no source term
        method = "population-sector"
    return FockSteadyState(
        populations=occ.T @ diag,
        max_coherence=float(coherence),
        residual=residual,
        n_max=n_max,
        dimension=dim,
        method=method,
        min_probability=float(diag.min()),
    )


def relative_shift(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_inf / ||b||_inf``: deviation on the scale of the population vector."""
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def liouvillian_steady_state(
    params: ChainParams, bath: BathConfig, trunc: TruncatedFockConfig | None = None
) -> FockSteadyState:
    """Kernel of the full bosonic generator, checked for cutoff convergence.

    Solves at ``n_max`` and ``n_max + 1`` and raises :class:`CutoffError`
    if the mode populations move by more than ``convergence_tol``.
    """
    if trunc is None:
        trunc = TruncatedFockConfig(n_sites=params.n_sites)
    if params.n_sites != trunc.n_sites:
        raise ParameterError("TruncatedFockConfig.n_sites does not match the chain")
    spec = spectrum(params)
    if np.any(spec.energies <= 0):
        raise DomainError("the Fock oracle requires a positive spectrum")
    eps_ref = abs(params.t)
    coarse = _fock_solve(spec, bath, trunc.n_max, trunc, eps_ref)
    fine = _fock_solve(spec, bath, trunc.n_max + 1, trunc, eps_ref)
    shift = relative_shift(coarse.populations, fine.populations)
    if shift > trunc.convergence_tol:
        raise CutoffError(
            f"populations shift by {shift:.3g} between n_max={trunc.n_max} and "
            f"{trunc.n_max + 1} (tolerance {trunc.convergence_tol:g})",
            residual=shift,
        )
    return fine


def converge_cutoff(
    params: ChainParams, bath: BathConfig, trunc: TruncatedFockConfig | None = None
) -> list[tuple[FockSteadyState, float]]:
    """Raise ``n_max`` from ``trunc.n_max`` until successive shifts fall below
    ``convergence_tol``; returns every (state, shift-from-previous) pair.

    Raises :class:`CutoffError` if the Hilbert cap is reached first.
    """
    if trunc is None:
        trunc = TruncatedFockConfig(n_sites=params.n_sites)
    spec = spectrum(params)
    eps_ref = abs(params.t)
    history = []
    prev = _fock_solve(spec, bath, trunc.n_max, trunc, eps_ref)
    history.append((prev, math.inf))
    n_max = trunc.n_max
    while True:
        n_max += 1
        if trunc.dimension(n_max) > trunc.dim_cap:
            raise CutoffError(
                f"cutoff not converged below the Hilbert cap {trunc.dim_cap}: last shift "
                f"{history[-1][1]:.3g} at n_max={n_max - 1}",
                residual=history[-1][1],
            )
        cur = _fock_solve(spec, bath, n_max, trunc, eps_ref)
        shift = relative_shift(prev.populations, cur.populations)
        history.append((cur, shift))
        if shift <= trunc.convergence_tol:
            return history
        prev = cur
