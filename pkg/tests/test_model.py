from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enaqt.errors import EigensolverError, ParameterError
from enaqt.model import (
    GOLDEN_BETA,
    ChainParams,
    build_hamiltonian,
    diagonalize,
    diagonalize_tridiagonal,
    mobility_edge,
    mobility_edge_energy,
    phase_spread,
    potential,
    site_potentials,
    spectrum,
)

chain_params = st.builds(
    ChainParams,
    n_sites=st.integers(2, 40),
    lam=st.floats(0.0, 3.0),
    alpha=st.floats(-0.99, 0.99),
    phi=st.floats(0.0, 2 * math.pi),
)


def test_defaults():
    p = ChainParams()
    assert (p.n_sites, p.t, p.lam, p.delta) == (22, 1.0, 0.4, 2.0)
    assert p.beta == pytest.approx((math.sqrt(5) - 1) / 2, abs=0) and p.phi == math.pi / 3


@pytest.mark.parametrize(
    "kwargs",
    [{"n_sites": 1}, {"n_sites": 2.5}, {"t": 0.0}, {"alpha": 1.0}, {"alpha": -1.2},
     {"lam": math.nan}, {"phi": math.inf}],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ParameterError):
        ChainParams(**kwargs)


def test_potential_ordered_is_delta():
    p = ChainParams(lam=0.0)
    assert np.all(site_potentials(p) == 2.0)


def test_potential_zero_at_unit_cosine():
    # choose phi so that 2 pi beta n + phi = 0 at n = 1
    p = ChainParams(lam=0.4, alpha=0.0, phi=-2 * math.pi * GOLDEN_BETA)
    assert potential(p, 1) == pytest.approx(2.0, abs=1e-15)


def test_potential_direct_formula():
    p = ChainParams(lam=0.4, alpha=0.6, phi=math.pi / 3)
    c = math.cos(2 * math.pi * (math.sqrt(5) - 1) / 2 + math.pi / 3)
    expected = 2 + 2 * 0.4 * (1 - c) / (1 + 0.6 * c)
    assert potential(p, 1) == pytest.approx(expected, rel=1e-15)


def test_potential_index_checked():
    with pytest.raises(ParameterError):
        potential(ChainParams(n_sites=4), 5)
    with pytest.raises(ParameterError):
        potential(ChainParams(n_sites=4), 0)


def test_alpha_minus_one_is_ordered():
    p = ChainParams(alpha=-1.0, lam=0.4)
    assert p.ordered
    assert np.all(site_potentials(p) == 2.0 + 0.8)
    # continuity with alpha slightly above -1
    near = site_potentials(p.replace(alpha=-1 + 1e-9))
    assert np.max(np.abs(near - 2.8)) < 1e-6


def test_hamiltonian_small_cases():
    h = build_hamiltonian(ChainParams(n_sites=2, lam=0.0))
    assert np.array_equal(h, [[2.0, -1.0], [-1.0, 2.0]])
    h3 = build_hamiltonian(ChainParams(n_sites=3, t=0.5, lam=0.0))
    assert np.array_equal(np.diag(h3), [2.0, 2.0, 2.0])
    assert np.array_equal(np.diag(h3, 1), [-0.5, -0.5])
    assert np.array_equal(h3, h3.T) and not np.any(np.triu(h3, 2))


def test_hamiltonian_trace():
    p = ChainParams()
    assert np.trace(build_hamiltonian(p)) == pytest.approx(sum(potential(p, n) for n in range(1, 23)))


def test_two_by_two_analytic():
    spec = diagonalize(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert np.allclose(spec.energies, [1.0, 3.0], atol=1e-14)
    v = np.abs(spec.vectors)
    assert np.allclose(v, 1 / math.sqrt(2), atol=1e-14)
    assert spec.vectors[0, 1] * spec.vectors[1, 1] < 0


def test_diagonal_matrix_gives_permutation():
    spec = diagonalize_tridiagonal(np.array([3.0, 1.0, 2.0]), np.zeros(2))
    assert np.array_equal(spec.energies, [1.0, 2.0, 3.0])
    assert np.array_equal(spec.vectors, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])


def test_default_residual_and_reference_solver():
    p = ChainParams()
    h = build_hamiltonian(p)
    spec = spectrum(p)
    assert np.max(np.abs(h @ spec.vectors - spec.vectors * spec.energies)) < 1e-9
    ref = np.linalg.eigvalsh(h)
    assert np.max(np.abs(spec.energies - ref)) < 1e-12


def test_diagonalize_rejects_bad_input():
    with pytest.raises(ValueError):
        diagonalize(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        diagonalize(np.ones((3, 3)))


def test_eigensolver_failure_reports_index(monkeypatch):
    from enaqt import model

    monkeypatch.setattr(model.lapack, "dstev", lambda d, e, compute_v=1: (d, np.eye(d.size), 2))
    with pytest.raises(EigensolverError) as info:
        spectrum(ChainParams(n_sites=5))
    assert info.value.index == 2


def test_degenerate_block_is_deterministic():
    # two decoupled identical 2x2 blocks: eigenvalues 1, 1, 3, 3
    diag = np.full(4, 2.0)
    off = np.array([-1.0, 0.0, -1.0])
    a = diagonalize_tridiagonal(diag, off)
    b = diagonalize_tridiagonal(diag.copy(), off.copy())
    assert np.array_equal(a.vectors, b.vectors)
    assert np.max(np.abs(a.vectors.T @ a.vectors - np.eye(4))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(chain_params)
def test_spectrum_invariants(p):
    spec = spectrum(p)
    assert np.all(np.diff(spec.energies) >= 0)
    assert np.max(np.abs(spec.vectors.T @ spec.vectors - np.eye(p.n_sites))) < 1e-10
    assert np.max(np.abs(spec.weights.sum(axis=0) - 1)) < 1e-12
    ipr = spec.ipr
    assert np.all(ipr >= 1 / p.n_sites - 1e-12) and np.all(ipr <= 1 + 1e-12)
    # Gershgorin: V_n >= delta = 2 and |t| = 1 give eps >= 0
    assert spec.energies[0] >= -1e-12


def test_ipr_one_for_basis_vector():
    spec = diagonalize_tridiagonal(np.array([1.0, 5.0]), np.zeros(1))
    assert np.array_equal(spec.ipr, [1.0, 1.0])


def test_mobility_edge_value():
    assert mobility_edge_energy(ChainParams(lam=0.4, alpha=0.6)) == pytest.approx(4.0, rel=1e-15)
    assert mobility_edge_energy(ChainParams(lam=0.0)) is None
    assert mobility_edge_energy(ChainParams(alpha=0.0)) is None
    assert mobility_edge_energy(ChainParams(alpha=-1.0)) is None


def test_mobility_edge_classification_direction():
    p = ChainParams(alpha=0.6)
    rep = mobility_edge(p)
    eps = spectrum(p).energies
    assert np.array_equal(rep.localized, eps > rep.e_me)
    q = ChainParams(alpha=-0.5, lam=1.5)
    rep_q = mobility_edge(q)
    assert np.array_equal(rep_q.localized, spectrum(q).energies < rep_q.e_me)


def test_negative_alpha_delocalized_at_default_lambda():
    assert mobility_edge(ChainParams(alpha=-0.5)).f_loc == 0.0


def test_alpha_zero_aah_rule():
    assert mobility_edge(ChainParams(alpha=0.0, lam=0.5)).f_loc == 0.0
    assert mobility_edge(ChainParams(alpha=0.0, lam=1.0)).f_loc == 0.0  # self-dual point
    assert mobility_edge(ChainParams(alpha=0.0, lam=1.5)).f_loc == 1.0


def test_uniform_chain_standing_waves():
    n = 22
    p = ChainParams(lam=0.0, n_sites=n)
    rep = mobility_edge(p)
    assert rep.f_loc == 0.0
    k = np.arange(1, n + 1)
    sites = np.arange(1, n + 1)[:, None]
    waves = math.sqrt(2 / (n + 1)) * np.sin(math.pi * sites * k / (n + 1))
    analytic = np.sum(waves**4, axis=0)
    # energies 2 - 2 cos(pi k/(N+1)) ascend with k
    assert np.allclose(rep.ipr_per_state, analytic, atol=1e-12)
    assert np.all(rep.ipr_per_state < 3 / n)


@settings(max_examples=40, deadline=None)
@given(chain_params)
def test_f_loc_on_lattice(p):
    f = mobility_edge(p).f_loc
    assert 0 <= f <= 1 and abs(f * p.n_sites - round(f * p.n_sites)) < 1e-12


def test_f_loc_is_step_function_of_alpha():
    values = [mobility_edge(ChainParams(alpha=a)).f_loc for a in np.linspace(-0.99, 0.99, 199)]
    steps = np.diff(np.array(values) * 22)
    assert np.allclose(steps, np.round(steps))


def test_phi_invariance_when_ordered():
    p = ChainParams(lam=0.0)
    assert np.array_equal(phase_spread(p, np.linspace(0, 2 * math.pi, 7)), np.zeros(22))


def test_phase_spread_reported_not_zero():
    spread = phase_spread(ChainParams(), np.linspace(0, 2 * math.pi, 9))
    assert spread.shape == (22,) and np.all(spread >= 0)
