"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

from __future__ import annotations

import math
import statistics
import time

import numpy as np
import pytest

from enaqt import ness, oracle
from enaqt.cli import random_instance, render_csv
from enaqt.model import ChainParams, mobility_edge, spectrum
from enaqt.ness import BathConfig, NessState
from enaqt.observables import PointEvaluator, entropy_spread, evaluate_point, max_coupling
from enaqt.sweep import optimize_enaqt, run_preset


def rel(a, b):
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_c1_oracle_equivalence(report):
    start = time.perf_counter()
    rng = np.random.default_rng(20240501)
    worst_dense = worst_ode = 0.0
    for _ in range(50):
        params, bath = random_instance(rng)
        spec = spectrum(params)
        rec = ness.steady_state(spec, bath).populations_raw
        dense = ness.steady_state(spec, bath, method="dense").populations_raw
        ode = oracle.integrate_adjoint(spec, bath).populations
        worst_dense = max(worst_dense, rel(dense, rec))
        worst_ode = max(worst_ode, rel(ode, rec))

    params = ChainParams(n_sites=4)
    trunc = oracle.TruncatedFockConfig(n_max=2, n_sites=4, convergence_tol=1e-4, dim_cap=1 << 16)
    fock = {}
    for gamma in (0.0, 0.1):
        bath = BathConfig(t_hot=2.0, t_cold=0.5, gamma=gamma)
        history = oracle.converge_cutoff(params, bath, trunc)
        state = history[-1][0]
        rec = ness.steady_state(spectrum(params), bath).populations_raw
        fock[gamma] = (rel(state.populations, rec), state.n_max, history[-1][1])
    elapsed = time.perf_counter() - start

    ok = {
        "dense": worst_dense <= 1e-10,
        "ode": worst_ode <= 1e-8,
        "fock": all(dev <= 1e-4 and shift <= 1e-4 for dev, _, shift in fock.values()),
        "time": elapsed < 120,
    }
    fock_text = ", ".join(
        f"gamma={g}: dev {d:.2e} at n_max={n} (shift {s:.1e})" for g, (d, n, s) in fock.items()
    )
    passed = report(
        1, all(ok.values()),
        f"dense {worst_dense:.1e} (tol 1e-10), ode {worst_ode:.1e} (tol 1e-8), "
        f"fock [{fock_text}] (tol 1e-4), {elapsed:.1f}s",
    )
    assert passed, ok


def test_c2_equilibrium_identity(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        params = ChainParams(
            n_sites=int(rng.integers(2, 31)), lam=rng.uniform(0, 3), alpha=rng.uniform(-1, 0.95),
            phi=rng.uniform(0, 2 * math.pi),
        )
        temp = rng.uniform(0.1, 1e3)
        bath = BathConfig(t_hot=temp, t_cold=temp, gamma=0.0)
        obs, _, _ = evaluate_point(params, bath)
        worst = max(worst, abs(obs.current))
    assert report(2, worst < 1e-10, f"max |J| over 100 draws = {worst:.2e} (tol 1e-10)")


def test_c3_max_coupling_on_diagonal(report):
    rng = np.random.default_rng(3)
    cases = [ChainParams(alpha=a, phi=p) for a in (0.1, 0.9) for p in np.linspace(0, 2 * math.pi, 13)]
    cases += [
        ChainParams(n_sites=int(rng.integers(2, 31)), lam=rng.uniform(0, 3),
                    alpha=rng.uniform(-1, 0.95), phi=rng.uniform(0, 2 * math.pi))
        for _ in range(100)
    ]
    bad = 0
    for params in cases:
        spec = spectrum(params)
        w = spec.weights
        n = spec.size
        # exhaustive scan with an independent per-pair sum
        best, where = -1.0, None
        for i in range(n):
            for k in range(n):
                value = math.fsum(w[:, i] * w[:, k])
                if value > best:
                    best, where = value, (i, k)
        coeffs = ness.coefficients(spec, BathConfig())
        exact = max_coupling(coeffs) == float(np.max(spec.ipr))
        if where[0] != where[1] or not exact or abs(best - np.max(spec.ipr)) > 1e-15:
            bad += 1
    assert report(3, bad == 0, f"{len(cases)} instances, argmax off the diagonal or inexact in {bad}")


def test_c4_fig1_structure(report):
    start = time.perf_counter()
    base = ChainParams(n_sites=22, lam=0.4, phi=math.pi / 3)
    bath = BathConfig(t_hot=1e3, t_cold=0.1)
    gammas = np.geomspace(1e-6, 1e2, 400)
    ordered = PointEvaluator(base.replace(alpha=-1.0), bath)
    top_ordered = max(ordered.observe(g)[0].current_ratio for g in gammas)
    edge = PointEvaluator(base.replace(alpha=0.6), bath)
    low = [(edge.observe(g)[0].current_ratio, g) for g in gammas if g < 1e-1]
    top_edge, g_edge = max(low)
    elapsed = time.perf_counter() - start
    passed = top_ordered <= 1 + 1e-9 and top_edge > 1 and elapsed < 10
    assert report(
        4, passed,
        f"alpha=-1 max J/J0 = {top_ordered!r}; alpha=0.6 max J/J0 = {top_edge:.3f} at gamma = {g_edge:.2e}; "
        f"{elapsed:.2f}s",
    )


def test_c5_f_loc_structure(report):
    alphas = np.linspace(-1.0, 1.0, 81)[:-1]
    # integer counts keep equal steps exactly equal
    f = np.array([round(mobility_edge(ChainParams(alpha=a, lam=0.4)).f_loc * 22) for a in alphas])
    nonpositive = alphas <= 0
    zero_below = bool(np.all(f[nonpositive] == 0))
    positive = alphas > 0
    steps = np.diff(f[positive])
    monotone = bool(np.all(steps >= 0))
    right = alphas[positive][1:]
    largest = steps.max()
    largest_at = right[steps == largest]
    in_first = bool(np.all((largest_at >= 0.3) & (largest_at <= 0.5)))
    second = bool(np.any((steps > 0) & (right >= 0.85) & (right <= 0.95)))
    offenders = [f"{a:.3f}" for a in alphas[nonpositive][f[nonpositive] > 0]]
    passed = zero_below and monotone and in_first and second
    assert report(
        5, passed,
        f"zero for alpha<=0: {zero_below} (nonzero at {offenders}); nondecreasing on (0,1): {monotone}; "
        f"largest step {largest}/22 ending at {[round(float(a), 3) for a in largest_at]}: {in_first}; "
        f"rise in [0.85,0.95]: {second}",
    )


@pytest.mark.slow
def test_c6_fig4_reproduction(report):
    lambdas = np.linspace(0.0, 3.0, 31)
    alphas = np.linspace(-1.0, 1.0, 41)[:-1]
    gammas = [0.0] + np.geomspace(1e-6, 1e2, 39).tolist()
    start = time.perf_counter()
    records = optimize_enaqt(lambdas, alphas, gammas, workers=1)
    single = time.perf_counter() - start
    start = time.perf_counter()
    parallel = optimize_enaqt(lambdas, alphas, gammas, workers=8)
    eight = time.perf_counter() - start
    assert parallel == records

    at_zero = records[0]
    best = max(records, key=lambda r: r.max_ratio)
    ipr_ok = all(r.avg_ipr_opt > 0.8 for r in records if r.lam >= 2.5 - 1e-12)
    checks = {
        "lambda=0 max 1": abs(at_zero.max_ratio - 1) <= 1e-9,
        "argmax lambda in [1.5,2.5]": 1.5 <= best.lam <= 2.5,
        "max > 1e2": best.max_ratio > 1e2,
        "gamma_opt in [1e-6,1e-4]": 1e-6 <= best.gamma_opt <= 1e-4,
        "<I>_opt > 0.8 for lambda>=2.5": ipr_ok,
        "runtime": single < 600 and eight < 120,
    }
    failed = [k for k, v in checks.items() if not v]
    assert report(
        6, not failed,
        f"max J/J0 at lambda=0: {at_zero.max_ratio!r}; global max {best.max_ratio:.3g} at lambda={best.lam:.1f}, "
        f"alpha={best.alpha_opt:.3f}, gamma={best.gamma_opt:.2e}; {single:.1f}s single, {eight:.1f}s at 8 workers; "
        f"failed: {failed or 'none'}",
    )


def test_c7_spread_bounds(report):
    def state(p):
        p = np.asarray(p, dtype=float)
        coeffs = ness.coefficients(spectrum(ChainParams(n_sites=p.size)), BathConfig())
        return NessState(p, p / p.sum(), coeffs)

    uniform = entropy_spread(state(np.ones(22)))
    single = entropy_spread(state(np.eye(22)[5]))
    rng = np.random.default_rng(7)
    bounds_ok = perm_ok = True
    for _ in range(200):
        params, bath = random_instance(rng, n_range=(2, 30))
        obs, st, _ = evaluate_point(params, bath)
        bounds_ok &= 0 <= obs.eta <= 1 and 0 <= obs.delta_n <= 1
        perm = rng.permutation(st.size)
        shuffled = NessState(st.populations_raw[perm], st.populations_norm[perm], st.coefficients)
        perm_ok &= abs(entropy_spread(shuffled) - obs.eta) <= 1e-14
    passed = abs(uniform - 1) <= 1e-15 and single == 0.0 and bounds_ok and perm_ok
    assert report(
        7, passed,
        f"eta(uniform)={uniform!r}, eta(single)={single!r}, bounds on 200 instances: {bounds_ok}, "
        f"permutation invariance: {perm_ok}",
    )


def test_c8_determinism(report):
    bodies = {}
    for workers in (1, 4, 8):
        result = run_preset("fig2", workers=workers)
        bodies[workers] = render_csv(result.columns, result.rows).encode()
    same = bodies[1] == bodies[4] == bodies[8]
    assert report(8, same, f"fig2 CSV bodies for workers 1/4/8 identical: {same} ({len(bodies[1])} bytes)")


def test_c9_performance(report):
    params, bath = ChainParams(), BathConfig()
    evaluate_point(params, bath)
    times = []
    for _ in range(300):
        start = time.perf_counter()
        evaluate_point(params, bath)
        times.append(time.perf_counter() - start)
    median = statistics.median(times)
    start = time.perf_counter()
    result = run_preset("fig2", workers=1)
    fig2 = time.perf_counter() - start
    passed = median < 5e-3 and fig2 < 60 and len(result.rows) == 6400
    assert report(9, passed, f"median point {median * 1e3:.2f} ms (< 5 ms); fig2 preset {fig2:.2f}s (< 60 s)")
