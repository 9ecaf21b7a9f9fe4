"""Acceptance criteria 1-10, one PASS/FAIL line each at the stated tolerance.

Run under pytest (lines appear in the terminal summary) or directly:
    python3 tests/test_acceptance.py
Set LAB_HEAVY=1 to add the optional T^4 kernel count to criterion 3.
"""

import os
import sys
import time
from math import comb

import numpy as np
import pytest
import scipy.linalg as sla

from hodgelab.commutator import TrigPolynomial, commutator_bound_check
from hodgelab.dec import (
    PeriodicGrid, coboundary, coboundary_matrix, hodge_star, inner_product, norm, random_form, tau, tau_phase,
    wedge_integral,
)
from hodgelab.errors import InadmissibleLedger
from hodgelab.exponents import (
    ExponentLedger, exponents_lp_derivable, exponents_quasiconformal, interpolate_exponents, lp_threshold, n_of_g,
)
from hodgelab.metrics import (
    TransitionData, _smooth_random_field, conformal_singular_metric, flat_metric, geometric_mean,
    metric_from_transitions, random_rough_metric, scaled_metric,
)
from hodgelab.parametrix import parametrix_identity_check
from hodgelab.spectral import (
    GAP_MAX, assemble_signature_operator, decay_fit, fredholm_module_check, homotopy_run, singular_values,
)

RESULTS = []
SEED = 20240611


def report(num, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {num:>2}: {detail}"
    RESULTS.append(line)
    print(line)
    return passed


def rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# 1 ------------------------------------------------------------------ algebra


def test_criterion_01_exact_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = {"dd": 0.0, "tau2": 0.0, "iso": 0.0, "dual_tau": 0.0, "dual_star": 0.0, "literal": 0.0}
    cases = 0
    for n in (1, 2, 3):
        g = PeriodicGrid(n, 16)
        mets = (flat_metric(g), random_rough_metric(g, n + 1.0, SEED + n))
        for c in range(100):
            met = mets[c % 2]
            k = int(rng.integers(0, n + 1))
            a, b = random_form(g, k, rng), random_form(g, k, rng)
            if n >= 2:  # d o d is vacuous on T^1
                w = random_form(g, int(rng.integers(0, n - 1)), rng)
                dd = coboundary(g, coboundary(g, w)).data
                worst["dd"] = max(worst["dd"], np.linalg.norm(dd) / (np.linalg.norm(w.data) * 16**2))
            ta = tau(g, met, a)
            worst["tau2"] = max(worst["tau2"], rel(tau(g, met, ta).data, a.data))
            worst["iso"] = max(worst["iso"], abs(norm(g, met, ta) - norm(g, met, a)) / norm(g, met, a))
            ip = inner_product(g, met, a, b)
            scale = norm(g, met, a) * norm(g, met, b)
            w_tau = wedge_integral(g, a, tau(g, met, b))
            # tau = i^e *, so the tau pairing carries the conjugate phase; the star pairing carries none
            worst["dual_tau"] = max(worst["dual_tau"], abs(w_tau - np.conj(tau_phase(n, k)) * ip) / scale)
            worst["dual_star"] = max(worst["dual_star"], abs(wedge_integral(g, a, hodge_star(g, met, b)) - ip) / scale)
            worst["literal"] = max(worst["literal"], abs(w_tau - ip) / scale)
            cases += 1
    dt = time.perf_counter() - t0
    ok = max(worst[k] for k in ("dd", "tau2", "iso", "dual_tau", "dual_star")) <= 1e-10 and dt < 10
    report(1, ok, f"{cases} cases n=1..3 N=16: dd {worst['dd']:.1e}, tau^2 {worst['tau2']:.1e}, "
                  f"isometry {worst['iso']:.1e}, wedge(a,tau b)=conj(i^e)<a,b> {worst['dual_tau']:.1e}, "
                  f"wedge(a,*b)=<a,b> {worst['dual_star']:.1e} (phase-free tau form off by "
                  f"{worst['literal']:.2f}, see ledger); {dt:.1f}s < 10s")
    assert ok


# 2 --------------------------------------------------------- flat closed form


def test_criterion_02_flat_closed_form():
    t0 = time.perf_counter()
    N = 32
    g = PeriodicGrid(2, N)
    d0, d1 = coboundary_matrix(g, 0), coboundary_matrix(g, 1)
    L1 = (d0 @ d0.T + d1.T @ d1).toarray()
    lam = np.sort(sla.eigvalsh(L1))
    h = 1.0 / N
    s2 = (2 / h) ** 2 * np.sin(np.pi * np.arange(N) / N) ** 2
    closed = np.sort(np.repeat((s2[:, None] + s2[None, :]).reshape(-1), 2))
    nz = closed > 0
    err_nz = float(np.max(np.abs(lam[nz] - closed[nz]) / closed[nz]))
    err_z = float(np.max(np.abs(lam[~nz])) / closed.max())
    dt = time.perf_counter() - t0
    ok = max(err_nz, err_z) <= 1e-10 and dt < 30
    report(2, ok, f"T^2 N=32 cochain Laplacian on 1-forms vs sum (2/h)^2 sin^2: max rel err {err_nz:.1e} "
                  f"(kernel {err_z:.1e}), {len(lam)} eigenvalues; {dt:.1f}s < 30s")
    assert ok


# 3 ------------------------------------------------------------------ kernels


def test_criterion_03_kernel_counts():
    t0 = time.perf_counter()
    cases = [(2, 16), (3, 8)]
    if os.environ.get("LAB_HEAVY"):
        cases.append((4, 4))
    parts, ok = [], True
    for n, N in cases:
        g = PeriodicGrid(n, N)
        for met in (flat_metric(g), conformal_singular_metric(g, beta=0.4)):
            rep = singular_values(assemble_signature_operator(g, met), mode="dense")
            want = comb(n, n // 2)
            good = rep.kernel_dim == want and rep.gap_ratio <= GAP_MAX and not rep.ambiguous
            ok &= good
            sep = 1 / rep.gap_ratio if rep.gap_ratio > 0 else np.inf
            parts.append(f"n={n} {met.descriptor['kind']} dim {rep.kernel_dim}/{want} separation {sep:.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(3, ok, "; ".join(parts) + f" (need > 1e3); {dt:.1f}s < 120s")
    assert ok


# 4 --------------------------------------------------------------- parametrix


def test_criterion_04_parametrix():
    rng = np.random.default_rng(SEED)
    worst, count = 0.0, 0
    for n in (2, 3):
        g = PeriodicGrid(n, 16)
        for _ in range(50):
            r = parametrix_identity_check(g, random_form(g, n // 2, rng))
            assert not r.skipped
            worst = max(worst, r.defect)
            count += 1
    ok = worst <= 1e-10
    report(4, ok, f"d t d w = d w on {count} random middle-degree forms, flat T^2/T^3 N=16: max defect {worst:.1e}")
    assert ok


# 5 -------------------------------------------------------------------- decay


def test_criterion_05_decay():
    t0 = time.perf_counter()
    parts, ok = [], True
    for n in (2, 3):
        g = PeriodicGrid(n, 32)
        rep = singular_values(assemble_signature_operator(g, flat_metric(g)), count=g.dof(n // 2) // 4, n_g=n)
        fit = decay_fit(rep)
        good = abs(fit.slope + 1 / n) <= 0.15
        ok &= good
        parts.append(f"flat T^{n} N=32 slope {fit.slope:.3f} vs {-1 / n:.3f} +-0.15")
    led = exponents_lp_derivable(3, 7)
    for N in (8, 10):
        g = PeriodicGrid(3, N)
        met = conformal_singular_metric(g, beta=0.4, p_int=7)
        rep = singular_values(assemble_signature_operator(g, met), count=g.dof(1) // 4, mode="dense", n_g=led.n_g)
        fit = decay_fit(rep)
        ok &= fit.passed
        parts.append(f"conformal T^3 beta=0.4 p_int=7 N={N} slope {fit.slope:.3f} <= {-1 / led.n_g + 0.2:.3f} "
                     f"(n(g)={led.n_g:.0f})")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    report(5, ok, "; ".join(parts) + f"; {dt:.1f}s < 300s")
    assert ok


# 6 ---------------------------------------------------------------- exponents


def test_criterion_06_exponent_calculus():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        n = int(rng.choice([1, 3]))
        p = n + 0.05 + 30 * rng.random()
        want = n * p / (p - n)
        worst = max(worst, abs(n_of_g(exponents_quasiconformal(n, p)) - want) / want)
    exact = True
    for n in (2, 3, 4):
        thr = lp_threshold(n)
        try:
            exponents_lp_derivable(n, thr)
            exact = False
        except InadmissibleLedger:
            pass
        exact &= exponents_lp_derivable(n, thr * (1 + 1e-12)).margin > 0
    ok = worst <= 1e-12 and exact
    report(6, ok, f"qc odd n(g) = np/(p-n) on 20 random (n,p): max rel err {worst:.1e}; "
                  f"L^p threshold rejects exactly at n(n+1)/2 for n=2,3,4: {exact}")
    assert ok


# 7 ------------------------------------------------------------ interpolation


def test_criterion_07_interpolation():
    rng = np.random.default_rng(SEED)
    end = comm = cong = 0.0
    for _ in range(20):
        X, Y, M = rng.standard_normal((3, 3, 3))
        A0, A1 = X @ X.T + np.eye(3), Y @ Y.T + np.eye(3)
        end = max(end, rel(geometric_mean(A0, A1, 0.0), A0), rel(geometric_mean(A0, A1, 1.0), A1))
        t = float(rng.random())
        D0, D1 = np.diag(rng.random(3) + 0.5), np.diag(rng.random(3) + 0.5)
        comm = max(comm, rel(geometric_mean(D0, D1, t), np.diag(np.diag(D0) ** (1 - t) * np.diag(D1) ** t)))
        M = M + 3 * np.eye(3)
        cong = max(cong, rel(geometric_mean(M.T @ A0 @ M, M.T @ A1 @ M, t), M.T @ geometric_mean(A0, A1, t) @ M))
    L0 = exponents_quasiconformal(3, 6)
    L1 = ExponentLedger(3, 2.0, 2.0, 2.0, 2.0, B=1.0, source="explicit")
    path_ok = all(getattr(interpolate_exponents(L0, L1, 0.0), f) == getattr(L1, f) and
                  getattr(interpolate_exponents(L0, L1, 1.0), f) == getattr(L0, f)
                  for f in ("p_m", "q_m", "p_m1", "q_m1"))
    ok = max(end, comm, cong) <= 1e-8 and path_ok
    report(7, ok, f"geometric mean endpoints {end:.1e}, commuting {comm:.1e}, congruence {cong:.1e} (tol 1e-8); "
                  f"exponent path endpoints exact: {path_ok}")
    assert ok


# 8 ----------------------------------------------------------------- homotopy


def test_criterion_08_homotopy():
    t0 = time.perf_counter()
    g = PeriodicGrid(2, 16)
    g1 = conformal_singular_metric(g, beta=0.4)
    res = homotopy_run(g, flat_metric(g), g1, 11)
    dt = time.perf_counter() - t0
    ok = set(res.kernel_dims) == {2} and res.max_jump < 0.2 and dt < 180
    report(8, ok, f"flat -> conformal T^2 N=16, 11 steps: kernel dims {sorted(set(res.kernel_dims))}, "
                  f"max adjacent jump {res.max_jump:.3f} < 0.2 in window j={res.window}; {dt:.1f}s < 180s")
    assert ok


# 9 --------------------------------------------------------------- commutator


def _smooth_metric(g, rng):
    return metric_from_transitions(g, TransitionData((_smooth_random_field(g, rng, (g.n, g.n), modes=1),)))


def test_criterion_09_commutator_bound():
    rng = np.random.default_rng(SEED)
    held, worst = 0, 0.0
    for i in range(20):
        n = int(rng.integers(1, 4))
        g = PeriodicGrid(n, 16)
        met = (flat_metric(g), scaled_metric(g, 1 + rng.random()), _smooth_metric(g, rng))[i % 3]
        f = TrigPolynomial.random(n, rng, max_freq=int(rng.integers(1, 3)), terms=3)
        r = commutator_bound_check(g, met, f, random_form(g, int(rng.integers(0, n)), rng))
        held += r.holds
        worst = max(worst, r.lhs / r.rhs)
    ratios = []
    for n in (1, 2, 3):
        f = TrigPolynomial.random(n, rng, max_freq=1, terms=3)
        eps = []
        for N in (16, 32):
            g = PeriodicGrid(n, N)
            met = metric_from_transitions(g, TransitionData((_smooth_random_field(g, np.random.default_rng(n),
                                                                                    (n, n), modes=1),)))
            eps.append(commutator_bound_check(g, met, f, random_form(g, 0, rng)).eps_h)
        ratios.append(eps[1] / eps[0])
    halving = all(abs(r - 0.5) <= 0.125 for r in ratios)
    ok = held == 20 and halving
    report(9, ok, f"bound holds on {held}/20 random (f, w, metric) triples (max lhs/rhs {worst:.3f}); "
                  f"eps_h(32)/eps_h(16) = {', '.join(f'{r:.3f}' for r in ratios)} (0.5 +-25%)")
    assert ok


# 10 ---------------------------------------------------------------- Fredholm


def test_criterion_10_fredholm():
    g = PeriodicGrid(2, 8)
    parts, ok = [], True
    for met in (flat_metric(g), conformal_singular_metric(g, beta=0.4), random_rough_metric(g, 3.0, SEED)):
        r = fredholm_module_check(assemble_signature_operator(g, met))
        good = r.tau_defect <= 1e-10 and r.identity_defect <= 1e-10
        ok &= good
        parts.append(f"{met.descriptor['kind']}: tau F + F tau {r.tau_defect:.1e}, "
                     f"sv(F^2-1) vs sv(-(1+D^2)^-1) {r.identity_defect:.1e}")
    report(10, ok, "T^2 N=8 " + "; ".join(parts))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
