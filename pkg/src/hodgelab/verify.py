"""One-shot invariant suite run by ``lab verify``.

Each check returns a measured value and its tolerance; the suite passes iff
every check does.  ``perturb_star`` scales the star by (1 + 1e-4), a fault
that tau o tau = id must catch.
"""

import time
from dataclasses import asdict, dataclass
from math import comb

import numpy as np

from . import dec
from .commutator import TrigPolynomial, commutator_bound_check
from .dec import PeriodicGrid, coboundary, inner_product, mass_matrix, norm, random_form, wedge_integral
from .exponents import (
    InadmissibleLedger, exponents_lp_derivable, exponents_quasiconformal, flat_ledger, n_of_g,
)
from .metrics import (
    TransitionData, _smooth_random_field, conformal_singular_metric, flat_metric, geometric_mean,
    metric_from_transitions, random_rough_metric,
)
from .parametrix import parametrix_identity_check
from .spectral import (
    assemble_signature_operator, decay_fit, singular_values, spectrum_symmetry_defect,
)

PERTURBATION = 1e-4
DENSE_CHECK_LIMIT = 3072  # graded dimension above which dense-only checks are skipped


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _star(grid, metric, omega, perturb):
    out = dec.hodge_star(grid, metric, omega)
    return out * (1 + PERTURBATION) if perturb else out


def _tau(grid, metric, omega, perturb):
    return dec.tau_phase(grid.n, omega.degree) * _star(grid, metric, omega, perturb)


def _metrics(grid, seed):
    return [flat_metric(grid), random_rough_metric(grid, 3.0, seed)]


def check_algebra(n, N, perturb=False, cases=3, seed=0):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(n, N)
    dd = tt = iso = dual = spd = 0.0
    for met in _metrics(g, seed):
        for k in range(n + 1):
            spd = min(spd if spd else np.inf, mass_matrix(g, met, k).min_eigenvalue())
            for _ in range(cases):
                w = random_form(g, k, rng)
                if k <= n - 2:
                    dd = max(dd, np.linalg.norm(coboundary(g, coboundary(g, w)).data) /
                             (np.linalg.norm(w.data) * N * N))
                tw = _tau(g, met, w, perturb)
                tt = max(tt, _rel(_tau(g, met, tw, perturb).data, w.data))
                iso = max(iso, abs(norm(g, met, tw) - norm(g, met, w)) / norm(g, met, w))
                bk = random_form(g, k, rng)
                lhs = wedge_integral(g, w, _star(g, met, bk, perturb))
                rhs = inner_product(g, met, w, bk)
                dual = max(dual, abs(lhs - rhs) / (norm(g, met, w) * norm(g, met, bk)))
    return {"d o d = 0": (dd, 1e-13), "tau o tau = id": (tt, 1e-10), "tau isometry": (iso, 1e-10),
            "wedge(a, *b) = <a, b>_g": (dual, 1e-10), "mass blocks SPD": (-spd, 0.0)}


def check_structure(n, N, seed=0):
    g = PeriodicGrid(n, N)
    out = {}
    for met in _metrics(g, seed):
        a = assemble_signature_operator(g, met)
        tag = met.descriptor["kind"]
        out[f"d* = M^-1 d^H M [{tag}]"] = (max(a.adjoint_defect(k) for k in range(n)), 1e-12)
        out[f"graded M D = D^H M [{tag}]"] = (a.self_adjoint_defect(), 1e-10)
        out[f"d* = +-tau d tau [{tag}]"] = (max(a.codifferential_star_defect(k) for k in range(n)), 1e-10)
        dense_ok = sum(g.dof(k) for k in a.graded_degrees()) <= DENSE_CHECK_LIMIT
        if n % 2 == 0 and dense_ok:
            out[f"tau D = -D tau [{tag}]"] = (a.tau_anticommutation_defect(), 1e-10)
        # odd n: only flat metrics are reflection symmetric; in 1-D the Nyquist mode has no partner
        if dense_ok and (n % 2 == 0 or (tag == "flat" and n > 1)):
            out[f"spectrum symmetric [{tag}]"] = (spectrum_symmetry_defect(a), 1e-9)
    return out


def check_kernel(n, N, seed=0):
    g = PeriodicGrid(n, N)
    out = {}
    mets = [flat_metric(g)]
    if g.dof(g.m) <= 2048:
        mets.append(conformal_singular_metric(g, beta=0.4))
    for met in mets:
        rep = singular_values(assemble_signature_operator(g, met))
        tag = met.descriptor["kind"]
        ok = rep.kernel_dim == comb(n, g.m) and not rep.ambiguous
        out[f"dim ker = C(n,m) [{tag}]"] = (0.0 if ok else 1.0, 0.0)
    return out


def check_parametrix(n, N, cases=5, seed=0):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(n, N)
    worst = 0.0
    for _ in range(cases):
        for k in range(n):
            worst = max(worst, parametrix_identity_check(g, random_form(g, k, rng)).defect)
    return {"d t d w = d w": (worst, 1e-10)}


def check_commutator(n, N, seed=0):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(n, N)
    worst = 0.0
    cup = 0.0
    for met in (flat_metric(g), metric_from_transitions(g, _smooth_transitions(g, rng))):
        f = TrigPolynomial.random(n, rng, max_freq=1, terms=3)
        r = commutator_bound_check(g, met, f, random_form(g, int(rng.integers(0, n)), rng))
        worst = max(worst, r.lhs / r.rhs)
        cup = max(cup, r.closed_form_defect)
    return {"[d,f] = df cup": (cup, 1e-12), "commutator bound ratio": (worst, 1.0)}


def _smooth_transitions(g, rng):
    return TransitionData((_smooth_random_field(g, rng, (g.n, g.n), modes=1),))


def check_metric_algebra(seed=0):
    rng = np.random.default_rng(seed)
    cong = mono = 0.0
    for n in (2, 3):
        for _ in range(5):
            X = rng.standard_normal((2, n, n))
            A0 = X[0] @ X[0].T + n * np.eye(n)
            A1 = X[1] @ X[1].T + n * np.eye(n)
            M = rng.standard_normal((n, n)) + n * np.eye(n)
            G = geometric_mean(A0, A1, 0.37)
            cong = max(cong, _rel(geometric_mean(M.T @ A0 @ M, M.T @ A1 @ M, 0.37), M.T @ G @ M))
            D = np.diag(rng.random(n) + 1.0)
            lo, hi = geometric_mean(D, D @ D, 0.3), geometric_mean(D, D @ D, 0.6)
            mono = max(mono, -np.linalg.eigvalsh(hi - lo).min())
    thr = 0.0
    for n in (2, 3, 4):
        bound = n * (n + 1) / 2
        try:
            exponents_lp_derivable(n, bound)
            thr = 1.0
        except InadmissibleLedger:
            pass
        exponents_lp_derivable(n, bound + 1e-9)
    qc = 0.0
    for _ in range(20):
        n = int(rng.choice([1, 3]))
        p = n + 0.1 + 20 * rng.random()
        qc = max(qc, abs(n_of_g(exponents_quasiconformal(n, p)) - n * p / (p - n)) / (n * p / (p - n)))
    flat = abs(flat_ledger(3).n_g - 3)
    return {"geometric mean congruence": (cong, 1e-8), "geometric mean monotone": (mono, 1e-12),
            "lp threshold exact": (thr, 0.0), "qc n(g) = np/(p-n)": (qc, 1e-12), "flat n(g) = n": (flat, 1e-12)}


def check_decay():
    out = {}
    for n, N in ((2, 16), (3, 8)):
        g = PeriodicGrid(n, N)
        a = assemble_signature_operator(g, flat_metric(g))
        rep = singular_values(a, count=g.dof(g.m) // 4, n_g=n)
        fit = decay_fit(rep)
        out[f"flat decay bound n={n}"] = (fit.slope - (fit.predicted + fit.tolerance), 0.0)
    return out


def run_suite(perturb_star=False, resolutions=(8, 16), dims=(1, 2, 3)):
    checks = []

    def record(results, t0):
        dt = time.perf_counter() - t0
        for name, (val, tol) in results.items():
            checks.append(Check(name, float(val), float(tol), bool(val <= tol), dt))

    for N in resolutions:
        for n in dims:
            suffix = f" (n={n}, N={N})"
            for fn in (lambda: check_algebra(n, N, perturb_star), lambda: check_structure(n, N),
                       lambda: check_kernel(n, N), lambda: check_parametrix(n, N),
                       lambda: check_commutator(n, N)):
                t0 = time.perf_counter()
                record({k + suffix: v for k, v in fn().items()}, t0)
    t0 = time.perf_counter()
    record(check_metric_algebra(), t0)
    t0 = time.perf_counter()
    record(check_decay(), t0)
    return checks


def summary(checks):
    return {"passed": all(c.passed for c in checks), "checks": [asdict(c) for c in checks]}
