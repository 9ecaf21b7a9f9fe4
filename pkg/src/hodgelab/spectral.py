"""Signature operator on the lattice torus: assembly, spectra, decay fits, homotopies.

All spectral work happens in the *normalized collocated frame*.  A degree-k
field u (collocated) is represented by v = B_k^{1/2} u h^{n/2}, so the
g-inner product becomes the plain l2 product and

    a_k = B_{k+1}^{1/2} d_k B_k^{-1/2}

is the coboundary as a map between Hilbert spaces.  Its adjoint is the
conjugate transpose.  In this frame:

* even n: |D|^2 on middle forms is G^H G with G = [a_m ; a_{m-1}^H];
* odd n: D = tau d on middle forms has the singular values of a_m.

For constant metrics every operator is a Fourier multiplier and the spectrum
is computed exactly frequency by frequency.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from . import fourier
from .dec import (
    FormField, _cobound_terms, apply_blocks, apply_collocated_d, blocks_to_sparse, coboundary_matrix,
    collocated_coboundary_matrix, decollocate, mass_matrix, tau_blocks, tau_phase, wedge_integral,
)
from .errors import AmbiguousKernel, SolverError
from .exponents import flat_ledger, interpolate_exponents
from .metrics import MetricField, interpolate_metrics, rebuild_metric

DENSE_LIMIT = 20000
KERNEL_REL = 1e-8  # sigma / sigma_max below this is kernel (SVD-accurate modes)
MAX_DEFLATIONS = 20
KERNEL_REL_SQUARED = 1e-6  # same, when sigma comes from an eigenvalue of sigma^2
GAP_MAX = 1e-3  # sigma_b / sigma_{b+1} above this is ambiguous
DEFAULT_WINDOW = (0.2, 0.7)


def _block_power(blocks, power):
    w, V = np.linalg.eigh(blocks)
    return np.einsum("...ab,...b,...cb->...ac", V, w**power, V.conj())


def exact_rank(n, N, k):
    """rank of d_k on the lattice torus: r_k = dim Omega^k - b_k - r_{k-1}."""
    if k < 0 or k >= n:
        return 0
    r = 0
    for j in range(k + 1):
        r = N**n * comb(n, j) - comb(n, j) - r
    return r


# ------------------------------------------------------------------ assembly


@dataclass(frozen=True, eq=False)
class SignatureOperatorAssembly:
    grid: object
    metric: object
    masses: dict  # degree -> MassMatrix
    d: dict  # degree -> real sparse forward coboundary (cochain frame)
    tau: dict  # degree -> per-site tau blocks (collocated frame)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.grid.n

    @property
    def m(self):
        return self.grid.m

    @property
    def parity(self):
        return "odd" if self.n % 2 else "even"

    @property
    def constant(self):
        return self.metric.is_constant

    @property
    def middle_dof(self):
        return self.grid.dof(self.m)

    def mass(self, k):
        if k not in self.masses:
            self.masses[k] = mass_matrix(self.grid, self.metric, k)
        return self.masses[k]

    def d_collocated(self, k):
        key = ("dc", k)
        if key not in self._cache:
            self._cache[key] = collocated_coboundary_matrix(self.grid, k)
        return self._cache[key]

    def half(self, k, power):
        """Block-diagonal B_k^power (sparse)."""
        key = ("B", k, power)
        if key not in self._cache:
            self._cache[key] = blocks_to_sparse(_block_power(self.mass(k).blocks, power))
        return self._cache[key]

    def normalized_d(self, k):
        key = ("a", k)
        if key not in self._cache:
            self._cache[key] = (self.half(k + 1, 0.5) @ self.d_collocated(k) @ self.half(k, -0.5)).tocsr()
        return self._cache[key]

    def normalized_tau(self, k):
        """B_{n-k}^{1/2} tau_k B_k^{-1/2}: unitary."""
        blocks = np.einsum("sab,sbc,scd->sad", _block_power(self.mass(self.n - k).blocks, 0.5),
                           self.tau[k], _block_power(self.mass(k).blocks, -0.5))
        return blocks_to_sparse(blocks)

    def stacked(self):
        """G = [a_m ; a_{m-1}^H]; G^H G is the normalized Hodge Laplacian on middle forms."""
        parts = [self.normalized_d(self.m)] if self.m < self.n else []
        if self.m >= 1:
            parts.append(self.normalized_d(self.m - 1).conj().T)
        return sp.vstack(parts, format="csr")

    def graded_degrees(self):
        m = self.m
        return [k for k in (m - 1, m, m + 1) if 0 <= k <= self.n]

    def graded_normalized(self):
        """Normalized d + d* on the graded space of degrees m-1, m, m+1 (dense)."""
        degs = self.graded_degrees()
        sizes = [self.grid.dof(k) for k in degs]
        off = np.concatenate([[0], np.cumsum(sizes)])
        D = np.zeros((off[-1], off[-1]), complex)
        for i, k in enumerate(degs[:-1]):
            a = self.normalized_d(k).toarray()
            D[off[i + 1]:off[i + 2], off[i]:off[i + 1]] = a
            D[off[i]:off[i + 1], off[i + 1]:off[i + 2]] = a.conj().T
        return D, degs, off

    def graded_tau_normalized(self):
        degs = self.graded_degrees()
        sizes = [self.grid.dof(k) for k in degs]
        off = np.concatenate([[0], np.cumsum(sizes)])
        T = np.zeros((off[-1], off[-1]), complex)
        pos = {k: i for i, k in enumerate(degs)}
        for k in degs:
            j = pos[self.n - k]
            i = pos[k]
            T[off[j]:off[j + 1], off[i]:off[i + 1]] = self.normalized_tau(k).toarray()
        return T

    def odd_operator_normalized(self):
        """D = tau d on middle forms (odd n), normalized frame (dense)."""
        m = self.m
        return (self.normalized_tau(m + 1) @ self.normalized_d(m)).toarray()

    # --- diagnostics in the collocated (unnormalized) frame

    def codifferential(self, k):
        """d*_k = M_k^-1 d_k^H M_{k+1}, mapping degree k+1 to degree k (collocated frame)."""
        return (self.half(k, -1.0) @ self.d_collocated(k).conj().T @ self.half(k + 1, 1.0)).tocsr()

    def adjoint_defect(self, k):
        """|| M_k d*_k - d_k^H M_{k+1} || / || d_k^H M_{k+1} ||."""
        lhs = self.half(k, 1.0) @ self.codifferential(k)
        rhs = self.d_collocated(k).conj().T @ self.half(k + 1, 1.0)
        return float(spla.norm(lhs - rhs) / spla.norm(rhs))

    def self_adjoint_defect(self):
        """|| M D - D^H M || / || M D || for graded D = d + d* (collocated frame)."""
        degs = self.graded_degrees()
        blocks = [[None] * len(degs) for _ in degs]
        for i, k in enumerate(degs[:-1]):
            blocks[i + 1][i] = self.d_collocated(k)
            blocks[i][i + 1] = self.codifferential(k)
        D = sp.bmat(blocks, format="csr")
        M = sp.block_diag([self.half(k, 1.0) for k in degs], format="csr")
        MD = M @ D
        return float(spla.norm(MD - D.conj().T @ M) / spla.norm(MD))

    def codifferential_star_defect(self, k):
        """|| d*_k - c tau d tau || / || d*_k || on degree-(k+1) forms, c the sign fixed by the degrees."""
        n = self.n
        p = k + 1
        sign = (-1) ** (n * (p + 1) + 1)
        c = sign / (tau_phase(n, n - p + 1) * tau_phase(n, p))
        T_in = blocks_to_sparse(tau_blocks(self.grid, self.metric, p))
        T_out = blocks_to_sparse(tau_blocks(self.grid, self.metric, n - p + 1))
        lhs = self.codifferential(k)
        rhs = c * (T_out @ self.d_collocated(n - p) @ T_in)
        return float(spla.norm(lhs - rhs) / spla.norm(lhs))

    def tau_anticommutation_defect(self):
        """|| tau D + D tau || / || D || on the graded space (even n), normalized frame."""
        degs = self.graded_degrees()
        pos = {k: i for i, k in enumerate(degs)}
        Db = [[None] * len(degs) for _ in degs]
        Tb = [[None] * len(degs) for _ in degs]
        for i, k in enumerate(degs[:-1]):
            a = self.normalized_d(k)
            Db[i + 1][i], Db[i][i + 1] = a, a.conj().T
        for k in degs:
            Tb[pos[self.n - k]][pos[k]] = self.normalized_tau(k)
        D, T = sp.bmat(Db, format="csr"), sp.bmat(Tb, format="csr")
        return float(spla.norm(T @ D + D @ T) / spla.norm(D))

    def odd_skew_defect(self):
        """Self-adjointness defect of the literal tau d on middle forms (odd n)."""
        D = self.odd_operator_normalized()
        return float(np.linalg.norm(D - D.conj().T) / np.linalg.norm(D))


def assemble_signature_operator(grid, metric):
    if metric.grid != grid:
        raise ValueError("metric sampled on a different grid")
    n, m = grid.n, grid.m
    degs = range(max(0, m - 1), min(n, m + 1) + 1)
    masses = {k: mass_matrix(grid, metric, k) for k in range(n + 1) if k in degs or n - k in degs}
    d = {k: coboundary_matrix(grid, k) for k in range(max(0, m - 1), min(n - 1, m) + 1)}
    taus = {k: tau_blocks(grid, metric, k) for k in masses}
    return SignatureOperatorAssembly(grid, metric, masses, d, taus)


# -------------------------------------------------------------- Fourier path


def _symbol_mesh(grid):
    """Per-axis centred symbols at every frequency, shape (n, sites)."""
    sym = fourier.centered_symbol(grid.N)
    idx = np.stack(np.meshgrid(*([np.arange(grid.N)] * grid.n), indexing="ij")).reshape(grid.n, -1)
    return sym[idx]


def d_symbol(grid, k):
    """Symbol of the collocated coboundary, shape (sites, C(n,k+1), C(n,k))."""
    S = _symbol_mesh(grid)
    out = np.zeros((grid.sites, grid.components(k + 1), grid.components(k)), complex)
    for b, a, i, s in _cobound_terms(grid.n, k):
        out[:, b, a] += s * S[i]
    return out


def _constant_half(assembly, k, power):
    return _block_power(assembly.mass(k).blocks[0], power)


def normalized_symbol(assembly, k):
    return np.einsum("ab,sbc,cd->sad", _constant_half(assembly, k + 1, 0.5), d_symbol(assembly.grid, k),
                     _constant_half(assembly, k, -0.5))


def _stacked_symbol(assembly):
    m = assembly.m
    parts = []
    if m < assembly.n:
        parts.append(normalized_symbol(assembly, m))
    if m >= 1:
        parts.append(np.conj(np.swapaxes(normalized_symbol(assembly, m - 1), 1, 2)))
    return np.concatenate(parts, axis=1)


def _fourier_values(assembly):
    """(D singular values on the supp-complement, Hodge singular values) via per-frequency SVD."""
    hodge = np.linalg.svd(_stacked_symbol(assembly), compute_uv=False).reshape(-1)
    if assembly.parity == "even":
        return np.sort(hodge), np.sort(hodge)
    s = np.linalg.svd(normalized_symbol(assembly, assembly.m), compute_uv=False).reshape(-1)
    return _drop_exact(assembly, np.sort(s)), np.sort(hodge)


def _drop_exact(assembly, s_sorted):
    r = exact_rank(assembly.n, assembly.grid.N, assembly.m - 1)
    return s_sorted[r:]


# ---------------------------------------------------------------- dense path


def _dense_values(assembly):
    G = assembly.stacked().toarray()
    hodge = np.sort(sla.svdvals(G))
    if assembly.parity == "even":
        return hodge, hodge
    s = np.sort(sla.svdvals(assembly.normalized_d(assembly.m).toarray()))
    return _drop_exact(assembly, s), hodge


# ------------------------------------------------------------ iterative path


def _fft_axes(grid):
    return tuple(range(1, grid.n + 1))


class _MatrixFreeLaplacian:
    """K = a_m^H a_m + c a_{m-1} a_{m-1}^H applied with FFTs (normalized frame).

    For even n, c = 1 gives G^H G.  For odd n a large c lifts exact forms away
    from the bottom of the spectrum so the low modes of K are harmonic or
    coexact.
    """

    def __init__(self, assembly, penalty):
        self.a = assembly
        self.g = assembly.grid
        self.c = penalty
        m = assembly.m
        self.shape_m = (self.g.components(m),) + self.g.shape
        self.Bm_mh = _block_power(assembly.mass(m).blocks, -0.5)
        self.Bm_h = _block_power(assembly.mass(m).blocks, 0.5)
        self.Bp = assembly.mass(m + 1).blocks if m < self.g.n else None
        self.Bl_inv = _block_power(assembly.mass(m - 1).blocks, -1.0) if m >= 1 else None
        self.dim = self.g.dof(m)

    def apply_a(self, v):
        """a_m v as (C(n,m+1), N, ...) data in the weighted frame B_{m+1} (returns d u)."""
        u = apply_blocks(self.Bm_mh, v.reshape(self.shape_m))
        return apply_collocated_d(self.g, self.a.m, u)

    def matvec(self, v):
        g, m = self.g, self.a.m
        out = np.zeros(self.shape_m, complex)
        u = apply_blocks(self.Bm_mh, v.reshape(self.shape_m))
        if self.Bp is not None:
            du = apply_collocated_d(g, m, u)
            out += apply_collocated_d(g, m, apply_blocks(self.Bp, du), adjoint=True)
        if self.Bl_inv is not None:
            w = apply_blocks(self.a.mass(m).blocks, u)
            dsw = apply_blocks(self.Bl_inv, apply_collocated_d(g, m - 1, w, adjoint=True))
            out += self.c * apply_blocks(self.a.mass(m).blocks, apply_collocated_d(g, m - 1, dsw))
        return apply_blocks(self.Bm_mh, out).reshape(-1)

    def operator(self):
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=complex)

    def preconditioner(self, shift):
        """Inverse of the symbol of K + shift for the mean metric (one small inverse per frequency)."""
        g, m = self.g, self.a.m
        A = self.a.metric.A
        mean = MetricField(g, np.broadcast_to(A.mean(axis=0), A.shape).copy(), floor=0.0)
        ref = assemble_signature_operator(g, mean)
        K = np.zeros((g.sites, g.components(m), g.components(m)), complex)
        if m < g.n:
            s = normalized_symbol(ref, m)
            K += np.conj(np.swapaxes(s, 1, 2)) @ s
        if m >= 1:
            s = normalized_symbol(ref, m - 1)
            K += self.c * (s @ np.conj(np.swapaxes(s, 1, 2)))
        K += shift * np.eye(g.components(m))
        Kinv = np.linalg.inv(K)
        axes = _fft_axes(g)
        C = g.components(m)

        def solve(r):
            R = np.fft.fftn(r.reshape(self.shape_m), axes=axes).reshape(C, -1)
            out = np.einsum("sab,bs->as", Kinv, R).reshape(self.shape_m)
            return np.fft.ifftn(out, axes=axes).reshape(-1)

        return spla.LinearOperator((self.dim, self.dim), matvec=solve, dtype=complex)


def _iterative_lowest(assembly, count, tol, max_iter, penalty):
    lap = _MatrixFreeLaplacian(assembly, penalty)
    K = lap.operator()
    P = lap.preconditioner(1.0)
    shifted = spla.LinearOperator(K.shape, matvec=lambda v: K.matvec(v) + v, dtype=complex)
    info_box = {"cg_fail": 0}

    def inv(v):
        x, info = spla.cg(shifted, v, rtol=tol * 1e-2, atol=0.0, maxiter=max_iter, M=P)
        if info != 0:
            info_box["cg_fail"] += 1
        return x

    lam, vec = _rayleigh_ritz(K, *_lanczos(K, inv, count, tol, max_iter, None))
    # one Krylov space sees one copy per eigenspace; deflate and look again below the window edge
    for _ in range(MAX_DEFLATIONS):
        if len(lam) < count:
            edge = np.inf
        else:
            edge = lam[count - 1] * (1 + 1e-8) + 1e-12
        extra = min(max(4, count // 4), K.shape[0] - vec.shape[1] - 1)
        if extra < 1:
            break
        new_lam, new_vec = _lanczos(K, inv, extra, tol, max_iter, vec)
        keep = new_lam <= edge
        if not keep.any():
            break
        # keep every pair found so far: copies tied with the edge must stay deflated
        lam, vec = _rayleigh_ritz(K, np.concatenate([lam, new_lam[keep]]),
                                  np.concatenate([vec, new_vec[:, keep]], axis=1))
    else:
        raise SolverError("degenerate cluster did not resolve after deflation")
    lam, vec = lam[:count], vec[:, :count]
    resid = np.array([np.linalg.norm(K.matvec(vec[:, j]) - lam[j] * vec[:, j]) for j in range(count)])
    if info_box["cg_fail"]:
        raise SolverError(f"inner CG failed {info_box['cg_fail']} times (max residual {resid.max():.3e})")
    return lam, vec, resid, lap


def _rayleigh_ritz(K, lam, vec):
    """Orthonormalize approximate eigenvectors (Lanczos may return repeated copies) and re-solve on their span."""
    U, s, _ = np.linalg.svd(vec, full_matrices=False)
    Q = U[:, s > 1e-6 * s[0]]
    KQ = np.column_stack([K.matvec(Q[:, j]) for j in range(Q.shape[1])])
    H = Q.conj().T @ KQ
    w, W = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w, Q @ W


def _lanczos(K, inv, k, tol, max_iter, deflate):
    """Lowest k eigenpairs of K by shift-invert Lanczos, on the complement of `deflate` if given."""
    dim = K.shape[0]
    if deflate is None:
        op, opinv = K, spla.LinearOperator(K.shape, matvec=inv, dtype=complex)
        v0 = None
    else:
        def proj(v):
            return v - deflate @ (deflate.conj().T @ v)
        op = spla.LinearOperator(K.shape, matvec=lambda v: proj(K.matvec(proj(v))), dtype=complex)
        opinv = spla.LinearOperator(K.shape, matvec=lambda v: proj(inv(proj(v))), dtype=complex)
        v0 = proj(np.random.default_rng(dim + deflate.shape[1]).standard_normal(dim).astype(complex))
    try:
        lam, vec = spla.eigsh(op, k=k, sigma=-1.0, which="LM", OPinv=opinv, tol=tol, maxiter=max_iter, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"ARPACK did not converge: {len(exc.eigenvalues)} of {k} pairs") from exc
    order = np.argsort(lam.real)
    lam, vec = lam[order].real, vec[:, order]
    if deflate is not None:
        vec = proj(vec)
        vec /= np.linalg.norm(vec, axis=0)
    return lam, vec


def _estimate_top(lap):
    lam = spla.eigsh(lap.operator(), k=1, which="LA", tol=1e-6, return_eigenvectors=False)
    return float(lam[0].real)


def _iterative_values(assembly, count, tol, max_iter):
    """Lowest `count` Hodge singular values (and, for odd n, coexact singular values of d)."""
    if assembly.parity == "even":
        lam, _, resid, lap = _iterative_lowest(assembly, count, tol, max_iter, 1.0)
        sig = np.sqrt(np.maximum(lam, 0.0))
        return sig, sig, resid, _estimate_top(lap)
    penalty = 10.0
    for _ in range(6):
        lam, vec, resid, lap = _iterative_lowest(assembly, count, tol, max_iter, penalty)
        m = assembly.m
        if m == 0:
            break
        # exact components: || a_{m-1}^H v || relative to sqrt(lam * penalty)
        a_prev = assembly.normalized_d(m - 1)
        exact = np.linalg.norm(a_prev.conj().T @ vec, axis=0) ** 2 * penalty
        if np.all(exact <= 1e-6 * np.maximum(lam, 1.0)):
            break
        penalty *= 10.0
    else:
        raise SolverError("could not separate exact forms from the low spectrum")
    sig = np.sqrt(np.maximum(lam, 0.0))
    return sig, sig, resid, _estimate_top(lap)


# -------------------------------------------------------------------- report


@dataclass
class SpectralReport:
    n: int
    N: int
    parity: str
    descriptor: dict
    n_g: float
    mu: np.ndarray  # nonincreasing
    sigma: np.ndarray  # singular values of D behind mu, ascending
    kernel_dim: int
    gap_ratio: float
    ambiguous: bool
    mode: str
    residual: float = 0.0
    slope: float = math.nan
    band: float = math.nan
    intercept: float = math.nan
    verdicts: dict = field(default_factory=dict)

    @property
    def predicted(self):
        return -1.0 / self.n_g

    def fit_values(self):
        """mu with kernel modes (and zero modes) removed, still nonincreasing."""
        vals = self.mu[self.kernel_dim:] if self.parity == "even" else self.mu
        return vals[vals > 0]

    def to_dict(self):
        def clean(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "n": self.n, "N": self.N, "parity": self.parity, "metric": self.descriptor,
            "n_g": clean(float(self.n_g)), "predicted_slope": clean(float(self.predicted)),
            "mu": [float(v) for v in self.mu], "kernel_dim": int(self.kernel_dim),
            "gap_ratio": clean(float(self.gap_ratio)), "ambiguous": bool(self.ambiguous),
            "slope": clean(float(self.slope)), "band": clean(float(self.band)),
            "mode": self.mode, "residual": float(self.residual), "verdicts": dict(self.verdicts),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        lines = ["j,mu_j"] + [f"{j},{v:.17g}" for j, v in enumerate(self.mu, start=1)]
        return "\n".join(lines) + "\n"


def _kernel_split(sigma_sorted, rel):
    """Count of sigma below rel * sigma_max, and the gap ratio sigma_b / sigma_{b+1}."""
    if len(sigma_sorted) == 0:
        return 0, math.nan
    smax = sigma_sorted[-1]
    b = int(np.sum(sigma_sorted < rel * smax))
    if b == 0 or b == len(sigma_sorted):
        return b, 0.0 if b == 0 else math.nan
    nxt = sigma_sorted[b]
    return b, float(sigma_sorted[b - 1] / nxt) if nxt > 0 else math.inf


def _mu_from_sigma(parity, sigma):
    if parity == "even":
        return 1.0 / (1.0 + sigma)
    return sigma / (1.0 + sigma**2)


def choose_mode(assembly, mode="auto"):
    if mode != "auto":
        return mode
    if assembly.constant:
        return "fourier"
    return "dense" if assembly.middle_dof <= DENSE_LIMIT else "iterative"


def singular_values(assembly, count=None, mode="auto", n_g=None, tol=1e-10, max_iter=None):
    """Singular values mu_j of D(1+D^2)^-1 (odd n) or (1+|D|)^-1 (even n).

    Odd n: D is restricted to the orthogonal complement of the exact forms,
    the part of the middle-degree space on which tau d is not trivially zero.
    ``count`` keeps the largest values (None = all; required for 'iterative').
    """
    mode = choose_mode(assembly, mode)
    dim = assembly.middle_dof
    if count is not None and not 1 <= count <= dim:
        raise ValueError(f"count {count} outside [1, {dim}]")
    resid = 0.0
    rel = KERNEL_REL
    if mode == "fourier":
        if not assembly.constant:
            raise ValueError("the Fourier path needs a constant metric")
        sig, hodge = _fourier_values(assembly)
        top = hodge[-1]
    elif mode == "dense":
        sig, hodge = _dense_values(assembly)
        top = hodge[-1]
    elif mode == "iterative":
        if count is None:
            raise ValueError("iterative mode needs an explicit count")
        k = min(count + comb(assembly.n, assembly.m), dim - 2)
        sig, hodge, r, top2 = _iterative_values(assembly, k, tol, max_iter or 10 * dim)
        resid = float(r.max())
        top = math.sqrt(top2)
        rel = KERNEL_REL_SQUARED
    else:
        raise ValueError(f"unknown solver mode {mode!r}")

    b = int(np.sum(hodge < rel * top))
    nxt = hodge[b] if b < len(hodge) else math.nan
    gap = float(hodge[b - 1] / nxt) if b and nxt > 0 else (0.0 if b == 0 else math.nan)
    ambiguous = not (gap <= GAP_MAX)
    mu = _mu_from_sigma(assembly.parity, sig)
    order = np.argsort(-mu, kind="stable")
    mu, sig_sorted = mu[order], sig[order]
    if assembly.parity == "odd":
        # harmonic modes carry mu = 0 and sit at the tail
        sig_sorted[len(sig_sorted) - b:] = 0.0
        mu[len(mu) - b:] = 0.0
    else:
        mu[:b] = 1.0
    if count is not None:
        mu = mu[:count]
    report = SpectralReport(
        n=assembly.n, N=assembly.grid.N, parity=assembly.parity, descriptor=dict(assembly.metric.descriptor),
        n_g=float(n_g if n_g is not None else assembly.n), mu=mu, sigma=np.sort(sig), kernel_dim=b,
        gap_ratio=gap, ambiguous=ambiguous, mode=mode, residual=resid)
    report.verdicts["kernel_unambiguous"] = "PASS" if not ambiguous else "AMBIGUOUS"
    return report


def synthetic_report(mu, n_g, n=0, N=0):
    """Report wrapping externally supplied singular values (no kernel)."""
    mu = np.sort(np.asarray(mu, float))[::-1]
    return SpectralReport(n=n, N=N, parity="synthetic", descriptor={"kind": "synthetic"}, n_g=float(n_g),
                          mu=mu, sigma=np.array([]), kernel_dim=0, gap_ratio=0.0, ambiguous=False,
                          mode="synthetic")


# ---------------------------------------------------------------- decay fit


@dataclass(frozen=True)
class DecayFit:
    slope: float
    band: float
    intercept: float
    j_lo: int
    j_hi: int
    predicted: float
    tolerance: float
    passed: bool


def decay_fit(report, window=DEFAULT_WINDOW, tolerance=0.2, min_values=50, min_window=5):
    """Least-squares slope of log mu_j against log j over the quantile window of j.

    Kernel modes are removed first.  PASS iff slope <= -1/n(g) + tolerance.
    """
    lo, hi = window
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"bad fit window {window}")
    vals = report.fit_values() if report.parity != "synthetic" else report.mu
    J = len(vals)
    if J < min_values:
        raise ValueError(f"decay fit needs >= {min_values} singular values, got {J}")
    j = np.arange(1, J + 1)
    sel = (j >= lo * J) & (j <= hi * J)
    if sel.sum() < min_window:
        raise ValueError(f"fit window too small ({int(sel.sum())} points)")
    res = stats.linregress(np.log(j[sel]), np.log(vals[sel]))
    band = 1.96 * res.stderr
    pred = -1.0 / report.n_g
    passed = bool(res.slope <= pred + tolerance)
    report.slope, report.band, report.intercept = float(res.slope), float(band), float(res.intercept)
    report.verdicts["decay_bound"] = "PASS" if passed else "FAIL"
    return DecayFit(float(res.slope), float(band), float(res.intercept), int(j[sel][0]), int(j[sel][-1]),
                    pred, tolerance, passed)


# ----------------------------------------------------------- kernel analysis


@dataclass
class KernelAnalysis:
    dim: int
    basis: list  # g-orthonormal FormFields (cochain frame)
    gap_ratio: float
    ambiguous: bool
    rank_R: int
    R_defect: float  # || R^2 - R || + || R - R^H || for R = 1 - P - Q
    expected: int

    @property
    def finite_rank_ok(self):
        return self.rank_R == self.dim and self.R_defect < 1e-8


def _to_cochain(assembly, k, v):
    """Normalized-frame vector -> cochain-frame FormField."""
    g = assembly.grid
    blocks = _block_power(assembly.mass(k).blocks, -0.5)
    u = apply_blocks(blocks, v.reshape((g.components(k),) + g.shape)) / math.sqrt(g.cell_volume)
    return FormField(g, k, decollocate(g, k, u))


def kernel_analysis(assembly, strict=False):
    """Harmonic middle forms, from an SVD of G = [a_m ; a_{m-1}^H] (dense)."""
    m = assembly.m
    G = assembly.stacked().toarray()
    _, s, Vh = np.linalg.svd(G, full_matrices=False)
    order = np.argsort(s)
    s, V = s[order], Vh.conj().T[:, order]
    b = int(np.sum(s < KERNEL_REL * s[-1]))
    gap = float(s[b - 1] / s[b]) if 0 < b < len(s) else math.nan
    ambiguous = not (gap <= GAP_MAX)
    if ambiguous and strict:
        raise AmbiguousKernel(f"kernel gap ratio {gap:.3e} exceeds {GAP_MAX}")
    basis = [_to_cochain(assembly, m, V[:, j]) for j in range(b)]

    # P projects on exact forms, Q on coexact ones: orthonormal bases of im a_{m-1} and im a_m^H
    dim = assembly.middle_dof
    P = np.zeros((dim, dim), complex)
    Q = np.zeros((dim, dim), complex)
    if m >= 1:
        U, s1, _ = np.linalg.svd(assembly.normalized_d(m - 1).toarray(), full_matrices=False)
        r1 = int(np.sum(s1 > KERNEL_REL * s1.max()))
        P = U[:, :r1] @ U[:, :r1].conj().T
    if m < assembly.n:
        _, s2, Vh2 = np.linalg.svd(assembly.normalized_d(m).toarray(), full_matrices=False)
        r2 = int(np.sum(s2 > KERNEL_REL * s2.max()))
        W = Vh2[:r2].conj().T
        Q = W @ W.conj().T
    R = np.eye(dim) - P - Q
    rank_R = int(round(np.trace(R).real))
    R_defect = float(np.linalg.norm(R @ R - R) + np.linalg.norm(R - R.conj().T))
    return KernelAnalysis(b, basis, gap, ambiguous, rank_R, R_defect, comb(assembly.n, m))


def harmonic_dim_fourier(assembly):
    _, hodge = _fourier_values(assembly)
    return int(np.sum(hodge < KERNEL_REL * hodge[-1]))


# -------------------------------------------------------- spectral symmetry


def spectrum_symmetry_defect(assembly):
    """max | sort(lambda) + sort(-lambda) | / max|lambda| over nonzero eigenvalues of D."""
    if assembly.parity == "even":
        D, _, _ = assembly.graded_normalized()
    else:
        D = assembly.odd_operator_normalized()
        D = 0.5 * (D + D.conj().T)
    lam = np.linalg.eigvalsh(D)
    scale = np.abs(lam).max()
    lam = lam[np.abs(lam) > 1e-8 * scale]
    return float(np.abs(np.sort(lam) - np.sort(-lam)).max() / scale) if len(lam) else 0.0


# ------------------------------------------------------------ Fredholm module


@dataclass
class FredholmReport:
    parity: str
    # graded bounded transform F = D (1 + D^2)^-1/2 (even) / literal (D + 1)(1 + D^2)^-1/2 (odd)
    identity_defect: float  # || sv(F^2 - 1) - sv((1 + D^2)^-1) || (even)
    tau_defect: float  # || tau F + F tau || / || F || (even only, nan for odd n)
    selfadjoint_defect: float  # || F - F^* ||
    square_tail: list  # leading singular values of F^2 - 1
    paper_identity_defect: float  # || (F_p^2 - 1) + (1 + 2 Lap)(1 + Lap)^-2 || on middle forms
    paper_tau_defect: float  # || tau F_p + F_p tau || on middle forms (even only)
    commutator_norms: dict = field(default_factory=dict)  # N -> || [F, phi] ||


def _func_of_hermitian(H, fn):
    w, V = np.linalg.eigh(H)
    return (V * fn(w)) @ V.conj().T, w


def _paper_F(assembly):
    """(dd* - d*d)(1 + Lap)^-1 on middle forms, normalized frame."""
    m = assembly.m
    dim = assembly.middle_dof
    up = np.zeros((dim, dim), complex)  # d* d
    down = np.zeros((dim, dim), complex)  # d d*
    if m < assembly.n:
        a = assembly.normalized_d(m).toarray()
        up = a.conj().T @ a
    if m >= 1:
        a = assembly.normalized_d(m - 1).toarray()
        down = a @ a.conj().T
    lap = up + down
    res = np.linalg.inv(np.eye(dim) + lap)
    return (down - up) @ res, lap


def fredholm_module_check(assembly, phi=None, resolutions=(8, 16, 32), square_count=10):
    n = assembly.n
    m = assembly.m
    if assembly.parity == "even":
        D, degs, off = assembly.graded_normalized()
        T = assembly.graded_tau_normalized()
        F, w = _func_of_hermitian(D, lambda x: x / np.sqrt(1 + x * x))
        one = np.eye(len(D))
        sq = F @ F - one
        sv_sq = np.sort(np.linalg.svd(sq, compute_uv=False))[::-1]
        sv_res = np.sort(1.0 / (1.0 + w * w))[::-1]
        ident = float(np.abs(sv_sq - sv_res).max())
        tau_def = float(np.linalg.norm(T @ F + F @ T) / np.linalg.norm(F))
    else:
        D = assembly.odd_operator_normalized()
        D = 0.5 * (D + D.conj().T)
        F, w = _func_of_hermitian(D, lambda x: (x + 1) / np.sqrt(1 + x * x))
        sq = F @ F - np.eye(len(D))
        sv_sq = np.sort(np.linalg.svd(sq, compute_uv=False))[::-1]
        # (D + 1)^2 / (1 + D^2) - 1 = 2D / (1 + D^2)
        sv_res = np.sort(np.abs(2 * w / (1 + w * w)))[::-1]
        ident = float(np.abs(sv_sq - sv_res).max())
        # tau maps middle forms to degree m+1 here: no grading to anticommute with
        tau_def = math.nan
    sa = float(np.linalg.norm(F - F.conj().T) / np.linalg.norm(F))

    Fp, lap = _paper_F(assembly)
    wl, Vl = np.linalg.eigh(lap)
    target = -(Vl * ((1 + 2 * wl) / (1 + wl) ** 2)) @ Vl.conj().T
    p_ident = float(np.linalg.norm(Fp @ Fp - np.eye(len(Fp)) - target) / np.linalg.norm(target))
    p_tau = math.nan
    if n % 2 == 0:
        Tm = assembly.normalized_tau(m).toarray()
        p_tau = float(np.linalg.norm(Tm @ Fp + Fp @ Tm) / np.linalg.norm(Fp))

    report = FredholmReport(assembly.parity, ident, tau_def, sa, [float(v) for v in sv_sq[:square_count]],
                            p_ident, p_tau)
    if phi is not None:
        report.commutator_norms = commutator_trajectory(assembly.metric, phi, resolutions)
    return report


def _phi_normalized(assembly, phi, degs):
    from .commutator import _samples
    vals = _samples(assembly.grid, phi).reshape(-1)
    return np.concatenate([np.tile(vals, assembly.grid.components(k)) for k in degs])


def bounded_transform_commutator(assembly, phi):
    """|| [F, phi] || for the bounded transform of the graded (even) or middle (odd) D."""
    if assembly.parity == "even":
        D, degs, _ = assembly.graded_normalized()
        F, _ = _func_of_hermitian(D, lambda x: x / np.sqrt(1 + x * x))
    else:
        degs = [assembly.m]
        D = assembly.odd_operator_normalized()
        F, _ = _func_of_hermitian(0.5 * (D + D.conj().T), lambda x: (x + 1) / np.sqrt(1 + x * x))
    f = _phi_normalized(assembly, phi, degs)
    C = F * f[None, :] - f[:, None] * F
    return float(np.linalg.norm(C, 2))


def commutator_trajectory(metric, phi, resolutions):
    """|| [F, phi] || at each resolution, re-sampling the metric profile by its descriptor."""
    out = {}
    for N in resolutions:
        g = _grid_like(metric.grid, N)
        met = rebuild_metric(metric.descriptor, g)
        out[int(N)] = bounded_transform_commutator(assemble_signature_operator(g, met), phi)
    return out


def _grid_like(grid, N):
    return type(grid)(grid.n, N)


# -------------------------------------------------------- signature pairing


@dataclass(frozen=True)
class SignaturePairing:
    signature: int
    positive: int
    negative: int
    matrix: np.ndarray
    kernel_dim: int


def signature_pairing(assembly, kernel=None):
    """Signature of [wedge_integral(h_i, h_j)] on harmonic middle forms (n = 4)."""
    if assembly.n != 4:
        raise ValueError("the intersection pairing is computed for n = 4 only")
    ka = kernel or kernel_analysis(assembly)
    if ka.dim != comb(4, 2) or ka.ambiguous:
        raise AmbiguousKernel(f"harmonic dimension {ka.dim} (gap {ka.gap_ratio:.2e}); expected 6, refusing")
    H = ka.basis
    W = np.array([[wedge_integral(assembly.grid, hi, hj) for hj in H] for hi in H])
    W = 0.5 * (W + W.conj().T)
    ev = np.linalg.eigvalsh(W)
    tol = 1e-8 * np.abs(ev).max()
    pos, neg = int(np.sum(ev > tol)), int(np.sum(ev < -tol))
    return SignaturePairing(pos - neg, pos, neg, W, ka.dim)


# ----------------------------------------------------------------- homotopy


@dataclass
class HomotopyResult:
    ts: list
    reports: list
    kernel_dims: list
    n_g: list
    max_jump: float
    window: tuple
    verdict: str
    offending_t: float = math.nan

    def rows(self, k=None):
        out = []
        for t, r, ng in zip(self.ts, self.reports, self.n_g):
            mu = r.fit_values()
            if k is not None:
                mu = mu[:k]
            out.append([t, ng, r.kernel_dim] + [float(v) for v in mu])
        return out


def homotopy_run(grid, g0, g1, steps, L0=None, L1=None, count=None, mode="auto", window=DEFAULT_WINDOW,
                 jump_limit=0.2, executor=None):
    """Spectra along A_t = A_0 # _t A_1 for t on a uniform grid of `steps` points."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ts = [0.0] if steps == 1 else [i / (steps - 1) for i in range(steps)]
    L0 = L0 or flat_ledger(grid.n)
    L1 = L1 or flat_ledger(grid.n)

    def job(t):
        met = g0 if t == 0.0 else g1 if t == 1.0 else interpolate_metrics(g0, g1, t)
        # the printed path puts t on the reciprocal of the first argument, so feed (L1, L0)
        led = interpolate_exponents(L1, L0, t)
        asm = assemble_signature_operator(grid, met)
        rep = singular_values(asm, count=count, mode=mode, n_g=led.n_g)
        return rep, led.n_g

    results = list(executor.map(job, ts)) if executor is not None else [job(t) for t in ts]
    reports = [r for r, _ in results]
    ngs = [ng for _, ng in results]
    kdims = [r.kernel_dim for r in reports]
    J = min(len(r.fit_values()) for r in reports)
    lo, hi = max(0, int(math.ceil(window[0] * J)) - 1), int(window[1] * J)
    max_jump = 0.0
    for a, b in zip(reports, reports[1:]):
        u, v = a.fit_values()[lo:hi], b.fit_values()[lo:hi]
        if len(u):
            max_jump = max(max_jump, float(np.max(np.abs(v - u) / np.abs(u))))
    verdict = "PASS"
    bad = math.nan
    for t, kd, r in zip(ts, kdims, reports):
        if kd != kdims[0] or r.ambiguous:
            verdict, bad = "FAIL", t
            break
    if verdict == "PASS" and max_jump >= jump_limit:
        verdict = "FAIL"
    return HomotopyResult(ts, reports, kdims, ngs, max_jump, (lo + 1, hi), verdict, bad)


# ------------------------------------------------------------------ output


def atomic_write(path, text):
    """Write text to path via a temporary file in the same directory and a rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


__all__ = [
    "SignatureOperatorAssembly", "SpectralReport", "DecayFit", "KernelAnalysis", "FredholmReport",
    "SignaturePairing", "HomotopyResult", "assemble_signature_operator", "singular_values",
    "synthetic_report", "decay_fit", "kernel_analysis", "fredholm_module_check", "signature_pairing",
    "homotopy_run", "spectrum_symmetry_defect", "exact_rank", "atomic_write",
]
