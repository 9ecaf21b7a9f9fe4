"""Discrete exterior calculus on the periodic cubical lattice of the unit torus.

A degree-k cochain stores one value per lattice site x and increasing
multi-index I; the value is attached to the k-cell spanned by the edges
{e_i : i in I} at x, whose centre is x + (h/2) e_I.  The coboundary is the
forward difference with shuffle signs, so d o d = 0 exactly.

Metric quantities (mass blocks, Hodge star, wedge pairing) are pointwise at the
lattice sites.  Each component is first moved from its cell centre to the site
by the band-limited half shift exp(-i pi k.e_I / N) (the *collocation* map).
That map is unitary, and in the collocated frame the coboundary has the skew
symbol (2i/h) sin(pi k/N).  This keeps summation by parts exact, hence
d* = +-tau d tau holds to rounding for any sampled metric.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from weakref import WeakKeyDictionary
from math import comb

import numpy as np
import scipy.sparse as sp

from . import fourier
from .errors import DegreeError, MetricError


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    N: int

    def __post_init__(self):
        if not 1 <= self.n <= 4:
            raise ValueError(f"dimension must be in [1, 4], got {self.n}")
        if self.N < 4:
            raise ValueError(f"resolution must be >= 4, got {self.N}")

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def m(self):
        return self.n // 2

    @property
    def sites(self):
        return self.N**self.n

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def cell_volume(self):
        return self.h**self.n

    def components(self, k):
        return comb(self.n, k)

    def dof(self, k):
        return self.sites * comb(self.n, k)

    def coordinates(self):
        """Site coordinates, shape (n, N, ..., N)."""
        x = np.arange(self.N) * self.h
        return np.stack(np.meshgrid(*([x] * self.n), indexing="ij"))


@lru_cache(maxsize=None)
def multi_indices(n, k):
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _index_of(n, k):
    return {I: a for a, I in enumerate(multi_indices(n, k))}


def complement(n, I):
    return tuple(i for i in range(n) if i not in I)


def wedge_sign(n, I):
    """Sign of the permutation (I, complement(I)), i.e. dx_I ^ dx_Ic = sign * vol."""
    perm = list(I) + list(complement(n, I))
    inversions = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
    return -1 if inversions % 2 else 1


def _check_degree(grid, k, hi=None):
    hi = grid.n if hi is None else hi
    if not 0 <= k <= hi:
        raise DegreeError(f"degree {k} out of range [0, {hi}] for n={grid.n}")


@dataclass(frozen=True, eq=False)
class FormField:
    grid: PeriodicGrid
    degree: int
    data: np.ndarray  # shape (C(n,k), N, ..., N), complex

    def __post_init__(self):
        _check_degree(self.grid, self.degree)
        want = (self.grid.components(self.degree),) + self.grid.shape
        data = np.asarray(self.data, dtype=complex)
        if data.shape != want:
            if data.size != np.prod(want):
                raise ValueError(f"form data has {data.size} entries, expected {np.prod(want)}")
            data = data.reshape(want)
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, grid, k):
        return cls(grid, k, np.zeros((grid.components(k),) + grid.shape, complex))

    @classmethod
    def constant(cls, grid, k, coeffs):
        coeffs = np.asarray(coeffs, complex).reshape((-1,) + (1,) * grid.n)
        return cls(grid, k, np.broadcast_to(coeffs, (grid.components(k),) + grid.shape).copy())

    @classmethod
    def from_vector(cls, grid, k, vec):
        return cls(grid, k, np.asarray(vec).reshape((grid.components(k),) + grid.shape))

    @property
    def vector(self):
        return self.data.reshape(-1)

    def __add__(self, other):
        return FormField(self.grid, self.degree, self.data + other.data)

    def __sub__(self, other):
        return FormField(self.grid, self.degree, self.data - other.data)

    def __mul__(self, c):
        return FormField(self.grid, self.degree, self.data * c)

    __rmul__ = __mul__


def random_form(grid, k, rng, real=False):
    shape = (grid.components(k),) + grid.shape
    data = rng.standard_normal(shape)
    if not real:
        data = data + 1j * rng.standard_normal(shape)
    return FormField(grid, k, data)


# ---------------------------------------------------------------- coboundary


def _cobound_terms(n, k):
    """(out_index, in_index, axis, sign) for d: Omega^k -> Omega^{k+1}."""
    terms = []
    src = _index_of(n, k)
    for b, J in enumerate(multi_indices(n, k + 1)):
        for pos, i in enumerate(J):
            I = J[:pos] + J[pos + 1:]
            terms.append((b, src[I], i, -1 if pos % 2 else 1))
    return terms


def coboundary(grid, omega):
    """Forward-difference coboundary with shuffle signs."""
    k = omega.degree
    _check_degree(grid, k, grid.n - 1)
    out = np.zeros((grid.components(k + 1),) + grid.shape, complex)
    for b, a, i, s in _cobound_terms(grid.n, k):
        u = omega.data[a]
        out[b] += s * (np.roll(u, -1, axis=i) - u) * grid.N
    return FormField(grid, k + 1, out)


def _axis_operator(grid, axis, C):
    n, N = grid.n, grid.N
    return sp.kron(sp.kron(sp.identity(N**axis), sp.csr_matrix(C)), sp.identity(N ** (n - axis - 1)))


def _assemble_cobound(grid, k, which, dtype):
    _check_degree(grid, k, grid.n - 1)
    if which == "forward":
        N = grid.N
        C = (sp.eye(N, k=1) + sp.eye(N, k=1 - N) - sp.eye(N)) * N
    else:
        C = fourier.circulant(grid.N, which)
    ops = [_axis_operator(grid, i, C) for i in range(grid.n)]
    rows, cols = grid.components(k + 1), grid.components(k)
    blocks = [[None] * cols for _ in range(rows)]
    for b, a, i, s in _cobound_terms(grid.n, k):
        blocks[b][a] = s * ops[i]
    for b in range(rows):
        for a in range(cols):
            if blocks[b][a] is None:
                blocks[b][a] = sp.csr_matrix((grid.sites, grid.sites), dtype=dtype)
    return sp.bmat(blocks, format="csr").astype(dtype)


def coboundary_matrix(grid, k):
    """Sparse real matrix of the forward coboundary on degree-k cochains."""
    return _assemble_cobound(grid, k, "forward", float)


def collocated_coboundary_matrix(grid, k):
    """Coboundary in the collocated frame (skew centred symbol along each axis)."""
    return _assemble_cobound(grid, k, "centered", complex)


# ------------------------------------------------------------- collocation


def _component_phase(grid, I):
    ph = np.ones(grid.shape, complex)
    shift = fourier.half_shift(grid.N)
    for i in I:
        ph = ph * fourier.axis_multiplier(shift, grid.n, i)
    return ph


def _apply_component_phase(grid, k, data, inverse=False):
    out = np.empty_like(data, dtype=complex)
    for a, I in enumerate(multi_indices(grid.n, k)):
        if not I:
            out[a] = data[a]
            continue
        ph = _component_phase(grid, I)
        if inverse:
            ph = ph.conj()
        out[a] = np.fft.ifftn(np.fft.fftn(data[a]) * ph)
    return out


def collocate(grid, k, data):
    """Move every component from its cell centre to the lattice site."""
    return _apply_component_phase(grid, k, np.asarray(data), inverse=False)


def decollocate(grid, k, data):
    return _apply_component_phase(grid, k, np.asarray(data), inverse=True)


def collocation_matrix(grid, k):
    """Unitary matrix of `collocate` (dense factors; meant for small grids)."""
    blocks = []
    C = fourier.circulant(grid.N, "shift")
    for I in multi_indices(grid.n, k):
        op = sp.identity(1, dtype=complex, format="csr")
        for axis in range(grid.n):
            f = sp.csr_matrix(C) if axis in I else sp.identity(grid.N, format="csr")
            op = sp.kron(op, f, format="csr")
        blocks.append(op)
    return sp.block_diag(blocks, format="csr")


def apply_collocated_d(grid, k, data, adjoint=False):
    """Collocated coboundary (or its flat l2 adjoint) applied via FFT.

    ``data`` has shape (C(n,k), N, ...) for d, (C(n,k+1), N, ...) for the adjoint.
    """
    sym = fourier.centered_symbol(grid.N)
    terms = _cobound_terms(grid.n, k)
    if not adjoint:
        spec = np.fft.fftn(data, axes=tuple(range(1, grid.n + 1)))
        out = np.zeros((grid.components(k + 1),) + grid.shape, complex)
        for b, a, i, s in terms:
            out[b] += s * fourier.axis_multiplier(sym, grid.n, i) * spec[a]
    else:
        spec = np.fft.fftn(data, axes=tuple(range(1, grid.n + 1)))
        out = np.zeros((grid.components(k),) + grid.shape, complex)
        for b, a, i, s in terms:
            out[a] += s * fourier.axis_multiplier(sym.conj(), grid.n, i) * spec[b]
    return np.fft.ifftn(out, axes=tuple(range(1, grid.n + 1)))


# ------------------------------------------------------------------- metric


def compound(M, k):
    """k-th compound matrix (all k x k minors, lexicographic multi-indices)."""
    M = np.asarray(M)
    n = M.shape[-1]
    idx = multi_indices(n, k)
    out = np.empty(M.shape[:-2] + (len(idx), len(idx)), dtype=M.dtype)
    if k == 0:
        out[...] = 1
        return out
    for a, I in enumerate(idx):
        rows = M[..., list(I), :]
        for b, J in enumerate(idx):
            out[..., a, b] = np.linalg.det(rows[..., :, list(J)])
    return out


def _site_cholesky(A):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric sample is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class MassMatrix:
    grid: PeriodicGrid
    degree: int
    blocks: np.ndarray  # (sites, C, C): lambda^k(A^-1) sqrt(det A)

    @property
    def weight(self):
        return self.grid.cell_volume

    def sparse(self, power=1.0):
        """Block-diagonal matrix in component-major order, without the cell weight.

        ``power`` may be 1, -1, 0.5 or -0.5 (blocks are SPD).
        """
        blocks = self.blocks if power == 1.0 else _block_power(self.blocks, power)
        return blocks_to_sparse(blocks)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.blocks).min())


def _block_power(blocks, power):
    w, V = np.linalg.eigh(blocks)
    return np.einsum("sab,sb,scb->sac", V, w**power, V.conj())


def blocks_to_sparse(blocks):
    """(sites, r, c) per-site blocks -> sparse (r*sites, c*sites) in component-major order."""
    S, r, c = blocks.shape
    rows = [[sp.diags(blocks[:, a, b]) for b in range(c)] for a in range(r)]
    return sp.bmat(rows, format="csr")


def apply_blocks(blocks, data):
    """Apply per-site blocks (sites, r, c) to component-major data (c, N, ...)."""
    shape = data.shape[1:]
    flat = data.reshape(data.shape[0], -1)
    return np.einsum("sab,bs->as", blocks, flat).reshape((blocks.shape[1],) + shape)


# per-metric block cache; metric samples are read-only, so blocks never go stale
_BLOCKS = WeakKeyDictionary()


def _cached(metric, key, build):
    try:
        store = _BLOCKS.setdefault(metric, {})
    except TypeError:  # not weak-referenceable: no caching
        return build()
    if key not in store:
        store[key] = build()
    return store[key]


def mass_matrix(grid, metric, k):
    _check_degree(grid, k)

    def build():
        A = np.asarray(metric.A)
        if not np.all(np.linalg.eigvalsh(A) > 0):
            raise MetricError("metric sample is not positive definite")
        blocks = compound(np.linalg.inv(A), k) * np.sqrt(np.linalg.det(A))[:, None, None]
        blocks.setflags(write=False)
        return MassMatrix(grid, k, blocks)

    return _cached(metric, ("mass", grid.N, k), build)


def inner_product(grid, metric, alpha, beta, mass=None):
    """<alpha, beta>_g, linear in alpha and conjugate-linear in beta."""
    if alpha.degree != beta.degree:
        raise DegreeError("inner product needs equal degrees")
    M = mass if mass is not None else mass_matrix(grid, metric, alpha.degree)
    a = collocate(grid, alpha.degree, alpha.data)
    b = collocate(grid, beta.degree, beta.data)
    return np.vdot(b, apply_blocks(M.blocks, a)) * grid.cell_volume


def norm(grid, metric, omega, mass=None):
    return float(np.sqrt(inner_product(grid, metric, omega, omega, mass).real))


# --------------------------------------------------------------- Hodge star


def flat_star_matrix(n, k):
    """Matrix of the flat star Lambda^k -> Lambda^{n-k}: *dx_I = eps(I) dx_Ic."""
    src = multi_indices(n, k)
    dst = _index_of(n, n - k)
    S = np.zeros((len(dst), len(src)))
    for a, I in enumerate(src):
        S[dst[complement(n, I)], a] = wedge_sign(n, I)
    return S


def star_blocks(grid, metric, k):
    """Per-site star matrices lambda^{n-k}(L) S lambda^k(L^-1), A = L L^T."""
    _check_degree(grid, k)

    def build():
        L = _site_cholesky(np.asarray(metric.A))
        Linv = np.linalg.inv(L)
        S = flat_star_matrix(grid.n, k)
        out = np.einsum("sab,bc,scd->sad", compound(L, grid.n - k), S, compound(Linv, k))
        out.setflags(write=False)
        return out

    return _cached(metric, ("star", grid.N, k), build)


def tau_phase(n, k):
    m = n // 2
    e = k * (k - 1) + m if n % 2 == 0 else k * (k + 1) + m + 1
    return 1j ** (e % 4)


def tau_blocks(grid, metric, k):
    return tau_phase(grid.n, k) * star_blocks(grid, metric, k)


def hodge_star(grid, metric, omega):
    k = omega.degree
    a = collocate(grid, k, omega.data)
    out = apply_blocks(star_blocks(grid, metric, k), a)
    return FormField(grid, grid.n - k, decollocate(grid, grid.n - k, out))


def tau(grid, metric, omega):
    """Hodge involution: phase(n, k) times the star."""
    return tau_phase(grid.n, omega.degree) * hodge_star(grid, metric, omega)


def wedge_integral(grid, alpha, beta):
    """Sum over sites of (alpha ^ conj(beta)) top coefficient times h^n."""
    k = alpha.degree
    if alpha.degree + beta.degree != grid.n:
        raise DegreeError(f"degrees {alpha.degree} and {beta.degree} are not complementary in n={grid.n}")
    a = collocate(grid, k, alpha.data)
    b = collocate(grid, grid.n - k, beta.data)
    dst = _index_of(grid.n, grid.n - k)
    total = 0j
    for i, I in enumerate(multi_indices(grid.n, k)):
        total += wedge_sign(grid.n, I) * np.vdot(b[dst[complement(grid.n, I)]], a[i])
    return complex(total * grid.cell_volume)


def star_matrix(grid, metric, k):
    """Sparse star in the collocated frame."""
    return blocks_to_sparse(star_blocks(grid, metric, k))


def tau_matrix(grid, metric, k):
    return blocks_to_sparse(tau_blocks(grid, metric, k))
