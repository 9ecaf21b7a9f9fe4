"""Multiplication operators and the commutator [d, f] on the lattice.

Multiplication acts on raw cochain values, (f w)_I(x) = f(x) w_I(x).  With that
choice the commutator is exactly a cup product,

    ([d, f] w)_J(x) = sum_i sign * (D_i f)(x) * w_{J - i}(x + h e_i),

where D_i f is the forward difference of f.  It therefore carries no metric at
all, and the continuum bound |df ^ w|_g <= B^-1/2 |df|_eucl |w|_g holds up to
a first-order lattice allowance.
"""

from dataclasses import dataclass

import numpy as np

from .dec import FormField, _cobound_terms, _check_degree, coboundary, mass_matrix, norm


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    """Real f(x) = c0 + sum_j a_j cos(2 pi k_j.x) + b_j sin(2 pi k_j.x)."""

    freqs: np.ndarray  # (J, n) integer frequency vectors
    cos: np.ndarray  # (J,)
    sin: np.ndarray  # (J,)
    c0: float = 0.0

    def __post_init__(self):
        freqs = np.atleast_2d(np.asarray(self.freqs, dtype=int))
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "cos", np.asarray(self.cos, float).reshape(len(freqs)))
        object.__setattr__(self, "sin", np.asarray(self.sin, float).reshape(len(freqs)))

    @property
    def n(self):
        return self.freqs.shape[1]

    @classmethod
    def constant(cls, n, c):
        return cls(np.zeros((0, n), int), np.zeros(0), np.zeros(0), float(c))

    @classmethod
    def random(cls, n, rng, max_freq=2, terms=4):
        freqs = rng.integers(-max_freq, max_freq + 1, size=(terms, n))
        freqs[np.all(freqs == 0, axis=1), 0] = 1
        return cls(freqs, rng.standard_normal(terms), rng.standard_normal(terms), float(rng.standard_normal()))

    def _phase(self, X):
        # X: (n, ...) coordinates
        return 2 * np.pi * np.tensordot(self.freqs, X, axes=(1, 0))

    def __call__(self, X):
        X = np.asarray(X, float)
        ph = self._phase(X)
        return self.c0 + np.tensordot(self.cos, np.cos(ph), 1) + np.tensordot(self.sin, np.sin(ph), 1)

    def gradient(self, X):
        X = np.asarray(X, float)
        ph = self._phase(X)
        shape = (-1,) + (1,) * (ph.ndim - 1)
        coef = -np.sin(ph) * self.cos.reshape(shape) + np.cos(ph) * self.sin.reshape(shape)
        return 2 * np.pi * np.tensordot(self.freqs.T.astype(float), coef, axes=(1, 0))

    def sample(self, grid):
        return self(grid.coordinates())

    def grad_sup(self, resolution=None):
        """sup |grad f| (Euclidean), from dense sampling refined by a local search."""
        if len(self.freqs) == 0:
            return 0.0
        kmax = int(np.abs(self.freqs).max())
        res = resolution or max(16, 16 * kmax)
        if self.n >= 3:
            res = min(res, 64)
        x = np.arange(res) / res
        X = np.stack(np.meshgrid(*([x] * self.n), indexing="ij"))
        g = np.sqrt(np.sum(self.gradient(X) ** 2, axis=0))
        # correct the sampling error by the Hessian bound over half a cell diagonal
        return float(g.max() + self.hessian_bound() * 0.5 * np.sqrt(self.n) / res)

    def hessian_bound(self):
        """Upper bound on the operator norm of the Hessian: sum |c_j| (2 pi |k_j|)^2."""
        if len(self.freqs) == 0:
            return 0.0
        amp = np.hypot(self.cos, self.sin)
        return float(np.sum(amp * (2 * np.pi) ** 2 * np.sum(self.freqs**2, axis=1)))


def _samples(grid, f):
    if isinstance(f, TrigPolynomial):
        return f.sample(grid)
    f = np.asarray(f)
    if f.size == 1:
        return np.full(grid.shape, f.item())
    return f.reshape(grid.shape)


def mult_operator(grid, f, omega):
    """Pointwise product f(x) w(x) on cochain values."""
    return FormField(grid, omega.degree, _samples(grid, f)[None] * omega.data)


def commutator(grid, f, omega):
    """[d, f] w = d(f w) - f d w."""
    return coboundary(grid, mult_operator(grid, f, omega)) - mult_operator(grid, f, coboundary(grid, omega))


def cup_df(grid, f, omega):
    """(discrete df) cup w, the closed form of the commutator."""
    k = omega.degree
    _check_degree(grid, k, grid.n - 1)
    fs = _samples(grid, f)
    out = np.zeros((grid.components(k + 1),) + grid.shape, complex)
    for b, a, i, s in _cobound_terms(grid.n, k):
        Df = (np.roll(fs, -1, axis=i) - fs) * grid.N
        out[b] += s * Df * np.roll(omega.data[a], -1, axis=i)
    return FormField(grid, k + 1, out)


def metric_log_lipschitz(grid, metric, degrees):
    """max over sites, axes and listed degrees of |log eig(B(x)^-1/2 B(x+e_i) B(x)^-1/2)| / h."""
    kappa = 0.0
    for k in degrees:
        blocks = mass_matrix(grid, metric, k).blocks
        B = blocks.reshape(grid.shape + blocks.shape[1:])
        w, V = np.linalg.eigh(B)
        Bmh = np.einsum("...ab,...b,...cb->...ac", V, w**-0.5, V)
        for i in range(grid.n):
            Bs = np.roll(B, -1, axis=i)
            rel = Bmh @ Bs @ Bmh
            ev = np.linalg.eigvalsh(0.5 * (rel + np.swapaxes(rel, -1, -2)))
            kappa = max(kappa, float(np.abs(np.log(ev)).max()))
    return kappa / grid.h


@dataclass(frozen=True)
class CommutatorReport:
    lhs: float  # ||[d,f] w||_g
    rhs: float  # B^-1/2 sup|grad f| ||w||_g (1 + eps_h)
    eps_h: float
    ratio: float  # ||[d,f] w||_g / ||w||_g
    closed_form_defect: float  # ||[d,f] w - df cup w|| / ||df cup w||
    holds: bool


def allowance(grid, metric, f, degree):
    """First-order allowance eps_h = n h (||Hess f|| / ||grad f|| + kappa_g)."""
    gs = f.grad_sup() if isinstance(f, TrigPolynomial) else 0.0
    if gs == 0.0:
        return 0.0
    hess = f.hessian_bound() if isinstance(f, TrigPolynomial) else 0.0
    kappa = metric_log_lipschitz(grid, metric, (degree, degree + 1))
    return grid.n * grid.h * (hess / gs + kappa)


def commutator_bound_check(grid, metric, f, omega, grad_sup=None):
    """Check ||[d,f] w||_g <= B^-1/2 sup|grad f| ||w||_g (1 + eps_h)."""
    k = omega.degree
    c = commutator(grid, f, omega)
    cup = cup_df(grid, f, omega)
    scale = max(np.linalg.norm(cup.data), 1e-300)
    defect = float(np.linalg.norm(c.data - cup.data) / scale) if np.linalg.norm(cup.data) > 0 else float(
        np.linalg.norm(c.data))
    lhs = norm(grid, metric, c)
    wn = norm(grid, metric, omega)
    if grad_sup is None:
        grad_sup = f.grad_sup() if isinstance(f, TrigPolynomial) else _lattice_grad_sup(grid, f)
    eps = allowance(grid, metric, f, k) if isinstance(f, TrigPolynomial) else grid.n * grid.h
    rhs = metric.floor**-0.5 * grad_sup * wn * (1 + eps)
    return CommutatorReport(lhs, rhs, eps, lhs / wn if wn else 0.0, defect, bool(lhs <= rhs * (1 + 1e-12)))


def _lattice_grad_sup(grid, f):
    fs = _samples(grid, f).real
    D = np.stack([(np.roll(fs, -1, axis=i) - fs) * grid.N for i in range(grid.n)])
    return float(np.sqrt(np.sum(D**2, axis=0)).max())
