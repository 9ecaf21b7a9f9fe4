"""The flat parametrix t = delta_0 (P_0 + Delta_0)^-1 as a Fourier multiplier, and its truncations.

Everything here uses the flat reference structure, even when the metric under
study is rough.  In the cochain frame the flat Laplacian of the cubical
complex acts on every component by the scalar symbol sum_i |s(k_i)|^2 with
s(k) = (e^{2 pi i k/N} - 1) N, so P_0 + Delta_0 is inverted exactly mode by
mode (P_0 is the projection on constant forms, the k = 0 mode).
"""

from dataclasses import dataclass

import numpy as np

from . import fourier
from .dec import FormField, _cobound_terms, _check_degree, coboundary

DEFAULT_TAIL_EXPONENT = 4  # the Hoelder exponent N of the lemma, for the tail proxy


def _forward_symbols(grid):
    """Per-axis forward-difference symbols at every frequency, shape (n, N, ..., N)."""
    s = fourier.forward_symbol(grid.N)
    return np.stack([np.broadcast_to(fourier.axis_multiplier(s, grid.n, i), grid.shape) for i in range(grid.n)])


def flat_laplacian_symbol(grid):
    """sum_i |s(k_i)|^2 = sum_i (2/h)^2 sin^2(pi k_i / N)."""
    return np.sum(np.abs(_forward_symbols(grid)) ** 2, axis=0)


def _axes(grid):
    return tuple(range(1, grid.n + 1))


def max_norm_freqs(grid):
    """||k||_inf at every frequency."""
    return np.abs(fourier.freq_mesh(grid.n, grid.N)).max(axis=0)


@dataclass(frozen=True, eq=False)
class ParametrixOperator:
    """Fourier multiplier of t on degree-k forms (k >= 1), with truncation radius K."""

    grid: object
    degree: int
    multiplier: np.ndarray  # (C(n,k-1), C(n,k), N, ..., N)
    K: float = 0.0

    def apply_spectrum(self, spec):
        out = np.einsum("ab...,b...->a...", self.multiplier, spec)
        if self.K > 0:
            out = out * (max_norm_freqs(self.grid) >= self.K)
        return out

    def __call__(self, xi):
        if xi.degree != self.degree:
            raise ValueError(f"parametrix built for degree {self.degree}, got {xi.degree}")
        spec = np.fft.fftn(xi.data, axes=_axes(self.grid))
        out = np.fft.ifftn(self.apply_spectrum(spec), axes=_axes(self.grid))
        return FormField(self.grid, self.degree - 1, out)

    def symbol_norms(self):
        """Operator norm of the multiplier at each frequency, shape (N, ..., N)."""
        M = np.moveaxis(self.multiplier.reshape(self.multiplier.shape[:2] + (-1,)), -1, 0)
        return np.linalg.norm(M, ord=2, axis=(1, 2)).reshape(self.grid.shape)


def parametrix_operator(grid, k, K=0.0):
    _check_degree(grid, k)
    if k == 0:
        raise ValueError("the parametrix lowers degree; it needs k >= 1")
    S = _forward_symbols(grid)
    lap = flat_laplacian_symbol(grid)
    denom = np.where(lap == 0, 1.0, lap)  # P_0 + Delta_0: the projector fills in the k = 0 mode
    mult = np.zeros((grid.components(k - 1), grid.components(k)) + grid.shape, complex)
    # delta_0 = d^T: adjoint of d_{k-1}, symbol conj(s) with the transposed shuffle signs
    for b, a, i, sgn in _cobound_terms(grid.n, k - 1):
        mult[a, b] += sgn * np.conj(S[i])
    return ParametrixOperator(grid, k, mult / denom, K)


def flat_parametrix(grid, xi):
    """t xi = delta_0 (P_0 + Delta_0)^-1 xi."""
    return parametrix_operator(grid, xi.degree)(xi)


@dataclass(frozen=True)
class ParametrixCheck:
    defect: float
    skipped: bool


def parametrix_identity_check(grid, omega):
    """|| d t d w - d w || / || d w ||."""
    dw = coboundary(grid, omega)
    scale = np.linalg.norm(dw.data)
    if scale == 0 or scale < 1e-14 * max(1.0, np.linalg.norm(omega.data)) * grid.N:
        return ParametrixCheck(float("nan"), True)
    back = coboundary(grid, flat_parametrix(grid, dw))
    return ParametrixCheck(float(np.linalg.norm(back.data - dw.data) / scale), False)


def truncation_operator(grid, xi, K):
    """Keep the Fourier modes with ||k||_inf >= K and zero the rest."""
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    if K == 0:
        return FormField(grid, xi.degree, xi.data.copy())
    spec = np.fft.fftn(xi.data, axes=_axes(grid))
    spec = spec * (max_norm_freqs(grid) >= K)
    return FormField(grid, xi.degree, np.fft.ifftn(spec, axes=_axes(grid)))


@dataclass(frozen=True)
class TailNormReport:
    Ks: np.ndarray
    tail_bound: np.ndarray  # {sum_{||k|| >= K} (1 + ||k||)^-N}^(1/N): sup-norm proxy of t_K
    head_trace: np.ndarray  # sum_{||k|| < K} (1 + ||k||)^-1: trace-norm proxy of t - t_K
    op_norm: np.ndarray  # largest multiplier norm of t on the modes kept by t_K
    exponent: int
    slope: float  # log-log slope of tail_bound against 1 + K
    predicted: float  # n / N - 1


def tail_norm_report(grid, Ks=None, exponent=DEFAULT_TAIL_EXPONENT, degree=1):
    Ks = np.arange(2, 9) if Ks is None else np.asarray(Ks)
    r = max_norm_freqs(grid)
    norms = parametrix_operator(grid, degree).symbol_norms()
    tail, head, op = [], [], []
    for K in Ks:
        keep = r >= K
        tail.append(np.sum((1.0 + r[keep]) ** -float(exponent)) ** (1.0 / exponent) if keep.any() else 0.0)
        head.append(np.sum((1.0 + r[~keep]) ** -1.0))
        op.append(norms[keep].max() if keep.any() else 0.0)
    tail = np.array(tail)
    pos = tail > 0
    slope = float(np.polyfit(np.log1p(Ks[pos]), np.log(tail[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return TailNormReport(Ks, tail, np.array(head), np.array(op), exponent, slope, grid.n / exponent - 1)
