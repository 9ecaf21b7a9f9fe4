"""Frequency-domain helpers for the periodic lattice.

All multipliers are indexed by the integer frequencies returned by
``np.fft.fftfreq(N, 1/N)``, i.e. ``k`` in ``[-N/2, N/2)``.
"""

from functools import lru_cache

import numpy as np


def int_freqs(N):
    return np.fft.fftfreq(N, 1.0 / N)


def forward_symbol(N):
    """Symbol of the forward difference (u(x+h) - u(x)) / h."""
    k = int_freqs(N)
    return (np.exp(2j * np.pi * k / N) - 1.0) * N


def half_shift(N):
    """Multiplier moving a sample from x + h/2 back to x."""
    return np.exp(-1j * np.pi * int_freqs(N) / N)


def centered_symbol(N):
    """Forward symbol seen from cell centres: (2i/h) sin(pi k / N).

    Purely imaginary, so the operator is skew-Hermitian; it vanishes only at k = 0.
    """
    return 2j * N * np.sin(np.pi * int_freqs(N) / N)


@lru_cache(maxsize=64)
def _circulant(N, which):
    sym = {"forward": forward_symbol, "shift": half_shift, "centered": centered_symbol}[which](N)
    col = np.fft.ifft(sym)
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    C = col[idx]
    C.setflags(write=False)
    return C


def circulant(N, which):
    """Dense N x N matrix of a 1-D multiplier ('forward', 'shift' or 'centered')."""
    return _circulant(N, which)


def freq_mesh(n, N):
    """Integer frequency vectors, shape (n, N, ..., N)."""
    k = int_freqs(N)
    return np.stack(np.meshgrid(*([k] * n), indexing="ij"))


def axis_multiplier(sym, n, axis):
    shape = [1] * n
    shape[axis] = sym.size
    return sym.reshape(shape)
