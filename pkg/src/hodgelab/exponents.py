"""Integrability exponents of a rough structure and the resulting Schatten exponent n(g).

A ledger records the exponents 1 <= q_k <= 2 <= p_k <= inf bracketing the
form spaces of degrees m and m+1 between Lebesgue spaces, the metric floor B,
and the dimension n.  Reciprocals are used internally so that p = inf is exact.
"""

import math
from dataclasses import dataclass, field

from .errors import InadmissibleLedger

FLOOR_EPS = 1e-6


def _recip(x):
    return 0.0 if math.isinf(x) else 1.0 / x


def _from_recip(r):
    return math.inf if r == 0 else 1.0 / r


def admissibility_margin(n, p_m, q_m1):
    """1/p_m + 1/n - 1/q_{m+1}; the ledger is admissible iff this is positive."""
    return _recip(p_m) + 1.0 / n - _recip(q_m1)


@dataclass(frozen=True)
class ExponentLedger:
    n: int
    p_m: float
    q_m: float
    p_m1: float
    q_m1: float
    B: float = 1.0 + FLOOR_EPS
    source: str = "explicit"
    # exponents of other degrees, {k: (p_k, q_k)}, informational only
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 <= self.n <= 4:
            raise ValueError(f"dimension n={self.n} outside [1, 4]")
        for name in ("p_m", "p_m1"):
            v = getattr(self, name)
            if not v >= 2:
                raise InadmissibleLedger(f"{name} = {v:g} violates 2 <= p_k")
        for name in ("q_m", "q_m1"):
            v = getattr(self, name)
            if not 1 <= v <= 2:
                raise InadmissibleLedger(f"{name} = {v:g} violates 1 <= q_k <= 2")
        if not self.B >= 1:
            raise InadmissibleLedger(f"floor B = {self.B:g} below 1")
        margin = admissibility_margin(self.n, self.p_m, self.q_m1)
        if not margin > 0:
            raise InadmissibleLedger(
                f"1/p_m + 1/n > 1/q_(m+1) violated: {_recip(self.p_m) + 1 / self.n:.12g} <= "
                f"{_recip(self.q_m1):.12g}")

    @property
    def m(self):
        return self.n // 2

    @property
    def margin(self):
        return admissibility_margin(self.n, self.p_m, self.q_m1)

    @property
    def n_g(self):
        return n_of_g(self)

    def as_dict(self):
        def enc(x):
            return None if math.isinf(x) else x

        return {
            "n": self.n, "m": self.m, "source": self.source,
            "p_m": enc(self.p_m), "q_m": enc(self.q_m),
            "p_m1": enc(self.p_m1), "q_m1": enc(self.q_m1),
            "B": self.B, "n_g": self.n_g, "margin": self.margin,
            "extra": {str(k): [enc(p), enc(q)] for k, (p, q) in sorted(self.extra.items())},
        }


def n_of_g(ledger):
    """n p_m q_{m+1} / (p_m q_{m+1} - n (p_m - q_{m+1})), evaluated in reciprocal form."""
    denom = 1.0 - ledger.n * (_recip(ledger.q_m1) - _recip(ledger.p_m))
    if not denom > 0:
        raise InadmissibleLedger(f"n(g) denominator {denom:.3g} <= 0")
    return ledger.n / denom


def n0_exponent(n, N):
    """Lemma exponent n_0 = nN / (N - n); needs N > n."""
    if N <= n:
        raise ValueError(f"n_0 needs N > n, got N={N}, n={n}")
    return n * N / (N - n)


def flat_ledger(n):
    return ExponentLedger(n, 2.0, 2.0, 2.0, 2.0, B=1.0, source="flat")


def exponents_quasiconformal(n, p, B=1.0 + FLOOR_EPS):
    """Exponents of a structure equivalent to phi g0 with phi in L^p, p > n."""
    if not p > n:
        raise InadmissibleLedger(f"p > n violated: {p:g} <= {n}")
    if math.isinf(p):
        return ExponentLedger(n, 2.0, 2.0, 2.0, 2.0, B=B, source="quasiconformal")
    if n % 2:
        led = ExponentLedger(n, 2 * p / (p - 1), 2.0, 2.0, 2 * p / (p + 1), B=B,
                             source="quasiconformal")
    else:
        led = ExponentLedger(n, 2.0, 2.0, 2.0, 2 * p / (p + 2), B=B, source="quasiconformal",
                             extra={n // 2 - 1: (2 * p / (p - 2), 2.0)})
    # the chain 1/p_m + 1/n = (1 - 1/p + 2/n) / 2 > 1/q_{m+1}, checked rather than assumed
    if not led.margin > 0:
        raise InadmissibleLedger("quasi-conformal ledger failed admissibility")
    return led


def lp_threshold(n):
    return n * (n + 1) / 2


def exponents_lp_derivable(n, p, B=1.0 + FLOOR_EPS):
    """p_k = 2p / (p + k - n), q_k = 2p / (p + k); admissible iff p > n(n+1)/2."""
    thr = lp_threshold(n)
    if not p > thr:
        raise InadmissibleLedger(f"p > n(n+1)/2 violated: {p:g} ≤ {thr:g}")
    m = n // 2
    # p + (k - n), not (p + k) - n: keeps p_n = 2 exact
    pk = {k: 2 * p / (p + (k - n)) if p + (k - n) > 0 else math.inf for k in range(n + 1)}
    qk = {k: 2 * p / (p + k) for k in range(n + 1)}
    extra = {k: (pk[k], qk[k]) for k in range(n + 1) if k not in (m, m + 1)}
    return ExponentLedger(n, pk[m], qk[m], pk[m + 1], qk[m + 1], B=B, source="lp_derivable",
                          extra=extra)


def interpolate_exponents(L0, L1, t):
    """Reciprocal-affine path 1/p(t) = t/p^0 + (1-t)/p^1, taken verbatim.

    With this convention t = 0 returns L1 and t = 1 returns L0; the floor
    follows the same weights geometrically.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if L0.n != L1.n:
        raise ValueError("ledgers of different dimensions")
    if t == 0.0:
        return L1
    if t == 1.0:
        return L0

    def mix(a, b):
        return _from_recip(t * _recip(a) + (1 - t) * _recip(b))

    out = ExponentLedger(
        L0.n, mix(L0.p_m, L1.p_m), mix(L0.q_m, L1.q_m), mix(L0.p_m1, L1.p_m1), mix(L0.q_m1, L1.q_m1),
        B=L0.B**t * L1.B ** (1 - t), source="interpolated")
    # admissibility is affine in the reciprocals, so this holds; asserted anyway
    assert out.margin > 0
    return out
