"""Rough metric fields sampled on the lattice, and the geometric-mean path between them."""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dec import PeriodicGrid
from .errors import MetricError

DEFAULT_FLOOR = 1.0 + 1e-6
EIG_FLOOR = 1e-14
# declared p_int sits this far below the critical exponent n / beta
P_INT_MARGIN = 0.05


@dataclass(frozen=True, eq=False)
class MetricField:
    grid: PeriodicGrid
    A: np.ndarray  # (sites, n, n)
    floor: float = 1.0
    p_int: float = np.inf
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        n = self.grid.n
        if A.shape != (self.grid.sites, n, n):
            raise MetricError(f"metric samples have shape {A.shape}, expected {(self.grid.sites, n, n)}")
        if not np.all(np.isfinite(A)):
            raise MetricError("metric has non-finite entries")
        asym = np.abs(A - A.transpose(0, 2, 1)).max(initial=0.0)
        if asym > 1e-12 * max(1.0, np.abs(A).max()):
            raise MetricError(f"metric samples not symmetric (defect {asym:.3e})")
        A = 0.5 * (A + A.transpose(0, 2, 1))
        lmin = np.linalg.eigvalsh(A)[:, 0]
        if lmin.min() <= 0:
            raise MetricError("metric sample is not positive definite")
        if lmin.min() < self.floor * (1 - 1e-12):
            raise MetricError(f"metric violates floor {self.floor}: min eigenvalue {lmin.min():.6g}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def is_constant(self):
        return bool(np.all(self.A == self.A[:1]))

    def operator_norms(self):
        return np.linalg.eigvalsh(self.A)[:, -1]

    def empirical_norm(self, p):
        """(h^n sum ||A(x)||^p)^(1/p): a diagnostic only, never used to certify p_int."""
        return float((self.grid.cell_volume * np.sum(self.operator_norms() ** p)) ** (1.0 / p))


def _torus_delta(grid, x0):
    X = grid.coordinates()
    x0 = np.asarray(x0, float).reshape((grid.n,) + (1,) * grid.n)
    dx = (X - x0 + 0.5) % 1.0 - 0.5
    return dx


def torus_distance(grid, x0):
    return np.sqrt(np.sum(_torus_delta(grid, x0) ** 2, axis=0))


def flat_metric(grid):
    A = np.broadcast_to(np.eye(grid.n), (grid.sites, grid.n, grid.n)).copy()
    return MetricField(grid, A, floor=1.0, p_int=np.inf, descriptor={"kind": "flat"})


def scaled_metric(grid, c):
    """Constant metric c^2 g_0."""
    A = np.broadcast_to(c * c * np.eye(grid.n), (grid.sites, grid.n, grid.n)).copy()
    return MetricField(grid, A, floor=min(1.0, c * c), p_int=np.inf, descriptor={"kind": "scaled", "c": c})


def critical_exponent(n, beta):
    return np.inf if beta == 0 else n / beta


def conformal_singular_metric(grid, x0=None, beta=0.4, floor=DEFAULT_FLOOR, p_int=None):
    """A(x) = max(floor, |x - x0|^-beta) Id, with torus distance.

    The site at x0 (if any) takes the profile value at distance h/2.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    n = grid.n
    if x0 is None:
        x0 = np.full(n, 0.5)
    pc = critical_exponent(n, beta)
    if p_int is None:
        p_int = np.inf if beta == 0 else pc - P_INT_MARGIN
    if beta > 0 and beta * p_int >= n:
        raise ValueError(f"beta * p_int = {beta * p_int:g} >= n = {n}: profile not in L^p_int")
    r = np.maximum(torus_distance(grid, x0), 0.5 * grid.h)
    phi = r**-beta
    scale = np.maximum(floor, phi).reshape(-1)
    A = scale[:, None, None] * np.eye(n)
    desc = {"kind": "conformal", "x0": [float(v) for v in x0], "beta": float(beta),
            "floor": float(floor), "p_int": float(p_int)}
    return MetricField(grid, A, floor=float(min(floor, scale.min())), p_int=float(p_int), descriptor=desc)


@dataclass(frozen=True, eq=False)
class TransitionData:
    """Matrix fields psi_j sampled at sites, zero outside their support masks."""

    fields: tuple  # each (sites, n, n)
    masks: tuple = ()

    def __post_init__(self):
        fields = tuple(np.asarray(f, float) for f in self.fields)
        masks = tuple(np.asarray(m, bool).reshape(-1) for m in self.masks) or tuple(
            np.ones(f.shape[0], bool) for f in fields)
        if len(masks) != len(fields):
            raise ValueError("one support mask per transition field")
        for f in fields:
            if not np.all(np.isfinite(f)):
                raise ValueError("transition field has non-finite entries")
        fields = tuple(np.where(mk[:, None, None], f, 0.0) for f, mk in zip(fields, masks))
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "masks", masks)


def metric_from_transitions(grid, transitions):
    """A(x) = Id + sum_j psi_j(x)^T psi_j(x)."""
    A = np.broadcast_to(np.eye(grid.n), (grid.sites, grid.n, grid.n)).copy()
    for psi in transitions.fields:
        if psi.shape != (grid.sites, grid.n, grid.n):
            raise ValueError(f"transition field shape {psi.shape} does not match grid")
        A += np.einsum("sji,sjk->sik", psi, psi)
    A = 0.5 * (A + A.transpose(0, 2, 1))
    return MetricField(grid, A, floor=1.0, p_int=np.inf,
                       descriptor={"kind": "transitions", "count": len(transitions.fields)})


def _smooth_random_field(grid, rng, shape, modes=2):
    """Real trigonometric polynomial fields with frequencies |k_i| <= modes."""
    X = grid.coordinates().reshape(grid.n, -1)
    ks = np.stack(np.meshgrid(*([np.arange(-modes, modes + 1)] * grid.n), indexing="ij")).reshape(grid.n, -1).T
    out = np.zeros((grid.sites,) + shape)
    for k in ks:
        wave = 2 * np.pi * (k @ X)
        a = rng.standard_normal(shape) / (1.0 + (k**2).sum())
        b = rng.standard_normal(shape) / (1.0 + (k**2).sum())
        out += np.cos(wave)[:, None, None] * a + np.sin(wave)[:, None, None] * b
    return out


_BUMP_RADIUS = 0.25


def random_rough_metric(grid, p_int, seed, floor=DEFAULT_FLOOR):
    """Heavy-tailed anisotropic field with ||A|| in L^p_int but not in L^(2 p_int).

    A(x) = floor Id + phi(x) S(x), where S is a smooth random SPD field with
    spectrum in [1/2, 3/2] and phi = (|x - c|^-beta - R^-beta)_+ is a bump of
    radius R = 1/4.  beta is chosen so that p_int beta < n < 2 p_int beta - 1
    (whenever n > 1), which keeps the p_int-integral finite while the
    2 p_int-integral of the lattice samples grows like N^(2 p_int beta - n).
    The centre c is a dyadic point j/4, a lattice site whenever 4 | N, so
    refinements keep sampling the same singularity; that site is clamped at
    distance 0.3 h.
    """
    if p_int <= 1:
        raise ValueError(f"p_int must exceed 1, got {p_int}")
    n = grid.n
    rng = np.random.default_rng(seed)
    center = rng.integers(0, 4, n) / 4.0
    beta = min(n / (p_int + 0.4), (n + 1.5) / (2 * p_int))
    r = np.maximum(torus_distance(grid, center).reshape(-1), 0.3 * grid.h)
    phi = np.maximum(r**-beta - _BUMP_RADIUS**-beta, 0.0)
    G = _smooth_random_field(grid, rng, (n, n))
    GG = np.einsum("sij,skj->sik", G, G)
    S = 0.5 * np.eye(n) + GG / np.linalg.eigvalsh(GG)[:, -1].max()
    A = floor * np.eye(n) + phi[:, None, None] * S
    desc = {"kind": "random", "p_int": float(p_int), "seed": int(seed), "floor": float(floor),
            "beta": beta, "center": center.tolist()}
    return MetricField(grid, A, floor=float(floor), p_int=float(p_int), descriptor=desc)


def rebuild_metric(descriptor, grid):
    """Re-sample a constructed metric on another grid from its descriptor."""
    kind = descriptor.get("kind")
    if kind == "flat":
        return flat_metric(grid)
    if kind == "scaled":
        return scaled_metric(grid, descriptor["c"])
    if kind == "conformal":
        return conformal_singular_metric(grid, descriptor["x0"], descriptor["beta"], descriptor["floor"],
                                         descriptor["p_int"])
    if kind == "random":
        return random_rough_metric(grid, descriptor["p_int"], descriptor["seed"], descriptor["floor"])
    if kind == "interpolated":
        return interpolate_metrics(rebuild_metric(descriptor["g0"], grid), rebuild_metric(descriptor["g1"], grid),
                                   descriptor["t"])
    raise ValueError(f"cannot rebuild a metric of kind {kind!r}")


# ------------------------------------------------------------ geometric mean


def _spd_power(A, t):
    w, V = np.linalg.eigh(A)
    w = np.maximum(w, EIG_FLOOR)
    return np.einsum("...ij,...j,...kj->...ik", V, w**t, V)


def _require_spd(A, name):
    A = np.asarray(A, float)
    if np.abs(A - np.swapaxes(A, -1, -2)).max(initial=0.0) > 1e-10 * max(1.0, np.abs(A).max()):
        raise MetricError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise MetricError(f"{name} is not positive definite")
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def geometric_mean(A0, A1, t):
    """A0^1/2 (A0^-1/2 A1 A0^-1/2)^t A0^1/2; works on stacks of matrices."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    A0 = _require_spd(A0, "A0")
    A1 = _require_spd(A1, "A1")
    if t == 0.0:
        return A0.copy()
    if t == 1.0:
        return A1.copy()
    R = _spd_power(A0, 0.5)
    Ri = _spd_power(A0, -0.5)
    inner = Ri @ A1 @ Ri
    inner = 0.5 * (inner + np.swapaxes(inner, -1, -2))
    out = R @ _spd_power(inner, t) @ R
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def interpolate_metrics(g0, g1, t):
    if g0.grid != g1.grid:
        raise ValueError("metrics live on different grids")
    A = geometric_mean(g0.A, g1.A, t)
    # the operator geometric mean is monotone, so the floors interpolate geometrically
    floor = g0.floor ** (1 - t) * g1.floor**t
    lmin = np.linalg.eigvalsh(A)[:, 0].min()
    floor = min(floor, lmin)
    if np.isinf(g0.p_int) and np.isinf(g1.p_int):
        p_int = np.inf
    else:
        p_int = 1.0 / ((1 - t) / g0.p_int + t / g1.p_int)
    desc = {"kind": "interpolated", "t": float(t), "g0": g0.descriptor, "g1": g1.descriptor}
    return MetricField(g0.grid, A, floor=float(floor), p_int=float(p_int), descriptor=desc)


# ------------------------------------------------------------ serialization

MAGIC = b"HLMETRIC"
_HEADER = struct.Struct("<8sIIdd")


def metric_to_bytes(metric):
    """Header (magic, n, N, floor B, p_int) then row-major per-site matrices, little-endian f64."""
    g = metric.grid
    head = _HEADER.pack(MAGIC, g.n, g.N, metric.floor, metric.p_int)
    return head + np.ascontiguousarray(metric.A, dtype="<f8").tobytes()


def metric_from_bytes(buf):
    magic, n, N, floor, p_int = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError("not a metric field file")
    grid = PeriodicGrid(n, N)
    A = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(grid.sites, n, n)
    return MetricField(grid, A.copy(), floor=floor, p_int=p_int, descriptor={"kind": "loaded"})


def metric_to_json(metric, max_sites=4096):
    g = metric.grid
    if g.sites > max_sites:
        raise ValueError(f"JSON export is for small grids (<= {max_sites} sites)")
    return json.dumps({
        "n": g.n, "N": g.N, "B": metric.floor,
        "p_int": None if np.isinf(metric.p_int) else metric.p_int,
        "descriptor": metric.descriptor,
        "A": metric.A.tolist(),
    })


def metric_from_json(text):
    d = json.loads(text)
    grid = PeriodicGrid(d["n"], d["N"])
    p_int = np.inf if d.get("p_int") is None else d["p_int"]
    return MetricField(grid, np.array(d["A"]), floor=d["B"], p_int=p_int, descriptor=d.get("descriptor", {}))
