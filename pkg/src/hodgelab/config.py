"""Experiment configuration: a single JSON document, validated before anything runs.

Validation errors carry the line of the offending key in the source text so
that a malformed file can be fixed without guessing.  The schema is described
in docs/formats.md.
"""

import hashlib
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .dec import PeriodicGrid
from .exponents import (
    ExponentLedger, exponents_lp_derivable, exponents_quasiconformal, flat_ledger, lp_threshold,
)
from .metrics import (
    TransitionData, _smooth_random_field, conformal_singular_metric, flat_metric, metric_from_bytes,
    metric_from_transitions, random_rough_metric, scaled_metric, torus_distance, DEFAULT_FLOOR,
)

SCHEMA_VERSION = 1
EXPERIMENTS = ("spectrum", "decay", "homotopy", "exponents", "verify", "signature")
METRIC_KINDS = ("flat", "conformal", "transitions", "random", "scaled", "file")
LEDGER_SOURCES = ("flat", "quasiconformal", "lp_derivable", "explicit")
SOLVER_MODES = ("auto", "fourier", "dense", "iterative")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class SolverOptions:
    mode: str = "auto"
    tol: float = 1e-10
    max_iter: int = 0  # 0: solver default


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int
    N: tuple
    metric: dict
    ledger: dict = field(default_factory=dict)
    homotopy: dict = field(default_factory=dict)
    fit_window: tuple = (0.2, 0.7)
    tolerance: float = 0.2
    count: object = "auto"
    solver: SolverOptions = SolverOptions()
    synthetic_oracle: bool = False
    seed: int = 0
    output: str = ""
    base_dir: str = "."

    def canonical(self):
        d = asdict(self)
        d.pop("base_dir")
        d.pop("output")
        d["N"] = list(self.N)
        d["fit_window"] = list(self.fit_window)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# ------------------------------------------------------------------ parsing


class _Locator:
    """Maps dotted key paths to source lines (first occurrence after the parent's line)."""

    def __init__(self, text):
        self.lines = text.splitlines()

    def line_of(self, path):
        start = 0
        found = 1
        for key in path:
            pat = re.compile(r'"%s"\s*:' % re.escape(str(key)))
            for i in range(start, len(self.lines)):
                if pat.search(self.lines[i]):
                    found = i + 1
                    start = i
                    break
            else:
                return found
        return found


def _fail(loc, path, message):
    raise ConfigError(message, loc.line_of(path))


def _require(d, key, loc, path=()):
    if key not in d:
        raise ConfigError(f"missing required key {'.'.join(path + (key,))!r}", loc.line_of(path) if path else 1)
    return d[key]


def _number(v, loc, path, lo=None, hi=None, integer=False):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = ok and float(v).is_integer()
    if not ok or not math.isfinite(float(v)):
        _fail(loc, path, f"{'.'.join(map(str, path))} must be a {'integer' if integer else 'number'}, got {v!r}")
    if lo is not None and v < lo or hi is not None and v > hi:
        _fail(loc, path, f"{'.'.join(map(str, path))} = {v} outside [{lo}, {hi}]")
    return int(v) if integer else float(v)


def parse_config(text, base_dir=".", seed=None):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    loc = _Locator(text)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1)
    known = {"version", "experiment", "n", "N", "metric", "ledger", "homotopy", "fit_window", "tolerance",
             "count", "solver", "synthetic_oracle", "seed", "output", "comment"}
    for key in raw:
        if key not in known:
            _fail(loc, (key,), f"unknown key {key!r}")
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        _fail(loc, ("version",), f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    exp = _require(raw, "experiment", loc)
    if exp not in EXPERIMENTS:
        _fail(loc, ("experiment",), f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    n = _number(_require(raw, "n", loc), loc, ("n",), 1, 4, integer=True)
    Nraw = raw.get("N", 16) if exp in ("exponents", "verify") else _require(raw, "N", loc)
    Ns = Nraw if isinstance(Nraw, list) else [Nraw]
    if not Ns:
        _fail(loc, ("N",), "N list is empty")
    Ns = tuple(_number(v, loc, ("N",), 4, 4096, integer=True) for v in Ns)
    if exp == "decay" and len(Ns) < 2 and not raw.get("synthetic_oracle", False):
        _fail(loc, ("N",), "decay needs at least two resolutions")

    metric = raw.get("metric", {"kind": "flat"})
    _validate_metric(metric, loc, ("metric",), n, base_dir)
    ledger = raw.get("ledger", {})
    if ledger:
        _validate_ledger(ledger, loc, ("ledger",))
    hom = raw.get("homotopy", {})
    if exp == "homotopy":
        if not isinstance(hom, dict):
            _fail(loc, ("homotopy",), "homotopy must be an object")
        steps = _number(_require(hom, "steps", loc, ("homotopy",)), loc, ("homotopy", "steps"), 1, 1000,
                        integer=True)
        m1 = _require(hom, "metric1", loc, ("homotopy",))
        _validate_metric(m1, loc, ("homotopy", "metric1"), n, base_dir)
        if "ledger1" in hom:
            _validate_ledger(hom["ledger1"], loc, ("homotopy", "ledger1"))
        hom = dict(hom, steps=steps)
    win = raw.get("fit_window", [0.2, 0.7])
    if not (isinstance(win, list) and len(win) == 2):
        _fail(loc, ("fit_window",), "fit_window must be a two-element list")
    win = tuple(_number(v, loc, ("fit_window",), 0, 1) for v in win)
    if not win[0] < win[1]:
        _fail(loc, ("fit_window",), "fit_window must be increasing")
    tol = _number(raw.get("tolerance", 0.2), loc, ("tolerance",), 0, 10)
    count = raw.get("count", "auto")
    if count != "auto":
        count = _number(count, loc, ("count",), 1, None, integer=True)
    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        _fail(loc, ("solver",), "solver must be an object")
    mode = solver.get("mode", "auto")
    if mode not in SOLVER_MODES:
        _fail(loc, ("solver", "mode"), f"solver.mode must be one of {', '.join(SOLVER_MODES)}; got {mode!r}")
    stol = _number(solver.get("tol", 1e-10), loc, ("solver", "tol"), 0, 1)
    mit = _number(solver.get("max_iter", 0), loc, ("solver", "max_iter"), 0, None, integer=True)
    synth = raw.get("synthetic_oracle", False)
    if not isinstance(synth, bool):
        _fail(loc, ("synthetic_oracle",), "synthetic_oracle must be true or false")
    cfg_seed = _number(raw.get("seed", 0), loc, ("seed",), 0, 2**64 - 1, integer=True)
    out = raw.get("output", "")
    if not isinstance(out, str):
        _fail(loc, ("output",), "output must be a string path")
    return ExperimentConfig(
        experiment=exp, n=n, N=Ns, metric=metric, ledger=ledger, homotopy=hom, fit_window=win, tolerance=tol,
        count=count, solver=SolverOptions(mode, stol, mit), synthetic_oracle=synth,
        seed=int(seed if seed is not None else cfg_seed), output=out, base_dir=base_dir)


def load_config(path, seed=None):
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path!r} does not exist")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)), seed=seed)


def _validate_metric(spec, loc, path, n, base_dir):
    if not isinstance(spec, dict):
        _fail(loc, path, f"{'.'.join(path)} must be an object")
    kind = _require(spec, "kind", loc, path)
    if kind not in METRIC_KINDS:
        _fail(loc, path + ("kind",), f"metric kind must be one of {', '.join(METRIC_KINDS)}; got {kind!r}")
    if "B" in spec:
        _number(spec["B"], loc, path + ("B",), 1, None)
    if kind == "conformal":
        beta = _number(spec.get("beta", 0.4), loc, path + ("beta",), 0, None)
        if "x0" in spec:
            x0 = spec["x0"]
            if not (isinstance(x0, list) and len(x0) == n):
                _fail(loc, path + ("x0",), f"x0 must be a list of {n} coordinates")
            for v in x0:
                _number(v, loc, path + ("x0",))
        if "p_int" in spec:
            p = _number(spec["p_int"], loc, path + ("p_int",), 1, None)
            if beta * p >= n:
                _fail(loc, path + ("p_int",), f"beta * p_int = {beta * p:g} >= n = {n}: profile not in L^p_int")
    elif kind == "random":
        _number(_require(spec, "p_int", loc, path), loc, path + ("p_int",), 1, None)
        if "seed" in spec:
            _number(spec["seed"], loc, path + ("seed",), 0, 2**64 - 1, integer=True)
    elif kind == "scaled":
        _number(_require(spec, "c", loc, path), loc, path + ("c",), 0, None)
    elif kind == "transitions":
        _number(spec.get("count", 2), loc, path + ("count",), 0, 64, integer=True)
        _number(spec.get("scale", 1.0), loc, path + ("scale",), 0, None)
    elif kind == "file":
        f = _require(spec, "path", loc, path)
        if not isinstance(f, str) or not os.path.isfile(os.path.join(base_dir, f)):
            _fail(loc, path + ("path",), f"metric file {f!r} does not exist")


def _validate_ledger(spec, loc, path):
    if not isinstance(spec, dict):
        _fail(loc, path, f"{'.'.join(path)} must be an object")
    src = _require(spec, "source", loc, path)
    if src not in LEDGER_SOURCES:
        _fail(loc, path + ("source",), f"ledger source must be one of {', '.join(LEDGER_SOURCES)}; got {src!r}")
    if src in ("quasiconformal", "lp_derivable"):
        _number(_require(spec, "p", loc, path), loc, path + ("p",), 1, None)
    if src == "explicit":
        for key in ("p_m", "q_m", "p_m1", "q_m1"):
            _number(_require(spec, key, loc, path), loc, path + (key,))


# --------------------------------------------------------------- builders


def build_metric(spec, grid, seed=0, base_dir="."):
    kind = spec["kind"]
    floor = float(spec.get("B", DEFAULT_FLOOR))
    if kind == "flat":
        return flat_metric(grid)
    if kind == "scaled":
        return scaled_metric(grid, float(spec["c"]))
    if kind == "conformal":
        return conformal_singular_metric(grid, spec.get("x0"), float(spec.get("beta", 0.4)), floor,
                                         spec.get("p_int"))
    if kind == "random":
        return random_rough_metric(grid, float(spec["p_int"]), int(spec.get("seed", seed)), floor)
    if kind == "transitions":
        return metric_from_transitions(grid, synthetic_transitions(grid, int(spec.get("count", 2)),
                                                                   float(spec.get("scale", 1.0)),
                                                                   int(spec.get("seed", seed))))
    if kind == "file":
        with open(os.path.join(base_dir, spec["path"]), "rb") as fh:
            met = metric_from_bytes(fh.read())
        if met.grid != grid:
            raise ConfigError(f"metric file is sampled on n={met.grid.n}, N={met.grid.N}, not n={grid.n}, N={grid.N}")
        return met
    raise ConfigError(f"unknown metric kind {kind!r}")


def synthetic_transitions(grid, count, scale, seed):
    """Smooth matrix fields psi_j supported on random balls of radius 1/3."""
    rng = np.random.default_rng(seed)
    fields, masks = [], []
    for _ in range(count):
        centre = rng.random(grid.n)
        masks.append(torus_distance(grid, centre).reshape(-1) < 1.0 / 3.0)
        fields.append(scale * _smooth_random_field(grid, rng, (grid.n, grid.n), modes=1))
    return TransitionData(tuple(fields), tuple(masks))


def build_ledger(spec, n, metric_spec=None):
    """Ledger from an explicit spec, or a default derived from the metric kind."""
    if not spec:
        kind = (metric_spec or {}).get("kind", "flat")
        if kind in ("flat", "scaled"):
            return flat_ledger(n)
        p = (metric_spec or {}).get("p_int")
        if kind == "conformal" and p is None:
            beta = float(metric_spec.get("beta", 0.4))
            p = math.inf if beta == 0 else n / beta - 0.05
        if p is None or math.isinf(p):
            return flat_ledger(n)
        if p > lp_threshold(n):
            return exponents_lp_derivable(n, p)
        return exponents_quasiconformal(n, p)
    src = spec["source"]
    if src == "flat":
        return flat_ledger(n)
    if src == "quasiconformal":
        return exponents_quasiconformal(n, float(spec["p"]))
    if src == "lp_derivable":
        return exponents_lp_derivable(n, float(spec["p"]))
    return ExponentLedger(n, float(spec["p_m"]), float(spec["q_m"]), float(spec["p_m1"]), float(spec["q_m1"]),
                          B=float(spec.get("B", DEFAULT_FLOOR)), source="explicit")


def grid_for(cfg, N):
    return PeriodicGrid(cfg.n, N)
