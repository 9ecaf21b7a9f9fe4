"""lab: command-line front end.

    lab <spectrum|decay|homotopy|exponents|signature|verify> --config PATH [--out DIR] [--json] [--seed U64]

Exit codes: 0 success, 1 operational error, 2 verdict failure.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, build_ledger, build_metric, grid_for, load_config
from .errors import InadmissibleLedger, LabError
from .exponents import exponents_lp_derivable, exponents_quasiconformal, lp_threshold
from .spectral import (
    assemble_signature_operator, atomic_write, decay_fit, homotopy_run, signature_pairing,
    singular_values, synthetic_report,
)
from .verify import run_suite, summary

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    seed: int
    wall_clock: float = 0.0
    artifacts: list = field(default_factory=list)  # [{"path", "sha256"}], in completion order
    verdicts: dict = field(default_factory=dict)
    status: str = "complete"
    config: str = ""  # canonical config; its sha256 is config_hash
    schema: int = SCHEMA_VERSION

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class _Writer:
    """Atomic artifact writes, recorded in the manifest as they complete."""

    def __init__(self, out_dir, manifest):
        self.out_dir = out_dir
        self.manifest = manifest

    def write(self, name, text):
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, name)
        atomic_write(path, text)
        self.manifest.artifacts.append({"path": name, "sha256": hashlib.sha256(text.encode()).hexdigest()})

    def finish(self, t0):
        self.manifest.wall_clock = round(time.perf_counter() - t0, 6)
        os.makedirs(self.out_dir, exist_ok=True)
        atomic_write(os.path.join(self.out_dir, "manifest.json"), self.manifest.to_json())


def _executor():
    threads = int(os.environ.get("LAB_THREADS", "1") or 1)
    return ThreadPoolExecutor(max_workers=max(1, threads)) if threads > 1 else None


def _count(cfg, grid):
    if cfg.count == "auto":
        return max(1, grid.dof(grid.m) // 4)
    return min(int(cfg.count), grid.dof(grid.m))


def _solve(cfg, grid, metric, n_g):
    asm = assemble_signature_operator(grid, metric)
    return singular_values(asm, count=_count(cfg, grid), mode=cfg.solver.mode, n_g=n_g, tol=cfg.solver.tol,
                           max_iter=cfg.solver.max_iter or None)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------- commands


def cmd_spectrum(cfg, writer, args):
    N = cfg.N[0]
    grid = grid_for(cfg, N)
    metric = build_metric(cfg.metric, grid, cfg.seed, cfg.base_dir)
    ledger = build_ledger(cfg.ledger, cfg.n, cfg.metric)
    rep = _solve(cfg, grid, metric, ledger.n_g)
    expected = comb(cfg.n, grid.m)
    rep.verdicts["kernel_dim"] = "PASS" if rep.kernel_dim == expected else "FAIL"
    if len(rep.fit_values()) >= 50:
        decay_fit(rep, cfg.fit_window, cfg.tolerance)
    writer.write("report.json", rep.to_json())
    writer.write("spectrum.csv", rep.to_csv())
    _say(args, {"kernel_dim": rep.kernel_dim, "expected": expected, "gap_ratio": _clean(rep.gap_ratio),
                "slope": _clean(rep.slope), "n_g": ledger.n_g, "verdicts": rep.verdicts})
    return rep.verdicts


def cmd_decay(cfg, writer, args):
    ledger = build_ledger(cfg.ledger, cfg.n, cfg.metric)
    flat = cfg.metric.get("kind") in ("flat", "scaled")

    def job(N):
        if cfg.synthetic_oracle:
            count = 1000 if cfg.count == "auto" else int(cfg.count)
            return N, synthetic_report(np.arange(1, count + 1) ** (-1.0 / ledger.n_g), ledger.n_g, cfg.n, N)
        grid = grid_for(cfg, N)
        return N, _solve(cfg, grid, build_metric(cfg.metric, grid, cfg.seed, cfg.base_dir), ledger.n_g)

    rows, verdicts = [], {}
    ex = _executor()
    # map yields in N order; each CSV lands as soon as its resolution is done
    for N, rep in (ex.map(job, cfg.N) if ex else map(job, cfg.N)):
        writer.write(f"decay_N{N}.csv", rep.to_csv())
        fit = decay_fit(rep, cfg.fit_window, cfg.tolerance)
        row = {"N": N, "slope": fit.slope, "band": fit.band, "j_lo": fit.j_lo, "j_hi": fit.j_hi,
               "bound": fit.predicted + fit.tolerance, "verdict": "PASS" if fit.passed else "FAIL"}
        if cfg.synthetic_oracle:
            row["oracle_error"] = abs(fit.slope - fit.predicted)
            row["verdict"] = "PASS" if fit.passed and row["oracle_error"] < 1e-6 else "FAIL"
        if flat and not cfg.synthetic_oracle:
            row["flat_rate"] = "PASS" if abs(fit.slope - fit.predicted) <= 0.15 else "FAIL"
        rows.append(row)
        verdicts[f"N={N}"] = row["verdict"]
        if "flat_rate" in row:
            verdicts[f"N={N} flat rate"] = row["flat_rate"]
    refinement = [{"from": a["N"], "to": b["N"], "slope_change": b["slope"] - a["slope"]}
                  for a, b in zip(rows, rows[1:])]
    summ = {"n": cfg.n, "metric": cfg.metric, "ledger": ledger.as_dict(), "n_g": ledger.n_g,
            "predicted_slope": -1.0 / ledger.n_g, "tolerance": cfg.tolerance, "rows": rows,
            "refinement": refinement, "verdicts": verdicts}
    writer.write("summary.json", _dump(_jsonable(summ)))
    _say(args, {"n_g": ledger.n_g, "rows": rows})
    return verdicts


def cmd_homotopy(cfg, writer, args):
    N = cfg.N[0]
    grid = grid_for(cfg, N)
    g0 = build_metric(cfg.metric, grid, cfg.seed, cfg.base_dir)
    g1 = build_metric(cfg.homotopy["metric1"], grid, cfg.seed, cfg.base_dir)
    L0 = build_ledger(cfg.ledger, cfg.n, cfg.metric)
    L1 = build_ledger(cfg.homotopy.get("ledger1", {}), cfg.n, cfg.homotopy["metric1"])
    ex = _executor()
    res = homotopy_run(grid, g0, g1, cfg.homotopy["steps"], L0, L1, count=_count(cfg, grid), mode=cfg.solver.mode,
                       window=cfg.fit_window, executor=ex)
    k = int(cfg.homotopy.get("columns", 10))
    lines = ["t,n_g_t,kernel_dim," + ",".join(f"mu_{j}" for j in range(1, k + 1))]
    for row in res.rows(k):
        lines.append(",".join(_fmt(v) for v in row))
    writer.write("path.csv", "\n".join(lines) + "\n")
    verdict = {"verdict": res.verdict, "kernel_dims": res.kernel_dims, "max_jump": res.max_jump,
               "jump_window": list(res.window), "offending_t": _clean(res.offending_t), "ts": res.ts,
               "n_g": res.n_g}
    writer.write("verdict.json", _dump(verdict))
    _say(args, verdict)
    return {"homotopy": res.verdict}


def cmd_signature(cfg, writer, args):
    grid = grid_for(cfg, cfg.N[0])
    metric = build_metric(cfg.metric, grid, cfg.seed, cfg.base_dir)
    sp_ = signature_pairing(assemble_signature_operator(grid, metric))
    out = {"n": cfg.n, "N": grid.N, "signature": sp_.signature, "positive": sp_.positive,
           "negative": sp_.negative, "kernel_dim": sp_.kernel_dim,
           "pairing_real": np.real(sp_.matrix).tolist(), "pairing_imag": np.imag(sp_.matrix).tolist()}
    writer.write("signature.json", _dump(out))
    _say(args, {k: out[k] for k in ("signature", "positive", "negative", "kernel_dim")})
    return {"signature": "PASS" if sp_.signature == 0 else "FAIL"}


def exponents_table(kind, n, p):
    """Ledger for (kind, n, p) or raise InadmissibleLedger with the violated inequality."""
    if kind == "lp":
        return exponents_lp_derivable(n, p)
    if kind == "qc":
        return exponents_quasiconformal(n, p)
    raise ValueError(f"unknown structure kind {kind!r}")


def _exponents_payload(kind, n, p, led):
    thr = lp_threshold(n) if kind == "lp" else n
    d = led.as_dict()
    d.update({"kind": kind, "p": p, "threshold": thr, "threshold_distance": p - thr, "admissible": True})
    return d


def _print_exponents(d):
    rows = [("kind", d["kind"]), ("n", d["n"]), ("p", d["p"]), ("m", d["m"]), ("p_m", d["p_m"]),
            ("q_m", d["q_m"]), ("p_m+1", d["p_m1"]), ("q_m+1", d["q_m1"])]
    rows += [(f"(p_{k}, q_{k})", v) for k, v in d["extra"].items()]
    rows += [("n(g)", d["n_g"]), ("margin 1/p_m + 1/n - 1/q_m+1", d["margin"]),
             ("threshold", d["threshold"]), ("threshold distance", d["threshold_distance"]),
             ("admissible", d["admissible"])]
    for k, v in rows:
        print(f"{k:<32} {f'{v:.6g}' if isinstance(v, float) else v}")


def cmd_exponents(cfg, writer, args):
    if args.kind:
        kind, n, p = args.kind, args.n, args.p
        if n is None or p is None:
            raise ConfigError("exponents needs --n and --p with --kind")
    else:
        src = cfg.ledger.get("source")
        kind = {"lp_derivable": "lp", "quasiconformal": "qc"}.get(src)
        if kind is None:
            raise ConfigError("exponents needs ledger.source lp_derivable or quasiconformal (or --kind)")
        n, p = cfg.n, float(cfg.ledger["p"])
    try:
        led = exponents_table(kind, n, p)
    except InadmissibleLedger as exc:
        print(str(exc))
        writer.write("exponents.json", _dump({"kind": kind, "n": n, "p": p, "admissible": False,
                                              "violation": str(exc)}))
        return {"admissible": "FAIL"}
    d = _exponents_payload(kind, n, p, led)
    if args.json:
        print(json.dumps(_jsonable(d), sort_keys=True))
    else:
        _print_exponents(d)
    writer.write("exponents.json", _dump(_jsonable(d)))
    return {"admissible": "PASS"}


def cmd_verify(cfg, writer, args):
    checks = run_suite(perturb_star=args.perturb_star)
    summ = summary(checks)
    if args.json:
        print(json.dumps(summ, sort_keys=True))
    else:
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<52} {c.value:.3e} (tol {c.tol:.0e})")
        print(f"{sum(c.passed for c in checks)}/{len(checks)} passed")
    writer.write("verify.json", _dump(summ))
    return {"verify": "PASS" if summ["passed"] else "FAIL"}


COMMANDS = {"spectrum": cmd_spectrum, "decay": cmd_decay, "homotopy": cmd_homotopy, "signature": cmd_signature,
            "exponents": cmd_exponents, "verify": cmd_verify}


# ----------------------------------------------------------------- helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return f"{float(v):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _clean(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _say(args, payload):
    if args.json:
        print(json.dumps(_jsonable(payload), sort_keys=True))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def build_parser():
    p = argparse.ArgumentParser(prog="lab", description="Signature-operator laboratory on lattice tori.")
    p.add_argument("--version", action="version", version=f"lab {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--out", help="output directory (default: config 'output' or ./lab-out)")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.add_argument("--seed", type=int, help="overrides the config seed (u64)")
    p.add_argument("--kind", choices=["lp", "qc"], help="exponents: structure kind")
    p.add_argument("--n", type=int, help="exponents: dimension")
    p.add_argument("--p", type=float, help="exponents: integrability exponent")
    p.add_argument("--perturb-star", action="store_true", help="verify: inject a fault into the star")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_ERROR
    t0 = time.perf_counter()
    writer = None
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config, seed=args.seed)
            if cfg.experiment != args.command:
                raise ConfigError(f"config describes a {cfg.experiment!r} experiment, not {args.command!r}")
        elif args.command not in ("exponents", "verify"):
            raise ConfigError(f"{args.command} needs --config")
        out_dir = args.out or (cfg and cfg.output and os.path.join(cfg.base_dir, cfg.output)) or "lab-out"
        manifest = RunManifest(args.command, cfg.config_hash() if cfg else _flags_hash(args), __version__,
                               cfg.seed if cfg else (args.seed or 0), config=cfg.canonical() if cfg else "")
        writer = _Writer(out_dir, manifest)
        verdicts = COMMANDS[args.command](cfg, writer, args)
    except (ConfigError, LabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if writer is not None and writer.manifest.artifacts:
            writer.manifest.status = "aborted"
            writer.finish(t0)
        return EXIT_ERROR
    manifest.verdicts = verdicts
    writer.finish(t0)
    failed = any(v not in ("PASS",) for v in verdicts.values())
    return EXIT_FAIL if failed else EXIT_OK


def _flags_hash(args):
    d = {"command": args.command, "kind": args.kind, "n": args.n, "p": args.p, "perturb_star": args.perturb_star}
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


if __name__ == "__main__":
    sys.exit(main())
