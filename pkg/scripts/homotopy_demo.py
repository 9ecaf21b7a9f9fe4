"""Kernel dimension and leading singular values along the geometric-mean path flat -> rough on T^2."""

import argparse
import sys

from hodgelab.dec import PeriodicGrid
from hodgelab.exponents import exponents_quasiconformal, flat_ledger
from hodgelab.metrics import conformal_singular_metric, flat_metric, random_rough_metric
from hodgelab.spectral import homotopy_run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--steps", type=int, default=11)
    ap.add_argument("--target", choices=["conformal", "random"], default="conformal")
    ap.add_argument("--beta", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    g = PeriodicGrid(2, args.N)
    if args.target == "conformal":
        g1 = conformal_singular_metric(g, beta=args.beta)
    else:
        g1 = random_rough_metric(g, 3.0, args.seed)
    res = homotopy_run(g, flat_metric(g), g1, args.steps, flat_ledger(2), exponents_quasiconformal(2, g1.p_int))
    print(f"{'t':>5} {'n_g':>7} {'ker':>4}  mu_1 .. mu_4")
    for row in res.rows(4):
        t, ng, kd, *mu = row
        print(f"{t:>5.2f} {ng:>7.3f} {kd:>4}  " + " ".join(f"{v:.5f}" for v in mu))
    print(f"max adjacent jump in window j={res.window}: {res.max_jump:.4f}; verdict {res.verdict}")
    return 0 if res.verdict == "PASS" else 2


if __name__ == "__main__":
    sys.exit(main())
