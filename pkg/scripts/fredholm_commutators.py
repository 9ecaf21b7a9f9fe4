"""|| [F, phi] || for the bounded transform across resolutions, plus the F^2 - 1 identities on T^2."""

import argparse
import sys

from hodgelab.commutator import TrigPolynomial
from hodgelab.dec import PeriodicGrid
from hodgelab.metrics import conformal_singular_metric, flat_metric
from hodgelab.spectral import assemble_signature_operator, fredholm_module_check


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--metric", choices=["flat", "conformal"], default="flat")
    args = ap.parse_args(argv)

    g = PeriodicGrid(2, args.N[0])
    met = flat_metric(g) if args.metric == "flat" else conformal_singular_metric(g, beta=0.4)
    phi = TrigPolynomial([[1, 0]], [1.0], [0.0])  # cos(2 pi x)
    r = fredholm_module_check(assemble_signature_operator(g, met), phi=phi, resolutions=args.N)
    print(f"F^2 - 1 vs -(1 + D^2)^-1: {r.identity_defect:.2e}")
    print(f"tau F + F tau:            {r.tau_defect:.2e}")
    print(f"printed F_p identity:     {r.paper_identity_defect:.2e}")
    for N, v in r.commutator_norms.items():
        print(f"N = {N:>3}: ||[F, phi]|| = {v:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
