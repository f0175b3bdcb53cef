"""Empirical P(A_n^c) against n for simulated flows on the parabolic lattice."""

import argparse

from parflow import kolmogorov as kl
from parflow.plots import line_plot
from parflow.sde.coefficients import preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coeffs", default="identity;singular:0.1,2.5", help="presets separated by ;")
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--M", type=int, default=128)
    ap.add_argument("--kappa", type=float, default=3.0)
    ap.add_argument("--K", default="1.0", help="normalising constant or 'fitted'")
    ap.add_argument("--out", default="runs/kolmogorov_failure.svg")
    args = ap.parse_args()
    alpha = 0.5 * (1 - 4 / (2 * args.kappa))
    K = args.K if args.K == "fitted" else float(args.K)
    series = {}
    for spec in args.coeffs.split(";"):
        fl = kl.FlowLattice.simulate(preset(spec, 2, eps=0.25), args.depth, args.M, 0)
        rep = kl.flow_holder_check(fl, alpha, 2 * args.kappa, args.kappa, K=K)
        series[spec] = (list(range(args.depth + 1)), rep["p_fail"])
        print(f"{spec:24s} K_time={rep['K_time']:.3f}  p_fail={[round(v, 3) for v in rep['p_fail']]}")
    path = line_plot(args.out, series, "n", "P(A_n^c)", "failure rate against lattice level")
    print(f"plot {path}")


if __name__ == "__main__":
    main()
