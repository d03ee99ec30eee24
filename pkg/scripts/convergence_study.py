"""Grid refinement on the harmonic closed form: value error and weak residuals versus N."""
import argparse
import math

import numpy as np

from wassaction import ProblemSpec, random_measure
from wassaction.classical import minimize_classical
from wassaction.ensemble import closed_form_flow
from wassaction.eulerpoisson import euler_poisson_residual
from wassaction.fields import quadratic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=float, default=0.6)
    ap.add_argument("--x", type=float, default=1.0)
    ap.add_argument("--grids", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = ProblemSpec(p=2.0, V=quadratic(0.5))
    exact = -math.tan(args.t) * args.x**2 / 2
    mu = random_measure(10, 1, np.random.default_rng(args.seed))
    print(f"{'N':>5} {'value error':>12} {'continuity':>12} {'momentum':>12}")
    prev = None
    for N in args.grids:
        err = abs(minimize_classical([args.x], args.t, spec, N).value - exact)
        cont, mom = euler_poisson_residual(closed_form_flow(mu, args.t, N, spec), spec)
        line = f"{N:5d} {err:12.3e} {cont:12.3e} {mom:12.3e}"
        if prev is not None:
            line += "   ratios " + " ".join(f"{a / b:.2f}" for a, b in zip((err, cont, mom), prev))
        print(line)
        prev = (err, cont, mom)


if __name__ == "__main__":
    main()
