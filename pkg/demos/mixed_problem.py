"""Solve the mixed Dirichlet-Neumann problem with both walkers.

The exact solution is ``exp(a (x + y))``. The Euler walker reflects at the
Neumann sides and scores the boundary data through a smoothed local time;
walk on spheres jumps from sphere to sphere and replaces each Neumann hit by
a finite-difference step. Run with ``python demos/mixed_problem.py``.
"""
import numpy as np

from neumann_mc.estimators import monte_carlo
from neumann_mc.euler import EulerConfig, EulerSampler
from neumann_mc.problems import builtin_problem
from neumann_mc.wos import WosConfig, WosSampler, precompute_circle_table

ALPHAS = (1 / 3, 2 / 3, 1.0)
POINTS = {"M1": (0.8, 0.0), "M2": (0.0, 0.0), "M3": (-0.8, 0.0)}


def main(n=5000):
    prob = builtin_problem("mixed", ALPHAS)
    # a small circle table is enough for a demo; production runs cache a large one
    table = precompute_circle_table(1e-4, 50_000, 0, np.random.default_rng(1))
    walkers = {
        "euler": lambda p: EulerSampler(p, prob.coeffs, EulerConfig(0.01, 0.01, 200.0)),
        "wos fd1": lambda p: WosSampler(p, prob.coeffs, WosConfig(1e-6, 0.1, None, "fd1"), table),
        "wos oneside3": lambda p: WosSampler(p, prob.coeffs, WosConfig(1e-6, 0.1), table),
    }
    print(f"{'walker':>13} {'point':>5} {'alpha':>6} {'exact':>8} {'estimate':>9} {'se':>8}")
    for name, make in walkers.items():
        for label, p in POINTS.items():
            s = monte_carlo(make(p), n, seed=7)
            for r, a in enumerate(ALPHAS):
                print(f"{name:>13} {label:>5} {a:6.3f} {prob.exact_sets(*p)[r]:8.4f} "
                      f"{s.mean[r]:9.4f} {s.std_error[r]:8.4f}")
    print("The order-one fd1 scheme drifts away from the exact value as alpha grows;")
    print("the one-sided third-order scheme stays within a few standard errors.")


if __name__ == "__main__":
    main()
