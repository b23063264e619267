"""Variance of the pure Neumann estimator grows linearly with the horizon.

The walker never stops, so the horizon ``T`` is a free parameter: the mean
settles after a few time units while the variance keeps growing like
``C T``. A control variate built from an approximate solution removes most
of that growth without changing the mean.
"""
from neumann_mc.estimators import fit_slope, variance_scan_shared
from neumann_mc.euler import EulerConfig
from neumann_mc.experiments import CheckpointSampler
from neumann_mc.problems import builtin_problem


def main(n=20_000):
    prob = builtin_problem("neumann_poly")
    start = (-0.5, -0.5)
    exact = float(prob.exact(*start, prob.coeffs.params[0]))
    times = tuple(float(t) for t in range(2, 17, 2))
    cfg = EulerConfig(0.01, 0.01, 16.0)
    plain = variance_scan_shared(CheckpointSampler(start, prob.coeffs, cfg, times), times, n,
                                 seed=1)
    cv_coeffs = prob.coeffs.with_control(prob.control)
    cv = variance_scan_shared(CheckpointSampler(start, cv_coeffs, cfg, times), times, n, seed=1)
    print(f"exact value {exact:.5f}")
    print(f"{'T':>4} {'mean':>9} {'variance':>9} {'mean (cv)':>10} {'variance (cv)':>14}")
    for (t, a), (_, b) in zip(plain, cv):
        print(f"{t:4.0f} {a.mean[0]:9.5f} {a.variance[0]:9.4f} {b.mean[0]:10.5f} "
              f"{b.variance[0]:14.4f}")
    slope = fit_slope([(t, s.variance[0]) for t, s in plain if t >= 8])
    print(f"variance slope over T >= 8: {slope:.3f}")


if __name__ == "__main__":
    main()
