"""SVGD moving 200 particles onto N(2, 1), with a progress table."""

import argparse

import numpy as np

from svib.svgd import median_bandwidth, run_svgd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--particles", type=int, default=200)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--step-size", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    mu, var = 2.0, 1.0
    z0 = np.random.default_rng(args.seed).normal(size=(args.particles, 1))

    def log_grad(z):
        return -(z - mu) / var

    def show(t, z):
        if t % 100 == 99 or t == 0:
            print(f"step {t + 1:4d}  mean {z.mean():+.4f}  var {z.var():.4f}  h {median_bandwidth(z):.4f}")

    z = run_svgd(z0, log_grad, args.steps, args.step_size, callback=show)
    print(f"final mean error {abs(z.mean() - mu) / mu:.2%}, variance error {abs(z.var() - var) / var:.2%}")

    # one particle has no repulsion, so SVGD is plain gradient ascent to the mode
    single = run_svgd(np.array([[5.0]]), log_grad, 2000, 0.1, decay=0.001)
    print(f"single particle ends at {single[0, 0]:.6f}")


if __name__ == "__main__":
    main()
