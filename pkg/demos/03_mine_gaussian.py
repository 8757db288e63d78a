"""MINE against bivariate Gaussians, where I = -0.5 ln(1 - rho^2)."""

import argparse

import numpy as np

from svib.mine import ProbeConfig, train_probe


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = ProbeConfig(batch_size=64, steps=args.steps, lr=1e-3, hidden=64)
    for rho in (0.0, 0.5, 0.8, 0.95):
        rng = np.random.default_rng(args.seed)
        x = rng.normal(size=(2 * args.n, 1))
        z = rho * x + np.sqrt(1 - rho**2) * rng.normal(size=x.shape)
        _, rec = train_probe(cfg, x[: args.n], z[: args.n], rng, eval_x=x[args.n :], eval_z=z[args.n :])
        truth = -0.5 * np.log(1 - rho**2) + 0.0
        print(f"rho={rho:<5} estimate {rec.mi_nats:.4f}  closed form {truth:.4f}")


if __name__ == "__main__":
    main()
