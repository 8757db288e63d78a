"""Train one gridworld run in-process and print the learning curve.

Same thing as ``svib train``, but keeps the metrics in memory so the
curve can be inspected without a run directory.
"""

import argparse
from pathlib import Path

from svib.config import load_config
from svib.trainer import train, updates_to_threshold

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "gridworld_svib.json"))
    ap.add_argument("--variant", default="svib_uniform")
    ap.add_argument("--updates", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = load_config(args.config, [f"variant={args.variant}", f"seed={args.seed}",
                                    f"optim.total_updates={args.updates}", "probe.interval=100"])

    def progress(state, rec):
        if state.update % 50 == 0:
            mr = rec["mean_return"]
            print(f"update {state.update:5d}  episodes {rec['episodes']:5d}  mean_return {'n/a' if mr is None else f'{mr:.3f}'}")

    res = train(cfg, progress=progress)
    for r in res.mi_records:
        print(f"I(X;Z) at update {r.update}: {r.mi_nats:.3f} nats")
    print("updates to mean return 0.9:", updates_to_threshold(res.metrics, 0.9))


if __name__ == "__main__":
    main()
