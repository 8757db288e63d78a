"""Compare svib_uniform with the two A2C baselines over several seeds.

Takes a few minutes on one core with the defaults. Prints, per variant,
the updates needed to reach mean return 0.9 and the MI trace summary.
"""

import argparse
import json
import time
from pathlib import Path

from svib.experiments import head_to_head, median_ec, median_updates

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "gridworld_head_to_head.json"))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--runs-dir", default=None, help="keep run directories here")
    args = ap.parse_args()

    base = json.loads(Path(args.config).read_text())
    t0 = time.perf_counter()
    runs = head_to_head(base, seeds=range(args.seeds), run_root=Path(args.runs_dir) if args.runs_dir else None)
    for variant, rs in runs.items():
        ec = median_ec(rs)
        print(f"{variant:13s} median updates {median_updates(rs):6.1f}  per seed {[r['updates_to_threshold'] for r in rs]}")
        print(f"{'':13s} MI peak {ec['peak_value']:.3f} at {ec['peak_step']:.0f}, final {ec['final_value']:.3f}")
    print(f"{(time.perf_counter() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
