"""Recall drop when a fraction of query range images is corrupted, averaged over seeds."""

import argparse

import numpy as np

from fuseloc.evaluation import build_map_database, degradation_experiment, evaluate
from fuseloc.fusion import FusionConfig
from fuseloc.simworld import preset_worlds


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.2, 0.4, 0.6])
    ap.add_argument("--variance", type=float, default=0.015)
    ap.add_argument("--threshold", type=float, default=0.01)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    cfg = FusionConfig(noise_variance_threshold=args.threshold)
    for name, world in preset_worlds().items():
        queries = world.queries(1)
        db = build_map_database(world.survey(0), world.lidar.projection)
        clean = evaluate(queries, db, cfg)
        print(f"== {name}")
        for frac in args.fractions:
            drops = {m: [] for m in ("lidar", "wifi", "fused")}
            for seed in range(args.seeds):
                res, _ = degradation_experiment(queries, db, cfg, frac, args.variance, seed, clean=clean)
                for m in drops:
                    drops[m].append(res.recall_drop(m))
            print(f"  fraction {frac:.1f}: " + "  ".join(
                f"{m} drop {np.mean(v):+.3f}" for m, v in drops.items()))


if __name__ == "__main__":
    main()
