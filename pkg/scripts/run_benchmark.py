"""Full pipeline on both preset worlds; writes metrics and per-query records per world."""

import argparse
import time
from pathlib import Path

from fuseloc.evaluation import build_map_database, evaluate, export_results
from fuseloc.fusion import FusionConfig
from fuseloc.registration import IcpParams
from fuseloc.simworld import preset_worlds


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/benchmark")
    ap.add_argument("--survey-seed", type=int, default=0)
    ap.add_argument("--query-seed", type=int, default=1)
    ap.add_argument("--no-icp", action="store_true")
    args = ap.parse_args()

    for name, world in preset_worlds().items():
        t0 = time.perf_counter()
        survey, queries = world.survey(args.survey_seed), world.queries(args.query_seed)
        db = build_map_database(survey, world.lidar.projection)
        records, summary = evaluate(queries, db, FusionConfig(), None if args.no_icp else IcpParams())
        export_results(records, summary, Path(args.out) / name)
        print(f"== {name}: {len(survey)} map entries, {len(queries)} queries, {time.perf_counter() - t0:.0f} s")
        for method, m in summary.methods.items():
            print(f"  {method:6s} recall@1 {m.recall[0]:.3f}  recall@10 {m.recall[-1]:.3f}  "
                  f"mean {m.mean_error:6.2f} m  std {m.std_error:6.2f} m")
        print("  modes", {k: v for k, v in summary.mode_counts.items() if v})


if __name__ == "__main__":
    main()
