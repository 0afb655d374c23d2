"""Sweeps over the knobs that matter most: verification depth, ICP metric and AP density."""

import argparse
from dataclasses import replace

import numpy as np

from fuseloc import simworld as sw
from fuseloc.evaluation import build_map_database, evaluate
from fuseloc.fusion import FusionConfig
from fuseloc.registration import IcpParams


def _registration_error(records) -> float:
    errs = [r.registration_error for r in records if r.registration_error is not None and r.fused.hit_at(1)]
    return float(np.median(errs)) if errs else float("nan")


def sweep_registration(world: sw.World, stride: int) -> None:
    queries = world.queries(1)[::stride]
    db = build_map_database(world.survey(0), world.lidar.projection)
    for metric in ("point_to_plane", "point_to_point"):
        for top in (1, 3, 5):
            records, s = evaluate(queries, db, FusionConfig(), IcpParams(metric=metric), verify_top=top)
            print(f"  {metric:14s} verify_top {top}: fused recall@1 {s.recall_at('fused'):.3f}  "
                  f"median registration error {_registration_error(records):.3f} m")


def sweep_access_points(name: str, counts: list[int]) -> None:
    for n in counts:
        if name == "ltu_corridor":
            world = sw.ltu_corridor(params=replace(sw.CorridorParams(), n_aps=n))
        else:
            world = sw.mine_tunnel(params=replace(sw.TunnelParams(), n_aps=n))
        db = build_map_database(world.survey(0), world.lidar.projection)
        _, s = evaluate(world.queries(1), db)
        print(f"  {n:3d} APs: wifi recall@1 {s.recall_at('wifi'):.3f}  fused {s.recall_at('fused'):.3f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stride", type=int, default=3, help="use every n-th query in the registration sweep")
    ap.add_argument("--aps", type=int, nargs="+", default=[25, 35, 45, 60])
    args = ap.parse_args()
    for name, world in sw.preset_worlds().items():
        print(f"== {name}: registration")
        sweep_registration(world, args.stride)
        print(f"== {name}: access point density")
        sweep_access_points(name, args.aps)


if __name__ == "__main__":
    main()
