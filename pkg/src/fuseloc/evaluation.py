"""Offline map building, online evaluation, the degradation experiment and result export.

Every query goes through three methods on the same inputs: LiDAR retrieval
alone, Wi-Fi retrieval alone, and the gated fusion of both. A candidate is a
hit when its map pose lies within 3 m of the query's true position.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from fuseloc.descriptor import (
    CandidateList,
    build_index,
    descriptors_to_jsonl,
    extract_descriptors,
    load_descriptors,
)
from fuseloc.errors import LocalizationError, LocalizationUnavailableError, SparseImageError
from fuseloc.fusion import FusionConfig, FusionMode, select_candidates
from fuseloc.geometry import (
    PointCloud,
    Pose,
    Trajectory,
    load_cloud,
    load_trajectory,
    pose_distance,
    save_cloud,
    trajectory_to_jsonl,
)
from fuseloc.range_image import ProjectionConfig, RangeImage, inject_gaussian_noise, project_spherical
from fuseloc.registration import (
    DEFAULT_VERIFY_TOP,
    IcpParams,
    MapDatabase,
    lidar_candidates,
    lidar_noise,
    verify_candidates,
    wifi_candidates,
    wifi_gate,
)
from fuseloc.simworld import SurveySample
from fuseloc.wifi import (
    DEFAULT_N,
    AccessPointReading,
    WifiScan,
    database_from_records,
    load_records,
    normalize_scan,
    records_to_jsonl,
    survey_record,
)

HIT_RADIUS_M = 3.0
METHODS = ("lidar", "wifi", "fused")
METRICS_VERSION = 1


# --- survey and map storage ------------------------------------------------


def _scan_name(k: int) -> str:
    return f"{k:05d}.flpc"


def save_survey(out_dir: str | Path, samples: Sequence[SurveySample]) -> None:
    """Write a survey as trajectory.jsonl, wifi.jsonl and one scan file per sample."""
    if not samples:
        raise ValueError("survey is empty")
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    traj = Trajectory(tuple(s.pose for s in samples), [s.t for s in samples])
    (out / "trajectory.jsonl").write_text(trajectory_to_jsonl(traj))
    (out / "wifi.jsonl").write_text(records_to_jsonl([survey_record(s.k, s.pose, s.wifi) for s in samples]))
    for i, s in enumerate(samples):
        save_cloud(out / "scans" / _scan_name(i), s.cloud)


def load_survey(in_dir: str | Path) -> list[SurveySample]:
    src = Path(in_dir)
    traj = load_trajectory(src / "trajectory.jsonl")
    records = load_records(src / "wifi.jsonl")
    if len(records) != len(traj):
        raise ValueError(f"{len(records)} Wi-Fi records for {len(traj)} poses")
    out = []
    for i, (pose, t, rec) in enumerate(zip(traj.poses, traj.timestamps, records)):
        cloud = load_cloud(src / "scans" / _scan_name(i))
        aps = tuple(AccessPointReading.from_dict(a) for a in rec["aps"])
        out.append(SurveySample(i, float(t), pose, cloud, aps))
    return out


def build_map_database(
    samples: Sequence[SurveySample], projection: ProjectionConfig, n: int = DEFAULT_N
) -> MapDatabase:
    """In-memory map database from survey samples."""
    if not samples:
        raise ValueError("survey is empty")
    traj = Trajectory(tuple(s.pose for s in samples), [s.t for s in samples])
    pairs = [extract_descriptors(project_spherical(s.cloud, projection)) for s in samples]
    fps = database_from_records([survey_record(s.k, s.pose, s.wifi) for s in samples], n)
    return MapDatabase(traj, projection, build_index(pairs), fps, tuple(s.cloud for s in samples))


def build_map(
    samples: Sequence[SurveySample], out_dir: str | Path, projection: ProjectionConfig, n: int = DEFAULT_N
) -> MapDatabase:
    """Build the map database and write it; identical input gives byte-identical files."""
    db = build_map_database(samples, projection, n)
    out = Path(out_dir)
    save_survey(out, samples)
    pairs = [p for _, p in db.descriptors.entries]
    (out / "descriptors.jsonl").write_text(descriptors_to_jsonl(pairs))
    meta = {"v": 1, "entries": len(samples), "n": n, "projection": asdict(projection)}
    (out / "map.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return db


def load_map(
    in_dir: str | Path, *, with_wifi: bool = True, with_scans: bool = True, with_descriptors: bool = True
) -> MapDatabase:
    """Load a map written by build_map; any store can be left out."""
    src = Path(in_dir)
    meta = json.loads((src / "map.json").read_text())
    projection = ProjectionConfig(**meta["projection"])
    traj = load_trajectory(src / "trajectory.jsonl")
    descriptors = build_index(load_descriptors(src / "descriptors.jsonl")) if with_descriptors else None
    fps = database_from_records(load_records(src / "wifi.jsonl"), meta["n"]) if with_wifi else None
    scans = None
    if with_scans:
        scans = tuple(load_cloud(src / "scans" / _scan_name(i)) for i in range(len(traj)))
    return MapDatabase(traj, projection, descriptors, fps, scans)


# --- per-query records -----------------------------------------------------


@dataclass(frozen=True)
class MethodOutcome:
    """Ranked candidates of one method and their distances to the true position."""

    candidates: tuple[int, ...] = ()
    distances: tuple[float, ...] = ()
    predicted: Pose | None = None
    failure: str | None = None

    @property
    def top1_error(self) -> float:
        return self.distances[0] if self.distances else math.nan

    def hit_at(self, n: int) -> bool:
        return any(d <= HIT_RADIUS_M for d in self.distances[:n])


@dataclass(frozen=True)
class EvaluationRecord:
    query: int
    truth: Pose
    lidar: MethodOutcome
    wifi: MethodOutcome
    fused: MethodOutcome
    mode: str | None = None
    transform: tuple[tuple[float, ...], ...] | None = None
    fitness: float | None = None
    registration_error: float | None = None

    def method(self, name: str) -> MethodOutcome:
        return getattr(self, name)


def _outcome(cands: CandidateList, truth: Pose, db: MapDatabase, failure: str | None = None) -> MethodOutcome:
    if not cands:
        return MethodOutcome(failure=failure or "no candidates")
    poses = [db.trajectory[i] for i in cands.indices]
    return MethodOutcome(cands.indices, tuple(pose_distance(p, truth) for p in poses), poses[0])


def evaluate_query(
    k: int,
    truth: Pose,
    scan: PointCloud | None,
    wifi: WifiScan | None,
    db: MapDatabase,
    cfg: FusionConfig = FusionConfig(),
    icp: IcpParams | None = None,
    image: RangeImage | None = None,
    verify_top: int = DEFAULT_VERIFY_TOP,
) -> EvaluationRecord:
    """All three methods on one query. Pipeline errors end up in the record, never raised.

    With ``icp`` set, the best-registered of the first ``verify_top`` fused
    candidates moves to the front of the fused list.
    """
    if image is None and scan is not None and len(scan):
        image = project_spherical(scan, db.projection)
    if image is not None:
        k_l, pair = lidar_candidates(image, db, cfg.top_k)
        noise = lidar_noise(image)
    else:
        k_l, pair, noise = CandidateList(), None, math.inf
    k_w = wifi_candidates(wifi, db, cfg.top_k)

    lidar = _outcome(k_l, truth, db, None if db.descriptors is not None else "no descriptor store")
    wifi_out = _outcome(k_w, truth, db, None if db.fingerprints is not None else "no fingerprint store")
    try:
        fusion = select_candidates(k_l, k_w, noise, wifi_gate(wifi, db, cfg), cfg)
    except LocalizationUnavailableError as exc:
        return EvaluationRecord(k, truth, lidar, wifi_out, MethodOutcome(failure=str(exc)))
    cands = fusion.candidates
    transform = fitness = reg_err = None
    err = None
    if icp is not None and scan is not None and db.scans is not None:
        chosen, _, reg, err = verify_candidates(scan, pair, cands.indices[:verify_top], db, icp)
        pos = cands.indices.index(chosen)
        order = [pos] + [i for i in range(len(cands)) if i != pos]
        cands = CandidateList(tuple(cands.indices[i] for i in order), tuple(cands.scores[i] for i in order))
        if reg is not None:
            transform = tuple(tuple(row) for row in reg.transform.matrix.tolist())
            fitness = reg.fitness
            reg_err = pose_distance(reg.transform.to_pose(), truth)
    fused = _outcome(cands, truth, db)
    if err is not None:
        fused = MethodOutcome(fused.candidates, fused.distances, fused.predicted, err)
    return EvaluationRecord(k, truth, lidar, wifi_out, fused, fusion.mode.value, transform, fitness, reg_err)


# --- summary metrics -------------------------------------------------------


@dataclass(frozen=True)
class MethodMetrics:
    recall: tuple[float, ...]
    mean_error: float
    std_error: float
    n_queries: int
    n_failed: int


@dataclass(frozen=True)
class MetricsSummary:
    methods: dict[str, MethodMetrics]
    mode_counts: dict[str, int] = field(default_factory=dict)
    top_n: int = 10

    def recall_at(self, method: str, n: int = 1) -> float:
        return self.methods[method].recall[n - 1]

    def to_dict(self) -> dict:
        return {
            "v": METRICS_VERSION,
            "top_n": self.top_n,
            "methods": {k: {**asdict(m), "recall": list(m.recall)} for k, m in self.methods.items()},
            "mode_counts": dict(self.mode_counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsSummary":
        if d.get("v") != METRICS_VERSION:
            raise ValueError(f"unsupported metrics version {d.get('v')!r}")
        methods = {
            k: MethodMetrics(tuple(m["recall"]), m["mean_error"], m["std_error"], m["n_queries"], m["n_failed"])
            for k, m in d["methods"].items()
        }
        return cls(methods, dict(d["mode_counts"]), d["top_n"])


ERROR_CONVENTIONS = ("all", "hits")


def summarize(records: Sequence[EvaluationRecord], top_n: int = 10, error_over: str = "all") -> MetricsSummary:
    """Cumulative recall@1..top_n and top-1 error statistics per method.

    Failed queries count as misses. With ``error_over="all"`` the error
    statistics cover every query that produced a top-1 candidate, misses
    included; ``"hits"`` restricts them to top-1 hits.
    """
    if not records:
        raise ValueError("no records to summarize")
    if error_over not in ERROR_CONVENTIONS:
        raise ValueError(f"error_over must be one of {ERROR_CONVENTIONS}")
    methods = {}
    for name in METHODS:
        outs = [r.method(name) for r in records]
        recall = tuple(sum(o.hit_at(n) for o in outs) / len(outs) for n in range(1, top_n + 1))
        errs = np.array([o.top1_error for o in outs if o.distances and (error_over == "all" or o.hit_at(1))])
        mean = float(errs.mean()) if errs.size else math.nan
        std = float(errs.std()) if errs.size else math.nan
        methods[name] = MethodMetrics(recall, mean, std, len(outs), sum(not o.distances for o in outs))
    modes: dict[str, int] = {m.value: 0 for m in FusionMode}
    modes["UNAVAILABLE"] = 0
    for r in records:
        modes[r.mode or "UNAVAILABLE"] += 1
    return MetricsSummary(methods, modes, top_n)


def _query_scan(q: SurveySample, n: int) -> WifiScan:
    return normalize_scan(q.wifi, n, q.t)


def evaluate(
    queries: Sequence[SurveySample],
    db: MapDatabase,
    cfg: FusionConfig = FusionConfig(),
    icp: IcpParams | None = None,
    images: Sequence[RangeImage] | None = None,
    top_n: int = 10,
    verify_top: int = DEFAULT_VERIFY_TOP,
    error_over: str = "all",
) -> tuple[list[EvaluationRecord], MetricsSummary]:
    if not queries:
        raise ValueError("no queries")
    n = db.fingerprints.n if db.fingerprints is not None else DEFAULT_N
    records = []
    for i, q in enumerate(queries):
        image = images[i] if images is not None else None
        try:
            rec = evaluate_query(q.k, q.pose, q.cloud, _query_scan(q, n), db, cfg, icp, image, verify_top)
        except (LocalizationError, SparseImageError, ValueError) as exc:
            fail = MethodOutcome(failure=str(exc))
            rec = EvaluationRecord(q.k, q.pose, fail, fail, fail)
        records.append(rec)
    return records, summarize(records, min(top_n, cfg.top_k), error_over)


def failure_fraction(records: Sequence[EvaluationRecord]) -> float:
    return sum(not r.fused.distances for r in records) / max(len(records), 1)


# --- degradation -----------------------------------------------------------


@dataclass(frozen=True)
class DegradationResult:
    clean: MetricsSummary
    degraded: MetricsSummary
    noised: tuple[int, ...]

    def recall_drop(self, method: str, n: int = 1) -> float:
        return self.clean.recall_at(method, n) - self.degraded.recall_at(method, n)

    def to_dict(self) -> dict:
        return {
            "v": METRICS_VERSION,
            "clean": self.clean.to_dict(),
            "degraded": self.degraded.to_dict(),
            "noised": list(self.noised),
            "recall_drop": {m: self.recall_drop(m) for m in METHODS},
        }


def pick_noised_frames(n_queries: int, fraction: float, seed: int) -> tuple[int, ...]:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    count = int(round(fraction * n_queries))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xDE6]))
    return tuple(sorted(rng.choice(n_queries, size=count, replace=False).tolist()))


def degradation_experiment(
    queries: Sequence[SurveySample],
    db: MapDatabase,
    cfg: FusionConfig = FusionConfig(),
    fraction: float = 0.4,
    variance: float = 0.015,
    seed: int = 0,
    icp: IcpParams | None = None,
    clean: tuple[list[EvaluationRecord], MetricsSummary] | None = None,
) -> tuple[DegradationResult, list[EvaluationRecord]]:
    """Evaluate clean, then again with ``fraction`` of the range images noised.

    ``clean`` may pass in an earlier clean evaluation of the same queries.
    Returns the paired summaries and the degraded records.
    """
    images = [project_spherical(q.cloud, db.projection) for q in queries]
    if clean is None:
        clean = evaluate(queries, db, cfg, icp, images)
    noised = pick_noised_frames(len(queries), fraction, seed)
    degraded_imgs = list(images)
    for i in noised:
        degraded_imgs[i] = inject_gaussian_noise(images[i], variance, np.random.SeedSequence([int(seed), i]))
    records, summary = evaluate(queries, db, cfg, icp, degraded_imgs)
    return DegradationResult(clean[1], summary, noised), records


# --- export ----------------------------------------------------------------

RECORD_FIELDS = (
    "query", "method", "truth_x", "truth_y", "truth_z", "truth_theta", "candidates", "distances",
    "pred_x", "pred_y", "pred_z", "top1_error", "hit_at_1", "mode", "fitness", "registration_error", "failure",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_rows(records: Sequence[EvaluationRecord]) -> list[dict]:
    rows = []
    for r in records:
        for name in METHODS:
            o = r.method(name)
            p = o.predicted
            rows.append({
                "query": r.query, "method": name,
                "truth_x": r.truth.x, "truth_y": r.truth.y, "truth_z": r.truth.z, "truth_theta": r.truth.theta,
                "candidates": " ".join(map(str, o.candidates)),
                "distances": " ".join(repr(d) for d in o.distances),
                "pred_x": p.x if p else None, "pred_y": p.y if p else None, "pred_z": p.z if p else None,
                "top1_error": o.top1_error if o.distances else None,
                "hit_at_1": int(o.hit_at(1)),
                "mode": r.mode if name == "fused" else None,
                "fitness": r.fitness if name == "fused" else None,
                "registration_error": r.registration_error if name == "fused" else None,
                "failure": o.failure,
            })
    return rows


def export_results(records: Sequence[EvaluationRecord], summary: MetricsSummary,
                   out_dir: str | Path, extra: dict | None = None) -> None:
    """metrics.json, records.csv (one row per query and method) and trajectory_hits.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = summary.to_dict()
    if extra:
        payload = {**payload, **extra}
    (out / "metrics.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    with open(out / "records.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for row in record_rows(records):
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    with open(out / "trajectory_hits.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "x", "y", "z", *(f"{m}_hit" for m in METHODS)])
        for r in records:
            writer.writerow([r.query, repr(r.truth.x), repr(r.truth.y), repr(r.truth.z),
                             *(int(r.method(m).hit_at(1)) for m in METHODS)])


def load_metrics(path: str | Path) -> MetricsSummary:
    return MetricsSummary.from_dict(json.loads(Path(path).read_text()))
