"""Final pose refinement: yaw-corrected prior plus ICP (point-to-plane by default).

Also hosts the online pipeline that chains projection, both retrieval
branches, the switching rule and registration into a single query.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from fuseloc.descriptor import (
    CandidateList,
    DescriptorIndex,
    PlaceDescriptorPair,
    extract_descriptors,
    query_top_k,
    yaw_hypotheses,
)
from fuseloc.errors import (
    LocalizationError,
    RegistrationFailedError,
    SparseImageError,
    UnreliableEstimateError,
    YawUnobservableError,
)
from fuseloc.fusion import FusionConfig, FusionResult, best_candidate, select_candidates
from fuseloc.geometry import (
    PointCloud,
    Pose,
    RigidTransform,
    Trajectory,
    apply_transform,
    make_yaw_transform,
)
from fuseloc.range_image import (
    ProjectionConfig,
    RangeImage,
    estimate_noise_variance,
    project_spherical,
)
from fuseloc.wifi import FingerprintDatabase, WifiScan, query_top_k_wifi, signal_strength_ok

log = logging.getLogger(__name__)

MIN_PAIRS = 10
DEFAULT_VERIFY_TOP = 3
NORMAL_NEIGHBOURS = 10
# cheap ICP used to rank several starting hypotheses before the full run
COARSE_POINTS = 500
COARSE_ITERATIONS = 20


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_epsilon: float = 1e-4
    max_correspondence_distance: float = 2.0
    min_fitness: float = 0.0
    # evenly strided subsample of the source; None keeps every point
    max_source_points: int | None = 2000
    # "point_to_plane" needs target normals; it does not slide along flat corridors
    metric: str = "point_to_plane"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.convergence_epsilon > 0 and self.max_correspondence_distance > 0):
            raise ValueError("ICP thresholds must be positive")
        if not 0.0 <= self.min_fitness <= 1.0:
            raise ValueError("min_fitness must lie in [0, 1]")
        if self.metric not in ("point_to_point", "point_to_plane"):
            raise ValueError(f"unknown ICP metric {self.metric!r}")


@dataclass(frozen=True)
class RegistrationOutcome:
    transform: RigidTransform
    fitness: float
    iterations_used: int
    converged: bool
    residuals: tuple[float, ...] = ()


def build_prior(candidate_pose: Pose, delta_theta: float) -> RigidTransform:
    return make_yaw_transform(
        Pose(candidate_pose.x, candidate_pose.y, candidate_pose.z, candidate_pose.theta + delta_theta)
    )


def kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation and translation taking ``src[i]`` onto ``dst[i]``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    u, _, vt = np.linalg.svd((src - cs).T @ (dst - cd))
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, cd - rot @ cs


def plane_step(src: np.ndarray, dst: np.ndarray, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One linearised point-to-plane update (small-angle rotation, then re-orthonormalised)."""
    a = np.hstack([np.cross(src, normals), normals])
    b = ((dst - src) * normals).sum(axis=1)
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    wx, wy, wz = x[:3]
    skew = np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])
    u, _, vt = np.linalg.svd(np.eye(3) + skew)
    return u @ vt, x[3:]


def estimate_normals(points: np.ndarray, tree: cKDTree, k: int = NORMAL_NEIGHBOURS) -> np.ndarray:
    """Unit normals from the smallest principal axis of each point's k neighbours."""
    k = min(k, points.shape[0])
    _, nn = tree.query(points, k=k)
    nbr = points[nn] - points[nn].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nbr, nbr)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]


def _subsample(points: np.ndarray, limit: int | None) -> np.ndarray:
    if limit is None or points.shape[0] <= limit:
        return points
    step = int(np.ceil(points.shape[0] / limit))
    return points[::step]


def icp_register(
    source: PointCloud,
    target: PointCloud,
    prior: RigidTransform = RigidTransform(),
    params: IcpParams = IcpParams(),
    target_tree: cKDTree | None = None,
    target_normals: np.ndarray | None = None,
) -> RegistrationOutcome:
    """Align ``source`` onto ``target`` starting from ``prior``.

    The returned transform maps source coordinates into the target frame.
    Raises RegistrationFailedError when fewer than 10 pairs survive the
    correspondence gate, or when the final inlier fraction is below
    ``params.min_fitness``.
    """
    if len(source) < MIN_PAIRS or len(target) < MIN_PAIRS:
        raise RegistrationFailedError("ICP needs at least 10 points in each cloud")
    src = _subsample(source.points, params.max_source_points)
    tgt = target.points
    tree = target_tree if target_tree is not None else cKDTree(tgt)
    gate = params.max_correspondence_distance
    planar = params.metric == "point_to_plane"
    if planar and target_normals is None:
        target_normals = estimate_normals(tgt, tree)

    rot = prior.rotation.copy()
    trans = prior.translation.copy()
    cur = src @ rot.T + trans
    residuals: list[float] = []
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        dist, nn = tree.query(cur, distance_upper_bound=gate)
        inl = dist <= gate
        if int(inl.sum()) < MIN_PAIRS:
            raise RegistrationFailedError(f"only {int(inl.sum())} correspondences at iteration {it}")
        residuals.append(float(dist[inl].mean()))
        if planar:
            d_rot, d_trans = plane_step(cur[inl], tgt[nn[inl]], target_normals[nn[inl]])
        else:
            d_rot, d_trans = kabsch(cur[inl], tgt[nn[inl]])
        moved = cur @ d_rot.T + d_trans
        shift = float(np.linalg.norm(moved - cur, axis=1).mean())
        cur = moved
        rot = d_rot @ rot
        trans = d_rot @ trans + d_trans
        if shift < params.convergence_epsilon:
            converged = True
            break

    dist, _ = tree.query(cur, distance_upper_bound=gate)
    inl = dist <= gate
    fitness = float(inl.mean())
    if inl.any():
        residuals.append(float(dist[inl].mean()))
    if fitness < params.min_fitness:
        raise RegistrationFailedError(f"fitness {fitness:.3f} below {params.min_fitness}")
    u, _, vt = np.linalg.svd(rot)
    return RegistrationOutcome(RigidTransform(u @ vt, trans), fitness, it, converged, tuple(residuals))


# --- map database and online query -----------------------------------------


@dataclass(eq=False)
class MapDatabase:
    """Offline artefacts. Either sensor store may be absent; the other keeps working."""

    trajectory: Trajectory
    projection: ProjectionConfig
    descriptors: DescriptorIndex | None = None
    fingerprints: FingerprintDatabase | None = None
    scans: tuple[PointCloud, ...] | None = None
    _trees: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.trajectory)
        for name, store in (("descriptors", self.descriptors), ("fingerprints", self.fingerprints),
                            ("scans", self.scans)):
            if store is not None and len(store) != n:
                raise ValueError(f"{name} has {len(store)} entries, trajectory has {n}")

    def __len__(self) -> int:
        return len(self.trajectory)

    def map_scan(self, k: int) -> tuple[PointCloud, cKDTree]:
        """Stored scan ``k`` in the map frame, with a cached k-d tree."""
        if self.scans is None:
            raise RegistrationFailedError("map database holds no stored scans")
        if k not in self._trees:
            cloud = apply_transform(make_yaw_transform(self.trajectory[k]), self.scans[k])
            self._trees[k] = (cloud, cKDTree(cloud.points))
        return self._trees[k]

    def map_normals(self, k: int) -> np.ndarray:
        key = ("normals", k)
        if key not in self._trees:
            cloud, tree = self.map_scan(k)
            self._trees[key] = estimate_normals(cloud.points, tree)
        return self._trees[key]


@dataclass(frozen=True)
class LocalizationResult:
    lidar: CandidateList
    wifi: CandidateList
    fusion: FusionResult
    candidate: int
    delta_theta: float
    registration: RegistrationOutcome | None = None
    registration_error: str | None = None

    @property
    def pose(self) -> Pose:
        return self.registration.transform.to_pose()


def lidar_candidates(img: RangeImage, map_db: MapDatabase, k: int):
    """Top-k LiDAR candidates and the query descriptor; empty when the image is unusable."""
    if map_db.descriptors is None:
        return CandidateList(), None
    try:
        pair = extract_descriptors(img)
    except SparseImageError:
        return CandidateList(), None
    return query_top_k(map_db.descriptors, pair.q, k), pair


def wifi_candidates(wifi: WifiScan | None, map_db: MapDatabase, k: int) -> CandidateList:
    if wifi is None or map_db.fingerprints is None:
        return CandidateList()
    return query_top_k_wifi(map_db.fingerprints, wifi, k)


def lidar_noise(img: RangeImage) -> float:
    try:
        return estimate_noise_variance(img)
    except (UnreliableEstimateError, LocalizationError):
        return float("inf")


def wifi_gate(wifi: WifiScan | None, map_db: MapDatabase, cfg: FusionConfig) -> bool:
    return (
        wifi is not None
        and map_db.fingerprints is not None
        and signal_strength_ok(wifi, cfg.rssi_floor, cfg.rssi_min_count)
    )


def yaw_offsets(pair: PlaceDescriptorPair | None, candidate: int, map_db: MapDatabase) -> tuple[float, ...]:
    """Heading corrections toward ``candidate``, best first; (0,) when the heading is unobservable."""
    if pair is None or map_db.descriptors is None:
        return (0.0,)
    try:
        return yaw_hypotheses(pair.w, map_db.descriptors.pair(candidate).w, map_db.projection.width)
    except YawUnobservableError:
        return (0.0,)


def yaw_offset(pair: PlaceDescriptorPair | None, candidate: int, map_db: MapDatabase) -> float:
    return yaw_offsets(pair, candidate, map_db)[0]


def alignment_cost(reg: RegistrationOutcome) -> float:
    """Mean inlier residual per unit inlier fraction; lower is a better fit."""
    return reg.residuals[-1] / reg.fitness if reg.fitness > 0 else float("inf")


@dataclass(frozen=True)
class _Trial:
    tag: object
    delta: float
    target: PointCloud
    tree: cKDTree
    normals: np.ndarray | None
    prior: RigidTransform


def _best_alignment(source: PointCloud, trials: list[_Trial], icp: IcpParams):
    """Rank trials with a coarse ICP, then run the full ICP from the winner's coarse fit.

    Returns (trial, outcome, failure message); a single trial skips the coarse stage.
    """
    start, first_err = None, None
    if len(trials) == 1:
        start = (trials[0], trials[0].prior)
    else:
        coarse = replace(icp, max_source_points=COARSE_POINTS, max_iterations=min(COARSE_ITERATIONS, icp.max_iterations),
                         min_fitness=0.0)
        best_cost = float("inf")
        for t in trials:
            try:
                reg = icp_register(source, t.target, t.prior, coarse, t.tree, t.normals)
            except RegistrationFailedError as exc:
                first_err = first_err or (t, str(exc))
                continue
            if alignment_cost(reg) < best_cost:
                best_cost, start = alignment_cost(reg), (t, reg.transform)
        if start is None:
            return first_err[0], None, first_err[1]
    trial, prior = start
    try:
        return trial, icp_register(source, trial.target, prior, icp, trial.tree, trial.normals), None
    except RegistrationFailedError as exc:
        return trial, None, str(exc)


def register_from_headings(
    source: PointCloud,
    target: PointCloud,
    base: Pose,
    offsets: tuple[float, ...],
    icp: IcpParams = IcpParams(),
    target_tree: cKDTree | None = None,
    target_normals: np.ndarray | None = None,
) -> tuple[float, RegistrationOutcome | None, str | None]:
    """ICP from ``base`` turned by each heading offset; the best-aligned start wins.

    Returns (offset, outcome, failure message); the outcome is None when
    registration failed.
    """
    if target_tree is None:
        target_tree = cKDTree(target.points)
    if target_normals is None and icp.metric == "point_to_plane":
        target_normals = estimate_normals(target.points, target_tree)
    trials = [_Trial(None, d, target, target_tree, target_normals, build_prior(base, d)) for d in offsets]
    trial, reg, err = _best_alignment(source, trials, icp)
    return trial.delta, reg, err


def _candidate_trials(pair, candidate: int, map_db: MapDatabase, icp: IcpParams) -> list[_Trial]:
    target, tree = map_db.map_scan(candidate)
    normals = map_db.map_normals(candidate) if icp.metric == "point_to_plane" else None
    base = map_db.trajectory[candidate]
    return [_Trial(candidate, d, target, tree, normals, build_prior(base, d))
            for d in yaw_offsets(pair, candidate, map_db)]


def refine_candidate(
    scan: PointCloud,
    pair: PlaceDescriptorPair | None,
    candidate: int,
    map_db: MapDatabase,
    icp: IcpParams = IcpParams(),
) -> tuple[float, RegistrationOutcome | None, str | None]:
    """Yaw discrepancy, ICP outcome and failure message for one chosen candidate."""
    _, delta, reg, err = verify_candidates(scan, pair, (candidate,), map_db, icp)
    return delta, reg, err


def verify_candidates(
    scan: PointCloud,
    pair: PlaceDescriptorPair | None,
    candidates: tuple[int, ...],
    map_db: MapDatabase,
    icp: IcpParams = IcpParams(),
) -> tuple[int, float, RegistrationOutcome | None, str | None]:
    """Register against each candidate and heading hypothesis; keep the best-aligned one.

    Returns (candidate, yaw offset, outcome, failure message). When every
    registration fails the first failing trial is reported.
    """
    if not candidates:
        raise ValueError("no candidates to verify")
    trials = [t for c in candidates for t in _candidate_trials(pair, c, map_db, icp)]
    trial, reg, err = _best_alignment(scan, trials, icp)
    if err is not None:
        log.debug("registration failed for candidate %d: %s", trial.tag, err)
    return trial.tag, trial.delta, reg, err


def localize(
    scan: PointCloud | None,
    wifi: WifiScan | None,
    map_db: MapDatabase,
    cfg: FusionConfig = FusionConfig(),
    icp: IcpParams | None = IcpParams(),
    image: RangeImage | None = None,
    verify_top: int = DEFAULT_VERIFY_TOP,
) -> LocalizationResult:
    """Run one online query. ``image`` overrides projecting ``scan``; ``icp=None`` skips registration.

    With registration enabled, the first ``verify_top`` fused candidates are
    each registered and the best-aligned one becomes the result.
    Raises LocalizationUnavailableError when both sensors fail their gates.
    """
    if verify_top < 1:
        raise ValueError("verify_top must be >= 1")
    if image is None and scan is not None and len(scan):
        image = project_spherical(scan, map_db.projection)
    if image is not None:
        k_l, pair = lidar_candidates(image, map_db, cfg.top_k)
        noise = lidar_noise(image)
    else:
        k_l, pair, noise = CandidateList(), None, float("inf")

    k_w = wifi_candidates(wifi, map_db, cfg.top_k)
    fused = select_candidates(k_l, k_w, noise, wifi_gate(wifi, map_db, cfg), cfg)
    best = best_candidate(fused)

    if icp is None or scan is None or map_db.scans is None:
        return LocalizationResult(k_l, k_w, fused, best, yaw_offset(pair, best, map_db))
    chosen, delta, reg, err = verify_candidates(scan, pair, fused.candidates.indices[:verify_top], map_db, icp)
    return LocalizationResult(k_l, k_w, fused, chosen, delta, reg, err)


def global_localize(
    scan: PointCloud,
    wifi: WifiScan | None,
    map_db: MapDatabase,
    cfg: FusionConfig = FusionConfig(),
    icp: IcpParams = IcpParams(),
) -> RegistrationOutcome:
    """Estimate the map-frame transform of the current sensor frame."""
    res = localize(scan, wifi, map_db, cfg, icp)
    if res.registration is None:
        raise RegistrationFailedError(res.registration_error or "no stored scans to register against")
    return res.registration
