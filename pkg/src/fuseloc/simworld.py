"""Synthetic 2.5D worlds with ray-cast LiDAR and log-distance Wi-Fi.

Worlds are made of vertical wall segments standing on a flat floor under a
flat ceiling. Any generator that takes a seed is a pure function of its
arguments and that seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fuseloc.errors import EmptyCloudError, OutOfBoundsError
from fuseloc.geometry import PointCloud, Pose
from fuseloc.range_image import ProjectionConfig
from fuseloc.wifi import AccessPointReading, mac_to_str

WIFI_RATE_HZ = 0.69  # complete 2.4 GHz sweep with shortened dwell times: ~1445 ms
LIDAR_RANGE_SIGMA = 0.01


@dataclass(frozen=True, eq=False)
class Environment:
    """``walls`` is an (M, 4) array of x1, y1, x2, y2; ``wall_heights`` gives each wall's top."""

    walls: np.ndarray
    wall_heights: np.ndarray
    floor_z: float | None = 0.0
    ceiling_z: float | None = 3.0
    bounds: tuple[float, float, float, float] = (-1e9, -1e9, 1e9, 1e9)

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=np.float64).reshape(-1, 4)
        heights = np.broadcast_to(np.asarray(self.wall_heights, dtype=np.float64), (walls.shape[0],)).copy()
        lengths = np.hypot(walls[:, 2] - walls[:, 0], walls[:, 3] - walls[:, 1])
        if np.any(lengths <= 0):
            raise ValueError("degenerate wall segment")
        xmin, ymin, xmax, ymax = self.bounds
        if walls.size and (walls[:, [0, 2]].min() < xmin or walls[:, [0, 2]].max() > xmax
                           or walls[:, [1, 3]].min() < ymin or walls[:, [1, 3]].max() > ymax):
            raise ValueError("bounds do not enclose every wall")
        walls.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "wall_heights", heights)

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    @property
    def full_height_mask(self) -> np.ndarray:
        if self.ceiling_z is None:
            return np.zeros(len(self.walls), dtype=bool)
        return self.wall_heights >= self.ceiling_z

    def to_dict(self) -> dict:
        return {
            "walls": self.walls.tolist(),
            "wall_heights": self.wall_heights.tolist(),
            "floor_z": self.floor_z,
            "ceiling_z": self.ceiling_z,
            "bounds": list(self.bounds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        return cls(np.array(d["walls"]).reshape(-1, 4), np.array(d["wall_heights"]),
                   d["floor_z"], d["ceiling_z"], tuple(d["bounds"]))


@dataclass(frozen=True)
class AccessPointSpec:
    position: tuple[float, float, float]
    tx_power_dbm: float
    mac: int
    channel: int = 1
    ssid: str = ""

    def __post_init__(self):
        if not 1 <= self.channel <= 13:
            raise ValueError("2.4 GHz channel must be in 1..13")

    def to_dict(self) -> dict:
        return {"position": list(self.position), "tx_power_dbm": self.tx_power_dbm,
                "mac": mac_to_str(self.mac), "channel": self.channel, "ssid": self.ssid}

    @classmethod
    def from_dict(cls, d: dict) -> "AccessPointSpec":
        from fuseloc.wifi import mac_to_int

        return cls(tuple(d["position"]), d["tx_power_dbm"], mac_to_int(d["mac"]),
                   d["channel"], d.get("ssid", ""))


@dataclass(frozen=True)
class RadioModel:
    path_loss_exponent: float = 2.2
    wall_attenuation_db: float = 6.0
    shadowing_sigma_db: float = 3.0
    rssi_floor: float = -95.0
    # reported RSSI granularity; the scanner firmware reports whole dBm
    resolution_db: float = 1.0
    # spatially correlated part of the shadowing, fixed per AP and position
    static_shadowing_sigma_db: float = 0.0
    shadowing_correlation_m: float = 5.0

    def __post_init__(self):
        if not 1.5 <= self.path_loss_exponent <= 4.0:
            raise ValueError("path loss exponent must be in [1.5, 4]")
        if self.shadowing_sigma_db < 0 or self.static_shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")
        if self.shadowing_correlation_m <= 0:
            raise ValueError("shadowing correlation length must be positive")


@dataclass(frozen=True)
class LidarSpec:
    projection: ProjectionConfig = ProjectionConfig.vlp16()
    range_sigma: float = LIDAR_RANGE_SIGMA
    sensor_height: float = 0.7


# --- geometry helpers ------------------------------------------------------


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _local_walls(env: Environment, x: float, y: float, radius: float) -> np.ndarray:
    w = env.walls
    if w.size == 0:
        return np.zeros(0, dtype=np.int64)
    lo_x = np.minimum(w[:, 0], w[:, 2]) - radius
    hi_x = np.maximum(w[:, 0], w[:, 2]) + radius
    lo_y = np.minimum(w[:, 1], w[:, 3]) - radius
    hi_y = np.maximum(w[:, 1], w[:, 3]) + radius
    return np.flatnonzero((lo_x <= x) & (x <= hi_x) & (lo_y <= y) & (y <= hi_y))


def _ray_wall_distances(ox: float, oy: float, yaws: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """Horizontal distance from the origin along each yaw to each wall; inf on a miss."""
    dx, dy = np.cos(yaws)[:, None], np.sin(yaws)[:, None]
    px, py = walls[None, :, 0], walls[None, :, 1]
    ex, ey = walls[None, :, 2] - px, walls[None, :, 3] - py
    wx, wy = px - ox, py - oy
    denom = _cross(dx, dy, ex, ey)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(wx, wy, ex, ey) / denom
        u = _cross(wx, wy, dx, dy) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def count_wall_crossings(env: Environment, a: np.ndarray, b: np.ndarray) -> int:
    """Full-height walls properly crossed by the 2D segment a->b."""
    mask = env.full_height_mask
    w = env.walls[mask]
    if w.size == 0:
        return 0
    ax, ay, bx, by = float(a[0]), float(a[1]), float(b[0]), float(b[1])
    rx, ry = bx - ax, by - ay
    px, py = w[:, 0], w[:, 1]
    sx, sy = w[:, 2] - px, w[:, 3] - py
    denom = _cross(rx, ry, sx, sy)
    qx, qy = px - ax, py - ay
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(qx, qy, sx, sy) / denom
        u = _cross(qx, qy, rx, ry) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 0) & (t < 1) & (u >= 0) & (u < 1)
    return int(hit.sum())


# --- sensors ---------------------------------------------------------------


def simulate_lidar_scan(env: Environment, pose: Pose, lidar: LidarSpec | ProjectionConfig,
                        rng_seed=0) -> PointCloud:
    """Cast one ray per range-image pixel centre; returns points in the sensor frame."""
    if isinstance(lidar, ProjectionConfig):
        lidar = LidarSpec(lidar)
    cfg = lidar.projection
    if not env.contains(pose.x, pose.y):
        raise OutOfBoundsError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside the environment")
    sensor_yaw = cfg.column_yaws()
    elev = cfg.row_elevations()
    tan_e, cos_e = np.tan(elev), np.cos(elev)
    oz = pose.z
    horiz_limit = cfg.max_range  # horizontal distance never exceeds slant range

    t_h = np.full((cfg.height, cfg.width), np.inf)
    with np.errstate(divide="ignore"):
        if env.floor_z is not None:
            t_floor = np.where(tan_e < 0, (oz - env.floor_z) / -tan_e, np.inf)
            t_h = np.minimum(t_h, t_floor[:, None])
        if env.ceiling_z is not None:
            t_ceil = np.where(tan_e > 0, (env.ceiling_z - oz) / tan_e, np.inf)
            t_h = np.minimum(t_h, t_ceil[:, None])

    local = _local_walls(env, pose.x, pose.y, horiz_limit)
    if local.size:
        walls = env.walls[local]
        heights = env.wall_heights[local]
        dist = _ray_wall_distances(pose.x, pose.y, sensor_yaw + pose.theta, walls)
        full = env.full_height_mask[local]
        if full.any():
            t_h = np.minimum(t_h, dist[:, full].min(axis=1)[None, :])
        if (~full).any():
            d_short = dist[:, ~full]  # (W, Ms)
            z_hit = oz + d_short[None, :, :] * tan_e[:, None, None]
            floor = -np.inf if env.floor_z is None else env.floor_z
            blocked = (z_hit <= heights[~full][None, None, :]) & (z_hit >= floor)
            t_short = np.where(blocked, d_short[None, :, :], np.inf).min(axis=2)
            t_h = np.minimum(t_h, t_short)

    rng_true = t_h / cos_e[:, None]
    valid = np.isfinite(rng_true) & (rng_true <= cfg.max_range)
    if not valid.any():
        raise EmptyCloudError("no ray hit any surface within range")
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, lidar.range_sigma, size=rng_true.shape)
    r = np.clip(rng_true + noise, 1e-3, cfg.max_range)[valid]
    rows, cols = np.nonzero(valid)
    e, a = elev[rows], sensor_yaw[cols]
    pts = np.column_stack([r * np.cos(e) * np.cos(a), r * np.cos(e) * np.sin(a), r * np.sin(e)])
    return PointCloud(pts)


def rssi_at(env: Environment, position: np.ndarray, ap: AccessPointSpec, radio: RadioModel) -> float:
    """Noise-free received power in dBm."""
    d = max(float(np.linalg.norm(np.asarray(ap.position) - position)), 1.0)
    walls = count_wall_crossings(env, position[:2], np.asarray(ap.position[:2]))
    return ap.tx_power_dbm - 10.0 * radio.path_loss_exponent * math.log10(d) - radio.wall_attenuation_db * walls


_SHADOW_TERMS = 24


def static_shadowing(ap: AccessPointSpec, position: np.ndarray, radio: RadioModel) -> float:
    """Frozen shadowing field of one AP: a random Fourier sum with a Gaussian kernel.

    The field depends only on the AP's MAC and the 2D position, so revisiting a
    place reproduces it.
    """
    if radio.static_shadowing_sigma_db == 0.0:
        return 0.0
    rng = np.random.default_rng([ap.mac & 0xFFFFFFFF, ap.mac >> 32])
    k = rng.normal(0.0, 1.0 / radio.shadowing_correlation_m, size=(_SHADOW_TERMS, 2))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=_SHADOW_TERMS)
    arg = k @ np.asarray(position[:2], dtype=np.float64) + phase
    return radio.static_shadowing_sigma_db * math.sqrt(2.0 / _SHADOW_TERMS) * float(np.cos(arg).sum())


def simulate_wifi_scan(env: Environment, pose: Pose, aps: Sequence[AccessPointSpec],
                       radio: RadioModel, rng_seed=0) -> list[AccessPointReading]:
    if not env.contains(pose.x, pose.y):
        raise OutOfBoundsError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside the environment")
    rng = np.random.default_rng(rng_seed)
    shadow = rng.normal(0.0, radio.shadowing_sigma_db, size=len(aps)) if radio.shadowing_sigma_db > 0 \
        else np.zeros(len(aps))
    pos = pose.position
    out = []
    for ap, s in zip(aps, shadow):
        rssi = rssi_at(env, pos, ap, radio) + static_shadowing(ap, pos, radio) + s
        if radio.resolution_db > 0:
            rssi = round(rssi / radio.resolution_db) * radio.resolution_db
        rssi = min(rssi, -1.0)
        if rssi < radio.rssi_floor or rssi < -100.0:
            continue
        out.append(AccessPointReading(mac_to_str(ap.mac), float(rssi), ap.ssid, ap.channel))
    return out


# --- routes and surveys ----------------------------------------------------


def polyline_length(route: np.ndarray) -> float:
    route = np.asarray(route, dtype=np.float64)
    if len(route) < 2:
        return 0.0
    return float(np.hypot(*np.diff(route, axis=0).T).sum())


def sample_polyline(route: np.ndarray, spacing: float, start: float = 0.0):
    """Points and tangent headings every ``spacing`` meters of arc length."""
    route = np.asarray(route, dtype=np.float64)
    if len(route) == 1 or polyline_length(route) == 0.0:
        p = route[0]
        heading = 0.0
        return p[None, :], np.array([heading])
    seg = np.diff(route, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 0
    seg, seg_len, origins = seg[keep], seg_len[keep], route[:-1][keep]
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    s = np.arange(start, total + 1e-9, spacing)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / seg_len[idx]
    pts = origins[idx] + frac[:, None] * seg[idx]
    headings = np.arctan2(seg[idx, 1], seg[idx, 0])
    return pts, headings


def offset_polyline(route: np.ndarray, d: float, closed: bool | None = None) -> np.ndarray:
    """Shift a polyline ``d`` meters to its left, mitring the joints."""
    route = np.asarray(route, dtype=np.float64)
    if closed is None:
        closed = len(route) > 2 and np.allclose(route[0], route[-1])
    pts = route[:-1] if closed else route
    n = len(pts)
    if n < 2:
        return route.copy()
    out = np.empty_like(pts)
    for i in range(n):
        if closed:
            prev_p, next_p = pts[i - 1], pts[(i + 1) % n]
        else:
            prev_p = pts[i - 1] if i > 0 else None
            next_p = pts[i + 1] if i < n - 1 else None
        normals = []
        for a, b in ((prev_p, pts[i]), (pts[i], next_p)):
            if a is None or b is None:
                continue
            t = (b - a) / np.linalg.norm(b - a)
            normals.append(np.array([-t[1], t[0]]))
        if len(normals) == 1:
            out[i] = pts[i] + d * normals[0]
        else:
            m = normals[0] + normals[1]
            m /= np.linalg.norm(m)
            out[i] = pts[i] + d * m / max(float(np.dot(m, normals[0])), 0.2)
    if closed:
        out = np.vstack([out, out[:1]])
    return out


@dataclass(frozen=True, eq=False)
class SurveySample:
    """One synchronised (pose, LiDAR, Wi-Fi) sample; the cloud is in the sensor frame."""

    k: int
    t: float
    pose: Pose
    cloud: PointCloud
    wifi: tuple[AccessPointReading, ...]


def _sample_seed(seed: int, k: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(k), int(stream)])


def generate_survey(env: Environment, aps: Sequence[AccessPointSpec], radio: RadioModel,
                    lidar: LidarSpec, route: np.ndarray, speed: float,
                    wifi_rate_hz: float = WIFI_RATE_HZ, seed: int = 0,
                    lateral_offset: float = 0.0, start: float = 0.0) -> list[SurveySample]:
    """Sample one pose every ``speed / wifi_rate_hz`` meters along ``route``."""
    route = np.asarray(route, dtype=np.float64)
    if speed <= 0 or wifi_rate_hz <= 0:
        raise ValueError("speed and sample rate must be positive")
    for x, y in route:
        if not env.contains(x, y):
            raise OutOfBoundsError(f"route vertex ({x:.1f}, {y:.1f}) leaves the environment")
    path = offset_polyline(route, lateral_offset) if lateral_offset else route
    pts, headings = sample_polyline(path, speed / wifi_rate_hz, start)
    samples = []
    for k, ((x, y), th) in enumerate(zip(pts, headings)):
        pose = Pose(x, y, lidar.sensor_height, th)
        cloud = simulate_lidar_scan(env, pose, lidar, _sample_seed(seed, k, 0))
        wifi = simulate_wifi_scan(env, pose, aps, radio, _sample_seed(seed, k, 1))
        samples.append(SurveySample(k, k / wifi_rate_hz, pose, cloud, tuple(wifi)))
    return samples


# --- preset worlds ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class World:
    """An environment with its radio setup, sensor spec and the survey route."""

    name: str
    env: Environment
    aps: tuple[AccessPointSpec, ...]
    radio: RadioModel
    lidar: LidarSpec
    route: np.ndarray
    speed: float
    query_offset: float = 0.5

    def survey(self, seed: int = 0, **kw) -> list[SurveySample]:
        return generate_survey(self.env, self.aps, self.radio, self.lidar, self.route,
                               self.speed, seed=seed, **kw)

    def queries(self, seed: int = 1, **kw) -> list[SurveySample]:
        kw.setdefault("lateral_offset", self.query_offset)
        return self.survey(seed=seed, **kw)

    def to_dict(self) -> dict:
        p = self.lidar.projection
        return {
            "name": self.name,
            "env": self.env.to_dict(),
            "aps": [a.to_dict() for a in self.aps],
            "radio": self.radio.__dict__.copy(),
            "lidar": {"projection": p.__dict__.copy(), "range_sigma": self.lidar.range_sigma,
                      "sensor_height": self.lidar.sensor_height},
            "route": self.route.tolist(),
            "speed": self.speed,
            "query_offset": self.query_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        lid = d["lidar"]
        return cls(
            d["name"],
            Environment.from_dict(d["env"]),
            tuple(AccessPointSpec.from_dict(a) for a in d["aps"]),
            RadioModel(**d["radio"]),
            LidarSpec(ProjectionConfig(**lid["projection"]), lid["range_sigma"], lid["sensor_height"]),
            np.array(d["route"], dtype=np.float64),
            d["speed"],
            d.get("query_offset", 0.5),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "World":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _segments(poly: np.ndarray) -> list[list[float]]:
    poly = np.asarray(poly)
    return [[*poly[i], *poly[i + 1]] for i in range(len(poly) - 1)
            if np.hypot(*(poly[i + 1] - poly[i])) > 1e-9]


def _box(cx: float, cy: float, half_a: float, half_b: float, heading: float) -> list[list[float]]:
    c, s = math.cos(heading), math.sin(heading)
    corners = [(-half_a, -half_b), (half_a, -half_b), (half_a, half_b), (-half_a, half_b), (-half_a, -half_b)]
    pts = np.array([[cx + c * a - s * b, cy + s * a + c * b] for a, b in corners])
    return _segments(pts)


def _random_macs(rng: np.random.Generator, n: int) -> list[int]:
    macs: set[int] = set()
    while len(macs) < n:
        # locally administered unicast prefix keeps them away from the sentinel
        macs.add(int(rng.integers(1, 1 << 40)) | (0x02 << 40))
    return sorted(macs, key=lambda m: rng.random())


def _bounds_of(walls: np.ndarray, margin: float = 5.0) -> tuple[float, float, float, float]:
    return (float(walls[:, [0, 2]].min() - margin), float(walls[:, [1, 3]].min() - margin),
            float(walls[:, [0, 2]].max() + margin), float(walls[:, [1, 3]].max() + margin))


def _place_aps(rng: np.random.Generator, route: np.ndarray, count: int, height: float,
               tx_range: tuple[float, float], jitter: float, ssid: str) -> tuple[AccessPointSpec, ...]:
    total = polyline_length(route)
    spacing = total / count
    pts, headings = sample_polyline(route, spacing, start=spacing / 2)
    macs = _random_macs(rng, count)
    aps = []
    for i, ((x, y), th) in enumerate(zip(pts[:count], headings[:count])):
        side = rng.uniform(-jitter, jitter)
        ax, ay = x - side * math.sin(th), y + side * math.cos(th)
        aps.append(AccessPointSpec((float(ax), float(ay), height), float(rng.uniform(*tx_range)),
                                   macs[i], (1, 6, 11)[i % 3], f"{ssid}-{i:02d}"))
    return tuple(aps)


@dataclass(frozen=True)
class CorridorParams:
    length_x: float = 150.0
    length_y: float = 100.0
    width: float = 4.0
    ceiling: float = 3.0
    bay_period: float = 8.0
    bay_width: float = 1.6
    bay_depth: float = 0.6
    n_side_branches: int = 6
    n_objects: int = 14
    n_aps: int = 45
    speed: float = 5.0 / 3.6


def ltu_corridor(seed: int = 7, params: CorridorParams = CorridorParams(),
                 max_range: float = 60.0) -> World:
    """Rectangular loop of self-similar corridors with repeating door bays."""
    p = params
    rng = np.random.default_rng(seed)
    route = np.array([[0, 0], [p.length_x, 0], [p.length_x, p.length_y], [0, p.length_y], [0, 0]], float)
    half = p.width / 2
    inner = offset_polyline(route, half)
    outer = offset_polyline(route, -half)
    walls = _segments(inner)

    # the branch slots are picked once so bays can skip them
    side_lengths = np.hypot(*np.diff(outer, axis=0).T)
    branch_at: list[tuple[int, float]] = []
    for _ in range(p.n_side_branches):
        side = int(rng.integers(0, 4))
        branch_at.append((side, float(rng.uniform(15.0, side_lengths[side] - 15.0))))

    for side in range(4):
        a, b = outer[side], outer[side + 1]
        length = side_lengths[side]
        t = (b - a) / length
        out_n = np.array([t[1], -t[0]])  # right of travel = away from the loop centre
        cuts = []  # (u0, u1, kind)
        for s_side, u in branch_at:
            if s_side == side:
                cuts.append((u - 1.5, u + 1.5, "branch"))
        u = p.bay_period / 2 + 3.0
        while u < length - 3.0:
            if all(abs(u - (c0 + c1) / 2) > 3.0 for c0, c1, _ in cuts):
                cuts.append((u - p.bay_width / 2, u + p.bay_width / 2, "bay"))
            u += p.bay_period
        cuts.sort()
        poly = [a]
        for u0, u1, kind in cuts:
            p0, p1 = a + u0 * t, a + u1 * t
            depth = p.bay_depth if kind == "bay" else float(rng.uniform(6.0, 12.0))
            poly += [p0, p0 + depth * out_n, p1 + depth * out_n, p1]
        poly.append(b)
        walls += _segments(np.array(poly))

    heights = [p.ceiling] * len(walls)
    # cabinets, benches and other clutter hugging either wall
    perimeter = polyline_length(route)
    for _ in range(p.n_objects):
        pts, hd = sample_polyline(route, perimeter, start=float(rng.uniform(5.0, perimeter - 5.0)))
        (x, y), th = pts[0], float(hd[0])
        side = rng.choice([-1.0, 1.0])
        depth = float(rng.uniform(0.3, 0.6))
        off = side * (half - depth / 2 - 0.05)
        cx, cy = x - off * math.sin(th), y + off * math.cos(th)
        box = _box(cx, cy, float(rng.uniform(0.4, 1.5)), depth / 2, th)
        walls += box
        heights += [float(rng.uniform(0.8, 2.0))] * len(box)

    walls_arr = np.array(walls)
    env = Environment(walls_arr, np.array(heights), 0.0, p.ceiling, _bounds_of(walls_arr))
    aps = _place_aps(rng, route, p.n_aps, p.ceiling - 0.2, (-42.0, -32.0), 1.2, "ltu")
    radio = RadioModel(path_loss_exponent=2.2, wall_attenuation_db=6.0, shadowing_sigma_db=1.5,
                       static_shadowing_sigma_db=6.0, shadowing_correlation_m=3.0)
    lidar = LidarSpec(ProjectionConfig.vlp16(max_range=max_range), LIDAR_RANGE_SIGMA, 0.7)
    return World("ltu_corridor", env, aps, radio, lidar, route, p.speed)


@dataclass(frozen=True)
class TunnelParams:
    length: float = 1000.0
    width: float = 5.0
    ceiling: float = 4.5
    roughness: float = 0.35
    wall_step: float = 2.0
    n_drifts: int = 7
    drift_length: float = 40.0
    n_aps: int = 70
    speed: float = 17.5 / 3.6


def _rough_wall(center: np.ndarray, offset: float, rng, roughness: float, step: float) -> np.ndarray:
    pts, hd = sample_polyline(center, step)
    raw = rng.normal(0.0, roughness, size=len(pts))
    kernel = np.array([0.25, 0.5, 0.25])
    smooth = np.convolve(raw, kernel, mode="same")
    d = offset + np.sign(offset) * smooth
    return np.column_stack([pts[:, 0] - d * np.sin(hd), pts[:, 1] + d * np.cos(hd)])


def mine_tunnel(seed: int = 11, params: TunnelParams = TunnelParams(),
                max_range: float = 80.0) -> World:
    """Long bending main drift with dead-end side drifts and rough rock walls."""
    p = params
    rng = np.random.default_rng(seed)
    heading, pos = 0.0, np.zeros(2)
    route = [pos.copy()]
    remaining = p.length
    while remaining > 1e-9:
        seg = min(float(rng.uniform(60.0, 130.0)), remaining)
        pos = pos + seg * np.array([math.cos(heading), math.sin(heading)])
        route.append(pos.copy())
        remaining -= seg
        heading += float(rng.uniform(0.15, 0.55)) * rng.choice([-1.0, 1.0])
    route = np.array(route)

    half = p.width / 2
    left = _rough_wall(route, half, rng, p.roughness, p.wall_step)
    right = _rough_wall(route, -half, rng, p.roughness, p.wall_step)

    total = polyline_length(route)
    slots = np.sort(rng.uniform(40.0, total - 40.0, size=p.n_drifts))
    centers, hds = sample_polyline(route, 1.0)
    arc = np.arange(len(centers)) * 1.0
    drift_walls: list[list[float]] = []
    gaps = {1.0: [], -1.0: []}
    for s in slots:
        side = float(rng.choice([-1.0, 1.0]))
        i = int(np.argmin(np.abs(arc - s)))
        c, th = centers[i], float(hds[i])
        angle = th + side * float(rng.uniform(math.radians(55), math.radians(90)))
        stub = np.array([c, c + p.drift_length * np.array([math.cos(angle), math.sin(angle)])])
        dw = 0.9 * p.width / 2
        for off in (dw, -dw):
            wall = _rough_wall(stub, off, rng, p.roughness, p.wall_step)
            # start the drift wall at the main tunnel wall, not at its centreline
            wall = wall[np.hypot(*(wall - c).T) > half + 0.3]
            drift_walls += _segments(wall)
        end = stub[1]
        n = np.array([-math.sin(angle), math.cos(angle)])
        drift_walls += _segments(np.array([end - dw * n, end + dw * n]))
        gaps[side].append(s)

    def cut(wall: np.ndarray, side: float) -> list[list[float]]:
        s_wall = np.arange(len(wall)) * p.wall_step
        keep = np.ones(len(wall), dtype=bool)
        for s in gaps[side]:
            keep &= np.abs(s_wall - s) > p.width * 0.9
        segs = []
        for i in range(len(wall) - 1):
            if keep[i] and keep[i + 1]:
                segs += _segments(wall[i : i + 2])
        return segs

    walls = cut(left, 1.0) + cut(right, -1.0) + drift_walls
    walls_arr = np.array(walls)
    env = Environment(walls_arr, p.ceiling, 0.0, p.ceiling, _bounds_of(walls_arr))
    aps = _place_aps(rng, route, p.n_aps, p.ceiling - 0.3, (-40.0, -30.0), 1.5, "mine")
    radio = RadioModel(path_loss_exponent=1.8, wall_attenuation_db=6.0, shadowing_sigma_db=1.5,
                       static_shadowing_sigma_db=6.0, shadowing_correlation_m=3.0)
    lidar = LidarSpec(ProjectionConfig.os1_32(max_range=max_range), LIDAR_RANGE_SIGMA, 1.8)
    return World("mine_tunnel", env, aps, radio, lidar, route, p.speed)


def preset_worlds(seed: int | None = None) -> dict[str, World]:
    """Both benchmark worlds; ``seed`` overrides each world's default layout seed."""
    if seed is None:
        return {"ltu_corridor": ltu_corridor(), "mine_tunnel": mine_tunnel()}
    return {"ltu_corridor": ltu_corridor(seed), "mine_tunnel": mine_tunnel(seed + 1)}
