"""Spherical range-image projection and the range-image noise gate.

Column 0 starts at yaw -pi and columns advance counter-clockwise; row 0 is the
lowest elevation bin. Empty pixels hold ``NO_RETURN`` (NaN in memory and on
disk alike).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from fuseloc.errors import EmptyCloudError, ImageTooSmallError, UnreliableEstimateError
from fuseloc.geometry import PointCloud, TWO_PI, pack_container, unpack_container

NO_RETURN = float("nan")

_IMAGE_MAGIC = b"FLRI"

# Difference of two Laplacians; annihilates constant and affine images.
NOISE_MASK = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])

MIN_FINITE_FRACTION = 0.10


@dataclass(frozen=True)
class ProjectionConfig:
    width: int = 360
    height: int = 16
    vertical_fov_min: float = math.radians(-10.0)
    vertical_fov_max: float = math.radians(10.0)
    max_range: float = 100.0

    def __post_init__(self):
        if self.width < 8 or self.height < 2:
            raise ValueError("projection needs width >= 8 and height >= 2")
        if not self.vertical_fov_min < self.vertical_fov_max:
            raise ValueError("vertical_fov_min must be below vertical_fov_max")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    @property
    def column_width(self) -> float:
        return TWO_PI / self.width

    @property
    def row_height(self) -> float:
        return (self.vertical_fov_max - self.vertical_fov_min) / self.height

    def column_yaws(self) -> np.ndarray:
        """Yaw at the centre of every column."""
        return -math.pi + (np.arange(self.width) + 0.5) * self.column_width

    def row_elevations(self) -> np.ndarray:
        """Elevation at the centre of every row."""
        return self.vertical_fov_min + (np.arange(self.height) + 0.5) * self.row_height

    @classmethod
    def vlp16(cls, width: int = 360, max_range: float = 100.0) -> "ProjectionConfig":
        return cls(width, 16, math.radians(-10.0), math.radians(10.0), max_range)

    @classmethod
    def os1_32(cls, width: int = 360, max_range: float = 100.0) -> "ProjectionConfig":
        return cls(width, 32, math.radians(-22.5), math.radians(22.5), max_range)


@dataclass(frozen=True, eq=False)
class RangeImage:
    depth: np.ndarray
    config: ProjectionConfig
    out_of_fov: bool = False  # set when no point of the source cloud landed in the image

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float64, copy=True)
        cfg = self.config
        if depth.shape != (cfg.height, cfg.width):
            raise ValueError(f"depth shape {depth.shape} does not match config")
        finite = depth[np.isfinite(depth)]
        if finite.size and (finite.min() <= 0 or finite.max() > cfg.max_range):
            raise ValueError("finite depths must lie in (0, max_range]")
        depth[~np.isfinite(depth)] = NO_RETURN
        depth.setflags(write=False)
        object.__setattr__(self, "depth", depth)

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def shifted(self, columns: int) -> "RangeImage":
        """Circularly shift columns; positive values move content toward higher yaw."""
        return RangeImage(np.roll(self.depth, columns, axis=1), self.config, self.out_of_fov)


def project_spherical(cloud: PointCloud, cfg: ProjectionConfig) -> RangeImage:
    pts = cloud.points
    if pts.shape[0] == 0:
        raise EmptyCloudError("cannot project an empty cloud")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rng = np.sqrt(x * x + y * y + z * z)
    elev = np.arctan2(z, np.hypot(x, y))

    keep = (rng > 0) & (rng <= cfg.max_range)
    keep &= (elev >= cfg.vertical_fov_min) & (elev <= cfg.vertical_fov_max)

    depth = np.full((cfg.height, cfg.width), np.inf)
    if keep.any():
        yaw = np.arctan2(y[keep], x[keep])
        col = np.floor((yaw + math.pi) / TWO_PI * cfg.width).astype(np.int64) % cfg.width
        frac = (elev[keep] - cfg.vertical_fov_min) / (cfg.vertical_fov_max - cfg.vertical_fov_min)
        row = np.minimum(np.floor(frac * cfg.height).astype(np.int64), cfg.height - 1)
        # minimum-range collision rule
        np.minimum.at(depth, (row, col), rng[keep])
    depth[np.isinf(depth)] = NO_RETURN

    empty = not keep.any()
    if empty:
        warnings.warn("no points inside the vertical FOV / range limit", RuntimeWarning, stacklevel=2)
    return RangeImage(depth, cfg, out_of_fov=empty)


def estimate_noise_variance(img: RangeImage) -> float:
    """Fast Laplacian-difference noise estimate, returned as a variance (m^2).

    Only 3x3 windows made entirely of finite pixels contribute, and the
    normalisation uses the number of such windows instead of (W-2)(H-2).
    """
    depth = img.depth
    h, w = depth.shape
    if h < 3 or w < 3:
        raise ImageTooSmallError("noise estimation needs at least a 3x3 image")
    finite = np.isfinite(depth)
    if finite.mean() < MIN_FINITE_FRACTION:
        raise UnreliableEstimateError(
            f"only {finite.mean():.1%} finite pixels; LiDAR considered degraded"
        )
    filled = np.where(finite, depth, 0.0)
    response = convolve2d(filled, NOISE_MASK, mode="valid")
    window_ok = convolve2d(finite.astype(np.float64), np.ones((3, 3)), mode="valid") > 8.5
    n_windows = int(window_ok.sum())
    if n_windows == 0:
        raise UnreliableEstimateError("no fully populated 3x3 window")
    sigma = math.sqrt(math.pi / 2.0) * np.abs(response[window_ok]).sum() / (6.0 * n_windows)
    return float(sigma * sigma)


def inject_gaussian_noise(img: RangeImage, variance: float, rng_seed) -> RangeImage:
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    if variance == 0:
        return RangeImage(img.depth, img.config, img.out_of_fov)
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, math.sqrt(variance), size=img.depth.shape)
    finite = img.finite_mask
    noisy = img.depth.copy()
    tiny = np.nextafter(0.0, 1.0)
    noisy[finite] = np.clip(noisy[finite] + noise[finite], tiny, img.config.max_range)
    return RangeImage(noisy, img.config, img.out_of_fov)


def image_to_bytes(img: RangeImage) -> bytes:
    cfg = img.config
    return pack_container(_IMAGE_MAGIC, img.depth, cfg.height * cfg.width)


def image_from_bytes(data: bytes, cfg: ProjectionConfig) -> RangeImage:
    count, flat = unpack_container(data, _IMAGE_MAGIC, 1)
    if count != cfg.height * cfg.width:
        raise ValueError("pixel count does not match projection config")
    return RangeImage(flat.reshape(cfg.height, cfg.width), cfg)


def save_image(path: str | Path, img: RangeImage) -> None:
    Path(path).write_bytes(image_to_bytes(img))


def load_image(path: str | Path, cfg: ProjectionConfig) -> RangeImage:
    return image_from_bytes(Path(path).read_bytes(), cfg)
