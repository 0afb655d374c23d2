"""Confidence-gated switching between LiDAR and Wi-Fi place candidates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from fuseloc.descriptor import CandidateList
from fuseloc.errors import LocalizationUnavailableError
from fuseloc.wifi import DEFAULT_FLOOR_DBM, DEFAULT_MIN_COUNT


class FusionMode(str, enum.Enum):
    LIDAR_ONLY = "LIDAR_ONLY"
    WIFI_ONLY = "WIFI_ONLY"
    INTERSECTION = "INTERSECTION"
    INTERSECTION_EMPTY_FALLBACK = "INTERSECTION_EMPTY_FALLBACK"


@dataclass(frozen=True)
class FusionConfig:
    noise_variance_threshold: float = 0.01
    rssi_floor: float = DEFAULT_FLOOR_DBM
    rssi_min_count: int = DEFAULT_MIN_COUNT
    top_k: int = 10

    def __post_init__(self):
        for name in ("noise_variance_threshold", "rssi_floor"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class FusionResult:
    candidates: CandidateList
    mode: FusionMode
    lidar_noise: float
    wifi_ok: bool

    def to_dict(self) -> dict:
        return {
            "candidates": list(self.candidates.indices),
            "scores": list(self.candidates.scores),
            "mode": self.mode.value,
            "lidar_noise": self.lidar_noise,
            "wifi_ok": self.wifi_ok,
        }


def select_candidates(
    k_l: CandidateList,
    k_w: CandidateList,
    noise_var: float,
    wifi_ok: bool,
    cfg: FusionConfig = FusionConfig(),
) -> FusionResult:
    """Pick the fused candidate set.

    A noisy range image (``noise_var >= threshold``) hands the decision to
    Wi-Fi; a weak Wi-Fi scan hands it to LiDAR. With both healthy the result
    is the intersection in Wi-Fi rank order, or Wi-Fi's top-1 when the sets
    share nothing. A NaN ``noise_var`` counts as degraded LiDAR.
    """
    lidar_bad = not (noise_var < cfg.noise_variance_threshold) or not k_l
    wifi_bad = not wifi_ok or not k_w
    if lidar_bad and wifi_bad:
        raise LocalizationUnavailableError("both LiDAR and Wi-Fi failed their confidence gates")
    if lidar_bad:
        return FusionResult(k_w, FusionMode.WIFI_ONLY, noise_var, wifi_ok)
    if wifi_bad:
        return FusionResult(k_l, FusionMode.LIDAR_ONLY, noise_var, wifi_ok)
    lidar_set = set(k_l.indices)
    shared = [(i, s) for i, s in zip(k_w.indices, k_w.scores) if i in lidar_set]
    if not shared:
        return FusionResult(k_w.top(1), FusionMode.INTERSECTION_EMPTY_FALLBACK, noise_var, wifi_ok)
    idx, sc = zip(*shared)
    return FusionResult(CandidateList(idx, sc), FusionMode.INTERSECTION, noise_var, wifi_ok)


def best_candidate(r: FusionResult) -> int:
    if not r.candidates:
        raise ValueError("fusion result holds no candidates")
    return r.candidates.indices[0]
