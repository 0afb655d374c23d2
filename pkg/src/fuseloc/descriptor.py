"""Place descriptors computed from range images, and the retrieval index over them.

Both vectors come from circular yaw profiles, whose DFT magnitudes do not
change when the scan is rotated about the vertical axis.

``q`` (retrieval) describes local surface orientation: for every pixel the
angle between the beam and the surface normal, averaged per column within
each of 16 elevation bands, keeping the four lowest non-DC harmonics of each
band. Incidence angles are set by the shape of nearby surfaces rather than by
where in a corridor the sensor sits, and they are destroyed by range noise,
which is the fragility the noise gate is there to catch.

``w`` (heading) keeps the first 32 complex DFT coefficients of the mean-depth
column profile, so the phase difference between two scans gives their yaw
offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from fuseloc.errors import SparseImageError, YawUnobservableError
from fuseloc.geometry import TWO_PI, normalize_angle
from fuseloc.range_image import RangeImage

DESCRIPTOR_DIM = 64
N_PHASE_COEFFS = DESCRIPTOR_DIM // 2
N_BANDS = 16
N_BAND_HARMONICS = DESCRIPTOR_DIM // N_BANDS
MIN_POPULATED_COLUMNS = 8
DEFAULT_TOP_K = 10

# Relative spectrum energy below which a profile counts as constant.
_ZERO_SPECTRUM_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PlaceDescriptorPair:
    q: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64).reshape(-1)
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if q.size != DESCRIPTOR_DIM or w.size != DESCRIPTOR_DIM:
            raise ValueError(f"descriptors must be {DESCRIPTOR_DIM}-vectors")
        if not (np.isfinite(q).all() and np.isfinite(w).all()):
            raise ValueError("non-finite descriptor")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("q must be unit length")
        q.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "w", w)

    def to_dict(self, k: int) -> dict:
        return {"k": k, "q": self.q.tolist(), "w": self.w.tolist()}


def column_profile(img: RangeImage) -> np.ndarray:
    finite = img.finite_mask
    counts = finite.sum(axis=0)
    if int((counts > 0).sum()) < MIN_POPULATED_COLUMNS:
        raise SparseImageError(
            f"only {int((counts > 0).sum())} populated columns, need {MIN_POPULATED_COLUMNS}"
        )
    sums = np.where(finite, img.depth, 0.0).sum(axis=0)
    global_mean = sums.sum() / counts.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        prof = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    return prof


def incidence_cosines(img: RangeImage) -> np.ndarray:
    """|cos| of the angle between each beam and the local surface normal; NaN where undefined.

    Normals come from central differences of the back-projected points along
    the column (circular) and row directions. Rows at the image edge and pixels
    with a missing neighbour have no normal.
    """
    cfg = img.config
    yaw = cfg.column_yaws()[None, :]
    elev = cfg.row_elevations()[:, None]
    dirs = np.stack(
        [np.cos(elev) * np.cos(yaw), np.cos(elev) * np.sin(yaw), np.sin(elev) * np.ones_like(yaw)], axis=-1
    )
    pts = img.depth[..., None] * dirs
    horiz = np.roll(pts, -1, axis=1) - np.roll(pts, 1, axis=1)
    vert = np.full_like(pts, np.nan)
    vert[1:-1] = pts[2:] - pts[:-2]
    normal = np.cross(horiz, vert)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.abs((normal * dirs).sum(axis=-1)) / np.linalg.norm(normal, axis=-1)


def _band_profile(values: np.ndarray) -> np.ndarray:
    finite = np.isfinite(values)
    counts = finite.sum(axis=0)
    sums = np.where(finite, values, 0.0).sum(axis=0)
    fill = sums.sum() / counts.sum() if counts.sum() else 0.0
    return np.where(counts > 0, sums / np.maximum(counts, 1), fill)


def incidence_spectrum(img: RangeImage) -> np.ndarray:
    """Low-harmonic DFT magnitudes of the per-band incidence profiles, unnormalised."""
    cos_inc = incidence_cosines(img)
    bands = np.array_split(np.arange(img.config.height), N_BANDS)
    out = np.zeros((N_BANDS, N_BAND_HARMONICS))
    for b, rows in enumerate(bands):
        if rows.size == 0:
            continue
        spec = np.abs(np.fft.fft(_band_profile(cos_inc[rows])))[1 : N_BAND_HARMONICS + 1]
        out[b, : spec.size] = spec
    return out.reshape(-1)


def extract_descriptors(img: RangeImage) -> PlaceDescriptorPair:
    spectrum = np.fft.fft(column_profile(img))
    mags = incidence_spectrum(img)
    norm = np.linalg.norm(mags)
    # a profile that is flat in every band has only rounding noise above DC
    if norm <= _ZERO_SPECTRUM_RTOL * img.config.width:
        q = np.zeros(DESCRIPTOR_DIM)
        q[0] = 1.0
    else:
        q = mags / norm
    coeffs = np.zeros(N_PHASE_COEFFS, dtype=complex)
    phase = spectrum[1 : N_PHASE_COEFFS + 1]
    coeffs[: phase.size] = phase
    w = np.concatenate([coeffs.real, coeffs.imag])
    return PlaceDescriptorPair(q, w)


def _as_spectrum(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    return w[:N_PHASE_COEFFS] + 1j * w[N_PHASE_COEFFS:]


def _yaw_correlation(w_t: np.ndarray, w_i: np.ndarray, width: int) -> np.ndarray:
    f_t, f_i = _as_spectrum(w_t), _as_spectrum(w_i)
    scale = max(np.abs(f_t).max(initial=0.0), np.abs(f_i).max(initial=0.0))
    if scale == 0.0 or np.linalg.norm(f_t) <= 1e-12 * scale or np.linalg.norm(f_i) <= 1e-12 * scale:
        raise YawUnobservableError("zero-spectrum descriptor, heading cannot be observed")
    n = min(N_PHASE_COEFFS, (width - 1) // 2)
    cross = np.zeros(width, dtype=complex)
    cross[1 : n + 1] = f_i[:n] * np.conj(f_t[:n])
    # corr[s] = sum_k X_k exp(+i 2 pi k s / W)
    return (np.fft.ifft(cross) * width).real


def estimate_yaw_discrepancy(w_t: np.ndarray, w_i: np.ndarray, width: int = 360) -> float:
    """Heading of the current scan minus heading of the reference scan, in radians.

    If the reference image equals the current image circularly shifted by ``s``
    columns, the result is ``s * 2*pi / width``.
    """
    s = int(np.argmax(_yaw_correlation(w_t, w_i, width)))
    return normalize_angle(s * TWO_PI / width)


def yaw_hypotheses(
    w_t: np.ndarray, w_i: np.ndarray, width: int = 360, ratio: float = 0.9
) -> tuple[float, ...]:
    """The best heading offset, plus a distant runner-up when it scores almost as well.

    Long symmetric corridors correlate nearly equally at the true offset and
    half a turn away; the runner-up must sit at least a quarter turn from the
    best peak and reach ``ratio`` of its correlation.
    """
    corr = _yaw_correlation(w_t, w_i, width)
    best = int(np.argmax(corr))
    sep = np.abs((np.arange(width) - best + width // 2) % width - width // 2)
    far = np.where(sep >= width // 4, corr, -np.inf)
    alt = int(np.argmax(far))
    out = [normalize_angle(best * TWO_PI / width)]
    if corr[best] > 0 and far[alt] >= ratio * corr[best]:
        out.append(normalize_angle(alt * TWO_PI / width))
    return tuple(out)


@dataclass(frozen=True)
class CandidateList:
    """Trajectory indices best-first, with the producer's score for each."""

    indices: tuple[int, ...] = ()
    scores: tuple[float, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        sc = tuple(float(s) for s in self.scores)
        if len(idx) != len(sc):
            raise ValueError("indices and scores differ in length")
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate candidate index")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __bool__(self) -> bool:
        return bool(self.indices)

    def top(self, n: int) -> "CandidateList":
        return CandidateList(self.indices[:n], self.scores[:n])


@dataclass(frozen=True, eq=False)
class DescriptorIndex:
    entries: tuple[tuple[int, PlaceDescriptorPair], ...]
    _tree: cKDTree = field(repr=False)
    _keys: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def vectors(self) -> np.ndarray:
        return self._tree.data

    def pair(self, k: int) -> PlaceDescriptorPair:
        return self.entries[int(np.searchsorted(self._keys, k))][1]


def build_index(
    pairs: Sequence[PlaceDescriptorPair], keys: Iterable[int] | None = None
) -> DescriptorIndex:
    if len(pairs) == 0:
        raise ValueError("cannot index an empty descriptor set")
    keys = np.arange(len(pairs)) if keys is None else np.asarray(list(keys), dtype=np.int64)
    if keys.size != len(pairs) or np.any(np.diff(keys) <= 0):
        raise ValueError("keys must be strictly increasing and match the pair count")
    data = np.stack([p.q for p in pairs])
    entries = tuple((int(k), p) for k, p in zip(keys, pairs))
    return DescriptorIndex(entries, cKDTree(data), keys)


def query_top_k(idx: DescriptorIndex, q_t: np.ndarray, k: int = DEFAULT_TOP_K) -> CandidateList:
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(idx))
    dist, pos = idx._tree.query(np.asarray(q_t, dtype=np.float64), k=k)
    dist, pos = np.atleast_1d(dist), np.atleast_1d(pos)
    return CandidateList(tuple(int(idx._keys[p]) for p in pos), tuple(dist))


DescriptorExtractor = Callable[[RangeImage], PlaceDescriptorPair]


def descriptors_to_jsonl(pairs: Sequence[PlaceDescriptorPair]) -> str:
    return "".join(json.dumps(p.to_dict(k)) + "\n" for k, p in enumerate(pairs))


def descriptors_from_jsonl(text: str) -> list[PlaceDescriptorPair]:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    rows.sort(key=lambda r: r["k"])
    return [PlaceDescriptorPair(r["q"], r["w"]) for r in rows]


def save_descriptors(path: str | Path, pairs: Sequence[PlaceDescriptorPair]) -> None:
    Path(path).write_text(descriptors_to_jsonl(pairs))


def load_descriptors(path: str | Path) -> list[PlaceDescriptorPair]:
    return descriptors_from_jsonl(Path(path).read_text())
