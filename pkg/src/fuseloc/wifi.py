"""Wi-Fi fingerprint scans, the MAC/RSSI correlation score and top-k retrieval.

Scans are normalised to a fixed length ``n``: duplicates collapse to their
strongest reading, the strongest ``n`` access points are kept, and short scans
are padded with a zero-MAC sentinel at -100 dBm. Sentinels never match, so
padding contributes nothing to a score.

Sums of correlation cells use ``math.fsum`` so that a score is the correctly
rounded value of the exact sum, independent of summation order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fuseloc.descriptor import CandidateList
from fuseloc.errors import MalformedMacError, ScanSizeMismatchError
from fuseloc.geometry import Pose

SENTINEL_MAC = 0
SENTINEL_RSSI = -100.0
DEFAULT_N = 32
DEFAULT_FLOOR_DBM = -85.0
DEFAULT_MIN_COUNT = 3

_MAC_RE = re.compile(r"^[0-9A-Fa-f]{2}([:-][0-9A-Fa-f]{2}){5}$")


def mac_to_int(mac: str | int) -> int:
    if isinstance(mac, (int, np.integer)):
        if not 0 <= int(mac) < 1 << 48:
            raise MalformedMacError(f"MAC integer out of 48-bit range: {mac}")
        return int(mac)
    if not isinstance(mac, str) or not _MAC_RE.match(mac):
        raise MalformedMacError(f"malformed MAC address: {mac!r}")
    return int(mac.replace(":", "").replace("-", ""), 16)


def mac_to_str(mac: int) -> str:
    raw = f"{int(mac):012X}"
    return ":".join(raw[i : i + 2] for i in range(0, 12, 2))


@dataclass(frozen=True)
class AccessPointReading:
    """One AP as reported by the scanner; ssid and channel are carried but not scored."""

    mac: str
    rssi: float
    ssid: str = ""
    channel: int = 0

    def to_dict(self) -> dict:
        return {"mac": self.mac, "rssi": self.rssi, "ssid": self.ssid, "channel": self.channel}

    @classmethod
    def from_dict(cls, d: dict) -> "AccessPointReading":
        return cls(d["mac"], d["rssi"], d.get("ssid", ""), d.get("channel", 0))


@dataclass(frozen=True, eq=False)
class WifiScan:
    macs: np.ndarray
    rssis: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        macs = np.array(self.macs, dtype=np.int64).reshape(-1)
        rssis = np.array(self.rssis, dtype=np.float64).reshape(-1)
        if macs.size != rssis.size:
            raise ValueError("macs and rssis differ in length")
        if np.any((rssis < -100.0) | (rssis >= 0.0)):
            raise ValueError("RSSI values must lie in [-100, 0) dBm")
        sentinel = macs == SENTINEL_MAC
        if np.any(rssis[sentinel] != SENTINEL_RSSI):
            raise ValueError("sentinel MAC must carry the sentinel RSSI")
        real = macs[~sentinel]
        if np.unique(real).size != real.size:
            raise ValueError("duplicate MAC in scan")
        macs.setflags(write=False)
        rssis.setflags(write=False)
        object.__setattr__(self, "macs", macs)
        object.__setattr__(self, "rssis", rssis)

    @property
    def n(self) -> int:
        return int(self.macs.size)

    @property
    def real_mask(self) -> np.ndarray:
        return self.macs != SENTINEL_MAC

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WifiScan)
            and np.array_equal(self.macs, other.macs)
            and np.array_equal(self.rssis, other.rssis)
        )


def _reading(entry) -> tuple[int, float]:
    if isinstance(entry, AccessPointReading):
        return mac_to_int(entry.mac), float(entry.rssi)
    if isinstance(entry, dict):
        return mac_to_int(entry["mac"]), float(entry["rssi"])
    mac, rssi = entry[0], entry[1]
    return mac_to_int(mac), float(rssi)


def normalize_scan(raw: Iterable, n: int = DEFAULT_N, timestamp: float = 0.0) -> WifiScan:
    if n < 1:
        raise ValueError("scan size n must be >= 1")
    best: dict[int, float] = {}
    for entry in raw:
        mac, rssi = _reading(entry)
        if not -100.0 <= rssi < 0.0:
            raise ValueError(f"RSSI {rssi} outside [-100, 0) dBm")
        if mac == SENTINEL_MAC:
            continue
        if mac not in best or rssi > best[mac]:
            best[mac] = rssi
    # strongest first; MAC breaks RSSI ties so the order is canonical
    kept = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    pad = n - len(kept)
    macs = [m for m, _ in kept] + [SENTINEL_MAC] * pad
    rssis = [r for _, r in kept] + [SENTINEL_RSSI] * pad
    return WifiScan(macs, rssis, timestamp)


def correlation_matrix(w_t: WifiScan, w_k: WifiScan) -> np.ndarray:
    if w_t.n != w_k.n:
        raise ScanSizeMismatchError(f"scan sizes differ: {w_t.n} vs {w_k.n}")
    c = np.zeros((w_t.n, w_k.n))
    match = (w_t.macs[:, None] == w_k.macs[None, :]) & w_t.real_mask[:, None]
    for i, j in zip(*np.nonzero(match)):
        c[i, j] = math.log2(-w_t.rssis[i] - w_k.rssis[j])
    return c


def correlation_score(c: np.ndarray) -> float:
    return math.fsum(np.asarray(c, dtype=np.float64).ravel().tolist())


def signal_strength_ok(
    w_t: WifiScan, floor_dbm: float = DEFAULT_FLOOR_DBM, min_count: int = DEFAULT_MIN_COUNT
) -> bool:
    strong = w_t.real_mask & (w_t.rssis >= floor_dbm)
    return int(strong.sum()) >= min_count


@dataclass(frozen=True, eq=False)
class FingerprintDatabase:
    scans: tuple[WifiScan, ...]
    poses: tuple[Pose, ...]
    n: int = DEFAULT_N

    def __post_init__(self):
        scans, poses = tuple(self.scans), tuple(self.poses)
        if len(scans) != len(poses):
            raise ValueError("scans and poses differ in length")
        if any(s.n != self.n for s in scans):
            raise ScanSizeMismatchError(f"every scan must have n={self.n}")
        object.__setattr__(self, "scans", scans)
        object.__setattr__(self, "poses", poses)
        if scans:
            mac_table = np.stack([s.macs for s in scans])
            rssi_table = np.stack([s.rssis for s in scans])
        else:
            mac_table = np.zeros((0, self.n), dtype=np.int64)
            rssi_table = np.zeros((0, self.n))
        object.__setattr__(self, "_macs", mac_table)
        object.__setattr__(self, "_rssis", rssi_table)

    def __len__(self) -> int:
        return len(self.scans)

    def scores(self, w_t: WifiScan) -> np.ndarray:
        """Correlation score against every stored scan, vectorised over the database."""
        if w_t.n != self.n:
            raise ScanSizeMismatchError(f"query has n={w_t.n}, database n={self.n}")
        match = (w_t.macs[None, :, None] == self._macs[:, None, :]) & w_t.real_mask[None, :, None]
        ks, iis, jjs = np.nonzero(match)
        cells = [
            math.log2(-a - b)
            for a, b in zip(w_t.rssis[iis].tolist(), self._rssis[ks, jjs].tolist())
        ]
        h = np.zeros(len(self.scans))
        if ks.size:
            bounds = np.flatnonzero(np.diff(ks)) + 1
            starts = np.concatenate([[0], bounds])
            ends = np.concatenate([bounds, [ks.size]])
            for s, e in zip(starts, ends):
                h[ks[s]] = math.fsum(cells[s:e])
        return h


def query_top_k_wifi(db: FingerprintDatabase, w_t: WifiScan, k: int = 10) -> CandidateList:
    if len(db) == 0:
        raise ValueError("fingerprint database is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    h = db.scores(w_t)
    # stable sort on -H keeps the lower trajectory index first among ties
    order = np.argsort(-h, kind="stable")[:k]
    return CandidateList(tuple(order.tolist()), tuple(h[order].tolist()))


# --- survey record I/O -----------------------------------------------------


def survey_record(k: int, pose: Pose, aps: Sequence[AccessPointReading]) -> dict:
    return {"k": k, "pose": pose.to_dict(), "aps": [a.to_dict() for a in aps]}


def records_to_jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r) + "\n" for r in records)


def load_records(path: str | Path) -> list[dict]:
    text = Path(path).read_text()
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return sorted(rows, key=lambda r: r["k"])


def database_from_records(records: Sequence[dict], n: int = DEFAULT_N) -> FingerprintDatabase:
    scans = [normalize_scan([AccessPointReading.from_dict(a) for a in r["aps"]], n) for r in records]
    poses = [Pose.from_dict(r["pose"]) for r in records]
    return FingerprintDatabase(tuple(scans), tuple(poses), n)


def save_database(path: str | Path, records: Sequence[dict]) -> None:
    Path(path).write_text(records_to_jsonl(records))


def load_database(path: str | Path, n: int = DEFAULT_N) -> FingerprintDatabase:
    return database_from_records(load_records(path), n)
