"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from fuseloc import simworld as sw
from fuseloc.descriptor import (
    PlaceDescriptorPair,
    build_index,
    estimate_yaw_discrepancy,
    extract_descriptors,
    query_top_k,
    yaw_hypotheses,
)
from fuseloc.errors import LocalizationUnavailableError
from fuseloc.evaluation import degradation_experiment, evaluate
from fuseloc.fusion import FusionConfig, FusionMode, select_candidates
from fuseloc.descriptor import CandidateList
from fuseloc.geometry import Pose, RigidTransform, apply_transform, inverse, make_yaw_transform, normalize_angle
from fuseloc.range_image import (
    ProjectionConfig,
    RangeImage,
    estimate_noise_variance,
    inject_gaussian_noise,
    project_spherical,
)
from fuseloc.registration import IcpParams, MapDatabase, icp_register, register_from_headings
from fuseloc.wifi import FingerprintDatabase, correlation_matrix, correlation_score, normalize_scan, query_top_k_wifi

from conftest import random_image, report, smooth_image

WORLDS = ("ltu_corridor", "mine_tunnel")


# 1 -------------------------------------------------------------------------

@pytest.fixture(scope="session")
def full_runs(benches):
    out = {}
    for name in WORLDS:
        b = benches[name]
        t0 = time.perf_counter()
        records, summary = evaluate(b.queries, b.db, FusionConfig(), IcpParams())
        out[name] = (records, summary, time.perf_counter() - t0)
    return out


@pytest.mark.parametrize("world", WORLDS)
def test_c1_fusion_dominance(full_runs, world):
    _, s, elapsed = full_runs[world]
    f, l, w = (s.recall_at(m) for m in ("fused", "lidar", "wifi"))
    ef, el = s.methods["fused"].mean_error, s.methods["lidar"].mean_error
    ok = f >= l and f >= w and ef <= el and elapsed < 120.0
    report(1, ok, f"[{world}] recall@1 fused {f:.3f} lidar {l:.3f} wifi {w:.3f}; "
                  f"mean error fused {ef:.2f} m lidar {el:.2f} m; {elapsed:.0f} s")
    assert ok


# 2 -------------------------------------------------------------------------

@pytest.mark.parametrize("world", WORLDS)
def test_c2_degradation(benches, world):
    b = benches[world]
    t0 = time.perf_counter()
    cfg = FusionConfig(noise_variance_threshold=0.01)
    clean = evaluate(b.queries, b.db, cfg)
    lidar_drops, fused_drops = [], []
    for seed in range(5):
        res, _ = degradation_experiment(b.queries, b.db, cfg, 0.4, 0.015, seed, clean=clean)
        lidar_drops.append(res.recall_drop("lidar"))
        fused_drops.append(res.recall_drop("fused"))
    elapsed = time.perf_counter() - t0
    dl, df = float(np.mean(lidar_drops)), float(np.mean(fused_drops))
    ok = df < 0.5 * dl and elapsed < 300.0
    report(2, ok, f"[{world}] mean recall@1 drop fused {df:.3f} vs lidar {dl:.3f} over 5 seeds; {elapsed:.0f} s")
    assert ok


# 3 -------------------------------------------------------------------------

def _raw(rng, pool):
    count = int(rng.integers(0, 45))
    macs = rng.choice(np.arange(1, pool + 1), size=min(count, pool), replace=False)
    return [(int(m), float(rng.integers(-99, 0))) for m in macs]


def _double_loop(a, b) -> float:
    cells = []
    for i in range(a.n):
        for j in range(b.n):
            if a.macs[i] != 0 and a.macs[i] == b.macs[j]:
                cells.append(math.log2(-float(a.rssis[i]) - float(b.rssis[j])))
    return math.fsum(cells)


def test_c3_correlation_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        a, b = normalize_scan(_raw(rng, 60)), normalize_scan(_raw(rng, 60))
        mismatches += correlation_score(correlation_matrix(a, b)) != _double_loop(a, b)
    scans = tuple(normalize_scan(_raw(rng, 80)) for _ in range(300))
    db = FingerprintDatabase(scans, tuple(Pose(float(i), 0.0, 0.0) for i in range(len(scans))))
    rank_errors = 0
    for _ in range(30):
        q = normalize_scan(_raw(rng, 80))
        h = [_double_loop(q, s) for s in scans]
        linear = sorted(range(len(h)), key=lambda i: (-h[i], i))[:10]
        rank_errors += list(query_top_k_wifi(db, q, 10).indices) != linear
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and rank_errors == 0 and elapsed < 10.0
    report(3, ok, f"{mismatches} score mismatches in 1000 pairs, {rank_errors} ranking mismatches "
                  f"in 30 queries; {elapsed:.1f} s")
    assert ok


# 4 -------------------------------------------------------------------------

def test_c4_descriptor_invariance():
    cfg = ProjectionConfig.vlp16()
    bin_ = 2 * math.pi / cfg.width
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_q = worst_yaw = 0.0
    for i in range(200):
        img = smooth_image(cfg, i) if i % 2 else random_image(cfg, i, holes=0.15)
        base = extract_descriptors(img)
        for s in rng.integers(1, cfg.width, size=20):
            moved = extract_descriptors(img.shifted(int(s)))
            worst_q = max(worst_q, float(np.linalg.norm(moved.q - base.q)))
            est = estimate_yaw_discrepancy(base.w, moved.w, cfg.width)
            worst_yaw = max(worst_yaw, abs(math.remainder(est - int(s) * bin_, 2 * math.pi)))
    elapsed = time.perf_counter() - t0
    ok = worst_q < 1e-6 and worst_yaw <= bin_ and elapsed < 30.0
    report(4, ok, f"max |dq| {worst_q:.2e}, max yaw error {math.degrees(worst_yaw):.3f} deg "
                  f"(bin {math.degrees(bin_):.1f}); {elapsed:.1f} s")
    assert ok


# 5 -------------------------------------------------------------------------

def test_c5_retrieval_exactness():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    bad = 0
    for size in np.linspace(10, 2000, 100).astype(int):
        data = rng.normal(size=(size, 64))
        data /= np.linalg.norm(data, axis=1, keepdims=True)
        idx = build_index([PlaceDescriptorPair(v, np.zeros(64)) for v in data])
        q = rng.normal(size=64)
        q /= np.linalg.norm(q)
        d2 = ((data - q) ** 2).sum(axis=1)
        brute = sorted(range(size), key=lambda i: (d2[i], i))[:10]
        bad += list(query_top_k(idx, q, 10).indices) != brute
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30.0
    report(5, ok, f"{bad} of 100 corpora (10 to 2000 entries) disagree with brute force; {elapsed:.1f} s")
    assert ok


# 6 -------------------------------------------------------------------------

def test_c6_noise_gate_calibration():
    cfg = ProjectionConfig.vlp16()
    t0 = time.perf_counter()
    est = [estimate_noise_variance(inject_gaussian_noise(smooth_image(cfg, s), 0.015, s)) for s in range(50)]
    mean = float(np.mean(est))
    yaw, el = np.meshgrid(np.arange(cfg.width), np.arange(cfg.height))
    affine = [estimate_noise_variance(RangeImage(5.0 + a * yaw + b * el, cfg))
              for a, b in ((0.01, 0.02), (-0.003, 0.1), (0.0, 0.0), (0.02, -0.05))]
    elapsed = time.perf_counter() - t0
    ok = abs(mean - 0.015) <= 0.2 * 0.015 and max(affine) < 1e-6 and elapsed < 10.0
    report(6, ok, f"mean estimate {mean:.5f} for injected 0.015 (50 seeds); "
                  f"affine max {max(affine):.1e}; {elapsed:.1f} s")
    assert ok


# 7 -------------------------------------------------------------------------

def _perturbation_trials(corridor_world, big_yaw: bool):
    env, lidar = corridor_world
    cfg = lidar.projection
    rng = np.random.default_rng(17 if big_yaw else 16)
    worst_t = worst_r = 0.0
    for i in range(100):
        target = sw.simulate_lidar_scan(env, Pose(rng.uniform(-8, 12), rng.uniform(-0.5, 0.5), 0.7), lidar, [i, 7])
        d, a = rng.uniform(0, 1.0), rng.uniform(0, 2 * math.pi)
        yaw = math.radians(rng.uniform(-180, 180) if big_yaw else rng.uniform(-10, 10))
        pert = make_yaw_transform(Pose(d * math.cos(a), d * math.sin(a), 0.0, yaw))
        source = apply_transform(pert, target)
        truth = inverse(pert)
        if big_yaw:
            hyp = yaw_hypotheses(extract_descriptors(project_spherical(source, cfg)).w,
                                 extract_descriptors(project_spherical(target, cfg)).w, cfg.width)
            _, out, _ = register_from_headings(source, target, Pose(0.0, 0.0, 0.0), hyp)
        else:
            out = icp_register(source, target, RigidTransform())
        worst_t = max(worst_t, float(np.linalg.norm(out.transform.translation - truth.translation)))
        worst_r = max(worst_r, abs(math.degrees(normalize_angle(out.transform.yaw - truth.yaw))))
    return worst_t, worst_r


def test_c7_icp_recovery(corridor_world):
    t0 = time.perf_counter()
    small = _perturbation_trials(corridor_world, False)
    large = _perturbation_trials(corridor_world, True)
    elapsed = time.perf_counter() - t0
    ok = all(t < 0.05 and r < 0.5 for t, r in (small, large)) and elapsed < 60.0
    report(7, ok, f"worst error identity prior {small[0]:.1e} m / {small[1]:.1e} deg; "
                  f"heading prior (yaw up to 180 deg) {large[0]:.1e} m / {large[1]:.1e} deg; {elapsed:.0f} s")
    assert ok


# 8 -------------------------------------------------------------------------

def test_c8_fusion_truth_table():
    t0 = time.perf_counter()
    seen, problems = set(), []
    overlaps = {"shared": ((3, 7, 9), (7, 1, 3)), "disjoint": ((1, 2, 4), (8, 5, 6))}
    for noise in (0.0, 0.005, 0.0099, 0.01, 0.05, math.nan, math.inf):
        for wifi_ok in (True, False):
            for name, (kl, kw) in overlaps.items():
                lidar_ok = noise < 0.01
                k_l = CandidateList(kl, tuple(float(i) for i in range(3)))
                k_w = CandidateList(kw, tuple(float(-i) for i in range(3)))
                try:
                    r = select_candidates(k_l, k_w, noise, wifi_ok)
                except LocalizationUnavailableError:
                    if lidar_ok or wifi_ok:
                        problems.append((noise, wifi_ok, name, "raised"))
                    continue
                if lidar_ok and wifi_ok:
                    expected = FusionMode.INTERSECTION if name == "shared" else FusionMode.INTERSECTION_EMPTY_FALLBACK
                elif lidar_ok:
                    expected = FusionMode.LIDAR_ONLY
                elif wifi_ok:
                    expected = FusionMode.WIFI_ONLY
                else:
                    problems.append((noise, wifi_ok, name, "no raise"))
                    continue
                seen.add(r.mode)
                if r.mode is not expected or not set(r.candidates.indices) <= set(kl) | set(kw):
                    problems.append((noise, wifi_ok, name, r.mode))
    elapsed = time.perf_counter() - t0
    ok = not problems and seen == set(FusionMode) and elapsed < 1.0
    report(8, ok, f"{len(seen)} of 4 modes exercised, {len(problems)} wrong branches; {elapsed * 1e3:.0f} ms")
    assert ok


# 9 -------------------------------------------------------------------------

@pytest.mark.parametrize("world", WORLDS)
def test_c9_self_localization(benches, world):
    b = benches[world]
    t0 = time.perf_counter()
    records, summary = evaluate(b.survey, b.db, FusionConfig(), IcpParams())
    elapsed = time.perf_counter() - t0
    errs = [r.registration_error if r.registration_error is not None else math.inf for r in records]
    ok = summary.recall_at("fused") == 1.0 and max(errs) < 0.01 and elapsed < 60.0
    report(9, ok, f"[{world}] fused recall@1 {summary.recall_at('fused'):.3f}, "
                  f"max pose error {max(errs):.1e} m over {len(records)} samples; {elapsed:.0f} s")
    assert ok


# 10 ------------------------------------------------------------------------

def test_c10_sensor_independence(benches):
    b = benches["ltu_corridor"]
    db = b.db
    queries = b.queries[::3]
    icp = IcpParams()
    _, full = evaluate(queries, db)
    rec_full_icp, full_icp = evaluate(queries[:15], db, icp=icp)
    no_wifi = MapDatabase(db.trajectory, db.projection, db.descriptors, None, db.scans)
    no_scans = MapDatabase(db.trajectory, db.projection, db.descriptors, db.fingerprints, None)
    no_lidar = MapDatabase(db.trajectory, db.projection, None, db.fingerprints, None)
    recs_nw, s_nw = evaluate(queries, no_wifi)
    rec_ns, s_ns = evaluate(queries[:15], no_scans, icp=icp)
    _, s_nl = evaluate(queries, no_lidar)
    checks = {
        "lidar unchanged without wifi": s_nw.methods["lidar"] == full.methods["lidar"],
        "wifi unchanged without scans": s_ns.methods["wifi"] == full_icp.methods["wifi"]
        and all(a.wifi == c.wifi for a, c in zip(rec_ns, rec_full_icp)),
        "wifi unchanged without lidar": s_nl.methods["wifi"] == full.methods["wifi"],
        "fused falls back to lidar": all(r.mode == FusionMode.LIDAR_ONLY.value for r in recs_nw),
    }
    failed = [k for k, v in checks.items() if not v]
    report(10, not failed, "all store-deletion checks bit-identical" if not failed else f"failed: {failed}")
    assert not failed
