import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuseloc import simworld as sw
from fuseloc.descriptor import yaw_hypotheses
from fuseloc.errors import LocalizationUnavailableError, RegistrationFailedError
from fuseloc.fusion import FusionMode
from fuseloc.geometry import (
    PointCloud,
    Pose,
    RigidTransform,
    Trajectory,
    apply_transform,
    inverse,
    make_yaw_transform,
    normalize_angle,
)
from fuseloc.registration import (
    IcpParams,
    MapDatabase,
    build_prior,
    estimate_normals,
    icp_register,
    kabsch,
    localize,
    register_from_headings,
    verify_candidates,
)
from fuseloc.wifi import normalize_scan

from conftest import random_cloud


def _errors(found: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    dt = float(np.linalg.norm(found.translation - truth.translation))
    return dt, abs(math.degrees(normalize_angle(found.yaw - truth.yaw)))


@given(st.integers(0, 2**31), st.floats(-math.pi, math.pi), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_kabsch_exact(seed, yaw, tx, ty):
    pts = random_cloud(seed, 50).points
    t = make_yaw_transform(Pose(tx, ty, 0.3, yaw))
    rot, trans = kabsch(pts, t.apply(pts))
    np.testing.assert_allclose(rot, t.rotation, atol=1e-9)
    np.testing.assert_allclose(trans, t.translation, atol=1e-9)
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_kabsch_never_reflects():
    pts = random_cloud(2, 30).points
    mirrored = pts * np.array([1.0, -1.0, 1.0])
    rot, _ = kabsch(pts, mirrored)
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_normals_of_plane():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-5, 5, 400), rng.uniform(-5, 5, 400), np.full(400, 1.5)])
    from scipy.spatial import cKDTree

    n = estimate_normals(pts, cKDTree(pts))
    np.testing.assert_allclose(np.abs(n[:, 2]), 1.0, atol=1e-9)


@pytest.fixture(scope="module")
def corridor_scan(corridor_world):
    env, lidar = corridor_world
    return sw.simulate_lidar_scan(env, Pose(1.0, 0.0, 0.7, 0.0), lidar, 0)


@pytest.mark.parametrize("metric", ["point_to_plane", "point_to_point"])
def test_icp_recovers_small_perturbation(corridor_scan, metric):
    pert = make_yaw_transform(Pose(0.4, -0.3, 0.0, math.radians(6.0)))
    out = icp_register(apply_transform(pert, corridor_scan), corridor_scan, RigidTransform(),
                       IcpParams(metric=metric))
    dt, dr = _errors(out.transform, inverse(pert))
    assert dt < 0.05 and dr < 0.5
    assert out.fitness > 0.9 and out.iterations_used <= 50


def test_icp_identity_converges_immediately(corridor_scan):
    out = icp_register(corridor_scan, corridor_scan)
    assert out.converged and out.iterations_used == 1
    assert _errors(out.transform, RigidTransform()) == (0.0, 0.0)


def test_icp_rejects_tiny_clouds():
    small = PointCloud(np.random.default_rng(0).normal(size=(9, 3)))
    with pytest.raises(RegistrationFailedError):
        icp_register(small, small)


def test_icp_gate_failure(corridor_scan):
    far = apply_transform(make_yaw_transform(Pose(500.0, 0.0, 0.0, 0.0)), corridor_scan)
    with pytest.raises(RegistrationFailedError):
        icp_register(far, corridor_scan)


def test_icp_min_fitness(corridor_scan):
    half = PointCloud(np.vstack([corridor_scan.points, corridor_scan.points + 100.0]))
    with pytest.raises(RegistrationFailedError):
        icp_register(half, corridor_scan, params=IcpParams(min_fitness=0.8))


def test_params_validation():
    with pytest.raises(ValueError):
        IcpParams(metric="plane")
    with pytest.raises(ValueError):
        IcpParams(max_iterations=0)


def test_heading_search_resolves_half_turn(corridor_scan, corridor_world):
    from fuseloc.descriptor import extract_descriptors
    from fuseloc.range_image import project_spherical

    cfg = corridor_world[1].projection
    pert = make_yaw_transform(Pose(0.5, 0.2, 0.0, math.radians(170.0)))
    src = apply_transform(pert, corridor_scan)
    hyp = yaw_hypotheses(extract_descriptors(project_spherical(src, cfg)).w,
                         extract_descriptors(project_spherical(corridor_scan, cfg)).w, cfg.width)
    _, out, err = register_from_headings(src, corridor_scan, Pose(0, 0, 0), hyp)
    assert err is None
    dt, dr = _errors(out.transform, inverse(pert))
    assert dt < 0.05 and dr < 0.5


def test_build_prior_adds_heading():
    t = build_prior(Pose(1.0, 2.0, 0.5, 0.3), 0.2)
    assert t.yaw == pytest.approx(0.5)
    np.testing.assert_allclose(t.translation, [1.0, 2.0, 0.5])


@pytest.fixture(scope="module")
def small_map(benches):
    bench = benches["ltu_corridor"]
    return bench, bench.db


def test_verification_picks_the_matching_scan(small_map):
    bench, db = small_map
    k = 40
    chosen, _, reg, err = verify_candidates(bench.survey[k].cloud, None, (k + 30, k, k + 60), db)
    assert chosen == k and err is None
    assert np.linalg.norm(reg.transform.translation - bench.survey[k].pose.position) < 0.01


def test_localize_self_query(small_map):
    bench, db = small_map
    s = bench.survey[100]
    res = localize(s.cloud, normalize_scan(s.wifi), db)
    assert res.candidate == 100 and res.fusion.mode is FusionMode.INTERSECTION
    assert np.linalg.norm(res.pose.position - s.pose.position) < 0.01
    assert abs(normalize_angle(res.pose.theta - s.pose.theta)) < 1e-3


def test_localize_without_registration(small_map):
    bench, db = small_map
    s = bench.survey[10]
    res = localize(s.cloud, normalize_scan(s.wifi), db, icp=None)
    assert res.registration is None and res.candidate == 10
    with pytest.raises(ValueError):
        localize(s.cloud, None, db, verify_top=0)


def test_localize_sensor_dropouts(small_map):
    bench, db = small_map
    s = bench.survey[60]
    lidar_only = MapDatabase(db.trajectory, db.projection, db.descriptors, None, db.scans)
    assert localize(s.cloud, normalize_scan(s.wifi), lidar_only, icp=None).fusion.mode is FusionMode.LIDAR_ONLY
    wifi_only = MapDatabase(db.trajectory, db.projection, None, db.fingerprints, None)
    res = localize(s.cloud, normalize_scan(s.wifi), wifi_only)
    assert res.fusion.mode is FusionMode.WIFI_ONLY and res.registration is None
    with pytest.raises(LocalizationUnavailableError):
        localize(None, None, db)


def test_map_database_length_check():
    traj = Trajectory((Pose(0, 0, 0), Pose(1, 0, 0)), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        MapDatabase(traj, sw.LidarSpec().projection, scans=(random_cloud(0),))
    with pytest.raises(RegistrationFailedError):
        MapDatabase(traj, sw.LidarSpec().projection).map_scan(0)
