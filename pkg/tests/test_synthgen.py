import json

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from spacepose.errors import SpecError
from spacepose.geometry import CameraIntrinsics, Pose, geodesic_angle, project, quat_from_axis_angle
from spacepose.synthgen import (
    KINDS,
    DatasetSpec,
    Lighting,
    generate_dataset,
    make_satellite,
    rasterize,
    sample_trajectory,
    split_sequences,
)
from spacepose.synthgen.render import ray_occluded
from spacepose.synthgen.trajectory import check_feasible

K128 = CameraIntrinsics.from_fov(128, 40.0)
QUIET = Lighting(noise_sigma=0.0, star_density=0.0)


@pytest.mark.parametrize("kind, n", [("boxsat", 12), ("panelsat", 14), ("antennasat", 11)])
def test_keypoint_counts(kind, n):
    m = make_satellite(kind)
    assert m.n_keypoints == n >= 10
    assert all(0 <= i < n and 0 <= j < n for i, j in m.edges)


@pytest.mark.parametrize("kind", KINDS)
def test_models_are_deterministic(kind):
    a, b = make_satellite(kind, seed=4), make_satellite(kind, seed=4)
    assert a.to_dict() == b.to_dict()


def reflection_permutations(points):
    """Brute force: for each axis reflection, match the reflected set back onto the original."""
    found = []
    for axis in range(3):
        mirrored = points.copy()
        mirrored[:, axis] *= -1
        cost = np.linalg.norm(points[:, None] - mirrored[None], axis=2)
        rows, cols = linear_sum_assignment(cost)
        if cost[rows, cols].max() < 1e-9:
            found.append(cols)
    return found


def test_panelsat_has_nontrivial_reflection_symmetry():
    perms = reflection_permutations(make_satellite("panelsat").keypoints3d)
    assert any(not np.array_equal(p, np.arange(len(p))) for p in perms)


def test_boxsat_panels_break_symmetry():
    assert reflection_permutations(make_satellite("boxsat").keypoints3d) == []


def test_zero_angular_speed_keeps_orientation():
    m = make_satellite("boxsat")
    poses = sample_trajectory(10, m, K128, np.random.default_rng(0), angular_speed_range=(0.0, 0.0))
    for p in poses[1:]:
        np.testing.assert_array_equal(p.q, poses[0].q)


def test_consecutive_geodesic_distance_is_constant():
    poses = sample_trajectory(30, make_satellite("panelsat"), K128, np.random.default_rng(2))
    steps = [geodesic_angle(a.q, b.q) for a, b in zip(poses, poses[1:])]
    assert max(steps) - min(steps) < 1e-7
    assert steps[0] > 0


def test_trajectory_keeps_keypoints_in_frame_and_is_seeded():
    m = make_satellite("antennasat")
    a = sample_trajectory(25, m, K128, np.random.default_rng(9))
    b = sample_trajectory(25, m, K128, np.random.default_rng(9))
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.q, pb.q)
        np.testing.assert_array_equal(pa.t, pb.t)
        uv = project(K128, pa, m.keypoints3d)
        inside = (uv[:, 0] >= -0.5) & (uv[:, 0] < 127.5) & (uv[:, 1] >= -0.5) & (uv[:, 1] < 127.5)
        assert inside.mean() >= 0.6


def test_infeasible_distance_raises():
    with pytest.raises(SpecError):
        check_feasible(K128, 3.0, 4.0)
    with pytest.raises(SpecError):
        sample_trajectory(5, make_satellite("panelsat"), K128, np.random.default_rng(0), distance_range=(2.0, 3.0))


def front_pose(kind="boxsat", z=15.0):
    return Pose(quat_from_axis_angle([1, 1, 0], 0.4), [0.0, 0.0, z])


def test_open_view_all_unhidden_keypoints_visible():
    m = make_satellite("boxsat")
    pose = front_pose()
    _, kp, vis = rasterize(m, pose, K128, QUIET)
    np.testing.assert_array_equal(vis, ~ray_occluded(m, pose))
    assert vis.sum() >= 6


def test_image_determinism_without_noise():
    m = make_satellite("panelsat")
    a = rasterize(m, front_pose(), K128, QUIET, seed=1)[0]
    b = rasterize(m, front_pose(), K128, QUIET, seed=1)[0]
    assert a.dtype == np.uint8 and np.array_equal(a, b)
    assert a.max() > 0


def test_occluder_over_left_half_hides_covered_keypoints():
    m = make_satellite("panelsat")
    pose = front_pose(z=14.0)
    _, kp, vis_open = rasterize(m, pose, K128, QUIET)
    lo, hi = kp.min(axis=0), kp.max(axis=0)
    occ = (lo[0] - 1, lo[1] - 1, (lo[0] + hi[0]) / 2, hi[1] + 1)
    image, _, vis = rasterize(m, pose, K128, QUIET, occluder=occ)
    covered = (kp[:, 0] >= occ[0]) & (kp[:, 0] <= occ[2]) & (kp[:, 1] >= occ[1]) & (kp[:, 1] <= occ[3])
    assert covered.any() and (~covered).any()
    np.testing.assert_array_equal(vis, vis_open & ~covered)
    # monotone: removing the occluder never hides a keypoint
    assert np.all(vis <= vis_open)
    u, v = int(round(kp[covered][0, 0])), int(round(kp[covered][0, 1]))
    assert image[v, u] == round(QUIET.occluder_shade * 255)


def test_behind_camera_primitives_are_culled():
    m = make_satellite("boxsat")
    image, _, _ = rasterize(m, Pose([1, 0, 0, 0], [0, 0, 0.5]), K128, QUIET)
    assert image.shape == (128, 128)


def test_ten_sequences_split_six_two_two():
    s = split_sequences(10, (3, 1, 1), seed=0)
    assert [len(s[k]) for k in ("train", "val", "test")] == [6, 2, 2]
    assert sorted(s["train"] + s["val"] + s["test"]) == list(range(10))


@pytest.mark.parametrize("n", [1, 5, 7, 23])
def test_split_is_partition(n):
    s = split_sequences(n, (3, 1, 1), seed=3)
    assert sorted(s["train"] + s["val"] + s["test"]) == list(range(n))


@pytest.mark.parametrize("field, value", [("n_sequences", 0), ("occluder_prob", 1.5), ("distance_range", (5, 1)),
                                          ("split_ratio", (1, 1))])
def test_bad_spec_names_field(field, value):
    with pytest.raises(SpecError, match=field):
        DatasetSpec(**{field: value})


def test_unknown_spec_field():
    with pytest.raises(SpecError, match="colour"):
        DatasetSpec.from_dict({"colour": 3})


def test_annotations_reproject_exactly(tiny_dataset):
    K = tiny_dataset.intrinsics
    kp3 = tiny_dataset.model.keypoints3d
    n = 0
    for split in ("train", "val", "test"):
        for rec in tiny_dataset.split(split):
            assert np.abs(project(K, rec.pose, kp3) - rec.keypoints2d).max() < 1e-6
            assert abs(np.linalg.norm(rec.pose.q) - 1) < 1e-12
            n += 1
    assert n == 20


def test_meta_records_everything(tiny_dataset):
    meta = tiny_dataset.meta
    assert meta["model"] == "boxsat" and meta["n_keypoints"] == 12
    assert meta["spec"]["seed"] == 3
    assert set(meta["splits"]) == {"train", "val", "test"}
    assert [tuple(e) for e in meta["edges"]] == make_satellite("boxsat").edges
    assert "fx" in meta["intrinsics"]


def test_regeneration_is_byte_identical(tmp_path):
    spec = DatasetSpec(n_sequences=3, frames_per_sequence=2, image_size=64, occluder_prob=0.5, seed=11)
    m = make_satellite("antennasat")
    a = generate_dataset(spec, m, tmp_path / "a")
    b = generate_dataset(spec, m, tmp_path / "b")
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) == 2 + 3 * 3
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_different_seed_changes_annotations(tmp_path):
    m = make_satellite("boxsat")
    a = generate_dataset(DatasetSpec(n_sequences=1, frames_per_sequence=2, image_size=64, seed=1), m, tmp_path / "a")
    b = generate_dataset(DatasetSpec(n_sequences=1, frames_per_sequence=2, image_size=64, seed=2), m, tmp_path / "b")
    ann = lambda root: next(root.rglob("annotations.jsonl")).read_text()
    assert ann(a) != ann(b)


def test_annotation_record_format(tiny_dataset):
    path = next(tiny_dataset.root.rglob("annotations.jsonl"))
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) >= {"frame", "image", "keypoints", "pose"}
    assert len(rec["keypoints"]) == 12 and len(rec["keypoints"][0]) == 3
    assert len(rec["pose"]["q"]) == 4 and len(rec["pose"]["t"]) == 3


def test_full_occluder_hides_everything(occluded_dataset):
    for rec in occluded_dataset.split("train"):
        assert not rec.visible.any()


def test_failed_generation_leaves_nothing(tmp_path):
    spec = DatasetSpec(n_sequences=2, frames_per_sequence=2, image_size=64, distance_range=(1.0, 2.0))
    with pytest.raises(SpecError):
        generate_dataset(spec, make_satellite("panelsat"), tmp_path / "x")
    assert list(tmp_path.iterdir()) == []
