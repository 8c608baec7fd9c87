"""End-to-end acceptance checks for the pipeline.

Each test exercises one release criterion at full scale and prints a
single PASS/FAIL line with the measured numbers (visible with -s or -rA).
These run longer than the unit tests; the whole module stays under a few
minutes on a laptop-class machine.
"""

import csv
import json
import re
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from graspvis import (
    DepthFrame,
    FrameClient,
    FramePublisher,
    GroundTruthProvider,
    PipelineConfig,
    PointCloud,
    Pose,
    ProviderConfig,
    RemoteError,
    StaleFrameError,
    TargetLocalizer,
    bottle_scene,
    camera_pose_at,
    decode_depth,
    encode_depth,
    evaluate_localization,
    mirror_about_axis,
    plan_grasp,
    pose_grid,
    radius_outlier_removal,
    voxel_downsample,
    wire_from_pair,
)
from graspvis.cli import main
from graspvis.pipeline import STUDY_FILTER_PARAMS

from conftest import body_pose_of, random_cloud
from test_cloud import brute_force_radius_filter, brute_force_voxel
from test_transport import paced_frames

BUDGETS = json.loads((Path(__file__).resolve().parents[1] / "budgets.json").read_text())


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_depth_roundtrip_lossless():
    rng = np.random.default_rng(20260817)
    start = time.perf_counter()
    failures = 0
    for k in range(1000):
        # full-range noise is the codec's worst case; no structure to lean on
        frame = DepthFrame(rng.integers(0, 65536, (480, 640), dtype=np.uint16),
                           timestamp=k)
        if not np.array_equal(decode_depth(encode_depth(frame)).values, frame.values):
            failures += 1
    elapsed = time.perf_counter() - start
    report(
        "depth lossless contract",
        failures == 0 and elapsed < 60.0,
        f"1000 random 640x480 frames, {failures} mismatches, {elapsed:.1f} s (limit 60 s)",
    )


def random_visible_shell(rng) -> PointCloud:
    """Camera-facing half of a random cylinder, the cleanup stage's output shape.

    The viewpoint is the origin; the long axis stays at least ~30 degrees
    away from the view ray so the geometry is in the planner's domain.
    """
    radius = rng.uniform(0.01, 0.06)
    height = rng.uniform(0.06, 0.30)
    center = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                       rng.uniform(0.8, 2.0)])
    view = center / np.linalg.norm(center)
    while True:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        if abs(axis @ view) <= 0.7:
            break
    toward = view - (view @ axis) * axis
    toward /= np.linalg.norm(toward)
    lateral = np.cross(axis, toward)
    theta = np.linspace(np.pi / 2, 3 * np.pi / 2, int(rng.integers(12, 60)))
    z = np.linspace(-height / 2, height / 2, int(rng.integers(15, 40)))
    tt, zz = np.meshgrid(theta, z)
    pts = (center
           + zz.ravel()[:, None] * axis
           + radius * np.cos(tt.ravel())[:, None] * toward
           + radius * np.sin(tt.ravel())[:, None] * lateral)
    return PointCloud(pts)


def test_grasp_slab_property():
    rng = np.random.default_rng(42)
    half_slab = 0.0125
    worst = 0.0
    clouds = candidates = 0
    for _ in range(500):
        plan = plan_grasp(random_visible_shell(rng))
        proj = np.abs((plan.candidates.points - plan.centroid) @ plan.axis)
        worst = max(worst, float(proj.max()))
        clouds += 1
        candidates += len(plan.candidates)
    report(
        "grasp slab property",
        worst <= half_slab + 1e-12 and clouds == 500 and candidates > 0,
        f"{candidates} candidates over {clouds} clouds, max |proj| "
        f"{worst:.6f} m (limit {half_slab} m)",
    )


def test_mirror_involution_and_isometry():
    rng = np.random.default_rng(7)
    worst_ident = worst_dist = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 120))
        cloud = PointCloud(rng.uniform(-1.0, 1.0, (n, 3)) + [0, 0, 1.5])
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pivot = rng.uniform(-0.5, 0.5, 3)
        once = mirror_about_axis(cloud, axis, pivot)
        twice = mirror_about_axis(once, axis, pivot)
        worst_ident = max(worst_ident, float(np.abs(twice.points - cloud.points).max()))
        if n >= 2:
            worst_dist = max(worst_dist, float(np.abs(pdist(once.points) - pdist(cloud.points)).max()))
    report(
        "mirror involution and isometry",
        worst_ident <= 1e-12 and worst_dist <= 1e-12,
        f"1000 clouds, double-mirror residual {worst_ident:.2e}, "
        f"pairwise-distance drift {worst_dist:.2e} (limits 1e-12)",
    )


def test_filter_oracle_equivalence():
    rng = np.random.default_rng(99)
    for k in range(200):
        n = int(rng.integers(2, 2001))
        scale = float(rng.uniform(0.01, 0.2))
        cloud = random_cloud(rng, n=n, scale=scale, colors=True)

        radius = float(rng.uniform(0.01, 0.1))
        min_neighbors = int(rng.integers(1, 8))
        got = radius_outlier_removal(cloud, radius, min_neighbors)
        keep = brute_force_radius_filter(cloud.points, radius, min_neighbors)
        assert np.array_equal(got.points, cloud.points[keep]), f"radius mismatch, cloud {k}"
        assert np.array_equal(got.colors, cloud.colors[keep])

        voxel = float(rng.uniform(0.02, 0.15))
        down = voxel_downsample(cloud, voxel)
        cents, cols = brute_force_voxel(cloud.points, cloud.colors, voxel)
        assert np.array_equal(down.points, cents), f"voxel mismatch, cloud {k}"
        assert np.array_equal(down.colors, cols)
    report("filter oracle equivalence", True,
           "radius removal and voxel downsample match brute-force oracles "
           "exactly on 200 clouds of up to 2000 points")


@pytest.fixture(scope="module")
def study42():
    """Noiseless 42-pose localization sweep shared by the study criteria."""
    poses = pose_grid((0.6, 1.8), (-1.5, 1.5), (7, 6))
    assert len(poses) == 42
    start = time.perf_counter()
    study = evaluate_localization(bottle_scene(), poses)
    return study, time.perf_counter() - start


def test_localization_study_rmse(study42):
    study, elapsed = study42
    ok_rows = study.ok_rows
    rmse_cm = tuple(100 * v for v in study.rmse())
    ok = (
        len(ok_rows) == 42
        and rmse_cm[0] <= 2.5
        and rmse_cm[1] <= 1.5
        and rmse_cm[2] <= 1.5
        and elapsed < 300.0
    )
    report(
        "synthetic localization study",
        ok,
        f"42/42 poses localized, RMSE x {rmse_cm[0]:.2f} cm (limit 2.5), "
        f"y {rmse_cm[1]:.2f} cm, z {rmse_cm[2]:.2f} cm (limits 1.5), {elapsed:.0f} s; "
        f"real-sensor bottle reference x 1.3 cm, z 4.5 cm (context only)",
    )


def test_mirror_correction_beats_raw_centroid(study42):
    study, _ = study42
    # depth axis is world x: every pose looks straight down +x
    rows = study.ok_rows
    wins = sum(abs(r.error[0]) < abs(r.visible_error[0]) for r in rows)
    margin = min(abs(r.visible_error[0]) - abs(r.error[0]) for r in rows)
    report(
        "mirror correction effect",
        len(rows) == 42 and wins == 42,
        f"corrected centroid beats visible centroid on the depth axis at "
        f"{wins}/42 poses (worst margin {100 * margin:.2f} cm)",
    )


def test_transport_liveness_and_freshness():
    faults = []

    def inject(index: int) -> None:
        if index == 10:
            faults.append(index)
            raise RuntimeError("injected reply failure")

    received = []
    remote_errors = stale = 0
    with FramePublisher(paced_frames(160, delay=0.002), "tcp://127.0.0.1:0",
                        fault_hook=inject) as pub:
        with FrameClient(pub.endpoint, timeout=5.0) as client:
            while len(received) < 100:
                try:
                    received.append(client.request_frame().sequence)
                except RemoteError:
                    remote_errors += 1
                except StaleFrameError:
                    stale += 1
    increasing = all(a < b for a, b in zip(received, received[1:]))
    report(
        "transport liveness and freshness",
        len(received) == 100 and increasing and remote_errors == 1
        and len(faults) == 1 and stale == 0,
        f"100 frames over loopback, sequences strictly increasing: {increasing}, "
        f"injected faults {len(faults)}, client-visible failures {remote_errors} "
        f"(recovered), stale frames {stale}",
    )


def test_stage_timing_budget(bottle_capture):
    pair, truth = bottle_capture
    wire = wire_from_pair(pair)
    registry = GroundTruthProvider()
    registry.register(pair.color, truth)
    config = PipelineConfig(
        provider=ProviderConfig(kind="ground_truth", target_classes=("bottle",)),
        filters=STUDY_FILTER_PARAMS,
    )
    localizer = TargetLocalizer(config, registry=registry)
    body = body_pose_of(camera_pose_at((-1.2, 0.0, 0.0)))

    samples = []
    for _ in range(40):
        est = localizer.process_wire(wire, body)
        t = est.timings
        samples.append(t.decode_ms + t.cloud_ms + t.plan_ms)
    p95 = float(np.percentile(samples, 95))
    budget = BUDGETS["stage_p95_ms"]["decode_cloud_plan"]
    reference = BUDGETS["reference_ms"]["point_cloud"]
    report(
        "stage timing budget",
        p95 <= budget,
        f"decode+cloud+plan p95 {p95:.1f} ms per 640x480 frame "
        f"(budget {budget} ms; {reference} ms flight point-cloud reference)",
    )


def test_transit_tool_mean_consistency(tmp_path, capsys):
    out = tmp_path / "transit.csv"
    with FramePublisher(paced_frames(140, delay=0.001), "tcp://127.0.0.1:0") as pub:
        rc = main(["transit", "--endpoint", pub.endpoint,
                   "--count", "100", "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    match = re.search(r"100 transfers: mean ([0-9.]+) ms", printed)
    assert match, printed
    reported_mean = float(match.group(1))
    with open(out, newline="") as fh:
        latencies = [float(row["latency_ms"]) for row in csv.DictReader(fh)]
    recomputed = float(np.mean(latencies))
    with capsys.disabled():
        report(
            "transit measurement tool",
            len(latencies) == 100 and abs(recomputed - reported_mean) <= 0.1,
            f"100 loopback transfers, reported mean {reported_mean:.2f} ms, "
            f"CSV recomputed {recomputed:.2f} ms (tolerance 0.1 ms)",
        )
