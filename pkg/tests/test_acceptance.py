"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line.  Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest

from lidarpatch import cnn
from lidarpatch.cnn import ops
from lidarpatch.metrics import (
    AP_THRESHOLDS,
    Instance,
    average_precision,
    instance_iou,
    iou_per_class,
    panoptic_quality,
)
from lidarpatch.pipeline import bench, load_config, run_pipeline
from lidarpatch.pointcloud import ClassId
from lidarpatch.proposals import ClusterParams, cluster
from lidarpatch.rangeimage import (
    ProjectionConfig,
    bisector_half_angles,
    compute_normal_images,
    project,
)
from lidarpatch.synthetic import SceneBuilder

import oracles
from test_metrics import random_instances


def verdict(name: str, passed: bool, detail: str = "") -> None:
    mark = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {name}: {mark} {detail}".rstrip())
    assert passed, f"{name}: {detail}"


# --------------------------------------------------------------------------
def test_tensor_primitive_oracle_suite():
    """Five primitives vs brute force, >=1000 random cases each, rtol 1e-5."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    n_cases = 1000

    def close(a, b):
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-5)

    for _ in range(n_cases):
        h, w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = rng.uniform(-1, 1, (1, h, w, cin)).astype(np.float32)

        wt = rng.uniform(-1, 1, (3, 3, cin, cout)).astype(np.float32)
        b = rng.uniform(-1, 1, cout).astype(np.float32)
        close(ops.conv2d_3x3(x, wt, b), oracles.conv2d_3x3_ref(x, wt, b))

        dw_w = rng.uniform(-1, 1, (3, 3, cin)).astype(np.float32)
        dw_b = rng.uniform(-1, 1, cin).astype(np.float32)
        pw_w = rng.uniform(-1, 1, (cin, cout)).astype(np.float32)
        pw_b = rng.uniform(-1, 1, cout).astype(np.float32)
        close(ops.depthwise_separable(x, dw_w, dw_b, pw_w, pw_b),
              oracles.separable_ref(x, dw_w, dw_b, pw_w, pw_b))

        xp = rng.uniform(-1, 1, (1, 2 * h, 2 * w, cin)).astype(np.float32)
        close(ops.maxpool2x2(xp), oracles.maxpool_ref(xp))

        k, m = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        xd = rng.uniform(-1, 1, (2, k)).astype(np.float32)
        wd = rng.uniform(-1, 1, (k, m)).astype(np.float32)
        bd = rng.uniform(-1, 1, m).astype(np.float32)
        close(ops.dense(xd, wd, bd), oracles.dense_ref(xd, wd, bd))

        xs = (rng.uniform(-1, 1, (2, 5)) * 8).astype(np.float32)
        close(ops.softmax(xs), oracles.softmax_ref(xs))

    elapsed = time.perf_counter() - t0
    verdict("tensor-primitive-oracles", elapsed < 60.0,
            f"({n_cases} cases per primitive, {elapsed:.1f}s)")


# --------------------------------------------------------------------------
def test_normal_geometry_oracle():
    """Planar scenes, >=3 orientations: phi/2 within 2 deg of the
    cross-product component angle; isoceles closed form to 1e-9."""
    cfg = ProjectionConfig(height=32, width=512)

    # closed form: equal ranges give alpha = beta = pi/2 - delta/2
    depth = np.full((8, 64), 13.7)
    mask = np.ones((8, 64), dtype=bool)
    small = ProjectionConfig(height=8, width=64)
    phi_h, valid_h, phi_v, valid_v = bisector_half_angles(depth, mask, small)
    err_h = np.max(np.abs(phi_h[valid_h] - (np.pi / 2 - small.h_step / 2)))
    err_v = np.max(np.abs(phi_v[valid_v] - (np.pi / 2 - small.v_step / 2)))
    iso_ok = err_h < 1e-9 and err_v < 1e-9

    planes = [
        ((0.0, 0.0, -1.8), (0.0, 0.0, 1.0)),      # ground
        ((10.0, 0.0, 0.0), (-1.0, 0.0, 0.0)),     # face-on wall
        ((8.0, 0.0, 0.0), (-0.766, -0.643, 0.0)),  # oblique wall
        ((9.0, 0.0, 0.0), (-0.6, 0.0, 0.8)),      # tilted slab
    ]
    worst = 0.0
    for point, normal in planes:
        sb = SceneBuilder(cfg)
        sb.add_plane(rows=range(32), cols=range(512), point=point,
                     normal=normal, max_range=80.0)
        img = compute_normal_images(project(sb.build().scan, cfg))
        normals, valid = oracles.cross_product_normals(img)
        for axis, channel in (("h", img.hnv), ("v", img.vnv)):
            oracle = oracles.chord_angle_deg(img, normals, valid, axis)
            sel = valid & np.isfinite(oracle)
            assert sel.sum() > 100
            diff = np.abs(channel[sel] * 180.0 - oracle[sel])
            worst = max(worst, float(diff.max()))

    verdict("normal-geometry-oracle", iso_ok and worst < 2.0,
            f"(isoceles err {max(err_h, err_v):.2e} rad, "
            f"planar worst {worst:.3f} deg over {len(planes)} orientations)")


# --------------------------------------------------------------------------
def test_metrics_golden_values_and_bruteforce():
    """Hand-computed fixtures exact; >=200 random scenes match brute force."""
    # IoU 0.5: TP=2, FP=1, FN=1
    iou = iou_per_class(np.array([1, 1, 1, 0, 0]), np.array([1, 1, 0, 1, 0]))
    golden_iou = iou[ClassId.CAR] == 0.5

    # AP 0.5: one prediction matching at IoU exactly 0.70
    pred = Instance(points=frozenset(range(7)), class_id=ClassId.CAR)
    gt = Instance(points=frozenset(range(10)), class_id=ClassId.CAR)
    assert instance_iou(pred.points, gt.points) == pytest.approx(0.7)
    golden_ap = average_precision([pred], [gt]).ap == pytest.approx(0.5)

    # PQ 0.5333: matched pair at IoU 0.8 plus one false positive
    pair = Instance(points=frozenset(range(8)), class_id=ClassId.CAR)
    fp = Instance(points=frozenset(range(100, 120)), class_id=ClassId.CAR)
    pq = panoptic_quality([pair, fp], [gt])[ClassId.CAR]
    golden_pq = (pq.sq == pytest.approx(0.8)
                 and pq.rq == pytest.approx(1 / 1.5)
                 and pq.pq == pytest.approx(0.5333, abs=5e-5))

    n_scenes = 200
    for seed in range(n_scenes):
        rng = np.random.default_rng(seed)
        n_points = int(rng.integers(50, 5000))
        preds, gts = random_instances(rng, n_points=n_points,
                                      max_instances=25)
        p_sets = [(set(p.points), int(p.class_id)) for p in preds]
        g_sets = [(set(g.points), int(g.class_id)) for g in gts]

        res = average_precision(preds, gts)
        ref_ap, ref_thr = oracles.ap_ref(p_sets, g_sets, AP_THRESHOLDS)
        assert res.ap == pytest.approx(ref_ap, abs=1e-12)

        ours_pq = panoptic_quality(preds, gts)
        ref_pq = oracles.pq_ref(p_sets, g_sets)
        for cls, r in ours_pq.items():
            pq_v, sq_v, rq_v, tp, fp_n, fn_n = ref_pq[int(cls)]
            assert r.pq == pytest.approx(pq_v, abs=1e-12)
            assert (r.tp, r.fp, r.fn) == (tp, fp_n, fn_n)

        pred_labels = np.zeros(n_points, dtype=int)
        for p in preds:
            pred_labels[list(p.points)] = int(p.class_id)
        gt_labels = np.zeros(n_points, dtype=int)
        for g in gts:
            gt_labels[list(g.points)] = int(g.class_id)
        ours_iou = {int(k): v
                    for k, v in iou_per_class(pred_labels, gt_labels).items()}
        assert ours_iou == pytest.approx(
            oracles.iou_per_class_ref(pred_labels.tolist(),
                                      gt_labels.tolist()))

    verdict("metrics-golden-and-bruteforce",
            golden_iou and golden_ap and golden_pq,
            f"(3 golden fixtures, {n_scenes} randomized scenes)")


# --------------------------------------------------------------------------
def test_clustering_euclidean_oracle():
    """>=100 random well-separated scenes: point partitions identical."""
    cfg = ProjectionConfig(height=32, width=512)
    params = ClusterParams(merge_angle_threshold=10.0, min_points=10)
    n_scenes = 100
    for seed in range(n_scenes):
        rng = np.random.default_rng(10_000 + seed)
        sb = SceneBuilder(cfg)
        n_objects = int(rng.integers(2, 7))
        bounds = np.sort(rng.choice(np.arange(0, 500, 20), size=n_objects,
                                    replace=False))
        for b in bounds:
            sb.add_billboard(
                rows=range(int(rng.integers(2, 20)),
                           int(rng.integers(2, 20)) + int(rng.integers(4, 11))),
                cols=range(int(b), int(b) + int(rng.integers(4, 13))),
                distance=float(rng.uniform(4.0, 40.0)),
                depth_jitter=0.02, rng=rng)
        labeled = sb.build()
        img = project(labeled.scan, cfg)
        props = cluster(img, np.zeros(img.shape, dtype=bool), params)
        ours = {p.point_set for p in props}

        pts = labeled.scan.xyz.astype(np.float64)
        radii = 2.0 * cfg.v_step * np.linalg.norm(pts, axis=1)
        want = {c for c in oracles.euclidean_components(pts, radii)
                if len(c) >= params.min_points}
        assert ours == want, f"scene {seed}: partition mismatch"

    verdict("clustering-euclidean-oracle", True, f"({n_scenes} scenes)")


# --------------------------------------------------------------------------
def test_parameter_budget():
    """Reference model parameter count inside [18000, 23000]."""
    n = cnn.param_count(cnn.init_random(0))
    verdict("parameter-budget", 18_000 <= n <= 23_000,
            f"({n} parameters, documented target band 18000..23000)")


# --------------------------------------------------------------------------
def test_timing_100_instances():
    """Forward on 100 patches: 1 thread median <= 100 ms, 2 threads <= 250 ms."""
    model = cnn.init_random(0)
    one = bench(model, n_instances=100, n_threads=1, repetitions=15)
    two = bench(model, n_instances=100, n_threads=2, repetitions=15)
    ok = one.median_ms <= 100.0 and two.median_ms <= 250.0
    verdict("timing-100-instances", ok,
            f"(1 thread {one.median_ms:.1f} ms, 2 threads {two.median_ms:.1f} ms)")


# --------------------------------------------------------------------------
def test_pipeline_determinism(fixture_dataset, tmp_path):
    """Fixture-scene outputs byte-identical across runs and worker counts."""
    from dataclasses import replace

    base = load_config(fixture_dataset["config"])
    blobs = []
    for i, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        cfg = replace(base, workers=workers)
        outcome = run_pipeline(cfg, out_dir=out, with_metrics=True)
        assert outcome.exit_code == 0
        blob = b""
        for f in sorted((out / "detections").glob("*.txt")):
            blob += f.name.encode() + f.read_bytes()
        from lidarpatch.report import write_metric_text

        write_metric_text(outcome.report, out / "metrics.txt")
        blob += (out / "metrics.txt").read_bytes()
        blobs.append(blob)
    verdict("pipeline-determinism", blobs[0] == blobs[1] == blobs[2],
            "(2 runs @ 1 worker + 1 run @ 4 workers)")
