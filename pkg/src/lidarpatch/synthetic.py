"""Synthetic scene construction for fixtures and benchmarks.

Objects are rendered by casting the projection's own pixel-centre rays
against simple geometry (planes, face-on billboards), so every generated
point lands in a known pixel and scenes are collision-free by
construction.  Scenes carry semantic/instance annotations and can be
written out as scan/label file pairs.
"""

from __future__ import annotations

import numpy as np

from .pointcloud import LabeledScan, Scan, save_labels, save_scan
from .rangeimage import ProjectionConfig


def pixel_rays(config: ProjectionConfig, rows: np.ndarray,
               cols: np.ndarray) -> np.ndarray:
    """Unit direction of each (row, col) pixel centre, shape (K, 3)."""
    theta = (0.5 - (np.asarray(cols) + 0.5) / config.width) * 2.0 * np.pi
    elev = np.radians(
        config.fov_up
        - np.asarray(rows) * config.fov_span_deg / (config.height - 1))
    ce = np.cos(elev)
    return np.stack([ce * np.cos(theta), ce * np.sin(theta), np.sin(elev)],
                    axis=-1)


def _grid(rows, cols):
    rr, cc = np.meshgrid(np.asarray(rows), np.asarray(cols), indexing="ij")
    return rr.ravel(), cc.ravel()


class SceneBuilder:
    """Accumulates annotated points; build() returns a LabeledScan."""

    def __init__(self, config: ProjectionConfig = ProjectionConfig()):
        self.config = config
        self._xyz: list[np.ndarray] = []
        self._intensity: list[np.ndarray] = []
        self._semantic: list[np.ndarray] = []
        self._instance: list[np.ndarray] = []

    def add_points(self, xyz, intensity=0.5, semantic=0, instance=0) -> None:
        xyz = np.atleast_2d(np.asarray(xyz, dtype=np.float64))
        n = xyz.shape[0]
        self._xyz.append(xyz)
        self._intensity.append(np.broadcast_to(
            np.asarray(intensity, dtype=np.float64), (n,)).copy())
        self._semantic.append(np.broadcast_to(
            np.asarray(semantic, dtype=np.uint16), (n,)).copy())
        self._instance.append(np.broadcast_to(
            np.asarray(instance, dtype=np.uint16), (n,)).copy())

    def add_billboard(self, rows, cols, distance, intensity=0.5, semantic=0,
                      instance=0, depth_jitter=0.0, rng=None) -> int:
        """Face-on surface: pixel rays scaled to ``distance`` (plus jitter)."""
        rr, cc = _grid(rows, cols)
        dirs = pixel_rays(self.config, rr, cc)
        dist = np.full(rr.shape, float(distance))
        if depth_jitter > 0.0:
            rng = rng or np.random.default_rng(0)
            dist += rng.uniform(-depth_jitter, depth_jitter, size=rr.shape)
        self.add_points(dirs * dist[:, None], intensity, semantic, instance)
        return rr.size

    def add_plane(self, rows, cols, point, normal, intensity=0.5, semantic=0,
                  instance=0, max_range=120.0) -> int:
        """Ray-plane intersections with positive range; misses are skipped."""
        rr, cc = _grid(rows, cols)
        dirs = pixel_rays(self.config, rr, cc)
        point = np.asarray(point, dtype=np.float64)
        normal = np.asarray(normal, dtype=np.float64)
        denom = dirs @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (point @ normal) / denom
        hit = np.isfinite(t) & (t > 0.1) & (t < max_range)
        if hit.any():
            self.add_points(dirs[hit] * t[hit, None], intensity,
                            semantic, instance)
        return int(hit.sum())

    def build(self, source_id: str = "synthetic") -> LabeledScan:
        if not self._xyz:
            raise ValueError("empty scene")
        xyz = np.concatenate(self._xyz).astype(np.float32)
        intensity = np.clip(np.concatenate(self._intensity), 0.0, 1.0)
        scan = Scan(xyz=xyz, intensity=intensity.astype(np.float32),
                    source_id=source_id)
        return LabeledScan(
            scan=scan,
            semantic=np.concatenate(self._semantic),
            instance=np.concatenate(self._instance),
        )


def write_scene(labeled: LabeledScan, scan_path, label_path) -> None:
    save_scan(labeled.scan, scan_path)
    save_labels(labeled, label_path)


def random_batch_arrays(n: int, n_planes: int, patch_side: int,
                        seed: int = 0):
    """Plausible random patches + stats for benchmarking."""
    rng = np.random.default_rng(seed)
    planes = rng.uniform(0.0, 1.0, size=(n, n_planes, patch_side,
                                         patch_side)).astype(np.float32)
    planes[:, -1] = (planes[:, -1] > 0.5).astype(np.float32)  # mask plane
    stats = rng.uniform(0.0, 1.2, size=(n, 7)).astype(np.float32)
    return planes, stats
