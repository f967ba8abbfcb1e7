"""Class-agnostic object instance proposals on the range image.

Ground pixels are peeled off by walking each column upward from its
lowest return while the step inclination stays shallow.  The remaining
pixels are flood-filled into clusters with the neighbour-angle merge
criterion used by range-image depth clustering: two adjacent returns
belong together when the angle under which the farther one sees the
nearer one is steep.  A ground-truth mode groups projected points by
their annotated (class, instance) pair instead.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pointcloud import ClassId, LabeledScan
from .rangeimage import RangeImage


@dataclass(frozen=True)
class GroundParams:
    max_ground_angle: float = 10.0  # degrees

    def __post_init__(self):
        if not 0.0 < self.max_ground_angle < 90.0:
            raise ValueError("max_ground_angle must be in (0, 90) degrees")


@dataclass(frozen=True)
class ClusterParams:
    merge_angle_threshold: float = 10.0  # degrees
    min_points: int = 20

    def __post_init__(self):
        if not 0.0 < self.merge_angle_threshold < 90.0:
            raise ValueError("merge_angle_threshold must be in (0, 90) degrees")
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")


@dataclass(frozen=True)
class InstanceProposal:
    """One object candidate: its pixels, points, and image-space bounds.

    ``bbox_image`` is (row_min, col_min, row_max, col_max); col_min >
    col_max means the box wraps across the azimuth seam.
    """

    rows: np.ndarray          # (K,) pixel rows
    cols: np.ndarray          # (K,) pixel cols
    point_indices: np.ndarray  # (K,) scan indices, one per pixel
    bbox_image: tuple[int, int, int, int]
    source: str               # "clustered" | "ground_truth"
    gt_class: ClassId | None = None
    gt_instance_id: int | None = None

    def __post_init__(self):
        assert self.rows.size > 0
        assert self.rows.shape == self.cols.shape == self.point_indices.shape

    @property
    def n_points(self) -> int:
        return int(self.point_indices.size)

    @property
    def pixel_set(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def point_set(self) -> frozenset[int]:
        return frozenset(self.point_indices.tolist())


def _wrap_bbox(rows: np.ndarray, cols: np.ndarray, width: int):
    """Tight bbox; columns wrap, the box covers the smallest arc."""
    row_min, row_max = int(rows.min()), int(rows.max())
    uniq = np.unique(cols)
    if uniq.size == width:
        return (row_min, 0, row_max, width - 1)
    # largest circular gap between occupied columns; box is its complement
    gaps = np.diff(uniq)
    wrap_gap = uniq[0] + width - uniq[-1]
    if gaps.size == 0 or wrap_gap >= gaps.max():
        return (row_min, int(uniq[0]), row_max, int(uniq[-1]))
    k = int(np.argmax(gaps))
    return (row_min, int(uniq[k + 1]), row_max, int(uniq[k]))


def remove_ground(img: RangeImage, params: GroundParams = GroundParams()) -> np.ndarray:
    """Boolean (H, W) ground mask.

    Per column, from the lowest return upward: a step to the next return
    above with |atan2(dz, horizontal distance)| below the threshold marks
    both ends as ground; the walk stops at the first steep step.
    Unfilled pixels are never ground.
    """
    h, w = img.shape
    thr = np.radians(params.max_ground_angle)
    ground = np.zeros((h, w), dtype=bool)

    # per-column chain state, swept bottom row to top, vectorized over cols
    have_prev = np.zeros(w, dtype=bool)
    alive = np.ones(w, dtype=bool)
    prev_x = np.zeros(w)
    prev_y = np.zeros(w)
    prev_z = np.zeros(w)
    prev_row = np.zeros(w, dtype=np.int64)

    for r in range(h - 1, -1, -1):
        m = img.mask[r]
        cur_x, cur_y, cur_z = img.x[r], img.y[r], img.z[r]

        step_cols = m & have_prev & alive
        if step_cols.any():
            dx = cur_x[step_cols] - prev_x[step_cols]
            dy = cur_y[step_cols] - prev_y[step_cols]
            dz = cur_z[step_cols] - prev_z[step_cols]
            ang = np.arctan2(np.abs(dz), np.hypot(dx, dy))
            flat = ang < thr
            cols_idx = np.nonzero(step_cols)[0]
            good = cols_idx[flat]
            ground[prev_row[good], good] = True
            ground[r, good] = True
            alive[cols_idx[~flat]] = False

        have_prev |= m
        np.copyto(prev_row, r, where=m)
        np.copyto(prev_x, cur_x.astype(np.float64), where=m)
        np.copyto(prev_y, cur_y.astype(np.float64), where=m)
        np.copyto(prev_z, cur_z.astype(np.float64), where=m)
    return ground


def _merge_edges(img: RangeImage, free: np.ndarray, thr_rad: float):
    """Boolean edge maps: merge with right neighbour (wrapping) / below."""
    d = img.depth.astype(np.float64)

    def angle(d_a, d_b, step):
        d1 = np.maximum(d_a, d_b)
        d2 = np.minimum(d_a, d_b)
        return np.arctan2(d2 * np.sin(step), d1 - d2 * np.cos(step))

    right = np.roll(d, -1, axis=1)
    ok_right = free & np.roll(free, -1, axis=1)
    merge_right = ok_right & (angle(d, right, img.config.h_step) > thr_rad)

    merge_down = np.zeros(img.shape, dtype=bool)
    ok_down = free[:-1] & free[1:]
    merge_down[:-1] = ok_down & (
        angle(d[:-1], d[1:], img.config.v_step) > thr_rad
    )
    return merge_right, merge_down


def cluster(img: RangeImage, ground: np.ndarray,
            params: ClusterParams = ClusterParams()) -> list[InstanceProposal]:
    """Flood-fill non-ground returns into instance proposals.

    4-neighbourhood BFS with horizontal wraparound; neighbours merge when
    the angle atan2(d2 sin(step), d1 - d2 cos(step)) (d1 >= d2 the two
    depths, step the angular pixel pitch) exceeds the threshold.  Clusters
    smaller than min_points are dropped.  Output is ordered by each
    cluster's first pixel in scan order, independent of visit order.
    """
    h, w = img.shape
    free = img.mask & ~ground
    thr = np.radians(params.merge_angle_threshold)
    merge_right, merge_down = _merge_edges(img, free, thr)

    labels = np.full((h, w), -1, dtype=np.int64)
    proposals: list[InstanceProposal] = []
    for r0 in range(h):
        for c0 in range(w):
            if not free[r0, c0] or labels[r0, c0] >= 0:
                continue
            queue = deque([(r0, c0)])
            labels[r0, c0] = 0
            members = []
            while queue:
                r, c = queue.popleft()
                members.append((r, c))
                c_right = (c + 1) % w
                c_left = (c - 1) % w
                if merge_right[r, c] and labels[r, c_right] < 0:
                    labels[r, c_right] = 0
                    queue.append((r, c_right))
                if merge_right[r, c_left] and labels[r, c_left] < 0:
                    labels[r, c_left] = 0
                    queue.append((r, c_left))
                if merge_down[r, c] and labels[r + 1, c] < 0:
                    labels[r + 1, c] = 0
                    queue.append((r + 1, c))
                if r > 0 and merge_down[r - 1, c] and labels[r - 1, c] < 0:
                    labels[r - 1, c] = 0
                    queue.append((r - 1, c))
            if len(members) < params.min_points:
                continue
            rows = np.array([m[0] for m in members], dtype=np.int64)
            cols = np.array([m[1] for m in members], dtype=np.int64)
            order = np.lexsort((cols, rows))
            rows, cols = rows[order], cols[order]
            proposals.append(InstanceProposal(
                rows=rows, cols=cols,
                point_indices=img.pixel_to_point[rows, cols].astype(np.int64),
                bbox_image=_wrap_bbox(rows, cols, w),
                source="clustered",
            ))
    return proposals


def gt_instances(labeled: LabeledScan, img: RangeImage,
                 class_map) -> list[InstanceProposal]:
    """One proposal per annotated (class != None, instance id) pair.

    Only points that won a pixel participate, keeping pixel_set and
    point_indices consistent with the projection.
    """
    p2p = img.pixel_to_point
    rows, cols = np.nonzero(p2p >= 0)
    pts = p2p[rows, cols]
    classes = class_map.remap(labeled.semantic[pts])
    instances = labeled.instance[pts].astype(np.int64)

    keep = classes > 0
    rows, cols, pts = rows[keep], cols[keep], pts[keep]
    classes, instances = classes[keep], instances[keep]

    keys = classes.astype(np.int64) * 65536 + instances
    proposals = []
    for key in np.unique(keys):
        sel = keys == key
        r, c, p = rows[sel], cols[sel], pts[sel]
        order = np.lexsort((c, r))
        proposals.append(InstanceProposal(
            rows=r[order], cols=c[order],
            point_indices=p[order].astype(np.int64),
            bbox_image=_wrap_bbox(r, c, img.config.width),
            source="ground_truth",
            gt_class=ClassId(int(key // 65536)),
            gt_instance_id=int(key % 65536),
        ))
    return proposals


def save_proposals(proposals: list[InstanceProposal], path: str | Path) -> None:
    """Line format: source class_id instance_id n_points point_indices..."""
    with open(path, "w") as fh:
        for p in proposals:
            cls = int(p.gt_class) if p.gt_class is not None else -1
            inst = p.gt_instance_id if p.gt_instance_id is not None else -1
            pts = " ".join(str(i) for i in p.point_indices.tolist())
            fh.write(f"{p.source} {cls} {inst} {p.n_points} {pts}\n")


def load_proposal_points(path: str | Path) -> list[tuple[str, int, int, np.ndarray]]:
    """Parse the proposal text format back to (source, class, inst, points)."""
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            source, cls, inst, n = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
            pts = np.array([int(v) for v in parts[4:4 + n]], dtype=np.int64)
            out.append((source, cls, inst, pts))
    return out
