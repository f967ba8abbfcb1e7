"""Synthetic training scenes for the five classes.

Five archetypes are sampled as 3D surface point clouds and written as
raw scan/label file pairs (16-byte float32 records; uint32 labels with
semantic low and instance high).  The inference package's own CLI then
projects them and dumps LPCH patches: annotated objects through its
ground-truth instance mode, background structures (walls, poles) through
its clustering mode so the reject class sees realistic cluster shapes.

Appearance is deliberately class-coded: silhouette-alike pairs
(car vs. wall segment, pedestrian vs. pole) separate only through
intensity and surface structure, so channel ablations have something to
measure.
"""

from __future__ import annotations

import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SEMANTIC = {"car": 10, "truck": 18, "bike": 11, "pedestrian": 30,
            "wall": 50, "pole": 80}
THING_ARCHETYPES = ("car", "truck", "bike", "pedestrian")
NONE_ARCHETYPES = ("wall", "pole")
ALL_CHANNELS = ("x", "y", "z", "intensity", "depth", "hnv", "vnv")

GROUND_Z = -1.8


@dataclass(frozen=True)
class GridSpec:
    height: int = 64
    width: int = 1024
    fov_up: float = 3.0
    fov_down: float = -25.0

    @property
    def min_step(self) -> float:
        h = 2 * np.pi / self.width
        v = np.radians(self.fov_up - self.fov_down) / (self.height - 1)
        return min(h, v)


def _box_faces(rng, length, width, height, yaw, dense):
    """Sample the two sensor-facing vertical faces and the top of a box
    centred at the origin (x toward the sensor before yaw)."""
    pts = []
    hl, hw = length / 2, width / 2

    def face(u_axis, v_axis, origin):
        nu = max(3, int(np.linalg.norm(u_axis) / dense))
        nv = max(3, int(np.linalg.norm(v_axis) / dense))
        uu, vv = np.meshgrid(np.linspace(0, 1, nu), np.linspace(0, 1, nv),
                             indexing="ij")
        return (origin[None, :] + uu.reshape(-1, 1) * u_axis[None, :]
                + vv.reshape(-1, 1) * v_axis[None, :])

    # front face (faces the sensor), one side face, the top
    pts.append(face(np.array([0.0, width, 0.0]), np.array([0.0, 0.0, height]),
                    np.array([-hl, -hw, 0.0])))
    side_y = -hw if rng.random() < 0.5 else hw
    pts.append(face(np.array([length, 0.0, 0.0]),
                    np.array([0.0, 0.0, height]),
                    np.array([-hl, side_y, 0.0])))
    pts.append(face(np.array([length, 0.0, 0.0]),
                    np.array([0.0, width, 0.0]),
                    np.array([-hl, -hw, height])))
    pts = np.concatenate(pts)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T


def _cylinder(rng, radius, height, dense, lobes=1):
    n_around = max(8, int(2 * np.pi * radius / dense))
    n_up = max(4, int(height / dense))
    ang = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    z = np.linspace(0, height, n_up)
    aa, zz = np.meshgrid(ang, z, indexing="ij")
    r = np.full(aa.shape, radius)
    if lobes == 2:  # split the lower half into two leg-like lobes
        lower = zz < 0.45 * height
        r[lower] *= 0.55 + 0.25 * np.sign(np.sin(aa[lower]))
    return np.stack([r * np.cos(aa), r * np.sin(aa), zz],
                    axis=-1).reshape(-1, 3)


def _archetype_points(rng, kind, distance, dense):
    """Surface points centred at origin, base at z = 0, plus intensity."""
    if kind == "car":
        length = rng.uniform(3.8, 4.6)
        pts = _box_faces(rng, length, rng.uniform(1.7, 1.9),
                         rng.uniform(1.4, 1.6), rng.uniform(0, np.pi), dense)
        inten = np.full(len(pts), 0.78) + rng.normal(0, 0.04, len(pts))
        plates = rng.random(len(pts)) < 0.06
        inten[plates] = 0.97
    elif kind == "truck":
        pts = _box_faces(rng, rng.uniform(7.0, 11.0), rng.uniform(2.4, 2.6),
                         rng.uniform(2.8, 3.4), rng.uniform(0, np.pi), dense)
        inten = np.full(len(pts), 0.34) + rng.normal(0, 0.04, len(pts))
    elif kind == "bike":
        pts = _box_faces(rng, rng.uniform(1.6, 2.0), rng.uniform(0.3, 0.5),
                         rng.uniform(1.0, 1.3), rng.uniform(0, np.pi), dense)
        keep = rng.random(len(pts)) < 0.55  # open frame, sparse returns
        pts = pts[keep]
        inten = np.full(len(pts), 0.60) + rng.normal(0, 0.05, len(pts))
    elif kind == "pedestrian":
        # height stat stays inside [1.0, 2.0] by construction
        pts = _cylinder(rng, rng.uniform(0.22, 0.34),
                        rng.uniform(1.45, 1.90), dense, lobes=2)
        inten = np.full(len(pts), 0.50) + rng.normal(0, 0.03, len(pts))
    elif kind == "wall":
        # car-silhouette background slab, flat and dark
        pts = _box_faces(rng, rng.uniform(3.8, 4.6), 0.15,
                         rng.uniform(1.4, 1.6), rng.uniform(0, np.pi), dense)
        inten = np.full(len(pts), 0.18) + rng.normal(0, 0.03, len(pts))
    elif kind == "pole":
        # pedestrian-silhouette background cylinder
        pts = _cylinder(rng, rng.uniform(0.20, 0.33),
                        rng.uniform(1.45, 1.90), dense)
        inten = np.full(len(pts), 0.18) + rng.normal(0, 0.03, len(pts))
    else:
        raise ValueError(f"unknown archetype {kind!r}")
    return pts, np.clip(inten, 0.0, 1.0)


def _place(rng, pts, distance, azimuth):
    centre = np.array([distance * np.cos(azimuth),
                       distance * np.sin(azimuth), GROUND_Z])
    c, s = np.cos(azimuth), np.sin(azimuth)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T + centre


ARCHETYPE_DISTANCES = {
    "car": (6.0, 22.0), "wall": (6.0, 22.0),
    "truck": (9.0, 28.0),
    "bike": (4.5, 14.0),
    "pedestrian": (4.5, 14.0), "pole": (4.5, 14.0),
}


def build_scene(rng, kinds, grid: GridSpec):
    """One scan: each archetype in its own azimuth band.

    Returns (xyz float32 (N,3), intensity (N,), semantic (N,) u16,
    instance (N,) u16).
    """
    xyz, inten, sem, inst = [], [], [], []
    slots = rng.permutation(len(kinds))
    for i, kind in enumerate(kinds):
        lo, hi = ARCHETYPE_DISTANCES[kind]
        distance = float(rng.uniform(lo, hi))
        band = 2 * np.pi * (slots[i] + 0.5) / len(kinds)
        azimuth = band + rng.uniform(-0.25, 0.25) * 2 * np.pi / len(kinds)
        dense = max(0.02, 0.45 * distance * grid.min_step)
        pts, vals = _archetype_points(rng, kind, distance, dense)
        pts = _place(rng, pts, distance, azimuth)
        xyz.append(pts)
        inten.append(vals)
        sem.append(np.full(len(pts), SEMANTIC[kind], dtype=np.uint16))
        inst.append(np.full(len(pts), i + 1, dtype=np.uint16))
    return (np.concatenate(xyz).astype(np.float32),
            np.concatenate(inten).astype(np.float32),
            np.concatenate(sem), np.concatenate(inst))


def write_scan(path_bin: Path, path_label: Path, xyz, inten, sem, inst):
    records = np.empty((len(xyz), 4), dtype="<f4")
    records[:, :3] = xyz
    records[:, 3] = inten
    records.tofile(str(path_bin))
    words = (inst.astype(np.uint32) << 16) | sem.astype(np.uint32)
    words.astype("<u4").tofile(str(path_label))


def _pipeline_ini(root: Path, grid: GridSpec, weights: Path) -> Path:
    path = root / "pipeline.ini"
    path.write_text(
        "[projection]\n"
        f"height = {grid.height}\n"
        f"width = {grid.width}\n"
        f"fov_up = {grid.fov_up}\n"
        f"fov_down = {grid.fov_down}\n"
        "[channels]\n"
        f"names = {' '.join(ALL_CHANNELS)}\n"
        "[cluster]\n"
        "min_points = 12\n"
        "[model]\n"
        f"weights = {weights}\n"
        "[data]\n"
        f"root = {root}\n"
    )
    return path


def _run_cli(args: list[str]) -> None:
    cmd = [sys.executable, "-m", "lidarpatch.cli", *args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"lidarpatch CLI failed ({proc.returncode}): {' '.join(cmd)}\n"
            f"{proc.stdout}\n{proc.stderr}")


def generate_scenes(out_root: str | Path, seed: int, n_per_class: int,
                    n_folds: int = 8, grid: GridSpec = GridSpec()) -> Path:
    """Write scan/label files and run the inference CLI to dump patches.

    Layout: sequences/<fold>/velodyne/*.bin with thing scenes numbered
    0000xx (ground-truth instance dumps) and background scenes 1000xx
    (clustered dumps); LPCH files land in dumps/<fold>/{gt,none}/patches.
    Deterministic for a fixed seed.
    """
    out_root = Path(out_root)
    rng = np.random.default_rng(seed)

    weights = out_root / "dump_model.lcnw"
    out_root.mkdir(parents=True, exist_ok=True)
    _run_cli(["gen-weights", "--seed", "0",
              "--set", f"channels.names={' '.join(ALL_CHANNELS)}",
              "--out", str(weights)])
    ini = _pipeline_ini(out_root, grid, weights)

    n_none_scenes = (n_per_class + 1) // 2
    for fold in range(n_folds):
        seq = out_root / "sequences" / f"{fold:02d}"
        (seq / "velodyne").mkdir(parents=True, exist_ok=True)
        (seq / "labels").mkdir(parents=True, exist_ok=True)

    thing_ids: dict[int, list[str]] = {f: [] for f in range(n_folds)}
    none_ids: dict[int, list[str]] = {f: [] for f in range(n_folds)}
    for i in range(n_per_class):
        fold = i % n_folds
        sid = f"{len(thing_ids[fold]):06d}"
        seq = out_root / "sequences" / f"{fold:02d}"
        data = build_scene(rng, THING_ARCHETYPES, grid)
        write_scan(seq / "velodyne" / f"{sid}.bin",
                   seq / "labels" / f"{sid}.label", *data)
        thing_ids[fold].append(sid)
    for i in range(n_none_scenes):
        fold = i % n_folds
        sid = f"{100000 + len(none_ids[fold]):06d}"
        seq = out_root / "sequences" / f"{fold:02d}"
        data = build_scene(rng, NONE_ARCHETYPES, grid)
        write_scan(seq / "velodyne" / f"{sid}.bin",
                   seq / "labels" / f"{sid}.label", *data)
        none_ids[fold].append(sid)

    for fold in range(n_folds):
        if thing_ids[fold]:
            _run_cli(["classify", "-c", str(ini),
                      "--sequence", f"{fold:02d}",
                      "--scans", ",".join(thing_ids[fold]),
                      "--source", "gt", "--dump-patches",
                      "--out", str(out_root / "dumps" / f"{fold:02d}" / "gt")])
        if none_ids[fold]:
            _run_cli(["classify", "-c", str(ini),
                      "--sequence", f"{fold:02d}",
                      "--scans", ",".join(none_ids[fold]),
                      "--source", "cluster", "--dump-patches",
                      "--out", str(out_root / "dumps" / f"{fold:02d}" / "none")])
    return out_root
