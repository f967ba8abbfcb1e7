"""Spherical range-image projection and decomposed normal-vector channels.

A scan is binned into an H x W grid (rows ~ elevation, columns ~ azimuth).
Each filled pixel carries the raw point values plus the Euclidean depth.
The horizontal / vertical normal-vector component channels (hnv, vnv)
encode, per pixel, the bisector half-angle of the two scalar angles
between the sensor ray and the segments to the left/right (resp. up/down)
neighbours.  Everything reduces to shifted-array arithmetic on the depth
channel; no 3D cross products are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

NEUTRAL_NORMAL = 0.5  # encodes a half-angle of pi/2 (flat / unknown)

# fixed emission order for channel stacks; mask is appended implicitly
CHANNEL_ORDER = ("x", "y", "z", "intensity", "depth", "hnv", "vnv")


class StateError(RuntimeError):
    """A channel was requested before it was computed."""


@dataclass(frozen=True)
class ProjectionConfig:
    """Grid geometry of the projection.

    Defaults match the HDL-64E sensor the public drives were recorded
    with: 64 beams between +3 and -25 degrees, 2048 azimuth bins.
    """

    height: int = 64
    width: int = 2048
    fov_up: float = 3.0      # degrees above horizontal
    fov_down: float = -25.0  # degrees below horizontal (negative)

    def __post_init__(self):
        if self.height < 2 or self.width < 4:
            raise ValueError(f"grid {self.height}x{self.width} too small")
        if not self.fov_up > self.fov_down:
            raise ValueError("fov_up must exceed fov_down")

    @property
    def fov_span_deg(self) -> float:
        return self.fov_up - self.fov_down

    @property
    def h_step(self) -> float:
        """Azimuth step between columns, radians."""
        return 2.0 * np.pi / self.width

    @property
    def v_step(self) -> float:
        """Elevation step between rows, radians."""
        return np.radians(self.fov_span_deg) / (self.height - 1)


@dataclass(frozen=True)
class ChannelConfig:
    """Which planes select_channels emits; the mask is always included."""

    x: bool = False
    y: bool = False
    z: bool = False
    intensity: bool = True
    depth: bool = False
    hnv: bool = True
    vnv: bool = True

    def __post_init__(self):
        if not any(self.flags()):
            raise ValueError("at least one channel flag must be set")

    def flags(self) -> tuple[bool, ...]:
        return (self.x, self.y, self.z, self.intensity, self.depth,
                self.hnv, self.vnv)

    def names(self) -> list[str]:
        return [n for n, f in zip(CHANNEL_ORDER, self.flags()) if f]

    @property
    def n_planes(self) -> int:
        """Selected channels plus the implicit mask plane."""
        return sum(self.flags()) + 1

    def wants_normals(self) -> bool:
        return self.hnv or self.vnv

    @staticmethod
    def from_names(names: str | list[str]) -> "ChannelConfig":
        if isinstance(names, str):
            names = [n for n in names.replace(",", " ").split() if n]
        wanted = {n.lower() for n in names}
        unknown = wanted - set(CHANNEL_ORDER)
        if unknown:
            raise ValueError(f"unknown channel names: {sorted(unknown)}")
        return ChannelConfig(**{n: n in wanted for n in CHANNEL_ORDER})


@dataclass(frozen=True)
class RangeImage:
    """Projected scan: per-pixel channels plus the pixel -> point map.

    Unfilled pixels hold the neutral value in every channel (0.0, and 0.5
    for the normal components).  ``pixel_to_point`` is -1 where empty.
    ``hnv``/``vnv`` are None until compute_normal_images has run.
    """

    config: ProjectionConfig
    mask: np.ndarray          # (H, W) bool
    x: np.ndarray             # (H, W) float32 meters
    y: np.ndarray
    z: np.ndarray
    intensity: np.ndarray     # (H, W) float32 in [0, 1]
    depth: np.ndarray         # (H, W) float32 Euclidean range
    pixel_to_point: np.ndarray  # (H, W) int32, -1 when empty
    n_dropped: int = 0        # points skipped (zero range / non-finite)
    hnv: np.ndarray | None = field(default=None)
    vnv: np.ndarray | None = field(default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def channel(self, name: str) -> np.ndarray:
        if name == "mask":
            return self.mask.astype(np.float32)
        value = getattr(self, name)
        if value is None:
            raise StateError(f"channel {name!r} not computed yet")
        return value


def project(scan, config: ProjectionConfig = ProjectionConfig()) -> RangeImage:
    """Spherically project a scan onto the image grid.

    Azimuth 0 (the +x axis) maps to the image centre column; elevation is
    binned linearly between fov_up (row 0) and fov_down (last row).  When
    several points fall onto one pixel the nearest wins; ties go to the
    later point in file order.  Points with zero range or non-finite
    coordinates are skipped and tallied in ``n_dropped``.
    """
    h, w = config.height, config.width
    xyz = scan.xyz.astype(np.float64)
    rng = np.linalg.norm(xyz, axis=1)
    ok = np.isfinite(rng) & (rng > 0.0) & np.all(np.isfinite(xyz), axis=1)
    n_dropped = int(len(scan) - ok.sum())

    idx = np.nonzero(ok)[0]
    px, py, pz = xyz[idx, 0], xyz[idx, 1], xyz[idx, 2]
    prng = rng[idx]

    theta = np.arctan2(py, px)
    elev_deg = np.degrees(np.arcsin(pz / prng))

    cols = np.floor((0.5 - theta / (2.0 * np.pi)) * w).astype(np.int64) % w
    rows = np.floor(
        (config.fov_up - elev_deg) / config.fov_span_deg * (h - 1) + 0.5
    ).astype(np.int64)
    np.clip(rows, 0, h - 1, out=rows)

    # write farthest first so the nearest point lands last on collisions;
    # ties resolve to the later point in file order
    order = np.lexsort((idx, -prng))

    mask = np.zeros((h, w), dtype=bool)
    chan_x = np.zeros((h, w), dtype=np.float32)
    chan_y = np.zeros((h, w), dtype=np.float32)
    chan_z = np.zeros((h, w), dtype=np.float32)
    chan_i = np.zeros((h, w), dtype=np.float32)
    chan_d = np.zeros((h, w), dtype=np.float32)
    p2p = np.full((h, w), -1, dtype=np.int32)

    r, c = rows[order], cols[order]
    mask[r, c] = True
    chan_x[r, c] = px[order]
    chan_y[r, c] = py[order]
    chan_z[r, c] = pz[order]
    chan_i[r, c] = scan.intensity[idx[order]]
    chan_d[r, c] = prng[order]
    p2p[r, c] = idx[order]

    return RangeImage(
        config=config, mask=mask, x=chan_x, y=chan_y, z=chan_z,
        intensity=chan_i, depth=chan_d, pixel_to_point=p2p,
        n_dropped=n_dropped,
    )


def _pair_angle(r_p: np.ndarray, r_n: np.ndarray, step: float) -> np.ndarray:
    """Angle at the point between the sensor ray and the neighbour segment.

    Triangle at the sensor: sides r_p (to the point) and r_n (to the
    neighbour), included angle ``step``.
    """
    return np.arctan2(r_n * np.sin(step), r_p - r_n * np.cos(step))


def _half_angle(depth, mask, near, far, step):
    """Bisector half-angle (alpha+beta)/2 in float64 for one axis.

    ``near``/``far`` shift an array to the two neighbours along the axis.
    Returns the angle array and the pixels where both neighbours exist.
    """
    alpha = _pair_angle(depth, near(depth), step)
    beta = _pair_angle(depth, far(depth), step)
    valid = mask & near(mask) & far(mask)
    return (alpha + beta) * 0.5, valid


def bisector_half_angles(depth: np.ndarray, mask: np.ndarray,
                         config: ProjectionConfig):
    """(phi_h, valid_h, phi_v, valid_v): per-pixel half-angles, radians.

    Horizontal neighbours wrap across the azimuth seam (the scan is a
    full revolution); vertical neighbours stop at the top/bottom rows.
    """
    depth = np.asarray(depth, dtype=np.float64)

    phi_h, valid_h = _half_angle(
        depth, mask,
        near=lambda a: np.roll(a, 1, axis=1),   # left neighbour
        far=lambda a: np.roll(a, -1, axis=1),   # right neighbour
        step=config.h_step,
    )

    def shift_down(a):  # row above (higher elevation)
        out = np.zeros_like(a)
        out[1:] = a[:-1]
        return out

    def shift_up(a):    # row below (lower elevation)
        out = np.zeros_like(a)
        out[:-1] = a[1:]
        return out

    phi_v, valid_v = _half_angle(depth, mask, near=shift_down, far=shift_up,
                                 step=config.v_step)
    return phi_h, valid_h, phi_v, valid_v


def compute_normal_images(img: RangeImage) -> RangeImage:
    """Fill the hnv/vnv channels from the depth channel.

    Values are (alpha+beta)/2 normalized by pi into [0, 1] and stored as
    float32 planes; pixels lacking a neighbour keep the neutral 0.5.
    """
    phi_h, valid_h, phi_v, valid_v = bisector_half_angles(
        img.depth, img.mask, img.config)

    def encode(phi, valid):
        out = np.full(img.shape, NEUTRAL_NORMAL, dtype=np.float32)
        out[valid] = (phi[valid] / np.pi).astype(np.float32)
        return out

    return replace(img, hnv=encode(phi_h, valid_h), vnv=encode(phi_v, valid_v))


def select_channels(img: RangeImage, cfg: ChannelConfig) -> np.ndarray:
    """Stack the selected planes, fixed order x,y,z,i,d,hnv,vnv + mask last.

    Raises StateError if hnv/vnv are requested before
    compute_normal_images has produced them.
    """
    planes = [img.channel(name) for name in cfg.names()]
    planes.append(img.channel("mask"))
    return np.stack(planes).astype(np.float32)


def export_channel_images(img: RangeImage, cfg: ChannelConfig, out_dir,
                          scan_id: str) -> list:
    """Write each selected plane as an 8-bit grayscale PNG.

    Files follow ``<scan_id>_<channel>.png``.  Channels already in [0, 1]
    (mask, intensity, hnv, vnv) map directly to 0..255; metric channels
    (x, y, z, depth) are min-max scaled over filled pixels for display.
    """
    from pathlib import Path

    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in cfg.names() + ["mask"]:
        plane = img.channel(name).astype(np.float64)
        if name in ("x", "y", "z", "depth"):
            filled = plane[img.mask]
            if filled.size and np.ptp(filled) > 0:
                plane = (plane - filled.min()) / np.ptp(filled)
                plane[~img.mask] = 0.0
            else:
                plane = np.zeros_like(plane)
        gray = np.round(255.0 * np.clip(plane, 0.0, 1.0)).astype(np.uint8)
        path = out_dir / f"{scan_id}_{name}.png"
        Image.fromarray(gray, mode="L").save(path)
        written.append(path)
    return written
