"""Quadratic regions of the complex plane and intersections of them.

A region is ``S(Pi) = {z : a|z|^2 + 2b Re z + c >= 0}`` for a symmetric
``Pi = [[a, b], [b, c]]`` with ``det(Pi) < 0``; depending on ``a`` it is the
interior of a disk centred on the real axis, its exterior, or a vertical
half-plane.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

MEMBERSHIP_EPS = 1e-9
DEGENERATE_RTOL = 1e-9
DET_SLACK = 1e-12

DISK_IN, DISK_OUT, HALFPLANE = "disk_in", "disk_out", "halfplane"


@dataclass(frozen=True)
class PiMatrix:
    a: float
    b: float
    c: float

    @property
    def det(self) -> float:
        return self.a * self.c - self.b * self.b

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, self.c]])

    def quad(self, z):
        """``[z; 1]^* Pi [z; 1]`` (vectorized over ``z``)."""
        z = np.asarray(z)
        return self.a * (z.real ** 2 + z.imag ** 2) + 2.0 * self.b * z.real + self.c

    def admissible(self) -> bool:
        return self.det < DET_SLACK


def make_pi(sigma: int, lambda_c: float, r: float) -> PiMatrix:
    """``sigma * [[1, -lc], [-lc, lc^2 - r^2]]``; interior for -1, exterior for +1."""
    if sigma not in (-1, 1):
        raise ValueError("sigma must be +1 or -1")
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    return PiMatrix(float(sigma), -sigma * lambda_c, sigma * (lambda_c ** 2 - r ** 2))


@dataclass(frozen=True)
class RegionSpec:
    """One disk interior, disk exterior or half-plane.

    The half-plane with ``sign`` s and offset ``c`` is ``2 s Re z + c >= 0``,
    i.e. the region of ``Pi = [[0, s], [s, c]]``.
    """

    kind: str
    lambda_c: float = 0.0
    r: float = 0.0
    sign: int = 0
    c: float = 0.0

    def __post_init__(self):
        if self.kind in (DISK_IN, DISK_OUT):
            if not (self.r > 0 and math.isfinite(self.r) and math.isfinite(self.lambda_c)):
                raise ValueError(f"invalid disk ({self.lambda_c}, {self.r})")
        elif self.kind == HALFPLANE:
            if self.sign not in (-1, 1) or not math.isfinite(self.c):
                raise ValueError(f"invalid half-plane (sign={self.sign}, c={self.c})")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def disk_in(cls, lambda_c: float, r: float) -> "RegionSpec":
        return cls(DISK_IN, float(lambda_c), float(r))

    @classmethod
    def disk_out(cls, lambda_c: float, r: float) -> "RegionSpec":
        return cls(DISK_OUT, float(lambda_c), float(r))

    @classmethod
    def halfplane(cls, sign: int, c: float) -> "RegionSpec":
        return cls(HALFPLANE, sign=int(sign), c=float(c))

    @property
    def is_disk(self) -> bool:
        return self.kind != HALFPLANE

    @property
    def sigma(self) -> int:
        return -1 if self.kind == DISK_IN else 1

    @property
    def pi(self) -> PiMatrix:
        if self.kind == HALFPLANE:
            return PiMatrix(0.0, float(self.sign), self.c)
        return make_pi(self.sigma, self.lambda_c, self.r)

    @property
    def boundary_re(self) -> float:
        """Real part of the boundary line of a half-plane."""
        return -self.c / (2.0 * self.sign)

    def contains(self, z, eps: float = MEMBERSHIP_EPS):
        return self.pi.quad(z) >= -eps

    def to_dict(self) -> dict:
        p = self.pi
        return {"variant": self.kind, "lambda_c": self.lambda_c, "r": self.r,
                "sign": self.sign, "c": self.c, "pi": [[p.a, p.b], [p.b, p.c]]}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionSpec":
        kind = d["variant"]
        if kind == HALFPLANE:
            return cls.halfplane(d["sign"], d["c"])
        return cls(kind, float(d["lambda_c"]), float(d["r"]))

    def describe(self) -> str:
        if self.kind == HALFPLANE:
            op = ">=" if self.sign > 0 else "<="
            return f"Re z {op} {self.boundary_re:.6g}"
        word = "inside" if self.kind == DISK_IN else "outside"
        return f"{word} |z - {self.lambda_c:.6g}| = {self.r:.6g}"


def contains(region: RegionSpec, z, eps: float = MEMBERSHIP_EPS):
    return region.contains(z, eps)


def region_from_pi(pi: PiMatrix) -> RegionSpec:
    """Geometric classification of ``S(Pi)`` for an admissible ``Pi``."""
    a, b, c = pi.a, pi.b, pi.c
    if not pi.det < 0:
        raise ValueError("det(Pi) must be negative")
    if abs(a) <= DEGENERATE_RTOL * abs(b):
        return RegionSpec.halfplane(int(np.sign(b)), c / abs(b))
    centre = -b / a
    radius = math.sqrt(b * b / (a * a) - c / a)
    return RegionSpec.disk_out(centre, radius) if a > 0 else RegionSpec.disk_in(centre, radius)


def _contains_origin(region: RegionSpec) -> bool:
    if region.kind == DISK_IN:
        return abs(region.lambda_c) <= region.r
    if region.kind == DISK_OUT:
        return abs(region.lambda_c) >= region.r
    return region.c >= 0.0


def invert_region(region: RegionSpec) -> RegionSpec:
    """Image of ``region`` under the inversion ``z -> z / |z|^2``.

    Gains invert and phases are kept, so this maps an outer bound of a scaled
    graph to an outer bound of its inverse.
    """
    if region.kind == HALFPLANE:
        a0 = region.boundary_re
        if abs(region.c) <= DEGENERATE_RTOL:
            return region
        centre, radius = 1.0 / (2.0 * a0), 1.0 / (2.0 * abs(a0))
        if _contains_origin(region):
            return RegionSpec.disk_out(centre, radius)
        return RegionSpec.disk_in(centre, radius)

    lc, r, sigma = region.lambda_c, region.r, region.sigma
    if abs(abs(lc) - r) <= DEGENERATE_RTOL * max(abs(lc), r):
        # circle through the origin: image is a vertical line
        if lc > 0:
            return RegionSpec.halfplane(-sigma, 2.0 * sigma / (lc + r))
        return RegionSpec.halfplane(sigma, -2.0 * sigma / (lc - r))
    gap = lc * lc - r * r
    image_c, image_r = lc / gap, r / abs(gap)
    if _contains_origin(region):
        return RegionSpec.disk_out(image_c, image_r)
    return RegionSpec.disk_in(image_c, image_r)


def negate_region(region: RegionSpec) -> RegionSpec:
    """``{-z : z in region}``."""
    if region.kind == HALFPLANE:
        return RegionSpec.halfplane(-region.sign, region.c)
    return replace(region, lambda_c=-region.lambda_c)


def scale_region(region: RegionSpec, tau: float) -> RegionSpec:
    """``{tau z : z in region}`` for ``0 < tau <= 1``."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if region.kind == HALFPLANE:
        return RegionSpec.halfplane(region.sign, tau * region.c)
    return replace(region, lambda_c=tau * region.lambda_c, r=tau * region.r)


@dataclass(frozen=True)
class SGApproximation:
    """Intersection of regions known to contain a scaled graph.

    ``certificates`` is aligned with ``regions`` (entries may be ``None``).
    ``pruned`` keeps regions dropped as grid-redundant, with the reason.
    """

    regions: tuple
    certificates: tuple = ()
    system_hash: str = ""
    mode: str = "soft"
    pruned: tuple = ()

    def __post_init__(self):
        regions = tuple(self.regions)
        if not regions:
            raise ValueError("an approximation needs at least one region")
        certs = tuple(self.certificates) or (None,) * len(regions)
        if len(certs) != len(regions):
            raise ValueError("certificates must align with regions")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "certificates", certs)
        object.__setattr__(self, "pruned", tuple(self.pruned))

    def contains(self, z, eps: float = MEMBERSHIP_EPS):
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        alive = np.arange(flat.size)
        for region in self.regions:
            if alive.size == 0:
                break
            alive = alive[region.contains(flat[alive], eps)]
        out = np.zeros(flat.size, bool)
        out[alive] = True
        return out.reshape(z.shape) if z.ndim else bool(out[0])

    def intersect(self, region: RegionSpec, certificate=None, prune_window=None,
                  prune_resolution: int = 256) -> "SGApproximation":
        """Add ``region``; with ``prune_window`` drop it when grid-redundant."""
        if not region.pi.admissible():
            raise ValueError("region matrix is not admissible (det >= 0)")
        if prune_window is not None:
            Z = grid(prune_window, prune_resolution)
            current = self.contains(Z)
            if np.all(region.contains(Z[current])):
                return replace(self, pruned=self.pruned + ((region, "grid-redundant"),))
        return replace(self, regions=self.regions + (region,),
                       certificates=self.certificates + (certificate,))

    def map_regions(self, fn, **changes) -> "SGApproximation":
        return SGApproximation(tuple(fn(r) for r in self.regions), (),
                               changes.get("system_hash", self.system_hash),
                               changes.get("mode", self.mode))

    def scaled(self, tau: float) -> "SGApproximation":
        return self.map_regions(lambda r: scale_region(r, tau))

    def bounding_box(self):
        """Axis-aligned box implied by the interior disks and half-planes, or None."""
        xmin, xmax, ymax = -math.inf, math.inf, math.inf
        for reg in self.regions:
            if reg.kind == DISK_IN:
                xmin = max(xmin, reg.lambda_c - reg.r)
                xmax = min(xmax, reg.lambda_c + reg.r)
                ymax = min(ymax, reg.r)
            elif reg.kind == HALFPLANE:
                if reg.sign > 0:
                    xmin = max(xmin, reg.boundary_re)
                else:
                    xmax = min(xmax, reg.boundary_re)
        if not all(map(math.isfinite, (xmin, xmax, ymax))):
            return None
        return (xmin, xmax, -ymax, ymax)

    def to_list(self) -> list:
        return [r.to_dict() for r in self.regions]


def intersect(approx: SGApproximation, new_region: RegionSpec, **kw) -> SGApproximation:
    return approx.intersect(new_region, **kw)


def save_regions(approx: SGApproximation, path) -> None:
    Path(path).write_text(json.dumps(approx.to_list(), indent=1), encoding="utf-8")


def load_regions(path, mode: str = "soft") -> SGApproximation:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        mode = data.get("mode", mode)
        data = data["regions"]
    return SGApproximation(tuple(RegionSpec.from_dict(d) for d in data), mode=mode)


# --- rasterization --------------------------------------------------------

def grid_axes(window, resolution: int):
    """Cell-centre coordinates of a ``resolution x resolution`` grid."""
    xmin, xmax, ymin, ymax = map(float, window)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"empty window {window}")
    dx, dy = (xmax - xmin) / resolution, (ymax - ymin) / resolution
    xs = xmin + (np.arange(resolution) + 0.5) * dx
    ys = ymin + (np.arange(resolution) + 0.5) * dy
    return xs, ys


def grid(window, resolution: int) -> np.ndarray:
    xs, ys = grid_axes(window, resolution)
    return xs[None, :] + 1j * ys[:, None]


def _mask_of(obj, window, resolution: int) -> np.ndarray:
    """Boolean raster of an object with ``contains`` or of a point cloud."""
    if hasattr(obj, "contains"):
        return np.asarray(obj.contains(grid(window, resolution)), bool)
    pts = np.asarray(obj, dtype=complex).ravel()
    xmin, xmax, ymin, ymax = window
    ix = np.floor((pts.real - xmin) / (xmax - xmin) * resolution).astype(int)
    iy = np.floor((pts.imag - ymin) / (ymax - ymin) * resolution).astype(int)
    ok = (ix >= 0) & (ix < resolution) & (iy >= 0) & (iy < resolution)
    mask = np.zeros((resolution, resolution), bool)
    mask[iy[ok], ix[ok]] = True
    return mask


@dataclass
class Raster:
    mask: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    window: tuple
    boundaries: list = field(default_factory=list)

    @property
    def spacing(self) -> float:
        return float(max(self.xs[1] - self.xs[0], self.ys[1] - self.ys[0]))

    @property
    def cell_area(self) -> float:
        return float((self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0]))

    def filled_fraction(self) -> float:
        return float(self.mask.mean())

    def points(self) -> np.ndarray:
        iy, ix = np.nonzero(self.mask)
        return self.xs[ix] + 1j * self.ys[iy]


def boundary_polylines(mask: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> list:
    """Marching-squares contours of a boolean grid, as complex polylines."""
    from skimage import measure

    if not mask.any():
        return []
    padded = np.pad(mask.astype(float), 1)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    lines = []
    for contour in measure.find_contours(padded, 0.5):
        row, col = contour[:, 0] - 1, contour[:, 1] - 1
        lines.append((xs[0] + col * dx) + 1j * (ys[0] + row * dy))
    return lines


def rasterize(approx, window, resolution: int = 256, boundaries: bool = True) -> Raster:
    """Evaluate membership at every cell centre of ``window``."""
    if resolution < 16:
        raise ValueError("resolution must be at least 16")
    xs, ys = grid_axes(window, resolution)
    mask = _mask_of(approx, window, resolution)
    lines = boundary_polylines(mask, xs, ys) if boundaries else []
    return Raster(mask, xs, ys, tuple(map(float, window)), lines)


class Distance(NamedTuple):
    value: float
    spacing: float
    point_a: complex
    point_b: complex
    raw: float = 0.0   # uncorrected cell-centre distance


def centre_correction(raw: float, spacing: float) -> float:
    """Cell-centre distances overshoot by up to one cell per set; split the difference."""
    return max(raw - spacing, 0.0) if raw > 0 else 0.0


def _nearest(mask_a: np.ndarray, mask_b: np.ndarray, xs, ys) -> Distance:
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    spacing = float(max(dx, dy))
    if not mask_a.any() or not mask_b.any():
        raise ValueError("empty set in window")
    both = mask_a & mask_b
    if both.any():
        iy, ix = np.argwhere(both)[0]
        p = complex(xs[ix], ys[iy])
        return Distance(0.0, spacing, p, p, 0.0)
    dist, (iya, ixa) = ndimage.distance_transform_edt(
        ~mask_a, sampling=(dy, dx), return_indices=True)
    masked = np.where(mask_b, dist, np.inf)
    k = np.unravel_index(np.argmin(masked), masked.shape)
    pb = complex(xs[k[1]], ys[k[0]])
    pa = complex(xs[ixa[k]], ys[iya[k]])
    raw = float(masked[k])
    return Distance(centre_correction(raw, spacing), spacing, pa, pb, raw)


def set_distance(set_a, set_b, window, resolution: int = 512) -> Distance:
    """Grid distance between two sets (approximations or point clouds).

    The minimum cell-centre distance is shifted down by one grid spacing so
    the error is within ``+- spacing``; ``raw`` keeps the unshifted value.
    """
    xs, ys = grid_axes(window, resolution)
    return _nearest(_mask_of(set_a, window, resolution),
                    _mask_of(set_b, window, resolution), xs, ys)


def disk_distance(a: RegionSpec, b: RegionSpec) -> float:
    """Exact distance between two closed disk interiors."""
    if a.kind != DISK_IN or b.kind != DISK_IN:
        raise ValueError("disk_distance needs two interior disks")
    return max(0.0, abs(a.lambda_c - b.lambda_c) - a.r - b.r)


def warn_dropped(region: RegionSpec, why: str) -> None:
    warnings.warn(f"dropping region {region.describe()}: {why}", stacklevel=3)
