"""Planar segments, windows and the geometric statistics used by both models.

A segment is parametrised by its centre, length and axial direction in
``[0, pi)``.  Configurations are stored column-wise (struct of arrays) so the
statistics can be vectorised; iterating a :class:`Configuration` yields
:class:`Segment` objects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Union

import numpy as np

from segproc import _kernels

EPS = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


def canonical_direction(phi):
    """Reduce axial directions to ``[0, pi)``."""
    out = np.mod(phi, np.pi)
    # np.mod returns exactly pi for tiny negative inputs
    return np.where(out >= np.pi, 0.0, out)


@dataclass(frozen=True)
class Segment:
    center: Point2
    length: float
    direction: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"segment length must be positive, got {self.length}")
        object.__setattr__(self, "center", Point2(float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "direction", float(canonical_direction(float(self.direction))))


@dataclass(frozen=True)
class RectWindow:
    x0: float = 0.0
    y0: float = 0.0
    width: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("window must have positive area")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def centroid(self) -> Point2:
        return Point2(self.x0 + self.width / 2, self.y0 + self.height / 2)

    def contains_points(self, x, y):
        return (x >= self.x0) & (x <= self.x0 + self.width) & (y >= self.y0) & (y <= self.y0 + self.height)

    def sample_points(self, n: int, rng: np.random.Generator):
        return (self.x0 + self.width * rng.random(n), self.y0 + self.height * rng.random(n))


@dataclass(frozen=True)
class DiskWindow:
    """Disk centred at the origin, described by its diameter."""

    diameter: float = 1.0

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("disk diameter must be positive")

    @property
    def radius(self) -> float:
        return self.diameter / 2

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def centroid(self) -> Point2:
        return Point2(0.0, 0.0)

    def contains_points(self, x, y):
        return np.hypot(x, y) <= self.radius + EPS

    def sample_points(self, n: int, rng: np.random.Generator):
        rad = self.radius * np.sqrt(rng.random(n))
        ang = 2 * np.pi * rng.random(n)
        return rad * np.cos(ang), rad * np.sin(ang)


Window = Union[RectWindow, DiskWindow]


@dataclass(frozen=True, eq=False)
class Configuration:
    """A finite collection of segments held as parallel float arrays."""

    cx: np.ndarray
    cy: np.ndarray
    r: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        arrays = [np.ascontiguousarray(np.asarray(a, dtype=float).reshape(-1)) for a in (self.cx, self.cy, self.r, self.phi)]
        if len({a.size for a in arrays}) != 1:
            raise ValueError("column arrays must share a length")
        arrays[3] = np.ascontiguousarray(canonical_direction(arrays[3]), dtype=float)
        for name, a in zip(("cx", "cy", "r", "phi"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def empty(cls) -> "Configuration":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def from_segments(cls, segments: Iterable[Segment]) -> "Configuration":
        segs = list(segments)
        if not segs:
            return cls.empty()
        return cls(
            np.array([s.center.x for s in segs]),
            np.array([s.center.y for s in segs]),
            np.array([s.length for s in segs]),
            np.array([s.direction for s in segs]),
        )

    def __len__(self) -> int:
        return self.cx.size

    def __iter__(self) -> Iterator[Segment]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i) -> Segment:
        return Segment(Point2(self.cx[i], self.cy[i]), self.r[i], self.phi[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.columns(), other.columns()))

    def columns(self):
        return self.cx, self.cy, self.r, self.phi

    def subset(self, mask) -> "Configuration":
        return Configuration(self.cx[mask], self.cy[mask], self.r[mask], self.phi[mask])

    def without(self, i: int) -> "Configuration":
        keep = np.ones(len(self), dtype=bool)
        keep[i] = False
        return self.subset(keep)

    def with_segment(self, u: Segment) -> "Configuration":
        return Configuration(
            np.append(self.cx, u.center.x),
            np.append(self.cy, u.center.y),
            np.append(self.r, u.length),
            np.append(self.phi, u.direction),
        )

    def endpoints(self):
        """Return ``(x1, y1, x2, y2)`` arrays."""
        hx = 0.5 * self.r * np.cos(self.phi)
        hy = 0.5 * self.r * np.sin(self.phi)
        return self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cx", "cy", "r", "phi"])
            for row in zip(*self.columns()):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Configuration":
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["cx", "cy", "r", "phi"]:
                raise ValueError(f"{path}: expected header cx,cy,r,phi, got {reader.fieldnames}")
            rows = [(float(d["cx"]), float(d["cy"]), float(d["r"]), float(d["phi"])) for d in reader]
        if not rows:
            return cls.empty()
        cols = np.array(rows).T
        return cls(*cols)


def endpoints(s: Segment) -> tuple[Point2, Point2]:
    hx = 0.5 * s.length * math.cos(s.direction)
    hy = 0.5 * s.length * math.sin(s.direction)
    c = s.center
    return Point2(c.x - hx, c.y - hy), Point2(c.x + hx, c.y + hy)


def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return np.where(np.abs(v) <= EPS, 0, np.sign(v))


def _on_box(px, py, ax, ay, bx, by):
    return (
        (px >= np.minimum(ax, bx) - EPS)
        & (px <= np.maximum(ax, bx) + EPS)
        & (py >= np.minimum(ay, by) - EPS)
        & (py <= np.maximum(ay, by) + EPS)
    )


def segments_intersect(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    """Vectorised closed-segment intersection test on endpoint arrays."""
    o1 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
    o2 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
    o3 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
    o4 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
    general = (o1 != o2) & (o3 != o4)
    touching = (
        ((o1 == 0) & _on_box(q1x, q1y, p1x, p1y, p2x, p2y))
        | ((o2 == 0) & _on_box(q2x, q2y, p1x, p1y, p2x, p2y))
        | ((o3 == 0) & _on_box(p1x, p1y, q1x, q1y, q2x, q2y))
        | ((o4 == 0) & _on_box(p2x, p2y, q1x, q1y, q2x, q2y))
    )
    return general | touching


def intersects(u: Segment, v: Segment) -> bool:
    (a1, a2), (b1, b2) = endpoints(u), endpoints(v)
    return bool(segments_intersect(a1.x, a1.y, a2.x, a2.y, b1.x, b1.y, b2.x, b2.y))


def _is_entry(x: Configuration, u: Segment):
    return (x.cx == u.center.x) & (x.cy == u.center.y) & (x.r == u.length) & (x.phi == u.direction)


def hit_count(u: Segment, x: Configuration) -> int:
    """Number of segments of ``x`` hit by ``u``; entries identical to ``u`` are skipped."""
    if len(x) == 0:
        return 0
    (a1, a2) = endpoints(u)
    x1, y1, x2, y2 = x.endpoints()
    hit = segments_intersect(a1.x, a1.y, a2.x, a2.y, x1, y1, x2, y2)
    return int(np.count_nonzero(hit & ~_is_entry(x, u)))


def hit_counts(tests: Configuration, x: Configuration) -> np.ndarray:
    """``hit_count`` of every segment of ``tests`` against ``x`` (compiled loop)."""
    return _kernels.hit_counts(*tests.columns(), *x.columns())


def total_intersections(x: Configuration) -> int:
    """Number of unordered intersecting pairs in ``x``."""
    return int(_kernels.total_intersections(*x.columns()))


def max_norm_distance(u: Segment, w: DiskWindow) -> float:
    a, b = endpoints(u)
    return max(math.hypot(*a), math.hypot(*b)) / w.diameter


def max_norm_distances(x: Configuration, w: DiskWindow) -> np.ndarray:
    x1, y1, x2, y2 = x.endpoints()
    return np.maximum(np.hypot(x1, y1), np.hypot(x2, y2)) / w.diameter


def contained_in_disk(u: Segment, w: DiskWindow) -> bool:
    return max_norm_distance(u, w) <= 0.5 + EPS


def contained_mask(x: Configuration, w: DiskWindow) -> np.ndarray:
    return max_norm_distances(x, w) <= 0.5 + EPS


def rotate(u: Segment, angle: float) -> Segment:
    c, s = math.cos(angle), math.sin(angle)
    x, y = u.center
    return Segment(Point2(c * x - s * y, s * x + c * y), u.length, u.direction + angle)


def rotate_configuration(x: Configuration, angle) -> Configuration:
    """Rotate every segment about the origin; ``angle`` may be per-segment."""
    c, s = np.cos(angle), np.sin(angle)
    return Configuration(c * x.cx - s * x.cy, s * x.cx + c * x.cy, x.r, x.phi + angle)
