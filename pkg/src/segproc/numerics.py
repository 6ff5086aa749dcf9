"""Special functions, quadrature, root finding, RNG streams and uniform segments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import optimize, special

from segproc.geometry import Configuration, DiskWindow, Window


class BracketError(ValueError):
    """The function does not change sign over the supplied bracket."""

    def __init__(self, message, lo=None, hi=None, f_lo=None, f_hi=None):
        super().__init__(message)
        self.lo, self.hi, self.f_lo, self.f_hi = lo, hi, f_lo, f_hi


def make_rng(seed: int, *index: int) -> np.random.Generator:
    """Counter-based generator for the stream ``(seed, *index)``.

    Streams with different index tuples are independent by construction
    (``SeedSequence`` spawn keys), so replications can run in any order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


def bessel_i0(kappa):
    """Modified Bessel function of the first kind, order 0."""
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0):
        raise ValueError("bessel_i0 requires kappa >= 0")
    out = special.i0(k)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Grid1D:
    """Evaluation grid.

    A periodic grid holds ``count`` points ``lower + k*step`` with
    ``step = (upper - lower)/count`` (``upper`` is identified with ``lower``);
    otherwise the points are ``linspace(lower, upper, count)``.
    """

    lower: float
    upper: float
    count: int = 100
    periodic: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError("grid bounds must be finite with lower < upper")
        if self.count < 2:
            raise ValueError("grid needs at least two points")

    @classmethod
    def directions(cls, count: int = 100) -> "Grid1D":
        return cls(0.0, math.pi, count, periodic=True)

    @classmethod
    def interior(cls, lower: float, upper: float, count: int = 100) -> "Grid1D":
        """Cell-midpoint grid, i.e. ``count`` points strictly inside ``(lower, upper)``."""
        h = (upper - lower) / count
        return cls(lower + h / 2, upper - h / 2, count)

    @property
    def step(self) -> float:
        if self.periodic:
            return (self.upper - self.lower) / self.count
        return (self.upper - self.lower) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        if self.periodic:
            return self.lower + self.step * np.arange(self.count)
        return np.linspace(self.lower, self.upper, self.count)

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if self.periodic:
            return float(values.sum() * self.step)
        return float(np.trapezoid(values, dx=self.step))


def simpson_nodes(a: float, b: float, m: int = 100):
    """Nodes and weights of the composite Simpson rule with ``m`` (even) panels."""
    if m <= 0 or m % 2:
        raise ValueError(f"Simpson needs an even positive panel count, got {m}")
    if not a < b:
        raise ValueError("simpson requires a < b")
    x = np.linspace(a, b, m + 1)
    w = np.full(m + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (b - a) / (3 * m)


def simpson(f: Callable, a: float, b: float, m: int = 100) -> float:
    """Composite Simpson rule with ``m`` (even) panels; ``f`` must accept arrays."""
    x, w = simpson_nodes(a, b, m)
    return float(np.dot(w, np.asarray(f(x), dtype=float)))


def solve_scalar(f: Callable[[float], float], bracket, tol: float = 1e-10) -> float:
    """Bracketed root of ``f`` (Brent: bisection with secant/inverse-quadratic steps)."""
    lo, hi = map(float, bracket)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={f_lo:.6g}, {f_hi:.6g}", lo, hi, f_lo, f_hi)
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


LengthLaw = Union[float, str]


def segment_space_volume(window: Window, length_law: LengthLaw) -> float:
    """Lebesgue volume of the segment space window x lengths x [0, pi)."""
    vol = window.area * math.pi
    if length_law == "uniform":
        if not isinstance(window, DiskWindow):
            raise ValueError("uniform length law needs a disk window (lengths on [0, e_a])")
        vol *= window.diameter
    return vol


def uniform_segments(n: int, window: Window, length_law: LengthLaw, rng: np.random.Generator) -> Configuration:
    """``n`` independent segments, uniform in (centre, direction, length).

    ``length_law`` is either a fixed length or ``"uniform"`` (uniform on
    ``[0, e_a]`` for a disk window of diameter ``e_a``).
    """
    cx, cy = window.sample_points(n, rng)
    phi = math.pi * rng.random(n)
    if length_law == "uniform":
        if not isinstance(window, DiskWindow):
            raise ValueError("uniform length law needs a disk window")
        # (0, e_a]: keeps every length strictly positive
        r = window.diameter * (1.0 - rng.random(n))
    else:
        r = np.full(n, float(length_law))
    return Configuration(cx, cy, r, phi)
