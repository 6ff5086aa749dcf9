"""Model parameter bundles, reference densities and conditional intensities.

Conventions: every conditional intensity here is a density with respect to
plain Lebesgue measure on the segment space (``dy dphi`` for the directional
model, ``dy dr dphi`` for the length model).  Reference densities ``g`` and
``f1`` are probability densities in ``dphi`` and ``dr`` respectively.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Union

import numpy as np
from scipy import special

from segproc.geometry import (
    Configuration,
    DiskWindow,
    Point2,
    RectWindow,
    Segment,
    contained_mask,
    hit_counts,
    max_norm_distances,
    total_intersections,
)
from segproc.numerics import Grid1D, bessel_i0, segment_space_volume, uniform_segments


class Density(Protocol):
    def pdf(self, x): ...


@dataclass(frozen=True)
class VonMisesAxial:
    """Axial von Mises law on ``[0, pi)``: ``exp(kappa cos 2(phi - mu)) / (pi I0(kappa))``."""

    mu: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    def pdf(self, phi):
        return von_mises_pdf(phi, self)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        doubled = rng.vonmises(2 * self.mu, self.kappa, n) if self.kappa > 0 else rng.uniform(-np.pi, np.pi, n)
        return np.mod(doubled / 2, np.pi)

    @property
    def sup(self) -> float:
        return math.exp(self.kappa) / (math.pi * bessel_i0(self.kappa))


@dataclass(frozen=True)
class ScaledBeta:
    """Beta(alpha, beta) law rescaled to ``[0, upper]``."""

    alpha: float = 2.0
    beta: float = 4.0
    upper: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.upper > 0):
            raise ValueError("ScaledBeta parameters must be positive")

    def pdf(self, r):
        return scaled_beta_pdf(r, self)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.upper * rng.beta(self.alpha, self.beta, n)

    @property
    def sup(self) -> float:
        a, b = self.alpha, self.beta
        if a < 1 or b < 1:
            return math.inf
        if a == 1 and b == 1:
            return 1 / self.upper
        mode = (a - 1) / (a + b - 2)
        return float(scaled_beta_pdf(mode * self.upper, self))


def von_mises_pdf(phi, params: VonMisesAxial):
    phi = np.asarray(phi, dtype=float)
    h = 1.0 / (math.pi * bessel_i0(params.kappa))
    out = h * np.exp(params.kappa * np.cos(2 * (phi - params.mu)))
    return float(out) if out.ndim == 0 else out


def scaled_beta_pdf(r, params: ScaledBeta):
    r = np.asarray(r, dtype=float)
    t = r / params.upper
    inside = (t >= 0) & (t <= 1)
    tc = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logv = (
            special.xlogy(params.alpha - 1, tc)
            + special.xlog1py(params.beta - 1, -tc)
            - special.betaln(params.alpha, params.beta)
        )
        out = np.where(inside, np.exp(logv) / params.upper, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Tabulated density; periodic grids wrap (direction grids have period pi)."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.count:
            raise ValueError("values do not match the grid")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f: Callable, grid: Grid1D, normalize: bool = True) -> "DensityGrid":
        d = cls(grid, np.asarray(f(grid.points), dtype=float))
        return d.normalized() if normalize else d

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def normalized(self) -> "DensityGrid":
        total = self.integral()
        if not total > 0:
            raise ValueError("cannot normalise a density with zero mass")
        return DensityGrid(self.grid, self.values / total)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.grid.periodic:
            per = self.grid.upper - self.grid.lower
            out = np.interp(x, self.points, self.values, period=per)
        else:
            out = np.interp(x, self.points, self.values)
        return float(out) if out.ndim == 0 else out

    @property
    def sup(self) -> float:
        return float(self.values.max())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(self.points, self.values):
                w.writerow([repr(float(x)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, periodic: bool = False) -> "DensityGrid":
        with open(path, newline="") as fh:
            rows = [(float(d["x"]), float(d["value"])) for d in csv.DictReader(fh)]
        xs = np.array([r[0] for r in rows])
        vs = np.array([r[1] for r in rows])
        if periodic:
            step = xs[1] - xs[0]
            grid = Grid1D(xs[0], xs[0] + step * xs.size, xs.size, periodic=True)
        else:
            grid = Grid1D(xs[0], xs[-1], xs.size)
        return cls(grid, vs)


RefDensity = Union[VonMisesAxial, ScaledBeta, DensityGrid]


@dataclass(frozen=True)
class SufficientStats:
    n: int
    N: int
    D: float


@dataclass(frozen=True)
class GibbsDirectionalModel:
    """Segment process with density ``c exp(a N(x)) tau^n(x) prod g(phi_i)``.

    Segments have fixed length ``r``; only centres are constrained to the window.
    """

    tau: float = 1000.0
    a: float = -0.5
    r: float = 0.12
    g: RefDensity = field(default_factory=VonMisesAxial)
    window: RectWindow = field(default_factory=RectWindow)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.a <= 0:
            raise ValueError("only inhibition (a <= 0) is supported")
        if not self.r > 0:
            raise ValueError("segment length must be positive")

    @property
    def length_law(self) -> float:
        return self.r

    @property
    def space_volume(self) -> float:
        return segment_space_volume(self.window, self.r)

    def conditional_intensities(self, x: Configuration, tests: Configuration) -> np.ndarray:
        hits = hit_counts(tests, x)
        return self.tau * np.asarray(self.g.pdf(tests.phi)) * np.exp(self.a * hits)


@dataclass(frozen=True)
class InhomogLengthModel:
    """Poisson segment process ``c 1[x in B] exp(b D(x)) tau^n(x) prod f1(r_i)`` on a disk."""

    tau: float = 900.0
    b: float = 3.0
    f1: RefDensity = field(default_factory=ScaledBeta)
    window: DiskWindow = field(default_factory=DiskWindow)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def length_law(self) -> str:
        return "uniform"

    @property
    def space_volume(self) -> float:
        return segment_space_volume(self.window, "uniform")

    def intensity(self, u: Configuration) -> np.ndarray:
        """First-order intensity ``tau f1(r) exp(b d(u)) 1[u in B]``."""
        inside = contained_mask(u, self.window)
        d = max_norm_distances(u, self.window)
        return np.where(inside, self.tau * np.asarray(self.f1.pdf(u.r)) * np.exp(self.b * d), 0.0)

    def conditional_intensities(self, x: Configuration, tests: Configuration) -> np.ndarray:
        if len(x) and not contained_mask(x, self.window).all():
            return np.zeros(len(tests))
        return self.intensity(tests)


def sufficient_stats(x: Configuration, window: DiskWindow | None = None) -> SufficientStats:
    D = float(max_norm_distances(x, window).sum()) if window is not None else 0.0
    return SufficientStats(n=len(x), N=total_intersections(x), D=D)


def conditional_intensity_gibbs(x: Configuration, u: Segment, m: GibbsDirectionalModel) -> float:
    return float(m.conditional_intensities(x, Configuration.from_segments([u]))[0])


def conditional_intensity_inhomog(x: Configuration, u: Segment, m: InhomogLengthModel) -> float:
    return float(m.conditional_intensities(x, Configuration.from_segments([u]))[0])


def interaction_factor(a: float, intensity_mass: float) -> float:
    """Poisson expectation of ``exp(a N_x(u))`` when ``u`` meets intensity mass ``intensity_mass``."""
    if intensity_mass < 0:
        raise ValueError("intensity mass must be nonnegative")
    return math.exp(math.expm1(a) * intensity_mass)


def _abs_sin_coefficients(kmax: int) -> np.ndarray:
    # |sin x| = 2/pi - (4/pi) sum_k cos(2kx)/(4k^2 - 1); exponential-form coefficients
    k = np.arange(kmax + 1)
    return -2.0 / (math.pi * (4.0 * k**2 - 1.0))


def j_integral(phi, f_x: DensityGrid):
    """``int_0^pi |sin(phi - beta)| f_x(beta) dbeta`` for a periodic direction grid.

    The grid is expanded as a trigonometric polynomial and convolved with the
    Fourier series of ``|sin|`` term by term.
    """
    if not f_x.grid.periodic:
        raise ValueError("j_integral needs a periodic direction grid")
    period = f_x.grid.upper - f_x.grid.lower
    n = f_x.grid.count
    c = np.fft.rfft(f_x.values) / n
    a = _abs_sin_coefficients(c.size - 1)
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    coef = w * a * c
    phi = np.asarray(phi, dtype=float)
    freq = 2 * math.pi / period * np.arange(c.size)
    theta = np.multiply.outer(phi - f_x.grid.lower, freq)
    out = period * (np.cos(theta) @ coef.real - np.sin(theta) @ coef.imag)
    return float(out) if out.ndim == 0 else out


def _clip_normalize(grid: Grid1D, values) -> DensityGrid:
    v = np.clip(np.nan_to_num(np.asarray(values, dtype=float), nan=0.0, posinf=0.0), 0.0, None)
    return DensityGrid(grid, v).normalized()


def reference_direction_from_palm(f_x: DensityGrid, C: float, a: float, tau: float, r: float) -> DensityGrid:
    """Reference direction density from the observed one, via the Poisson interaction approximation."""
    if not (C > 0 and tau > 0 and a <= 0):
        raise ValueError("need C > 0, tau > 0 and a <= 0")
    jv = j_integral(f_x.points, f_x)
    vals = C * f_x.values / (tau * np.exp(math.expm1(a) * C * r**2 * jv))
    return _clip_normalize(f_x.grid, vals)


def reference_length_from_palm(
    palm: Callable,
    b: float,
    y: Point2,
    window: DiskWindow,
    grid: Grid1D,
    phi_fixed: float = 0.0,
) -> DensityGrid:
    """Reference length density from a Palm length-direction density at centre ``y``.

    ``palm(r, phi)`` is evaluated along ``phi = phi_fixed``, divided by
    ``exp(b d(u))`` and renormalised; lengths for which ``u`` leaves the disk
    get zero weight.
    """
    rs = grid.points
    u = Configuration(np.full(rs.size, y[0]), np.full(rs.size, y[1]), np.maximum(rs, 1e-300), np.full(rs.size, phi_fixed))
    d = max_norm_distances(u, window)
    inside = contained_mask(u, window)
    vals = np.where(inside, np.asarray(palm(rs, np.full(rs.size, phi_fixed))) * np.exp(-b * d), 0.0)
    return _clip_normalize(grid, vals)


TestFunction = Callable[[Configuration, Configuration], np.ndarray]
IntensityFunction = Callable[[Configuration, Configuration], np.ndarray]


def unit_test_function(tests: Configuration, x: Configuration) -> np.ndarray:
    return np.ones(len(tests))


def hits_test_function(tests: Configuration, x: Configuration) -> np.ndarray:
    return hit_counts(tests, x).astype(float)


TEST_FUNCTIONS = {"unit": unit_test_function, "hits": hits_test_function}


@dataclass(frozen=True)
class GnzTerms:
    observed: float
    integral: float
    integral_se: float
    variance: float

    @property
    def residual(self) -> float:
        return self.observed - self.integral


def gnz_terms(
    x: Configuration,
    q: TestFunction,
    lam: IntensityFunction,
    window,
    length_law,
    j_mc: int,
    rng: np.random.Generator,
) -> GnzTerms:
    """Both sides of the GNZ innovation for one realisation.

    ``q(tests, x)`` and ``lam(x, tests)`` are vectorised over test segments and
    must skip entries of ``x`` identical to the test segment (so that the
    observed sum sees ``x`` without ``u``).  ``variance`` is the Monte Carlo
    estimate of ``int lam q^2``, the leading term of the residual variance.
    """
    observed = float(np.sum(q(x, x))) if len(x) else 0.0
    tests = uniform_segments(j_mc, window, length_law, rng)
    vol = segment_space_volume(window, length_law)
    qv = np.asarray(q(tests, x), dtype=float)
    vals = np.asarray(lam(x, tests)) * qv
    integral = vol * float(np.mean(vals))
    se = vol * float(np.std(vals, ddof=1)) / math.sqrt(j_mc) if j_mc > 1 else math.inf
    variance = vol * float(np.mean(vals * qv))
    return GnzTerms(observed, integral, se, variance)


def gnz_residual(x, q, lam, window, length_law, j_mc, rng) -> float:
    """Empirical innovation ``sum_u q(u, x - u) - int lam(x, u) q(u, x) du``."""
    return gnz_terms(x, q, lam, window, length_law, j_mc, rng).residual
