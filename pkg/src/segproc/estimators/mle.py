"""Maximum likelihood fit of the isotropic length model with a nonparametric reference length density.

Pipeline for one realisation ``x`` in the disk of diameter ``e_a``:

1. split centres into ``k`` annuli of width ``e_a/(2k)`` and rotate each
   segment about the origin so that its centre lands on the positive second
   axis; estimate a length-direction (Palm) density per annulus;
2. for each annulus ``j`` express the normalising constant ``C_j(b)`` by
   Simpson integration along ``phi = phi_fixed`` at ``y_j = (0, w_j)``;
3. solve the ratio of the two score equations, evaluated by Monte Carlo
   over uniform segments, for ``b``;
4. get ``tau`` from either score equation;
5. recover ``f1`` on the inner annuli and average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from segproc.geometry import (
    Configuration,
    DiskWindow,
    Point2,
    contained_mask,
    max_norm_distances,
    rotate_configuration,
)
from segproc.kde import BetaKdeParams, CircularKdeParams, ProductKde, beta_kde_eval, product_kde
from segproc.models import DensityGrid, reference_length_from_palm
from segproc.numerics import BracketError, Grid1D, make_rng, simpson_nodes, solve_scalar, uniform_segments


class MleError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str, curve=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.curve = curve


@dataclass(frozen=True)
class MleConfig:
    k: int = 6
    m: int = 100
    n_mc: int = 1_000_000
    classes: tuple = (1, 2, 3, 4)
    phi_fixed: float = 0.0
    b_bracket: tuple = (-20.0, 20.0)
    # light smoothing: the class-pooled densities have sharp containment edges
    beta_kde: BetaKdeParams = field(default_factory=lambda: BetaKdeParams(scale=0.15))
    circ_kde: CircularKdeParams = field(default_factory=lambda: CircularKdeParams(kappa=5.0))
    table_r: int = 201
    table_phi: int = 128
    grid_count: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least two classes")
        if self.m <= 0 or self.m % 2:
            raise ValueError("Simpson panel count must be even and positive")
        if self.n_mc < 1:
            raise ValueError("n_mc must be positive")
        if not self.classes or min(self.classes) < 1 or max(self.classes) > self.k:
            raise ValueError("classes must be a nonempty subset of 1..k")


@dataclass
class ClassSample:
    index: int  # 1-based class label
    level: float  # w_j
    segments: Configuration  # rotated onto the positive second axis


@dataclass
class MleResult:
    b: float
    tau: float
    tau_dist: float
    C: np.ndarray
    f1: DensityGrid
    palms: list
    observed_lengths: list
    class_counts: list
    residual: float

    def scalars(self) -> dict:
        out = {"b": self.b, "tau": self.tau, "tau_dist": self.tau_dist, "residual_b": self.residual}
        for j, c in enumerate(self.C, start=1):
            out[f"C_{j}"] = float(c)
        return out


def class_width(window: DiskWindow, k: int) -> float:
    return window.diameter / (2 * k)


def class_levels(window: DiskWindow, k: int) -> np.ndarray:
    """Representative radii ``w_j = (j - 1/2) * Delta`` for ``j = 1..k``."""
    return (np.arange(1, k + 1) - 0.5) * class_width(window, k)


def class_index(norms, window: DiskWindow, k: int) -> np.ndarray:
    """1-based annulus label: ``(j-1) Delta < |y| <= j Delta`` (the origin goes to class 1)."""
    delta = class_width(window, k)
    j = np.ceil(np.asarray(norms, dtype=float) / delta - 1e-12).astype(int)
    return np.clip(j, 1, k)


def longest_in_class(window: DiskWindow, k: int, j: int) -> float:
    """Length of the longest segment centred in annulus ``j``."""
    delta = class_width(window, k)
    return 2 * math.sqrt(max(window.radius**2 - (delta * (j - 1)) ** 2, 0.0))


def max_length_at(y: Point2, phi: float, window: DiskWindow) -> float:
    """Largest ``r`` with the segment ``(y, r, phi)`` inside the disk."""
    R = window.radius
    ux, uy = math.cos(phi), math.sin(phi)
    proj = abs(y[0] * ux + y[1] * uy)
    perp2 = y[0] ** 2 + y[1] ** 2 - proj**2
    if perp2 > R**2:
        return 0.0
    return min(2 * (math.sqrt(R**2 - perp2) - proj), window.diameter)


def _rotation_to_axis(cx, cy):
    return math.pi / 2 - np.arctan2(cy, cx)


def mle_partition(x: Configuration, window: DiskWindow, k: int) -> list[ClassSample]:
    norms = np.hypot(x.cx, x.cy)
    labels = class_index(norms, window, k)
    rotated = rotate_configuration(x, _rotation_to_axis(x.cx, x.cy))
    levels = class_levels(window, k)
    return [ClassSample(j, float(levels[j - 1]), rotated.subset(labels == j)) for j in range(1, k + 1)]


@dataclass
class ClassIntegral:
    """Simpson nodes of the normalising integral along ``phi = phi_fixed`` for one class."""

    weights: np.ndarray
    palm: np.ndarray
    d: np.ndarray

    def C_of_b(self, b: float) -> float:
        total = float(np.dot(self.weights, self.palm * np.exp(-b * self.d)))
        if not total > 0:
            raise MleError("normalising constant", "zero integral (degenerate class)")
        return 1.0 / total


def class_integral(palm: ProductKde, j: int, window: DiskWindow, config: MleConfig) -> ClassIntegral:
    y = Point2(0.0, float(class_levels(window, config.k)[j - 1]))
    r_max = max_length_at(y, config.phi_fixed, window)
    step = longest_in_class(window, config.k, j) / config.m
    panels = max(2, 2 * math.ceil(r_max / step / 2))
    rs, w = simpson_nodes(0.0, r_max, panels)
    rs_pos = np.maximum(rs, 1e-300)
    u = Configuration(np.full(rs.size, y.x), np.full(rs.size, y.y), rs_pos, np.full(rs.size, config.phi_fixed))
    d = max_norm_distances(u, window)
    return ClassIntegral(w, palm.on_line(rs, config.phi_fixed), d)


def mle_C_of_b(palm: ProductKde, j: int, b: float, window: DiskWindow, config: MleConfig) -> float:
    return class_integral(palm, j, window, config).C_of_b(b)


@dataclass
class McSums:
    """Per-class Monte Carlo sums of ``f_X`` and ``d f_X`` over uniform segments inside the disk."""

    S: np.ndarray
    T: np.ndarray
    n_mc: int
    n_inside: int


def mc_sums(palms: list[ProductKde], window: DiskWindow, config: MleConfig) -> McSums:
    rng = make_rng(config.seed, 2)
    S = np.zeros(config.k)
    T = np.zeros(config.k)
    n_inside = 0
    chunk = 250_000
    done = 0
    while done < config.n_mc:
        size = min(chunk, config.n_mc - done)
        u = uniform_segments(size, window, "uniform", rng)
        u = u.subset(contained_mask(u, window))
        n_inside += len(u)
        labels = class_index(np.hypot(u.cx, u.cy), window, config.k)
        phi_rot = u.phi + _rotation_to_axis(u.cx, u.cy)
        d = max_norm_distances(u, window)
        for j in range(1, config.k + 1):
            sel = labels == j
            f = palms[j - 1].interpolate(u.r[sel], phi_rot[sel])
            S[j - 1] += math.fsum(f)
            T[j - 1] += math.fsum(f * d[sel])
        done += size
    return McSums(S, T, config.n_mc, n_inside)


def b_residual(b: float, integrals: list[ClassIntegral], sums: McSums, ratio: float) -> float:
    C = np.array([ci.C_of_b(b) for ci in integrals])
    return float(np.dot(C, sums.T - ratio * sums.S) / np.dot(C, sums.S))


def mle_solve_b(D: float, n: int, integrals: list[ClassIntegral], sums: McSums, config: MleConfig) -> float:
    ratio = D / n
    lo, hi = config.b_bracket
    try:
        return solve_scalar(lambda b: b_residual(b, integrals, sums, ratio), (lo, hi), tol=1e-10)
    except BracketError as exc:
        grid = np.linspace(lo, hi, 41)
        curve = [(float(b), b_residual(b, integrals, sums, ratio)) for b in grid]
        raise MleError("solve b", str(exc), curve) from exc


def mle_tau(n: int, D: float, C: np.ndarray, sums: McSums, window: DiskWindow) -> tuple[float, float]:
    """``tau`` from the count equation and from the distance equation."""
    scale = 4 * sums.n_mc / (math.pi**2 * window.diameter**3)
    den_n = float(np.dot(C, sums.S))
    den_d = float(np.dot(C, sums.T))
    if not (den_n > 0 and den_d > 0):
        raise MleError("tau", "zero Monte Carlo denominator")
    return scale * n / den_n, scale * D / den_d


def mle_fit(x: Configuration, window: DiskWindow = DiskWindow(), config: MleConfig = MleConfig()) -> MleResult:
    if len(x) == 0:
        raise MleError("input", "empty configuration")
    if not contained_mask(x, window).all():
        raise MleError("input", "segments must lie inside the disk")
    L = window.diameter
    beta_params = config.beta_kde
    if beta_params.upper != L:
        beta_params = BetaKdeParams(h=beta_params.h, upper=L, scale=beta_params.scale, modified=beta_params.modified)
    grid_r = Grid1D(0.0, L, config.table_r)
    grid_phi = Grid1D.directions(config.table_phi)
    out_grid = Grid1D.interior(0.0, L, config.grid_count)

    samples = mle_partition(x, window, config.k)
    palms, observed = [], []
    for cs in samples:
        if len(cs.segments) == 0:
            raise MleError("partition", f"class {cs.index} is empty")
        seg = cs.segments
        palm = product_kde(np.c_[seg.r, seg.phi], beta_params, config.circ_kde, grid_r, grid_phi)
        palms.append(palm)
        dens = beta_kde_eval(out_grid.points, seg.r, palm.h, L, palm.modified)
        observed.append(DensityGrid(out_grid, dens).normalized())

    integrals = [class_integral(p, j, window, config) for j, p in enumerate(palms, start=1)]
    sums = mc_sums(palms, window, config)
    n = len(x)
    D = float(max_norm_distances(x, window).sum())
    b = mle_solve_b(D, n, integrals, sums, config)
    C = np.array([ci.C_of_b(b) for ci in integrals])
    tau, tau_dist = mle_tau(n, D, C, sums, window)

    levels = class_levels(window, config.k)
    recovered = [
        reference_length_from_palm(palms[j - 1].evaluate, b, Point2(0.0, float(levels[j - 1])), window, out_grid, config.phi_fixed)
        for j in config.classes
    ]
    f1 = DensityGrid(out_grid, np.mean([g.values for g in recovered], axis=0)).normalized()
    return MleResult(
        b=b,
        tau=tau,
        tau_dist=tau_dist,
        C=C,
        f1=f1,
        palms=palms,
        observed_lengths=observed,
        class_counts=[len(cs.segments) for cs in samples],
        residual=b_residual(b, integrals, sums, D / n),
    )
