"""Takacs-Fiksel fit of the directional Gibbs model with a nonparametric reference density.

The observed (Palm) direction density ``f_X`` is estimated by an axial kernel
estimate.  With the Poisson approximation of the interaction factor the
intensity is ``C f_X(phi)`` and ``lambda*(x, u) = C f_X(phi) e^{a N_x(u)} / beta(phi)``
where ``beta(phi) = exp((e^a - 1) r^2 C J(phi))``.  ``(C, a)`` solve the
innovation equations for the test functions ``q = N_x(u)`` and ``q = 1``;
``tau`` and ``g`` follow in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from segproc.geometry import Configuration, RectWindow, hit_counts, total_intersections
from segproc.kde import CircularKdeParams, circular_kde_eval
from segproc.models import DensityGrid, j_integral, reference_direction_from_palm
from segproc.numerics import BracketError, Grid1D, make_rng, solve_scalar, uniform_segments


class TfConvergenceError(RuntimeError):
    """The outer equation has no root in the ``a`` bracket; carries the residual curve."""

    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = curve


@dataclass(frozen=True)
class TfConfig:
    j_mc: int = 10_000
    grid: Grid1D = field(default_factory=lambda: Grid1D.directions(100))
    a_bracket: tuple = (-10.0, 0.0)
    tol: float = 1e-10
    kde: CircularKdeParams = field(default_factory=CircularKdeParams)
    seed: int = 0

    def __post_init__(self):
        if self.j_mc < 1:
            raise ValueError("j_mc must be at least 1")
        lo, hi = self.a_bracket
        if not lo < hi <= 0:
            raise ValueError("a bracket must be a nonempty subset of (-inf, 0]")


@dataclass
class TfResult:
    C: float
    a: float
    tau: float
    f_x: DensityGrid
    g: DensityGrid
    residuals: tuple
    kernel_kappa: float
    at_boundary: bool = False

    def scalars(self) -> dict:
        return {
            "C": self.C,
            "a": self.a,
            "tau": self.tau,
            "residual_hits": self.residuals[0],
            "residual_count": self.residuals[1],
            "kernel_kappa": self.kernel_kappa,
            "at_boundary": int(self.at_boundary),
        }


def beta_factor(a: float, r: float, C: float, phi, f_x: DensityGrid):
    """``exp((e^a - 1) r^2 C J(phi))``."""
    return np.exp(math.expm1(a) * r**2 * C * np.asarray(j_integral(phi, f_x)))


@dataclass
class TfSystem:
    """Monte Carlo form of the two innovation equations for one realisation."""

    n: int
    hits_sum: int
    weight: float  # pi |B| / J
    f: np.ndarray
    hits: np.ndarray
    jv: np.ndarray
    r: float

    def _terms(self, C, a):
        return self.f * np.exp(a * self.hits - math.expm1(a) * self.r**2 * C * self.jv)

    def count_side(self, C, a) -> float:
        return self.weight * C * math.fsum(self._terms(C, a))

    def hits_side(self, C, a) -> float:
        return self.weight * C * math.fsum(self._terms(C, a) * self.hits)

    def solve_C(self, a, tol=1e-10) -> float:
        """Root of the count equation in ``C``; its left side increases with ``C`` for ``a <= 0``."""
        if self.n == 0:
            return 0.0
        hi = 2.0 * self.n / (self.weight * max(float(np.sum(self.f)), 1e-300))
        while self.count_side(hi, a) < self.n:
            hi *= 2
            if hi > 1e300:
                raise BracketError("count equation has no root in C")
        return solve_scalar(lambda c: self.count_side(c, a) - self.n, (0.0, hi), tol=tol * max(hi, 1.0))

    def hits_residual(self, a) -> float:
        return self.hits_sum - self.hits_side(self.solve_C(a), a)


def build_system(x: Configuration, r: float, window: RectWindow, config: TfConfig):
    angles = x.phi
    kappa = config.kde.resolve(angles)
    raw = circular_kde_eval(config.grid.points, angles, kappa)
    norm = config.grid.integrate(raw)
    f_x = DensityGrid(config.grid, raw / norm)
    rng = make_rng(config.seed, 1)
    tests = uniform_segments(config.j_mc, window, r, rng)
    f = circular_kde_eval(tests.phi, angles, kappa) / norm
    system = TfSystem(
        n=len(x),
        hits_sum=2 * total_intersections(x),
        weight=math.pi * window.area / config.j_mc,
        f=f,
        hits=hit_counts(tests, x).astype(float),
        jv=np.asarray(j_integral(tests.phi, f_x)),
        r=r,
    )
    return system, f_x, kappa


def tf_fit(x: Configuration, r: float, window: RectWindow = RectWindow(), config: TfConfig = TfConfig()) -> TfResult:
    if len(x) == 0:
        raise ValueError("Takacs-Fiksel fit needs a nonempty configuration")
    system, f_x, kappa = build_system(x, r, window, config)
    lo, hi = config.a_bracket
    at_boundary = False
    r_hi = system.hits_residual(hi)
    if r_hi >= 0:
        # no more inhibition in the data than the a = hi fit predicts: boundary estimate
        a = hi
        at_boundary = r_hi > 0
    else:
        r_lo = system.hits_residual(lo)
        if r_lo < 0:
            grid = np.linspace(lo, hi, 41)
            curve = [(float(v), system.hits_residual(v)) for v in grid]
            raise TfConvergenceError(f"hits equation has no root for a in [{lo}, {hi}]", curve)
        a = solve_scalar(system.hits_residual, (lo, hi), tol=config.tol)
    C = system.solve_C(a)
    inv_beta = np.exp(-math.expm1(a) * r**2 * C * system.jv)
    tau = math.pi * C / config.j_mc * math.fsum(system.f * inv_beta)
    g = reference_direction_from_palm(f_x, C, a, tau, r)
    residuals = (
        (system.hits_sum - system.hits_side(C, a)) / max(system.hits_sum, 1),
        (system.n - system.count_side(C, a)) / system.n,
    )
    return TfResult(C=C, a=a, tau=tau, f_x=f_x, g=g, residuals=residuals, kernel_kappa=kappa, at_boundary=at_boundary)
