"""Kernel estimators for observed mark densities.

* axial directions: von Mises kernels on the doubled angle, i.e. densities on
  ``[0, pi)`` with period ``pi``;
* lengths on ``[0, L]``: Chen's beta kernel estimator (free of boundary bias);
* length-direction pairs: product of the two kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from segproc.models import DensityGrid
from segproc.numerics import Grid1D


KAPPA_BOUNDS = (0.05, 500.0)


@dataclass(frozen=True)
class CircularKdeParams:
    """Kernel concentration on the doubled-angle circle.

    ``kappa=None`` selects it from the data: ``selector="rule"`` is Taylor's
    rule of thumb, ``"lcv"`` maximises the leave-one-out log likelihood (in a
    product estimate, jointly with the length kernel).
    """

    kappa: float | None = None
    selector: str = "rule"

    def __post_init__(self):
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kernel concentration must be positive")
        if self.selector not in ("rule", "lcv"):
            raise ValueError(f"unknown bandwidth selector {self.selector!r}")

    def resolve(self, angles) -> float:
        if self.kappa is not None:
            return self.kappa
        if self.selector == "lcv":
            return lcv_kappa(angles)
        return circular_bandwidth(angles)


@dataclass(frozen=True)
class BetaKdeParams:
    """Beta-kernel smoothing ``h`` on the unit-scaled support ``[0, upper]``.

    ``h=None`` uses ``scale * n**(-2/5)``.  ``modified`` switches from Chen's
    first estimator to his second one, whose interior bias has no
    first-derivative term.
    """

    h: float | None = None
    upper: float = 1.0
    scale: float = 1.0
    modified: bool = False

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ValueError("bandwidth must be positive")
        if not self.upper > 0:
            raise ValueError("support bound must be positive")

    def resolve(self, n: int) -> float:
        return self.h if self.h is not None else self.scale * n ** (-0.4)


def _a1inv(rbar: float) -> float:
    # Best & Fisher approximation to the inverse of I1/I0
    if rbar < 0.53:
        return 2 * rbar + rbar**3 + 5 * rbar**5 / 6
    if rbar < 0.85:
        return -0.4 + 1.39 * rbar + 0.43 / (1 - rbar)
    return 1 / (rbar**3 - 4 * rbar**2 + 3 * rbar)


def circular_bandwidth(angles) -> float:
    """Rule-of-thumb von Mises kernel concentration (Taylor, 2008) for axial data.

    A von Mises fit to the doubled angles gives ``k``; the kernel concentration is
    ``(3 n k^2 I2(2k) / (4 sqrt(pi) I0(k)^2))^(2/5)``.
    """
    theta = 2 * np.asarray(angles, dtype=float)
    n = theta.size
    rbar = float(np.hypot(np.cos(theta).mean(), np.sin(theta).mean()))
    k = _a1inv(min(rbar, 0.999999))
    ratio = special.ive(2, 2 * k) / special.i0e(k) ** 2
    bw = (3 * n * k**2 * ratio / (4 * math.sqrt(math.pi))) ** 0.4
    return max(bw, 1e-3)


def lcv_kappa(angles, weights=None, bounds=KAPPA_BOUNDS) -> float:
    """Leave-one-out likelihood choice of the axial kernel concentration.

    ``weights`` is an optional ``(n, n)`` matrix multiplying the angular kernel
    (the length kernel of a product estimate); the search runs over
    ``log kappa`` within ``bounds``.
    """
    theta = 2 * np.asarray(angles, dtype=float)
    n = theta.size
    if n < 2:
        raise ValueError("cross-validation needs at least two observations")
    cosd = np.cos(np.subtract.outer(theta, theta)) - 1
    if weights is None:
        weights = np.ones((n, n))
    w = np.array(weights, dtype=float)
    np.fill_diagonal(w, 0.0)

    def neg_ll(log_kappa):
        kappa = math.exp(log_kappa)
        k = np.exp(kappa * cosd) / (math.pi * special.i0e(kappa))
        loo = np.einsum("ij,ij->i", w, k) / (n - 1)
        return -float(np.log(np.maximum(loo, 1e-300)).sum())

    lo, hi = map(math.log, bounds)
    res = optimize.minimize_scalar(neg_ll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    return float(math.exp(res.x))


def vm_axial_kernel(phi, centers, kappa: float) -> np.ndarray:
    """Matrix of axial von Mises kernel values, shape ``(len(phi), len(centers))``."""
    d = np.subtract.outer(np.asarray(phi, dtype=float), np.asarray(centers, dtype=float))
    return np.exp(kappa * (np.cos(2 * d) - 1)) / (math.pi * special.i0e(kappa))


def _rho(x, h):
    return 2 * h * h + 2.5 - np.sqrt(4 * h**4 + 6 * h * h + 2.25 - x * x - x / h)


def beta_kernel(r, data, h: float, upper: float = 1.0, modified: bool = False) -> np.ndarray:
    """Chen beta-kernel matrix, shape ``(len(r), len(data))``.

    First estimator: ``Beta(data/L; r/(Lh)+1, (1-r/L)/h+1) / L``.  The modified
    kernel uses ``Beta(x/h, (1-x)/h)`` in the interior with Chen's ``rho``
    correction within ``2h`` of either end.
    """
    x = np.clip(np.asarray(r, dtype=float) / upper, 0.0, 1.0)[:, None]
    t = np.clip(np.asarray(data, dtype=float) / upper, 0.0, 1.0)[None, :]
    if modified:
        p = np.where(x < 2 * h, _rho(np.minimum(x, 2 * h), h), x / h)
        q = np.where(x > 1 - 2 * h, _rho(np.minimum(1 - x, 2 * h), h), (1 - x) / h)
    else:
        p = x / h + 1
        q = (1 - x) / h + 1
    logk = special.xlogy(p - 1, t) + special.xlog1py(q - 1, -t) - special.betaln(p, q)
    return np.exp(logk) / upper


def _check_nonempty(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("kernel estimate needs at least one observation")
    return v


def circular_kde_eval(phi, angles, kappa: float) -> np.ndarray:
    angles = _check_nonempty(angles)
    return vm_axial_kernel(phi, angles, kappa).mean(axis=1)


def circular_kde(angles, params: CircularKdeParams = CircularKdeParams(), grid: Grid1D | None = None) -> DensityGrid:
    angles = _check_nonempty(angles)
    grid = grid or Grid1D.directions(100)
    kappa = params.resolve(angles)
    return DensityGrid(grid, circular_kde_eval(grid.points, angles, kappa)).normalized()


def beta_kde_eval(r, lengths, h: float, upper: float, modified: bool = False) -> np.ndarray:
    lengths = _check_nonempty(lengths)
    return beta_kernel(r, lengths, h, upper, modified).mean(axis=1)


def beta_kde(lengths, params: BetaKdeParams = BetaKdeParams(), grid: Grid1D | None = None) -> DensityGrid:
    lengths = _check_nonempty(lengths)
    if lengths.min() < 0 or lengths.max() > params.upper:
        raise ValueError(f"observations must lie in [0, {params.upper}]")
    grid = grid or Grid1D(0.0, params.upper, 100)
    h = params.resolve(lengths.size)
    return DensityGrid(grid, beta_kde_eval(grid.points, lengths, h, params.upper, params.modified)).normalized()


@dataclass(frozen=True, eq=False)
class ProductKde:
    """Bivariate length-direction kernel estimate.

    ``table`` holds the normalised estimate on ``grid_r x grid_phi``; exact
    evaluation at arbitrary points goes through :meth:`evaluate`, fast
    approximate evaluation through :meth:`interpolate`.
    """

    lengths: np.ndarray
    angles: np.ndarray
    h: float
    kappa: float
    upper: float
    modified: bool
    grid_r: Grid1D
    grid_phi: Grid1D
    table: np.ndarray
    norm: float

    def evaluate(self, r, phi) -> np.ndarray:
        """Exact estimate at paired points ``(r_i, phi_i)``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        phi = np.broadcast_to(np.asarray(phi, dtype=float), r.shape)
        kr = beta_kernel(r, self.lengths, self.h, self.upper, self.modified)
        kp = vm_axial_kernel(phi, self.angles, self.kappa)
        return (kr * kp).mean(axis=1) / self.norm

    def on_line(self, r, phi: float) -> np.ndarray:
        """Exact estimate along ``phi = const``; cheaper than :meth:`evaluate`."""
        kr = beta_kernel(r, self.lengths, self.h, self.upper, self.modified)
        kp = vm_axial_kernel(np.array([phi]), self.angles, self.kappa)[0]
        return kr @ kp / (self.lengths.size * self.norm)

    def interpolate(self, r, phi) -> np.ndarray:
        """Bilinear interpolation of the table (periodic in ``phi``)."""
        r = np.asarray(r, dtype=float)
        phi = np.mod(np.asarray(phi, dtype=float), math.pi)
        gr = self.grid_r
        fr = np.clip((r - gr.lower) / gr.step, 0, gr.count - 1 - 1e-12)
        i0 = np.floor(fr).astype(int)
        wr = fr - i0
        gp = self.grid_phi
        fp = (phi - gp.lower) / gp.step
        j0 = np.floor(fp).astype(int)
        wp = fp - j0
        j0 %= gp.count
        j1 = (j0 + 1) % gp.count
        t = self.table
        return (
            (1 - wr) * ((1 - wp) * t[i0, j0] + wp * t[i0, j1])
            + wr * ((1 - wp) * t[i0 + 1, j0] + wp * t[i0 + 1, j1])
        )

    def marginal_r(self) -> DensityGrid:
        return DensityGrid(self.grid_r, np.clip(self.table.sum(axis=1) * self.grid_phi.step, 0, None))

    def rows(self):
        """``(r, phi, value)`` triples for serialisation."""
        for i, r in enumerate(self.grid_r.points):
            for j, p in enumerate(self.grid_phi.points):
                yield float(r), float(p), float(self.table[i, j])


def product_kde(
    samples,
    beta_params: BetaKdeParams = BetaKdeParams(),
    circ_params: CircularKdeParams = CircularKdeParams(),
    grid_r: Grid1D | None = None,
    grid_phi: Grid1D | None = None,
) -> ProductKde:
    """Product beta x axial-von-Mises estimate from ``(r, phi)`` pairs."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if samples.shape[0] == 0:
        raise ValueError("kernel estimate needs at least one observation")
    lengths = np.ascontiguousarray(samples[:, 0])
    angles = np.mod(samples[:, 1], math.pi)
    if lengths.min() < 0 or lengths.max() > beta_params.upper:
        raise ValueError(f"lengths must lie in [0, {beta_params.upper}]")
    grid_r = grid_r or Grid1D(0.0, beta_params.upper, 100)
    grid_phi = grid_phi or Grid1D.directions(100)
    h = beta_params.resolve(lengths.size)
    if circ_params.kappa is None and circ_params.selector == "lcv":
        kappa = lcv_kappa(angles, beta_kernel(lengths, lengths, h, beta_params.upper, beta_params.modified))
    else:
        kappa = circ_params.resolve(angles)
    kr = beta_kernel(grid_r.points, lengths, h, beta_params.upper, beta_params.modified)
    kp = vm_axial_kernel(grid_phi.points, angles, kappa)
    table = kr @ kp.T / lengths.size
    norm = grid_r.integrate(table.sum(axis=1) * grid_phi.step)
    return ProductKde(lengths, angles, h, kappa, beta_params.upper, beta_params.modified, grid_r, grid_phi, table / norm, norm)
