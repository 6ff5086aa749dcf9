"""Simulation of the reference Poisson process and of both segment models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from segproc import _kernels
from segproc.geometry import Configuration, Window
from segproc.models import GibbsDirectionalModel, InhomogLengthModel
from segproc.numerics import make_rng, segment_space_volume, uniform_segments

G_TABLE_SIZE = 1 << 16


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 200_000
    burn_in: int = 50_000
    p_birth: float = 1 / 3
    p_death: float = 1 / 3
    p_move: float = 1 / 3
    move_scale: float | None = None  # default r/2
    angle_scale: float = 0.2
    seed: int = 0
    trace_every: int = 1000

    def __post_init__(self):
        probs = (self.p_birth, self.p_death, self.p_move)
        if min(probs) < 0 or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ValueError("proposal probabilities must be nonnegative and sum to 1")
        if self.p_birth == 0 or self.p_death == 0:
            raise ValueError("birth and death proposals are both required")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.trace_every < 1:
            raise ValueError("trace_every must be positive")


@dataclass
class ChainResult:
    config: Configuration
    proposed: dict
    accepted: dict
    trace_n: np.ndarray
    trace_N: np.ndarray
    trace_every: int = 1000
    burn_in: int = 0

    @property
    def acceptance_rates(self) -> dict:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else float("nan")) for k in self.proposed}


def sample_poisson_reference(
    window: Window,
    rng: np.random.Generator,
    mark_law="uniform",
    rate: float = 1.0,
    direction_law=None,
) -> Configuration:
    """Poisson segment process with ``Poisson(rate*|B|)`` segments.

    ``rate = 1`` with uniform directions is the unit reference process.
    ``mark_law`` is a fixed length, ``"uniform"`` (on ``[0, e_a]`` for a disk)
    or any object with ``sample(rng, n)``; ``direction_law`` likewise
    (uniform on ``[0, pi)`` when omitted).
    """
    area = window.area
    n = int(rng.poisson(rate * area)) if area > 0 else 0
    cx, cy = window.sample_points(n, rng)
    phi = direction_law.sample(rng, n) if direction_law is not None else math.pi * rng.random(n)
    if mark_law == "uniform":
        r = window.diameter * (1.0 - rng.random(n))
    elif hasattr(mark_law, "sample"):
        r = mark_law.sample(rng, n)
    else:
        r = np.full(n, float(mark_law))
    return Configuration(cx, cy, r, phi)


def _g_table(g) -> np.ndarray:
    grid = math.pi * np.arange(G_TABLE_SIZE) / G_TABLE_SIZE
    return np.ascontiguousarray(np.asarray(g.pdf(grid), dtype=float))


def initial_state(model: GibbsDirectionalModel, rng: np.random.Generator) -> Configuration:
    """Draw from the non-interacting (a = 0) reduction of ``model``."""
    g = model.g
    if hasattr(g, "sample"):
        law = g
    else:
        law = _GridSampler(g)
    return sample_poisson_reference(model.window, rng, mark_law=model.r, rate=model.tau, direction_law=law)


@dataclass(frozen=True)
class _GridSampler:
    density: object

    def sample(self, rng, n):
        # rejection from uniform on [0, pi)
        out = np.empty(0)
        sup = self.density.sup
        while out.size < n:
            cand = math.pi * rng.random(2 * (n - out.size) + 16)
            keep = rng.random(cand.size) * sup < self.density.pdf(cand)
            out = np.concatenate([out, cand[keep]])
        return out[:n]


def birth_ratio(lam: float, n: int, volume: float, p_birth: float = 1 / 3, p_death: float = 1 / 3) -> float:
    """Hastings ratio for adding a segment with conditional intensity ``lam`` to ``n`` segments."""
    return lam * volume * p_death / ((n + 1) * p_birth)


def death_ratio(lam: float, n: int, volume: float, p_birth: float = 1 / 3, p_death: float = 1 / 3) -> float:
    """Hastings ratio for removing a segment whose conditional intensity w.r.t. the rest is ``lam``."""
    return n * p_birth / (volume * lam * p_death)


def run_gibbs_chain(model: GibbsDirectionalModel, chain: ChainConfig, start: Configuration | None = None) -> ChainResult:
    """Birth-death-move Metropolis-Hastings chain targeting the directional Gibbs model."""
    rng = make_rng(chain.seed, 0)
    if start is None:
        start = initial_state(model, rng)
    n = chain.n_iter
    kinds = rng.random(n)
    accept_u = rng.random(n)
    u1, u2, u3 = rng.random(n), rng.random(n), rng.random(n)
    z1, z2, z3 = rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n)
    w = model.window
    move_sd = chain.move_scale if chain.move_scale is not None else model.r / 2
    xs, ys, ps, proposed, accepted, tr_n, tr_big = _kernels.gibbs_chain(
        np.ascontiguousarray(start.cx), np.ascontiguousarray(start.cy), np.ascontiguousarray(start.phi),
        float(model.r), float(w.x0), float(w.y0), float(w.width), float(w.height),
        float(model.tau), float(model.a), _g_table(model.g),
        kinds, accept_u, u1, u2, u3, z1, z2, z3,
        float(chain.p_birth), float(chain.p_death), float(move_sd), float(chain.angle_scale), int(chain.trace_every),
    )
    names = ("birth", "death", "move")
    return ChainResult(
        Configuration(xs, ys, np.full(xs.size, model.r), ps),
        dict(zip(names, map(int, proposed))),
        dict(zip(names, map(int, accepted))),
        tr_n,
        tr_big,
        chain.trace_every,
        chain.burn_in,
    )


def sample_gibbs(model: GibbsDirectionalModel, chain: ChainConfig) -> Configuration:
    return run_gibbs_chain(model, chain).config


def dominating_intensity(model: InhomogLengthModel) -> float:
    sup_f = model.f1.sup
    if not math.isfinite(sup_f):
        raise ValueError("reference length density must be bounded for rejection sampling")
    return model.tau * sup_f * max(1.0, math.exp(model.b / 2))


def sample_inhomog(model: InhomogLengthModel, rng: np.random.Generator) -> Configuration:
    """Exact draw by thinning a homogeneous Poisson process on the segment space.

    The dominating process has constant intensity ``sup tau f1 exp(b d)`` over
    ``disk x [0, e_a] x [0, pi)``; each candidate is kept with probability
    ``intensity / sup`` (zero when the segment leaves the disk).
    """
    top = dominating_intensity(model)
    vol = segment_space_volume(model.window, "uniform")
    n = int(rng.poisson(top * vol))
    cand = uniform_segments(n, model.window, "uniform", rng)
    keep = rng.random(n) * top < model.intensity(cand)
    return cand.subset(keep)


def expected_count_inhomog(model: InhomogLengthModel, n_mc: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo estimate of the total intensity mass of the length model."""
    rng = make_rng(seed, 7)
    u = uniform_segments(n_mc, model.window, "uniform", rng)
    return segment_space_volume(model.window, "uniform") * float(np.mean(model.intensity(u)))
