"""Replication studies: simulate, fit, summarise and build pointwise envelopes.

Output layout under ``outdir``::

    replication_<i>/realization.csv   segments of replication i
    replication_<i>/fit.csv           scalar estimates (key,value)
    replication_<i>/<density>.csv     estimated densities on their grid
    estimates.csv                     one row of scalars per replication
    summary.csv                       parameter,true,mean,sd,cv,count
    envelope_<density>.csv            x,mean,lower,upper,true
    failures.csv                      index,stage,message

Replication ``i`` draws all randomness from seeds derived from
``(seed, i)``, so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from segproc.config import StudySpec
from segproc.estimators.mle import MleError, mle_fit
from segproc.estimators.tf import TfConvergenceError, tf_fit
from segproc.geometry import Configuration
from segproc.models import (
    TEST_FUNCTIONS,
    GibbsDirectionalModel,
    InhomogLengthModel,
    gnz_terms,
    sufficient_stats,
)
from segproc.numerics import BracketError, make_rng
from segproc.samplers import ChainResult, run_gibbs_chain, sample_inhomog

MAX_FAILURE_FRACTION = 0.10


class StudyError(RuntimeError):
    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


def derive_seed(seed: int, index: int, stream: int) -> int:
    """64-bit seed for stream ``stream`` of replication ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), int(stream)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class Simulation:
    config: Configuration
    chain: ChainResult | None = None


def simulate(spec: StudySpec, index: int = 0) -> Simulation:
    if spec.is_gibbs:
        chain = replace(spec.chain, seed=derive_seed(spec.seed, index, 0))
        res = run_gibbs_chain(spec.model, chain)
        return Simulation(res.config, res)
    return Simulation(sample_inhomog(spec.model, make_rng(derive_seed(spec.seed, index, 0))))


def fit(spec: StudySpec, x: Configuration, index: int = 0):
    """Fit the study's estimator; returns ``(scalars, densities, result)``."""
    fit_seed = derive_seed(spec.seed, index, 1)
    if spec.is_gibbs:
        res = tf_fit(x, spec.model.r, spec.model.window, replace(spec.tf, seed=fit_seed))
        stats = sufficient_stats(x)
        scalars = {"n": stats.n, "N": stats.N, **res.scalars()}
        return scalars, {"f_x": res.f_x, "g": res.g}, res
    res = mle_fit(x, spec.model.window, replace(spec.mle, seed=fit_seed))
    stats = sufficient_stats(x, spec.model.window)
    scalars = {"n": stats.n, "D": stats.D, **res.scalars()}
    dens = {"f1": res.f1}
    for j, g in enumerate(res.observed_lengths, start=1):
        dens[f"observed_length_{j}"] = g
    return scalars, dens, res


def reference_truth(spec: StudySpec, grid_points) -> np.ndarray:
    ref = spec.model.g if spec.is_gibbs else spec.model.f1
    return np.asarray(ref.pdf(grid_points), dtype=float)


@dataclass
class ReplicationResult:
    index: int
    scalars: dict = field(default_factory=dict)
    densities: dict = field(default_factory=dict)
    stage: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def write_scalars(path: Path, scalars: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in scalars.items():
            w.writerow([k, repr(float(v))])


def _write_curve(path: Path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "residual"])
        for p, r in curve:
            w.writerow([repr(float(p)), repr(float(r))])


def run_replication(spec: StudySpec, index: int, outdir: str | None = None) -> ReplicationResult:
    rep_dir = Path(outdir) / f"replication_{index}" if outdir is not None else None
    if rep_dir is not None:
        rep_dir.mkdir(parents=True, exist_ok=True)
    stage = "simulate"
    try:
        sim = simulate(spec, index)
        if rep_dir is not None:
            sim.config.to_csv(rep_dir / "realization.csv")
        stage = "fit"
        scalars, dens, _ = fit(spec, sim.config, index)
    except (TfConvergenceError, MleError, BracketError, ValueError, FloatingPointError) as exc:
        curve = getattr(exc, "curve", None)
        if rep_dir is not None and curve:
            _write_curve(rep_dir / "failure_curve.csv", curve)
        label = getattr(exc, "stage", stage)
        return ReplicationResult(index, stage=label, error=f"{type(exc).__name__}: {exc}")
    if rep_dir is not None:
        write_scalars(rep_dir / "fit.csv", scalars)
        for name, g in dens.items():
            g.to_csv(rep_dir / f"{name}.csv")
    return ReplicationResult(index, scalars, dens)


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    true: float
    mean: float
    sd: float
    cv: float
    count: int


def summarize(values: dict[str, list], truth: dict) -> list[SummaryRow]:
    """Mean, sample sd and CV per parameter (sd is 0 for a single replication)."""
    rows = []
    for name, vals in values.items():
        v = np.asarray(vals, dtype=float)
        mean = math.fsum(v) / v.size
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        cv = sd / abs(mean) if mean != 0 else math.nan
        rows.append(SummaryRow(name, float(truth.get(name, math.nan)), mean, sd, cv, int(v.size)))
    return rows


@dataclass
class EnvelopeTable:
    """Pointwise mean with empirical 5% and 95% quantiles (type 7)."""

    x: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    true: np.ndarray | None = None

    @classmethod
    def from_curves(cls, x, curves, true=None, level: float = 0.90) -> "EnvelopeTable":
        c = np.asarray(curves, dtype=float)
        if c.ndim != 2 or c.shape[0] == 0:
            raise ValueError("need a nonempty stack of curves")
        tail = (1 - level) / 2
        lo, hi = np.quantile(c, [tail, 1 - tail], axis=0, method="linear")
        mean = c.mean(axis=0)
        # guard against rounding at collapsed envelopes
        return cls(np.asarray(x, float), mean, np.minimum(lo, mean), np.maximum(hi, mean), true)

    def coverage(self, values=None) -> int:
        v = self.true if values is None else np.asarray(values, dtype=float)
        return int(np.sum((self.lower <= v) & (v <= self.upper)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "mean", "lower", "upper", "true"])
            for i in range(self.x.size):
                t = "" if self.true is None else repr(float(self.true[i]))
                w.writerow([repr(float(self.x[i])), repr(float(self.mean[i])), repr(float(self.lower[i])),
                            repr(float(self.upper[i])), t])

    @classmethod
    def from_csv(cls, path) -> "EnvelopeTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
        true = col("true") if rows and rows[0]["true"] != "" else None
        return cls(col("x"), col("mean"), col("lower"), col("upper"), true)


@dataclass
class StudyResult:
    spec: StudySpec
    replications: list[ReplicationResult]
    summary: list[SummaryRow]
    envelopes: dict[str, EnvelopeTable]

    @property
    def failures(self) -> list[ReplicationResult]:
        return [r for r in self.replications if not r.ok]

    def row(self, parameter: str) -> SummaryRow:
        return next(r for r in self.summary if r.parameter == parameter)


def _run_one(args):
    spec, index, outdir = args
    return run_replication(spec, index, outdir)


def _write_summary(path: Path, rows: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "true", "mean", "sd", "cv", "count"])
        for r in rows:
            w.writerow([r.parameter, repr(r.true), repr(r.mean), repr(r.sd), repr(r.cv), r.count])


def _write_estimates(path: Path, reps: list[ReplicationResult], keys: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *keys])
        for r in reps:
            if r.ok:
                w.writerow([r.index, *(repr(float(r.scalars[k])) for k in keys)])


def _write_failures(path: Path, reps: list[ReplicationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "stage", "message"])
        for r in reps:
            if not r.ok:
                w.writerow([r.index, r.stage, r.error])


def run_study(spec: StudySpec, outdir=None, jobs: int = 1) -> StudyResult:
    """Run ``spec.replications`` simulate-and-fit pipelines and aggregate them.

    Parameters
    ----------
    spec : StudySpec
    outdir : path-like, optional
        Where to persist everything; nothing is written when omitted.
    jobs : int
        Worker processes.  Output does not depend on it.

    Raises
    ------
    StudyError
        More than 10% of the replications failed (the failure table is
        written first).
    """
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, i, None if out is None else str(out)) for i in range(spec.replications)]
    if jobs > 1 and spec.replications > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, spec.replications, os.cpu_count() or 1)) as ex:
            reps = list(ex.map(_run_one, tasks))
    else:
        reps = [_run_one(t) for t in tasks]
    reps.sort(key=lambda r: r.index)

    good = [r for r in reps if r.ok]
    n_failed = len(reps) - len(good)
    if out is not None:
        _write_failures(out / "failures.csv", reps)
    if n_failed > MAX_FAILURE_FRACTION * len(reps) or not good:
        raise StudyError(f"{n_failed} of {len(reps)} replications failed", [r for r in reps if not r.ok])

    keys = list(good[0].scalars)
    truth = spec.truth()
    values = {k: [r.scalars[k] for r in good] for k in keys}
    summary = summarize(values, truth)

    envelopes = {}
    for name, first in good[0].densities.items():
        x = first.grid.points
        curves = [r.densities[name].values for r in good]
        envelopes[name] = EnvelopeTable.from_curves(x, curves, reference_truth(spec, x))

    if out is not None:
        _write_estimates(out / "estimates.csv", reps, keys)
        _write_summary(out / "summary.csv", summary)
        for name, env in envelopes.items():
            env.to_csv(out / f"envelope_{name}.csv")
    return StudyResult(spec, reps, summary, envelopes)


def read_summary(path) -> list[SummaryRow]:
    with open(path, newline="") as fh:
        return [
            SummaryRow(r["parameter"], float(r["true"]), float(r["mean"]), float(r["sd"]), float(r["cv"]), int(r["count"]))
            for r in csv.DictReader(fh)
        ]


def read_estimates(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    keys = [k for k in rows[0] if k != "index"] if rows else []
    return {k: [float(r[k]) for r in rows] for k in keys}


@dataclass(frozen=True)
class ResidualReport:
    q: str
    observed: float
    integral: float
    residual: float
    se: float
    z: float


def residual_check(
    x: Configuration,
    model: GibbsDirectionalModel | InhomogLengthModel,
    q: str = "unit",
    j_mc: int = 10_000,
    rng: np.random.Generator | None = None,
) -> ResidualReport:
    """GNZ innovation of ``x`` under ``model`` for ``q`` in ``{"unit", "hits"}``.

    ``se`` combines the point-process fluctuation (``int lambda q^2``, exact
    for Poisson models) with the Monte Carlo error of the integral.
    """
    if q not in TEST_FUNCTIONS:
        raise ValueError(f"test function must be one of {sorted(TEST_FUNCTIONS)}")
    rng = rng if rng is not None else make_rng(0, 3)
    terms = gnz_terms(x, TEST_FUNCTIONS[q], model.conditional_intensities, model.window, model.length_law, j_mc, rng)
    se = math.sqrt(terms.variance + terms.integral_se**2)
    z = terms.residual / se if se > 0 else math.nan
    return ResidualReport(q, terms.observed, terms.integral, terms.residual, se, z)
