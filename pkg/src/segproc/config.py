"""Flat ``key = value`` study configuration.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Recognised keys (defaults in brackets; ``quick`` presets in parentheses):

model              gibbs-directional | inhomog-length   [gibbs-directional]
replications       K                                    [100 gibbs, 60 inhomog] (20)
seed               master seed                          [0]

gibbs-directional:
tau [1000]  a [-0.5]  r [0.12]  kappa [1]  mu [0]  width [1]  height [1]
n_iter [200000]  burn_in [50000]  move_scale [r/2]  angle_scale [0.2]
j_mc [10000]  grid [100]  a_lo [-10]  circ_kappa [rule]

inhomog-length:
tau [900]  b [3]  alpha [2]  beta [4]  diameter [1]
k [6]  m [100]  n_mc [1000000]  classes [1,2,3,4]  phi_fixed [0]
beta_kde_scale [0.15]  beta_kde_modified [false]  circ_kappa [5]
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from segproc.estimators.mle import MleConfig
from segproc.estimators.tf import TfConfig
from segproc.geometry import DiskWindow, RectWindow
from segproc.kde import BetaKdeParams, CircularKdeParams
from segproc.models import GibbsDirectionalModel, InhomogLengthModel, ScaledBeta, VonMisesAxial
from segproc.numerics import Grid1D
from segproc.samplers import ChainConfig

MODELS = ("gibbs-directional", "inhomog-length")

_COMMON = {"model", "replications", "seed"}
_GIBBS = {"tau", "a", "r", "kappa", "mu", "width", "height", "n_iter", "burn_in", "move_scale",
          "angle_scale", "j_mc", "grid", "a_lo", "circ_kappa"}
_INHOMOG = {"tau", "b", "alpha", "beta", "diameter", "k", "m", "n_mc", "classes", "phi_fixed",
            "beta_kde_scale", "beta_kde_modified", "circ_kappa"}

QUICK_REPLICATIONS = 20


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


def format_config(mapping: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def _float(m, key, default):
    if key not in m:
        return default
    try:
        v = float(m[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {m[key]!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


def _int(m, key, default):
    if key not in m:
        return default
    try:
        return int(m[key])
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {m[key]!r}") from None


def _bool(m, key, default):
    if key not in m:
        return default
    v = m[key].lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {m[key]!r}")


def _circ(m, default: CircularKdeParams) -> CircularKdeParams:
    if "circ_kappa" not in m:
        return default
    v = m["circ_kappa"].lower()
    if v in ("rule", "lcv"):
        return CircularKdeParams(selector=v)
    return CircularKdeParams(kappa=_float(m, "circ_kappa", None))


@dataclass(frozen=True)
class StudySpec:
    """Everything needed to simulate and fit ``replications`` realisations."""

    model_name: str
    model: GibbsDirectionalModel | InhomogLengthModel
    replications: int
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    tf: TfConfig = field(default_factory=TfConfig)
    mle: MleConfig = field(default_factory=MleConfig)

    def __post_init__(self):
        if self.model_name not in MODELS:
            raise ConfigError(f"unknown model {self.model_name!r}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")

    @property
    def is_gibbs(self) -> bool:
        return self.model_name == "gibbs-directional"

    def truth(self) -> dict:
        if self.is_gibbs:
            return {"a": self.model.a, "tau": self.model.tau}
        return {"b": self.model.b, "tau": self.model.tau}

    def with_replications(self, k: int) -> "StudySpec":
        return dataclasses.replace(self, replications=k)


def build_spec(mapping: dict[str, str], quick: bool = False, seed: int | None = None) -> StudySpec:
    m = dict(mapping)
    name = m.get("model", "gibbs-directional")
    if name not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {name!r}")
    allowed = _COMMON | (_GIBBS if name == MODELS[0] else _INHOMOG)
    unknown = sorted(set(m) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {', '.join(unknown)}")
    if seed is None:
        seed = _int(m, "seed", 0)
    if seed < 0:
        raise ConfigError("seed must be nonnegative")

    try:
        if name == "gibbs-directional":
            model = GibbsDirectionalModel(
                tau=_float(m, "tau", 1000.0),
                a=_float(m, "a", -0.5),
                r=_float(m, "r", 0.12),
                g=VonMisesAxial(mu=_float(m, "mu", 0.0), kappa=_float(m, "kappa", 1.0)),
                window=RectWindow(0.0, 0.0, _float(m, "width", 1.0), _float(m, "height", 1.0)),
            )
            chain = ChainConfig(
                n_iter=_int(m, "n_iter", 200_000),
                burn_in=_int(m, "burn_in", 50_000),
                move_scale=_float(m, "move_scale", None),
                angle_scale=_float(m, "angle_scale", 0.2),
            )
            tf = TfConfig(
                j_mc=_int(m, "j_mc", 10_000),
                grid=Grid1D.directions(_int(m, "grid", 100)),
                a_bracket=(_float(m, "a_lo", -10.0), 0.0),
                kde=_circ(m, CircularKdeParams()),
            )
            k = _int(m, "replications", QUICK_REPLICATIONS if quick else 100)
            return StudySpec(name, model, k, seed, chain=chain, tf=tf)

        model = InhomogLengthModel(
            tau=_float(m, "tau", 900.0),
            b=_float(m, "b", 3.0),
            f1=ScaledBeta(_float(m, "alpha", 2.0), _float(m, "beta", 4.0), _float(m, "diameter", 1.0)),
            window=DiskWindow(_float(m, "diameter", 1.0)),
        )
        classes = tuple(int(c) for c in m.get("classes", "1,2,3,4").split(","))
        mle = MleConfig(
            k=_int(m, "k", 6),
            m=_int(m, "m", 100),
            n_mc=_int(m, "n_mc", 1_000_000),
            classes=classes,
            phi_fixed=_float(m, "phi_fixed", 0.0),
            beta_kde=BetaKdeParams(
                scale=_float(m, "beta_kde_scale", 0.15), modified=_bool(m, "beta_kde_modified", False)
            ),
            circ_kde=_circ(m, CircularKdeParams(kappa=5.0)),
        )
        k = _int(m, "replications", QUICK_REPLICATIONS if quick else 60)
        return StudySpec(name, model, k, seed, mle=mle)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
