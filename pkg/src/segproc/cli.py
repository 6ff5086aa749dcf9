"""Command line interface: ``segproc {simulate,fit-tf,fit-mle,study,residuals}``.

Failures exit nonzero and print a one-line JSON summary to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from segproc.config import MODELS, QUICK_REPLICATIONS, ConfigError, StudySpec, build_spec, format_config, load_config
from segproc.estimators.mle import MleError, mle_fit
from segproc.estimators.tf import TfConvergenceError, tf_fit
from segproc.geometry import Configuration
from segproc.models import TEST_FUNCTIONS
from segproc.numerics import BracketError, make_rng
from segproc.study import StudyError, residual_check, run_study, simulate, write_scalars

EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_STUDY = 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _spec(args, model: str | None = None) -> StudySpec:
    mapping = load_config(args.config) if args.config else {}
    if model is not None:
        mapping.setdefault("model", model)
        if mapping["model"] != model:
            raise ConfigError(f"this command needs model = {model}, config has {mapping['model']}")
    return build_spec(mapping, quick=getattr(args, "quick", False), seed=args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_input(path) -> Configuration:
    try:
        return Configuration.from_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, "input", f"cannot read {path}: {exc}") from exc


def cmd_simulate(args) -> dict:
    spec = _spec(args)
    out = _out(args)
    sim = simulate(spec, args.index)
    sim.config.to_csv(out / "realization.csv")
    meta = {"model": spec.model_name, "seed": spec.seed, "index": args.index, "n": len(sim.config)}
    m = spec.model
    if spec.is_gibbs:
        meta.update(tau=m.tau, a=m.a, r=m.r, kappa=m.g.kappa, mu=m.g.mu, width=m.window.width, height=m.window.height)
        ch = sim.chain
        meta.update(n_iter=spec.chain.n_iter, burn_in=spec.chain.burn_in)
        for k, v in ch.acceptance_rates.items():
            meta[f"accept_{k}"] = v
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "n", "N"])
            for i, (n, big) in enumerate(zip(ch.trace_n, ch.trace_N)):
                w.writerow([(i + 1) * ch.trace_every, int(n), int(big)])
    else:
        meta.update(tau=m.tau, b=m.b, alpha=m.f1.alpha, beta=m.f1.beta, diameter=m.window.diameter)
    (out / "metadata.txt").write_text(format_config(meta))
    return {"realization": str(out / "realization.csv"), "n": len(sim.config)}


def cmd_fit_tf(args) -> dict:
    spec = _spec(args, MODELS[0])
    x = _read_input(args.input)
    out = _out(args)
    res = tf_fit(x, spec.model.r, spec.model.window, replace(spec.tf, seed=spec.seed))
    write_scalars(out / "fit.csv", res.scalars())
    res.f_x.to_csv(out / "f_x.csv")
    res.g.to_csv(out / "g.csv")
    return {"a": res.a, "tau": res.tau, "C": res.C}


def cmd_fit_mle(args) -> dict:
    spec = _spec(args, MODELS[1])
    x = _read_input(args.input)
    out = _out(args)
    res = mle_fit(x, spec.model.window, replace(spec.mle, seed=spec.seed))
    write_scalars(out / "fit.csv", res.scalars())
    res.f1.to_csv(out / "f1.csv")
    for j, (palm, obs) in enumerate(zip(res.palms, res.observed_lengths), start=1):
        obs.to_csv(out / f"observed_length_{j}.csv")
        with open(out / f"palm_{j}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "phi", "value"])
            w.writerows((repr(r), repr(p), repr(v)) for r, p, v in palm.rows())
    return {"b": res.b, "tau": res.tau, "tau_dist": res.tau_dist}


def cmd_study(args) -> dict:
    spec = _spec(args)
    if args.replications is not None:
        spec = spec.with_replications(args.replications)
    res = run_study(spec, args.out, jobs=args.jobs)
    return {
        "replications": spec.replications,
        "failed": len(res.failures),
        **{f"mean_{r.parameter}": r.mean for r in res.summary if r.parameter in spec.truth()},
    }


def cmd_residuals(args) -> dict:
    spec = _spec(args)
    x = _read_input(args.input)
    rep = residual_check(x, spec.model, args.q, args.j_mc, make_rng(spec.seed, 3))
    row = {"q": rep.q, "observed": rep.observed, "integral": rep.integral, "residual": rep.residual,
           "se": rep.se, "z": rep.z}
    if args.out:
        out = _out(args)
        with open(out / f"residual_{args.q}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(row))
            w.writerow([row["q"], *(repr(float(v)) for k, v in row.items() if k != "q")])
    return row


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segproc", description="Planar segment processes: simulation and estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        return p

    p = common(sub.add_parser("simulate", help="simulate one realisation"))
    p.add_argument("--index", type=int, default=0, help="replication index for seed derivation")
    p.set_defaults(func=cmd_simulate)

    for name, func, doc in (("fit-tf", cmd_fit_tf, "Takacs-Fiksel fit of the directional Gibbs model"),
                            ("fit-mle", cmd_fit_mle, "likelihood fit of the length model")):
        p = common(sub.add_parser(name, help=doc))
        p.add_argument("--input", required=True, help="configuration CSV (cx,cy,r,phi)")
        p.set_defaults(func=func)

    p = common(sub.add_parser("study", help="replication study"))
    p.add_argument("--quick", action="store_true", help=f"reduced preset ({QUICK_REPLICATIONS} replications)")
    p.add_argument("--replications", type=int, default=None)
    p.set_defaults(func=cmd_study)

    p = common(sub.add_parser("residuals", help="GNZ residual diagnostic"), out_required=False)
    p.add_argument("--input", required=True)
    p.add_argument("--q", choices=sorted(TEST_FUNCTIONS), default="unit")
    p.add_argument("--j-mc", type=int, default=10_000)
    p.set_defaults(func=cmd_residuals)
    return parser


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"status": "error", "error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        return _fail(EXIT_CONFIG, "config", "--jobs must be at least 1")
    try:
        result = args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc), **exc.extra)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (TfConvergenceError, MleError, BracketError) as exc:
        return _fail(EXIT_FIT, "fit", str(exc), stage=getattr(exc, "stage", "solve"))
    except StudyError as exc:
        return _fail(EXIT_STUDY, "study", str(exc), failed=[r.index for r in exc.failures])
    except ValueError as exc:
        return _fail(EXIT_FIT, "value", str(exc))
    print(json.dumps({"status": "ok", "command": args.command, **result}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
