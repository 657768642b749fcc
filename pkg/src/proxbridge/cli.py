"""proxbridge <estimate|simulate|mc|oracle> --config <path> [overrides]"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, io, oracle
from .config import COMMANDS, RunConfig, parse_assignments, parse_config
from .errors import ConfigError, DataError, ProxBridgeError
from .inference import estimate
from .simulation import run_monte_carlo

# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed",
    "output": "output",
    "level": "level",
    "kappa": "kappa",
    "criterion": "criterion",
    "data": "data.path",
    "preset": "dgp.preset",
    "joint": "dgp.joint",
    "n": "dgp.n",
    "n_ladder": "mc.n_ladder",
    "replications": "mc.replications",
    "jobs": "mc.jobs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxbridge", description="Proximal causal inference with non-unique bridge functions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "debiased means per arm and the ATE from a dataset CSV",
        "simulate": "draw a dataset CSV from a DGP",
        "mc": "Monte Carlo study over a sample-size ladder",
        "oracle": "exact truth, bridge solution sets and identification for a discrete joint",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="INI-style config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        p.add_argument("--seed")
        p.add_argument("--output", help="output directory")
        if name in ("estimate", "mc"):
            p.add_argument("--level")
            p.add_argument("--kappa")
            p.add_argument("--criterion")
        if name == "estimate":
            p.add_argument("--data", help="dataset CSV")
        if name in ("simulate", "mc", "oracle"):
            p.add_argument("--preset")
            p.add_argument("--joint", help="DiscreteJoint JSON file")
        if name == "simulate":
            p.add_argument("--n")
        if name == "mc":
            p.add_argument("--n-ladder", dest="n_ladder")
            p.add_argument("--replications")
            p.add_argument("--jobs")
    return parser


def _overrides(args) -> dict:
    out = parse_assignments(args.set)
    for dest, key in FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is not None:
            out[key] = val
    return out


def _meta(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "config": cfg.echo()}


def run_oracle(cfg: RunConfig) -> list[Path]:
    dgp = cfg.dgp()
    if dgp.kind != "discrete":
        raise ConfigError("oracle needs a discrete DGP (dgp.preset = nonunique or dgp.joint)")
    joint = dgp.joint
    doc = {**_meta(cfg), "dgp": dgp.name, "dims": joint.dims, "truth": {}, "solution_sets": {}, "identification": {}}
    mu = {a: oracle.true_counterfactual_mean(joint, a) for a in (0, 1)}
    doc["truth"] = {"mu_0": mu[0], "mu_1": mu[1], "ate": mu[1] - mu[0]}
    for kind, phi_fn in (("outcome", oracle.inverse_propensity_phi), ("treatment", oracle.outcome_regression_phi)):
        sets, ident = {}, {}
        for a in (0, 1):
            try:
                sset = oracle.bridge_solution_set(joint, a, kind)
            except ProxBridgeError as exc:
                sets[str(a)] = {"exists": False, "error": str(exc)}
                continue
            entry = sset.to_dict()
            entry["exists"] = True
            entry["min_weighted_norm_element"] = [float(v) for v in sset.min_weighted_norm_element()]
            sets[str(a)] = entry
            ident[str(a)] = oracle.root_n_range_member(joint, a, phi_fn(joint, a), kind, solution_set=sset).to_dict()
        doc["solution_sets"][kind] = sets
        doc["identification"][kind] = ident
    return [io.write_json(doc, cfg.output / "oracle.json")]


def run_simulate(cfg: RunConfig) -> list[Path]:
    dgp = cfg.dgp()
    data = dgp.sample(cfg["dgp.n"], np.random.SeedSequence(cfg.seed))
    meta = {**_meta(cfg), "truth": {"mu_0": dgp.truth(0), "mu_1": dgp.truth(1)}}
    return [io.write_dataset(data, cfg.output / "dataset.csv", meta)]


def run_estimate(cfg: RunConfig) -> list[Path]:
    loaded = io.load_dataset(cfg["data.path"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = estimate(loaded.dataset, cfg.estimator())
    body = report.to_dict()
    body["estimator"] = body.pop("config")
    doc = {
        **_meta(cfg),
        "n": loaded.n,
        "ignored_columns": loaded.ignored_columns,
        "warnings": sorted({str(w.message) for w in caught}),
        **body,
    }
    return [io.write_json(doc, cfg.output / "estimate.json")]


def run_mc(cfg: RunConfig) -> list[Path]:
    result = run_monte_carlo(cfg.mc())
    meta = {**_meta(cfg), "dgp": cfg.mc().dgp.to_dict()}
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return io.write_mc(result, cfg.output, meta, timestamp=stamp)


RUNNERS = {"oracle": run_oracle, "simulate": run_simulate, "estimate": run_estimate, "mc": run_mc}


def _fail(exc: Exception, code: int) -> int:
    err = {"error": {"type": type(exc).__name__, "code": getattr(exc, "code", "internal"), "message": str(exc)}}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.command, args.config, _overrides(args))
        paths = RUNNERS[args.command](cfg)
    except (ConfigError, DataError) as exc:
        return _fail(exc, 2)
    except ProxBridgeError as exc:
        return _fail(exc, 1)
    except OSError as exc:
        return _fail(exc, 1)
    sys.stdout.write(json.dumps({"command": args.command, "artifacts": [str(p) for p in paths]}) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
