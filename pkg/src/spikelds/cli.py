"""Command-line runner: experiments in, CSV and JSON data files out.

    python -m spikelds validate-cov --seed 3 --out runs/cov
    python -m spikelds sweep --config sweep.json
    python -m spikelds kalman --p 5 --ell 10 --out runs/kf
    python -m spikelds compile --out runs/cores

Every command writes ``summary.json`` containing the fully resolved config.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .analytics import DivergenceError
from .circuits import build_addition, build_spiking_lds, rationalize, transform_lds
from .codec import CodecConfig
from .compiler import compile_graph, write_core_config
from .experiments import sweep, validate_covariance, worker_count
from .graph import ConfigurationError
from .kalman import KinematicTask, generate_kinematic_trials, leave_one_out, normalize_trials, read_dataset
from .lds import GenParams, gen_random_lds

log = logging.getLogger("spikelds")

KINDS = {
    "validate-cov": "covariance_validation",
    "sweep": "sweep",
    "kalman": "kalman_demo",
    "compile": "compile_only",
}

DEFAULTS = {
    "kind": "covariance_validation",
    "seed": 0,
    "output": "out",
    "use_cancellation": True,
    "codec": {"frame_len": 25, "pop_size": 21, "eta": 0.9},
    "lds": {"m": 5, "n": 5, "rho0": 0.9, "T": 2400},
    "sweep": {"axis": "input_dim", "grid": [5, 8, 11, 14, 17, 20, 23, 26, 29, 32]},
    "kalman": {
        "dataset": None,
        "dt": 1.0,
        "trials": None,
        "task": {
            "n_trials": 38,
            "n_steps": 120,
            "n_obs": 73,
            "phi": 0.9,
            "q_pos": 0.01,
            "q_vel": 0.05,
            "obs_noise": 1.0,
        },
    },
    "compile": {"target": "lds"},
}

_pos_int = {"type": "integer", "minimum": 1}
_number = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "seed", "output", "use_cancellation", "codec", "lds", "sweep", "kalman", "compile"],
    "properties": {
        "kind": {"enum": sorted(KINDS.values())},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "string", "minLength": 1},
        "use_cancellation": {"type": "boolean"},
        "codec": {
            "type": "object",
            "additionalProperties": False,
            "required": ["frame_len", "pop_size", "eta"],
            "properties": {
                "frame_len": _pos_int,
                "pop_size": _pos_int,
                "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "lds": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m", "n", "rho0", "T"],
            "properties": {
                "m": _pos_int,
                "n": _pos_int,
                "rho0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "T": _pos_int,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "grid"],
            "properties": {
                "axis": {"enum": ["input_dim", "recurrent_strength", "frame_len"]},
                "grid": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "kalman": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dataset", "dt", "trials", "task"],
            "properties": {
                "dataset": {"type": ["string", "null"]},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "trials": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
                "task": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n_trials", "n_steps", "n_obs", "phi", "q_pos", "q_vel", "obs_noise"],
                    "properties": {
                        "n_trials": {"type": "integer", "minimum": 2},
                        "n_steps": {"type": "integer", "minimum": 2},
                        "n_obs": _pos_int,
                        "phi": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "q_pos": {"type": "number", "exclusiveMinimum": 0},
                        "q_vel": {"type": "number", "exclusiveMinimum": 0},
                        "obs_noise": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "compile": {
            "type": "object",
            "additionalProperties": False,
            "required": ["target"],
            "properties": {"target": {"enum": ["lds", "identity"]}},
        },
    },
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(command: str, path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then command-line flags; validated at the end."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg["kind"] = KINDS[command]
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ValueError("config file must hold a JSON object")
        if "kind" in user and user["kind"] != cfg["kind"]:
            raise ValueError(f"config kind {user['kind']!r} does not match command {command!r}")
        cfg = _merge(cfg, user)
    cfg = _merge(cfg, overrides or {})
    jsonschema.validate(cfg, SCHEMA)
    if cfg["kind"] == "compile_only" and cfg["codec"]["pop_size"] > 21:
        raise ValueError("compilation supports p <= 21")
    return cfg


def _codec(cfg) -> CodecConfig:
    return CodecConfig(**cfg["codec"])


def _gen_params(cfg) -> GenParams:
    return GenParams(seed=cfg["seed"], codec=_codec(cfg), **cfg["lds"])


# output helpers; all writing happens on the calling thread


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_matrix(path: Path, prefix: str, M) -> None:
    M = np.atleast_2d(M)
    write_csv(path, [f"{prefix}{j}" for j in range(M.shape[1])], (_fmt_row(r) for r in M))


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt_row(values):
    return [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in values]


def _summary(cfg, **results):
    return {"config": cfg, "results": results}


# commands


def cmd_validate_covariance(cfg, out: Path) -> dict:
    params = _gen_params(cfg)
    run, rep = validate_covariance(params, cfg["use_cancellation"])
    m, T = run.lds.m, run.inputs.shape[0]
    write_matrix(out / "inputs.csv", "u", run.inputs)
    states = np.hstack([np.arange(T)[:, None], run.spiking_states, run.reference_states])
    header = ["frame"] + [f"spiking{i}" for i in range(m)] + [f"reference{i}" for i in range(m)]
    write_csv(out / "states.csv", header, (_fmt_row([int(r[0]), *r[1:]]) for r in states))
    write_matrix(out / "sigma_sample.csv", "c", rep.sample_cov)
    write_matrix(out / "sigma_theory.csv", "c", rep.theory_cov)
    rows = []
    for i in range(m):
        for j in range(m):
            s, t = rep.sample_cov[i, j], rep.theory_cov[i, j]
            rows.append(_fmt_row([i, j, float(s), float(t), float(s - t)]))
    write_csv(out / "comparison.csv", ["row", "col", "sample", "theory", "difference"], rows)
    summary = _summary(
        cfg,
        rel_frobenius=rep.rel_frobenius,
        sample_mse=rep.sample_mse,
        theory_mse=rep.theory_mse,
        n_eff=rep.n_eff,
        n_overflow=run.n_overflow,
        n_neurons=run.n_neurons,
        rho=run.lds.rho,
        rho_abs=run.lds.rho_abs,
    )
    write_json(out / "summary.json", summary)
    return summary


def cmd_sweep(cfg, out: Path) -> dict:
    axis = cfg["sweep"]["axis"]
    grid = cfg["sweep"]["grid"]
    if axis in ("input_dim", "frame_len"):
        if any(float(g) != int(g) for g in grid):
            raise ValueError(f"{axis} grid values must be integers")
        grid = [int(g) for g in grid]
    points = sweep(axis, grid, _gen_params(cfg), cfg["use_cancellation"], worker_count())
    rows = [
        _fmt_row([p.value, p.report.theory_mse, p.report.sample_mse, p.report.mse_ratio, p.n_overflow])
        for p in points
    ]
    write_csv(out / "sweep.csv", [axis, "theory_mse", "sample_mse", "ratio", "n_overflow"], rows)
    worst = max(abs(p.report.mse_ratio - 1) for p in points)
    summary = _summary(cfg, n_points=len(points), max_relative_mse_error=worst)
    write_json(out / "summary.json", summary)
    return summary


def cmd_kalman_demo(cfg, out: Path) -> dict:
    kc = cfg["kalman"]
    codec = _codec(cfg)
    if kc["dataset"]:
        trials = read_dataset(kc["dataset"])
    else:
        task = KinematicTask(dt=kc["dt"], seed=cfg["seed"], **kc["task"])
        trials = generate_kinematic_trials(task)
    if len(trials) < 2:
        raise ValueError("leave-one-out needs at least two trials")
    which = kc["trials"]
    if which is not None and any(i >= len(trials) for i in which):
        raise ValueError(f"trial index out of range (dataset has {len(trials)} trials)")
    trials = normalize_trials(trials, codec)
    results = leave_one_out(trials, codec, kc["dt"], cfg["use_cancellation"], which)
    write_csv(
        out / "correlations.csv",
        ["trial", "r_kf", "r_sskf", "r_spiking", "r_spiking_vs_sskf", "n_overflow"],
        (
            _fmt_row([r.trial, r.r_kf, r.r_sskf, r.r_spiking, r.r_spiking_vs_sskf, r.n_overflow])
            for r in results
        ),
    )
    rows = []
    for r in results:
        for t in range(len(r.true)):
            rows.append(_fmt_row([r.trial, t, float(r.true[t]), float(r.kf[t]), float(r.sskf[t]), float(r.spiking[t])]))
    write_csv(out / "reconstructions.csv", ["trial", "time", "true", "kf", "sskf", "spiking"], rows)
    rs = np.array([r.r_spiking_vs_sskf for r in results])
    summary = _summary(
        cfg,
        n_trials=len(results),
        mean_r_kf=float(np.mean([r.r_kf for r in results])),
        mean_r_sskf=float(np.mean([r.r_sskf for r in results])),
        mean_r_spiking=float(np.mean([r.r_spiking for r in results])),
        min_r_spiking_vs_sskf=float(rs.min()),
        mean_r_spiking_vs_sskf=float(rs.mean()),
    )
    write_json(out / "summary.json", summary)
    return summary


def cmd_compile(cfg, out: Path) -> dict:
    codec = _codec(cfg)
    if cfg["compile"]["target"] == "identity":
        graph = build_addition(1, codec.pop_size)
    else:
        lds, _ = gen_random_lds(_gen_params(cfg))
        _, aw, bw = rationalize(lds, codec.pop_size)
        graph = build_spiking_lds(transform_lds(lds), codec, cfg["use_cancellation"], weights=(aw, bw))
    net = compile_graph(graph, codec)
    write_core_config(net, out / "cores.json")
    report = dict(vars(net.report))
    report["latency_offset"] = net.latency_offset
    write_json(out / "report.json", report)
    summary = _summary(cfg, n_cores=net.report.n_cores, latency_offset=net.latency_offset)
    write_json(out / "summary.json", summary)
    return summary


COMMANDS = {
    "validate-cov": cmd_validate_covariance,
    "sweep": cmd_sweep,
    "kalman": cmd_kalman_demo,
    "compile": cmd_compile,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--p", type=int, help="population size")
    common.add_argument("--ell", type=int, help="frame length in steps")
    common.add_argument("--eta", type=float, help="saturation factor")
    common.add_argument("--no-cancellation", action="store_true", help="plain adders instead of cancellation")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="spikelds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate-cov": "sample vs predicted residual covariance for one random system",
        "sweep": "theory vs sample MSE along one parameter",
        "kalman": "leave-one-out spiking Kalman decoding",
        "compile": "lower a network onto cores and write the configuration",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    codec = {}
    if args.p is not None:
        codec["pop_size"] = args.p
    if args.ell is not None:
        codec["frame_len"] = args.ell
    if args.eta is not None:
        codec["eta"] = args.eta
    if codec:
        over["codec"] = codec
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output"] = str(args.out)
    if args.no_cancellation:
        over["use_cancellation"] = False
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, _overrides(args))
        out = Path(cfg["output"])
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
    except jsonschema.ValidationError as e:
        path = "/".join(str(x) for x in e.absolute_path) or "<root>"
        print(f"spikelds: invalid config at {path}: {e.message}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, DivergenceError, ConfigurationError, OSError) as e:
        print(f"spikelds: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary["results"], sort_keys=True))
    return 0
