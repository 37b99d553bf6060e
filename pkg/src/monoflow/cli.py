"""``monoflow`` command line: run a checker or experiment from a JSON config.

Exit status: 0 when the result is within bound / satisfied (or the command
is descriptive), 1 when violated or inconclusive, 2 on input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from typing import Any

import numpy as np

from . import __version__
from .analysis import (
    GronwallProcess,
    additive_apriori_check,
    additive_conditions_check,
    delta_complete_check,
    gronwall_mc_verify,
    holder_estimate,
    minkowski_cloud,
    moment_bound_verify,
)
from .assumptions import (
    SampleDomain,
    check_A_mu_K,
    check_G_rho,
    check_H_f_mu,
    lemma_G_check,
)
from .errors import MonoflowError, InputError
from .examples import describe, lookup, registry
from .expr import scalar_function
from .field import CoefficientField, from_spec
from .integrator import DEFAULT_R_MAX, TimeGrid, flow_grid, sample_noise

log = logging.getLogger("monoflow")

COMMANDS = ("simulate", "check", "gronwall", "moments", "holder", "delta", "additive", "list-examples")
PASSING = {"within_bound", "satisfied_at_level", "ok"}


class RunConfig:
    """Validated view of a config file merged with command-line overrides."""

    def __init__(self, raw: dict, command: str):
        self.raw = raw
        self.command = command
        grid = raw.get("grid", {})
        self.grid_spec = {"t0": grid.get("t0", 0.0), "t1": grid.get("t1", 1.0), "n_steps": grid.get("n_steps", 100)}
        self.replicas = int(raw.get("replicas", 10_000))
        self.master_seed = int(raw.get("master_seed", 0))
        self.R_max = float(raw.get("R_max", DEFAULT_R_MAX))
        self.threads = int(raw.get("threads", os.cpu_count() or 1))
        self.parameters = dict(raw.get("parameters", {}))
        out = raw.get("output", {})
        self.out_path = out.get("path")
        self.out_format = out.get("format", "json")
        if self.out_format not in ("json", "csv"):
            raise InputError(f"unknown output format {self.out_format!r}")
        if self.replicas < 1:
            raise InputError("replicas must be at least 1")
        if self.master_seed < 0:
            raise InputError("master_seed must be non-negative")
        self.field_ref = raw.get("field")

    @property
    def grid(self) -> TimeGrid:
        g = self.grid_spec
        return TimeGrid(float(g["t0"]), float(g["t1"]), int(g["n_steps"]))

    def field(self) -> CoefficientField:
        ref = self.field_ref
        if ref is None:
            raise InputError("config needs a 'field' (example name or inline expression spec)")
        if isinstance(ref, str):
            return lookup(ref).field
        if isinstance(ref, dict):
            return from_spec(ref)
        raise InputError("'field' must be an example name or an object")

    def domain(self, dim: int) -> SampleDomain:
        spec = self.raw.get("domain")
        if spec is None:
            return SampleDomain.cube(3.0, dim)
        try:
            low, high = spec["low"], spec["high"]
        except (KeyError, TypeError):
            raise InputError("domain needs 'low' and 'high'") from None
        if np.ndim(low) == 0:
            low, high = [low] * dim, [high] * dim
        dom = SampleDomain(
            low,
            high,
            n_pairs=int(spec.get("n_pairs", 4096)),
            sampler=spec.get("sampler", "low_discrepancy"),
            min_separation=spec.get("min_separation"),
            ball_radius=spec.get("ball_radius"),
            seed=int(spec.get("seed", self.master_seed)),
        )
        if dom.dim != dim:
            raise InputError(f"domain dimension {dom.dim} does not match field dimension {dim}")
        return dom

    def param(self, name: str, default: Any = ...) -> Any:
        if name in self.parameters:
            return self.parameters[name]
        if default is ...:
            raise InputError(f"command {self.command!r} needs parameter {name!r}")
        return default

    def fn(self, name: str, default: Any = ...):
        """A scalar function parameter: number or expression in ``u``."""
        value = self.param(name, default)
        if isinstance(value, (int, float)):
            return scalar_function(repr(float(value)))
        return scalar_function(str(value))


def _coerce(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
    if raw.get("command") not in (None, args.command):
        log.warning("config command %r overridden by %r", raw.get("command"), args.command)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.replicas is not None:
        raw["replicas"] = args.replicas
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.field is not None:
        raw["field"] = args.field
    out = dict(raw.get("output", {}))
    if args.out is not None:
        out["path"] = args.out
    if args.format is not None:
        out["format"] = args.format
    raw["output"] = out
    params = dict(raw.get("parameters", {}))
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects key=value, got {item!r}")
        params[key] = _coerce(value)
    raw["parameters"] = params
    return RunConfig(raw, args.command)


# each command returns (verdict, json payload, csv rows or None)


def cmd_list_examples(cfg: RunConfig):
    entries = [describe(e) for e in registry()]
    rows = [["name", "d", "m", "expected", "notes"]]
    for e in entries:
        rows.append([e["name"], e["d"], e["m"], "; ".join(c["claim"] for c in e["expected"]), e["notes"]])
    return "ok", {"examples": entries}, rows


def cmd_simulate(cfg: RunConfig):
    field = cfg.field()
    grid = cfg.grid
    points = np.asarray(cfg.param("points", [[0.0] * field.dim]), dtype=float)
    times = cfg.param("times", [grid.t0])
    rows = [["replica", "s", "x_id", "t"] + [f"x_{i + 1}" for i in range(field.dim)] + ["blown_up", "exit_time"]]
    t_grid = grid.times()
    blown_total, finals, exits = 0, [], []
    for rep in range(cfg.replicas):
        fg = flow_grid(field, points, times, grid, sample_noise(grid, field.noise_dim, cfg.master_seed, rep), cfg.R_max)
        for i, s in enumerate(fg.initial_times):
            k0 = grid.index_of(s)
            for p in range(len(points)):
                et = fg.exit_time[i, p]
                blown_total += int(not math.isnan(et))
                for k in range(k0, grid.n_steps + 1):
                    blown = not math.isnan(et) and t_grid[k] >= et
                    vals = [""] * field.dim if blown else [repr(float(v)) for v in fg.values[i, k, p]]
                    rows.append([rep, repr(float(s)), p, repr(float(t_grid[k]))] + vals + [int(blown), "" if math.isnan(et) else repr(float(et))])
                final = fg.values[i, -1, p]
                finals.append(None if not math.isnan(et) else final.tolist())
                exits.append(None if math.isnan(et) else float(et))
    payload = {
        "trajectories": len(finals),
        "blown_up": blown_total,
        "final_states": finals,
        "exit_times": exits,
    }
    return "ok", payload, rows


def cmd_check(cfg: RunConfig):
    field = cfg.field()
    which = cfg.param("assumption")
    mu = float(cfg.param("mu", 0.0))
    if which == "A_mu_K":
        rep = check_A_mu_K(field, cfg.domain(field.dim), mu, float(cfg.param("K")))
    elif which == "G_rho":
        rep = check_G_rho(field, cfg.domain(field.dim), cfg.fn("rho"))
    elif which == "H_f_mu":
        rep = check_H_f_mu(field, cfg.domain(field.dim), cfg.fn("f"), mu)
    elif which == "lemma_G":
        rep = lemma_G_check(field, cfg.param("radii", [0.5, 1.0, 2.0, 4.0]))
    else:
        raise InputError(f"unknown assumption {which!r}; use A_mu_K, G_rho, H_f_mu or lemma_G")
    d = rep.to_dict()
    rows = [list(d.keys()), [json.dumps(v) if isinstance(v, (list, dict)) else v for v in d.values()]]
    return rep.verdict, d, rows


def _samples_rows(check) -> list[list]:
    rows = [["replica", "value"]]
    if check.samples is not None:
        rows += [[i, repr(float(v))] for i, v in enumerate(check.samples)]
    return rows


def cmd_gronwall(cfg: RunConfig):
    grid = cfg.grid
    process = GronwallProcess(
        kind=cfg.param("construction", "squared_norm"),
        x=tuple(np.atleast_1d(cfg.param("x", [0.0]))),
        noise_scale=float(cfg.param("noise_scale", 1.0)),
    )
    check = gronwall_mc_verify(
        process,
        float(cfg.param("p")),
        float(cfg.param("t", grid.t1)),
        cfg.replicas,
        n_steps=grid.n_steps,
        master_seed=cfg.master_seed,
        mode=cfg.param("mode", "deterministic"),
        exponent_mu=cfg.param("exponent_mu", None),
        exponent_nu=cfg.param("exponent_nu", None),
        threads=cfg.threads,
    )
    return check.verdict, check.to_dict(), _samples_rows(check)


def cmd_moments(cfg: RunConfig):
    field = cfg.field()
    check = moment_bound_verify(
        field,
        cfg.param("x"),
        cfg.param("y"),
        cfg.fn("f"),
        float(cfg.param("mu")),
        float(cfg.param("q")),
        float(cfg.param("P")),
        float(cfg.param("Q")),
        cfg.grid,
        cfg.R_max,
        cfg.replicas,
        master_seed=cfg.master_seed,
        threads=cfg.threads,
    )
    return check.verdict, check.to_dict(), _samples_rows(check)


def cmd_holder(cfg: RunConfig):
    field = cfg.field()
    est = holder_estimate(
        field,
        cfg.param("base_x"),
        cfg.param("scales"),
        float(cfg.param("q")),
        cfg.grid,
        cfg.R_max,
        cfg.replicas,
        master_seed=cfg.master_seed,
        threads=cfg.threads,
    )
    rows = [["scale", "mean_sup_distance", "std_error"]] + [
        [repr(h), repr(v), repr(s)] for (h, v), s in zip(est.pairs, est.std_errors)
    ]
    return "ok", est.to_dict(), rows


def cmd_delta(cfg: RunConfig):
    field = cfg.field()
    spec = cfg.param("cloud")
    cloud = minkowski_cloud(
        spec.get("kind", "cantor_dust"),
        float(spec.get("delta", 1.0)),
        int(spec.get("n_points", 256)),
        int(spec.get("ambient_d", field.dim)),
        ratio=spec.get("ratio"),
    )
    check = delta_complete_check(
        field,
        cloud,
        float(cfg.param("q")),
        float(cfg.param("K", 0.0)),
        cfg.grid,
        cfg.R_max,
        cfg.replicas,
        mu=cfg.param("mu", None),
        n_pairs=int(cfg.param("n_pairs", 64)),
        reading=cfg.param("reading", "power"),
        master_seed=cfg.master_seed,
        threads=cfg.threads,
    )
    payload = check.to_dict()
    verdict = check.verdict
    if payload["blowup_fraction"] > 0 or payload["max_image_diameter"] > payload["diameter_envelope"]:
        verdict = "violated"
    payload["verdict"] = verdict
    rows = [list(payload.keys())[:6], [payload[k] for k in list(payload.keys())[:6]]]
    return verdict, payload, rows


def cmd_additive(cfg: RunConfig):
    field = cfg.field()
    c = float(cfg.param("c"))
    cond = additive_conditions_check(field.drift, cfg.domain(field.dim), c)
    payload = {"conditions": cond.to_dict()}
    verdict = cond.verdict
    if cfg.param("apriori", True):
        growth_c = float(cfg.param("growth_c", c))
        apriori = additive_apriori_check(
            field.drift,
            float(cfg.param("sigma", 1.0)),
            growth_c,
            cfg.param("x", [0.0] * field.dim),
            cfg.grid,
            cfg.replicas,
            master_seed=cfg.master_seed,
            threads=cfg.threads,
            R_max=cfg.R_max,
        )
        payload["apriori"] = apriori.to_dict()
        if not apriori.ok:
            verdict = "violated"
    payload["verdict"] = verdict
    rows = [["check", "verdict"], ["conditions", cond.verdict]]
    if "apriori" in payload:
        rows.append(["apriori", payload["apriori"]["verdict"]])
    return verdict, payload, rows


HANDLERS = {
    "list-examples": cmd_list_examples,
    "simulate": cmd_simulate,
    "check": cmd_check,
    "gronwall": cmd_gronwall,
    "moments": cmd_moments,
    "holder": cmd_holder,
    "delta": cmd_delta,
    "additive": cmd_additive,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".monoflow-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render(cfg: RunConfig, verdict: str, payload: dict, rows, timestamp: bool) -> str:
    if cfg.out_format == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows or [])
        return buf.getvalue()
    doc = {
        "command": cfg.command,
        "verdict": verdict,
        "master_seed": cfg.master_seed,
        "replicas": cfg.replicas,
        "result": payload,
        "version": __version__,
    }
    if timestamp:
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monoflow", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--replicas", type=int)
    parser.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    parser.add_argument("--out", help="output path (stdout if omitted)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--field", help="example name, overrides the config")
    parser.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a command parameter")
    parser.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from JSON output")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        verdict, payload, rows = HANDLERS[args.command](cfg)
    except (MonoflowError, KeyError, TypeError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"monoflow: input error: {msg}", file=sys.stderr)
        return 2
    text = render(cfg, verdict, payload, rows, timestamp=not args.no_timestamp)
    if cfg.out_path:
        write_atomic(cfg.out_path, text)
    else:
        sys.stdout.write(text)
    summary = f"{args.command}: {verdict}"
    if "empirical" in payload and "bound" in payload:
        summary += f" (empirical {payload['empirical']:.6g} vs bound {payload['bound']:.6g})"
    print(summary, file=sys.stderr if not cfg.out_path else sys.stdout)
    if verdict in PASSING:
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
