"""Command-line front end: JSON experiment configs in, tables and
reports out.

One experiment is one JSON file.  The subcommand names the experiment
kind; the config carries everything else, so a run is reproducible
from the single artifact.  Flags only override the seed, the worker
count, and the output directory.

Outputs are deterministic: reports are JSON with fixed key order,
tables are delimiter-separated with a fixed header and floats printed
with 17 significant digits.  Reruns of the same config and seed are
byte-identical regardless of worker count.

Exit codes: 0 success, 2 configuration or validation failure,
3 runtime or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import montecarlo as mc
from .multi_urn import CommonFactors, UrnSpec, UrnSystem
from .urn_core import (
    AbsorbingRandomWalk,
    ConfigError,
    ConstantOne,
    ConstantReinforcement,
    DeterministicSchedule,
    DiscreteDraw,
    DiscreteReinforcement,
    IidUniform,
    IntegerDistribution,
    ParameterError,
    UniformReinforcement,
    UrnConfig,
)

KINDS = ("simulate", "clt", "coverage", "limit-law", "mtest", "hitting")

DRAW_POLICIES = ("constant-one", "schedule", "iid-uniform", "discrete", "absorbing-walk")
REINF_POLICIES = ("constant", "uniform-range", "discrete")

WORKERS_ENV = "HRRU_WORKERS"


@dataclass
class ExperimentConfig:
    """Validated, normalized description of one experiment."""

    kind: str
    urn: UrnConfig | None = None
    system: UrnSystem | None = None
    reps: int = 1
    n: int = 1
    n_proxy: int | None = None
    seed: int = 0
    chunk_size: int = mc.DEFAULT_CHUNK_SIZE
    level: float | None = None
    target: str | None = None
    reference: tuple[str, ...] = ()
    coeffs: dict[str, float] = field(default_factory=dict)
    basis: str = "Z"
    walk_start: int | None = None
    walk_high: int | None = None
    walk_reps: int | None = None
    # Delivery location, not experiment identity: excluded from equality
    # and from the config echo so reports stay byte-identical wherever
    # they are written.
    out_dir: str = field(default=".", compare=False)
    table_format: str = "tsv"


class _Collector:
    """Accumulates validation problems so all are reported at once."""

    def __init__(self):
        self.problems: list[str] = []

    def add(self, path: str, message: str) -> None:
        self.problems.append(f"{path}: {message}")

    def expect_int(self, obj: dict, path: str, key: str, minimum: int | None = None,
                   required: bool = True, default=None):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "required field is missing")
            return default
        v = obj[key]
        if not isinstance(v, int) or isinstance(v, bool):
            self.add(f"{path}.{key}", f"must be an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.add(f"{path}.{key}", f"must be >= {minimum}, got {v}")
            return default
        return v

    def expect_number(self, obj: dict, path: str, key: str, required: bool = True,
                      default=None):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "required field is missing")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(f"{path}.{key}", f"must be a number, got {v!r}")
            return default
        return float(v)

    def expect_str(self, obj: dict, path: str, key: str, required: bool = True,
                   default=None, choices: tuple[str, ...] | None = None):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "required field is missing")
            return default
        v = obj[key]
        if not isinstance(v, str):
            self.add(f"{path}.{key}", f"must be a string, got {v!r}")
            return default
        if choices is not None and v not in choices:
            self.add(f"{path}.{key}", f"must be one of {choices}, got {v!r}")
            return default
        return v


def _parse_int_list(col: _Collector, obj: dict, path: str, key: str) -> tuple[int, ...] | None:
    if key not in obj:
        col.add(f"{path}.{key}", "required field is missing")
        return None
    v = obj[key]
    if not isinstance(v, list) or not v:
        col.add(f"{path}.{key}", f"must be a nonempty list of integers, got {v!r}")
        return None
    if any(not isinstance(x, int) or isinstance(x, bool) for x in v):
        col.add(f"{path}.{key}", f"must contain only integers, got {v!r}")
        return None
    return tuple(v)


def _parse_prob_list(col: _Collector, obj: dict, path: str, key: str) -> tuple[float, ...] | None:
    if key not in obj:
        col.add(f"{path}.{key}", "required field is missing")
        return None
    v = obj[key]
    if not isinstance(v, list) or not v:
        col.add(f"{path}.{key}", f"must be a nonempty list of numbers, got {v!r}")
        return None
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        col.add(f"{path}.{key}", f"must contain only numbers, got {v!r}")
        return None
    return tuple(float(x) for x in v)


def _parse_draw(col: _Collector, obj, path: str):
    if not isinstance(obj, dict):
        col.add(path, f"must be an object, got {obj!r}")
        return None
    name = col.expect_str(obj, path, "policy", choices=None)
    if name is None:
        return None
    if name not in DRAW_POLICIES:
        col.add(f"{path}.policy", f"unknown draw policy {name!r}; supported: {DRAW_POLICIES}")
        return None
    try:
        if name == "constant-one":
            return ConstantOne()
        if name == "schedule":
            values = _parse_int_list(col, obj, path, "values")
            return DeterministicSchedule(values) if values else None
        if name == "iid-uniform":
            high = col.expect_int(obj, path, "high", minimum=1)
            return IidUniform(high) if high is not None else None
        if name == "discrete":
            values = _parse_int_list(col, obj, path, "values")
            probs = _parse_prob_list(col, obj, path, "probs")
            return DiscreteDraw(values, probs) if values and probs else None
        start = col.expect_int(obj, path, "start", minimum=1)
        high = col.expect_int(obj, path, "high", minimum=2)
        if start is None or high is None:
            return None
        return AbsorbingRandomWalk(start, high)
    except ParameterError as exc:
        col.add(path, str(exc))
        return None


def _parse_reinforce(col: _Collector, obj, path: str):
    if not isinstance(obj, dict):
        col.add(path, f"must be an object, got {obj!r}")
        return None
    name = col.expect_str(obj, path, "policy")
    if name is None:
        return None
    if name not in REINF_POLICIES:
        col.add(
            f"{path}.policy",
            f"unknown reinforcement policy {name!r}; supported: {REINF_POLICIES}",
        )
        return None
    try:
        if name == "constant":
            value = col.expect_int(obj, path, "value", minimum=1)
            return ConstantReinforcement(value) if value is not None else None
        if name == "uniform-range":
            low = col.expect_int(obj, path, "low", minimum=1)
            high = col.expect_int(obj, path, "high", minimum=1)
            if low is None or high is None:
                return None
            return UniformReinforcement(low, high)
        values = _parse_int_list(col, obj, path, "values")
        probs = _parse_prob_list(col, obj, path, "probs")
        return DiscreteReinforcement(values, probs) if values and probs else None
    except ParameterError as exc:
        col.add(path, str(exc))
        return None


def _parse_single_urn(col: _Collector, obj, path: str) -> UrnConfig | None:
    if not isinstance(obj, dict):
        col.add(path, f"must be an object, got {obj!r}")
        return None
    a = col.expect_int(obj, path, "a", minimum=1)
    b = col.expect_int(obj, path, "b", minimum=1)
    label = col.expect_str(obj, path, "label", required=False, default="u0")
    draw = _parse_draw(col, obj.get("draw"), f"{path}.draw") if "draw" in obj else None
    if "draw" not in obj:
        col.add(f"{path}.draw", "required field is missing")
    reinforce = (
        _parse_reinforce(col, obj.get("reinforce"), f"{path}.reinforce")
        if "reinforce" in obj else None
    )
    if "reinforce" not in obj:
        col.add(f"{path}.reinforce", "required field is missing")
    if None in (a, b, draw, reinforce):
        return None
    try:
        return UrnConfig(a=a, b=b, draw=draw, reinforce=reinforce, label=label)
    except ConfigError as exc:
        for p in exc.problems:
            col.add(path, p)
        return None


def _parse_factor_dist(col: _Collector, obj, path: str) -> IntegerDistribution | None:
    if not isinstance(obj, dict):
        col.add(path, f"must be an object, got {obj!r}")
        return None
    values = _parse_int_list(col, obj, path, "values")
    probs = _parse_prob_list(col, obj, path, "probs")
    if not values or not probs:
        return None
    try:
        return IntegerDistribution(values, probs)
    except ParameterError as exc:
        col.add(path, str(exc))
        return None


def _parse_system(col: _Collector, urns_obj, factors_obj) -> UrnSystem | None:
    if not isinstance(urns_obj, list) or not urns_obj:
        col.add("urns", f"must be a nonempty list, got {urns_obj!r}")
        return None
    specs = []
    ok = True
    for i, item in enumerate(urns_obj):
        path = f"urns[{i}]"
        if not isinstance(item, dict):
            col.add(path, f"must be an object, got {item!r}")
            ok = False
            continue
        label = col.expect_str(item, path, "label")
        a = col.expect_int(item, path, "a", minimum=1)
        b = col.expect_int(item, path, "b", minimum=1)
        h = col.expect_int(item, path, "draw_base", minimum=1)
        r = col.expect_int(item, path, "reinforce_base", minimum=1)
        if None in (label, a, b, h, r):
            ok = False
            continue
        specs.append(UrnSpec(label=label, a=a, b=b, draw_base=h, reinforce_base=r))
    factors = CommonFactors()
    if factors_obj is not None:
        if not isinstance(factors_obj, dict):
            col.add("factors", f"must be an object, got {factors_obj!r}")
            ok = False
        else:
            fd = fr = None
            if "draw" in factors_obj:
                fd = _parse_factor_dist(col, factors_obj["draw"], "factors.draw")
                ok = ok and fd is not None
            if "reinforce" in factors_obj:
                fr = _parse_factor_dist(col, factors_obj["reinforce"], "factors.reinforce")
                ok = ok and fr is not None
            factors = CommonFactors(draw=fd, reinforce=fr)
    if not ok:
        return None
    try:
        return UrnSystem(urns=tuple(specs), factors=factors)
    except ConfigError as exc:
        for p in exc.problems:
            col.add("urns", p)
        return None


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    Collects every validation problem before failing; syntax errors
    carry line and column.  ``kind`` (from the subcommand) fills in or
    cross-checks the config's own "kind" field.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"syntax: {exc.msg} at line {exc.lineno}, column {exc.colno}"]
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["top level: must be a JSON object"])
    col = _Collector()

    cfg_kind = raw.get("kind")
    if cfg_kind is not None and cfg_kind not in KINDS:
        col.add("kind", f"must be one of {KINDS}, got {cfg_kind!r}")
        cfg_kind = None
    if kind is None:
        if cfg_kind is None:
            col.add("kind", f"required (or pass a subcommand); one of {KINDS}")
        resolved_kind = cfg_kind
    else:
        if cfg_kind is not None and cfg_kind != kind:
            col.add("kind", f"config says {cfg_kind!r} but the subcommand is {kind!r}")
        resolved_kind = kind

    out = ExperimentConfig(kind=resolved_kind or "simulate")

    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict):
        col.add("outputs", f"must be an object, got {outputs!r}")
        outputs = {}
    out.out_dir = col.expect_str(outputs, "outputs", "dir", required=False, default=".")
    out.table_format = col.expect_str(
        outputs, "outputs", "table_format", required=False, default="tsv",
        choices=("tsv", "csv"),
    )

    has_urn = "urn" in raw
    has_urns = "urns" in raw
    if has_urn and has_urns:
        col.add("urn", "give either a single 'urn' or a multi-urn 'urns' list, not both")

    if resolved_kind == "hitting":
        walk = raw.get("walk")
        if not isinstance(walk, dict):
            col.add("walk", "hitting experiments need a 'walk' object (start, high, reps)")
        else:
            out.walk_start = col.expect_int(walk, "walk", "start", minimum=2)
            out.walk_high = col.expect_int(walk, "walk", "high", minimum=3)
            out.walk_reps = col.expect_int(walk, "walk", "reps", minimum=1)
            out.seed = col.expect_int(walk, "walk", "seed", required=False, default=0)
            if (
                out.walk_start is not None and out.walk_high is not None
                and out.walk_start > out.walk_high - 1
            ):
                col.add("walk.start", "must satisfy 2 <= start <= high - 1")
        if col.problems:
            raise ConfigError(col.problems)
        return out

    plan = raw.get("plan")
    if not isinstance(plan, dict):
        col.add("plan", "required object (reps, n, n_proxy, seed)")
        plan = {}
    needs_reps = resolved_kind != "simulate"
    out.reps = col.expect_int(plan, "plan", "reps", minimum=1,
                              required=needs_reps, default=1) or 1
    out.n = col.expect_int(plan, "plan", "n", minimum=1) or 1
    out.n_proxy = col.expect_int(plan, "plan", "n_proxy", minimum=1,
                                 required=False, default=None)
    out.seed = col.expect_int(plan, "plan", "seed")
    if out.seed is None:
        out.seed = 0
    out.chunk_size = col.expect_int(plan, "plan", "chunk_size", minimum=1,
                                    required=False, default=mc.DEFAULT_CHUNK_SIZE)

    system_kinds = ("mtest",)
    single_kinds = ("simulate", "clt", "limit-law")
    if resolved_kind in single_kinds and has_urns:
        col.add("urns", f"{resolved_kind} experiments run on a single urn; use 'urn'")
    if resolved_kind in system_kinds and has_urn:
        col.add("urn", f"{resolved_kind} experiments need a multi-urn system; use 'urns'")

    if has_urns and resolved_kind not in single_kinds:
        out.system = _parse_system(col, raw.get("urns"), raw.get("factors"))
    elif has_urn:
        if "factors" in raw:
            col.add("factors", "common factors apply to multi-urn systems only")
        out.urn = _parse_single_urn(col, raw.get("urn"), "urn")
    else:
        col.add("urn", f"an experiment of kind {resolved_kind!r} needs an urn section")

    if resolved_kind == "coverage":
        out.level = col.expect_number(raw, "", "level", required=False, default=0.95)
    elif resolved_kind == "mtest":
        out.level = col.expect_number(raw, "", "level", required=False, default=0.05)
    if out.level is not None and not (0.0 < out.level < 1.0):
        col.add("level", f"must lie in (0, 1), got {out.level!r}")

    if resolved_kind == "mtest":
        out.target = col.expect_str(raw, "", "target")
        ref = raw.get("reference")
        if not isinstance(ref, list) or not ref or not all(isinstance(x, str) for x in ref):
            col.add("reference", f"must be a nonempty list of urn labels, got {ref!r}")
        else:
            out.reference = tuple(ref)
        if out.system is not None and out.target is not None:
            labels = out.system.labels
            for lab in (out.target, *out.reference):
                if lab not in labels:
                    col.add("target" if lab == out.target else "reference",
                            f"no urn labeled {lab!r}; labels are {labels}")
            if out.target in out.reference:
                col.add("target", "must not belong to the reference set")

    if "coeffs" in raw:
        coeffs = raw["coeffs"]
        if not isinstance(coeffs, dict) or not coeffs:
            col.add("coeffs", f"must be a nonempty object of label: weight, got {coeffs!r}")
        elif any(isinstance(v, bool) or not isinstance(v, (int, float))
                 for v in coeffs.values()):
            col.add("coeffs", "weights must be numbers")
        else:
            out.coeffs = {k: float(v) for k, v in coeffs.items()}
            if out.system is not None:
                for lab in out.coeffs:
                    if lab not in out.system.labels:
                        col.add("coeffs", f"no urn labeled {lab!r}; labels are {out.system.labels}")
    out.basis = col.expect_str(raw, "", "basis", required=False, default="Z",
                               choices=("Z", "M"))
    if resolved_kind == "coverage" and out.system is not None and not out.coeffs:
        col.add("coeffs", "coverage on a multi-urn system needs a coefficient map")

    # Plan-level cross checks mirror ReplicationPlan's own validation,
    # surfaced here so they land in the collected error list.
    if out.n_proxy is not None and out.n_proxy < 10 * out.n:
        col.add("plan.n_proxy", f"must be >= 10 n = {10 * out.n}, got {out.n_proxy}")
    if col.problems:
        raise ConfigError(col.problems)
    return out


# Serialization back to the JSON form (the config echo).


def _draw_to_json(policy) -> dict:
    if isinstance(policy, ConstantOne):
        return {"policy": "constant-one"}
    if isinstance(policy, DeterministicSchedule):
        return {"policy": "schedule", "values": list(policy.values)}
    if isinstance(policy, IidUniform):
        return {"policy": "iid-uniform", "high": policy.high}
    if isinstance(policy, DiscreteDraw):
        return {"policy": "discrete", "values": list(policy.values),
                "probs": list(policy.probs)}
    if isinstance(policy, AbsorbingRandomWalk):
        return {"policy": "absorbing-walk", "start": policy.start, "high": policy.high}
    raise ParameterError(f"policy {type(policy).__name__} has no JSON form")


def _reinf_to_json(policy) -> dict:
    if isinstance(policy, ConstantReinforcement):
        return {"policy": "constant", "value": policy.value}
    if isinstance(policy, UniformReinforcement):
        return {"policy": "uniform-range", "low": policy.low, "high": policy.high}
    if isinstance(policy, DiscreteReinforcement):
        return {"policy": "discrete", "values": list(policy.values),
                "probs": list(policy.probs)}
    raise ParameterError(f"policy {type(policy).__name__} has no JSON form")


def config_to_json_dict(cfg: ExperimentConfig) -> dict:
    """The config echo: parses back to an equal ExperimentConfig."""
    out: dict = {"kind": cfg.kind}
    if cfg.kind == "hitting":
        out["walk"] = {
            "start": cfg.walk_start, "high": cfg.walk_high,
            "reps": cfg.walk_reps, "seed": cfg.seed,
        }
        out["outputs"] = {"table_format": cfg.table_format}
        return out
    if cfg.urn is not None:
        out["urn"] = {
            "a": cfg.urn.a, "b": cfg.urn.b, "label": cfg.urn.label,
            "draw": _draw_to_json(cfg.urn.draw),
            "reinforce": _reinf_to_json(cfg.urn.reinforce),
        }
    if cfg.system is not None:
        out["urns"] = [
            {"label": u.label, "a": u.a, "b": u.b,
             "draw_base": u.draw_base, "reinforce_base": u.reinforce_base}
            for u in cfg.system.urns
        ]
        factors = {}
        if cfg.system.factors.draw is not None:
            d = cfg.system.factors.draw
            factors["draw"] = {"values": list(d.values), "probs": list(d.probs)}
        if cfg.system.factors.reinforce is not None:
            d = cfg.system.factors.reinforce
            factors["reinforce"] = {"values": list(d.values), "probs": list(d.probs)}
        if factors:
            out["factors"] = factors
    plan: dict = {"reps": cfg.reps, "n": cfg.n, "seed": cfg.seed,
                  "chunk_size": cfg.chunk_size}
    if cfg.n_proxy is not None:
        plan["n_proxy"] = cfg.n_proxy
    out["plan"] = plan
    if cfg.level is not None:
        out["level"] = cfg.level
    if cfg.target is not None:
        out["target"] = cfg.target
        out["reference"] = list(cfg.reference)
    if cfg.coeffs:
        out["coeffs"] = cfg.coeffs
        out["basis"] = cfg.basis
    out["outputs"] = {"table_format": cfg.table_format}
    return out


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_table(path: Path, header: list[str], columns: list, fmt: str) -> None:
    sep = "\t" if fmt == "tsv" else ","
    rows = len(columns[0]) if columns else 0
    lines = [sep.join(header)]
    for i in range(rows):
        lines.append(sep.join(_fmt(c[i]) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _report_skeleton(cfg: ExperimentConfig) -> dict:
    return {
        "tool": "hrru",
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": config_to_json_dict(cfg),
    }


def _plan_for(cfg: ExperimentConfig) -> mc.ReplicationPlan:
    return mc.ReplicationPlan(
        config=cfg.urn if cfg.urn is not None else cfg.system,
        reps=cfg.reps,
        n=cfg.n,
        n_proxy=cfg.n_proxy,
        master_seed=cfg.seed,
        chunk_size=cfg.chunk_size,
    )


def _diag_to_dict(d: mc.CltDiagnostics) -> dict:
    out = {
        "kind": d.kind,
        "ks_distance": d.ks_distance,
        "excluded": d.excluded,
        "reps": d.reps,
    }
    if d.coverage is not None:
        out["coverage"] = d.coverage
        out["coverage_level"] = d.coverage_level
    if d.aux:
        out["aux"] = dict(d.aux)
    return out


def _run_simulate(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    from .urn_core import run_trajectory

    traj = run_trajectory(cfg.urn, cfg.n, cfg.seed)
    steps = np.arange(1, len(traj) + 1)
    write_table(
        out_dir / f"trajectory.{cfg.table_format}",
        ["n", "N", "X", "R", "H", "S", "Z", "M"],
        [steps, traj.N, traj.X, traj.R, traj.H, traj.S, traj.Z, traj.M],
        cfg.table_format,
    )
    report = _report_skeleton(cfg)
    report["results"] = {
        "steps": len(traj),
        "final_z": float(traj.Z[-1]),
        "final_m": float(traj.M[-1]),
        "final_s": int(traj.S[-1]),
    }
    return report


def _run_clt(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    plan = _plan_for(cfg)
    records = mc.replicate(plan, workers)
    zn = mc.clt_check_zn(plan, records)
    mn = mc.clt_check_mn(plan, records)
    u = records.single
    v, w, uu = u.at_n.variances()
    n = plan.n
    rootn = math.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_prop = rootn * (u.at_n.z - u.at_proxy.z) / np.sqrt(v)
        t_gap = rootn * (u.at_n.m_emp - u.at_n.z) / np.sqrt(uu)
        t_mean = rootn * (u.at_n.m_emp - u.at_proxy.z) / np.sqrt(w)
    write_table(
        out_dir / f"samples.{cfg.table_format}",
        ["rep", "z_n", "m_emp", "z_proxy", "v_n", "w_n", "u_n",
         "t_prop", "t_gap", "t_mean"],
        [np.arange(plan.reps), u.at_n.z, u.at_n.m_emp, u.at_proxy.z,
         v, w, uu, t_prop, t_gap, t_mean],
        cfg.table_format,
    )
    report = _report_skeleton(cfg)
    report["results"] = {
        "proportion": _diag_to_dict(zn),
        "gap": _diag_to_dict(mn.gap),
        "mean": _diag_to_dict(mn.mean),
        "corr_gap_proportion": mn.corr_gap_proportion,
        "median_abs_gap": mn.median_abs_gap,
    }
    return report


def _run_coverage(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    plan = _plan_for(cfg)
    records = mc.replicate(plan, workers)
    report = _report_skeleton(cfg)
    if cfg.urn is not None:
        cov = mc.coverage_experiment(plan, cfg.level, records)
        report["results"] = {
            "level": cov.level,
            "n": cov.n,
            "proxy_horizon": cov.proxy_horizon,
            "from_Zn": _coverage_to_dict(cov.from_zn),
            "from_Mn": _coverage_to_dict(cov.from_mn),
        }
    else:
        res = mc.linear_combination_coverage(
            plan, cfg.coeffs, cfg.basis, cfg.level, records
        )
        report["results"] = {
            "level": cfg.level,
            "n": plan.n,
            "proxy_horizon": plan.proxy_horizon,
            "basis": cfg.basis,
            "coeffs": cfg.coeffs,
            "combination": _coverage_to_dict(res),
        }
    return report


def _coverage_to_dict(r: mc.CoverageResult) -> dict:
    return {
        "basis": r.basis,
        "hits": r.hits,
        "reps": r.reps,
        "coverage": r.coverage,
        "std_error": r.std_error,
    }


def _run_limit_law(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    plan = _plan_for(cfg)
    records = mc.replicate(plan, workers)
    rep = mc.limit_law_suite(plan, records)
    blk = records.single.at_proxy
    write_table(
        out_dir / f"proxy.{cfg.table_format}",
        ["rep", "z_proxy", "s_over_n"],
        [np.arange(plan.reps), blk.z, blk.s_over_n],
        cfg.table_format,
    )
    report = _report_skeleton(cfg)
    report["results"] = {
        "horizon": rep.horizon,
        "reps": rep.reps,
        "s_over_n_max_abs_err": rep.s_over_n_max_abs_err,
        "s_over_n_max_rel_err": rep.s_over_n_max_rel_err,
        "max_ecdf_jump": rep.max_ecdf_jump,
        "boundary_fraction": rep.boundary_fraction,
        "beta_params": list(rep.beta_params) if rep.beta_params else None,
        "beta_ks": rep.beta_ks,
    }
    return report


def _run_mtest(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    plan = _plan_for(cfg)
    records = mc.replicate(plan, workers)
    res = mc.mtest_rejection(plan, cfg.target, cfg.reference, cfg.level, records)
    report = _report_skeleton(cfg)
    report["results"] = {
        "target": res.target,
        "reference": list(res.reference),
        "level": res.level,
        "rejections": res.rejections,
        "applicable": res.applicable,
        "reps": res.reps,
        "frequency": res.frequency,
    }
    return report


def _run_hitting(cfg: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    est = mc.hitting_probability_check(
        cfg.walk_start, cfg.walk_high, cfg.walk_reps, master_seed=cfg.seed
    )
    expected = mc.walk_absorption_probability(cfg.walk_start, cfg.walk_high)
    report = _report_skeleton(cfg)
    report["results"] = {
        "start": est.start,
        "high": est.high,
        "reps": est.reps,
        "absorbed_low": est.absorbed_low,
        "absorbed_high": est.absorbed_high,
        "cap_hits": est.cap_hits,
        "estimate": est.estimate,
        "expected": expected,
        "abs_error": abs(est.estimate - expected),
    }
    return report


_RUNNERS = {
    "simulate": _run_simulate,
    "clt": _run_clt,
    "coverage": _run_coverage,
    "limit-law": _run_limit_law,
    "mtest": _run_mtest,
    "hitting": _run_hitting,
}


def run(cfg: ExperimentConfig, workers: int = 1) -> Path:
    """Execute a validated config; returns the report path."""
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output directory {out_dir}: {exc}") from exc
    report = _RUNNERS[cfg.kind](cfg, out_dir, workers)
    report_path = out_dir / "report.json"
    write_report(report_path, report)
    return report_path


def _resolve_workers(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"warning: ignoring non-integer {WORKERS_ENV}={env!r}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrru",
        description="Simulate reinforced urns and check their limit theorems.",
    )
    parser.add_argument("--version", action="version", version=f"hrru {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment from a config file")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: ${WORKERS_ENV} or 1)")
        p.add_argument("--out-dir", default=None,
                       help="override the config's output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 3
    try:
        cfg = parse_config(text, kind=args.kind)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    workers = _resolve_workers(args.workers)
    if workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        report_path = run(cfg, workers=workers)
    except (ConfigError, ParameterError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(report_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
