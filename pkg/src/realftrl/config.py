"""Experiment configuration: loading, validation, hashing and object construction.

Configs are YAML documents (JSON is accepted too, being the same data
model). A config has these top-level keys::

    name: gap-stochastic            # optional label
    context:    {kind: discrete, points: [[1, 0], [0, 1]], weights: [0.5, 0.5]}
    environment:
      regime: stochastic            # stochastic | adversarial | corrupted
      theta0: [[-0.2, -0.15], [0.2, 0.15]]
      c_theta: 0.5                  # optional, defaults to the largest norm
      noise: 0.0
      gap: 0.3                      # optional certified gap, checked on load
      adversary: {id: sign_flip, rounds: 200}
      budget: 80.0                  # optional, corrupted/adversarial only
    agent: {id: bobw_real_ftrl, beta1_mode: simple, overrides: {}}
    horizons: [1000, 10000]
    seeds: {count: 20, base: 0}
    output: runs/gap
    probes: {count: 256}
    mgr: {tail_tol: 1.0e-13}

Validation errors carry the line of the offending entry.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .contexts import ContextModel, context_model_from_dict
from .environment import ADVERSARIES, REGIMES, Environment, GapViolation, adversary_from_dict, verify_gap
from .policy import AGENTS, FtrlAgent, ScheduleConstants, make_agent

TOP_KEYS = {"name", "context", "environment", "agent", "horizons", "seeds", "output", "probes", "mgr"}
ENV_KEYS = {"regime", "theta0", "c_theta", "noise", "gap", "adversary", "budget"}
AGENT_KEYS = {"id", "beta1_mode", "overrides", "eta", "gamma", "M"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


def _line_map(node, path=(), out=None):
    """Map key paths to 1-based line numbers using the composed YAML tree."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = (*path, k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, (*path, i), out)
    return out


def _number(value, path, lines, kind=float):
    if isinstance(value, bool):
        raise _err(f"{_dotted(path)} must be a number", path, lines)
    try:
        # PyYAML reads forms like 1e-13 as strings
        v = float(value) if isinstance(value, str) else value
        if kind is int:
            if isinstance(v, float):
                if not v.is_integer():
                    raise ValueError
                v = int(v)
            return int(v)
        v = float(v)
    except (TypeError, ValueError):
        raise _err(f"{_dotted(path)} must be {'an integer' if kind is int else 'a number'}, got {value!r}", path, lines)
    if not math.isfinite(v):
        raise _err(f"{_dotted(path)} must be finite", path, lines)
    return v


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _err(msg, path, lines):
    p = tuple(path)
    while p and p not in lines:
        p = p[:-1]
    return ConfigError(msg, lines.get(p))


def _matrix(value, path, lines):
    if not isinstance(value, list) or not value:
        raise _err(f"{_dotted(path)} must be a non-empty list", path, lines)
    rows = []
    for i, row in enumerate(value):
        row = row if isinstance(row, list) else [row]
        rows.append([_number(v, (*path, i, j), lines) for j, v in enumerate(row)])
    if len({len(r) for r in rows}) != 1:
        raise _err(f"{_dotted(path)} rows have different lengths", path, lines)
    return rows


@dataclass
class ExperimentConfig:
    """Validated, normalised experiment description."""

    data: dict
    source: str | None = None

    @property
    def name(self) -> str:
        return self.data.get("name", "experiment")

    @property
    def horizons(self) -> list[int]:
        return list(self.data["horizons"])

    @property
    def seeds(self) -> list[int]:
        s = self.data["seeds"]
        return [s["base"] + i for i in range(s["count"])]

    @property
    def output(self) -> str:
        return self.data["output"]

    @property
    def tail_tol(self) -> float:
        return self.data["mgr"]["tail_tol"]

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def build_context(self) -> ContextModel:
        return context_model_from_dict(self.data["context"])

    def build_environment(self, model: ContextModel, T: int) -> Environment:
        e = self.data["environment"]
        adv = adversary_from_dict(e["adversary"]) if e.get("adversary") else None
        env = Environment(
            e["theta0"], model, T, regime=e["regime"], adversary=adv,
            noise=e.get("noise", 0.0), c_theta=e.get("c_theta"), budget=e.get("budget"),
        )
        if e.get("gap") is not None:
            verify_gap(env, model, e["gap"])
        return env

    def build_agent(self, env: Environment, model: ContextModel, T: int) -> FtrlAgent:
        consts = ScheduleConstants(env.K, model.d, T, env.c_loss, model.c_x, model.lambda_min)
        return make_agent(self.data["agent"], consts)

    def build(self, T: int):
        model = self.build_context()
        env = self.build_environment(model, T)
        return model, env, self.build_agent(env, model, T)


def _validate(raw, lines) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", 1)
    unknown = set(raw) - TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise _err(f"unknown key {k!r}", (k,), lines)
    for key in ("context", "environment", "agent", "horizons"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", 1)
    out: dict = {}
    if "name" in raw:
        out["name"] = str(raw["name"])

    ctx = raw["context"]
    if not isinstance(ctx, dict):
        raise _err("context must be a mapping", ("context",), lines)
    kind = ctx.get("kind")
    if kind == "discrete":
        c = {"kind": "discrete", "points": _matrix(ctx.get("points"), ("context", "points"), lines)}
        if ctx.get("weights") is not None:
            c["weights"] = [_number(w, ("context", "weights", i), lines) for i, w in enumerate(ctx["weights"])]
    elif kind == "sphere":
        c = {
            "kind": "sphere",
            "d": _number(ctx.get("d"), ("context", "d"), lines, int),
            "radius": _number(ctx.get("radius", 1.0), ("context", "radius"), lines),
            "radial": str(ctx.get("radial", "sphere")),
        }
    else:
        raise _err(f"context.kind must be 'discrete' or 'sphere', got {kind!r}", ("context", "kind"), lines)
    try:
        model = context_model_from_dict(c)
    except ValueError as exc:
        raise _err(f"context: {exc}", ("context",), lines) from None
    out["context"] = c

    env = raw["environment"]
    if not isinstance(env, dict):
        raise _err("environment must be a mapping", ("environment",), lines)
    unknown = set(env) - ENV_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise _err(f"unknown environment key {k!r}", ("environment", k), lines)
    regime = env.get("regime", "stochastic")
    if regime not in REGIMES:
        raise _err(f"environment.regime must be one of {list(REGIMES)}", ("environment", "regime"), lines)
    e = {"regime": regime, "theta0": _matrix(env.get("theta0"), ("environment", "theta0"), lines)}
    for key in ("c_theta", "noise", "gap", "budget"):
        if env.get(key) is not None:
            e[key] = _number(env[key], ("environment", key), lines)
    if env.get("adversary") is not None:
        adv = env["adversary"]
        if not isinstance(adv, dict) or adv.get("id") not in ADVERSARIES:
            raise _err(f"environment.adversary.id must be one of {sorted(ADVERSARIES)}",
                       ("environment", "adversary"), lines)
        a = {"id": adv["id"]}
        for k, v in adv.items():
            if k != "id":
                a[k] = _number(v, ("environment", "adversary", k), lines, int)
        e["adversary"] = a
    out["environment"] = e

    agent = raw["agent"]
    if not isinstance(agent, dict):
        raise _err("agent must be a mapping", ("agent",), lines)
    unknown = set(agent) - AGENT_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise _err(f"unknown agent key {k!r}", ("agent", k), lines)
    aid = agent.get("id", "bobw_real_ftrl")
    if aid not in AGENTS:
        raise _err(f"agent.id must be one of {sorted(AGENTS)}", ("agent", "id"), lines)
    ag = {"id": aid}
    if "beta1_mode" in agent:
        if agent["beta1_mode"] not in ("tuned", "simple"):
            raise _err("agent.beta1_mode must be 'tuned' or 'simple'", ("agent", "beta1_mode"), lines)
        ag["beta1_mode"] = agent["beta1_mode"]
    if agent.get("overrides"):
        ov = agent["overrides"]
        if not isinstance(ov, dict):
            raise _err("agent.overrides must be a mapping", ("agent", "overrides"), lines)
        ag["overrides"] = {
            k: _number(v, ("agent", "overrides", k), lines, int if k == "mgr_iterations" else float)
            for k, v in ov.items()
        }
    for k in ("eta", "gamma"):
        if agent.get(k) is not None:
            ag[k] = _number(agent[k], ("agent", k), lines)
    if agent.get("M") is not None:
        ag["M"] = _number(agent["M"], ("agent", "M"), lines, int)
    out["agent"] = ag

    hz = raw["horizons"]
    hz = hz if isinstance(hz, list) else [hz]
    if not hz:
        raise _err("horizons must not be empty", ("horizons",), lines)
    out["horizons"] = [_number(h, ("horizons", i), lines, int) for i, h in enumerate(hz)]
    for i, h in enumerate(out["horizons"]):
        if h < 1:
            raise _err("every horizon must be at least 1", ("horizons", i), lines)

    seeds = raw.get("seeds", {"count": 1, "base": 0})
    if not isinstance(seeds, dict):
        raise _err("seeds must be a mapping with count and base", ("seeds",), lines)
    count = _number(seeds.get("count", 1), ("seeds", "count"), lines, int)
    base = _number(seeds.get("base", 0), ("seeds", "base"), lines, int)
    if count < 1:
        raise _err("seeds.count must be at least 1", ("seeds", "count"), lines)
    if base < 0:
        raise _err("seeds.base must be non-negative", ("seeds", "base"), lines)
    out["seeds"] = {"count": count, "base": base}

    out["output"] = str(raw.get("output", "runs"))
    probes = raw.get("probes") or {}
    out["probes"] = {"count": _number(probes.get("count", 256), ("probes", "count"), lines, int)}
    mgr_cfg = raw.get("mgr") or {}
    tol = _number(mgr_cfg.get("tail_tol", 1e-13), ("mgr", "tail_tol"), lines)
    if tol < 0:
        raise _err("mgr.tail_tol must be non-negative", ("mgr", "tail_tol"), lines)
    out["mgr"] = {"tail_tol": tol}

    # build once so structural problems surface with a line number
    for i, T in enumerate(out["horizons"]):
        try:
            cfg = ExperimentConfig(out)
            env_obj = cfg.build_environment(model, T)
        except GapViolation as exc:
            raise _err(f"environment.gap: {exc}", ("environment", "gap"), lines) from None
        except ValueError as exc:
            raise _err(str(exc), ("environment",), lines) from None
        try:
            cfg.build_agent(env_obj, model, T)
        except ValueError as exc:
            raise _err(f"agent at T={T}: {exc}", ("agent",), lines) from None
    return out


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse config: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1, source) from None
    if node is None:
        raise ConfigError("config is empty", 1, source)
    lines = _line_map(node)
    try:
        data = _validate(raw, lines)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line, source) from None
    return ExperimentConfig(data, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
