"""Experiment configuration: JSON parsing, validation and model construction."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .comb_op import CombModelSpec
from .ergodic import CombinatorialModel, QuantumModel
from .errors import ConfigError
from .lattice import (Box, Colouring, ConstantColouring, ExplicitColouring, GroupChoice, IidColouring,
                      PeriodicColouring, VisiblePointsColouring)
from .qgraph import BoundaryModel, LengthModel, product_lengths

COMMANDS = ("frequencies", "ids-comb", "ids-quantum", "ids-lengths", "converge", "jumps", "shubin")

_num = {"type": "number"}
_int = {"type": "integer"}

COLOURING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["rule"],
    "properties": {
        "rule": {"enum": ["constant", "periodic", "visible", "iid", "explicit"]},
        "symbol": {"type": "integer", "minimum": 0, "maximum": 255},
        "n_symbols": {"type": "integer", "minimum": 1, "maximum": 256},
        "period": {"type": "integer", "minimum": 1},
        "cells": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 255}},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "probs": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "anchor": {"type": "array", "items": _int},
        "array": {"type": "array"},
    },
}

COMB_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["operator", "colouring"],
    "properties": {
        "operator": {"enum": ["adjacency", "site_percolation", "periodic_block"]},
        # null marks a deleted site
        "potentials": {"type": "array", "items": {"type": ["number", "null"]}},
        "blocks": {"type": "object", "additionalProperties": {"type": "array"}},
        "fiber": {"type": "integer", "minimum": 1},
        "hopping_range": {"type": "integer", "minimum": 1},
        "colouring": COLOURING_SCHEMA,
    },
}

QUANTUM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["bc"],
    "properties": {
        "bc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["colouring"],
            "properties": {
                "kind": {"enum": ["site", "edge", "site_edge"]},
                "tags": {"type": "array", "minItems": 1, "items": {"enum": ["D", "N", "K"]}},
                "colouring": COLOURING_SCHEMA,
            },
        },
        "lengths": {
            "type": "object",
            "additionalProperties": False,
            "required": ["colouring"],
            "properties": {
                "choices": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                "values": {"type": "array", "items": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
                "colouring": COLOURING_SCHEMA,
            },
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "d"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "d": {"type": "integer", "minimum": 1, "maximum": 4},
        "combinatorial": COMB_SCHEMA,
        "quantum": QUANTUM_SCHEMA,
        "colouring": COLOURING_SCHEMA,
        "sides": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "window_side": {"type": "integer", "minimum": 1},
        "pattern_side": {"type": "integer", "minimum": 1},
        "window": {"type": "array", "minItems": 2, "maxItems": 2, "items": _num},
        "mesh": {"type": "integer", "minimum": 2, "maximum": 10000},
        "samples": {"type": "integer", "minimum": 1},
        "cell": {"type": "integer", "minimum": 1},
        "r_buf": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**63 - 1},
        "group": {"enum": ["translations", "full"]},
        "weighted": {"type": "boolean"},
        "min_height": {"type": "number", "exclusiveMinimum": 0},
        "threads": {"type": "integer", "minimum": 1, "maximum": 256},
        "out": {"type": "string"},
    },
}


@dataclass
class ExperimentConfig:
    command: str
    d: int
    combinatorial: dict | None = None
    quantum: dict | None = None
    colouring: dict | None = None
    sides: list[int] = field(default_factory=list)
    window_side: int | None = None
    pattern_side: int | None = None
    window: tuple[float, float] | None = None
    mesh: int = 100
    samples: int = 1
    cell: int = 1
    r_buf: int = 25
    seed: int | None = None
    group: str = "translations"
    weighted: bool = False
    min_height: float = 0.01
    threads: int = 1
    out: str = "results"

    def echo(self) -> dict[str, Any]:
        out = asdict(self)
        if out["window"] is not None:
            out["window"] = list(out["window"])
        return out

    # -- models -------------------------------------------------------
    def model(self):
        if self.combinatorial is not None:
            return build_comb_model(self.combinatorial, self.d, self.seed)
        if self.quantum is not None:
            return build_quantum_model(self.quantum, self.d, self.seed, self.mesh)
        raise ConfigError("config has no model section")

    def stochastic(self) -> bool:
        sections = [self.colouring]
        if self.combinatorial:
            sections.append(self.combinatorial["colouring"])
        if self.quantum:
            sections.append(self.quantum["bc"]["colouring"])
            if "lengths" in self.quantum:
                sections.append(self.quantum["lengths"]["colouring"])
        return any(s is not None and s["rule"] == "iid" for s in sections)


def _path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def build_colouring(spec: dict, d: int, seed: int | None, where: str = "colouring") -> Colouring:
    rule = spec["rule"]
    try:
        if rule == "constant":
            sym = spec.get("symbol", 0)
            return ConstantColouring(d, sym, spec.get("n_symbols", sym + 1))
        if rule == "periodic":
            if "period" not in spec or "cells" not in spec:
                raise ConfigError(f"{where}: periodic rule needs 'period' and 'cells'")
            return PeriodicColouring(d, spec["period"], tuple(spec["cells"]))
        if rule == "visible":
            return VisiblePointsColouring(d)
        if rule == "iid":
            if seed is None:
                raise ConfigError(f"{where}: iid colouring needs a seed")
            if ("p" in spec) == ("probs" in spec):
                raise ConfigError(f"{where}: give exactly one of 'p' and 'probs'")
            if "p" in spec:
                return IidColouring.bernoulli(d, spec["p"], seed)
            return IidColouring(d, tuple(spec["probs"]), seed)
        if rule == "explicit":
            arr = np.asarray(spec.get("array"), dtype=np.int64)
            if arr.ndim != d or arr.size == 0:
                raise ConfigError(f"{where}.array: need a non-empty {d}-dimensional array")
            if arr.min() < 0 or arr.max() > 255:
                raise ConfigError(f"{where}.array: symbols must lie in 0..255")
            anchor = tuple(spec.get("anchor", (0,) * d))
            if len(anchor) != d:
                raise ConfigError(f"{where}.anchor: need {d} coordinates")
            return ExplicitColouring(Box(anchor, arr.shape), arr.astype(np.uint8))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.rule: unknown rule {rule!r}")


def _blocks(raw: dict, d: int) -> dict:
    out = {}
    for key, val in raw.items():
        try:
            delta = tuple(int(v) for v in key.split(","))
        except ValueError as exc:
            raise ConfigError(f"$.combinatorial.blocks.{key}: offsets look like '1,0'") from exc
        if len(delta) != d:
            raise ConfigError(f"$.combinatorial.blocks.{key}: offset must have {d} entries")
        out[delta] = np.asarray(val, dtype=float)
    return out


def build_comb_model(sec: dict, d: int, seed: int | None) -> CombinatorialModel:
    pots = tuple(math.inf if v is None else float(v) for v in sec.get("potentials", []))
    try:
        spec = CombModelSpec(
            sec["operator"], pots, _blocks(sec.get("blocks", {}), d),
            sec.get("hopping_range", 1), sec.get("fiber", 1),
        )
    except ValueError as exc:
        raise ConfigError(f"$.combinatorial: {exc}") from exc
    col = build_colouring(sec["colouring"], d, seed, "$.combinatorial.colouring")
    if spec.kind == "site_percolation" and col.n_symbols > len(spec.potentials):
        raise ConfigError("$.combinatorial.potentials: fewer potentials than colour symbols")
    return CombinatorialModel(spec, col)


def build_quantum_model(sec: dict, d: int, seed: int | None, mesh: int) -> QuantumModel:
    bcs = sec["bc"]
    try:
        bc = BoundaryModel(
            build_colouring(bcs["colouring"], d, seed, "$.quantum.bc.colouring"),
            bcs.get("kind", "site"), tuple(bcs.get("tags", ("D", "K"))),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"$.quantum.bc: {exc}") from exc
    lengths = None
    if "lengths" in sec:
        ls = sec["lengths"]
        if ("choices" in ls) == ("values" in ls):
            raise ConfigError("$.quantum.lengths: give exactly one of 'choices' and 'values'")
        values = product_lengths(d, ls["choices"]) if "choices" in ls else ls["values"]
        try:
            lengths = LengthModel(build_colouring(ls["colouring"], d, seed, "$.quantum.lengths.colouring"), values)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"$.quantum.lengths: {exc}") from exc
    return QuantumModel(bc, lengths, mesh)


def _check_command(cfg: ExperimentConfig):
    cmd = cfg.command
    has_c, has_q = cfg.combinatorial is not None, cfg.quantum is not None
    if has_c and has_q:
        raise ConfigError("$: give only one of 'combinatorial' and 'quantum'")
    if cmd == "frequencies":
        if cfg.colouring is None and not (has_c or has_q):
            raise ConfigError("$.colouring: frequencies needs a colouring or a model")
        if cfg.window_side is None or cfg.pattern_side is None:
            raise ConfigError("$: frequencies needs 'window_side' and 'pattern_side'")
        if cfg.pattern_side > cfg.window_side:
            raise ConfigError("$.pattern_side: must not exceed window_side")
    elif cmd == "ids-comb" and not has_c:
        raise ConfigError("$.combinatorial: ids-comb needs a combinatorial model")
    elif cmd in ("ids-quantum", "ids-lengths"):
        if not has_q:
            raise ConfigError(f"$.quantum: {cmd} needs a quantum model")
        if (cmd == "ids-lengths") != ("lengths" in cfg.quantum):
            raise ConfigError(f"$.quantum.lengths: {cmd} {'needs' if cmd == 'ids-lengths' else 'excludes'} random lengths")
    elif not (has_c or has_q):
        raise ConfigError(f"$: {cmd} needs a model section")
    if cmd in ("ids-comb", "ids-quantum", "ids-lengths", "converge", "jumps") and not cfg.sides:
        raise ConfigError("$.sides: at least one side is required")
    if cmd == "converge" and len(cfg.sides) < 3:
        raise ConfigError("$.sides: converge needs at least three sides")
    if cfg.sides and any(b < a for a, b in zip(cfg.sides, cfg.sides[1:])):
        raise ConfigError("$.sides: must be non-decreasing")
    if cfg.window is not None and not cfg.window[0] < cfg.window[1]:
        raise ConfigError("$.window: need a < b")
    if has_q and cfg.window is not None and cfg.window[1] <= 0:
        raise ConfigError("$.window: quantum windows need b > 0")
    if cfg.stochastic() and cfg.seed is None:
        raise ConfigError("$.seed: required for stochastic models")


def config_from_dict(raw: dict, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    if threads is not None:
        raw["threads"] = threads
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            raise ConfigError(f"{_path(e)}.{extra[0]}: unknown key")
        raise ConfigError(f"{_path(e)}: {e.message}")
    if "window" in raw:
        raw["window"] = tuple(float(v) for v in raw["window"])
    if "quantum" in raw and "window" not in raw:
        raw["window"] = (0.0, 100.0)
    cfg = ExperimentConfig(**raw)
    GroupChoice(cfg.group)
    _check_command(cfg)
    # build once so payload errors surface at parse time
    if cfg.combinatorial is not None or cfg.quantum is not None:
        cfg.model()
    if cfg.colouring is not None:
        build_colouring(cfg.colouring, cfg.d, cfg.seed, "$.colouring")
    return cfg


def parse_config(path: str | Path, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("$: top level must be an object")
    return config_from_dict(raw, seed, threads)
