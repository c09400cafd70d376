"""JSON run configuration: scenarios, design, replicates and output options."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from fsadapt.adaptive import DesignSpec
from fsadapt.patient_sim import PRESETS, PerArm, ScenarioSpec

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SCENARIO_DEFAULTS = {
    "frailty_variance_theta": 0.5,
    "alpha_link": 1.0,
    "dropout_rate_12mo": 0.0,
}
PER_ARM_KEYS = ("death_prob_12mo", "cvh_rate", "func_response_prob")
DESIGN_KEYS = tuple(f.name for f in dataclasses.fields(DesignSpec))
TOP_KEYS = ("schema_version", "scenarios", "design", "run", "replicates", "master_seed",
            "output_dir", "trace", "workers")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class RunConfig:
    scenarios: dict
    design: DesignSpec = field(default_factory=DesignSpec)
    run: tuple = ()
    replicates: int = 2000
    master_seed: int = 2024
    output_dir: str = "results"
    trace: bool = False
    workers: int = 1

    def selected(self) -> list[ScenarioSpec]:
        return [self.scenarios[name] for name in self.run]


def _check_keys(block: dict, allowed, path: str):
    if not isinstance(block, dict):
        raise ConfigError(path, f"expected an object, got {type(block).__name__}")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")


def _number(value, path: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _per_arm(value, path: str) -> PerArm:
    _check_keys(value, ("active", "control"), path)
    missing = {"active", "control"} - set(value)
    if missing:
        raise ConfigError(path, f"missing {sorted(missing)}")
    return PerArm(_number(value["active"], f"{path}.active"),
                  _number(value["control"], f"{path}.control"))


def _parse_scenario(name: str, block: dict, path: str) -> ScenarioSpec:
    _check_keys(block, ("preset", *PER_ARM_KEYS, *SCENARIO_DEFAULTS), path)
    preset = block.get("preset")
    values: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"{path}.preset", f"unknown preset {preset!r}")
        values.update({k: PerArm(*v) for k, v in PRESETS[preset].items()})
    for key in PER_ARM_KEYS:
        if key in block:
            values[key] = _per_arm(block[key], f"{path}.{key}")
        elif key not in values:
            raise ConfigError(f"{path}.{key}", "required (or give a preset)")
    for key, default in SCENARIO_DEFAULTS.items():
        if key in block:
            values[key] = _number(block[key], f"{path}.{key}")
        else:
            values[key] = default
            log.info("default applied: %s.%s = %s", path, key, default)
    try:
        return ScenarioSpec(name=name, **values)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_design(block: dict, path: str) -> DesignSpec:
    _check_keys(block, DESIGN_KEYS, path)
    values = {}
    for f in dataclasses.fields(DesignSpec):
        p = f"{path}.{f.name}"
        if f.name not in block:
            log.info("default applied: %s = %s", p, f.default)
            continue
        v = block[f.name]
        if f.name in ("ssr_enabled", "futility_binding_in_sim"):
            if not isinstance(v, bool):
                raise ConfigError(p, f"expected true/false, got {v!r}")
            values[f.name] = v
        elif f.name == "zone_cutpoints":
            if not isinstance(v, list):
                raise ConfigError(p, "expected a list")
            values[f.name] = tuple(_number(x, f"{p}[{i}]") for i, x in enumerate(v))
        elif f.name == "zone_stage2_sizes":
            if not isinstance(v, list):
                raise ConfigError(p, "expected a list")
            values[f.name] = tuple(_number(x, f"{p}[{i}]", int) for i, x in enumerate(v))
        elif f.name == "alpha_one_sided":
            values[f.name] = _number(v, p)
        else:
            values[f.name] = _number(v, p, int)
    try:
        return DesignSpec(**values)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    _check_keys(doc, TOP_KEYS, "$")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("$.schema_version", f"unsupported version {version!r}")

    blocks = doc.get("scenarios")
    if not blocks:
        raise ConfigError("$.scenarios", "at least one scenario is required")
    if not isinstance(blocks, dict):
        raise ConfigError("$.scenarios", "expected an object keyed by scenario name")
    scenarios = {name: _parse_scenario(name, b, f"$.scenarios.{name}") for name, b in blocks.items()}

    design = _parse_design(doc.get("design", {}), "$.design")

    run = doc.get("run", list(scenarios))
    if not isinstance(run, list) or not run:
        raise ConfigError("$.run", "expected a non-empty list of scenario names")
    for i, name in enumerate(run):
        if name not in scenarios:
            raise ConfigError(f"$.run[{i}]", f"unknown scenario {name!r}")

    kw = {}
    for key in ("replicates", "master_seed", "workers"):
        if key in doc:
            kw[key] = _number(doc[key], f"$.{key}", int)
            if kw[key] <= 0 and key != "master_seed":
                raise ConfigError(f"$.{key}", "must be positive")
            if key == "master_seed" and kw[key] < 0:
                raise ConfigError(f"$.{key}", "must be non-negative")
    if "output_dir" in doc:
        if not isinstance(doc["output_dir"], str):
            raise ConfigError("$.output_dir", "expected a string")
        kw["output_dir"] = doc["output_dir"]
    if "trace" in doc:
        if not isinstance(doc["trace"], bool):
            raise ConfigError("$.trace", "expected true/false")
        kw["trace"] = doc["trace"]
    return RunConfig(scenarios=scenarios, design=design, run=tuple(run), **kw)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def config_to_dict(cfg: RunConfig) -> dict:
    scenarios = {}
    for name, s in cfg.scenarios.items():
        block = {k: {"active": getattr(s, k).active, "control": getattr(s, k).control}
                 for k in PER_ARM_KEYS}
        block.update({k: getattr(s, k) for k in SCENARIO_DEFAULTS})
        scenarios[name] = block
    design = dataclasses.asdict(cfg.design)
    design["zone_cutpoints"] = list(design["zone_cutpoints"])
    design["zone_stage2_sizes"] = list(design["zone_stage2_sizes"])
    return {
        "schema_version": SCHEMA_VERSION,
        "scenarios": scenarios,
        "design": design,
        "run": list(cfg.run),
        "replicates": cfg.replicates,
        "master_seed": cfg.master_seed,
        "output_dir": cfg.output_dir,
        "trace": cfg.trace,
        "workers": cfg.workers,
    }


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def bundled_config(name: str) -> str:
    """Text of a config shipped with the package, e.g. ``bundled_config("alternative")``."""
    return resources.files("fsadapt.configs").joinpath(f"{name}.config").read_text(encoding="utf-8")
