"""Timing, energy, memory, and scheduler parameters.

Everything lives in two dataclasses overridable from a flat key=value file
(`%` or `#` line comments). The two cycle anchors are the unify floor (10)
and the plan floor (100); energy charges 7.5e-9 J per cycle, which is the
modeled 15 W operating point at the 2 GHz clock.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

CLOCK_HZ = 2_000_000_000  # modeled operating frequency


@dataclass
class MachineConfig:
    lanes: int = 1
    unify_floor: int = 10
    plan_floor: int = 100
    infer_step_cost: int = 10
    believe_base: int = 5
    perceive_base: int = 5
    commit_base: int = 5
    plumbing_cost: int = 1
    rollback_penalty: int = 5
    trap_overhead: int = 200
    l1_latency: int = 1
    l2_latency: int = 10
    wm_latency: int = 50
    heap_latency: int = 100
    l1_lines: int = 1024  # 32KB at 32B lines
    l1_assoc: int = 4
    l2_lines: int = 8192  # 256KB at 32B lines
    l2_assoc: int = 8
    wm_cells: int = 131072  # 4MB at 32B per term cell
    energy_per_cycle: float = 7.5e-9
    infer_max_steps: int = 1_000_000
    infer_max_depth: int = 2000
    plan_max_expansions: int = 200_000
    unify_budget: int = 10_000_000
    commit_failure_prob: float = 0.0


@dataclass
class SystemConfig:
    quantum: int = 1000
    switch_penalty: int = 20
    agent_ceiling: int = 64
    w_urgency: float = 2.0
    w_utility: float = 1.0
    w_deadline: float = 4.0
    bandwidth_factor: int = 4
    seed: int = 0


class ConfigError(Exception):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _apply(cls, base, overrides: dict):
    cfg = dataclasses.replace(base) if base is not None else cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in overrides.items():
        f = fields.get(key)
        if f is None:
            continue  # keys for the other config are fine in a shared file
        if f.type in ("int", int):
            setattr(cfg, key, int(value))
        elif f.type in ("float", float):
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, value)
    return cfg


def known_keys() -> set:
    return {f.name for f in dataclasses.fields(MachineConfig)} | {
        f.name for f in dataclasses.fields(SystemConfig)
    }


def machine_config_from(overrides: dict, base: MachineConfig | None = None) -> MachineConfig:
    return _apply(MachineConfig, base, overrides)


def system_config_from(overrides: dict, base: SystemConfig | None = None) -> SystemConfig:
    return _apply(SystemConfig, base, overrides)


def configs_from_file(path) -> tuple[MachineConfig, SystemConfig]:
    overrides = load_config_file(path)
    unknown = set(overrides) - known_keys()
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return machine_config_from(overrides), system_config_from(overrides)
