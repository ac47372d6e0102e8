"""Benchmark report contract: counters, identities, and JSON serialization.

Every report satisfies energy_joules == cycles * energy_per_cycle and, per
cache level, hits + misses == accesses. Serialization sorts keys so that
seeded runs produce byte-identical JSON once the wall-clock field is
excluded.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .config import CLOCK_HZ, MachineConfig


@dataclass
class CacheStats:
    l1_hits: int = 0
    l1_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    wm_hits: int = 0
    heap_accesses: int = 0


@dataclass
class MetricsReport:
    scenario: str
    cycles: int
    energy_joules: float
    retired: int
    inferences: int
    unifications: int
    inferences_per_sim_second: float
    cache: CacheStats
    scenario_metrics: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["cache"] = CacheStats(**d["cache"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


def make_report(
    scenario: str,
    cycles: int,
    retired: int = 0,
    inferences: int = 0,
    unifications: int = 0,
    cache: CacheStats | None = None,
    scenario_metrics: dict | None = None,
    wall_clock_seconds: float = 0.0,
    energy_per_cycle: float = MachineConfig.energy_per_cycle,
) -> MetricsReport:
    sim_seconds = cycles / CLOCK_HZ
    return MetricsReport(
        scenario=scenario,
        cycles=cycles,
        energy_joules=cycles * energy_per_cycle,
        retired=retired,
        inferences=inferences,
        unifications=unifications,
        inferences_per_sim_second=(inferences / sim_seconds) if sim_seconds else 0.0,
        cache=cache or CacheStats(),
        scenario_metrics=scenario_metrics or {},
        wall_clock_seconds=wall_clock_seconds,
    )


METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "required": [
        "scenario",
        "cycles",
        "energy_joules",
        "retired",
        "inferences",
        "unifications",
        "inferences_per_sim_second",
        "cache",
        "scenario_metrics",
        "wall_clock_seconds",
    ],
    "properties": {
        "scenario": {"type": "string"},
        "cycles": {"type": "integer", "minimum": 0},
        "energy_joules": {"type": "number", "minimum": 0},
        "retired": {"type": "integer", "minimum": 0},
        "inferences": {"type": "integer", "minimum": 0},
        "unifications": {"type": "integer", "minimum": 0},
        "inferences_per_sim_second": {"type": "number", "minimum": 0},
        "cache": {
            "type": "object",
            "required": [
                "l1_hits",
                "l1_misses",
                "l2_hits",
                "l2_misses",
                "wm_hits",
                "heap_accesses",
            ],
            "properties": {
                "l1_hits": {"type": "integer", "minimum": 0},
                "l1_misses": {"type": "integer", "minimum": 0},
                "l2_hits": {"type": "integer", "minimum": 0},
                "l2_misses": {"type": "integer", "minimum": 0},
                "wm_hits": {"type": "integer", "minimum": 0},
                "heap_accesses": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "scenario_metrics": {"type": "object"},
        "wall_clock_seconds": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}
