"""Experiment configuration: scenario, trainer, and genetic-search settings.

Configs are plain dataclasses loadable from one JSON document with
``{"scenario": {...}, "trainer": {...}, "genetic": {...}}``; omitted fields
keep their defaults, which mirror the reference experiment setup (10 MHz
bandwidth, 23 dBm transmit power, -114 dBm noise, capacities 4-6 / 6-8 /
30 GFLOP/s, tau = 1 s, T = 30, V = 10).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import GeneticConfig
from .qmix import TrainerConfig


@dataclass(frozen=True)
class ScenarioConfig:
    """Population, capacities, radio, timing, and trace source of one scenario."""

    n_cv: int = 5
    n_sv: int = 3
    model_names: tuple[str, ...] = ("alexnet", "resnet18", "vgg16")
    model_paths: tuple[str, ...] = ()      # overrides model_names when set
    cv_types: tuple[int, ...] = ()         # per-CV type index; empty = round robin
    f_loc_range: tuple[float, float] = (4e9, 6e9)    # FLOP/s
    f_veh_range: tuple[float, float] = (6e9, 8e9)    # FLOP/s
    f_rsu_max: float = 30e9                          # FLOP/s
    bandwidth_hz: float = 10e6
    tx_power_dbm: float = 23.0
    noise_dbm: float = -114.0
    tau: float = 1.0
    slots_per_episode: int = 30
    v_weight: float = 10.0
    workload_unit: float = 1e9     # FLOPs per simulated workload unit
    queue_norm: float = 1e10       # FLOPs; queue feature divisor
    state_clip: float = 20.0       # cap on normalized queue features (keeps nets O(1))
    delay_cap: float = 1e6         # seconds; infinite-delay sentinel cap in rewards
    trace_kind: str = "synthetic"  # "synthetic" | "file"
    trace_path: str = ""
    road_length_m: float = 1000.0
    speed_range: tuple[float, float] = (15.0, 25.0)
    trace_slots: int = 120
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_cv < 1 or self.n_sv < 0:
            raise ValueError("need n_cv >= 1 and n_sv >= 0")
        if self.cv_types and len(self.cv_types) != self.n_cv:
            raise ValueError("cv_types must list one type per CV")
        for lo, hi in (self.f_loc_range, self.f_veh_range):
            if not 0 < lo <= hi:
                raise ValueError("capacity ranges must be positive and ordered")
        if self.f_rsu_max <= 0 or self.workload_unit <= 0 or self.queue_norm <= 0:
            raise ValueError("capacities and units must be positive")
        if self.trace_kind not in ("synthetic", "file"):
            raise ValueError(f"unknown trace_kind {self.trace_kind!r}")
        if self.trace_kind == "file" and not self.trace_path:
            raise ValueError("trace_kind=file needs trace_path")
        if self.slots_per_episode < 1:
            raise ValueError("slots_per_episode must be >= 1")
        if self.v_weight < 0:
            raise ValueError("v_weight must be >= 0")

    @property
    def n_nodes(self) -> int:
        return self.n_sv + 1


@dataclass(frozen=True)
class RunConfig:
    """Top-level run description: scenario + trainer + genetic settings."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    genetic: GeneticConfig = field(default_factory=GeneticConfig)
    episodes: int = 200
    eval_every: int = 1
    policy: str = "mad2rl"   # mad2rl | pqmix | greedy | genetic

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.policy not in ("mad2rl", "pqmix", "greedy", "genetic"):
            raise ValueError(f"unknown policy {self.policy!r}")


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**{k: _tupled(v) for k, v in data.items()})


def config_from_dict(doc: dict) -> RunConfig:
    top = {"scenario", "trainer", "genetic", "episodes", "eval_every", "policy"}
    unknown = set(doc) - top
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return RunConfig(
        scenario=_build(ScenarioConfig, doc.get("scenario", {})),
        trainer=_build(TrainerConfig, doc.get("trainer", {})),
        genetic=_build(GeneticConfig, doc.get("genetic", {})),
        episodes=doc.get("episodes", 200),
        eval_every=doc.get("eval_every", 1),
        policy=doc.get("policy", "mad2rl"),
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "scenario": dataclasses.asdict(cfg.scenario),
        "trainer": dataclasses.asdict(cfg.trainer),
        "genetic": dataclasses.asdict(cfg.genetic),
        "episodes": cfg.episodes,
        "eval_every": cfg.eval_every,
        "policy": cfg.policy,
    }


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def desk_config(policy: str = "mad2rl", episodes: int = 200, seed: int = 0,
                v_weight: float = 10.0, denoise_steps: int = 7) -> RunConfig:
    """Desk-scale experiment preset: I=5 CVs, 3 SVs + RSU, 200 episodes.

    Uses the reference net widths but a heavier update cadence so short runs
    still learn (see TrainerConfig.updates_per_episode).
    """
    return RunConfig(
        scenario=ScenarioConfig(seed=seed, v_weight=v_weight),
        # Low beta_max keeps the chain's noise amplification ~1.1x so greedy
        # evaluation stays signal-driven within a 200-episode budget; 128-wide
        # nets with 10 updates/episode fit the same budget on a laptop.
        trainer=TrainerConfig(updates_per_episode=10, denoise_steps=denoise_steps,
                              beta_max=0.25, agent_hidden=(128, 128, 128),
                              reward_scale=_default_reward_scale(v_weight, 5)),
        episodes=episodes,
        policy=policy,
    )


def _default_reward_scale(v_weight: float, n_cv: int) -> float:
    # Keeps TD targets O(1): delay part ~ V * I seconds, drift part similar
    # once queues hover near a few workload units.
    return max(1.0, v_weight * n_cv * 10.0)
