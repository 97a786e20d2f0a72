"""Scenario assembly and the per-episode simulation environment.

``build_scenario`` resolves a ScenarioConfig into concrete models, capacities
(in workload units), task profiles, and a mobility trace.  ``EpisodeEnv``
steps one episode: per-slot link rates, MDP states, delay/reward evaluation,
and queue evolution.  Everything is seeded; identical (config, seed) pairs
produce identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dnn_catalog, network_env, queueing
from .config import ScenarioConfig
from .lyapunov import LyapunovParams, common_reward
from .network_env import MobilityTrace, RadioParams
from .queueing import Decision, DelayBreakdown, QueueState, TaskProfile


@dataclass
class Scenario:
    """Fully resolved simulation inputs; immutable during runs."""

    config: ScenarioConfig
    models: list[dnn_catalog.DnnModel]
    tasks: list[TaskProfile]        # per CV, in workload units
    cv_types: np.ndarray            # (I,)
    f_loc: np.ndarray               # (I,) units/s
    f_veh: np.ndarray               # (n_sv,) units/s
    f_rsu_max: float                # units/s
    radio: RadioParams
    trace: MobilityTrace
    lyap: LyapunovParams

    @property
    def n_cv(self) -> int:
        return len(self.tasks)

    @property
    def n_sv(self) -> int:
        return len(self.f_veh)

    @property
    def n_types(self) -> int:
        return len(self.models)

    @property
    def n_nodes(self) -> int:
        return self.n_sv + 1

    @property
    def state_dim(self) -> int:
        # Q_loc, Q_rsu(type), Q_veh per SV, own position, SV positions.
        return 2 * self.n_nodes + 1

    @property
    def queue_norm_units(self) -> float:
        return self.config.queue_norm / self.config.workload_unit

    def action_dim(self, i: int) -> int:
        return (self.tasks[i].n_layers + 1) * self.n_nodes


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Resolve a config: load models, sample capacities, build the trace."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    if cfg.model_paths:
        models = [dnn_catalog.load_model(p, type_id=k) for k, p in enumerate(cfg.model_paths)]
    else:
        models = [dnn_catalog.load_bundled(n, type_id=k) for k, n in enumerate(cfg.model_names)]
    if cfg.cv_types:
        cv_types = np.asarray(cfg.cv_types, dtype=int)
        if (cv_types < 0).any() or (cv_types >= len(models)).any():
            raise ValueError("cv_types references a missing model type")
    else:
        cv_types = np.arange(cfg.n_cv) % len(models)
    tasks = [TaskProfile.from_model(models[k], cfg.workload_unit) for k in cv_types]
    unit = cfg.workload_unit
    f_loc = rng.uniform(*cfg.f_loc_range, size=cfg.n_cv) / unit
    f_veh = rng.uniform(*cfg.f_veh_range, size=cfg.n_sv) / unit
    if cfg.trace_kind == "file":
        trace = network_env.load_trace_csv(cfg.trace_path)
        if trace.n_cv < cfg.n_cv or trace.n_sv < cfg.n_sv:
            raise ValueError(f"trace covers {trace.n_cv} CVs / {trace.n_sv} SVs; "
                             f"scenario needs {cfg.n_cv} / {cfg.n_sv}")
        trace = MobilityTrace(cv_xy=trace.cv_xy[:, : cfg.n_cv],
                              sv_xy=trace.sv_xy[:, : cfg.n_sv], rsu_xy=trace.rsu_xy)
    else:
        trace = network_env.synth_highway_trace(
            cfg.n_cv, cfg.n_sv, cfg.road_length_m, cfg.speed_range,
            max(cfg.trace_slots, cfg.slots_per_episode), seed=cfg.seed, tau=cfg.tau)
    return Scenario(config=cfg, models=models, tasks=tasks, cv_types=cv_types,
                    f_loc=f_loc, f_veh=f_veh, f_rsu_max=cfg.f_rsu_max / unit,
                    radio=RadioParams(cfg.bandwidth_hz, cfg.tx_power_dbm, cfg.noise_dbm),
                    trace=trace, lyap=LyapunovParams(v=cfg.v_weight, tau=cfg.tau))


@dataclass
class StepResult:
    delays: DelayBreakdown
    reward: float
    objective: float
    queue_before: QueueState
    queue_after: QueueState


class EpisodeEnv:
    """One episode of the discrete-time system, deterministic given its seed."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self._seed = seed
        self.reset()

    def reset(self) -> None:
        sc = self.scenario
        ss = np.random.SeedSequence([sc.config.seed, 2, self._seed])
        offset_rng = np.random.default_rng(ss)
        self.rng = np.random.default_rng(ss.spawn(1)[0])
        self.trace_offset = int(offset_rng.integers(sc.trace.n_slots))
        self.queue = QueueState.zeros(sc.n_cv, sc.n_types, sc.n_sv)
        self.t = 1
        self._rates: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def done(self) -> bool:
        return self.t > self.scenario.config.slots_per_episode

    def _trace_slot(self) -> int:
        return (self.trace_offset + self.t - 1) % self.scenario.trace.n_slots + 1

    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-CV rates (to RSU, to each SV) for the current slot; cached."""
        if self._rates is None:
            self._rates = network_env.rates_for_slot(
                self.scenario.trace, self.scenario.radio, self._trace_slot(), self.rng)
        return self._rates

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        ts = self._trace_slot() - 1
        return self.scenario.trace.cv_xy[ts], self.scenario.trace.sv_xy[ts]

    def local_states(self) -> np.ndarray:
        """Normalized per-agent observations, shape (I, 2J+1)."""
        sc = self.scenario
        cv_xy, sv_xy = self.positions()
        qn = sc.queue_norm_units
        clip = sc.config.state_clip
        road = sc.config.road_length_m
        out = np.empty((sc.n_cv, sc.state_dim))
        sv_q = np.minimum(self.queue.q_veh / qn, clip)
        sv_x = sv_xy[:, 0] / road if sc.n_sv else np.empty(0)
        for i in range(sc.n_cv):
            k = sc.cv_types[i]
            out[i] = np.concatenate([
                [min(self.queue.q_loc[i] / qn, clip),
                 min(self.queue.q_rsu[k] / qn, clip)], sv_q,
                [cv_xy[i, 0] / road], sv_x,
            ])
        return out

    def joint_state(self, states: np.ndarray | None = None) -> np.ndarray:
        return (self.local_states() if states is None else states).reshape(-1)

    def step(self, decision: Decision) -> StepResult:
        """Apply a validated decision: delays, reward, queue update, advance t."""
        sc = self.scenario
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        queueing.validate_decision(decision, sc.tasks, sc.n_types, sc.n_sv, sc.f_rsu_max)
        rates_rsu, rates_sv = self.rates()
        delays = queueing.slot_delays(self.queue, decision, rates_rsu, rates_sv,
                                      sc.tasks, sc.f_loc, sc.f_veh)
        # Infinite-delay sentinels become a large finite penalty in the reward.
        cap = sc.config.delay_cap
        for arr in (delays.d_loc, delays.d_tra, delays.d_pro, delays.d_wait):
            np.minimum(arr, cap, out=arr)
        before = self.queue.copy()
        reward = common_reward(before, decision, delays, sc.lyap, sc.tasks,
                               sc.f_loc, sc.f_veh)
        self.queue = queueing.update_queues(before, decision, sc.tasks,
                                            sc.f_loc, sc.f_veh, sc.lyap.tau)
        self.t += 1
        self._rates = None
        return StepResult(delays=delays, reward=reward, objective=-reward,
                          queue_before=before, queue_after=self.queue.copy())
