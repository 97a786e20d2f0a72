"""Episode/training loops, experiment sweeps, and metrics emission.

Policies share one interface: ``decide(env, rng, epsilon)`` returning a
feasible Decision plus the per-agent action indices (None for rule-based
policies).  ``train`` runs the centralized learning loop with periodic
greedy-mode evaluation episodes; ``sweep`` repeats training across one
scenario axis.  Every emitted number is a deterministic function of
(config, seed).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lyapunov, neural, queueing
from .allocator import complete_decision
from .baselines import GeneticConfig, MlpAgent, genetic_optimize, greedy_decide
from .config import RunConfig, ScenarioConfig, config_to_dict, dump_config
from .diffusion_policy import DiffusionAgent, build_schedule, decode_action, select_action
from .environment import EpisodeEnv, Scenario, build_scenario
from .qmix import QmixTrainer, TrainerConfig, Transition


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class AgentSetPolicy:
    """Wraps one value agent per CV (diffusion or dense) into a joint policy."""

    def __init__(self, scenario: Scenario, agents: list):
        self.scenario = scenario
        self.agents = agents

    def decide(self, env: EpisodeEnv, rng: np.random.Generator,
               epsilon: float = 0.0):
        sc = self.scenario
        states = env.local_states()
        phi = np.empty(sc.n_cv, dtype=int)
        xi = np.empty(sc.n_cv, dtype=int)
        actions = np.empty(sc.n_cv, dtype=int)
        mode = "eps" if epsilon > 0 else "greedy"
        for i, agent in enumerate(self.agents):
            q = agent.q_values(states[i], rng)
            a = select_action(q, mode=mode, rng=rng, epsilon=epsilon)
            actions[i] = a
            phi[i], xi[i] = decode_action(a, sc.tasks[i].n_layers, sc.n_nodes)
        decision = complete_decision(env.queue, phi, xi, sc.tasks, sc.lyap.v,
                                     sc.lyap.tau, sc.f_rsu_max)
        return decision, actions


class GreedyPolicy:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def decide(self, env: EpisodeEnv, rng: np.random.Generator, epsilon: float = 0.0):
        sc = self.scenario
        return greedy_decide(env.queue, sc.tasks, sc.f_rsu_max, sc.lyap), None


class GeneticPolicy:
    def __init__(self, scenario: Scenario, cfg: GeneticConfig):
        self.scenario = scenario
        self.cfg = cfg

    def decide(self, env: EpisodeEnv, rng: np.random.Generator, epsilon: float = 0.0):
        sc = self.scenario
        rates_rsu, rates_sv = env.rates()
        decision = genetic_optimize(env.queue, sc.tasks, rates_rsu, rates_sv,
                                    sc.f_loc, sc.f_veh, sc.f_rsu_max, sc.lyap,
                                    self.cfg, rng, delay_cap=sc.config.delay_cap)
        return decision, None


def make_agents(scenario: Scenario, cfg: TrainerConfig, kind: str, seed: int) -> list:
    """One value agent per CV; diffusion and dense agents share widths/encoding."""
    agents = []
    schedule = build_schedule(cfg.denoise_steps, cfg.beta_min, cfg.beta_max)
    for i in range(scenario.n_cv):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4, i]))
        if kind == "mad2rl":
            agents.append(DiffusionAgent(scenario.state_dim, scenario.action_dim(i),
                                         schedule, cfg.agent_hidden, rng))
        elif kind == "pqmix":
            agents.append(MlpAgent(scenario.state_dim, scenario.action_dim(i),
                                   cfg.agent_hidden, rng))
        else:
            raise ValueError(f"unknown agent kind {kind!r}")
    return agents


def make_policy(scenario: Scenario, run_cfg: RunConfig):
    if run_cfg.policy in ("mad2rl", "pqmix"):
        agents = make_agents(scenario, run_cfg.trainer, run_cfg.policy,
                             scenario.config.seed)
        return AgentSetPolicy(scenario, agents)
    if run_cfg.policy == "greedy":
        return GreedyPolicy(scenario)
    if run_cfg.policy == "genetic":
        return GeneticPolicy(scenario, run_cfg.genetic)
    raise ValueError(f"unknown policy {run_cfg.policy!r}")


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    """Per-slot traces and queue aggregates of one rolled-out episode."""

    rewards: np.ndarray
    total_delay: np.ndarray          # sum over CVs, capped, per slot
    queue_total: np.ndarray          # total backlog after each slot
    q_loc_mean: np.ndarray
    q_rsu_mean: np.ndarray
    q_veh_mean: np.ndarray
    q_loc_final: np.ndarray
    q_rsu_final: np.ndarray
    q_veh_final: np.ndarray
    bound_checks: int = 0
    bound_violations: int = 0
    transitions: list[Transition] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def mean_total_delay(self) -> float:
        return float(self.total_delay.mean())

    @property
    def mean_queue_total(self) -> float:
        return float(self.queue_total.mean())


def run_episode(scenario: Scenario, policy, episode_seed: int, epsilon: float = 0.0,
                verify_bound: bool = False, keep_transitions: bool = False) -> EpisodeRecord:
    """Roll one episode from zeroed queues; deterministic given the seed."""
    env = EpisodeEnv(scenario, episode_seed)
    rng = np.random.default_rng(np.random.SeedSequence([scenario.config.seed, 3, episode_seed]))
    slots = scenario.config.slots_per_episode
    rewards = np.empty(slots)
    total_delay = np.empty(slots)
    queue_total = np.empty(slots)
    q_loc = np.zeros((slots, scenario.n_cv))
    q_rsu = np.zeros((slots, scenario.n_types))
    q_veh = np.zeros((slots, scenario.n_sv))
    checks = violations = 0
    transitions: list[Transition] = []
    while not env.done:
        t = env.t
        states = env.local_states()
        decision, actions = policy.decide(env, rng, epsilon)
        result = env.step(decision)
        if verify_bound and t % 10 == 1:
            check = lyapunov.verify_lemma1_bound(result.queue_before, decision,
                                                 scenario.tasks, scenario.f_loc,
                                                 scenario.f_veh, scenario.lyap,
                                                 delays=result.delays)
            checks += 1
            violations += 0 if check.holds else 1
        idx = t - 1
        rewards[idx] = result.reward
        total_delay[idx] = float(np.sum(result.delays.d_total))
        queue_total[idx] = result.queue_after.total()
        q_loc[idx] = result.queue_after.q_loc
        q_rsu[idx] = result.queue_after.q_rsu
        q_veh[idx] = result.queue_after.q_veh
        if keep_transitions and actions is not None:
            transitions.append(Transition(states=states, actions=actions.copy(),
                                          reward=result.reward,
                                          next_states=env.local_states(),
                                          done=env.done))
    return EpisodeRecord(
        rewards=rewards, total_delay=total_delay, queue_total=queue_total,
        q_loc_mean=q_loc.mean(axis=0), q_rsu_mean=q_rsu.mean(axis=0),
        q_veh_mean=q_veh.mean(axis=0), q_loc_final=q_loc[-1], q_rsu_final=q_rsu[-1],
        q_veh_final=q_veh[-1], bound_checks=checks, bound_violations=violations,
        transitions=transitions)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    scenario: Scenario
    policy: AgentSetPolicy | GreedyPolicy | GeneticPolicy
    trainer: QmixTrainer | None
    train_records: list[EpisodeRecord]
    eval_episodes: list[int]
    eval_records: list[EpisodeRecord]
    losses: list[tuple[int, int, float]]      # (episode, step, loss)
    epsilons: list[float]

    @property
    def eval_rewards(self) -> np.ndarray:
        return np.array([r.mean_reward for r in self.eval_records])


def train(run_cfg: RunConfig, out_dir: str | Path | None = None,
          verify_bound: bool = False) -> TrainResult:
    """Full learning loop (or plain rollouts for rule-based policies).

    Exploration episodes feed the replay buffer; after the warmup each episode
    triggers ``updates_per_episode`` gradient steps with soft target updates.
    Greedy-mode evaluation episodes run every ``eval_every`` episodes on a
    separate seed stream.
    """
    scenario = build_scenario(run_cfg.scenario)
    policy = make_policy(scenario, run_cfg)
    learned = isinstance(policy, AgentSetPolicy)
    trainer = None
    if learned:
        trainer_rng = np.random.default_rng(
            np.random.SeedSequence([scenario.config.seed, 5]))
        trainer = QmixTrainer(policy.agents, scenario.state_dim, run_cfg.trainer,
                              trainer_rng)
    train_records: list[EpisodeRecord] = []
    eval_records: list[EpisodeRecord] = []
    eval_episodes: list[int] = []
    losses: list[tuple[int, int, float]] = []
    epsilons: list[float] = []
    cfg = run_cfg.trainer
    for episode in range(run_cfg.episodes):
        eps = cfg.epsilon_at(episode, run_cfg.episodes) if learned else 0.0
        record = run_episode(scenario, policy, episode_seed=episode, epsilon=eps,
                             verify_bound=verify_bound, keep_transitions=learned)
        epsilons.append(eps)
        train_records.append(record)
        if learned:
            for tr in record.transitions:
                trainer.push(tr)
            record.transitions = []
            if episode + 1 >= cfg.warmup_episodes and trainer.can_train():
                for step in range(cfg.updates_per_episode):
                    loss = trainer.train_step()
                    trainer.soft_update_targets()
                    losses.append((episode, step, loss))
        if (episode + 1) % run_cfg.eval_every == 0:
            eval_rec = run_episode(scenario, policy, episode_seed=100_000 + episode,
                                   epsilon=0.0, verify_bound=verify_bound)
            eval_records.append(eval_rec)
            eval_episodes.append(episode)
    result = TrainResult(scenario=scenario, policy=policy, trainer=trainer,
                         train_records=train_records, eval_episodes=eval_episodes,
                         eval_records=eval_records, losses=losses, epsilons=epsilons)
    if out_dir is not None:
        write_outputs(run_cfg, result, Path(out_dir))
    return result


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def config_hash(run_cfg: RunConfig) -> str:
    doc = json.dumps(config_to_dict(run_cfg), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def write_outputs(run_cfg: RunConfig, result: TrainResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(run_cfg, out_dir / "config_resolved.json")

    rows = []
    for ep, rec in enumerate(result.train_records):
        rows.append([ep, "train", rec.mean_reward, rec.mean_total_delay,
                     rec.mean_queue_total, result.epsilons[ep],
                     rec.bound_checks, rec.bound_violations])
    for ep, rec in zip(result.eval_episodes, result.eval_records):
        rows.append([ep, "eval", rec.mean_reward, rec.mean_total_delay,
                     rec.mean_queue_total, 0.0, rec.bound_checks, rec.bound_violations])
    _write_csv(out_dir / "metrics.csv",
               ["episode", "kind", "mean_reward", "mean_total_delay",
                "mean_queue_total", "epsilon", "bound_checks", "bound_violations"],
               rows)

    rows = []
    for ep, step, loss in result.losses:
        reward = result.train_records[ep].mean_reward
        rows.append([ep, step, loss, reward, result.epsilons[ep]])
    _write_csv(out_dir / "learning_curve.csv",
               ["episode", "step", "loss", "reward", "epsilon"], rows)

    rows = []
    for ep, rec in zip(result.eval_episodes, result.eval_records):
        for i, (m, f) in enumerate(zip(rec.q_loc_mean, rec.q_loc_final)):
            rows.append([ep, f"loc{i}", m, f])
        for k, (m, f) in enumerate(zip(rec.q_rsu_mean, rec.q_rsu_final)):
            rows.append([ep, f"rsu{k}", m, f])
        for j, (m, f) in enumerate(zip(rec.q_veh_mean, rec.q_veh_final)):
            rows.append([ep, f"veh{j}", m, f])
    _write_csv(out_dir / "queues.csv", ["episode", "queue", "mean_len", "final_len"], rows)

    if result.trainer is not None:
        save_checkpoint(out_dir / "checkpoint.npz", run_cfg, result)


def save_checkpoint(path: Path, run_cfg: RunConfig, result: TrainResult) -> None:
    trainer = result.trainer
    nets: dict[str, neural.DenseNet] = {}
    arrays: dict[str, np.ndarray] = {}
    for i, agent in enumerate(trainer.agents):
        nets[f"agent{i}"] = agent.net
        nets[f"target_agent{i}"] = trainer.targets[i].net
        for p, arr in enumerate(trainer.opt_agents[i].m):
            arrays[f"opt_agent{i}/m{p}"] = arr
        for p, arr in enumerate(trainer.opt_agents[i].v):
            arrays[f"opt_agent{i}/v{p}"] = arr
    for name, net in trainer.mixer.nets().items():
        nets[f"mixer/{name}"] = net
    for name, net in trainer.target_mixer.nets().items():
        nets[f"target_mixer/{name}"] = net
    for p, arr in enumerate(trainer.opt_mixer.m):
        arrays[f"opt_mixer/m{p}"] = arr
    for p, arr in enumerate(trainer.opt_mixer.v):
        arrays[f"opt_mixer/v{p}"] = arr
    meta = {
        "config": config_to_dict(run_cfg),
        "config_hash": config_hash(run_cfg),
        "policy": run_cfg.policy,
        "adam_steps": [opt.step for opt in trainer.opt_agents] + [trainer.opt_mixer.step],
        "schedule": {"m_steps": run_cfg.trainer.denoise_steps,
                     "beta_min": run_cfg.trainer.beta_min,
                     "beta_max": run_cfg.trainer.beta_max},
    }
    neural.save_nets(path, nets, meta=meta, arrays=arrays)


def load_policy_from_checkpoint(path: str | Path) -> tuple[Scenario, AgentSetPolicy, RunConfig]:
    """Rebuild the scenario and a frozen evaluation policy from a checkpoint."""
    from .config import config_from_dict

    nets, _, meta = neural.load_nets(path)
    run_cfg = config_from_dict(meta["config"])
    scenario = build_scenario(run_cfg.scenario)
    agents = make_agents(scenario, run_cfg.trainer, run_cfg.policy, scenario.config.seed)
    for i, agent in enumerate(agents):
        saved = nets[f"agent{i}"]
        agent.net.weights = [w.copy() for w in saved.weights]
        agent.net.biases = [b.copy() for b in saved.biases]
    return scenario, AgentSetPolicy(scenario, agents), run_cfg


def evaluate_checkpoint(path: str | Path, episodes: int = 10,
                        seed_base: int = 500_000) -> list[EpisodeRecord]:
    scenario, policy, _ = load_policy_from_checkpoint(path)
    return [run_episode(scenario, policy, episode_seed=seed_base + e)
            for e in range(episodes)]


# ---------------------------------------------------------------------------
# sweeps and bound verification
# ---------------------------------------------------------------------------

SWEEP_AXES = ("n_cv", "n_sv", "V", "denoise_M")


def apply_axis(run_cfg: RunConfig, axis: str, value) -> RunConfig:
    """Clone the config with one sweep axis changed."""
    if axis == "n_cv":
        scenario = dataclasses.replace(run_cfg.scenario, n_cv=int(value), cv_types=())
        return dataclasses.replace(run_cfg, scenario=scenario)
    if axis == "n_sv":
        scenario = dataclasses.replace(run_cfg.scenario, n_sv=int(value))
        return dataclasses.replace(run_cfg, scenario=scenario)
    if axis == "V":
        scenario = dataclasses.replace(run_cfg.scenario, v_weight=float(value))
        return dataclasses.replace(run_cfg, scenario=scenario)
    if axis == "denoise_M":
        trainer = dataclasses.replace(run_cfg.trainer, denoise_steps=int(value))
        return dataclasses.replace(run_cfg, trainer=trainer)
    raise ValueError(f"unknown sweep axis {axis!r}; known: {SWEEP_AXES}")


@dataclass
class SweepPoint:
    axis: str
    value: float
    mean_final_reward: float
    mean_total_delay: float
    mean_queue_backlog: float


def sweep(run_cfg: RunConfig, axis: str, values, out_dir: str | Path | None = None,
          final_window: int = 50) -> list[SweepPoint]:
    """One training+eval per axis value; aggregates over the final eval window."""
    points = []
    for value in values:
        cfg = apply_axis(run_cfg, axis, value)
        sub_dir = Path(out_dir) / f"{axis}_{value}" if out_dir is not None else None
        result = train(cfg, out_dir=sub_dir)
        window = result.eval_records[-final_window:]
        points.append(SweepPoint(
            axis=axis, value=float(value),
            mean_final_reward=float(np.mean([r.mean_reward for r in window])),
            mean_total_delay=float(np.mean([r.mean_total_delay for r in window])),
            mean_queue_backlog=float(np.mean([r.mean_queue_total for r in window])),
        ))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sweep.csv",
                   ["axis", "value", "mean_final_reward", "mean_total_delay",
                    "mean_queue_backlog"],
                   [[p.axis, p.value, p.mean_final_reward, p.mean_total_delay,
                     p.mean_queue_backlog] for p in points])
    return points


def stability_slope(records: list[EpisodeRecord], window_frac: float = 0.25) -> float:
    """Least-squares slope of total queue length over the final window of episodes.

    A near-zero (or negative) slope across evaluation episodes is the
    operational queue-stability check for a feasible scenario.
    """
    if not records:
        raise ValueError("need at least one record")
    n = max(2, int(len(records) * window_frac))
    y = np.array([r.mean_queue_total for r in records[-n:]])
    x = np.arange(len(y), dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def verify_bound_samples(n_samples: int, seed: int = 0, n_scenarios: int = 20):
    """Check the pathwise drift bound on random states and feasible decisions.

    Scenarios vary in population and capacities; states draw queue backlogs up
    to several full model workloads.  Returns (checks, violations, worst_slack).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    per = max(1, n_samples // n_scenarios)
    checks = violations = 0
    worst = np.inf
    for s in range(n_scenarios):
        cfg = ScenarioConfig(
            n_cv=int(rng.integers(1, 6)), n_sv=int(rng.integers(0, 4)),
            seed=int(rng.integers(1 << 30)),
            f_loc_range=(2e9, 8e9), f_veh_range=(2e9, 12e9),
            f_rsu_max=float(rng.uniform(5e9, 50e9)),
            v_weight=float(rng.uniform(0.0, 100.0)))
        sc = build_scenario(cfg)
        env = EpisodeEnv(sc, seed=0)
        scale = max(t.total_work for t in sc.tasks)
        for _ in range(per):
            queue = queueing.QueueState(
                q_loc=rng.uniform(0, 3 * scale, sc.n_cv),
                q_rsu=rng.uniform(0, 3 * scale, sc.n_types),
                q_veh=rng.uniform(0, 3 * scale, sc.n_sv))
            phi = np.array([rng.integers(1, t.n_layers + 2) for t in sc.tasks])
            xi = rng.integers(1, sc.n_nodes + 1, sc.n_cv)
            decision = complete_decision(queue, phi, xi, sc.tasks, sc.lyap.v,
                                         sc.lyap.tau, sc.f_rsu_max)
            rates_rsu, rates_sv = env.rates()
            delays = queueing.slot_delays(queue, decision, rates_rsu, rates_sv,
                                          sc.tasks, sc.f_loc, sc.f_veh)
            check = lyapunov.verify_lemma1_bound(queue, decision, sc.tasks, sc.f_loc,
                                                 sc.f_veh, sc.lyap, delays=delays)
            checks += 1
            violations += 0 if check.holds else 1
            worst = min(worst, check.slack)
    return checks, violations, worst
