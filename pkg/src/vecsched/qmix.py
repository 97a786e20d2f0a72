"""Centralized training: monotonic mixing network, replay buffer, TD updates.

The mixer combines per-agent action values into a joint value using weights
and biases emitted by hypernetworks of the joint state; weight outputs pass
through an absolute value so the joint value is monotone in every agent's
value.  Agents and mixer take one joint Adam step per update against the mean
squared TD error; target copies track the online nets by soft updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural
from .neural import AdamState, DenseNet


@dataclass
class Transition:
    """One slot: per-agent states/actions, common reward, successor states."""

    states: np.ndarray       # (I, state_dim)
    actions: np.ndarray      # (I,)
    reward: float
    next_states: np.ndarray  # (I, state_dim)
    done: bool = False


class ReplayBuffer:
    """Ring buffer with seeded uniform sampling (no replacement within a batch)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def push(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._items):
            raise ValueError(f"cannot sample {batch_size} of {len(self._items)} transitions")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


@dataclass(frozen=True)
class TrainerConfig:
    """Learning-loop knobs; widths and rates default to the experiment setup."""

    discount: float = 0.99
    target_rate: float = 0.001
    batch_size: int = 32
    buffer_capacity: int = 5000
    warmup_episodes: int = 10
    updates_per_episode: int = 1
    lr: float = 5e-4
    reward_scale: float = 1.0
    grad_clip: float = 10.0   # global L2 norm cap across all nets; 0 disables
    embed_dim: int = 32
    hyper_hidden: tuple[int, ...] = (64, 64)
    agent_hidden: tuple[int, ...] = (256, 256, 256)
    denoise_steps: int = 7
    beta_min: float = 0.1
    beta_max: float = 10.0
    epsilon_start: float = 0.9
    epsilon_end: float = 0.05
    epsilon_anneal_frac: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 < self.target_rate <= 1.0:
            raise ValueError("target_rate must be in (0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need buffer_capacity >= batch_size >= 1")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")

    def epsilon_at(self, episode: int, total_episodes: int) -> float:
        """Linear anneal over the first ``epsilon_anneal_frac`` of training."""
        horizon = max(1, int(total_episodes * self.epsilon_anneal_frac))
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass
class MixingNet:
    """Hypernetworks emitting the two mixing layers from the joint state."""

    hyper_w1: DenseNet  # joint state -> embed_dim * n_agents weights
    hyper_b1: DenseNet  # joint state -> embed_dim bias
    hyper_w2: DenseNet  # joint state -> embed_dim weights
    hyper_b2: DenseNet  # joint state -> scalar bias
    n_agents: int
    embed_dim: int

    def nets(self) -> dict[str, DenseNet]:
        return {"hyper_w1": self.hyper_w1, "hyper_b1": self.hyper_b1,
                "hyper_w2": self.hyper_w2, "hyper_b2": self.hyper_b2}

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for net in self.nets().values():
            out.extend(neural.parameters(net))
        return out

    def clone(self) -> "MixingNet":
        return MixingNet(self.hyper_w1.clone(), self.hyper_b1.clone(),
                         self.hyper_w2.clone(), self.hyper_b2.clone(),
                         self.n_agents, self.embed_dim)


def init_mixer(state_dim: int, n_agents: int, rng: np.random.Generator,
               embed_dim: int = 32, hyper_hidden: tuple[int, ...] = (64, 64)) -> MixingNet:
    def hyper(out_dim: int, out_scale: float = 1.0) -> DenseNet:
        return neural.init_dense([state_dim, *hyper_hidden, out_dim], rng,
                                 out_init_scale=out_scale)

    # Small init on the weight-emitting heads keeps |W2||W1| sums O(1) at the
    # start; otherwise the all-positive mixing inflates bootstrap targets.
    return MixingNet(hyper_w1=hyper(embed_dim * n_agents, 0.05), hyper_b1=hyper(embed_dim),
                     hyper_w2=hyper(embed_dim, 0.05), hyper_b2=hyper(1),
                     n_agents=n_agents, embed_dim=embed_dim)


def mix(mixer: MixingNet, joint_state: np.ndarray, q_values: np.ndarray) -> np.ndarray:
    """Joint value |W2(S)| . (|W1(S)| q + b1(S)) + b2(S) for a batch."""
    q_total, _ = mix_cache(mixer, joint_state, q_values)
    return q_total


def mix_cache(mixer: MixingNet, joint_state: np.ndarray, q_values: np.ndarray):
    s, single = neural._as_batch(joint_state)
    q = np.asarray(q_values, float)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape != (s.shape[0], mixer.n_agents):
        raise ValueError(f"q_values shape {q.shape} != ({s.shape[0]}, {mixer.n_agents})")
    b = s.shape[0]
    a1, c_w1 = neural.forward_cache(mixer.hyper_w1, s)
    b1, c_b1 = neural.forward_cache(mixer.hyper_b1, s)
    a2, c_w2 = neural.forward_cache(mixer.hyper_w2, s)
    b2, c_b2 = neural.forward_cache(mixer.hyper_b2, s)
    w1 = np.abs(a1).reshape(b, mixer.embed_dim, mixer.n_agents)
    w2 = np.abs(a2)
    hidden = np.einsum("bei,bi->be", w1, q) + b1
    q_total = np.einsum("be,be->b", w2, hidden) + b2[:, 0]
    cache = {"s": s, "q": q, "a1": a1, "a2": a2, "w1": w1, "w2": w2, "hidden": hidden,
             "caches": (c_w1, c_b1, c_w2, c_b2)}
    return (q_total[0] if single else q_total), cache


def mix_backward(mixer: MixingNet, cache: dict, upstream: np.ndarray):
    """Gradients of sum(q_total * upstream) w.r.t. hypernet params and q.

    Returns (grads aligned with mixer.parameters(), dq of shape (B, n_agents)).
    """
    g = np.asarray(upstream, float)
    if g.ndim == 0:
        g = g[None]
    b = cache["s"].shape[0]
    c_w1, c_b1, c_w2, c_b2 = cache["caches"]
    d_hidden = g[:, None] * cache["w2"]                        # (B, E)
    d_w2 = g[:, None] * cache["hidden"]                        # (B, E)
    d_a2 = d_w2 * np.sign(cache["a2"])
    d_w1 = np.einsum("be,bi->bei", d_hidden, cache["q"])       # (B, E, I)
    d_a1 = (d_w1 * np.sign(cache["a1"]).reshape(cache["w1"].shape)).reshape(b, -1)
    dq = np.einsum("bei,be->bi", cache["w1"], d_hidden)
    g_w1, _ = neural.backward(mixer.hyper_w1, c_w1, d_a1)
    g_b1, _ = neural.backward(mixer.hyper_b1, c_b1, d_hidden)
    g_w2, _ = neural.backward(mixer.hyper_w2, c_w2, d_a2)
    g_b2, _ = neural.backward(mixer.hyper_b2, c_b2, g[:, None])
    return [*g_w1, *g_b1, *g_w2, *g_b2], dq


def soft_update(online: list[np.ndarray], target: list[np.ndarray], rate: float) -> None:
    """target <- rate * online + (1 - rate) * target."""
    neural.soft_update_params(online, target, rate)


def _clip_global_norm(grads: list[np.ndarray], max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale


class QmixTrainer:
    """Joint trainer over per-agent value nets and the mixing network.

    ``agents`` follow a small duck-typed contract: ``q_values(state, rng)``,
    ``q_values_trace(states, rng)``, ``backward(trace, grad_q)``,
    ``parameters()`` and ``clone()`` (diffusion and plain dense agents both
    implement it).
    """

    def __init__(self, agents: list, state_dim: int, cfg: TrainerConfig,
                 rng: np.random.Generator):
        self.agents = agents
        self.targets = [a.clone() for a in agents]
        self.cfg = cfg
        self.rng = rng
        self.mixer = init_mixer(state_dim * len(agents), len(agents), rng,
                                embed_dim=cfg.embed_dim, hyper_hidden=cfg.hyper_hidden)
        self.target_mixer = self.mixer.clone()
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.opt_agents = [AdamState.for_params(a.parameters(), lr=cfg.lr) for a in agents]
        self.opt_mixer = AdamState.for_params(self.mixer.parameters(), lr=cfg.lr)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def push(self, transition: Transition) -> None:
        self.buffer.push(transition)

    def can_train(self) -> bool:
        return len(self.buffer) >= self.cfg.batch_size

    def td_targets(self, batch: list[Transition]) -> np.ndarray:
        """y = r + discount * target_mix(S', per-agent max target values)."""
        e = len(batch)
        rewards = np.array([t.reward for t in batch]) / self.cfg.reward_scale
        done = np.array([t.done for t in batch])
        next_q = np.empty((e, self.n_agents))
        for i, target in enumerate(self.targets):
            states = np.stack([t.next_states[i] for t in batch])
            x0, _ = target.q_values_trace(states, self.rng)
            next_q[:, i] = x0.max(axis=1)
        joint_next = np.stack([t.next_states.reshape(-1) for t in batch])
        boot = mix(self.target_mixer, joint_next, next_q)
        return rewards + np.where(done, 0.0, self.cfg.discount * boot)

    def train_step(self) -> float:
        """One joint Adam step on all agents + mixer; returns the pre-step loss."""
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        e = len(batch)
        y = self.td_targets(batch)

        chosen_q = np.empty((e, self.n_agents))
        traces = []
        actions = []
        for i, agent in enumerate(self.agents):
            states = np.stack([t.states[i] for t in batch])
            acts = np.array([t.actions[i] for t in batch], dtype=int)
            x0, trace = agent.q_values_trace(states, self.rng)
            chosen_q[:, i] = x0[np.arange(e), acts]
            traces.append(trace)
            actions.append(acts)

        joint = np.stack([t.states.reshape(-1) for t in batch])
        q_total, cache = mix_cache(self.mixer, joint, chosen_q)
        err = q_total - y
        loss = 0.5 * float(np.mean(err**2))

        mixer_grads, dq = mix_backward(self.mixer, cache, err / e)
        agent_grads = []
        for i, agent in enumerate(self.agents):
            grad_q = np.zeros((e, agent.action_dim))
            grad_q[np.arange(e), actions[i]] = dq[:, i]
            agent_grads.append(agent.backward(traces[i], grad_q))
        _clip_global_norm([g for gs in agent_grads for g in gs] + mixer_grads,
                          self.cfg.grad_clip)
        for agent, grads, opt in zip(self.agents, agent_grads, self.opt_agents):
            neural.adam_step(agent.parameters(), grads, opt)
        neural.adam_step(self.mixer.parameters(), mixer_grads, self.opt_mixer)
        return loss

    def soft_update_targets(self) -> None:
        for agent, target in zip(self.agents, self.targets):
            soft_update(agent.parameters(), target.parameters(), self.cfg.target_rate)
        soft_update(self.mixer.parameters(), self.target_mixer.parameters(),
                    self.cfg.target_rate)
