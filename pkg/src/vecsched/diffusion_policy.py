"""Diffusion-based agent policy: noise schedule, reverse denoising chain, actions.

The agent's value head is the denoised vector x0 itself (one entry per joint
partition/offload choice); the softmax of x0 is used for reporting and
sampling.  The chain is differentiable with the injected Gaussian draws held
fixed, which is what the trainer backpropagates through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import neural
from .neural import DenseNet


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step diffusion rates and their running products.

    beta[m-1] is the rate at step m; alpha_hat is the cumulative product of
    (1 - beta) with alpha_hat[-1] understood as 1 at m = 0; beta_hat is the
    reverse-transition variance (0 at the first step).
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    beta_min: float
    beta_max: float

    @property
    def m_steps(self) -> int:
        return len(self.beta)


def build_schedule(m_steps: int, beta_min: float = 0.1, beta_max: float = 10.0) -> DiffusionSchedule:
    """Exponential-family rate schedule over ``m_steps`` denoising steps."""
    if m_steps < 1:
        raise ValueError("need at least one denoising step")
    if not 0 < beta_min <= beta_max:
        raise ValueError(f"need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}")
    m = np.arange(1, m_steps + 1, dtype=float)
    beta = 1.0 - np.exp(-beta_min / m_steps
                        - (2.0 * m - 1.0) / (2.0 * m_steps**2) * (beta_max - beta_min))
    alpha = 1.0 - beta
    alpha_hat = np.cumprod(alpha)
    alpha_hat_prev = np.concatenate([[1.0], alpha_hat[:-1]])
    beta_hat = (1.0 - alpha_hat_prev) / (1.0 - alpha_hat) * beta
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_hat=alpha_hat,
                             beta_hat=beta_hat, beta_min=beta_min, beta_max=beta_max)


@dataclass
class ChainTrace:
    """Forward record of one (batched) chain evaluation for backprop/replay."""

    x_init: np.ndarray            # x^M draw, (B, A)
    noises: list[np.ndarray]      # injected eps per step m = M..2 (empty slots None)
    caches: list                  # net forward caches, ordered m = M..1
    x0: np.ndarray


class DiffusionAgent:
    """One CV's policy: a noise net evaluated through the reverse chain.

    The net maps (x^m, m/M, local state) to a noise estimate of the action
    dimension; iterating the reverse update from a standard normal draw yields
    the action-value vector x0.
    """

    kind = "diffusion"

    def __init__(self, state_dim: int, action_dim: int, schedule: DiffusionSchedule,
                 hidden: tuple[int, ...], rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.schedule = schedule
        widths = [action_dim + 1 + state_dim, *hidden, action_dim]
        # Near-zero output head: the untrained chain then stays on the bounded
        # x^M / sqrt(alpha_hat) path instead of amplifying its own feedback.
        self.net = neural.init_dense(widths, rng, out_init_scale=0.01)
        # Start the (x, step) pathway at zero so early training fits the state
        # conditioned values first; the noise coupling grows as TD needs it.
        self.net.weights[0][: action_dim + 1, :] = 0.0

    # -- chain ------------------------------------------------------------

    def _net_input(self, x: np.ndarray, m: int, states: np.ndarray) -> np.ndarray:
        frac = np.full((x.shape[0], 1), m / self.schedule.m_steps)
        return np.concatenate([x, frac, states], axis=1)

    def _chain(self, states: np.ndarray, rng: np.random.Generator | None,
               record: bool, x_init: np.ndarray | None = None,
               noises: list[np.ndarray] | None = None) -> ChainTrace:
        sched = self.schedule
        b = states.shape[0]
        x = rng.standard_normal((b, self.action_dim)) if x_init is None else x_init.copy()
        trace = ChainTrace(x_init=x.copy(), noises=[], caches=[], x0=x)
        for m in range(sched.m_steps, 0, -1):
            idx = m - 1
            inp = self._net_input(x, m, states)
            if record:
                eps_hat, cache = neural.forward_cache(self.net, inp)
                trace.caches.append(cache)
            else:
                eps_hat = neural.forward(self.net, inp)
            coef = (1.0 - sched.alpha[idx]) / math.sqrt(1.0 - sched.alpha_hat[idx])
            mu = (x - coef * eps_hat) / math.sqrt(sched.alpha[idx])
            if m > 1:
                if noises is not None:
                    eps = noises[sched.m_steps - m]
                else:
                    eps = rng.standard_normal((b, self.action_dim))
                trace.noises.append(eps)
                x = mu + math.sqrt(sched.beta_hat[idx]) * eps
            else:
                x = mu  # final step is noiseless so evaluation is deterministic
        trace.x0 = x
        return trace

    def q_values(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Action-value vector x0 for a single local state."""
        return self._chain(np.asarray(state, float)[None, :], rng, record=False).x0[0]

    def q_values_trace(self, states: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, ChainTrace]:
        """Batched x0 plus the forward record needed for ``backward``."""
        trace = self._chain(np.asarray(states, float), rng, record=True)
        return trace.x0, trace

    def replay(self, states: np.ndarray, x_init: np.ndarray,
               noises: list[np.ndarray]) -> np.ndarray:
        """Re-run a chain with frozen draws (finite-difference harnesses)."""
        return self._chain(np.asarray(states, float), None, record=False,
                           x_init=x_init, noises=noises).x0

    def backward(self, trace: ChainTrace, grad_x0: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(x0 * grad_x0) w.r.t. the noise net's parameters.

        Walks the recorded chain in reverse; the injected draws are constants
        of the forward evaluation.
        """
        sched = self.schedule
        grads = neural.zeros_like_params(neural.parameters(self.net))
        g = np.asarray(grad_x0, float)
        # caches[0] belongs to m = M; the step that produced x0 is caches[-1].
        for m in range(1, sched.m_steps + 1):
            idx = m - 1
            cache = trace.caches[sched.m_steps - m]
            root_alpha = math.sqrt(sched.alpha[idx])
            coef = (1.0 - sched.alpha[idx]) / math.sqrt(1.0 - sched.alpha_hat[idx])
            step_grads, d_inp = neural.backward(self.net, cache, -(coef / root_alpha) * g)
            neural.accumulate(grads, step_grads)
            g = g / root_alpha + d_inp[:, : self.action_dim]
        return grads

    # -- trainer plumbing ---------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return neural.parameters(self.net)

    def clone(self) -> "DiffusionAgent":
        twin = object.__new__(DiffusionAgent)
        twin.state_dim = self.state_dim
        twin.action_dim = self.action_dim
        twin.schedule = self.schedule
        twin.net = self.net.clone()
        return twin


def denoise_chain(policy: DiffusionAgent, state: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """x0 for one local state (standard-normal start, noiseless last step)."""
    return policy.q_values(state, rng)


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def action_distribution(policy: DiffusionAgent, state: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    """Softmax of the denoised vector: the per-action selection probabilities."""
    return softmax(denoise_chain(policy, state, rng))


def select_action(q_values: np.ndarray, probs: np.ndarray | None = None,
                  mode: str = "greedy", rng: np.random.Generator | None = None,
                  epsilon: float = 0.0) -> int:
    """Pick an action index: argmax (ties to the lowest index) or eps-greedy."""
    if mode == "greedy":
        return int(np.argmax(q_values))
    if mode == "eps":
        if rng is None:
            raise ValueError("eps mode needs a generator")
        if rng.random() < epsilon:
            return int(rng.integers(len(q_values)))
        return int(np.argmax(q_values))
    raise ValueError(f"unknown mode {mode!r}")


def decode_action(a: int, n_layers: int, n_nodes: int) -> tuple[int, int]:
    """Map a flat 0-based action to (phi, xi), both 1-based; xi = 1 is the RSU.

    xi has no effect downstream when phi = n_layers + 1 (full local).
    """
    n_actions = (n_layers + 1) * n_nodes
    if not 0 <= a < n_actions:
        raise ValueError(f"action {a} outside 0..{n_actions - 1}")
    return a // n_nodes + 1, a % n_nodes + 1


def encode_action(phi: int, xi: int, n_nodes: int) -> int:
    """Inverse of ``decode_action``."""
    return (phi - 1) * n_nodes + (xi - 1)
