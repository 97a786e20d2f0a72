"""Comparison policies: greedy rule, per-slot genetic search, plain dense agent.

All three emit the same Decision type as the learned policy and get their RSU
allocation from the same closed-form subroutine, so reward traces are directly
comparable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import neural
from .allocator import complete_decision
from .lyapunov import LyapunovParams, per_slot_objective
from .queueing import Decision, QueueState, TaskProfile, slot_delays


def greedy_decide(queue: QueueState, tasks: list[TaskProfile], f_rsu_max: float,
                  params: LyapunovParams) -> Decision:
    """Rule baseline: split at the cheapest-to-transmit layer, go to the
    shortest queue.

    phi is the argmin of the per-layer transmission size over 1..L (the rule
    always offloads, so full-local is excluded); xi prefers the RSU on ties,
    then the lowest SV index.  Deterministic in (queue, tasks).
    """
    n_cv = len(tasks)
    n_sv = len(queue.q_veh)
    phi = np.empty(n_cv, dtype=int)
    xi = np.empty(n_cv, dtype=int)
    for i, task in enumerate(tasks):
        phi[i] = int(np.argmin(task.tx_bits)) + 1
        options = np.concatenate([[queue.q_rsu[task.type_id]], queue.q_veh])
        xi[i] = int(np.argmin(options)) + 1  # index 0 is the RSU
    return complete_decision(queue, phi, xi, tasks, params.v, params.tau, f_rsu_max)


@dataclass(frozen=True)
class GeneticConfig:
    population: int = 50
    generations: int = 30
    crossover_prob: float = 0.8
    mutation_prob: float = 0.1
    elitism: int = 2

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be < population")


def _fitness(queue: QueueState, phi: np.ndarray, xi: np.ndarray,
             tasks: list[TaskProfile], rates_rsu: np.ndarray, rates_sv: np.ndarray,
             f_loc: np.ndarray, f_veh: np.ndarray, f_rsu_max: float,
             params: LyapunovParams, delay_cap: float) -> tuple[float, Decision]:
    decision = complete_decision(queue, phi, xi, tasks, params.v, params.tau, f_rsu_max)
    delays = slot_delays(queue, decision, rates_rsu, rates_sv, tasks, f_loc, f_veh)
    for arr in (delays.d_tra, delays.d_pro, delays.d_wait, delays.d_loc):
        np.minimum(arr, delay_cap, out=arr)
    return per_slot_objective(queue, decision, delays, params, tasks, f_loc, f_veh), decision


def genetic_optimize(queue: QueueState, tasks: list[TaskProfile], rates_rsu: np.ndarray,
                     rates_sv: np.ndarray, f_loc: np.ndarray, f_veh: np.ndarray,
                     f_rsu_max: float, params: LyapunovParams, cfg: GeneticConfig,
                     rng: np.random.Generator, delay_cap: float = 1e6,
                     history: list[float] | None = None) -> Decision:
    """Per-slot genetic search over joint (phi, xi) chromosomes.

    Fitness is the per-slot objective with the RSU split from the closed-form
    allocator.  Uniform crossover at ``crossover_prob``, per-gene uniform
    mutation at ``mutation_prob``, elitism keeps the best chromosomes.  When
    the joint space is no larger than the population, the initial population
    enumerates it outright (diversified init), so elitism pins the optimum.
    ``history`` (when given) collects the best fitness after init and after
    each generation.
    """
    n_cv = len(tasks)
    n_sv = len(queue.q_veh)
    n_nodes = n_sv + 1
    phi_card = [t.n_layers + 1 for t in tasks]

    def random_genes(n: int) -> np.ndarray:
        out = np.empty((n, 2 * n_cv), dtype=int)
        for i in range(n_cv):
            out[:, 2 * i] = rng.integers(1, phi_card[i] + 1, size=n)
            out[:, 2 * i + 1] = rng.integers(1, n_nodes + 1, size=n)
        return out

    space = 1
    for card in phi_card:
        space *= card * n_nodes
        if space > cfg.population:
            break
    if space <= cfg.population:
        axes = []
        for card in phi_card:
            axes.append(range(1, card + 1))
            axes.append(range(1, n_nodes + 1))
        seeds = np.array(list(itertools.product(*axes)), dtype=int)
        pop = np.vstack([seeds, random_genes(cfg.population - len(seeds))]) \
            if len(seeds) < cfg.population else seeds[: cfg.population]
    else:
        pop = random_genes(cfg.population)

    def evaluate(genes: np.ndarray) -> tuple[float, Decision]:
        return _fitness(queue, genes[0::2], genes[1::2], tasks, rates_rsu, rates_sv,
                        f_loc, f_veh, f_rsu_max, params, delay_cap)

    scored = [evaluate(g) for g in pop]
    fitness = np.array([s[0] for s in scored])

    best_idx = int(np.argmin(fitness))
    best_genes, best_fit, best_dec = pop[best_idx].copy(), fitness[best_idx], scored[best_idx][1]
    if history is not None:
        history.append(float(best_fit))

    for _ in range(cfg.generations):
        order = np.argsort(fitness, kind="stable")
        elites = pop[order[: cfg.elitism]].copy()
        children = [*elites]
        while len(children) < cfg.population:
            # Tournament of two for each parent.
            picks = rng.integers(0, cfg.population, size=4)
            pa = pop[picks[0]] if fitness[picks[0]] <= fitness[picks[1]] else pop[picks[1]]
            pb = pop[picks[2]] if fitness[picks[2]] <= fitness[picks[3]] else pop[picks[3]]
            child = pa.copy()
            if rng.random() < cfg.crossover_prob:
                mask = rng.random(child.shape) < 0.5
                child[mask] = pb[mask]
            for i in range(n_cv):
                if rng.random() < cfg.mutation_prob:
                    child[2 * i] = rng.integers(1, phi_card[i] + 1)
                if rng.random() < cfg.mutation_prob:
                    child[2 * i + 1] = rng.integers(1, n_nodes + 1)
            children.append(child)
        pop = np.stack(children)
        scored = [evaluate(g) for g in pop]
        fitness = np.array([s[0] for s in scored])
        idx = int(np.argmin(fitness))
        if fitness[idx] < best_fit:
            best_genes, best_fit, best_dec = pop[idx].copy(), fitness[idx], scored[idx][1]
        if history is not None:
            history.append(float(best_fit))

    return best_dec


class MlpAgent:
    """Plain dense value net mapping the local state straight to action values.

    Drop-in replacement for the diffusion agent in the same trainer: identical
    state/action encoding, widths, and duck-typed interface.
    """

    kind = "mlp"

    def __init__(self, state_dim: int, action_dim: int, hidden: tuple[int, ...],
                 rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        # Same near-zero output head as the diffusion agent, for a fair start.
        self.net = neural.init_dense([state_dim, *hidden, action_dim], rng,
                                     out_init_scale=0.01)

    def q_values(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return neural.forward(self.net, np.asarray(state, float))

    def q_values_trace(self, states: np.ndarray, rng: np.random.Generator):
        return neural.forward_cache(self.net, np.asarray(states, float))

    def backward(self, trace, grad_q: np.ndarray) -> list[np.ndarray]:
        grads, _ = neural.backward(self.net, trace, grad_q)
        return grads

    def parameters(self) -> list[np.ndarray]:
        return neural.parameters(self.net)

    def clone(self) -> "MlpAgent":
        twin = object.__new__(MlpAgent)
        twin.state_dim = self.state_dim
        twin.action_dim = self.action_dim
        twin.net = self.net.clone()
        return twin
