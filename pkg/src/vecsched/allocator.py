"""Closed-form RSU compute split across DNN types for fixed partition/offload choices.

For each type the 1/F delay pressure is summarized by a coefficient Gamma_k;
stationarity gives F_k = sqrt(Gamma_k / (eta - Q_k tau)) and the multiplier
eta is found by bisection on the capacity-saturation equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .queueing import RSU_NODE, Decision, QueueState, TaskProfile, offloads_edge

SUM_TOL = 1e-9         # relative capacity residual target
BRACKET_TOL = 1e-12    # relative bracket width floor


@dataclass(frozen=True)
class AllocProblem:
    """One slot's allocation instance: coefficients, backlogs, tau, capacity."""

    gamma: np.ndarray
    q_rsu: np.ndarray
    tau: float
    f_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "q_rsu", np.asarray(self.q_rsu, dtype=float))
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.gamma.shape != self.q_rsu.shape:
            raise ValueError("gamma and q_rsu must align")
        if not np.isfinite(self.gamma).all() or (self.gamma < 0).any():
            raise ValueError("gamma must be finite and non-negative")


def gamma_k(queue: QueueState, decision: Decision, tasks: list[TaskProfile],
            v: float, k: int) -> float:
    """Delay-pressure coefficient of type ``k`` for the current offload set.

    Counts the type's RSU backlog, each RSU offloader's remaining work, and
    the half-sum of every offloader pair's peer work.
    """
    members = [i for i, t in enumerate(tasks)
               if t.type_id == k and decision.xi[i] == RSU_NODE and offloads_edge(decision, i, t)]
    remotes = [tasks[i].remote_work(int(decision.phi[i])) for i in members]
    total = sum(remotes)
    pair_sum = sum(total - r for r in remotes)  # sum over i of peers' work
    return v * float(queue.q_rsu[k]) + v * total + 0.5 * v * pair_sum


def gamma_vector(queue: QueueState, decision: Decision, tasks: list[TaskProfile],
                 v: float) -> np.ndarray:
    return np.array([gamma_k(queue, decision, tasks, v, k)
                     for k in range(len(queue.q_rsu))])


def alloc_objective(f: np.ndarray, problem: AllocProblem) -> float:
    """sum Gamma_k / F_k - sum Q_k F_k tau, with Gamma/0 := inf when Gamma > 0."""
    f = np.asarray(f, dtype=float)
    total = 0.0
    for g, q, fk in zip(problem.gamma, problem.q_rsu, f):
        if g > 0.0:
            if fk <= 0.0:
                return math.inf
            total += g / fk
        total -= q * fk * problem.tau
    return total


def complete_decision(queue: QueueState, phi: np.ndarray, xi: np.ndarray,
                      tasks: list[TaskProfile], v: float, tau: float,
                      f_max: float) -> Decision:
    """Attach the optimal RSU split to a (phi, xi) choice."""
    partial = Decision(phi=phi, xi=xi, f_rsu=np.zeros(len(queue.q_rsu)))
    gamma = gamma_vector(queue, partial, tasks, v)
    f_rsu, _ = allocate(AllocProblem(gamma=gamma, q_rsu=queue.q_rsu, tau=tau, f_max=f_max))
    return Decision(phi=phi, xi=xi, f_rsu=f_rsu)


def _capacity_used(eta: float, gamma: np.ndarray, q_tau: np.ndarray) -> float:
    return float(np.sum(np.sqrt(gamma / (eta - q_tau))))


def allocate(problem: AllocProblem) -> tuple[np.ndarray, float | None]:
    """Optimal RSU split and the saturating multiplier.

    Types with Gamma_k = 0 get nothing; if every Gamma_k is zero the capacity
    is split uniformly (the objective is indifferent) and the multiplier is
    ``None``.  Otherwise the full capacity is spent:
    ``|sum F_k - f_max| <= 1e-9 * f_max``.
    """
    k_total = len(problem.gamma)
    active = problem.gamma > 0.0
    if not active.any():
        return np.full(k_total, problem.f_max / k_total), None
    gamma = problem.gamma[active]
    q_tau = problem.q_rsu[active] * problem.tau
    floor = float(q_tau.max())

    # Grow the bracket: eta_lo just above the largest Q*tau with G(eta_lo) > f_max,
    # eta_hi doubled until G(eta_hi) < f_max.  G is strictly decreasing on
    # (floor, inf) with range (0, inf), so the bracket always exists.
    delta = max(floor, 1.0) * 1e-3
    eta_lo = floor * (1 + 1e-12) + delta
    while _capacity_used(eta_lo, gamma, q_tau) <= problem.f_max:
        delta *= 0.25
        eta_lo = floor * (1 + 1e-12) + delta
        if delta < 1e-300:
            raise AssertionError("bisection bracket collapsed; Gamma should be > 0")
    eta_hi = eta_lo * 2 if eta_lo > 0 else 1.0
    while _capacity_used(eta_hi, gamma, q_tau) >= problem.f_max:
        eta_hi *= 2.0

    target = problem.f_max
    eta = 0.5 * (eta_lo + eta_hi)
    for _ in range(500):
        eta = 0.5 * (eta_lo + eta_hi)
        used = _capacity_used(eta, gamma, q_tau)
        if abs(used - target) <= SUM_TOL * target:
            break
        if used > target:
            eta_lo = eta
        else:
            eta_hi = eta
        if (eta_hi - eta_lo) <= BRACKET_TOL * eta_hi:
            break
    f = np.zeros(k_total)
    f[active] = np.sqrt(gamma / (eta - q_tau))
    residual = abs(f.sum() - target)
    if residual > SUM_TOL * target:
        # Bracket hit the width floor before the residual target; the remaining
        # error is a uniform scale on the active entries.
        f[active] *= target / f[active].sum()
    return f, float(eta)
