"""Drift-plus-penalty machinery: per-slot objective, common reward, bound verifier.

The per-slot objective combines the V-weighted completion-time sum with the
queue-weighted drift surrogate; its negation is the common reward shared by
every agent.  The verifier checks, pathwise on realized transitions, that
quadratic drift plus penalty never exceeds the drift surrogate plus the
worst-case constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .queueing import (Decision, DelayBreakdown, QueueState, TaskProfile,
                       arrivals, update_queues)


@dataclass(frozen=True)
class LyapunovParams:
    """Penalty weight V (unitless) and slot length tau (seconds)."""

    v: float = 10.0
    tau: float = 1.0

    def __post_init__(self) -> None:
        if self.v < 0:
            raise ValueError("V must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


def lyapunov_value(queue: QueueState) -> float:
    """Half the summed squared backlogs across all queues."""
    return 0.5 * float(
        np.dot(queue.q_loc, queue.q_loc)
        + np.dot(queue.q_rsu, queue.q_rsu)
        + np.dot(queue.q_veh, queue.q_veh)
    )


def exact_drift(queue: QueueState, next_queue: QueueState) -> float:
    """Realized (pathwise) change of the quadratic queue function."""
    return lyapunov_value(next_queue) - lyapunov_value(queue)


def _drift_surrogate(queue: QueueState, decision: Decision, tasks: list[TaskProfile],
                     f_loc: np.ndarray, f_veh: np.ndarray, tau: float) -> float:
    a_loc, a_rsu, a_veh = arrivals(decision, tasks, len(queue.q_rsu), len(queue.q_veh))
    return float(
        np.dot(queue.q_loc, a_loc - np.asarray(f_loc, float) * tau)
        + np.dot(queue.q_rsu, a_rsu - decision.f_rsu * tau)
        + np.dot(queue.q_veh, a_veh - np.asarray(f_veh, float) * tau)
    )


def per_slot_objective(queue: QueueState, decision: Decision, delays: DelayBreakdown,
                       params: LyapunovParams, tasks: list[TaskProfile],
                       f_loc: np.ndarray, f_veh: np.ndarray) -> float:
    """V-weighted delay sum plus the queue-weighted arrival/service terms."""
    return params.v * float(np.sum(delays.d_total)) + _drift_surrogate(
        queue, decision, tasks, f_loc, f_veh, params.tau)


def common_reward(queue: QueueState, decision: Decision, delays: DelayBreakdown,
                  params: LyapunovParams, tasks: list[TaskProfile],
                  f_loc: np.ndarray, f_veh: np.ndarray) -> float:
    """Shared agent reward: the negated per-slot objective."""
    return -per_slot_objective(queue, decision, delays, params, tasks, f_loc, f_veh)


def chi_constant(tasks: list[TaskProfile], f_loc: np.ndarray, f_veh: np.ndarray,
                 f_rsu: np.ndarray, tau: float) -> float:
    """Decision-independent bound constant from worst-case (full-model) arrivals.

    Uses the current RSU allocation for the RSU service term.  Intentionally
    loose: realized arrivals are never larger than the full-model totals used
    here.
    """
    n_types = len(f_rsu)
    totals = np.array([t.total_work for t in tasks])
    per_type = np.zeros(n_types)
    for t in tasks:
        per_type[t.type_id] += t.total_work
    n_sv = len(f_veh)
    chi = 0.5 * float(np.dot(totals, totals))
    chi += 0.5 * float(np.sum((np.asarray(f_loc, float) * tau) ** 2))
    chi += 0.5 * float(np.dot(per_type, per_type))
    chi += 0.5 * float(np.sum((np.asarray(f_rsu, float) * tau) ** 2))
    chi += 0.5 * n_sv * float(totals.sum()) ** 2
    chi += 0.5 * float(np.sum((np.asarray(f_veh, float) * tau) ** 2))
    return chi


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def verify_lemma1_bound(queue: QueueState, decision: Decision, tasks: list[TaskProfile],
                        f_loc: np.ndarray, f_veh: np.ndarray, params: LyapunovParams,
                        delays: DelayBreakdown | None = None) -> BoundCheck:
    """Pathwise check: exact drift + V*penalty <= drift surrogate + V*penalty + chi.

    The V-weighted delay sum appears on both sides, so ``delays=None`` drops
    it from both and checks the same inequality.  Numerical slack absorbs
    floating-point error.
    """
    next_queue = update_queues(queue, decision, tasks, f_loc, f_veh, params.tau)
    penalty = 0.0
    if delays is not None:
        penalty = params.v * float(np.sum(delays.d_total))
        if math.isinf(penalty):
            penalty = 0.0  # infinite-delay sentinel would cancel anyway
    lhs = exact_drift(queue, next_queue) + penalty
    rhs = (_drift_surrogate(queue, decision, tasks, f_loc, f_veh, params.tau)
           + penalty
           + chi_constant(tasks, f_loc, f_veh, decision.f_rsu, params.tau))
    eps = 1e-6 * max(1.0, abs(rhs))
    return BoundCheck(holds=lhs <= rhs + eps, lhs=lhs, rhs=rhs)
