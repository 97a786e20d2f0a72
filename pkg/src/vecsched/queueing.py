"""Queue recursions and per-slot delay components for local, RSU, and SV execution.

Everything here is a pure function of value-type state.  Workloads, queues and
compute rates share one "workload unit" (FLOPs by default; scenarios may scale
it); queues evolve as ``max(Q - service*tau + arrivals, 0)``.  Infeasible links
(zero rate, or a zero RSU share with offloaded work) yield an infinite-delay
sentinel rather than an error so the action space stays fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dnn_catalog import DnnModel

RSU_NODE = 1  # xi value for the RSU; SVs are 2..J


@dataclass(frozen=True)
class TaskProfile:
    """Per-CV task view used by the queue/delay recursions.

    ``prefix[p]`` is the work of layers ``1..p`` (``prefix[0] = 0``), so a
    split at ``phi`` leaves ``prefix[phi-1]`` on the CV and the rest at the
    edge.  ``tx_bits[l-1]`` is the size of layer ``l``'s input on the air.
    """

    type_id: int
    prefix: np.ndarray
    tx_bits: np.ndarray

    @classmethod
    def from_model(cls, model: DnnModel, workload_unit: float = 1.0) -> "TaskProfile":
        if workload_unit <= 0:
            raise ValueError("workload_unit must be positive")
        work = np.asarray(model.workloads, dtype=float) / workload_unit
        return cls(
            type_id=model.type_id,
            prefix=np.concatenate([[0.0], np.cumsum(work)]),
            tx_bits=8.0 * np.asarray(model.input_bytes, dtype=float),
        )

    @property
    def n_layers(self) -> int:
        return len(self.tx_bits)

    @property
    def total_work(self) -> float:
        return float(self.prefix[-1])

    def local_work(self, phi: int) -> float:
        return float(self.prefix[phi - 1])

    def remote_work(self, phi: int) -> float:
        return self.total_work - float(self.prefix[phi - 1])


@dataclass
class QueueState:
    """Backlogs in workload units: per CV, per DNN type at the RSU, per SV."""

    q_loc: np.ndarray
    q_rsu: np.ndarray
    q_veh: np.ndarray

    def __post_init__(self) -> None:
        self.q_loc = np.asarray(self.q_loc, dtype=float)
        self.q_rsu = np.asarray(self.q_rsu, dtype=float)
        self.q_veh = np.asarray(self.q_veh, dtype=float)
        for name in ("q_loc", "q_rsu", "q_veh"):
            if (getattr(self, name) < 0).any():
                raise ValueError(f"{name} has negative backlog")

    @classmethod
    def zeros(cls, n_cv: int, n_types: int, n_sv: int) -> "QueueState":
        return cls(np.zeros(n_cv), np.zeros(n_types), np.zeros(n_sv))

    def copy(self) -> "QueueState":
        return QueueState(self.q_loc.copy(), self.q_rsu.copy(), self.q_veh.copy())

    def total(self) -> float:
        return float(self.q_loc.sum() + self.q_rsu.sum() + self.q_veh.sum())


@dataclass
class Decision:
    """Joint per-slot control: partition points, offload targets, RSU shares.

    ``phi[i]`` in 1..L_k+1; ``xi[i]`` in 1..J with 1 = RSU (ignored when
    ``phi[i] = L_k+1``); ``f_rsu[k]`` is the RSU rate granted to type ``k``.
    """

    phi: np.ndarray
    xi: np.ndarray
    f_rsu: np.ndarray

    def __post_init__(self) -> None:
        self.phi = np.asarray(self.phi, dtype=int)
        self.xi = np.asarray(self.xi, dtype=int)
        self.f_rsu = np.asarray(self.f_rsu, dtype=float)


@dataclass
class DelayBreakdown:
    """Per-CV delay components (seconds); d_total is their row sum."""

    d_loc: np.ndarray
    d_tra: np.ndarray
    d_pro: np.ndarray
    d_wait: np.ndarray

    @property
    def d_total(self) -> np.ndarray:
        return self.d_loc + self.d_tra + self.d_pro + self.d_wait


def validate_decision(decision: Decision, tasks: list[TaskProfile], n_types: int,
                      n_sv: int, f_rsu_max: float, tol: float = 1e-9) -> None:
    """Raise ValueError unless the decision satisfies every feasibility constraint."""
    n_cv = len(tasks)
    if decision.phi.shape != (n_cv,) or decision.xi.shape != (n_cv,):
        raise ValueError("phi/xi must have one entry per CV")
    for i, task in enumerate(tasks):
        if not 1 <= decision.phi[i] <= task.n_layers + 1:
            raise ValueError(f"phi[{i}]={decision.phi[i]} outside 1..{task.n_layers + 1}")
        if not 1 <= decision.xi[i] <= n_sv + 1:
            raise ValueError(f"xi[{i}]={decision.xi[i]} outside 1..{n_sv + 1}")
    if decision.f_rsu.shape != (n_types,):
        raise ValueError("f_rsu must have one entry per DNN type")
    if (decision.f_rsu < -tol * f_rsu_max).any() or (decision.f_rsu > f_rsu_max * (1 + tol)).any():
        raise ValueError("f_rsu entry outside [0, f_rsu_max]")
    if decision.f_rsu.sum() > f_rsu_max * (1 + tol):
        raise ValueError("sum of f_rsu exceeds f_rsu_max")


def offloads_edge(decision: Decision, i: int, task: TaskProfile) -> bool:
    """True when CV ``i`` actually ships work to an edge node this slot."""
    return decision.phi[i] != task.n_layers + 1


def transmission_delay(phi: int, rate_bps: float, task: TaskProfile) -> float:
    """Airtime of the split layer's input; 0 for full-local, inf on a dead link."""
    if phi == task.n_layers + 1:
        return 0.0
    bits = float(task.tx_bits[phi - 1])
    if rate_bps <= 0.0:
        return math.inf
    return bits / rate_bps


def local_delay(phi: int, q_loc_i: float, task: TaskProfile, f_loc_i: float) -> float:
    """Drain time of the local backlog plus the locally kept layers."""
    if phi == 1:
        return 0.0
    return (q_loc_i + task.local_work(phi)) / f_loc_i


def rsu_delay(i: int, decision: Decision, queue: QueueState, rates_rsu: np.ndarray,
              tasks: list[TaskProfile]) -> tuple[float, float, float]:
    """(d_tra, d_pro, d_wait) of CV ``i`` at the RSU; zeros unless i offloads there.

    Waiting time is the half-sum of same-type peers' newly offloaded work over
    the type's RSU share.
    """
    task = tasks[i]
    if decision.xi[i] != RSU_NODE or not offloads_edge(decision, i, task):
        return 0.0, 0.0, 0.0
    k = task.type_id
    f_k = float(decision.f_rsu[k])
    remote = task.remote_work(decision.phi[i])
    d_tra = transmission_delay(int(decision.phi[i]), float(rates_rsu[i]), task)
    if f_k <= 0.0:
        return d_tra, math.inf, math.inf
    d_pro = (float(queue.q_rsu[k]) + remote) / f_k
    peers = 0.0
    for ip, other in enumerate(tasks):
        if ip == i or other.type_id != k:
            continue
        if decision.xi[ip] == RSU_NODE and offloads_edge(decision, ip, other):
            peers += other.remote_work(decision.phi[ip])
    return d_tra, d_pro, peers / (2.0 * f_k)


def sv_delay(i: int, j: int, decision: Decision, queue: QueueState, rates_sv: np.ndarray,
             tasks: list[TaskProfile], f_veh: np.ndarray) -> tuple[float, float, float]:
    """(d_tra, d_pro, d_wait) of CV ``i`` on SV ``j`` (0-based array index).

    Unlike the RSU case, the waiting half-sum ranges over every CV of any type
    offloading to this SV.
    """
    task = tasks[i]
    if decision.xi[i] != j + 2 or not offloads_edge(decision, i, task):
        return 0.0, 0.0, 0.0
    d_tra = transmission_delay(int(decision.phi[i]), float(rates_sv[i, j]), task)
    d_pro = (float(queue.q_veh[j]) + task.remote_work(decision.phi[i])) / float(f_veh[j])
    peers = 0.0
    for ip, other in enumerate(tasks):
        if ip == i:
            continue
        if decision.xi[ip] == j + 2 and offloads_edge(decision, ip, other):
            peers += other.remote_work(decision.phi[ip])
    return d_tra, d_pro, peers / (2.0 * float(f_veh[j]))


def slot_delays(queue: QueueState, decision: Decision, rates_rsu: np.ndarray,
                rates_sv: np.ndarray, tasks: list[TaskProfile], f_loc: np.ndarray,
                f_veh: np.ndarray) -> DelayBreakdown:
    """All delay components for one slot; exactly one edge target per CV is active."""
    n_cv = len(tasks)
    out = DelayBreakdown(np.zeros(n_cv), np.zeros(n_cv), np.zeros(n_cv), np.zeros(n_cv))
    for i, task in enumerate(tasks):
        phi = int(decision.phi[i])
        out.d_loc[i] = local_delay(phi, float(queue.q_loc[i]), task, float(f_loc[i]))
        if not offloads_edge(decision, i, task):
            continue
        if decision.xi[i] == RSU_NODE:
            tra, pro, wait = rsu_delay(i, decision, queue, rates_rsu, tasks)
        else:
            tra, pro, wait = sv_delay(i, int(decision.xi[i]) - 2, decision, queue,
                                      rates_sv, tasks, f_veh)
        out.d_tra[i], out.d_pro[i], out.d_wait[i] = tra, pro, wait
    return out


def arrivals(decision: Decision, tasks: list[TaskProfile], n_types: int,
             n_sv: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indicator-gated work arrivals (a_loc, a_rsu, a_veh) for one slot."""
    n_cv = len(tasks)
    a_loc = np.zeros(n_cv)
    a_rsu = np.zeros(n_types)
    a_veh = np.zeros(n_sv)
    for i, task in enumerate(tasks):
        phi = int(decision.phi[i])
        if phi != 1:
            a_loc[i] = task.local_work(phi)
        if offloads_edge(decision, i, task):
            remote = task.remote_work(phi)
            if decision.xi[i] == RSU_NODE:
                a_rsu[task.type_id] += remote
            else:
                a_veh[int(decision.xi[i]) - 2] += remote
    return a_loc, a_rsu, a_veh


def update_queues(queue: QueueState, decision: Decision, tasks: list[TaskProfile],
                  f_loc: np.ndarray, f_veh: np.ndarray, tau: float) -> QueueState:
    """Advance every queue one slot: serve f*tau, add gated arrivals, clamp at 0."""
    a_loc, a_rsu, a_veh = arrivals(decision, tasks, len(queue.q_rsu), len(queue.q_veh))
    return QueueState(
        q_loc=np.maximum(queue.q_loc - np.asarray(f_loc, float) * tau + a_loc, 0.0),
        q_rsu=np.maximum(queue.q_rsu - decision.f_rsu * tau + a_rsu, 0.0),
        q_veh=np.maximum(queue.q_veh - np.asarray(f_veh, float) * tau + a_veh, 0.0),
    )
