import math

import numpy as np
import pytest

from vecsched.dnn_catalog import ConvPool, DnnModel, FullyConnected
from vecsched.queueing import (Decision, QueueState, TaskProfile, arrivals,
                               local_delay, rsu_delay, slot_delays, sv_delay,
                               transmission_delay, update_queues, validate_decision)


def profile(type_id, works, bits):
    return TaskProfile(type_id=type_id,
                       prefix=np.concatenate([[0.0], np.cumsum(works)]),
                       tx_bits=np.asarray(bits, dtype=float))


# Hand-built two-CV scenario used as a spreadsheet oracle.
TASK_A = profile(0, [10.0, 20.0], [80.0, 40.0])
TASK_B = profile(1, [5.0, 10.0, 25.0], [100.0, 60.0, 20.0])
F_LOC = np.array([2.0, 4.0])
F_VEH = np.array([5.0])


def hand_state():
    return QueueState(q_loc=[2.0, 3.0], q_rsu=[1.0, 4.0], q_veh=[5.0])


def hand_decision():
    # CV0 splits at layer 2 to the RSU; CV1 fully offloads to the SV.
    return Decision(phi=[2, 1], xi=[1, 2], f_rsu=[3.0, 2.0])


def test_transmission_delay_cases():
    task = TaskProfile(0, np.array([0.0, 0.0]), np.array([8.0 * 602112]))
    assert transmission_delay(TASK_A.n_layers + 1, 1e7, TASK_A) == 0.0
    assert transmission_delay(1, 1e7, task) == pytest.approx(0.4816896)
    assert transmission_delay(1, 0.0, task) == math.inf


def test_local_delay_cases():
    t = profile(0, [1e9], [1.0])
    assert local_delay(1, 123.0, t, 5e9) == 0.0
    assert local_delay(2, 0.0, t, 5e9) == pytest.approx(0.2)
    assert local_delay(2, 1e9, t, 1e9) == pytest.approx(2.0)


def test_rsu_delay_sole_offloader_no_wait():
    queue = QueueState(q_loc=[0.0], q_rsu=[0.0], q_veh=[])
    dec = Decision(phi=[1], xi=[1], f_rsu=[4.0])
    tra, pro, wait = rsu_delay(0, dec, queue, np.array([10.0]), [TASK_A])
    assert wait == 0.0
    assert pro == pytest.approx(30.0 / 4.0)
    assert tra == pytest.approx(TASK_A.tx_bits[0] / 10.0)


def test_rsu_delay_two_same_type_peers_half_sum():
    t1 = profile(0, [7.0], [8.0])
    t2 = profile(0, [7.0], [8.0])
    queue = QueueState(q_loc=[0, 0], q_rsu=[0.0], q_veh=[])
    dec = Decision(phi=[1, 1], xi=[1, 1], f_rsu=[2.0])
    for i in (0, 1):
        _, _, wait = rsu_delay(i, dec, queue, np.array([5.0, 5.0]), [t1, t2])
        assert wait == pytest.approx(7.0 / (2.0 * 2.0))


def test_rsu_delay_full_local_is_zero():
    queue = hand_state()
    dec = Decision(phi=[TASK_A.n_layers + 1, 1], xi=[1, 2], f_rsu=[3.0, 2.0])
    assert rsu_delay(0, dec, queue, np.array([10.0, 10.0]), [TASK_A, TASK_B]) == (0, 0, 0)


def test_rsu_delay_infinite_when_share_zero():
    queue = QueueState(q_loc=[0.0], q_rsu=[0.0], q_veh=[])
    dec = Decision(phi=[1], xi=[1], f_rsu=[0.0])
    _, pro, wait = rsu_delay(0, dec, queue, np.array([10.0]), [TASK_A])
    assert math.isinf(pro) and math.isinf(wait)


def test_sv_delay_cases():
    t1 = profile(0, [9.0], [8.0])
    t2 = profile(1, [4.0], [8.0])
    queue = QueueState(q_loc=[0, 0], q_rsu=[0, 0], q_veh=[0.0])
    dec = Decision(phi=[1, 1], xi=[2, 2], f_rsu=[1.0, 1.0])
    tra, pro, wait = sv_delay(0, 0, dec, queue, np.array([[4.0], [4.0]]), [t1, t2], F_VEH)
    assert pro == pytest.approx(9.0 / 5.0)
    # Cross-type peer counts in the SV waiting sum.
    assert wait == pytest.approx(4.0 / (2.0 * 5.0))
    _, _, wait2 = sv_delay(1, 0, dec, queue, np.array([[4.0], [4.0]]), [t1, t2], F_VEH)
    assert wait2 == pytest.approx(9.0 / (2.0 * 5.0))
    dec_local = Decision(phi=[2, 1], xi=[2, 2], f_rsu=[1.0, 1.0])
    assert sv_delay(0, 0, dec_local, queue, np.array([[4.0], [4.0]]), [t1, t2], F_VEH) == (0, 0, 0)


def test_slot_delays_matches_hand_oracle():
    queue = hand_state()
    dec = hand_decision()
    rates_rsu = np.array([10.0, 20.0])
    rates_sv = np.array([[8.0], [16.0]])
    d = slot_delays(queue, dec, rates_rsu, rates_sv, [TASK_A, TASK_B], F_LOC, F_VEH)
    assert d.d_loc[0] == pytest.approx((2 + 10) / 2.0)
    assert d.d_tra[0] == pytest.approx(40.0 / 10.0)
    assert d.d_pro[0] == pytest.approx((1 + 20) / 3.0)
    assert d.d_wait[0] == 0.0
    assert d.d_total[0] == pytest.approx(17.0)
    assert d.d_loc[1] == 0.0
    assert d.d_tra[1] == pytest.approx(100.0 / 16.0)
    assert d.d_pro[1] == pytest.approx((5 + 40) / 5.0)
    assert d.d_wait[1] == 0.0
    assert d.d_total[1] == pytest.approx(15.25)


def test_update_queues_matches_hand_oracle():
    nxt = update_queues(hand_state(), hand_decision(), [TASK_A, TASK_B],
                        F_LOC, F_VEH, tau=1.0)
    np.testing.assert_allclose(nxt.q_loc, [10.0, 0.0])
    np.testing.assert_allclose(nxt.q_rsu, [18.0, 2.0])
    np.testing.assert_allclose(nxt.q_veh, [40.0])


def test_update_queues_full_offload_everywhere():
    queue = QueueState(q_loc=[0, 0], q_rsu=[0, 0], q_veh=[0.0])
    dec = Decision(phi=[1, 1], xi=[1, 2], f_rsu=[3.0, 2.0])
    nxt = update_queues(queue, dec, [TASK_A, TASK_B], F_LOC, F_VEH, 1.0)
    np.testing.assert_allclose(nxt.q_loc, [0.0, 0.0])
    np.testing.assert_allclose(nxt.q_rsu, [max(30 - 3, 0), 0.0])
    np.testing.assert_allclose(nxt.q_veh, [max(40 - 5, 0)])


def test_update_queues_service_clamps_at_zero():
    queue = QueueState(q_loc=[1.0, 1.0], q_rsu=[1.0, 1.0], q_veh=[1.0])
    dec = Decision(phi=[TASK_A.n_layers + 1, TASK_B.n_layers + 1], xi=[1, 1],
                   f_rsu=[9.0, 9.0])
    nxt = update_queues(queue, dec, [TASK_A, TASK_B], np.array([100.0, 100.0]),
                        np.array([100.0]), 1.0)
    np.testing.assert_allclose(nxt.q_rsu, [0.0, 0.0])
    np.testing.assert_allclose(nxt.q_veh, [0.0])
    # full-local arrivals still land in the local queue
    np.testing.assert_allclose(nxt.q_loc, [0.0, 0.0])  # service 100 swallows them


def test_full_local_routes_whole_model_to_local_queue():
    queue = QueueState(q_loc=[0, 0], q_rsu=[0, 0], q_veh=[0.0])
    dec = Decision(phi=[TASK_A.n_layers + 1, TASK_B.n_layers + 1], xi=[1, 2],
                   f_rsu=[1.0, 1.0])
    a_loc, a_rsu, a_veh = arrivals(dec, [TASK_A, TASK_B], 2, 1)
    np.testing.assert_allclose(a_loc, [30.0, 40.0])
    assert a_rsu.sum() == 0 and a_veh.sum() == 0


def _random_case(rng):
    n_cv = rng.integers(1, 4)
    n_sv = rng.integers(1, 4)
    n_types = rng.integers(1, 3)
    tasks = []
    for _ in range(n_cv):
        n_layers = rng.integers(1, 5)
        works = rng.uniform(0.5, 20.0, n_layers)
        bits = rng.uniform(8.0, 800.0, n_layers)
        tasks.append(profile(int(rng.integers(n_types)), works, bits))
    queue = QueueState(q_loc=rng.uniform(0, 30, n_cv), q_rsu=rng.uniform(0, 30, n_types),
                       q_veh=rng.uniform(0, 30, n_sv))
    phi = np.array([rng.integers(1, t.n_layers + 2) for t in tasks])
    xi = rng.integers(1, n_sv + 2, n_cv)
    shares = rng.uniform(0.1, 1.0, n_types)
    f_rsu = shares / shares.sum() * rng.uniform(1.0, 20.0)
    dec = Decision(phi=phi, xi=xi, f_rsu=f_rsu)
    f_loc = rng.uniform(0.5, 10.0, n_cv)
    f_veh = rng.uniform(0.5, 10.0, n_sv)
    rates_rsu = rng.uniform(1.0, 100.0, n_cv)
    rates_sv = rng.uniform(1.0, 100.0, (n_cv, n_sv))
    return tasks, queue, dec, f_loc, f_veh, rates_rsu, rates_sv, n_types, n_sv


def _naive_delays(tasks, queue, dec, f_loc, f_veh, rates_rsu, rates_sv):
    """Straight-line re-evaluation of the delay definitions, no shared helpers."""
    out = []
    for i, t in enumerate(tasks):
        L = t.n_layers
        phi, xi = int(dec.phi[i]), int(dec.xi[i])
        local = 0.0 if phi == 1 else (queue.q_loc[i] + t.prefix[phi - 1]) / f_loc[i]
        tra = pro = wait = 0.0
        if phi != L + 1:
            remote = t.prefix[-1] - t.prefix[phi - 1]
            if xi == 1:
                k = t.type_id
                tra = t.tx_bits[phi - 1] / rates_rsu[i]
                pro = (queue.q_rsu[k] + remote) / dec.f_rsu[k]
                s = 0.0
                for ip, o in enumerate(tasks):
                    if ip != i and o.type_id == k and dec.xi[ip] == 1 \
                            and dec.phi[ip] != o.n_layers + 1:
                        s += o.prefix[-1] - o.prefix[dec.phi[ip] - 1]
                wait = s / (2 * dec.f_rsu[k])
            else:
                j = xi - 2
                tra = t.tx_bits[phi - 1] / rates_sv[i, j]
                pro = (queue.q_veh[j] + remote) / f_veh[j]
                s = 0.0
                for ip, o in enumerate(tasks):
                    if ip != i and dec.xi[ip] == xi and dec.phi[ip] != o.n_layers + 1:
                        s += o.prefix[-1] - o.prefix[dec.phi[ip] - 1]
                wait = s / (2 * f_veh[j])
        out.append(local + tra + pro + wait)
    return np.array(out)


def test_slot_delays_matches_naive_reimplementation():
    rng = np.random.default_rng(123)
    for _ in range(200):
        tasks, queue, dec, f_loc, f_veh, rr, rs, _, _ = _random_case(rng)
        got = slot_delays(queue, dec, rr, rs, tasks, f_loc, f_veh).d_total
        np.testing.assert_allclose(got, _naive_delays(tasks, queue, dec, f_loc, f_veh, rr, rs),
                                   rtol=1e-12)


def test_queue_invariants_under_fuzzing():
    rng = np.random.default_rng(456)
    for _ in range(300):
        tasks, queue, dec, f_loc, f_veh, _, _, n_types, n_sv = _random_case(rng)
        tau = float(rng.uniform(0.1, 2.0))
        nxt = update_queues(queue, dec, tasks, f_loc, f_veh, tau)
        assert (nxt.q_loc >= 0).all() and (nxt.q_rsu >= 0).all() and (nxt.q_veh >= 0).all()
        a_loc, a_rsu, a_veh = arrivals(dec, tasks, n_types, n_sv)
        # Work placement: one slot's arrivals equal the assigned work.
        assigned = sum(t.local_work(int(dec.phi[i]))
                       + (t.remote_work(int(dec.phi[i]))
                          if dec.phi[i] != t.n_layers + 1 else 0.0)
                       for i, t in enumerate(tasks))
        assert a_loc.sum() + a_rsu.sum() + a_veh.sum() == pytest.approx(assigned)
        # Conservation when no clamp bites.
        if (queue.q_loc - f_loc * tau + a_loc >= 0).all():
            np.testing.assert_allclose(nxt.q_loc - queue.q_loc, a_loc - f_loc * tau)
        # Edge exclusivity: each CV's remote work lands in exactly one place.
        for i, t in enumerate(tasks):
            if dec.phi[i] == t.n_layers + 1:
                continue
            remote = t.remote_work(int(dec.phi[i]))
            if remote == 0:
                continue
            landed = (a_rsu[t.type_id] if dec.xi[i] == 1 else a_veh[int(dec.xi[i]) - 2])
            assert landed >= remote - 1e-12


def test_validate_decision_catches_violations():
    queue = hand_state()
    tasks = [TASK_A, TASK_B]
    good = hand_decision()
    validate_decision(good, tasks, 2, 1, f_rsu_max=5.0)
    with pytest.raises(ValueError):
        validate_decision(Decision(phi=[0, 1], xi=[1, 1], f_rsu=[1.0, 1.0]),
                          tasks, 2, 1, 5.0)
    with pytest.raises(ValueError):
        validate_decision(Decision(phi=[1, 1], xi=[3, 1], f_rsu=[1.0, 1.0]),
                          tasks, 2, 1, 5.0)
    with pytest.raises(ValueError):
        validate_decision(Decision(phi=[1, 1], xi=[1, 1], f_rsu=[4.0, 4.0]),
                          tasks, 2, 1, 5.0)


def test_task_profile_from_model_scales_units():
    model = DnnModel.build(0, [ConvPool(1, 1, 4, 1, 1), FullyConnected(3, 4)], rho=4)
    t = TaskProfile.from_model(model, workload_unit=10.0)
    np.testing.assert_allclose(t.prefix, [0.0, 1.0, 3.0])
    np.testing.assert_allclose(t.tx_bits, [8.0 * 16, 8.0 * 12])
    assert t.local_work(2) == pytest.approx(1.0)
    assert t.remote_work(2) == pytest.approx(2.0)
