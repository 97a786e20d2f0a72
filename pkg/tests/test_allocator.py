import math

import numpy as np
import pytest

from vecsched.allocator import (AllocProblem, alloc_objective, allocate,
                                complete_decision, gamma_k, gamma_vector)
from vecsched.queueing import Decision, QueueState

from test_queueing import profile


def test_gamma_empty_set_and_zero_queue():
    t = profile(0, [5.0], [8.0])
    queue = QueueState(q_loc=[0.0], q_rsu=[0.0], q_veh=[0.0])
    dec = Decision(phi=[2], xi=[1], f_rsu=[1.0])  # full local: no offloaders
    assert gamma_k(queue, dec, [t], v=4.0, k=0) == 0.0


def test_gamma_single_offloader():
    t = profile(0, [5.0, 7.0], [8.0, 8.0])
    queue = QueueState(q_loc=[0.0], q_rsu=[0.0], q_veh=[])
    dec = Decision(phi=[2], xi=[1], f_rsu=[1.0])  # remote work = 7
    assert gamma_k(queue, dec, [t], v=4.0, k=0) == pytest.approx(4.0 * 7.0)


def test_gamma_two_equal_offloaders_is_three_vw():
    w = 6.0
    tasks = [profile(0, [w], [8.0]), profile(0, [w], [8.0])]
    queue = QueueState(q_loc=[0, 0], q_rsu=[0.0], q_veh=[])
    dec = Decision(phi=[1, 1], xi=[1, 1], f_rsu=[1.0])
    assert gamma_k(queue, dec, tasks, v=2.0, k=0) == pytest.approx(3.0 * 2.0 * w)


def test_gamma_includes_backlog_term():
    t = profile(0, [5.0], [8.0])
    queue = QueueState(q_loc=[0.0], q_rsu=[9.0], q_veh=[])
    dec = Decision(phi=[2], xi=[1], f_rsu=[1.0])  # full local
    assert gamma_k(queue, dec, [t], v=4.0, k=0) == pytest.approx(4.0 * 9.0)


def test_allocate_single_type_closed_form():
    problem = AllocProblem(gamma=[1.0], q_rsu=[0.0], tau=1.0, f_max=1.0)
    f, eta = allocate(problem)
    assert f[0] == pytest.approx(1.0, rel=1e-9)
    assert eta == pytest.approx(1.0, rel=1e-6)  # eta = Gamma/f_max^2 + Q*tau


def test_allocate_symmetric_split():
    problem = AllocProblem(gamma=[4.0, 4.0], q_rsu=[2.0, 2.0], tau=0.5, f_max=8.0)
    f, _ = allocate(problem)
    np.testing.assert_allclose(f, [4.0, 4.0], rtol=1e-8)


def test_allocate_all_gamma_zero_uniform():
    problem = AllocProblem(gamma=[0.0, 0.0, 0.0], q_rsu=[0.0, 0.0, 0.0], tau=1.0, f_max=9.0)
    f, eta = allocate(problem)
    np.testing.assert_allclose(f, [3.0, 3.0, 3.0])
    assert eta is None


def test_allocate_zero_gamma_type_gets_nothing():
    problem = AllocProblem(gamma=[5.0, 0.0], q_rsu=[1.0, 0.0], tau=1.0, f_max=4.0)
    f, _ = allocate(problem)
    assert f[1] == 0.0
    assert f[0] == pytest.approx(4.0, rel=1e-9)


def test_alloc_objective_cases():
    problem = AllocProblem(gamma=[1.0], q_rsu=[0.0], tau=1.0, f_max=1.0)
    assert alloc_objective([1.0], problem) == pytest.approx(1.0)
    assert alloc_objective([0.0], problem) == math.inf
    zero = AllocProblem(gamma=[0.0], q_rsu=[2.0], tau=1.0, f_max=1.0)
    assert alloc_objective([0.5], zero) == pytest.approx(-1.0)


def test_alloc_objective_homogeneity():
    problem = AllocProblem(gamma=[3.0, 5.0], q_rsu=[0.0, 0.0], tau=1.0, f_max=10.0)
    f = np.array([2.0, 4.0])
    c = 2.0
    first_term = 3.0 / 2.0 + 5.0 / 4.0
    assert alloc_objective(f * c, problem) == pytest.approx(first_term / c)


def _grid_minimum(problem: AllocProblem, total_points: int = 10_000) -> float:
    """Brute-force oracle: evaluate the objective on a feasible grid."""
    k = len(problem.gamma)
    per_axis = max(2, int(round(total_points ** (1.0 / k))))
    axis = np.linspace(1e-9 * problem.f_max, problem.f_max, per_axis)
    grids = np.meshgrid(*([axis] * k), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    points = points[points.sum(axis=1) <= problem.f_max * (1 + 1e-12)]
    best = math.inf
    for p in points:
        best = min(best, alloc_objective(p, problem))
    return best


def _random_problem(rng, k):
    gamma = rng.uniform(0.1, 50.0, k)
    q = rng.uniform(0.0, 20.0, k)
    if k > 1 and rng.random() < 0.3:
        gamma[rng.integers(k)] = 0.0
        q[gamma == 0.0] = 0.0
    return AllocProblem(gamma=gamma, q_rsu=q, tau=float(rng.uniform(0.2, 2.0)),
                        f_max=float(rng.uniform(1.0, 40.0)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_allocate_beats_grid_oracle(k):
    rng = np.random.default_rng(2024 + k)
    for _ in range(25):
        problem = _random_problem(rng, k)
        f, _ = allocate(problem)
        ours = alloc_objective(f, problem)
        grid = _grid_minimum(problem)
        assert ours <= grid + 1e-3 * abs(grid) + 1e-9


def test_allocate_feasibility_and_kkt_residual():
    rng = np.random.default_rng(77)
    for _ in range(200):
        k = int(rng.integers(1, 5))
        problem = _random_problem(rng, k)
        f, eta = allocate(problem)
        assert (f >= 0).all() and (f <= problem.f_max * (1 + 1e-9)).all()
        if (problem.gamma > 0).any():
            assert abs(f.sum() - problem.f_max) <= 1e-9 * problem.f_max
            assert eta is not None and eta > (problem.q_rsu * problem.tau).max()
            # Convexity witness at the returned point.
            active = problem.gamma > 0
            assert (f[active] > 0).all()
            assert (2 * problem.gamma[active] / f[active] ** 3 > 0).all()


def test_allocate_monotone_in_gamma():
    rng = np.random.default_rng(5)
    for _ in range(50):
        problem = _random_problem(rng, 3)
        f0, _ = allocate(problem)
        bumped = AllocProblem(gamma=problem.gamma + np.array([problem.gamma[0] + 1.0, 0, 0]),
                              q_rsu=problem.q_rsu, tau=problem.tau, f_max=problem.f_max)
        f1, _ = allocate(bumped)
        assert f1[0] >= f0[0] - 1e-9


def test_problem_validation():
    with pytest.raises(ValueError):
        AllocProblem(gamma=[1.0], q_rsu=[0.0], tau=1.0, f_max=0.0)
    with pytest.raises(ValueError):
        AllocProblem(gamma=[-1.0], q_rsu=[0.0], tau=1.0, f_max=1.0)
    with pytest.raises(ValueError):
        AllocProblem(gamma=[np.inf], q_rsu=[0.0], tau=1.0, f_max=1.0)


def test_complete_decision_is_feasible():
    tasks = [profile(0, [5.0, 4.0], [8.0, 8.0]), profile(1, [6.0], [8.0])]
    queue = QueueState(q_loc=[0, 0], q_rsu=[1.0, 0.0], q_veh=[0.0])
    dec = complete_decision(queue, np.array([1, 1]), np.array([1, 2]), tasks,
                            v=10.0, tau=1.0, f_max=12.0)
    assert dec.f_rsu.sum() <= 12.0 * (1 + 1e-9)
    assert dec.f_rsu[0] == pytest.approx(12.0, rel=1e-9)  # only type 0 offloads
    assert dec.f_rsu[1] == 0.0
