import itertools

import numpy as np
import pytest

from vecsched.allocator import complete_decision
from vecsched.baselines import (GeneticConfig, MlpAgent, genetic_optimize,
                                greedy_decide)
from vecsched.lyapunov import LyapunovParams, per_slot_objective
from vecsched.queueing import Decision, QueueState, slot_delays, validate_decision

from test_neural import fd_gradient
from test_queueing import profile


def test_greedy_picks_cheapest_transmit_layer():
    # Per-layer transmit sizes 100, 10, 50 bytes -> split at layer 2.
    task = profile(0, [5.0, 5.0, 5.0], [800.0, 80.0, 400.0])
    queue = QueueState(q_loc=[0.0], q_rsu=[0.0], q_veh=[0.0, 0.0])
    dec = greedy_decide(queue, [task], f_rsu_max=10.0, params=LyapunovParams(1.0, 1.0))
    assert dec.phi[0] == 2


def test_greedy_prefers_rsu_on_ties_then_lowest_sv():
    task = profile(0, [5.0], [8.0])
    queue = QueueState(q_loc=[0.0], q_rsu=[2.0], q_veh=[2.0, 2.0])
    dec = greedy_decide(queue, [task], 10.0, LyapunovParams(1.0, 1.0))
    assert dec.xi[0] == 1
    queue2 = QueueState(q_loc=[0.0], q_rsu=[5.0], q_veh=[1.0, 1.0])
    dec2 = greedy_decide(queue2, [task], 10.0, LyapunovParams(1.0, 1.0))
    assert dec2.xi[0] == 2


def test_greedy_never_full_local_and_is_deterministic():
    rng = np.random.default_rng(0)
    tasks = [profile(k % 2, rng.uniform(1, 9, 4), rng.uniform(8, 80, 4))
             for k in range(3)]
    queue = QueueState(q_loc=rng.uniform(0, 5, 3), q_rsu=rng.uniform(0, 5, 2),
                       q_veh=rng.uniform(0, 5, 2))
    params = LyapunovParams(4.0, 1.0)
    a = greedy_decide(queue, tasks, 12.0, params)
    b = greedy_decide(queue, tasks, 12.0, params)
    np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(a.xi, b.xi)
    np.testing.assert_array_equal(a.f_rsu, b.f_rsu)
    assert (a.phi <= np.array([t.n_layers for t in tasks])).all()


def _fitness_of(queue, decision, tasks, rates_rsu, rates_sv, f_loc, f_veh, params):
    delays = slot_delays(queue, decision, rates_rsu, rates_sv, tasks, f_loc, f_veh)
    return per_slot_objective(queue, decision, delays, params, tasks, f_loc, f_veh)


def _enumerate_optimum(queue, tasks, rates_rsu, rates_sv, f_loc, f_veh, f_max, params):
    """Brute-force oracle over the joint (phi, xi) space."""
    n_nodes = len(queue.q_veh) + 1
    axes = []
    for t in tasks:
        axes.append(list(itertools.product(range(1, t.n_layers + 2),
                                           range(1, n_nodes + 1))))
    best = (np.inf, None)
    for combo in itertools.product(*axes):
        phi = np.array([c[0] for c in combo])
        xi = np.array([c[1] for c in combo])
        dec = complete_decision(queue, phi, xi, tasks, params.v, params.tau, f_max)
        fit = _fitness_of(queue, dec, tasks, rates_rsu, rates_sv, f_loc, f_veh, params)
        if fit < best[0]:
            best = (fit, dec)
    return best


def _random_small_instance(rng, max_joint=512):
    while True:
        n_cv = int(rng.integers(1, 4))
        n_sv = int(rng.integers(0, 3))
        n_types = int(rng.integers(1, 3))
        tasks = []
        joint = 1
        for _ in range(n_cv):
            n_layers = int(rng.integers(1, 4))
            tasks.append(profile(int(rng.integers(n_types)),
                                 rng.uniform(0.5, 9, n_layers),
                                 rng.uniform(8, 80, n_layers)))
            joint *= (n_layers + 1) * (n_sv + 1)
        if joint <= max_joint:
            break
    queue = QueueState(q_loc=rng.uniform(0, 9, n_cv), q_rsu=rng.uniform(0, 9, n_types),
                       q_veh=rng.uniform(0, 9, n_sv))
    rates_rsu = rng.uniform(5, 50, n_cv)
    rates_sv = rng.uniform(5, 50, (n_cv, n_sv))
    f_loc = rng.uniform(1, 8, n_cv)
    f_veh = rng.uniform(1, 8, n_sv)
    f_max = float(rng.uniform(2, 20))
    params = LyapunovParams(v=float(rng.uniform(0.5, 20)), tau=1.0)
    return queue, tasks, rates_rsu, rates_sv, f_loc, f_veh, f_max, params


def test_genetic_matches_enumeration_on_tiny_instance():
    rng = np.random.default_rng(1)
    queue, tasks, rr, rs, f_loc, f_veh, f_max, params = _random_small_instance(rng, 64)
    cfg = GeneticConfig(population=64, generations=2, elitism=2)
    dec = genetic_optimize(queue, tasks, rr, rs, f_loc, f_veh, f_max, params, cfg,
                           np.random.default_rng(2))
    got = _fitness_of(queue, dec, tasks, rr, rs, f_loc, f_veh, params)
    want, _ = _enumerate_optimum(queue, tasks, rr, rs, f_loc, f_veh, f_max, params)
    assert got == pytest.approx(want, abs=0.0)


def test_genetic_without_variation_keeps_best_constant():
    rng = np.random.default_rng(3)
    queue, tasks, rr, rs, f_loc, f_veh, f_max, params = _random_small_instance(rng, 128)
    cfg = GeneticConfig(population=16, generations=5, crossover_prob=0.0,
                        mutation_prob=0.0, elitism=2)
    history: list[float] = []
    dec = genetic_optimize(queue, tasks, rr, rs, f_loc, f_veh, f_max, params, cfg,
                           np.random.default_rng(4), history=history)
    assert len(history) == 6  # init + one entry per generation
    assert all(a == b for a, b in zip(history[1:], history[2:]))


def test_genetic_best_fitness_never_increases():
    rng = np.random.default_rng(5)
    for trial in range(5):
        queue, tasks, rr, rs, f_loc, f_veh, f_max, params = _random_small_instance(rng, 512)
        cfg = GeneticConfig(population=12, generations=8, elitism=2)
        history: list[float] = []
        genetic_optimize(queue, tasks, rr, rs, f_loc, f_veh, f_max, params, cfg,
                         np.random.default_rng(trial), history=history)
        assert all(a >= b for a, b in zip(history, history[1:]))


def test_genetic_decisions_always_feasible_under_fuzzing():
    rng = np.random.default_rng(6)
    for trial in range(10):
        queue, tasks, rr, rs, f_loc, f_veh, f_max, params = _random_small_instance(rng)
        cfg = GeneticConfig(population=8, generations=3)
        dec = genetic_optimize(queue, tasks, rr, rs, f_loc, f_veh, f_max, params, cfg,
                               np.random.default_rng(100 + trial))
        validate_decision(dec, tasks, len(queue.q_rsu), len(queue.q_veh), f_max)
        gdec = greedy_decide(queue, tasks, f_max, params)
        validate_decision(gdec, tasks, len(queue.q_rsu), len(queue.q_veh), f_max)


def test_genetic_config_validation():
    with pytest.raises(ValueError):
        GeneticConfig(population=1)
    with pytest.raises(ValueError):
        GeneticConfig(crossover_prob=1.5)
    with pytest.raises(ValueError):
        GeneticConfig(elitism=50, population=10)


def test_mlp_agent_zero_net_ties_to_action_zero():
    from vecsched.diffusion_policy import select_action

    agent = MlpAgent(3, 5, (8,), np.random.default_rng(0))
    for p in agent.parameters():
        p[:] = 0.0
    q = agent.q_values(np.ones(3), np.random.default_rng(1))
    np.testing.assert_array_equal(q, np.zeros(5))
    assert select_action(q) == 0


def test_mlp_agent_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    agent = MlpAgent(4, 3, (6, 6), rng)
    states = rng.standard_normal((5, 4))
    q, trace = agent.q_values_trace(states, rng)
    u = rng.standard_normal(q.shape)
    analytic = agent.backward(trace, u)

    def scalar():
        return float(np.sum(agent.q_values_trace(states, rng)[0] * u))

    numeric = fd_gradient(scalar, agent.parameters())
    for a, n in zip(analytic, numeric):
        np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-7)


def test_mlp_and_diffusion_share_trainer_plumbing():
    from vecsched.diffusion_policy import DiffusionAgent, build_schedule
    from vecsched.qmix import QmixTrainer, TrainerConfig, Transition

    cfg = TrainerConfig(batch_size=2, buffer_capacity=8, agent_hidden=(8,),
                        hyper_hidden=(8,), embed_dim=2)
    rng = np.random.default_rng(0)
    sched = build_schedule(cfg.denoise_steps, cfg.beta_min, cfg.beta_max)
    for agent in (MlpAgent(2, 3, cfg.agent_hidden, rng),
                  DiffusionAgent(2, 3, sched, cfg.agent_hidden, rng)):
        trainer = QmixTrainer([agent], 2, cfg, np.random.default_rng(1))
        s = np.zeros((1, 2))
        for _ in range(4):
            trainer.push(Transition(states=s, actions=np.array([1]), reward=0.5,
                                    next_states=s))
        loss = trainer.train_step()
        assert np.isfinite(loss)
