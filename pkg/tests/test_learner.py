import numpy as np
import pytest

from icsmdp.ais import identity_map, make_retention_map
from icsmdp.core import (STOP, ConfigError, DomainError, EnvConfig, Environment, JointState,
                         make_streams)
from icsmdp.diagnostics import evaluate_policy
from icsmdp.envs import build_cpu, build_routing, build_synthetic
from icsmdp.estimators import DivergenceError, TabularQ
from icsmdp.learner import (HandoffMessage, LearnerConfig, bellman_target, compute_bootstrap,
                            greedy, greedy_tables, load_checkpoint, make_learners,
                            run_episode, save_checkpoint, select_successor,
                            inverse_step_size, train, update_q, write_transitions_csv)
from icsmdp.oracle import exact_latent_smdp, smdp_value_iteration


def _q(values):
    q = TabularQ(1, len(values))
    q.table[0] = values
    return q


def test_select_successor_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_successor(_q([2.0, 5.0, 1.0]), 0, (0, 1, 2), 0.0, rng) == 1
    assert select_successor(_q([1.0, 1.0, 1.0]), 0, (0, 1, 2), 0.0, rng) == 0
    # STOP is stored last and loses ties
    assert greedy(np.array([0.0, 1.0, 1.0]), (1, STOP)) == 1
    with pytest.raises(DomainError):
        select_successor(_q([1.0]), 0, (), 0.0, rng)


def test_select_successor_uniform_at_epsilon_one():
    rng = np.random.default_rng(1)
    n = 100_000
    draws = np.array([select_successor(_q([0.0, 9.0, 0.0]), 0, (0, 1, 2), 1.0, rng)
                      for _ in range(n)])
    counts = np.bincount(draws, minlength=3)
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - n / 3) <= 3 * sigma)


def test_bootstrap():
    assert compute_bootstrap(_q([1.0, 2.0]), None, (0, 1)) == 0.0
    assert compute_bootstrap(_q([-1.0, 3.5]), 0, (0, 1)) == 3.5
    q = _q([4.0, -2.0, 7.0])
    assert compute_bootstrap(q, 0, (0, 1)) == max(q.table[0, 0], q.table[0, 1])


def test_bellman_target():
    assert bellman_target(HandoffMessage(2.0, 2, 1.0), 0.9) == pytest.approx(2.62)
    assert bellman_target(HandoffMessage(5.0, 1, 0.0), 0.7) == pytest.approx(3.5)
    assert bellman_target(HandoffMessage(0.0, 4, 1.25), 0.9) == 1.25


def test_update_q():
    q = update_q(TabularQ(1, 1), 0, 0, 1.0, 0.25)
    assert q.evaluate(0, 0) == pytest.approx(0.5)
    q = update_q(_q([0.7]), 0, 0, 0.7, 0.3)
    assert q.evaluate(0, 0) == 0.7
    with pytest.raises(DivergenceError):
        update_q(TabularQ(1, 1), 0, 0, float("nan"), 0.1)
    with pytest.raises(DomainError):
        update_q(TabularQ(1, 1), 0, 0, 1.0, 0.0)


def test_inverse_step_size():
    assert inverse_step_size(0, 0.5, 1.0) == pytest.approx(1.0)
    assert inverse_step_size(9, 0.5, 1.0) == pytest.approx(0.1)
    s = [inverse_step_size(k, 0.3, 0.2) for k in range(50)]
    assert all(a > b for a, b in zip(s, s[1:]))
    with pytest.raises(DomainError):
        inverse_step_size(0, 0.0, 1.0)


def test_config_validation_and_schedules():
    with pytest.raises(ConfigError):
        LearnerConfig(schedule="cosine")
    with pytest.raises(ConfigError):
        LearnerConfig(schedule="inverse")
    with pytest.raises(ConfigError):
        LearnerConfig(eps_min=1.5)
    cfg = LearnerConfig(eps0=1.0, eps_min=0.05, budget=100)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(50) == pytest.approx(0.05)
    assert cfg.epsilon(99) == 0.05
    assert LearnerConfig(schedule="constant", eta0=0.3).step_size(1000) == 0.3
    assert LearnerConfig(eta0=0.5, k0=10).step_size(10) == pytest.approx(0.25)


class StuckEnv(Environment):
    """Two agents; the handoff gate never opens."""

    def __init__(self):
        self.config = EnvConfig(2, 1, 2, 7, 0.9).validate()
        self.r_max = 1.0
        self.maps = [identity_map(2, i) for i in range(2)]
        self.n_private = [1, 1]

    def _initial(self, rng):
        return JointState(0, 0, (0, 0), 0)

    def _transition(self, state, action, rng):
        return 1.0, 0, 1 - state.interface, 0

    def admissible_successors(self, interface):
        return (0, 1, STOP)

    def handoff_gate(self, state, rng):
        return False


def test_no_handoff_means_no_update():
    env = StuckEnv()
    cfg = LearnerConfig(gamma=0.9)
    learners = make_learners(env, env.maps, cfg)
    res = run_episode(env, env.maps, learners, cfg, np.random.default_rng(0), epsilon=1.0)
    assert res.steps == 7 and res.n_handoffs == 0 and res.n_beta_updates == 0
    assert all(np.all(t == 0) for t in greedy_tables(learners))
    assert res.ret == pytest.approx(sum(0.9 ** t for t in range(7)))


@pytest.mark.parametrize("env,adaptable", [(build_synthetic(), False),
                                           (build_routing(n_agents=10), False),
                                           (build_cpu(), True)])
def test_three_scalars_per_handoff(env, adaptable):
    cfg = LearnerConfig(gamma=env.gamma, adaptable=adaptable)
    learners = make_learners(env, env.maps, cfg)
    rng = np.random.default_rng(0)
    for _ in range(5):
        res = run_episode(env, env.maps, learners, cfg, rng, epsilon=0.5)
        assert res.n_scalars == 3 * res.n_handoffs
        assert res.n_beta_updates == res.n_handoffs


def test_transition_log(tmp_path):
    env = build_synthetic(n_agents=3, card_latent=10, card_interface=10)
    cfg = LearnerConfig(gamma=env.gamma)
    learners = make_learners(env, env.maps, cfg)
    res = run_episode(env, env.maps, learners, cfg, np.random.default_rng(0), log=True)
    assert len(res.transitions) == res.n_handoffs > 0
    for t in res.transitions:
        assert (t.successor_obs is None) == (t.successor == STOP)
        if t.successor == STOP:
            assert t.target == pytest.approx(t.option_reward)
        # tabular step with rate 2 * eta: q_after moves toward the target
        assert abs(t.q_after - t.target) <= abs(t.q_before - t.target) + 1e-12
    path = tmp_path / "log.csv"
    write_transitions_csv(path, res.transitions)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("k,predecessor,obs,successor")
    assert len(lines) == 1 + len(res.transitions)


def test_fast_loop_matches_generic_loop():
    env = build_synthetic(n_agents=3, card_latent=12, card_interface=8, p_handoff=0.4)
    maps = [make_retention_map(8, 0.5, i) for i in range(3)]
    for schedule in ("visit", "decay", "constant"):
        cfg = LearnerConfig(gamma=0.9, budget=60, schedule=schedule, seed=5)
        slow = greedy_tables(train(env, maps, cfg, fast=False))
        fast = greedy_tables(train(env, maps, cfg, fast=True))
        for a, b in zip(slow, fast):
            assert np.allclose(a, b, atol=1e-12)


def test_checkpoint_round_trip(tmp_path):
    env = build_cpu()
    cfg = LearnerConfig(gamma=env.gamma, adaptable=True, budget=5, backend="mlp", hidden=8)
    learners = train(env, env.maps, cfg)
    save_checkpoint(tmp_path / "ck.json", learners, cfg)
    loaded, cfg2 = load_checkpoint(tmp_path / "ck.json")
    assert cfg2 == cfg
    for a, b in zip(learners, loaded):
        assert np.array_equal(a.beta.greedy_table(), b.beta.greedy_table())
        assert np.array_equal(a.alpha.greedy_table(), b.alpha.greedy_table())
        assert a.n_beta_updates == b.n_beta_updates


def test_converged_greedy_return_matches_oracle_value():
    # directly observed interface: the latent SMDP is exact for the learner
    env = build_synthetic(n_agents=2, card_latent=1, card_interface=4, horizon=200,
                          p_handoff=0.55, gamma=0.3, emission_fidelity=0.3,
                          kernel_seed=3, reward_seed=3)
    maps = [identity_map(4, i) for i in range(2)]
    cfg = LearnerConfig(gamma=0.3, schedule="visit", eta0=0.5, k0=1, eps0=1.0, eps_min=1.0,
                        budget=150_000, seed=0)
    learners = train(env, maps, cfg)
    _, v = smdp_value_iteration(exact_latent_smdp(env, tau_max=40), 1e-12)[:2]
    # the first decision uses the starting observation, drawn uniformly
    expected = float(v.mean())
    mean, se = evaluate_policy(env, maps, learners, cfg, 20_000, make_streams(99))
    assert abs(mean - expected) <= 4 * se + 1e-2
