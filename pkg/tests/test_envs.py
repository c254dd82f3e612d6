import numpy as np
import pytest

from icsmdp.core import STOP, ConfigError, JointAction
from icsmdp.envs import build_cpu, build_routing, build_synthetic
from icsmdp.envs.cpu import ALU, LOAD_A, LOAD_B, SELECT, STARTER, WRITER, reachable_outputs
from icsmdp.envs.routing import FAMILIES, greedy_route
from icsmdp.learner import LearnerConfig, greedy_tables, train
from icsmdp.rollout import UniformBehavior, iter_epochs


# -- routing ---------------------------------------------------------------------

def test_chain_distances_and_optimal_return():
    env = build_routing(family="chain", n_agents=4, step_cost=0.01)
    assert env.bfs_distances(0).tolist() == [0, 1, 2, 3]
    assert env.optimal_return(0, 3) == pytest.approx(1 - 3 * 0.01)
    assert np.array_equal(env.all_distances(), np.abs(np.subtract.outer(range(4), range(4))))


def test_trained_chain_route_is_the_path():
    env = build_routing(family="chain", n_agents=4, gamma=0.9)
    cfg = LearnerConfig(gamma=0.9, schedule="constant", eta0=0.5, q_init=1.0, eps_min=0.05,
                        budget=3000, seed=0)
    tables = greedy_tables(train(env, env.maps, cfg))
    assert greedy_route(env, tables, 0, 3) == [0, 1, 2, 3]
    assert greedy_route(env, tables, 3, 0) == [3, 2, 1, 0]


@pytest.mark.parametrize("family", FAMILIES)
def test_admissible_sets_follow_the_graph(family):
    env = build_routing(family=family, n_agents=12, seed=1)
    for loc in range(12):
        for dest in range(12):
            succ = env.admissible_successors(env.encode(loc, dest))
            nodes = set(c for c in succ if c != STOP)
            assert nodes == set(env.graph.neighbors(loc)) | {loc}
            assert (STOP in succ) == (loc == dest)


def test_routing_rejects_bad_specs():
    with pytest.raises(ConfigError):
        build_routing(family="hypercube")
    with pytest.raises(ConfigError):
        build_routing(n_agents=1)


def test_routing_graphs_are_seeded_and_connected(tmp_path):
    a = build_routing(family="erdos-renyi", n_agents=30, seed=4)
    b = build_routing(family="erdos-renyi", n_agents=30, seed=4)
    assert sorted(a.graph.edges()) == sorted(b.graph.edges())
    a.write_edge_list(tmp_path / "g.txt")
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert len(lines) == a.graph.number_of_edges()
    assert all(len(line.split()) == 2 for line in lines)


def test_routing_observation_ignores_location():
    env = build_routing(family="chain", n_agents=5)
    mp = env.maps[2]
    assert mp(env.encode(2, 4)) == mp(env.encode(0, 4))
    assert mp(env.encode(2, 4, 1)) != mp(env.encode(2, 4, 0))


# -- CPU ---------------------------------------------------------------------------

def _run(env, state, steps):
    total = 0.0
    rng = np.random.default_rng(0)
    for local, succ in steps:
        out = env.step(state, JointAction(local, succ), rng)
        total += out.reward
        state = out.next
    return state, total


def test_add_program_trace():
    env = build_cpu(n_values=10, step_cost=0.01)
    s = env.start(2, 3, 5)
    program = [(0, LOAD_A), (0, LOAD_B), (0, ALU), (0, SELECT), (2, WRITER), (0, STOP)]
    assert s.active == STARTER
    end, total = _run(env, s, program)
    f = env.decode(end.interface)
    assert (f["A"], f["B"], f["C"], f["out"]) == (2, 3, 5, 5)
    assert end.done and total == pytest.approx(1.0 - 6 * 0.01)


def test_operand_shortcut_and_wrong_output():
    env = build_cpu(n_values=10, step_cost=0.01)
    # target equals an operand: load it, select A, commit
    end, total = _run(env, env.start(4, 7, 4),
                      [(0, LOAD_A), (0, SELECT), (0, WRITER), (0, STOP)])
    assert env.decode(end.interface)["out"] == 4 and total == pytest.approx(1 - 4 * 0.01)
    end, total = _run(env, env.start(4, 7, 3), [(0, LOAD_A), (0, SELECT), (0, WRITER), (0, STOP)])
    assert total == pytest.approx(-4 * 0.01)


def test_only_writer_may_stop_and_roles_alternate():
    env = build_cpu()
    for holder in range(6):
        m = env.encode(**{**env.decode(env.start(1, 2, 3).interface), "holder": holder})
        succ = env.admissible_successors(m)
        assert holder not in succ
        assert (STOP in succ) == (holder == WRITER)


def _brute_reachable(a, b, V, depth):
    """Values an ALU chain of at most ``depth`` operations can produce from a and b,
    where each operation reads the loaded operands (the only ALU inputs)."""
    from icsmdp.envs.cpu import apply_op
    outs = {a, b}
    for op in range(4):
        r = apply_op(op, a, b, V)
        if r is not None:
            outs.add(r)
    return outs


@pytest.mark.parametrize("a,b", [(a, b) for a in range(10) for b in range(10)])
def test_reachable_outputs_match_enumeration(a, b):
    assert reachable_outputs(a, b, 10, depth=8) == _brute_reachable(a, b, 10, 8)


def test_heldout_split_draws_out_of_range_operands():
    env = build_cpu(n_values=50, train_fraction=0.2, split="heldout")
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b, t = env.draw_task(rng)
        assert max(a, b) >= env.spec.cutoff and 0 <= t < 50
    env = build_cpu(n_values=50, train_fraction=0.2, split="train")
    assert all(max(env.draw_task(rng)[:2]) < 10 for _ in range(200))
    with pytest.raises(ConfigError):
        build_cpu(train_fraction=1.0, split="heldout")


def test_cpu_observation_depends_on_target_relation_only():
    env = build_cpu(n_values=50)
    f = env.decode(env.start(3, 4, 7).interface)
    g = env.decode(env.start(30, 40, 70 - 63).interface)
    for agent in (LOAD_A, LOAD_B, SELECT, WRITER):
        assert env.maps[agent](env.encode(**f)) == env.maps[agent](env.encode(**g))


# -- synthetic ----------------------------------------------------------------------

@pytest.mark.parametrize("p", [0.1, 0.3, 0.55])
def test_invocation_lengths_are_geometric(p):
    env = build_synthetic(n_agents=3, card_latent=10, card_interface=10, horizon=2000,
                          p_handoff=p)
    rng = np.random.default_rng(0)
    durs = np.array([s.duration for s in iter_epochs(env, UniformBehavior(), rng, n_episodes=200)
                     if s.next_interface >= 0 or s.successor == STOP])
    se = durs.std(ddof=1) / np.sqrt(len(durs))
    assert abs(durs.mean() - 1 / p) <= 4 * se


def test_synthetic_is_bitwise_reproducible():
    a = build_synthetic(kernel_seed=5, reward_seed=6)
    b = build_synthetic(kernel_seed=5, reward_seed=6)
    assert np.array_equal(a.rewards, b.rewards) and np.array_equal(a.k_idx, b.k_idx)
    assert np.array_equal(a.k_p, b.k_p) and np.array_equal(a.g_p, b.g_p)
    ra, rb = np.random.default_rng(9), np.random.default_rng(9)
    sa, sb = a.reset(ra), b.reset(rb)
    for _ in range(50):
        if sa.done:
            break
        oa = a.step(sa, JointAction(a.internal_action(sa, ra), sa.active), ra)
        ob = b.step(sb, JointAction(b.internal_action(sb, rb), sb.active), rb)
        assert oa.reward == ob.reward and oa.next == ob.next
        sa, sb = oa.next, ob.next


def test_synthetic_kernels_are_stochastic():
    env = build_synthetic(n_agents=3, card_latent=10, card_interface=10)
    for i in range(3):
        T = env.step_kernel(i)
        assert np.allclose(T.sum(axis=1), 1.0)


def test_synthetic_rejects_out_of_range_knobs():
    with pytest.raises(ConfigError):
        build_synthetic(rho=0.0)
    with pytest.raises(ConfigError):
        build_synthetic(p_handoff=0.9)


def test_retention_changes_observation_cardinality():
    assert build_synthetic(card_interface=50, rho=0.3).maps[0].card_obs == 15
    assert build_synthetic(card_interface=50).maps[0].card_obs == 50
