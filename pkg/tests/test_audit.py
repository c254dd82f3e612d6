import numpy as np
import pytest

from icsmdp.audit import AccessLog, AuditedEnvironment, StateView, audit_run
from icsmdp.core import JointState
from icsmdp.envs import build_cpu, build_routing, build_synthetic
from icsmdp.learner import LearnerConfig, make_learners


def test_views_log_forbidden_reads():
    log = AccessLog()
    view = StateView(JointState(7, 3, (10, 20), 1), log)
    assert view.interface == 3 and view.active == 1
    assert log.latent_reads == 0
    assert view.privates[1] == 20 and log.own_private_reads == 1
    assert view.latent == 7 and log.latent_reads == 1
    assert view.privates[0] == 10 and log.foreign_private_reads == 1


def test_audited_env_hands_out_views():
    env = AuditedEnvironment(build_synthetic())
    s = env.reset(np.random.default_rng(0))
    assert isinstance(s, StateView)
    assert env.n_agents == 10


def _cases():
    return [(build_synthetic(n_agents=3, card_latent=10, card_interface=10), False),
            (build_routing(n_agents=10), False),
            (build_cpu(), True)]


@pytest.mark.parametrize("k", range(3))
def test_learner_sends_three_scalars_and_reads_nothing_hidden(k):
    env, adaptable = _cases()[k]
    cfg = LearnerConfig(gamma=env.gamma, adaptable=adaptable)
    learners = make_learners(env, env.maps, cfg)
    rep = audit_run(env, env.maps, learners, cfg, np.random.default_rng(k), n_episodes=30)
    assert rep.handoffs > 0
    assert rep.message_fields == 3 and rep.scalars == 3 * rep.handoffs
    assert rep.latent_reads == 0 and rep.foreign_private_reads == 0
    assert rep.passed
