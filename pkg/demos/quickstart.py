"""Train decentralized Q-learners on a small synthetic task and compare with the exact optimum."""

import numpy as np

from icsmdp.ais import identity_map
from icsmdp.core import make_streams
from icsmdp.diagnostics import evaluate_policy
from icsmdp.envs import build_synthetic
from icsmdp.learner import LearnerConfig, train
from icsmdp.oracle import exact_latent_smdp, smdp_value_iteration


def main() -> None:
    env = build_synthetic(n_agents=2, card_latent=1, card_interface=4, horizon=200,
                          p_handoff=0.55, gamma=0.3, emission_fidelity=0.3,
                          kernel_seed=3, reward_seed=3)
    maps = [identity_map(4, i) for i in range(env.n_agents)]
    cfg = LearnerConfig(gamma=0.3, schedule="visit", eta0=0.5, k0=1, eps0=1.0, eps_min=1.0,
                        budget=150_000, seed=0)
    learners = train(env, maps, cfg)
    _, v, _ = smdp_value_iteration(exact_latent_smdp(env, tau_max=40))
    mean, se = evaluate_policy(env, maps, learners, cfg, 20_000, make_streams(1))
    print(f"optimal mean value  {v.mean():.4f}")
    print(f"learned greedy return {mean:.4f} +- {se:.4f}")
    for i, lr in enumerate(learners):
        print(f"agent {i} successor table:\n{np.round(lr.beta.table, 3)}")


if __name__ == "__main__":
    main()
