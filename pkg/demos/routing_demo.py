"""Learn packet routing on a small random graph and print a few greedy routes."""

from icsmdp.envs import build_routing
from icsmdp.envs.routing import greedy_route
from icsmdp.learner import LearnerConfig, greedy_tables, train


def main() -> None:
    env = build_routing(family="watts-strogatz", n_agents=20, gamma=0.9, seed=1)
    cfg = LearnerConfig(gamma=0.9, schedule="constant", eta0=0.5, eps_min=0.05, q_init=1.0,
                        budget=40_000, seed=0)
    tables = greedy_tables(train(env, env.maps, cfg))
    dist = env.all_distances()
    for s, d in ((0, 10), (3, 17), (12, 5)):
        path = greedy_route(env, tables, s, d)
        print(f"{s} -> {d}: {path} (shortest {dist[s, d]} hops)")


if __name__ == "__main__":
    main()
