"""How coarser observations change the interface gap and the value-gap bound."""

from icsmdp.ais import make_retention_map
from icsmdp.envs import build_synthetic
from icsmdp.oracle import ais_smdp, ais_value_gap_check, exact_latent_smdp


def main() -> None:
    env = build_synthetic(n_agents=2, card_latent=3, card_interface=6, horizon=50,
                          p_handoff=0.4, gamma=0.8, kernel_seed=0, reward_seed=0)
    lat = exact_latent_smdp(env, tau_max=30)
    print(" rho   eps    delta  |V_lat - V_obs|  bound")
    for rho in (1.0, 0.67, 0.5, 0.3, 0.1):
        maps = [make_retention_map(6, rho, i) for i in range(env.n_agents)]
        res = ais_value_gap_check(lat, ais_smdp(lat, maps), maps)
        print(f"{rho:4.2f}  {res.eps:.3f}  {res.delta:.3f}  {res.lhs:14.3f}  {res.rhs:.3f}")


if __name__ == "__main__":
    main()
