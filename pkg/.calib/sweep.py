import dataclasses, sys
import numpy as np
from desk import desk_config, eval_policy
from cellsleep.config import PpoConfig
from cellsleep.marl.trainer import train
from cellsleep.policies import MappoPolicy

def run(seed, actor_lr, critic_lr, epochs, entropy, episodes=30, peak=120.0):
    cfg = desk_config(seed=seed, peak=peak, episodes=episodes)
    cfg = dataclasses.replace(cfg, ppo=PpoConfig(
        episodes=episodes, hidden_sizes=(64, 64), epochs_per_episode=epochs,
        actor_lr=actor_lr, critic_lr=critic_lr, entropy_coeff=entropy))
    rows = []
    result = train(cfg, variant="full", progress=rows.append)
    last = rows[-1]
    g = eval_policy(cfg, MappoPolicy(result.actor), episodes=2)
    s = eval_policy(cfg, MappoPolicy(result.actor, greedy=False,
                                     rng=np.random.default_rng(99)), episodes=2)
    print(f"lr={actor_lr:g} ep={epochs} ent={entropy:g} seed={seed}: "
          f"H={last['entropy']:.2f} | greedy tr={g['trough_pc_w']:.0f} drop={g['drop_ratio']:.3f} "
          f"| sampled tr={s['trough_pc_w']:.0f} avg={s['avg_pc_w']:.0f} drop={s['drop_ratio']:.3f}", flush=True)

for params in [(1e-3, 5e-4, 25, 0.01), (3e-3, 2.5e-3, 25, 0.003),
               (1e-2, 5e-3, 10, 0.01), (3e-3, 2.5e-3, 10, 0.003)]:
    run(0, *params)
