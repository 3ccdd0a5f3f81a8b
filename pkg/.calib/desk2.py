import dataclasses, sys, time
import numpy as np
from desk import desk_config, eval_policy
from cellsleep.config import PpoConfig
from cellsleep.marl.trainer import train
from cellsleep.policies import MappoPolicy

def run(seed, actor_lr, critic_lr, episodes=30, peak=120.0, entropy=0.01):
    cfg = desk_config(seed=seed, peak=peak, episodes=episodes)
    cfg = dataclasses.replace(cfg, ppo=PpoConfig(
        episodes=episodes, hidden_sizes=(64, 64),
        actor_lr=actor_lr, critic_lr=critic_lr, entropy_coeff=entropy))
    rows = []
    result = train(cfg, variant="full", progress=rows.append)
    last = rows[-1]
    r = eval_policy(cfg, MappoPolicy(result.actor), episodes=2)
    print(f"seed={seed} lr={actor_lr} ent={entropy}: train_pc={last['pc_w']:.1f} "
          f"train_drop={last['drop_ratio']:.4f} H={last['entropy']:.2f} | "
          f"greedy trough={r['trough_pc_w']:.1f} avg={r['avg_pc_w']:.1f} drop={r['drop_ratio']:.4f}", flush=True)
    return cfg, result

if __name__ == "__main__":
    run(0, 3e-3, 2.5e-3)
