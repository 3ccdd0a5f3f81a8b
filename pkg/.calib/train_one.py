import sys, time
import numpy as np
from desk import desk_config, eval_policy
from cellsleep.marl.trainer import train
from cellsleep.policies import MappoPolicy, AlwaysOn, AutoSm1

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
peak = float(sys.argv[2]) if len(sys.argv) > 2 else 120.0
episodes = int(sys.argv[3]) if len(sys.argv) > 3 else 30
cfg = desk_config(seed=seed, peak=peak, episodes=episodes)
t0 = time.perf_counter()
rows = []
def progress(row):
    rows.append(row)
    if row["episode"] % 5 == 0 or row["episode"] == episodes - 1:
        print(f"  ep {row['episode']:3d} reward {row['reward']:+.4f} "
              f"pc {row['pc_w']:7.2f} drop {row['drop_ratio'] if row['drop_ratio'] is not None else 0:.4f} "
              f"ent {row['entropy']:.3f} [{row['wall_clock_s']:.1f}s]", flush=True)
result = train(cfg, variant="full", progress=progress)
print(f"train wall clock: {time.perf_counter()-t0:.0f} s")
r = eval_policy(cfg, MappoPolicy(result.actor), episodes=2)
print(f"mappo seed {seed}: trough_pc={r['trough_pc_w']:.2f} avg_pc={r['avg_pc_w']:.2f} drop={r['drop_ratio']:.4f}")
