"""Calibration harness for the desk-scale trend experiment."""
import dataclasses, time, sys
import numpy as np
from cellsleep.config import ExperimentConfig, PpoConfig, TrafficConfig, TopologyConfig
from cellsleep.env import NetworkEnv
from cellsleep.policies import AlwaysOn, AutoSm1, MappoPolicy
from cellsleep.marl.trainer import train, episode_seed
from cellsleep.cli import traffic_hour_ranks

def desk_config(seed=0, peak=120.0, episodes=30):
    return ExperimentConfig(
        topology=TopologyConfig(num_bs=7),
        traffic=TrafficConfig(peak_total_mbps_km2=peak),
        ppo=PpoConfig(episodes=episodes, hidden_sizes=(64, 64)),
        episode_s=60.0,
        seed=seed,
    )

def eval_policy(cfg, policy, episodes, seed_base=10_000):
    """Paired-seed evaluation; returns trough/overall PC and drop ratio."""
    low_hours, _ = traffic_hour_ranks(cfg)
    low = set(low_hours)
    env = NetworkEnv(cfg)
    interval_s = cfg.agent_interval_ms * 1e-3
    trough_e = trough_t = 0.0
    dropped = offered = 0.0
    energy = t_all = 0.0
    for ep in range(episodes):
        obs = env.reset(seed=episode_seed(cfg.seed + seed_base, ep))
        for step in range(env.agent_steps_per_episode):
            action = policy.act(obs, env.policy_info())
            obs, _, rec = env.step(action)
            if env.diurnal_hour(step * interval_s) in low:
                trough_e += rec["pc_w"] * interval_s
                trough_t += interval_s
        m = env.metrics()
        dropped += m["dropped_bits"]; offered += m["offered_bits"]
        energy += m["energy_j"]; t_all += m["time_s"]
    return {
        "trough_pc_w": trough_e / trough_t,
        "avg_pc_w": energy / t_all,
        "drop_ratio": dropped / offered if offered else 0.0,
    }

if __name__ == "__main__":
    peak = float(sys.argv[1]) if len(sys.argv) > 1 else 120.0
    cfg = desk_config(peak=peak)
    for name, pol in [("always-on", AlwaysOn()), ("auto-sm1", AutoSm1())]:
        t0 = time.perf_counter()
        r = eval_policy(cfg, pol, episodes=2)
        print(f"{name:10s} trough_pc={r['trough_pc_w']:8.2f}  avg_pc={r['avg_pc_w']:8.2f}  drop={r['drop_ratio']:.4f}  [{time.perf_counter()-t0:.1f}s]")
