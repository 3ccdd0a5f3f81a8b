"""Command-line experiment runner: simulate, train, evaluate, export-profile.

Exit codes: 0 success, 2 config error, 3 simulator invariant breach,
4 model/config mismatch. The CELLSLEEP_THREADS environment variable caps
worker parallelism for multi-episode evaluation.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from cellsleep.config import ConfigError, ExperimentConfig
from cellsleep.env import InvariantError, NetworkEnv
from cellsleep.marl import train
from cellsleep.marl.nets import ModelMismatchError, load_model
from cellsleep.marl.trainer import episode_seed
from cellsleep.policies import make_policy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_MODEL = 4

CURVE_COLUMNS = ["episode", "reward", "drop_ratio", "pc_w"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellsleep",
        description="Multi-cell massive MIMO sleep-control experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory")

    p_sim = sub.add_parser("simulate", help="run episodes under one policy")
    common(p_sim)
    p_sim.add_argument("--policy", default="always-on",
                       choices=["always-on", "auto-sm1", "random", "mappo"])
    p_sim.add_argument("--model", type=Path, default=None,
                       help="actor dump for --policy mappo")
    p_sim.add_argument("--episodes", type=int, default=1)

    p_train = sub.add_parser("train", help="train the shared-actor policy")
    common(p_train)
    p_train.add_argument("--variant", default="full",
                         choices=["full", "neighbor"])
    p_train.add_argument("--episodes", type=int, default=None,
                         help="override ppo.episodes")
    p_train.add_argument("--resume", type=Path, default=None,
                         help="continue from a trainer checkpoint")

    p_eval = sub.add_parser("evaluate",
                            help="compare a policy against baselines "
                                 "on paired seeds")
    common(p_eval)
    p_eval.add_argument("--policy", default="mappo",
                        choices=["always-on", "auto-sm1", "random", "mappo"])
    p_eval.add_argument("--model", type=Path, default=None)
    p_eval.add_argument("--baselines", default="always-on,auto-sm1",
                        help="comma-separated baseline policies")
    p_eval.add_argument("--episodes", type=int, default=1)

    p_prof = sub.add_parser("export-profile",
                            help="write the traffic profile as CSV")
    p_prof.add_argument("--config", type=Path, default=None)
    p_prof.add_argument("--out", type=Path, default=Path("profile.csv"))
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        cfg = ExperimentConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(data)
    return cfg


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("CELLSLEEP_THREADS")
    if cap is not None:
        try:
            cap = max(1, int(cap))
        except ValueError:
            raise ConfigError("CELLSLEEP_THREADS must be an integer") from None
    else:
        cap = 4
    return max(1, min(cap, n_jobs))


def _build_policy(name: str, cfg: ExperimentConfig, model_path, env_obs_dim):
    actor = None
    if name == "mappo":
        if model_path is None:
            raise ConfigError("--model is required for the mappo policy")
        actor, _ = load_model(model_path)
        if actor.num_inputs != env_obs_dim:
            raise ModelMismatchError(
                f"model expects observation width {actor.num_inputs}, "
                f"environment produces {env_obs_dim}")
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2 ** 32,)))
    return make_policy(name, cfg.radio.antenna_step, actor=actor, rng=rng)


def run_episode(cfg: ExperimentConfig, policy, episode: int,
                record_sink=None) -> dict:
    """One full episode under a policy; returns metrics and hour buckets.

    Episodes are seeded from (config seed, episode index) only, so every
    policy sees the identical arrival stream for a given pair.
    """
    env = NetworkEnv(cfg)
    obs = env.reset(seed=episode_seed(cfg.seed, episode))
    hour_acc: dict[int, dict] = {}
    interval_s = cfg.agent_interval_ms * 1e-3
    for step in range(env.agent_steps_per_episode):
        action = policy.act(obs, env.policy_info())
        obs, reward, record = env.step(action)
        if record_sink is not None:
            record_sink(record)
        hour = env.diurnal_hour(step * interval_s)
        acc = hour_acc.setdefault(hour, {
            "time_s": 0.0, "energy_j": 0.0, "delivered_bits": 0.0,
            "dropped_bits": 0.0, "xf_bits": 0.0})
        acc["time_s"] += interval_s
        acc["energy_j"] += record["pc_w"] * interval_s
        acc["delivered_bits"] += record["sum_rate_bps"] * interval_s
        if record["drop_ratio"] is not None:
            stats = env.last_interval_stats
            acc["dropped_bits"] += stats.dropped_bits
            acc["xf_bits"] += stats.xf_bits
    return {"metrics": env.metrics(), "hours": hour_acc}


def _merge_hours(per_episode: list[dict]) -> list[dict]:
    merged: dict[int, dict] = {}
    for ep in per_episode:
        for hour, acc in ep["hours"].items():
            tgt = merged.setdefault(hour, {
                "time_s": 0.0, "energy_j": 0.0, "delivered_bits": 0.0,
                "dropped_bits": 0.0, "xf_bits": 0.0})
            for key, val in acc.items():
                tgt[key] += val
    rows = []
    for hour in sorted(merged):
        acc = merged[hour]
        rows.append({
            "hour": hour,
            "pc_w": acc["energy_j"] / acc["time_s"],
            "drop_ratio": (acc["dropped_bits"] / acc["xf_bits"]
                           if acc["xf_bits"] else None),
            "sum_rate_bps": acc["delivered_bits"] / acc["time_s"],
            "ee_bits_per_j": (acc["delivered_bits"] / acc["energy_j"]
                              if acc["energy_j"] else None),
        })
    return rows


def _overall(per_episode: list[dict]) -> dict:
    energy = sum(e["metrics"]["energy_j"] for e in per_episode)
    delivered = sum(e["metrics"]["delivered_bits"] for e in per_episode)
    dropped = sum(e["metrics"]["dropped_bits"] for e in per_episode)
    offered = sum(e["metrics"]["offered_bits"] for e in per_episode)
    time_s = sum(e["metrics"]["time_s"] for e in per_episode)
    return {
        "time_s": time_s,
        "avg_pc_w": energy / time_s if time_s else None,
        "drop_ratio": dropped / offered if offered else None,
        "sum_rate_bps": delivered / time_s if time_s else None,
        "ee_bits_per_j": delivered / energy if energy else None,
        "energy_j": energy,
        "delivered_bits": delivered,
    }


def traffic_hour_ranks(cfg: ExperimentConfig) -> tuple[list[int], list[int]]:
    """Hours of the diurnal cycle sorted into the low and high thirds."""
    profile = cfg.traffic.build_profile()
    totals = profile.densities.sum(axis=0)
    period = profile.period_slots
    by_hour = np.zeros(24)
    counts = np.zeros(24)
    for slot in range(period):
        hour = int(slot / period * 24.0)
        by_hour[hour] += totals[slot]
        counts[hour] += 1
    means = by_hour / np.maximum(counts, 1)
    order = sorted(range(24), key=lambda h: (means[h], h))
    return order[:8], order[-8:]


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env_probe = NetworkEnv(cfg)
    policy = _build_policy(args.policy, cfg, args.model, env_probe.obs_dim)
    per_episode = []
    for ep in range(args.episodes):
        path = out / f"steps_ep{ep:03d}.jsonl"
        with open(path, "w") as fh:
            result = run_episode(
                cfg, policy, ep,
                record_sink=lambda rec: fh.write(json.dumps(rec) + "\n"))
        per_episode.append(result)
    summary = {
        "policy": args.policy,
        "episodes": args.episodes,
        "overall": _overall(per_episode),
        "by_hour": _merge_hours(per_episode),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    cfg.to_json(out / "config_resolved.json")
    print(f"simulate: wrote {args.episodes} episode(s) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w") as log:
        def progress(row):
            log.write(json.dumps(row) + "\n")
            log.flush()
            print(f"episode {row['episode']:4d}  reward {row['reward']:+.4f}  "
                  f"pc {row['pc_w']:.1f} W  drop "
                  f"{row['drop_ratio'] if row['drop_ratio'] is not None else '-'}")

        result = train(cfg, variant=args.variant, episodes=args.episodes,
                       out_dir=out, resume_from=args.resume,
                       progress=progress)
    with open(out / "curves.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS,
                                extrasaction="ignore")
        writer.writeheader()
        for row in result.curves:
            writer.writerow(row)
    with open(out / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "wall_clock_s"])
        for row in result.curves:
            writer.writerow([row["episode"], row["wall_clock_s"]])
    from cellsleep.marl.nets import save_model
    save_model(out / "model.npz", result.actor,
               meta={"variant": args.variant,
                     "episodes": result.episodes_run})
    cfg.to_json(out / "config_resolved.json")
    print(f"train: {result.episodes_run} episode(s), model at {out/'model.npz'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env_probe = NetworkEnv(cfg)
    baselines = []
    for b in args.baselines.split(","):
        b = b.strip()
        if b and b not in baselines:
            baselines.append(b)
    names = [args.policy] + [b for b in baselines if b != args.policy]
    policies = {name: _build_policy(name, cfg, args.model, env_probe.obs_dim)
                for name in names}

    jobs = [(name, ep) for name in names for ep in range(args.episodes)]
    results: dict[str, list] = {name: [None] * args.episodes for name in names}

    def run(job):
        name, ep = job
        return name, ep, run_episode(cfg, policies[name], ep)

    with ThreadPoolExecutor(max_workers=_worker_count(len(jobs))) as pool:
        for name, ep, res in pool.map(run, jobs):
            results[name][ep] = res

    low_hours, high_hours = traffic_hour_ranks(cfg)
    report = {"policies": {}, "deltas": {}, "low_traffic_hours": low_hours,
              "high_traffic_hours": high_hours}
    hour_tables = {}
    for name in names:
        rows = _merge_hours(results[name])
        hour_tables[name] = {r["hour"]: r for r in rows}
        report["policies"][name] = {
            "overall": _overall(results[name]),
            "by_hour": rows,
        }

    def hour_mean(name, hours, key):
        vals = [hour_tables[name][h][key] for h in hours
                if h in hour_tables[name] and hour_tables[name][h][key] is not None]
        return sum(vals) / len(vals) if vals else None

    candidate = args.policy
    for base in baselines:
        entry = {}
        for key in ("pc_w", "drop_ratio", "sum_rate_bps", "ee_bits_per_j"):
            cand_all = hour_mean(candidate, range(24), key)
            base_all = hour_mean(base, range(24), key)
            entry[f"overall_{key}_delta"] = (
                (cand_all - base_all) / base_all
                if cand_all is not None and base_all else None)
        lo_c = hour_mean(candidate, low_hours, "pc_w")
        lo_b = hour_mean(base, low_hours, "pc_w")
        hi_c = hour_mean(candidate, high_hours, "ee_bits_per_j")
        hi_b = hour_mean(base, high_hours, "ee_bits_per_j")
        entry["low_traffic_pc_delta"] = ((lo_c - lo_b) / lo_b
                                         if lo_b else None)
        entry["high_traffic_ee_delta"] = ((hi_c - hi_b) / hi_b
                                          if hi_b else None)
        report["deltas"][f"{candidate}_vs_{base}"] = entry

    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    cfg.to_json(out / "config_resolved.json")
    print(f"evaluate: compared {', '.join(names)} over {args.episodes} "
          f"episode(s); report at {out/'report.json'}")
    return EXIT_OK


def cmd_export_profile(args) -> int:
    cfg = ExperimentConfig() if args.config is None \
        else ExperimentConfig.from_json(args.config)
    profile = cfg.traffic.build_profile()
    out = Path(args.out)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    profile.to_csv(out)
    print(f"export-profile: {profile.period_slots} slots x 3 categories "
          f"-> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "export-profile": cmd_export_profile,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ModelMismatchError as exc:
        print(f"model mismatch: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
