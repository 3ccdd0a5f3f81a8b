"""Episode collection and the training loop (shared actor, central critic).

Training is on-policy: each episode is collected with the current actor,
then consumed whole by the configured number of optimization epochs.
Per-episode seeds derive deterministically from the experiment seed, so a
run can be resumed from any checkpoint and reproduce the original exactly.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from cellsleep.config import ExperimentConfig
from cellsleep.env import NetworkEnv
from cellsleep.marl.nets import (Adam, Mlp, ModelMismatchError,
                                 categorical_sample, log_softmax, save_model)
from cellsleep.marl.ppo import (TrainingDiverged, gae, normalize_advantages,
                                ppo_update)

__all__ = ["Trajectory", "TrainResult", "collect_episode", "train",
           "save_checkpoint", "load_checkpoint", "build_networks",
           "episode_seed"]

VARIANTS = ("full", "neighbor")
CHECKPOINT_FORMAT_VERSION = 1

# Consecutive suspicious episodes tolerated before training aborts.
_DIVERGENCE_PATIENCE = 5


@dataclass
class Trajectory:
    """One episode of per-agent experience plus the shared reward."""

    obs: np.ndarray         # (T, C, obs_dim)
    critic_in: np.ndarray   # (T, C, critic_dim)
    actions: np.ndarray     # (T, C)
    log_probs: np.ndarray   # (T, C)
    rewards: np.ndarray     # (T,)
    values: np.ndarray      # (T, C)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def num_steps(self) -> int:
        return self.obs.shape[0]

    @property
    def num_agents(self) -> int:
        return self.obs.shape[1]

    def compute_advantages(self, gamma: float, lam: float) -> None:
        boot = np.zeros(self.num_agents)  # episodes end at a true terminal
        self.advantages, self.returns = gae(self.rewards, self.values, boot,
                                            gamma, lam)

    def flat_batch(self) -> dict:
        if self.advantages is None:
            raise RuntimeError("compute_advantages must run first")
        t, c = self.obs.shape[:2]
        return {
            "obs": self.obs.reshape(t * c, -1),
            "critic_in": self.critic_in.reshape(t * c, -1),
            "actions": self.actions.reshape(t * c),
            "log_probs": self.log_probs.reshape(t * c),
            "advantages": normalize_advantages(self.advantages.reshape(t * c)),
            "returns": self.returns.reshape(t * c),
        }


@dataclass
class TrainResult:
    actor: Mlp
    critic: Mlp
    curves: list[dict] = field(default_factory=list)
    episodes_run: int = 0


def episode_seed(base_seed: int, episode: int) -> np.random.SeedSequence:
    """Deterministic, random-access per-episode seed stream."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(episode,))


def build_networks(config: ExperimentConfig, env: NetworkEnv,
                   variant: str) -> tuple[Mlp, Mlp]:
    """Shared actor and centralized critic sized for the environment."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    hidden = list(config.ppo.hidden_sizes)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(2 ** 31,)))
    from cellsleep.env import NUM_ACTIONS
    actor = Mlp([env.obs_dim] + hidden + [NUM_ACTIONS], rng, out_gain=0.01)
    critic = Mlp([env.critic_dim(variant)] + hidden + [1], rng, out_gain=1.0)
    return actor, critic


def collect_episode(env: NetworkEnv, actor: Mlp, critic: Mlp,
                    rng: np.random.Generator, variant: str = "full",
                    env_seed=None) -> Trajectory:
    """Run one full episode, sampling every agent from the shared actor."""
    obs = env.reset(seed=env_seed)
    t_steps = env.agent_steps_per_episode
    c = env.num_agents
    obs_buf = np.empty((t_steps, c, env.obs_dim))
    ci_buf = np.empty((t_steps, c, env.critic_dim(variant)))
    act_buf = np.empty((t_steps, c), dtype=np.int64)
    logp_buf = np.empty((t_steps, c))
    rew_buf = np.empty(t_steps)
    val_buf = np.empty((t_steps, c))
    for t in range(t_steps):
        critic_in = env.critic_inputs(variant)
        logits = actor.predict(obs)
        if not np.all(np.isfinite(logits)):
            raise TrainingDiverged(f"non-finite actor logits at step {t}")
        logp_all = log_softmax(logits)
        actions = categorical_sample(rng, np.exp(logp_all))
        obs_buf[t] = obs
        ci_buf[t] = critic_in
        act_buf[t] = actions
        logp_buf[t] = logp_all[np.arange(c), actions]
        val_buf[t] = critic.predict(critic_in)[:, 0]
        obs, reward, _ = env.step(actions)
        rew_buf[t] = reward.reward
    return Trajectory(obs=obs_buf, critic_in=ci_buf, actions=act_buf,
                      log_probs=logp_buf, rewards=rew_buf, values=val_buf)


def train(config: ExperimentConfig, variant: str = "full",
          episodes: int | None = None, out_dir=None,
          resume_from=None, progress=None) -> TrainResult:
    """Collect-and-update loop over the configured number of episodes.

    Writes actor checkpoints every ``checkpoint_every`` episodes when
    ``out_dir`` is given, plus a full trainer checkpoint for resuming.
    Aborts after 5 consecutive episodes of exploding losses; non-finite
    losses abort immediately.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    env = NetworkEnv(config)
    actor, critic = build_networks(config, env, variant)
    actor_opt = Adam(actor, config.ppo.actor_lr)
    critic_opt = Adam(critic, config.ppo.critic_lr)
    total_episodes = config.ppo.episodes if episodes is None else episodes
    start_episode = 0
    if resume_from is not None:
        start_episode = load_checkpoint(resume_from, actor, critic,
                                        actor_opt, critic_opt)
    result = TrainResult(actor=actor, critic=critic)
    strikes = 0
    prev_loss = None
    for ep in range(start_episode, total_episodes):
        started = time.perf_counter()
        seed = episode_seed(config.seed, ep)
        env_seed, sample_seed, update_seed = seed.spawn(3)
        rng = np.random.default_rng(sample_seed)
        traj = collect_episode(env, actor, critic, rng, variant,
                               env_seed=env_seed)
        traj.compute_advantages(config.ppo.gamma, config.ppo.gae_lambda)
        stats = ppo_update(traj.flat_batch(), actor, critic, actor_opt,
                           critic_opt, config.ppo,
                           rng=np.random.default_rng(update_seed))
        metrics = env.metrics()
        last = stats[-1]
        row = {
            "episode": ep,
            "reward": float(traj.rewards.mean()),
            "drop_ratio": metrics["drop_ratio"],
            "pc_w": metrics["avg_pc_w"],
            "actor_loss": last["actor_loss"],
            "critic_loss": last["critic_loss"],
            "entropy": last["entropy"],
            "wall_clock_s": time.perf_counter() - started,
        }
        result.curves.append(row)
        result.episodes_run = ep + 1
        if progress is not None:
            progress(row)

        loss_now = abs(last["actor_loss"]) + abs(last["critic_loss"])
        exploding = (prev_loss is not None and loss_now > 5.0 * prev_loss
                     and loss_now > 1e3)
        strikes = strikes + 1 if exploding else 0
        prev_loss = loss_now
        if strikes >= _DIVERGENCE_PATIENCE:
            raise TrainingDiverged(
                f"loss exploded for {strikes} consecutive episodes "
                f"(last total {loss_now:.3g})")

        if out_dir is not None:
            done = ep + 1
            if done % config.ppo.checkpoint_every == 0 or done == total_episodes:
                save_model(f"{out_dir}/actor_ep{done:04d}.npz", actor,
                           meta={"episode": done, "variant": variant})
                save_checkpoint(f"{out_dir}/checkpoint.npz", actor, critic,
                                actor_opt, critic_opt, done, variant)
    return result


def save_checkpoint(path, actor: Mlp, critic: Mlp, actor_opt: Adam,
                    critic_opt: Adam, episode: int, variant: str) -> None:
    """Full trainer state: both networks, both optimizers, episode index."""
    arrays = {}
    for prefix, net in (("actor", actor), ("critic", critic)):
        for key, arr in net.state_arrays().items():
            arrays[f"{prefix}_{key}"] = arr
    for prefix, opt in (("aopt", actor_opt), ("copt", critic_opt)):
        for key, arr in opt.state_arrays().items():
            arrays[f"{prefix}_{key}"] = arr
    np.savez(path,
             format_version=np.array(CHECKPOINT_FORMAT_VERSION),
             episode=np.array(episode),
             actor_sizes=np.array(actor.layer_sizes),
             critic_sizes=np.array(critic.layer_sizes),
             meta=np.array(json.dumps({"variant": variant})),
             **arrays)


def load_checkpoint(path, actor: Mlp, critic: Mlp, actor_opt: Adam,
                    critic_opt: Adam) -> int:
    """Restore trainer state in place; returns the next episode index."""
    with np.load(path, allow_pickle=False) as data:
        if int(data["format_version"]) != CHECKPOINT_FORMAT_VERSION:
            raise ModelMismatchError("unsupported checkpoint format")
        if [int(s) for s in data["actor_sizes"]] != actor.layer_sizes:
            raise ModelMismatchError("checkpoint actor sizes do not match")
        if [int(s) for s in data["critic_sizes"]] != critic.layer_sizes:
            raise ModelMismatchError("checkpoint critic sizes do not match")
        actor.load_state_arrays(
            {k[len("actor_"):]: v for k, v in data.items()
             if k.startswith("actor_") and not k.startswith("actor_sizes")})
        critic.load_state_arrays(
            {k[len("critic_"):]: v for k, v in data.items()
             if k.startswith("critic_") and not k.startswith("critic_sizes")})
        actor_opt.load_state_arrays(
            {k[len("aopt_"):]: v for k, v in data.items()
             if k.startswith("aopt_")})
        critic_opt.load_state_arrays(
            {k[len("copt_"):]: v for k, v in data.items()
             if k.startswith("copt_")})
        return int(data["episode"])
