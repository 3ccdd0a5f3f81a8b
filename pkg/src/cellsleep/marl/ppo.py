"""Clipped-surrogate policy optimization on full-batch trajectories.

The actor loss is the clipped surrogate minus an entropy bonus; the critic
minimizes a Huber loss on the computed returns. Gradients are exact
reverse-mode through the categorical head and both networks.
"""
from __future__ import annotations

import numpy as np

from cellsleep.config import PpoConfig
from cellsleep.marl.nets import Adam, Mlp, log_softmax

__all__ = ["TrainingDiverged", "gae", "huber", "huber_grad", "ppo_update",
           "normalize_advantages"]


class TrainingDiverged(RuntimeError):
    """Optimization produced non-finite quantities."""


def gae(rewards, values, bootstrap_value, gamma: float,
        lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one episode.

    ``values`` may be (T,) or (T, C) for per-agent value estimates with a
    shared reward vector (T,). The bootstrap value closes the episode and
    must be 0 at a true terminal. Returns (advantages, returns).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape[0] != r.shape[0]:
        raise ValueError("rewards and values must have equal length")
    boot = np.asarray(bootstrap_value, dtype=float)
    if v.ndim == 2:
        r = r[:, None]
        boot = np.broadcast_to(boot, (v.shape[1],))
    v_next = np.concatenate([v[1:], boot[None, ...] if v.ndim == 2
                             else np.atleast_1d(boot)], axis=0)
    deltas = r + gamma * v_next - v
    adv = np.zeros_like(v)
    acc = np.zeros(v.shape[1:] if v.ndim > 1 else ())
    decay = gamma * lam
    for t in range(len(r) - 1, -1, -1):
        acc = deltas[t] + decay * acc
        adv[t] = acc
    return adv, adv + v


def huber(residual, delta: float):
    """Huber value: quadratic inside |r| <= delta, linear outside."""
    r = np.asarray(residual, dtype=float)
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def huber_grad(residual, delta: float):
    r = np.asarray(residual, dtype=float)
    return np.clip(r, -delta, delta)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(batch: dict, actor: Mlp, critic: Mlp, actor_opt: Adam,
               critic_opt: Adam, cfg: PpoConfig,
               rng: np.random.Generator | None = None) -> list[dict]:
    """Run the configured epochs over one batch; returns per-epoch stats.

    ``batch`` carries flat arrays: obs (N, d_o), critic_in (N, d_c),
    actions (N,), log_probs (N,), advantages (N,) already normalized,
    and returns (N,). With minibatches > 1 the batch is permuted each
    epoch using ``rng``.
    """
    obs = batch["obs"]
    critic_in = batch["critic_in"]
    actions = batch["actions"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    rets = batch["returns"]
    n = len(obs)
    eps = cfg.clip_eps
    stats = []
    for _ in range(cfg.epochs_per_episode):
        if cfg.minibatches > 1:
            if rng is None:
                raise ValueError("minibatch shuffling needs an rng")
            perm = rng.permutation(n)
            chunks = np.array_split(perm, cfg.minibatches)
        else:
            chunks = [slice(None)]
        ep_stats = {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0,
                    "mean_ratio": 0.0, "clip_fraction": 0.0}
        for chunk in chunks:
            o = obs[chunk]
            a = actions[chunk]
            olp = old_logp[chunk]
            ad = adv[chunk]
            rt = rets[chunk]
            m = len(o)
            rows = np.arange(m)

            logits = actor.forward(o)
            if not np.all(np.isfinite(logits)):
                bad = int(np.argwhere(~np.isfinite(logits))[0][0])
                raise TrainingDiverged(
                    f"non-finite actor logits at batch index {bad}")
            logp_all = log_softmax(logits)
            probs = np.exp(logp_all)
            logp = logp_all[rows, a]
            ratio = np.exp(logp - olp)
            unclipped = ratio * ad
            clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * ad
            surrogate = np.minimum(unclipped, clipped)
            entropy = -(probs * logp_all).sum(axis=1)
            actor_loss = -surrogate.mean() - cfg.entropy_coeff * entropy.mean()
            if not np.isfinite(actor_loss):
                raise TrainingDiverged("non-finite actor loss")

            # d(-surrogate)/d(logp): gradient flows through the ratio only
            # where the unclipped branch is the active minimum
            g_logp = np.where(unclipped <= clipped, -ratio * ad, 0.0) / m
            dz = g_logp[:, None] * (-probs)
            dz[rows, a] += g_logp
            # entropy bonus: dH/dz = -p * (log p + H)
            dz += (cfg.entropy_coeff / m) * probs * (logp_all
                                                     + entropy[:, None])
            actor.zero_grad()
            actor.backward(dz)
            actor_opt.step()

            v = critic.forward(critic_in[chunk])[:, 0]
            residual = v - rt
            critic_loss = huber(residual, cfg.huber_delta).mean()
            if not np.isfinite(critic_loss):
                raise TrainingDiverged("non-finite critic loss")
            critic.zero_grad()
            critic.backward((huber_grad(residual, cfg.huber_delta)
                             / m)[:, None])
            critic_opt.step()

            frac = m / n
            ep_stats["actor_loss"] += float(actor_loss) * frac
            ep_stats["critic_loss"] += float(critic_loss) * frac
            ep_stats["entropy"] += float(entropy.mean()) * frac
            ep_stats["mean_ratio"] += float(ratio.mean()) * frac
            ep_stats["clip_fraction"] += float(
                (np.abs(ratio - 1.0) > eps).mean()) * frac
        stats.append(ep_stats)
    return stats
