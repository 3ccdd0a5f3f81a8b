"""Baseline controllers and the trained-actor wrapper.

Every policy maps (observations, per-BS info) to one action index per BS.
All emitted actions lie in the 12-element per-agent space.
"""
from __future__ import annotations

import numpy as np

from cellsleep.env import NUM_ACTIONS, NUM_SLEEP_LEVELS, encode_action

__all__ = ["AlwaysOn", "AutoSm1", "RandomPolicy", "MappoPolicy", "make_policy"]


class AlwaysOn:
    """Keep every BS awake and drive antenna counts to the maximum."""

    def __init__(self, antenna_step: int = 4):
        self._action = encode_action(antenna_step, 0, antenna_step)

    def act(self, observations, info) -> np.ndarray:
        return np.full(len(observations), self._action, dtype=int)


class AutoSm1:
    """Put UE-less BSs into the shallowest sleep level.

    A BS sleeps (level 1) only when it serves nothing, has no queued UE
    attributed to it, and no idle UE falls in its coverage — coverage
    meaning the BS is the UE's strongest-gain cell. Any covered UE wakes
    it at the next decision. Antennas are held fixed by default; an
    attached actor can drive the antenna deltas instead.
    """

    def __init__(self, antenna_step: int = 4, antenna_actor=None):
        self._step = antenna_step
        self._antenna_actor = antenna_actor

    def act(self, observations, info) -> np.ndarray:
        occupied = (info["served"] + info["queued"] + info["idle_cover"]) > 0
        targets = np.where(occupied, 0, 1)
        if self._antenna_actor is None:
            deltas = np.zeros(len(targets), dtype=int)
        else:
            logits = self._antenna_actor.predict(np.asarray(observations))
            deltas = (np.argmax(logits, axis=1) // NUM_SLEEP_LEVELS - 1) * self._step
        return np.array([encode_action(int(d), int(t), self._step)
                         for d, t in zip(deltas, targets)])


class RandomPolicy:
    """Uniform over the 12 per-agent actions, independently per BS."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def act(self, observations, info) -> np.ndarray:
        return self._rng.integers(0, NUM_ACTIONS, size=len(observations))


class MappoPolicy:
    """Trained shared actor; greedy by default, sampling with an rng."""

    def __init__(self, actor, greedy: bool = True,
                 rng: np.random.Generator | None = None):
        self._actor = actor
        self._greedy = greedy
        self._rng = rng
        if not greedy and rng is None:
            raise ValueError("sampling mode needs an rng")

    def act(self, observations, info) -> np.ndarray:
        logits = self._actor.predict(np.asarray(observations))
        if self._greedy:
            return np.argmax(logits, axis=1)
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        u = self._rng.random(len(probs))
        return (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)


def make_policy(name: str, antenna_step: int = 4, actor=None,
                rng: np.random.Generator | None = None,
                greedy: bool = True):
    """Policy registry used by the CLI (`always-on`, `auto-sm1`, ...)."""
    key = name.replace("_", "-")
    if key == "always-on":
        return AlwaysOn(antenna_step)
    if key == "auto-sm1":
        return AutoSm1(antenna_step)
    if key == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        return RandomPolicy(rng)
    if key == "mappo":
        if actor is None:
            raise ValueError("mappo policy needs a trained actor")
        return MappoPolicy(actor, greedy=greedy, rng=rng)
    raise ValueError(f"unknown policy {name!r}")
