"""Shared-actor PPO with a centralized critic, built on explicit gradients."""

from cellsleep.marl.nets import Adam, Mlp, load_model, save_model
from cellsleep.marl.ppo import TrainingDiverged, gae, huber, ppo_update
from cellsleep.marl.trainer import (
    Trajectory,
    TrainResult,
    collect_episode,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "Adam", "Mlp", "load_model", "save_model",
    "TrainingDiverged", "gae", "huber", "ppo_update",
    "Trajectory", "TrainResult", "collect_episode", "train",
    "save_checkpoint", "load_checkpoint",
]
