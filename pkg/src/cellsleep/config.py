"""Experiment configuration: defaults, JSON ingestion and validation.

A configuration is a single JSON document with one section per subsystem.
Every field has a default; unknown keys are rejected so typos surface as
errors with their full field path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from cellsleep.radio import RadioParams, SleepModeTable
from cellsleep.topology import Topology, hex_topology, make_topology
from cellsleep.traffic import CATEGORIES, TrafficProfile, synth_profile

__all__ = [
    "ConfigError",
    "TopologyConfig",
    "TrafficConfig",
    "RewardConfig",
    "ObsConfig",
    "PpoConfig",
    "ExperimentConfig",
]


class ConfigError(ValueError):
    """Malformed configuration; the message carries the field path."""


@dataclass(frozen=True)
class TopologyConfig:
    num_bs: int = 7
    bs_spacing_m: float = 400.0
    positions: tuple[tuple[float, float], ...] | None = None
    side_m: float | None = None

    def build(self) -> Topology:
        if self.positions is not None:
            if self.side_m is None:
                raise ConfigError("topology.side_m: required with custom positions")
            return make_topology(self.positions, self.side_m, self.bs_spacing_m)
        return hex_topology(self.num_bs, self.bs_spacing_m)


@dataclass(frozen=True)
class TrafficConfig:
    """Synthetic diurnal profile parameters, or a CSV profile path."""

    profile_csv: str | None = None
    peak_total_mbps_km2: float = 120.0
    category_shares: tuple[float, float, float] = (0.2, 0.4, 0.4)
    trough_fraction: float = 0.1
    slots_per_day: int = 72
    slot_duration_s: float = 1200.0
    file_mb: float = 3.0
    cycles_per_episode: float = 7.0

    def __post_init__(self) -> None:
        if self.file_mb <= 0:
            raise ConfigError("traffic.file_mb: must be positive")
        if self.cycles_per_episode <= 0:
            raise ConfigError("traffic.cycles_per_episode: must be positive")
        if len(self.category_shares) != len(CATEGORIES):
            raise ConfigError("traffic.category_shares: need one share per category")
        if any(s < 0 for s in self.category_shares):
            raise ConfigError("traffic.category_shares: must be nonnegative")
        if abs(sum(self.category_shares) - 1.0) > 1e-9:
            raise ConfigError("traffic.category_shares: must sum to 1")

    @property
    def file_bits(self) -> float:
        return self.file_mb * 1e6

    def build_profile(self) -> TrafficProfile:
        if self.profile_csv is not None:
            return TrafficProfile.from_csv(self.profile_csv,
                                           slot_duration_s=self.slot_duration_s)
        peaks = self.peak_total_mbps_km2 * np.asarray(self.category_shares)
        return synth_profile(peaks, self.trough_fraction, self.slots_per_day,
                             self.slot_duration_s)


@dataclass(frozen=True)
class RewardConfig:
    w_qos: float = 4.0
    w_pc: float | None = None  # resolved per topology size when unset
    phi: float = 0.005


@dataclass(frozen=True)
class ObsConfig:
    """Normalization constants keeping observation features near [0, 1]."""

    ue_count_cap: int = 50
    sinr_ref: float = 100.0
    rho_cap: float = 10.0


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coeff: float = 0.01
    huber_delta: float = 10.0
    actor_lr: float = 6e-4
    critic_lr: float = 5e-4
    epochs_per_episode: int = 10
    minibatches: int = 1
    episodes: int = 100
    hidden_sizes: tuple[int, ...] = (256, 256)
    checkpoint_every: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    radio: RadioParams = field(default_factory=RadioParams)
    sleep_modes: SleepModeTable = field(default_factory=SleepModeTable)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    episode_s: float = 1008.0
    sim_step_ms: float = 1.0
    agent_interval_ms: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episode_s <= 0:
            raise ConfigError("episode_s: must be positive")
        if self.sim_step_ms <= 0:
            raise ConfigError("sim_step_ms: must be positive")
        steps = self.agent_interval_ms / self.sim_step_ms
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigError(
                "agent_interval_ms: must be a positive multiple of sim_step_ms")
        intervals = self.episode_s * 1e3 / self.agent_interval_ms
        if abs(intervals - round(intervals)) > 1e-6 or round(intervals) < 1:
            raise ConfigError(
                "episode_s: must be a whole number of agent intervals")

    @property
    def steps_per_interval(self) -> int:
        return round(self.agent_interval_ms / self.sim_step_ms)

    @property
    def agent_steps_per_episode(self) -> int:
        return round(self.episode_s * 1e3 / self.agent_interval_ms)

    @property
    def micro_steps_per_episode(self) -> int:
        return self.agent_steps_per_episode * self.steps_per_interval

    @property
    def w_pc(self) -> float:
        """PC penalty weight; larger networks default to a lighter penalty."""
        if self.reward.w_pc is not None:
            return self.reward.w_pc
        return 0.4 if self.topology.num_bs >= 19 else 1.0

    # -- serialization ------------------------------------------------

    def to_dict(self) -> dict:
        t = self.topology
        tr = self.traffic
        r = self.radio
        return {
            "topology": {
                "num_bs": t.num_bs,
                "bs_spacing_m": t.bs_spacing_m,
                "positions": None if t.positions is None
                             else [list(p) for p in t.positions],
                "side_m": t.side_m,
            },
            "radio": {
                "bandwidth_hz": r.bandwidth_hz,
                "carrier_freq_ghz": r.carrier_freq_ghz,
                "noise_psd_db": r.noise_psd_db,
                "noise_figure_db": r.noise_figure_db,
                "shadow_sigma_db": r.shadow_sigma_db,
                "pa_tx_power_w": r.pa_tx_power_w,
                "p_fixed_w": r.p_fixed_w,
                "pa_efficiency": r.pa_efficiency,
                "bb_coeff_m_w": r.bb_coeff_m_w,
                "bb_coeff_k_w": r.bb_coeff_k_w,
                "m_min": r.m_min,
                "m_max": r.m_max,
                "antenna_step": r.antenna_step,
            },
            "sleep_modes": {
                "latency_ms": list(self.sleep_modes.latency_ms),
                "discount": list(self.sleep_modes.discount),
            },
            "traffic": {
                "profile_csv": tr.profile_csv,
                "peak_total_mbps_km2": tr.peak_total_mbps_km2,
                "category_shares": list(tr.category_shares),
                "trough_fraction": tr.trough_fraction,
                "slots_per_day": tr.slots_per_day,
                "slot_duration_s": tr.slot_duration_s,
                "file_mb": tr.file_mb,
                "cycles_per_episode": tr.cycles_per_episode,
            },
            "reward": {
                "w_qos": self.reward.w_qos,
                "w_pc": self.reward.w_pc,
                "phi": self.reward.phi,
            },
            "obs": {
                "ue_count_cap": self.obs.ue_count_cap,
                "sinr_ref": self.obs.sinr_ref,
                "rho_cap": self.obs.rho_cap,
            },
            "ppo": {
                "gamma": self.ppo.gamma,
                "gae_lambda": self.ppo.gae_lambda,
                "clip_eps": self.ppo.clip_eps,
                "entropy_coeff": self.ppo.entropy_coeff,
                "huber_delta": self.ppo.huber_delta,
                "actor_lr": self.ppo.actor_lr,
                "critic_lr": self.ppo.critic_lr,
                "epochs_per_episode": self.ppo.epochs_per_episode,
                "minibatches": self.ppo.minibatches,
                "episodes": self.ppo.episodes,
                "hidden_sizes": list(self.ppo.hidden_sizes),
                "checkpoint_every": self.ppo.checkpoint_every,
            },
            "episode_s": self.episode_s,
            "sim_step_ms": self.sim_step_ms,
            "agent_interval_ms": self.agent_interval_ms,
            "seed": self.seed,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        d = dict(data)
        try:
            topo = _parse(TopologyConfig, _pop_section(d, "topology"),
                          "topology", {
                "num_bs": int, "bs_spacing_m": float,
                "positions": "positions", "side_m": "optional_float"})
            radio = _parse(RadioParams, _pop_section(d, "radio"), "radio", {
                "bandwidth_hz": float, "carrier_freq_ghz": float,
                "noise_psd_db": float, "noise_figure_db": float,
                "shadow_sigma_db": float, "pa_tx_power_w": float,
                "p_fixed_w": float, "pa_efficiency": float,
                "bb_coeff_m_w": float, "bb_coeff_k_w": float,
                "m_min": int, "m_max": int, "antenna_step": int})
            sleep = _parse(SleepModeTable, _pop_section(d, "sleep_modes"),
                           "sleep_modes", {
                "latency_ms": "float_tuple", "discount": "float_tuple"})
            traffic_cfg = _parse(TrafficConfig, _pop_section(d, "traffic"),
                                 "traffic", {
                "profile_csv": "optional_str",
                "peak_total_mbps_km2": float,
                "category_shares": "float_tuple", "trough_fraction": float,
                "slots_per_day": int, "slot_duration_s": float,
                "file_mb": float, "cycles_per_episode": float})
            reward = _parse(RewardConfig, _pop_section(d, "reward"), "reward", {
                "w_qos": float, "w_pc": "optional_float", "phi": float})
            obs = _parse(ObsConfig, _pop_section(d, "obs"), "obs", {
                "ue_count_cap": int, "sinr_ref": float, "rho_cap": float})
            ppo = _parse(PpoConfig, _pop_section(d, "ppo"), "ppo", {
                "gamma": float, "gae_lambda": float, "clip_eps": float,
                "entropy_coeff": float, "huber_delta": float,
                "actor_lr": float, "critic_lr": float,
                "epochs_per_episode": int, "minibatches": int,
                "episodes": int, "hidden_sizes": "int_tuple",
                "checkpoint_every": int})
            episode_s = _scalar(d, "episode_s", float, 1008.0)
            sim_step_ms = _scalar(d, "sim_step_ms", float, 1.0)
            agent_interval_ms = _scalar(d, "agent_interval_ms", float, 20.0)
            seed = _scalar(d, "seed", int, 0)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        if d:
            raise ConfigError(f"{sorted(d)[0]}: unknown field")
        try:
            return cls(topology=topo, radio=radio, sleep_modes=sleep,
                       traffic=traffic_cfg, reward=reward, obs=obs, ppo=ppo,
                       episode_s=episode_s, sim_step_ms=sim_step_ms,
                       agent_interval_ms=agent_interval_ms, seed=seed)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)


def _pop_section(d: dict, key: str) -> dict:
    section = d.pop(key, None)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{key}: must be an object")
    return section


def _coerce(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if kind == "optional_float":
        return None if value is None else _coerce(value, float, path)
    if kind == "optional_str":
        if value is None:
            return None
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if kind == "float_tuple":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list of numbers")
        return tuple(_coerce(v, float, f"{path}[{i}]")
                     for i, v in enumerate(value))
    if kind == "int_tuple":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list of integers")
        return tuple(_coerce(v, int, f"{path}[{i}]")
                     for i, v in enumerate(value))
    if kind == "positions":
        if value is None:
            return None
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list of [x, y] pairs")
        out = []
        for i, pair in enumerate(value):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"{path}[{i}]: expected an [x, y] pair")
            out.append((_coerce(pair[0], float, f"{path}[{i}][0]"),
                        _coerce(pair[1], float, f"{path}[{i}][1]")))
        return tuple(out)
    raise AssertionError(f"unhandled kind {kind!r}")


def _parse(cls, section: dict, path: str, schema: dict):
    section = dict(section)
    kwargs = {}
    for key, kind in schema.items():
        if key in section:
            kwargs[key] = _coerce(section.pop(key), kind, f"{path}.{key}")
    if section:
        raise ConfigError(f"{path}.{sorted(section)[0]}: unknown field")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _scalar(d: dict, key: str, kind, default):
    if key not in d:
        return default
    return _coerce(d.pop(key), kind, key)
