"""Discrete-time multi-cell network environment with per-BS control agents.

The network advances in fixed micro steps (1 ms by default). A joint
action — one antenna delta and one sleep target per BS — is applied at
every agent interval (20 ms) and held for its duration. Observations,
the shared reward and step metrics are produced once per interval.

Micro-step pipeline, in order: wake-timer ticks, UE arrivals, association
of unserved UEs, per-BS power allocation, SINR/rate evaluation, demand and
delay updates, departure finalization, energy/metric accumulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cellsleep import radio, traffic
from cellsleep.config import ExperimentConfig
from cellsleep.traffic import DEPARTED, IDLE, QUEUED, SERVED

__all__ = [
    "InvariantError",
    "JointAction",
    "RewardRecord",
    "NetworkEnv",
    "NUM_ACTIONS",
    "GLOBAL_DIM",
    "LOCAL_DIM",
    "decode_action",
    "encode_action",
    "qos_term",
    "compute_reward",
]

NUM_SLEEP_LEVELS = 4
NUM_ACTIONS = 3 * NUM_SLEEP_LEVELS  # antenna move x sleep target

GLOBAL_DIM = 9
LOCAL_DIM = 5


class InvariantError(RuntimeError):
    """Simulator state violated a structural invariant."""


def decode_action(index: int, antenna_step: int = 4) -> tuple[int, int]:
    """Action index 0..11 -> (antenna delta, sleep target)."""
    if not 0 <= index < NUM_ACTIONS:
        raise ValueError(f"action index {index} outside 0..{NUM_ACTIONS - 1}")
    return (index // NUM_SLEEP_LEVELS - 1) * antenna_step, index % NUM_SLEEP_LEVELS


def encode_action(delta: int, target: int, antenna_step: int = 4) -> int:
    """(antenna delta, sleep target) -> action index 0..11."""
    if delta not in (-antenna_step, 0, antenna_step):
        raise ValueError(f"antenna delta must be one of -{antenna_step}, 0, "
                         f"+{antenna_step}")
    if not 0 <= target < NUM_SLEEP_LEVELS:
        raise ValueError("sleep target must be in 0..3")
    return (delta // antenna_step + 1) * NUM_SLEEP_LEVELS + target


@dataclass
class JointAction:
    """Per-BS antenna deltas (in antennas) and sleep targets."""

    deltas: np.ndarray
    targets: np.ndarray

    @classmethod
    def from_indices(cls, indices, antenna_step: int = 4) -> "JointAction":
        idx = np.asarray(indices, dtype=int)
        if np.any(idx < 0) or np.any(idx >= NUM_ACTIONS):
            raise ValueError("action index outside the joint action space")
        return cls(deltas=(idx // NUM_SLEEP_LEVELS - 1) * antenna_step,
                   targets=idx % NUM_SLEEP_LEVELS)

    def indices(self, antenna_step: int = 4) -> np.ndarray:
        return (self.deltas // antenna_step + 1) * NUM_SLEEP_LEVELS + self.targets


@dataclass
class RewardRecord:
    """Shared reward of one agent interval and its components."""

    xi: float
    pc_norm: float
    reward: float
    per_ue_xi: list[float]


def qos_term(rho: float, phi: float) -> float:
    """Per-UE QoS reward: -(dropped fraction) below 1, small bonus above."""
    if rho < 1.0:
        return rho - 1.0
    return phi * (1.0 - 1.0 / rho)


def compute_reward(outcomes, interval_energy_j: float, interval_s: float,
                   w_qos: float, w_pc: float, phi: float,
                   pc_norm_w: float) -> RewardRecord:
    """Shared interval reward: QoS mean minus the normalized PC penalty.

    ``pc_norm_w`` is the normalization power (network size times the
    awake full-array reference), making the published weights meaningful.
    """
    per = [qos_term(o.rho, phi) for o in outcomes]
    xi = sum(per) / len(per) if per else 0.0
    pc_norm = interval_energy_j / interval_s / pc_norm_w
    return RewardRecord(xi=xi, pc_norm=pc_norm,
                        reward=w_qos * xi - w_pc * pc_norm, per_ue_xi=per)


class _BsState:
    """Mutable per-BS simulator state."""

    __slots__ = ("index", "m_cfg", "sleep_level", "waking", "wake_timer_ms",
                 "served")

    def __init__(self, index: int, m_cfg: int):
        self.index = index
        self.m_cfg = m_cfg
        self.sleep_level = 0
        self.waking = False
        self.wake_timer_ms = 0.0
        self.served: list[traffic.UeState] = []

    @property
    def active(self) -> bool:
        return self.sleep_level == 0

    @property
    def active_antennas(self) -> int:
        return self.m_cfg if self.sleep_level == 0 else 0


@dataclass
class _IntervalStats:
    """Snapshot taken when an interval closes; feeds observations."""

    pc_total_w: float
    pc_per_bs: np.ndarray
    n_finished: int
    n_dropped: int
    mean_rho_finished: float  # capped before averaging
    mean_rho_dropped: float
    req_rate_idle: float
    req_rate_queued: float
    req_rate_served: float
    sum_rate_bps: float
    served_counts: np.ndarray
    queued_counts: np.ndarray
    idle_cover_counts: np.ndarray
    sleep_levels: np.ndarray
    m_cfgs: np.ndarray
    waking: np.ndarray
    dropped_bits: float
    xf_bits: float
    delivered_bits: float
    energy_j: float


class NetworkEnv:
    """The multi-cell network as a shared-reward multi-agent environment."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.topology = config.topology.build()
        self.profile = config.traffic.build_profile()
        self.radio_params = config.radio
        self.sleep_table = config.sleep_modes

        self.num_agents = self.topology.num_bs
        self._dt_ms = config.sim_step_ms
        self._dt_s = config.sim_step_ms * 1e-3
        self._interval_steps = config.steps_per_interval
        self._interval_s = config.agent_interval_ms * 1e-3
        self._episode_steps = config.agent_steps_per_episode
        self._file_bits = config.traffic.file_bits
        self._file_mb = config.traffic.file_mb
        self._area_km2 = self.topology.area_km2

        r = config.radio
        self._noise_w = radio.noise_power_w(r)
        self._p_ref_w = radio.bs_power_w(0, r.m_max, 0, r, self.sleep_table)
        self._pc_norm_w = self.num_agents * self._p_ref_w
        self._rate_ref = (self.num_agents * r.bandwidth_hz
                          * math.log2(1.0 + config.obs.sinr_ref))
        self._awake_w_per_antenna = r.pa_tx_power_w / r.pa_efficiency + r.bb_coeff_m_w
        self._bb_per_ue_w = r.bb_coeff_k_w
        self._p_fixed_w = r.p_fixed_w
        self._sleep_idle_w = tuple(d * r.p_fixed_w
                                   for d in self.sleep_table.discount)
        self._req_rate_by_cat = {
            c.id: self._file_bits / (c.delay_budget_ms * 1e-3)
            for c in traffic.CATEGORIES}
        # Profile time runs faster than simulated time so that the
        # configured number of diurnal cycles fits into one episode.
        self._time_scale = (self.profile.period_s
                            * config.traffic.cycles_per_episode
                            / config.episode_s)
        self._p_out = np.zeros(self.num_agents)
        self.reset(config.seed)

    # -- observation geometry -----------------------------------------

    @property
    def obs_dim(self) -> int:
        return GLOBAL_DIM + LOCAL_DIM

    def critic_dim(self, variant: str = "full") -> int:
        if variant == "full":
            return GLOBAL_DIM + LOCAL_DIM * self.num_agents
        if variant == "neighbor":
            return GLOBAL_DIM + LOCAL_DIM * 7
        raise ValueError(f"unknown critic variant {variant!r}")

    @property
    def agent_steps_per_episode(self) -> int:
        return self._episode_steps

    @property
    def time_s(self) -> float:
        return self._micro_steps * self._dt_s

    @property
    def episode_done(self) -> bool:
        return self._agent_steps >= self._episode_steps

    # -- lifecycle ------------------------------------------------------

    def reset(self, seed=None) -> np.ndarray:
        """Fresh episode: all BSs awake at full antenna count, no UEs."""
        if seed is None:
            seed = self.config.seed
        self._rng = np.random.default_rng(seed)
        self._bs = [_BsState(i, self.config.radio.m_max)
                    for i in range(self.num_agents)]
        self._ues: list[traffic.UeState] = []
        self._next_ue_id = 0
        self._micro_steps = 0
        self._agent_steps = 0
        # interval accumulators
        self._iv_outcomes: list[traffic.UeOutcome] = []
        self._iv_energy_j = 0.0
        self._iv_energy_per_bs = np.zeros(self.num_agents)
        self._iv_delivered_bits = 0.0
        self._iv_dropped_bits = 0.0
        self._iv_xf_bits = 0.0
        # episode accumulators
        self._ep_energy_j = 0.0
        self._ep_delivered_bits = 0.0
        self._ep_dropped_bits = 0.0
        self._ep_xf_bits = 0.0
        self._ep_arrivals = 0
        self._ep_departures = 0
        self._last_reward: RewardRecord | None = None
        self._stats = self._snapshot(instantaneous_pc=True)
        return self.observations()

    def step(self, action) -> tuple[np.ndarray, RewardRecord, dict]:
        """Apply one joint action, advance one agent interval."""
        self.apply_actions(action)
        for _ in range(self._interval_steps):
            self.micro_step()
        reward = self._close_interval()
        return self.observations(), reward, self.step_record(reward)

    # -- control --------------------------------------------------------

    def apply_actions(self, action) -> None:
        """Antenna deltas first, then sleep-target semantics per BS.

        Deeper sleep is immediate but masked to a no-op while the BS
        serves UEs; any shallower target starts a full wake transition
        lasting the current level's activation latency. Wake requests
        during an ongoing transition are no-ops.
        """
        if isinstance(action, JointAction):
            deltas, targets = action.deltas, action.targets
        else:
            ja = JointAction.from_indices(action, self.config.radio.antenna_step)
            deltas, targets = ja.deltas, ja.targets
        if len(deltas) != self.num_agents or len(targets) != self.num_agents:
            raise ValueError("joint action must cover every BS")
        m_min = self.config.radio.m_min
        m_max = self.config.radio.m_max
        step = self.config.radio.antenna_step
        latency = self.sleep_table.latency_ms
        for bs, delta, target in zip(self._bs, deltas, targets):
            delta = int(delta)
            target = int(target)
            if delta not in (-step, 0, step) or not 0 <= target < NUM_SLEEP_LEVELS:
                raise ValueError("action outside the joint action space")
            bs.m_cfg = min(m_max, max(m_min, bs.m_cfg + delta))
            current = bs.sleep_level
            if target > current:
                if not bs.served:  # sleep-while-serving is masked
                    bs.sleep_level = target
                    bs.waking = False
                    bs.wake_timer_ms = 0.0
            elif target < current and not bs.waking:
                bs.waking = True
                bs.wake_timer_ms = latency[current]

    def micro_step(self) -> None:
        """Advance the network by one simulation step."""
        dt_ms = self._dt_ms
        dt_s = self._dt_s
        bss = self._bs
        ues = self._ues

        # (1) wake transitions: a BS stays unavailable for exactly its
        # activation latency, then serves from the following step on
        for bs in bss:
            if bs.waking:
                if bs.wake_timer_ms <= 0.0:
                    bs.waking = False
                    bs.sleep_level = 0
                else:
                    bs.wake_timer_ms -= dt_ms

        # (2) arrivals
        t_s = self._micro_steps * dt_s
        kappas = self.profile.densities_at(t_s * self._time_scale)
        lam = kappas * (self._area_km2 / self._file_mb * dt_s)
        new = traffic.sample_arrivals(
            self._rng, lam, self.topology.bounds, self.topology.positions,
            self.radio_params, self._file_bits, self._next_ue_id,
            self._micro_steps)
        if new:
            self._next_ue_id += len(new)
            self._ep_arrivals += len(new)
            ues.extend(new)

        # (3) association: unserved UEs greedily attach to the
        # strongest-gain active BS with precoding headroom
        active = [bs for bs in bss if bs.sleep_level == 0]
        any_active = bool(active)
        for ue in ues:
            if ue.phase == SERVED:
                continue
            best = None
            best_beta = -1.0
            betas = ue.betas
            for bs in active:
                if len(bs.served) + 2 <= bs.m_cfg:
                    b = betas[bs.index]
                    if b > best_beta:
                        best_beta = b
                        best = bs
            if best is not None:
                ue.phase = SERVED
                ue.serving_bs = best.index
                best.served.append(ue)
            else:
                ue.phase = QUEUED if any_active else IDLE

        # (4)+(5) power allocation and service rates
        p_out = self._p_out
        p_out.fill(0.0)
        pa = self.radio_params.pa_tx_power_w
        bandwidth = self.radio_params.bandwidth_hz
        noise = self._noise_w
        for bs in active:
            if bs.served:
                p_out[bs.index] = bs.m_cfg * pa
        for bs in active:
            served = bs.served
            if not served:
                continue
            k = len(served)
            m = bs.m_cfg
            if k >= m:
                raise InvariantError(
                    f"BS {bs.index} serves {k} UEs with {m} antennas")
            demands = np.array([u.remaining_demand_bits for u in served])
            times = np.array([(u.category.delay_budget_ms - u.elapsed_ms) * 1e-3
                              for u in served])
            powers = radio.allocate_power(m * pa, demands, times, bandwidth)
            c = bs.index
            for ue, p_ue in zip(served, powers):
                s = radio.sinr(c, ue.betas, p_out, m, k, p_ue, noise)
                ue.rate_bps = radio.achievable_rate_bps(s, bandwidth)

        # (6) demand and delay updates
        delivered = 0.0
        for ue in ues:
            r = ue.rate_bps
            if r:
                before = ue.remaining_demand_bits
                traffic.update_demand(ue, r, dt_s)
                delivered += before - ue.remaining_demand_bits
                ue.rate_bps = 0.0
            else:
                traffic.update_demand(ue, 0.0, dt_s)
        self._iv_delivered_bits += delivered
        self._ep_delivered_bits += delivered

        # (7) departures
        departed = False
        for ue in ues:
            outcome = traffic.finalize_if_departing(ue)
            if outcome is None:
                continue
            departed = True
            if ue.serving_bs is not None:
                bss[ue.serving_bs].served.remove(ue)
                ue.serving_bs = None
            self._iv_outcomes.append(outcome)
            self._iv_dropped_bits += outcome.dropped_bits
            self._iv_xf_bits += self._file_bits
            self._ep_dropped_bits += outcome.dropped_bits
            self._ep_xf_bits += self._file_bits
            self._ep_departures += 1
        if departed:
            self._ues = [u for u in ues if u.phase != DEPARTED]

        # (8) energy accounting (kept in lockstep with radio.bs_power_w)
        energy_bs = self._iv_energy_per_bs
        total = 0.0
        for bs in bss:
            level = bs.sleep_level
            if level:
                p = self._sleep_idle_w[level]
            else:
                p = (bs.m_cfg * self._awake_w_per_antenna
                     + self._bb_per_ue_w * len(bs.served) + self._p_fixed_w)
            energy_bs[bs.index] += p * dt_s
            total += p * dt_s
        self._iv_energy_j += total
        self._ep_energy_j += total
        self._micro_steps += 1

    # -- interval close and observations --------------------------------

    def _close_interval(self) -> RewardRecord:
        reward = compute_reward(
            self._iv_outcomes, self._iv_energy_j, self._interval_s,
            self.config.reward.w_qos, self.config.w_pc,
            self.config.reward.phi, self._pc_norm_w)
        self._stats = self._snapshot(instantaneous_pc=False)
        self._last_reward = reward
        self._iv_outcomes = []
        self._iv_energy_j = 0.0
        self._iv_energy_per_bs = np.zeros(self.num_agents)
        self._iv_delivered_bits = 0.0
        self._iv_dropped_bits = 0.0
        self._iv_xf_bits = 0.0
        self._agent_steps += 1
        return reward

    def _snapshot(self, instantaneous_pc: bool) -> _IntervalStats:
        c = self.num_agents
        if instantaneous_pc:
            pc_per_bs = np.array([self.instantaneous_bs_power_w(i)
                                  for i in range(c)])
        else:
            pc_per_bs = self._iv_energy_per_bs / self._interval_s
        rho_cap = self.config.obs.rho_cap
        fin = [o for o in self._iv_outcomes if o.finished]
        drop = [o for o in self._iv_outcomes if not o.finished]
        req_idle = req_queued = req_served = 0.0
        served_counts = np.zeros(c)
        queued_counts = np.zeros(c)
        idle_cover = np.zeros(c)
        for ue in self._ues:
            req = self._req_rate_by_cat[ue.category.id]
            if ue.phase == SERVED:
                req_served += req
                served_counts[ue.serving_bs] += 1
            elif ue.phase == QUEUED:
                req_queued += req
                queued_counts[ue.best_bs] += 1
            else:
                req_idle += req
                idle_cover[ue.best_bs] += 1
        return _IntervalStats(
            pc_total_w=float(pc_per_bs.sum()),
            pc_per_bs=pc_per_bs,
            n_finished=len(fin),
            n_dropped=len(drop),
            mean_rho_finished=(sum(min(o.rho, rho_cap) for o in fin) / len(fin)
                               if fin else 0.0),
            mean_rho_dropped=(sum(o.rho for o in drop) / len(drop)
                              if drop else 0.0),
            req_rate_idle=req_idle,
            req_rate_queued=req_queued,
            req_rate_served=req_served,
            sum_rate_bps=self._iv_delivered_bits / self._interval_s,
            served_counts=served_counts,
            queued_counts=queued_counts,
            idle_cover_counts=idle_cover,
            sleep_levels=np.array([bs.sleep_level for bs in self._bs]),
            m_cfgs=np.array([bs.m_cfg for bs in self._bs]),
            waking=np.array([bs.waking for bs in self._bs]),
            dropped_bits=self._iv_dropped_bits,
            xf_bits=self._iv_xf_bits,
            delivered_bits=self._iv_delivered_bits,
            energy_j=self._iv_energy_j,
        )

    def _global_block(self) -> np.ndarray:
        s = self._stats
        cap = self.config.obs.ue_count_cap
        return np.array([
            s.pc_total_w / self._pc_norm_w,
            s.n_finished / cap,
            s.n_dropped / cap,
            s.mean_rho_finished / self.config.obs.rho_cap,
            s.mean_rho_dropped,
            s.req_rate_idle / self._rate_ref,
            s.req_rate_queued / self._rate_ref,
            s.req_rate_served / self._rate_ref,
            s.sum_rate_bps / self._rate_ref,
        ])

    def _local_blocks(self) -> np.ndarray:
        s = self._stats
        cap = self.config.obs.ue_count_cap
        out = np.empty((self.num_agents, LOCAL_DIM))
        out[:, 0] = s.pc_per_bs / self._p_ref_w
        out[:, 1] = s.m_cfgs / self.config.radio.m_max
        out[:, 2] = s.sleep_levels / (NUM_SLEEP_LEVELS - 1)
        out[:, 3] = s.served_counts / cap
        out[:, 4] = s.queued_counts / cap
        return out

    def observe(self, bs_index: int) -> np.ndarray:
        """One agent's observation: global block plus its own local block."""
        return np.concatenate([self._global_block(),
                               self._local_blocks()[bs_index]])

    def observations(self) -> np.ndarray:
        """All agents' observations, shape (C, obs_dim)."""
        g = self._global_block()
        locals_ = self._local_blocks()
        return np.hstack([np.tile(g, (self.num_agents, 1)), locals_])

    def global_observe(self) -> np.ndarray:
        """Centralized critic input: global block plus every local block."""
        return np.concatenate([self._global_block(),
                               self._local_blocks().ravel()])

    def neighbor_observe(self, bs_index: int) -> np.ndarray:
        """Critic input restricted to a BS and its 6 closest neighbors."""
        neighbors = self.topology.neighbor_table[bs_index]
        if len(neighbors) < 6:
            raise ValueError("neighbor critic needs at least 7 BSs")
        locals_ = self._local_blocks()
        parts = [self._global_block(), locals_[bs_index]]
        parts += [locals_[n] for n in neighbors[:6]]
        return np.concatenate(parts)

    def critic_inputs(self, variant: str = "full") -> np.ndarray:
        """Per-agent critic inputs, shape (C, critic_dim(variant))."""
        if variant == "full":
            return np.tile(self.global_observe(), (self.num_agents, 1))
        if variant == "neighbor":
            return np.stack([self.neighbor_observe(c)
                             for c in range(self.num_agents)])
        raise ValueError(f"unknown critic variant {variant!r}")

    def policy_info(self) -> dict:
        """Raw per-BS state for rule-based controllers."""
        s = self._stats
        return {
            "served": s.served_counts,
            "queued": s.queued_counts,
            "idle_cover": s.idle_cover_counts,
            "sleep_level": s.sleep_levels,
            "m_cfg": s.m_cfgs,
            "waking": s.waking,
        }

    # -- metrics ---------------------------------------------------------

    def instantaneous_bs_power_w(self, bs_index: int) -> float:
        bs = self._bs[bs_index]
        return radio.bs_power_w(len(bs.served), bs.active_antennas,
                                bs.sleep_level, self.radio_params,
                                self.sleep_table)

    def instantaneous_power_w(self) -> float:
        return sum(self.instantaneous_bs_power_w(i)
                   for i in range(self.num_agents))

    def step_record(self, reward: RewardRecord) -> dict:
        """One JSON-lines metrics record for the interval just closed."""
        s = self._stats
        return {
            "step": self._agent_steps,
            "time_s": self.time_s,
            "pc_w": s.pc_total_w,
            "drop_ratio": (s.dropped_bits / s.xf_bits if s.xf_bits else None),
            "sum_rate_bps": s.sum_rate_bps,
            "ee_bits_per_j": (s.delivered_bits / s.energy_j
                              if s.energy_j > 0 else None),
            "reward": reward.reward,
            "xi": reward.xi,
            "per_bs": [{"m": bs.m_cfg, "s": bs.sleep_level}
                       for bs in self._bs],
        }

    @property
    def last_interval_stats(self) -> _IntervalStats:
        """Snapshot of the most recently closed agent interval."""
        return self._stats

    def metrics(self) -> dict:
        """Episode-so-far aggregates."""
        t = self.time_s
        return {
            "time_s": t,
            "avg_pc_w": self._ep_energy_j / t if t else None,
            "drop_ratio": (self._ep_dropped_bits / self._ep_xf_bits
                           if self._ep_xf_bits else None),
            "sum_rate_bps": self._ep_delivered_bits / t if t else None,
            "ee_bits_per_j": (self._ep_delivered_bits / self._ep_energy_j
                              if self._ep_energy_j > 0 else None),
            "energy_j": self._ep_energy_j,
            "delivered_bits": self._ep_delivered_bits,
            "dropped_bits": self._ep_dropped_bits,
            "offered_bits": self._ep_xf_bits,
            "arrivals": self._ep_arrivals,
            "departures": self._ep_departures,
        }

    def diurnal_hour(self, time_s: float) -> int:
        """ 0..23 bucket of the profile period a simulated time maps to."""
        frac = (time_s * self._time_scale / self.profile.period_s) % 1.0
        return int(frac * 24.0)
