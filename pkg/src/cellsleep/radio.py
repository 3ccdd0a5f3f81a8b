"""Link-budget and power-model numerics for multi-antenna base stations.

Everything here is a pure function of its arguments. Quantities with a
``_db`` suffix are in decibels; all others are linear SI (W, Hz, m, bps).
Link gains span roughly 1e-20..1, so all math stays in float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RadioParams",
    "SleepModeTable",
    "DEFAULT_SLEEP_TABLE",
    "LinkGain",
    "path_loss_db",
    "sample_shadow_db",
    "beta_linear",
    "noise_power_w",
    "sinr",
    "achievable_rate_bps",
    "allocate_power",
    "bs_power_w",
]


@dataclass(frozen=True)
class RadioParams:
    """Radio and power-model constants shared by every BS in the network.

    Defaults: 20 MHz bandwidth at 5 GHz, -204 dB noise PSD, 7 dB noise
    figure, 0.1 W mean transmit power per antenna, 18 W load-independent
    site power, 16..64 antennas switchable in steps of 4.
    """

    bandwidth_hz: float = 20e6
    carrier_freq_ghz: float = 5.0
    noise_psd_db: float = -204.0
    noise_figure_db: float = 7.0
    shadow_sigma_db: float = 7.82
    pa_tx_power_w: float = 0.1
    p_fixed_w: float = 18.0
    pa_efficiency: float = 0.4
    bb_coeff_m_w: float = 0.3
    bb_coeff_k_w: float = 0.2
    m_min: int = 16
    m_max: int = 64
    antenna_step: int = 4

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.carrier_freq_ghz <= 0:
            raise ValueError("carrier_freq_ghz must be positive")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be nonnegative")
        if self.pa_tx_power_w <= 0:
            raise ValueError("pa_tx_power_w must be positive")
        if self.p_fixed_w < 0:
            raise ValueError("p_fixed_w must be nonnegative")
        if not 0 < self.pa_efficiency <= 1:
            raise ValueError("pa_efficiency must lie in (0, 1]")
        if self.bb_coeff_m_w < 0 or self.bb_coeff_k_w < 0:
            raise ValueError("baseband coefficients must be nonnegative")
        if self.m_min < 1:
            raise ValueError("m_min must be >= 1")
        if self.m_max < self.m_min:
            raise ValueError("m_max must be >= m_min")
        if self.antenna_step < 1:
            raise ValueError("antenna_step must be >= 1")
        if (self.m_max - self.m_min) % self.antenna_step != 0:
            raise ValueError("antenna_step must divide (m_max - m_min)")

    @property
    def max_output_power_w(self) -> float:
        """Total radiated power with all antennas transmitting."""
        return self.m_max * self.pa_tx_power_w


@dataclass(frozen=True)
class SleepModeTable:
    """Activation latency and power discount per sleep level (0 = awake)."""

    latency_ms: tuple[float, ...] = (0.0, 1.0, 10.0, 100.0)
    discount: tuple[float, ...] = (1.0, 0.69, 0.5, 0.29)

    def __post_init__(self) -> None:
        if len(self.latency_ms) != 4 or len(self.discount) != 4:
            raise ValueError("sleep table must define exactly 4 levels")
        if self.latency_ms[0] != 0.0:
            raise ValueError("level 0 has no activation latency")
        if self.discount[0] != 1.0:
            raise ValueError("level 0 has no power discount")
        if any(a >= b for a, b in zip(self.latency_ms, self.latency_ms[1:])):
            raise ValueError("latency must increase strictly with level")
        if any(a <= b for a, b in zip(self.discount, self.discount[1:])):
            raise ValueError("discount must decrease strictly with level")
        if any(not 0 < d <= 1 for d in self.discount):
            raise ValueError("discounts must lie in (0, 1]")


DEFAULT_SLEEP_TABLE = SleepModeTable()


@dataclass(frozen=True)
class LinkGain:
    """Large-scale channel gain between one BS and one UE.

    ``beta`` is the linear power gain 10^((PL(d) + shadow)/10).
    """

    beta: float
    distance_m: float
    shadow_db: float

    @classmethod
    def from_geometry(cls, distance_m: float, shadow_db: float,
                      carrier_freq_ghz: float) -> "LinkGain":
        pl = path_loss_db(distance_m, carrier_freq_ghz)
        return cls(beta=10.0 ** ((pl + shadow_db) / 10.0),
                   distance_m=distance_m, shadow_db=shadow_db)


def path_loss_db(distance_m, carrier_freq_ghz):
    """Non-line-of-sight micro-urban path loss in dB (negative-valued gain).

    PL(d) = -35.3 log10(d) - 22.4 - 21.3 log10(f_c) with d in meters and
    f_c in GHz. Accepts scalars or arrays; strictly decreasing in d.
    """
    d = np.asarray(distance_m, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distance must be finite and positive")
    f = np.asarray(carrier_freq_ghz, dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ValueError("carrier frequency must be finite and positive")
    out = -35.3 * np.log10(d) - 22.4 - 21.3 * np.log10(f)
    return float(out) if out.ndim == 0 else out


def sample_shadow_db(rng: np.random.Generator, sigma_db: float) -> float:
    """One log-normal shadow-fading draw (dB), N(0, sigma^2)."""
    if sigma_db < 0:
        raise ValueError("sigma_db must be nonnegative")
    if sigma_db == 0.0:
        return 0.0
    return float(rng.normal(0.0, sigma_db))


def beta_linear(distance_m, shadow_db, carrier_freq_ghz):
    """Linear power gain for (possibly vectorized) distance/shadow pairs."""
    return 10.0 ** ((path_loss_db(distance_m, carrier_freq_ghz)
                     + np.asarray(shadow_db, dtype=float)) / 10.0)


def noise_power_w(params: RadioParams) -> float:
    """Receiver noise power: bandwidth * 10^((N0 + noise figure)/10)."""
    return params.bandwidth_hz * 10.0 ** (
        (params.noise_psd_db + params.noise_figure_db) / 10.0)


def sinr(serving_bs: int, betas: np.ndarray, bs_output_w: np.ndarray,
         m_serving: int, k_serving: int, allocated_w: float,
         noise_w: float) -> float:
    """Downlink SINR of one UE under interference-nulling precoding.

    Args:
        serving_bs: index of the serving BS.
        betas: linear gain from every BS to this UE, length C.
        bs_output_w: total radiated power of every BS; sleeping or idle
            BSs must carry 0. All entries except the serving one interfere.
        m_serving: active antennas at the serving BS.
        k_serving: UEs served by the serving BS (including this one).
        allocated_w: transmit power allocated to this UE.
        noise_w: receiver noise power.

    The caller must only invoke this for an awake serving BS; the array
    gain requires strictly more antennas than served UEs.
    """
    if m_serving <= k_serving:
        raise ValueError("precoding requires more antennas than served UEs")
    if allocated_w < 0:
        raise ValueError("allocated power must be nonnegative")
    interference = float(betas @ bs_output_w) \
        - betas[serving_bs] * bs_output_w[serving_bs]
    signal = (m_serving - k_serving) * betas[serving_bs] * allocated_w
    return signal / (interference + noise_w)


def achievable_rate_bps(sinr_value: float, bandwidth_hz: float) -> float:
    """Shannon rate B*log2(1 + SINR) in bps."""
    if sinr_value < 0:
        raise ValueError("SINR must be nonnegative")
    return bandwidth_hz * math.log1p(sinr_value) / math.log(2.0)


def allocate_power(total_power_w: float, demand_bits, remaining_time_s,
                   bandwidth_hz: float) -> np.ndarray:
    """Split a BS's output power across its served UEs.

    Each UE's weight grows exponentially with the spectral efficiency it
    needs to finish its remaining demand within its remaining delay budget,
    so rate-starved UEs receive the larger share. Returns per-UE powers
    that are nonnegative and sum to ``total_power_w``.
    """
    demand = np.asarray(demand_bits, dtype=float)
    t = np.asarray(remaining_time_s, dtype=float)
    if demand.size == 0:
        return np.zeros(0)
    if np.any(t <= 0):
        raise ValueError("UE past its delay budget must be finalized first")
    se = demand / t / bandwidth_hz
    w = np.exp2(se - se.max())  # rescale before exponentiating; ratios exact
    return total_power_w * (w / w.sum())


def bs_power_w(k_served: int, m_active: int, sleep_level: int,
               params: RadioParams,
               table: SleepModeTable = DEFAULT_SLEEP_TABLE) -> float:
    """Instantaneous BS power draw in W.

    Awake (level 0): M * P_PA + P_BB(K, M) + P_fixed with the linear PA
    model P_PA = p_tx / efficiency and affine baseband power. Sleeping:
    the radio chain is off (M = K = 0) and the idle power is scaled by
    the level's discount factor.
    """
    if sleep_level not in (0, 1, 2, 3):
        raise ValueError("sleep_level must be in 0..3")
    if k_served < 0 or m_active < 0:
        raise ValueError("counts must be nonnegative")
    if sleep_level > 0:
        if k_served > 0:
            raise ValueError("a sleeping BS cannot serve UEs")
        return table.discount[sleep_level] * params.p_fixed_w
    pa_w = params.pa_tx_power_w / params.pa_efficiency
    return (m_active * pa_w
            + params.bb_coeff_m_w * m_active
            + params.bb_coeff_k_w * k_served
            + params.p_fixed_w)
