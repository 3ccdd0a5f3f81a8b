"""UE arrivals, demand evolution and departure bookkeeping.

Traffic intensity comes from per-category diurnal density profiles in
Mb/s/km^2 on a periodic slot grid. Each UE requests one fixed-size file
and leaves once the file is delivered or its delay budget expires.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from cellsleep.radio import RadioParams, path_loss_db

__all__ = [
    "ServiceCategory",
    "CATEGORIES",
    "TrafficProfile",
    "UeState",
    "UeOutcome",
    "IDLE",
    "QUEUED",
    "SERVED",
    "DEPARTED",
    "arrival_rate",
    "sample_arrivals",
    "update_demand",
    "finalize_if_departing",
    "synth_profile",
]

IDLE = "idle"
QUEUED = "queued"
SERVED = "served"
DEPARTED = "departed"


@dataclass(frozen=True)
class ServiceCategory:
    """One of the three delay classes a UE request can fall into."""

    id: int
    delay_budget_ms: float
    label: str


CATEGORIES: tuple[ServiceCategory, ...] = (
    ServiceCategory(1, 50.0, "delay-stringent"),
    ServiceCategory(2, 150.0, "delay-sensitive"),
    ServiceCategory(3, 300.0, "delay-tolerant"),
)

CSV_HEADER = ["category", "slot", "density_mbps_km2"]


@dataclass
class TrafficProfile:
    """Per-category traffic densities on a periodic slot grid.

    ``densities[z, t]`` is the density of category z+1 during slot t in
    Mb/s/km^2; lookups wrap around with the profile's period.
    """

    slot_duration_s: float
    densities: np.ndarray  # shape (3, period_slots)

    def __post_init__(self) -> None:
        self.densities = np.asarray(self.densities, dtype=float)
        if self.slot_duration_s <= 0:
            raise ValueError("slot_duration_s must be positive")
        if self.densities.ndim != 2 or self.densities.shape[0] != len(CATEGORIES):
            raise ValueError("densities must have one row per category")
        if self.densities.shape[1] < 1:
            raise ValueError("profile needs at least one slot")
        if np.any(self.densities < 0):
            raise ValueError("densities must be nonnegative")

    @property
    def period_slots(self) -> int:
        return self.densities.shape[1]

    @property
    def period_s(self) -> float:
        return self.period_slots * self.slot_duration_s

    def density_at(self, time_s: float, category_id: int) -> float:
        """Density of the given category at a profile time (periodic)."""
        if not 1 <= category_id <= len(CATEGORIES):
            raise ValueError(f"unknown category {category_id}")
        slot = int(time_s // self.slot_duration_s) % self.period_slots
        return float(self.densities[category_id - 1, slot])

    def densities_at(self, time_s: float) -> np.ndarray:
        """All three category densities at a profile time."""
        slot = int(time_s // self.slot_duration_s) % self.period_slots
        return self.densities[:, slot]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for z in range(self.densities.shape[0]):
                for t in range(self.period_slots):
                    writer.writerow([z + 1, t, repr(float(self.densities[z, t]))])

    @classmethod
    def from_csv(cls, path, slot_duration_s: float = 1200.0) -> "TrafficProfile":
        """Read a `category,slot,density_mbps_km2` table; the grid must be complete."""
        cells: dict[tuple[int, int], float] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise ValueError(
                    f"profile CSV must have header {','.join(CSV_HEADER)}")
            for row in reader:
                z = int(row["category"])
                t = int(row["slot"])
                dens = float(row["density_mbps_km2"])
                if not 1 <= z <= len(CATEGORIES):
                    raise ValueError(f"bad category {z} in profile CSV")
                if t < 0:
                    raise ValueError(f"negative slot {t} in profile CSV")
                if dens < 0:
                    raise ValueError(f"negative density at ({z},{t})")
                cells[(z, t)] = dens
        if not cells:
            raise ValueError("profile CSV contains no rows")
        period = max(t for _, t in cells) + 1
        dens = np.zeros((len(CATEGORIES), period))
        for z in range(1, len(CATEGORIES) + 1):
            for t in range(period):
                if (z, t) not in cells:
                    raise ValueError(f"profile CSV missing entry ({z},{t})")
                dens[z - 1, t] = cells[(z, t)]
        return cls(slot_duration_s=slot_duration_s, densities=dens)


def synth_profile(peak_densities, trough_fraction: float,
                  slots_per_day: int,
                  slot_duration_s: float = 1200.0) -> TrafficProfile:
    """Sinusoidal diurnal profile: trough at slot 0, peak at mid-day.

    kappa(slot) = trough + (peak - trough) * (1 + sin(2*pi*slot/S - pi/2))/2
    with trough = trough_fraction * peak, per category.
    """
    peaks = np.asarray(peak_densities, dtype=float)
    if peaks.shape != (len(CATEGORIES),):
        raise ValueError("need one peak density per category")
    if np.any(peaks <= 0):
        raise ValueError("peak densities must be positive")
    if not 0.0 <= trough_fraction <= 1.0:
        raise ValueError("trough_fraction must lie in [0, 1]")
    if slots_per_day < 1:
        raise ValueError("slots_per_day must be >= 1")
    slots = np.arange(slots_per_day)
    shape = (1.0 + np.sin(2.0 * np.pi * slots / slots_per_day - np.pi / 2)) / 2.0
    trough = trough_fraction * peaks
    dens = trough[:, None] + (peaks - trough)[:, None] * shape[None, :]
    return TrafficProfile(slot_duration_s=slot_duration_s, densities=dens)


@dataclass(slots=True)
class UeState:
    """One UE's request through its lifetime in the network.

    ``betas`` holds the linear gain to every BS, drawn once at arrival
    (quasi-static shadowing). ``rate_bps`` is the service rate granted in
    the current micro step; zero whenever the UE is not served.
    """

    id: int
    position: tuple[float, float]
    category: ServiceCategory
    demand_bits: float
    remaining_demand_bits: float
    elapsed_ms: float
    phase: str
    serving_bs: int | None
    betas: np.ndarray
    best_bs: int
    arrival_step: int
    rate_bps: float = 0.0


@dataclass(frozen=True)
class UeOutcome:
    """Departure record of one UE (finished or dropped)."""

    ue_id: int
    finished: bool
    dropped_bits: float
    drop_ratio: float
    avg_rate_bps: float
    required_rate_bps: float
    departure_delay_ms: float

    @property
    def rho(self) -> float:
        """Achieved-over-required average rate; < 1 iff dropped."""
        return self.avg_rate_bps / self.required_rate_bps


def arrival_rate(kappa_mbps_km2: float, area_km2: float, file_mb: float,
                 dt_s: float) -> float:
    """Expected UE arrivals per step: kappa * area / file_size * dt."""
    if kappa_mbps_km2 < 0:
        raise ValueError("traffic density must be nonnegative")
    if area_km2 <= 0 or file_mb <= 0 or dt_s <= 0:
        raise ValueError("area, file size and step must be positive")
    return kappa_mbps_km2 * area_km2 / file_mb * dt_s


def sample_arrivals(rng: np.random.Generator, lambdas, bounds,
                    bs_positions: np.ndarray, params: RadioParams,
                    file_bits: float, next_id: int,
                    step: int) -> list[UeState]:
    """Draw Poisson arrivals for each category and place them uniformly.

    Every new UE gets a fresh shadow-fading draw per BS, frozen for its
    lifetime. Distances are clamped to 1 m so a UE landing on top of a
    mast keeps a finite gain.
    """
    counts = rng.poisson(np.asarray(lambdas, dtype=float))
    if not counts.any():
        return []
    (xmin, xmax), (ymin, ymax) = bounds
    bs_x = bs_positions[:, 0]
    bs_y = bs_positions[:, 1]
    num_bs = bs_positions.shape[0]
    sigma = params.shadow_sigma_db
    ues = []
    uid = next_id
    for cat, n in zip(CATEGORIES, counts):
        for _ in range(int(n)):
            x = rng.uniform(xmin, xmax)
            y = rng.uniform(ymin, ymax)
            d = np.maximum(np.hypot(bs_x - x, bs_y - y), 1.0)
            shadows = rng.normal(0.0, sigma, size=num_bs)
            betas = 10.0 ** ((path_loss_db(d, params.carrier_freq_ghz)
                              + shadows) / 10.0)
            ues.append(UeState(
                id=uid,
                position=(x, y),
                category=cat,
                demand_bits=file_bits,
                remaining_demand_bits=file_bits,
                elapsed_ms=0.0,
                phase=IDLE,
                serving_bs=None,
                betas=betas,
                best_bs=int(np.argmax(betas)),
                arrival_step=step,
            ))
            uid += 1
    return ues


def update_demand(ue: UeState, rate_bps: float, dt_s: float) -> UeState:
    """Advance one UE by one step: drain demand at the served rate, age it."""
    if rate_bps:
        ue.remaining_demand_bits = max(
            0.0, ue.remaining_demand_bits - rate_bps * dt_s)
    ue.elapsed_ms += dt_s * 1e3
    return ue


def finalize_if_departing(ue: UeState) -> UeOutcome | None:
    """Remove a UE that finished its demand or exhausted its delay budget.

    Returns the departure record, or None while the UE stays. A dropped
    UE is accounted at its full delay budget; a finished one at its actual
    sojourn time.
    """
    budget_ms = ue.category.delay_budget_ms
    if ue.remaining_demand_bits <= 0.0:
        finished = True
        dropped = 0.0
        tau_ms = ue.elapsed_ms
    elif ue.elapsed_ms >= budget_ms:
        finished = False
        dropped = ue.remaining_demand_bits
        tau_ms = budget_ms
    else:
        return None
    ue.phase = DEPARTED
    delivered = ue.demand_bits - dropped
    return UeOutcome(
        ue_id=ue.id,
        finished=finished,
        dropped_bits=dropped,
        drop_ratio=dropped / ue.demand_bits,
        avg_rate_bps=delivered / (tau_ms * 1e-3),
        required_rate_bps=ue.demand_bits / (budget_ms * 1e-3),
        departure_delay_ms=tau_ms,
    )
