"""Hexagonal BS layouts and nearest-neighbor tables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Topology", "hex_topology", "make_topology", "build_neighbor_table"]


@dataclass(frozen=True)
class Topology:
    """BS positions inside a square deployment area."""

    positions: np.ndarray  # (C, 2) meters
    side_m: float
    bs_spacing_m: float
    neighbor_table: tuple[tuple[int, ...], ...]

    @property
    def num_bs(self) -> int:
        return self.positions.shape[0]

    @property
    def area_km2(self) -> float:
        return (self.side_m / 1000.0) ** 2

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((0.0, self.side_m), (0.0, self.side_m))


def build_neighbor_table(positions: np.ndarray,
                         k: int = 6) -> tuple[tuple[int, ...], ...]:
    """For each BS, its k closest peers by ascending distance.

    Distances are compared at micrometer resolution so that geometrically
    equidistant sites tie exactly; ties break toward the lower index.
    """
    n = positions.shape[0]
    k = min(k, n - 1)
    table = []
    for i in range(n):
        d = np.hypot(positions[:, 0] - positions[i, 0],
                     positions[:, 1] - positions[i, 1])
        order = sorted((round(float(d[j]), 6), j) for j in range(n) if j != i)
        table.append(tuple(j for _, j in order[:k]))
    return tuple(table)


def _ring(center: tuple[float, float], radius: float, count: int,
          phase_deg: float) -> list[tuple[float, float]]:
    cx, cy = center
    pts = []
    for idx in range(count):
        ang = math.radians(phase_deg + idx * 360.0 / count)
        pts.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    return pts


def hex_topology(num_bs: int = 7, spacing_m: float = 400.0) -> Topology:
    """Standard layouts: 7 BSs in a 1 km square or 19 in a 2 km square.

    One BS sits at the center; six surround it as a hexagon of side
    ``spacing_m``. The 19-BS layout adds the second hexagonal ring
    (six corners at 2*spacing, six edge midpoints at sqrt(3)*spacing).
    """
    if num_bs == 7:
        side = 1000.0
    elif num_bs == 19:
        side = 2000.0
    else:
        raise ValueError("hex layouts support 7 or 19 BSs")
    center = (side / 2.0, side / 2.0)
    pts = [center]
    pts += _ring(center, spacing_m, 6, 0.0)
    if num_bs == 19:
        corners = _ring(center, 2.0 * spacing_m, 6, 0.0)
        mids = _ring(center, math.sqrt(3.0) * spacing_m, 6, 30.0)
        for c, m in zip(corners, mids):
            pts.append(c)
            pts.append(m)
    positions = np.array(pts)
    return Topology(positions=positions, side_m=side, bs_spacing_m=spacing_m,
                    neighbor_table=build_neighbor_table(positions))


def make_topology(positions, side_m: float,
                  spacing_m: float = 400.0) -> Topology:
    """Topology from explicit BS positions (meters) in a square area."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
        raise ValueError("positions must be a (C, 2) array")
    if side_m <= 0:
        raise ValueError("side_m must be positive")
    if np.any(pos < 0) or np.any(pos > side_m):
        raise ValueError("all positions must lie inside the area")
    return Topology(positions=pos, side_m=side_m, bs_spacing_m=spacing_m,
                    neighbor_table=build_neighbor_table(pos))
