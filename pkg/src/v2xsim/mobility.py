"""Manhattan-grid mobility clipped to a circular arena.

Vehicles drive along grid lines at constant speed. At each intersection they keep
going straight with probability ``p_straight`` and otherwise turn left or right with
equal odds. Reaching the circle reverses the heading on the same street.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from v2xsim.scenario import ScenarioConfig

_EPS = 1e-9


class Heading(Enum):
    PX = (1, 0)
    NX = (-1, 0)
    PY = (0, 1)
    NY = (0, -1)

    @property
    def dx(self) -> int:
        return self.value[0]

    @property
    def dy(self) -> int:
        return self.value[1]

    @property
    def horizontal(self) -> bool:
        return self.value[1] == 0

    def left(self) -> "Heading":
        return Heading((-self.dy, self.dx))

    def right(self) -> "Heading":
        return Heading((self.dy, -self.dx))

    def reverse(self) -> "Heading":
        return Heading((-self.dx, -self.dy))


@dataclass(frozen=True)
class VehicleKinematics:
    x: float
    y: float
    heading: Heading
    speed: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def street(self) -> tuple[str, float]:
        """The grid line being travelled: ('y', c) is the horizontal line y = c."""
        return ("y", self.y) if self.heading.horizontal else ("x", self.x)


@dataclass(frozen=True)
class GridLayout:
    grid_spacing: float
    area_radius: float

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "GridLayout":
        return cls(config.grid_spacing, config.area_radius)

    def street_offsets(self) -> list[float]:
        """Offsets c of grid lines that cut the circle with positive length."""
        g, r = self.grid_spacing, self.area_radius
        k_max = int(math.floor(r / g))
        return [k * g for k in range(-k_max, k_max + 1) if abs(k * g) < r]

    def half_length(self, offset: float) -> float:
        """Half the chord length of the grid line at ``offset``."""
        return math.sqrt(max(self.area_radius**2 - offset**2, 0.0))

    @property
    def intersections(self) -> list[tuple[float, float]]:
        g, r = self.grid_spacing, self.area_radius
        k_max = int(math.floor(r / g))
        pts = []
        for i in range(-k_max, k_max + 1):
            for j in range(-k_max, k_max + 1):
                if math.hypot(i * g, j * g) <= r + _EPS:
                    pts.append((i * g, j * g))
        return pts


def spawn_vehicles(config: ScenarioConfig, rngs: list[np.random.Generator] | np.random.Generator) -> list[VehicleKinematics]:
    """Place ``n_vehicles`` uniformly along the street network inside the circle.

    ``rngs`` is either one generator shared by all vehicles or one per vehicle.
    """
    n = config.n_vehicles
    if n == 0:
        return []
    if isinstance(rngs, np.random.Generator):
        rngs = [rngs] * n
    layout = GridLayout.from_config(config)
    offsets = layout.street_offsets()
    # each offset yields one horizontal and one vertical street of the same length
    streets = [(axis, c) for c in offsets for axis in ("y", "x")]
    lengths = np.array([2 * layout.half_length(c) for _, c in streets])
    cum = np.cumsum(lengths) / lengths.sum()

    out = []
    for rng in rngs[:n]:
        idx = min(int(np.searchsorted(cum, rng.random(), side="right")), len(streets) - 1)
        axis, c = streets[idx]
        half = layout.half_length(c)
        s = rng.uniform(-half, half)
        forward = rng.random() < 0.5
        speed = rng.uniform(config.speed_min, config.speed_max)
        if axis == "y":
            heading = Heading.PX if forward else Heading.NX
            out.append(VehicleKinematics(s, c, heading, speed))
        else:
            heading = Heading.PY if forward else Heading.NY
            out.append(VehicleKinematics(c, s, heading, speed))
    return out


def choose_turn(rng: np.random.Generator, p_straight: float) -> str:
    u = rng.random()
    if u < p_straight:
        return "straight"
    if u < p_straight + (1.0 - p_straight) / 2.0:
        return "left"
    return "right"


def step(vehicle: VehicleKinematics, dt: float, layout: GridLayout, rng: np.random.Generator,
         p_straight: float = 0.70) -> VehicleKinematics:
    """Advance one vehicle by ``speed * dt`` metres along the grid."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    g = layout.grid_spacing
    heading = vehicle.heading
    # work in street coordinates: s along the street, c the street offset
    if heading.horizontal:
        s, c, d = vehicle.x, vehicle.y, heading.dx
    else:
        s, c, d = vehicle.y, vehicle.x, heading.dy
    remaining = vehicle.speed * dt

    for _ in range(100_000):
        if remaining <= 0:
            break
        limit = layout.half_length(c)
        boundary = d * limit
        to_boundary = abs(boundary - s)
        if d > 0:
            nxt = (math.floor(s / g + _EPS) + 1) * g
        else:
            nxt = (math.ceil(s / g - _EPS) - 1) * g
        to_next = abs(nxt - s)
        reachable = abs(nxt) < limit - _EPS

        if reachable and to_next <= remaining and to_next < to_boundary:
            remaining -= to_next
            s = nxt
            turn = choose_turn(rng, p_straight)
            if turn != "straight":
                new = heading.left() if turn == "left" else heading.right()
                # the crossed intersection sits at (s, c) in old coordinates
                s, c = c, s
                heading = new
                d = new.dx if new.horizontal else new.dy
        elif to_boundary <= remaining:
            remaining -= to_boundary
            s = boundary
            heading = heading.reverse()
            d = -d
        else:
            s += d * remaining
            remaining = 0.0

    if heading.horizontal:
        return VehicleKinematics(s, c, heading, vehicle.speed)
    return VehicleKinematics(c, s, heading, vehicle.speed)


def rsu_positions(config: ScenarioConfig) -> list[tuple[float, float]]:
    """Fixed RSU sites on the half-radius circle, snapped to the nearest intersection."""
    g, half = config.grid_spacing, config.area_radius / 2.0
    n = config.n_rsu
    if n == 4:
        raw = [(half, 0.0), (-half, 0.0), (0.0, half), (0.0, -half)]
    else:
        raw = [(half * math.cos(2 * math.pi * i / n), half * math.sin(2 * math.pi * i / n))
               for i in range(n)]

    def snap(v: float) -> float:
        # +0.0 normalises -0.0
        return round(v / g) * g + 0.0

    return [(snap(x), snap(y)) for x, y in raw]


def on_street(v: VehicleKinematics, grid_spacing: float, tol: float = 1e-6) -> bool:
    def near(val: float) -> bool:
        k = round(val / grid_spacing)
        return abs(val - k * grid_spacing) <= tol

    return near(v.x) or near(v.y)


def in_circle(v: VehicleKinematics, radius: float, tol: float = 1e-6) -> bool:
    return math.hypot(v.x, v.y) <= radius + tol
