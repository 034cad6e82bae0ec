"""
Line-of-sight Lambertian channel gains for an indoor LED/photodiode layout.

Every LED is modelled as a generalized Lambertian emitter and the photodiode
as a flat detector with a hard field-of-view cut::

    h = (l + 1) E / (2 pi d^2) * cos^l(emission) * cos(incidence)

with ``l = -ln 2 / ln cos(semi_angle)``.  The gain is zero once the incidence
angle exceeds the field of view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Gains below this are treated as exact zeros.
GAIN_FLOOR = 1e-30

DOWN = (0.0, 0.0, -1.0)
UP = (0.0, 0.0, 1.0)


class GeometryError(ValueError):
    """Raised for invalid room layouts or optics parameters."""


def _unit(v: Sequence[float], name: str) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise GeometryError(f"{name} must be a 3-vector, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if not np.isfinite(norm) or norm == 0.0:
        raise GeometryError(f"{name} must be a finite non-zero vector")
    return tuple(float(c) for c in arr / norm)


def _point(v: Sequence[float], name: str) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} must be a finite 3-D point")
    return tuple(float(c) for c in arr)


@dataclass(frozen=True)
class RoomScenario:
    """Room, LED positions and photodiode optics.

    Angles are in degrees, lengths in metres, ``pd_area`` in square metres.
    The defaults reproduce the 5 m x 4 m x 3 m room with a 1 cm^2 detector,
    35 degree half-power semi-angle and 72 degree field of view.
    """

    led_positions: tuple[tuple[float, float, float], ...]
    pd_position: tuple[float, float, float] = (2.5, 2.0, 0.8)
    room_dims: tuple[float, float, float] = (5.0, 4.0, 3.0)
    pd_area: float = 1e-4
    semi_angle: float = 35.0
    fov: float = 72.0
    led_orientation: tuple[float, float, float] = DOWN
    pd_orientation: tuple[float, float, float] = UP
    allow_single: bool = field(default=False, repr=False)

    def __post_init__(self):
        dims = _point(self.room_dims, "room_dims")
        if min(dims) <= 0:
            raise GeometryError("room dimensions must be positive")
        leds = tuple(_point(p, f"led_positions[{i}]") for i, p in enumerate(self.led_positions))
        min_leds = 1 if self.allow_single else 2
        if len(leds) < min_leds:
            raise GeometryError(f"need at least {min_leds} LEDs, got {len(leds)}")
        pd = _point(self.pd_position, "pd_position")
        for name, p in [("pd_position", pd)] + [(f"led_positions[{i}]", q) for i, q in enumerate(leds)]:
            if any(c < 0 or c > d for c, d in zip(p, dims)):
                raise GeometryError(f"{name} {p} lies outside the room {dims}")
        if not self.pd_area > 0:
            raise GeometryError("pd_area must be positive")
        if not 0 < self.semi_angle < 90:
            raise GeometryError("semi_angle must lie in (0, 90) degrees")
        if not 0 < self.fov <= 90:
            raise GeometryError("fov must lie in (0, 90] degrees")
        object.__setattr__(self, "room_dims", dims)
        object.__setattr__(self, "led_positions", leds)
        object.__setattr__(self, "pd_position", pd)
        object.__setattr__(self, "led_orientation", _unit(self.led_orientation, "led_orientation"))
        object.__setattr__(self, "pd_orientation", _unit(self.pd_orientation, "pd_orientation"))

    @property
    def num_leds(self) -> int:
        return len(self.led_positions)

    def with_pd(self, position: Sequence[float]) -> "RoomScenario":
        """Copy of the scenario with the photodiode moved."""
        return RoomScenario(
            led_positions=self.led_positions,
            pd_position=tuple(position),
            room_dims=self.room_dims,
            pd_area=self.pd_area,
            semi_angle=self.semi_angle,
            fov=self.fov,
            led_orientation=self.led_orientation,
            pd_orientation=self.pd_orientation,
            allow_single=self.allow_single,
        )


@dataclass(frozen=True)
class ChannelGains:
    """Ordered non-negative channel gains h_1..h_M."""

    gains: tuple[float, ...]

    def __init__(self, gains: Sequence[float], *, allow_single: bool = False):
        arr = np.asarray(gains, dtype=float).ravel()
        min_len = 1 if allow_single else 2
        if arr.size < min_len:
            raise GeometryError(f"need at least {min_len} channel gains, got {arr.size}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise GeometryError("channel gains must be finite and non-negative")
        object.__setattr__(self, "gains", tuple(float(g) for g in arr))

    def __len__(self) -> int:
        return len(self.gains)

    def __getitem__(self, idx):
        return self.gains[idx]

    def __iter__(self):
        return iter(self.gains)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.gains, dtype=float)

    def scaled(self, factor: float) -> "ChannelGains":
        return ChannelGains(self.as_array() * factor, allow_single=len(self) == 1)


def lambertian_order(semi_angle: float) -> float:
    """Lambertian emission order ``-ln 2 / ln cos(semi_angle)`` (degrees in)."""
    if not 0 < semi_angle < 90:
        raise GeometryError(f"semi-angle must lie in (0, 90) degrees, got {semi_angle}")
    return -math.log(2.0) / math.log(math.cos(math.radians(semi_angle)))


def link_angles(scenario: RoomScenario, led_index: int) -> tuple[float, float, float]:
    """Return ``(distance, emission_deg, incidence_deg)`` for a 1-based LED index."""
    m = _check_index(scenario, led_index)
    led = np.asarray(scenario.led_positions[m])
    pd = np.asarray(scenario.pd_position)
    ray = pd - led
    d = float(np.linalg.norm(ray))
    if d == 0.0:
        raise GeometryError(f"LED {led_index} coincides with the photodiode")
    u = ray / d
    cos_emit = float(np.clip(np.dot(u, scenario.led_orientation), -1.0, 1.0))
    cos_inc = float(np.clip(np.dot(-u, scenario.pd_orientation), -1.0, 1.0))
    return d, math.degrees(math.acos(cos_emit)), math.degrees(math.acos(cos_inc))


def _check_index(scenario: RoomScenario, led_index: int) -> int:
    if isinstance(led_index, bool) or not isinstance(led_index, (int, np.integer)):
        raise IndexError(f"LED index must be an integer, got {led_index!r}")
    if not 1 <= led_index <= scenario.num_leds:
        raise IndexError(f"LED index {led_index} outside 1..{scenario.num_leds}")
    return int(led_index) - 1


def channel_gain(scenario: RoomScenario, led_index: int) -> float:
    """LOS gain from LED ``led_index`` (1-based) to the photodiode."""
    d, emit, inc = link_angles(scenario, led_index)
    if inc > scenario.fov or emit >= 90.0:
        return 0.0
    order = lambertian_order(scenario.semi_angle)
    cos_emit = math.cos(math.radians(emit))
    cos_inc = math.cos(math.radians(inc))
    h = (order + 1.0) * scenario.pd_area / (2.0 * math.pi * d * d) * cos_emit ** order * cos_inc
    return h if h >= GAIN_FLOOR else 0.0


def channel_vector(scenario: RoomScenario) -> ChannelGains:
    """All LED gains, in LED order."""
    gains = [channel_gain(scenario, m) for m in range(1, scenario.num_leds + 1)]
    return ChannelGains(gains, allow_single=scenario.allow_single)


def ceiling_grid(num_leds: int, room_dims=(5.0, 4.0, 3.0), spacing: float = 1.0,
                 center=None) -> tuple[tuple[float, float, float], ...]:
    """Place ``num_leds`` LEDs on a near-square ceiling lattice.

    The lattice is centred on ``center`` (room centre by default) with
    ``spacing`` metres between neighbours; rows are filled left to right.
    """
    if num_leds < 1:
        raise GeometryError("num_leds must be positive")
    cols = math.ceil(math.sqrt(num_leds))
    rows = math.ceil(num_leds / cols)
    cx, cy = center if center is not None else (room_dims[0] / 2, room_dims[1] / 2)
    z = room_dims[2]
    out = []
    for k in range(num_leds):
        r, c = divmod(k, cols)
        in_row = min(cols, num_leds - r * cols)
        x = cx + (c - (in_row - 1) / 2) * spacing
        y = cy + (r - (rows - 1) / 2) * spacing
        out.append((x, y, z))
    return tuple(out)
