"""Brownian motion, exponential clocks and exit detection from ``[0, T] x Omega``.

The spatial motion has generator ``(1/2) d^2/dx^2``, so an increment over a
time ``h`` is exactly ``N(0, h)``.  Time stepping only matters when a spatial
boundary is present; crossings inside a step are detected with the
Brownian-bridge probability ``exp(-2 (x0 - a)(x1 - a) / h)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .rng import as_generator

DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class SpaceTimePoint:
    t: float
    x: float

    def __post_init__(self):
        if not (self.t >= 0.0 and math.isfinite(self.t)):
            raise ArgumentError(f"time must be finite and nonnegative, got {self.t}")
        if not math.isfinite(self.x):
            raise ArgumentError(f"position must be finite, got {self.x}")


class DomainKind(str, enum.Enum):
    FULL_LINE = "full"
    INTERVAL = "interval"


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind = DomainKind.FULL_LINE
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.kind is DomainKind.INTERVAL:
            if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
                raise ArgumentError(f"interval domain needs finite a < b, got ({self.a}, {self.b})")
        else:
            object.__setattr__(self, "a", -math.inf)
            object.__setattr__(self, "b", math.inf)

    @classmethod
    def full_line(cls) -> "DomainSpec":
        return cls(DomainKind.FULL_LINE)

    @classmethod
    def interval(cls, a: float, b: float) -> "DomainSpec":
        return cls(DomainKind.INTERVAL, float(a), float(b))

    @classmethod
    def parse(cls, text: str) -> "DomainSpec":
        """``"full"`` or ``"a,b"`` (brackets optional)."""
        s = text.strip().strip("()[]")
        if s.lower() in ("full", "fullline", "full_line", "r", ""):
            return cls.full_line()
        try:
            a, b = (float(p) for p in s.split(","))
        except ValueError:
            raise ArgumentError(f"domain must be 'full' or 'a,b', got {text!r}") from None
        return cls.interval(a, b)

    @property
    def bounded(self) -> bool:
        return self.kind is DomainKind.INTERVAL

    def contains(self, x: float) -> bool:
        return self.a < x < self.b

    def __str__(self):
        return "full" if not self.bounded else f"{self.a!r},{self.b!r}"


class ExitKind(enum.IntEnum):
    TIME_BOUNDARY = 0
    SPACE_BOUNDARY = 1


@dataclass(frozen=True)
class ExitEvent:
    kind: ExitKind
    point: SpaceTimePoint


def brownian_step(x: float, dt: float, rng) -> float:
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    return x + math.sqrt(dt) * float(as_generator(rng).standard_normal())


def sample_exponential(rate: float, rng) -> float:
    """Holding time with ``P(T > t) = exp(-rate * t)``."""
    if not rate > 0:
        raise ArgumentError(f"rate must be positive, got {rate}")
    return float(as_generator(rng).standard_exponential()) / rate


def step_count(length: float, dt: float) -> tuple[int, float]:
    """Number of ``dt`` steps covering ``length`` and the size of the last one."""
    m = max(1, math.ceil(length / dt))
    last = length - (m - 1) * dt
    if last <= 0.0 and m > 1:
        m -= 1
        last = length - (m - 1) * dt
    return m, last


def bridge_segment(gen: np.random.Generator, x0: float, length: float,
                   a: float, b: float, dt: float):
    """Diffuse for ``length`` inside ``(a, b)`` with bridge-corrected exit checks.

    Draws all ``m`` Gaussian increments and then ``m`` uniforms for the segment,
    in that order (the compiled kernel consumes the stream identically).
    Returns ``(exited, x, s)``: on exit ``x`` is snapped to the barrier and
    ``s`` is the midpoint of the step in which the crossing was detected;
    otherwise ``x`` is the end position and ``s == length``.
    """
    m, last = step_count(length, dt)
    z = gen.standard_normal(m)
    u = gen.random(m)
    h = np.full(m, dt)
    h[-1] = last
    path = np.cumsum(np.concatenate(([x0], np.sqrt(h) * z)))
    xp, xn = path[:-1], path[1:]
    pa = np.minimum(1.0, np.exp(-2.0 * (xp - a) * (xn - a) / h))
    pb = np.minimum(1.0, np.exp(-2.0 * (xp - b) * (xn - b) / h))
    crossed = u < pa + pb - pa * pb
    if not crossed.any():
        return False, float(path[-1]), length
    i = int(np.argmax(crossed))
    s_before = float(np.cumsum(np.concatenate(([0.0], h[:i])))[-1])
    x = a if u[i] < pa[i] else b
    return True, x, s_before + 0.5 * float(h[i])


def simulate_to_exit(start: SpaceTimePoint, domain: DomainSpec, horizon: float,
                     dt: float, rng) -> ExitEvent:
    """Run one Brownian path from ``start`` until it leaves ``[0, horizon] x domain``."""
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    if not domain.contains(start.x):
        raise ArgumentError(f"start x={start.x} is outside the domain ({domain})")
    if start.t > horizon:
        raise ArgumentError(f"start time {start.t} is past the horizon {horizon}")
    length = horizon - start.t
    if length == 0.0:
        return ExitEvent(ExitKind.TIME_BOUNDARY, start)
    gen = as_generator(rng)
    if not domain.bounded:
        x = start.x + math.sqrt(length) * float(gen.standard_normal())
        return ExitEvent(ExitKind.TIME_BOUNDARY, SpaceTimePoint(horizon, x))
    exited, x, s = bridge_segment(gen, start.x, length, domain.a, domain.b, dt)
    if exited:
        return ExitEvent(ExitKind.SPACE_BOUNDARY, SpaceTimePoint(start.t + s, x))
    return ExitEvent(ExitKind.TIME_BOUNDARY, SpaceTimePoint(horizon, x))


def naive_segment(gen: np.random.Generator, x0: float, length: float,
                  a: float, b: float, dt: float):
    """Endpoint-only exit check; kept to measure the bias the bridge removes."""
    m, last = step_count(length, dt)
    h = np.full(m, dt)
    h[-1] = last
    path = np.cumsum(np.concatenate(([x0], np.sqrt(h) * gen.standard_normal(m))))[1:]
    out = (path <= a) | (path >= b)
    if not out.any():
        return False, float(path[-1]), length
    i = int(np.argmax(out))
    return True, (a if path[i] <= a else b), float(np.sum(h[:i + 1]))
