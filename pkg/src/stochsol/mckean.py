"""McKean's branching Brownian motion for the KPP equation ``v_t = v_xx/2 + v^2 - v``.

Each particle diffuses for an Exp(1) holding time and then splits in two;
``v(t, x) = E prod_i g(x_i(t))`` over the particles alive at time ``t``.
The simulation runs backward from ``(t, x)``: every particle carries its
remaining time and samples ``g`` when that reaches zero.

Existence is only guaranteed for ``|g| <= 1``.  That bound is checked on a
10^4-point grid (a pragmatic surrogate for the analytic condition; pass
``unsafe=True`` to skip it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainSpec, SpaceTimePoint
from .engine import DEFAULT_MAX_DISCARD, Estimate, RunPlan, default_workers, run_parallel
from .errors import ArgumentError, ExplosionError
from .expr import ScalarField, as_field
from .forest import ALIVE, COUNT, DEFAULT_MAX_PARTICLES, PRODUCT, ForestSampler, stream_of
from .laws import kpp_law

GRID_POINTS = 10_000


@dataclass(frozen=True)
class McKeanConfig:
    horizon_t: float
    start_x: float
    initial_condition: ScalarField
    dt: float = 1e-3
    max_particles: int = DEFAULT_MAX_PARTICLES
    unsafe: bool = False
    check_window: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "initial_condition", as_field(self.initial_condition))
        if not (self.horizon_t > 0 and math.isfinite(self.horizon_t)):
            raise ArgumentError(f"t must be positive and finite, got {self.horizon_t}")
        if not math.isfinite(self.start_x):
            raise ArgumentError(f"x must be finite, got {self.start_x}")
        if not self.dt > 0:
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        if self.max_particles < 1:
            raise ArgumentError("max_particles must be at least 1")
        if self.initial_condition.needs_time:
            raise ArgumentError("the McKean initial condition g must depend on x only")
        if not self.unsafe:
            lo, hi = self.window
            xs = np.linspace(lo, hi, GRID_POINTS)
            g = self.initial_condition(xs)
            if not np.all(np.isfinite(g)):
                raise ArgumentError(f"g={self.initial_condition} is not finite on [{lo:g}, {hi:g}]")
            worst = float(np.max(np.abs(g)))
            if worst > 1.0:
                raise ArgumentError(
                    f"the McKean representation needs |g| <= 1, but max |g| = {worst:.6g} on "
                    f"[{lo:g}, {hi:g}] (grid check; use unsafe=True to override)")

    @property
    def window(self):
        if self.check_window is not None:
            return self.check_window
        half = 10.0 + 10.0 * math.sqrt(self.horizon_t)
        return (self.start_x - half, self.start_x + half)

    def sampler(self, backend=None, domain: DomainSpec | None = None) -> ForestSampler:
        return ForestSampler(self.start_x, self.horizon_t, 1.0, kpp_law().sampling_table(),
                             domain or DomainSpec.full_line(), PRODUCT,
                             self.initial_condition, dt=self.dt,
                             max_particles=self.max_particles, backend=backend)


def mckean_sample(cfg: McKeanConfig, rng) -> float:
    """One realization of ``prod_i g(x_i(t))``."""
    stream = stream_of(rng)
    value = cfg.sampler()(stream.seed, stream.stream_id, stream.stream_id + 1)[0]
    if math.isnan(value):
        raise ExplosionError(f"McKean tree exceeded max_particles={cfg.max_particles}")
    return float(value)


def mckean_solve(cfg: McKeanConfig, n_samples: int, *, seed: int = 0, n_workers: int | None = None,
                 chunk: int = 1000, max_discard_fraction: float = DEFAULT_MAX_DISCARD,
                 keep_samples: bool = False, progress: float | None = None,
                 backend: str | None = None) -> Estimate:
    """Monte Carlo estimate of ``v(t, x)``."""
    if n_samples < 2:
        raise ArgumentError(f"n_samples must be at least 2, got {n_samples}")
    plan = RunPlan(seed, n_samples, n_workers or default_workers(), chunk)
    return run_parallel(cfg.sampler(backend), plan, keep_samples=keep_samples,
                        max_discard_fraction=max_discard_fraction, progress=progress)


def population_sampler(t: float, max_particles: int = DEFAULT_MAX_PARTICLES,
                       backend=None) -> ForestSampler:
    """Clock/branching skeleton only: returns the particle count at time ``t``."""
    if not t > 0:
        raise ArgumentError(f"t must be positive, got {t}")
    return ForestSampler(0.0, t, 1.0, kpp_law().sampling_table(), DomainSpec.full_line(),
                         COUNT, max_particles=max_particles, diffuse=False, backend=backend)


def sample_population(t: float, rng, max_particles: int = DEFAULT_MAX_PARTICLES) -> int:
    stream = stream_of(rng)
    value = population_sampler(t, max_particles)(stream.seed, stream.stream_id,
                                                 stream.stream_id + 1)[0]
    if math.isnan(value):
        raise ExplosionError(f"population exceeded max_particles={max_particles}")
    return int(value)


def population_law(t: float, k: int) -> float:
    """``P(n = k) = e^{-t} (1 - e^{-t})^{k-1}`` for the binary Yule process."""
    return math.exp(-t) * (1.0 - math.exp(-t)) ** (k - 1)


def _check_exit_data(g: ScalarField, domain: DomainSpec, horizon: float, x0: float):
    if domain.bounded:
        xs = np.linspace(domain.a, domain.b, GRID_POINTS)
    else:
        half = 10.0 + 10.0 * math.sqrt(horizon)
        xs = np.linspace(x0 - half, x0 + half, GRID_POINTS)
    checks = [g(xs, 0.0) if g.needs_time else g(xs)]
    if domain.bounded and g.needs_time:
        ts = np.linspace(0.0, horizon, 1001)
        checks += [g(np.full_like(ts, domain.a), ts), g(np.full_like(ts, domain.b), ts)]
    vals = np.concatenate(checks)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0.0 or vals.max() > 1.0:
        raise ArgumentError(
            f"the exit-measure representation needs 0 < g <= 1 on the domain and its boundary "
            f"(g must be positive for log g to exist); got range "
            f"[{np.nanmin(vals):.6g}, {np.nanmax(vals):.6g}]")


def kpp_exit_sampler(start: SpaceTimePoint, horizon: float, domain: DomainSpec, data_g,
                     dt: float = 1e-3, max_particles: int = DEFAULT_MAX_PARTICLES,
                     backend=None, functional: str = PRODUCT,
                     unsafe: bool = False) -> ForestSampler:
    g = as_field(data_g)
    if not domain.contains(start.x):
        raise ArgumentError(f"start x={start.x} is outside the domain ({domain})")
    remaining = horizon - start.t
    if not remaining > 0:
        raise ArgumentError(f"horizon {horizon} must exceed the start time {start.t}")
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    if not unsafe:
        _check_exit_data(g, domain, remaining, start.x)
    return ForestSampler(start.x, remaining, 1.0, kpp_law().sampling_table(), domain,
                         functional, g, dt=dt, max_particles=max_particles, backend=backend)


def kpp_exit_solve(start: SpaceTimePoint, horizon: float, domain: DomainSpec, data_g,
                   n_samples: int, dt: float = 1e-3, *, seed: int = 0,
                   n_workers: int | None = None, chunk: int = 1000,
                   max_particles: int = DEFAULT_MAX_PARTICLES,
                   max_discard_fraction: float = DEFAULT_MAX_DISCARD,
                   keep_samples: bool = False, progress: float | None = None,
                   backend: str | None = None, unsafe: bool = False) -> Estimate:
    """KPP solution at PDE time ``horizon - start.t`` with Dirichlet data on ``domain``.

    Particles reaching the boundary of the interval are frozen there; the
    estimate is ``E prod_i g(exit point_i)`` with ``g`` read at ``(x, t_pde)``
    on the lateral boundary and at ``(x, 0)`` on the initial line.
    ``unsafe=True`` skips the ``0 < g <= 1`` grid check.
    """
    if n_samples < 2:
        raise ArgumentError(f"n_samples must be at least 2, got {n_samples}")
    sampler = kpp_exit_sampler(start, horizon, domain, data_g, dt, max_particles, backend,
                               unsafe=unsafe)
    plan = RunPlan(seed, n_samples, n_workers or default_workers(), chunk)
    return run_parallel(sampler, plan, keep_samples=keep_samples,
                        max_discard_fraction=max_discard_fraction, progress=progress)


__all__ = [
    "McKeanConfig", "mckean_sample", "mckean_solve", "sample_population", "population_sampler",
    "population_law", "kpp_exit_solve", "kpp_exit_sampler", "ALIVE",
]
