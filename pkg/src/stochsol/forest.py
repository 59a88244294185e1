"""Batch samplers built on the tree kernel, shared by every branching solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import DomainSpec, ExitEvent, ExitKind, SpaceTimePoint
from .errors import ExplosionError
from .expr import ScalarField
from .laws import OffspringTable

DEFAULT_MAX_PARTICLES = 10**6

# functional kinds
PRODUCT = "product"      # prod_i g(exit_i)
EXP_SUM = "exp_sum"      # exp(-beta * sum_i f(exit_i))
COUNT = "count"          # number of exits
ALIVE = "alive"          # number of exits on the time boundary


@dataclass(frozen=True)
class ForestSampler:
    """Picklable batch sampler: one branching Brownian tree per sample.

    Exit times from the kernel are elapsed times; the data field is read at
    PDE time ``horizon - elapsed`` (``0`` on the time boundary).
    """

    x0: float
    horizon: float
    rate: float
    table: OffspringTable
    domain: DomainSpec
    functional: str
    data: ScalarField | None = None
    beta: float = 1.0
    dt: float = 1e-3
    max_particles: int = DEFAULT_MAX_PARTICLES
    diffuse: bool = True
    backend: str | None = None

    def exits(self, seed, start, stop):
        kernel = _backend.get_kernel(self.backend)
        return kernel(seed, start, stop, float(self.x0), float(self.horizon), float(self.rate),
                      self.table, float(self.domain.a), float(self.domain.b),
                      self.domain.bounded, float(self.dt), int(self.max_particles),
                      self.diffuse)

    def field_values(self, xs, ts):
        if self.data.needs_time:
            return self.data(xs, self.horizon - ts)
        return self.data(xs)

    def __call__(self, seed, start, stop):
        counts, xs, ts, kinds, exploded = self.exits(seed, start, stop)
        if self.functional == COUNT:
            out = counts.astype(float)
        elif self.functional == ALIVE:
            out = group_sum((kinds == ExitKind.TIME_BOUNDARY).astype(float), counts)
        elif self.functional == PRODUCT:
            out = group_product(self.field_values(xs, ts), counts)
        elif self.functional == EXP_SUM:
            out = np.exp(-self.beta * group_sum(self.field_values(xs, ts), counts))
        else:
            raise ValueError(f"unknown functional {self.functional!r}")
        out[exploded] = math.nan
        return out

    def sample_exits(self, stream):
        """Exit events of the single tree driven by ``stream`` (an :class:`RngStream`)."""
        counts, xs, ts, kinds, exploded = self.exits(stream.seed, stream.stream_id,
                                                     stream.stream_id + 1)
        if exploded[0]:
            raise ExplosionError(f"tree exceeded max_particles={self.max_particles}")
        return [ExitEvent(ExitKind(int(k)), SpaceTimePoint(float(t), float(x)))
                for x, t, k in zip(xs, ts, kinds)]


def _starts(counts):
    return np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.intp)


def group_product(values, counts):
    """Product of consecutive groups of sizes ``counts``; empty groups give 1."""
    out = np.ones(len(counts))
    nz = counts > 0
    if nz.any():
        out[nz] = np.multiply.reduceat(values, _starts(counts)[nz])
    return out


def group_sum(values, counts):
    out = np.zeros(len(counts))
    nz = counts > 0
    if nz.any():
        out[nz] = np.add.reduceat(values, _starts(counts)[nz])
    return out


def stream_of(rng):
    """Normalize a single-sample stream argument to an ``RngStream``."""
    from .rng import RngStream
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("tree samplers need an RngStream (or an integer seed)")


def brownian_sampler(f, x: float, t: float, backend=None) -> ForestSampler:
    """Non-branching paths: each sample is ``f(x + W_t)``."""
    from .expr import as_field
    from .laws import kpp_law
    return ForestSampler(float(x), float(t), 0.0, kpp_law().sampling_table(),
                         DomainSpec.full_line(), PRODUCT, as_field(f), backend=backend)


def brownian_solve(f, x: float, t: float, n_samples: int, *, seed: int = 0,
                   n_workers: int | None = None, chunk: int = 1000, backend=None):
    """Monte Carlo estimate of the heat-equation solution ``E f(x + W_t)``."""
    from .engine import RunPlan, default_workers, run_parallel
    from .errors import ArgumentError
    if not t > 0:
        raise ArgumentError(f"t must be positive, got {t}")
    plan = RunPlan(seed, n_samples, n_workers or default_workers(), chunk)
    return run_parallel(brownian_sampler(f, x, t, backend), plan)
