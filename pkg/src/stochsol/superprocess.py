"""Branching exit measures and the mass-scaled superprocess estimator.

For ``1 < alpha <= 2`` and particle mass ``beta``, particles branch at rate
``k_beta = alpha / beta^(alpha-1)`` with the critical law of
:func:`~stochsol.laws.alpha_law`.  Each particle leaving
``Q = [0, t] x Omega`` deposits ``f`` at its exit point, and

    u_beta(t, x) = (1 - E exp(-beta <f, X_Q>)) / beta

solves ``u_t = u_xx/2 - u^alpha`` with data ``f_beta = (1 - exp(-beta f)) / beta``
exactly, for every ``beta``.  As ``beta -> 0``, ``f_beta -> f``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DomainSpec, ExitEvent
from .engine import DEFAULT_MAX_DISCARD, Estimate, RunPlan, default_workers, run_parallel
from .errors import ArgumentError
from .expr import MassTransform, ScalarField, as_field, from_ast
from .fd import NonlinearitySpec, fd_point
from .forest import ALIVE, COUNT, DEFAULT_MAX_PARTICLES, EXP_SUM, ForestSampler, stream_of
from .laws import OffspringLaw, alpha_law, k_beta

GRID_POINTS = 10_000
RELATIVE_ERROR_WARNING = 0.2


@dataclass(frozen=True)
class SuperConfig:
    alpha: float
    beta: float
    horizon_t: float
    start_x: float
    boundary_data: ScalarField
    domain: DomainSpec = DomainSpec()
    dt: float = 1e-3
    max_particles: int = DEFAULT_MAX_PARTICLES

    def __post_init__(self):
        object.__setattr__(self, "boundary_data", as_field(self.boundary_data))
        k_beta(self.alpha, self.beta)  # validates alpha and beta > 0
        if self.beta > 1.0:
            raise ArgumentError(f"beta must be at most 1, got {self.beta}")
        if not (self.horizon_t > 0 and math.isfinite(self.horizon_t)):
            raise ArgumentError(f"t must be positive and finite, got {self.horizon_t}")
        if not self.domain.contains(self.start_x):
            raise ArgumentError(f"start x={self.start_x} is outside the domain ({self.domain})")
        if not self.dt > 0:
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        f = self.boundary_data
        if self.domain.bounded:
            xs = np.linspace(self.domain.a, self.domain.b, GRID_POINTS)
        else:
            half = 10.0 + 10.0 * math.sqrt(self.horizon_t)
            xs = np.linspace(self.start_x - half, self.start_x + half, GRID_POINTS)
        vals = f(xs, 0.0) if f.needs_time else f(xs)
        if not np.all(np.isfinite(vals)) or vals.min() < 0.0:
            raise ArgumentError(f"boundary data f={f} must be finite and nonnegative "
                                f"(min on grid {np.nanmin(vals):.6g})")

    @property
    def k_beta(self) -> float:
        return k_beta(self.alpha, self.beta)

    def law(self) -> OffspringLaw:
        return alpha_law(self.alpha, self.beta)

    def sampler(self, functional=EXP_SUM, law: OffspringLaw | None = None, backend=None):
        law = law or self.law()
        return ForestSampler(self.start_x, self.horizon_t, law.lifetime_rate_k,
                             law.sampling_table(), self.domain, functional, self.boundary_data,
                             beta=self.beta, dt=self.dt, max_particles=self.max_particles,
                             backend=backend)


@dataclass(frozen=True)
class ExitSample:
    exit_points: list
    functional_value: float


def superprocess_sample(cfg: SuperConfig, law: OffspringLaw, rng) -> ExitSample:
    """One tree: its exit events and ``exp(-beta * sum f(exit points))``."""
    stream = stream_of(rng)
    sampler = cfg.sampler(law=law)
    exits: list[ExitEvent] = sampler.sample_exits(stream)
    if exits:
        xs = np.array([e.point.x for e in exits])
        ts = np.array([e.point.t for e in exits])
        total = float(np.sum(sampler.field_values(xs, ts)))
    else:
        total = 0.0
    return ExitSample(exits, math.exp(-cfg.beta * total))


def transform_data(f, beta: float) -> ScalarField:
    """``f_beta = (1 - exp(-beta f)) / beta``."""
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    return from_ast(MassTransform(float(beta), as_field(f).ast))


def _plan(n_samples, seed, n_workers, chunk):
    if n_samples < 2:
        raise ArgumentError(f"n_samples must be at least 2, got {n_samples}")
    return RunPlan(seed, n_samples, n_workers or default_workers(), chunk)


def superprocess_solve(cfg: SuperConfig, n_samples: int, *, seed: int = 0,
                       n_workers: int | None = None, chunk: int = 1000,
                       max_discard_fraction: float = DEFAULT_MAX_DISCARD,
                       keep_samples: bool = False, progress: float | None = None,
                       backend: str | None = None) -> Estimate:
    """Estimate of ``u_beta(t, x) = (1 - E exp(-beta <f, X_Q>)) / beta``."""
    raw = run_parallel(cfg.sampler(backend=backend), _plan(n_samples, seed, n_workers, chunk),
                       keep_samples=keep_samples, max_discard_fraction=max_discard_fraction,
                       progress=progress)
    est = raw.scaled(1.0 / cfg.beta, -1.0 / cfg.beta)
    est.meta.update({
        "equation": f"u_t = u_xx/2 - u^{cfg.alpha:g}",
        "data": transform_data(cfg.boundary_data, cfg.beta).source,
        "beta": cfg.beta,
        "k_beta": cfg.k_beta,
        "note": "exact for data f_beta at this beta; tends to data f as beta -> 0",
    })
    return est


def particle_count_solve(cfg: SuperConfig, n_samples: int, *, alive_only: bool = False,
                         seed: int = 0, n_workers: int | None = None, chunk: int = 1000,
                         backend: str | None = None) -> Estimate:
    """Mean number of exit points (or of particles alive at the horizon)."""
    sampler = cfg.sampler(ALIVE if alive_only else COUNT, backend=backend)
    return run_parallel(sampler, _plan(n_samples, seed, n_workers, chunk))


def fd_reference(cfg: SuperConfig, data=None):
    """FD value (and budget) of ``u_t = u_xx/2 - u^alpha`` at the probe point."""
    data = cfg.boundary_data if data is None else as_field(data)
    return fd_point(NonlinearitySpec.power(cfg.alpha), data, cfg.domain, cfg.horizon_t,
                    cfg.start_x)


@dataclass
class SweepRow:
    beta: float
    estimate: Estimate
    fd_f_beta: float
    fd_f: float

    def as_row(self) -> dict:
        return {"beta": self.beta, "mean": self.estimate.mean, "stderr": self.estimate.stderr,
                "n": self.estimate.n, "fd_f_beta": self.fd_f_beta, "fd_f": self.fd_f}


SWEEP_COLUMNS = ("beta", "mean", "stderr", "n", "fd_f_beta", "fd_f")


def beta_sweep(cfg: SuperConfig, betas, n_samples: int, *, seed: int = 0,
               n_workers: int | None = None, chunk: int = 1000, with_fd: bool = True,
               backend: str | None = None) -> list[SweepRow]:
    """``superprocess_solve`` at each ``beta`` (descending), with FD references.

    Warns when the relative standard error passes 20%: the estimator's
    variance grows like ``1/beta`` as the mass shrinks.
    """
    betas = [float(b) for b in betas]
    if any(b2 > b1 for b1, b2 in zip(betas, betas[1:])):
        raise ArgumentError(f"betas must be sorted in descending order, got {betas}")
    fd_f = fd_reference(cfg).value if with_fd else math.nan
    rows = []
    for beta in betas:
        sub = SuperConfig(cfg.alpha, beta, cfg.horizon_t, cfg.start_x, cfg.boundary_data,
                          cfg.domain, cfg.dt, cfg.max_particles)
        est = superprocess_solve(sub, n_samples, seed=seed, n_workers=n_workers, chunk=chunk,
                                 backend=backend)
        if est.mean != 0.0 and est.stderr / abs(est.mean) > RELATIVE_ERROR_WARNING:
            warnings.warn(f"beta={beta:g}: relative standard error "
                          f"{est.stderr / abs(est.mean):.0%} exceeds 20%", RuntimeWarning)
        fd_fb = fd_reference(sub, transform_data(cfg.boundary_data, beta)).value \
            if with_fd else math.nan
        rows.append(SweepRow(beta, est, fd_fb, fd_f))
    return rows
