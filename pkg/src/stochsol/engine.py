"""Parallel Monte Carlo driver with reproducible per-sample streams.

Sample ``i`` of a run always draws from ``RngStream(seed, i)``, whatever the
worker count or chunking, and the running sums are kept exactly (as
non-overlapping float expansions), so a run's :class:`Estimate` depends
only on ``(seed, n_samples)``.

A *batch sampler* is any picklable callable ``sampler(seed, start, stop)``
returning a float array of length ``stop - start``; NaN marks a sample that
was discarded (tree explosion).
"""
from __future__ import annotations

import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import ndtri

from .errors import ArgumentError, ExplosionError, StochsolError, WorkerError
from .rng import RngStream

DEFAULT_CHUNK = 1000
DEFAULT_MAX_DISCARD = 1e-3
WORKERS_ENV = "STOCHSOL_WORKERS"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ArgumentError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
    return 1


def exact_parts(values) -> tuple:
    """Non-overlapping float expansion of the exact sum of ``values``.

    ``parts[0]`` is the correctly rounded sum and each further part the
    correctly rounded remainder, so the expansion is a canonical function of
    the exact value and merging is associative bit-for-bit.
    """
    vals = values.tolist() if isinstance(values, np.ndarray) else list(values)
    parts = []
    while True:
        s = math.fsum(vals + [-p for p in parts])
        if s == 0.0:
            return tuple(parts)
        parts.append(s)


def _two_square(x):
    """``x*x = hi + lo`` exactly (Dekker splitting)."""
    hi = x * x
    c = 134217729.0 * x
    xh = c - (c - x)
    xl = x - xh
    lo = ((xh * xh - hi) + 2.0 * xh * xl) + xl * xl
    return hi, lo


@dataclass(frozen=True)
class Moments:
    """Exact first and second power sums of a sample set."""

    n: int = 0
    s1: tuple = ()
    s2: tuple = ()

    @classmethod
    def from_values(cls, values) -> "Moments":
        x = np.asarray(values, dtype=float)
        hi, lo = _two_square(x)
        return cls(len(x), exact_parts(x), exact_parts(np.concatenate((hi, lo))))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.n + other.n, exact_parts(self.s1 + other.s1),
                       exact_parts(self.s2 + other.s2))

    @property
    def mean(self) -> float:
        return (self.s1[0] if self.s1 else 0.0) / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        """Unbiased sample variance, computed exactly then rounded once."""
        if self.n < 2:
            return 0.0
        s = sum(map(Fraction, self.s1), Fraction(0))
        q = sum(map(Fraction, self.s2), Fraction(0))
        return float((q - s * s / self.n) / (self.n - 1))

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n >= 2 else 0.0


@dataclass
class Estimate:
    mean: float
    stderr: float
    n: int
    discarded: int = 0
    elapsed: float = 0.0
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def scaled(self, offset: float, factor: float) -> "Estimate":
        """Estimate of ``offset + factor * X``."""
        return Estimate(offset + factor * self.mean, abs(factor) * self.stderr, self.n,
                        self.discarded, self.elapsed,
                        None if self.samples is None else offset + factor * self.samples,
                        dict(self.meta))

    def to_dict(self) -> dict:
        out = {"mean": self.mean, "stderr": self.stderr, "n": self.n,
               "discarded": self.discarded, "elapsed": self.elapsed}
        if self.meta:
            out["meta"] = self.meta
        return out


@dataclass(frozen=True)
class RunPlan:
    seed: int
    n_samples: int
    n_workers: int = 1
    chunk: int = DEFAULT_CHUNK

    def __post_init__(self):
        RngStream(self.seed)
        if self.n_samples < 1:
            raise ArgumentError(f"n_samples must be positive, got {self.n_samples}")
        if self.n_workers < 1 or self.chunk < 1:
            raise ArgumentError("n_workers and chunk must be positive")

    def chunks(self):
        return [(i, min(i + self.chunk, self.n_samples))
                for i in range(0, self.n_samples, self.chunk)]


class PerSample:
    """Adapts a scalar sampler ``fn(stream) -> float`` to the batch protocol.

    A :class:`~stochsol.errors.ExplosionError` raised by ``fn`` discards the sample.
    """

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, seed, start, stop):
        out = np.empty(stop - start)
        for j, i in enumerate(range(start, stop)):
            try:
                out[j] = self.fn(RngStream(seed, i))
            except ExplosionError:
                out[j] = math.nan
        return out


def _run_chunk(sampler, seed, start, stop, keep):
    values = np.asarray(sampler(seed, start, stop), dtype=float)
    if values.shape != (stop - start,):
        raise StochsolError(f"sampler returned shape {values.shape} for {stop - start} samples")
    ok = ~np.isnan(values)
    kept = values[ok]
    return Moments.from_values(kept), int(np.count_nonzero(~ok)), (values if keep else None)


def _finish(moments, discarded, t0, pieces):
    samples = None
    if pieces is not None:
        samples = np.concatenate(pieces) if pieces else np.empty(0)
    return Estimate(moments.mean, moments.stderr, moments.n, discarded,
                    time.perf_counter() - t0, samples)


def run_parallel(sampler, plan: RunPlan, *, keep_samples: bool = False,
                 max_discard_fraction: float = DEFAULT_MAX_DISCARD,
                 progress: float | None = None) -> Estimate:
    """Evaluate ``plan.n_samples`` samples and aggregate them.

    ``progress`` is an interval in seconds for status lines on stderr.
    ``keep_samples`` attaches the raw per-sample values (NaN for discarded)
    in global index order.  Raises :class:`ExplosionError` when more than
    ``max_discard_fraction`` of the samples were discarded.
    """
    t0 = time.perf_counter()
    chunks = plan.chunks()
    results = [None] * len(chunks)
    moments = Moments()
    discarded = 0
    last_report = t0

    def absorb(k, res):
        nonlocal moments, discarded, last_report
        results[k] = res
        moments = moments.merge(res[0])
        discarded += res[1]
        now = time.perf_counter()
        if progress is not None and now - last_report >= progress:
            last_report = now
            print(f"[stochsol] {moments.n + discarded}/{plan.n_samples} samples, "
                  f"mean={moments.mean:.6g} stderr={moments.stderr:.3g}", file=sys.stderr)

    try:
        if plan.n_workers == 1:
            for k, (a, b) in enumerate(chunks):
                absorb(k, _run_chunk(sampler, plan.seed, a, b, keep_samples))
        else:
            with ProcessPoolExecutor(max_workers=plan.n_workers) as pool:
                futures = [pool.submit(_run_chunk, sampler, plan.seed, a, b, keep_samples)
                           for a, b in chunks]
                for k, fut in enumerate(futures):
                    absorb(k, fut.result())
    except (StochsolError, KeyboardInterrupt):
        raise
    except Exception as exc:
        partial = _finish(moments, discarded, t0, None)
        raise WorkerError(f"sampling worker failed: {exc!r}; "
                          f"{partial.n + discarded} samples completed", partial) from exc

    pieces = [r[2] for r in results] if keep_samples else None
    est = _finish(moments, discarded, t0, pieces)
    if discarded > max_discard_fraction * plan.n_samples:
        raise ExplosionError(
            f"{discarded} of {plan.n_samples} samples exceeded the particle cap "
            f"(allowed fraction {max_discard_fraction:g}); raise max_particles or shorten t")
    return est


def confidence_interval(e: Estimate, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval ``mean +- z * stderr``."""
    if e.n < 2:
        raise ArgumentError(f"a confidence interval needs n >= 2 samples, got {e.n}")
    if not 0.0 < level < 1.0:
        raise ArgumentError(f"level must lie in (0, 1), got {level}")
    z = float(ndtri(0.5 + level / 2.0))
    return e.mean - z * e.stderr, e.mean + z * e.stderr
