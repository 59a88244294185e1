"""Pure-Python tree kernel; the reference for ``_ckernels`` and its fallback.

Both kernels consume each per-sample Philox stream in the same order:

* one standard exponential per particle for its holding time (skipped when
  ``rate == 0``);
* on the full line, one standard normal for the whole holding segment;
  inside an interval, ``m`` normals then ``m`` uniforms for the ``m`` steps
  of the segment;
* one uniform per branching event unless the offspring count is fixed.

Particles live on an explicit LIFO stack of ``(position, remaining time)``.
"""
from __future__ import annotations

import math

import numpy as np

from .core import bridge_segment
from .rng import StreamFactory

TIME_EXIT = 0
SPACE_EXIT = 1


def _tree(gen, x0, horizon, rate, table, lo, hi, bounded, dt, max_particles, diffuse, out):
    stack = [(x0, horizon)]
    fixed_n = table.fixed_n
    while stack:
        x, r = stack.pop()
        if rate > 0.0:
            holding = gen.standard_exponential() / rate
        else:
            holding = math.inf
        seg = holding if holding < r else r
        if not diffuse:
            pass
        elif bounded:
            exited, x, s = bridge_segment(gen, x, seg, lo, hi, dt)
            if exited:
                out.append((x, horizon - r + s, SPACE_EXIT))
                continue
        else:
            x = x + math.sqrt(seg) * gen.standard_normal()
        if holding >= r:
            out.append((x, horizon, TIME_EXIT))
            continue
        k = fixed_n if fixed_n >= 0 else table.inverse(gen.random())
        if len(stack) + k > max_particles:
            return False
        r = r - holding
        stack.extend([(x, r)] * k)
    return True


def simulate_forest(seed, start, stop, x0, horizon, rate, table, lo, hi, bounded,
                    dt, max_particles, diffuse=True):
    """Simulate trees for global sample indices ``start <= i < stop``.

    Returns ``(counts, xs, ts, kinds, exploded)``: per-sample exit counts and
    the concatenated exit positions, elapsed exit times and exit kinds.
    Exploded samples report zero exits.
    """
    n = stop - start
    counts = np.zeros(n, dtype=np.int64)
    exploded = np.zeros(n, dtype=bool)
    exits = []
    factory = StreamFactory()
    for j in range(n):
        gen = factory.reset(seed, start + j)
        local = []
        if _tree(gen, x0, horizon, rate, table, lo, hi, bounded, dt, max_particles, diffuse, local):
            counts[j] = len(local)
            exits.extend(local)
        else:
            exploded[j] = True
    if exits:
        xs, ts, kinds = (np.array(c) for c in zip(*exits))
    else:
        xs, ts, kinds = np.empty(0), np.empty(0), np.empty(0)
    return counts, xs.astype(np.float64), ts.astype(np.float64), kinds.astype(np.int8), exploded
