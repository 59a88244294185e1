"""Deterministic reference solutions and checks of the integral identities.

* :func:`heat_solution` -- the linear problem by adaptive quadrature against
  the kernel of ``u_t = (1/2) u_xx``, i.e. ``(2 pi t)^{-1/2} exp(-(x-y)^2 / 2t)``.
* :func:`fd_solve` -- Strang splitting: half reaction step (explicit
  midpoint), Crank-Nicolson step for ``(1/2) u_xx``, half reaction step.
* :func:`fd_point` -- value at one point plus a Richardson error budget
  ``C (dx^2 + dt^2)`` from a coarse/fine pair.
* :func:`verify_integral_equation` and :func:`verify_lemma_identity` --
  residuals of ``u + G psi(u) = K f`` and of the branching lemma identity.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .core import DomainSpec, step_count
from .errors import ArgumentError, NumericalError
from .expr import ScalarField, as_field
from .rng import as_generator

TAIL_SIGMAS = 6.0
DEFAULT_DX = 0.02


@dataclass(frozen=True)
class NonlinearitySpec:
    """Which semilinear equation is being solved.

    ``kpp``: ``v_t = v_xx/2 + v^2 - v`` for ``v``; in the ``u = 1 - v`` form the
    absorption is ``psi(u) = u^2 - u``.  ``power``: ``u_t = u_xx/2 - u^alpha``,
    ``psi(u) = u^alpha``.  ``linear``: the heat equation.
    """

    kind: str
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ("kpp", "power", "linear"):
            raise ArgumentError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == "power" and not 1.0 < self.alpha <= 2.0:
            raise ArgumentError(f"power nonlinearity needs 1 < alpha <= 2, got {self.alpha}")

    @classmethod
    def kpp(cls):
        return cls("kpp")

    @classmethod
    def power(cls, alpha):
        return cls("power", float(alpha))

    @classmethod
    def linear(cls):
        return cls("linear")

    def reaction(self, u):
        """Right-hand side apart from diffusion, for the solved variable."""
        if self.kind == "kpp":
            return u * u - u
        if self.kind == "power":
            return -np.maximum(u, 0.0) ** self.alpha
        return np.zeros_like(u)

    def psi(self, u):
        """Absorption in ``u_t = u_xx/2 - psi(u)`` (``u = 1 - v`` for KPP)."""
        if self.kind == "kpp":
            return u * u - u
        if self.kind == "power":
            return np.maximum(u, 0.0) ** self.alpha
        return np.zeros_like(u)

    def ode_flow(self, u0, s):
        """Exact solution at time ``s`` of ``du/ds = reaction(u)``."""
        u0 = np.asarray(u0, dtype=float)
        if self.kind == "kpp":
            decay = math.exp(-s)
            return u0 * decay / (1.0 - u0 * (1.0 - decay))
        if self.kind == "power":
            pos = np.maximum(u0, 0.0)
            if self.alpha == 1.0:
                return pos * math.exp(-s)
            with np.errstate(divide="ignore"):
                base = pos ** (1.0 - self.alpha) + (self.alpha - 1.0) * s
                return np.where(pos > 0.0, base ** (1.0 / (1.0 - self.alpha)), 0.0)
        return u0


# -- linear problem ----------------------------------------------------------

def _data_at_zero(f: ScalarField, y):
    return f(y, 0.0) if f.needs_time else f(y)


def heat_solution(x: float, t: float, f) -> float:
    """``E f(x + W_t)`` by adaptive quadrature in ``z = (y - x) / sqrt(t)``."""
    if not t > 0:
        raise ArgumentError(f"t must be positive, got {t}")
    f = as_field(f)
    sq = math.sqrt(t)

    def integrand(z):
        return math.exp(-0.5 * z * z) * _data_at_zero(f, x + sq * z)

    value, err, info = integrate.quad(integrand, -12.0, 12.0, epsabs=1e-13, epsrel=1e-12,
                                      limit=500, points=[0.0], full_output=1)[:3]
    value /= math.sqrt(2.0 * math.pi)
    if not math.isfinite(value) or err > 1e-8 * max(1.0, abs(value)):
        raise NumericalError(f"heat-kernel quadrature did not converge at x={x}, t={t} "
                             f"(error estimate {err:.2e})")
    return value


@lru_cache(maxsize=16)
def gauss_hermite(order: int):
    """Nodes and weights with ``E h(Z) ~ sum w h(z)`` for standard normal ``Z``."""
    z, w = hermegauss(order)
    return z, w / math.sqrt(2.0 * math.pi)


def heat_solution_gh(x, t, f, order: int = 120):
    """Vectorized Gauss-Hermite version of :func:`heat_solution` for smooth data.

    ``x`` and ``t`` broadcast against each other.
    """
    z, w = gauss_hermite(order)
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    y = x[..., None] + np.sqrt(t)[..., None] * z
    return np.sum(w * _data_at_zero(as_field(f), y), axis=-1)


# -- finite differences -------------------------------------------------------

@dataclass
class GridSolution:
    """Solution values on a uniform grid; ``values[i, j]`` is ``u(ts[j], xs[i])``."""

    xs: np.ndarray
    ts: np.ndarray
    values: np.ndarray
    dx: float
    dt: float
    meta: dict = field(default_factory=dict)

    def level(self, t: float) -> np.ndarray:
        """Grid values at time ``t``, linear in time between stored levels."""
        if t <= self.ts[0]:
            return self.values[:, 0]
        if t >= self.ts[-1]:
            return self.values[:, -1]
        j = int(np.searchsorted(self.ts, t)) - 1
        w = (t - self.ts[j]) / (self.ts[j + 1] - self.ts[j])
        return (1.0 - w) * self.values[:, j] + w * self.values[:, j + 1]

    def at(self, t: float, x):
        """Cubic interpolation in space of :meth:`level`."""
        return CubicSpline(self.xs, self.level(t))(x)

    def rows(self):
        for j, t in enumerate(self.ts):
            for i, x in enumerate(self.xs):
                yield {"x": float(x), "t": float(t), "value": float(self.values[i, j])}

    def to_csv(self, path):
        from .cli import emit_csv
        emit_csv(list(self.rows()), path, columns=("x", "t", "value"))


def _boundary_series(nl, data, domain, boundary, edges, times):
    """Dirichlet values at the two grid edges for each time in ``times``."""
    if domain.bounded:
        bf = boundary if boundary is not None else data
        out = np.empty((len(times), 2))
        for k, e in enumerate(edges):
            out[:, k] = bf(np.full(len(times), e), times) if bf.needs_time else bf(e)
        return out
    # truncated line: heat-kernel value at the edge advanced by the local reaction flow
    heat = heat_solution_gh(np.asarray(edges)[None, :], times[:, None], data)
    out = np.empty((len(times), 2))
    for j, s in enumerate(times):
        out[j] = nl.ode_flow(heat[j], s)
    return out


def fd_solve(nl: NonlinearitySpec, data, domain: DomainSpec, boundary=None, T: float = 1.0,
             nx: int = 601, nt: int | None = None, *, x_range=(-1.0, 1.0), window=None,
             n_store: int = 201) -> GridSolution:
    """Solve ``w_t = w_xx/2 + reaction(w)`` up to ``T`` on a uniform grid.

    On an interval the grid spans the domain with Dirichlet data ``boundary``
    (default: ``data``, evaluated at ``(edge, t)`` when it depends on ``t``).
    On the full line the grid spans ``window``, by default ``x_range``
    widened by ``6 sqrt(T)`` on each side.  ``nt`` defaults to the smallest
    count satisfying ``nt >= T nx^2 / span^2``.  At most ``n_store`` time
    levels are kept, evenly spaced in steps.
    """
    data = as_field(data)
    boundary = None if boundary is None else as_field(boundary)
    if not T > 0:
        raise ArgumentError(f"T must be positive, got {T}")
    if nx < 5:
        raise ArgumentError(f"nx must be at least 5, got {nx}")
    if domain.bounded:
        lo, hi = domain.a, domain.b
    else:
        margin = TAIL_SIGMAS * math.sqrt(T)
        need = (min(x_range) - margin, max(x_range) + margin)
        lo, hi = window if window is not None else need
        if lo > need[0] + 1e-12 or hi < need[1] - 1e-12:
            raise ArgumentError(
                f"window ({lo}, {hi}) must extend 6*sqrt(T)={margin:.4g} beyond the "
                f"region of interest {tuple(x_range)}")
    span = hi - lo
    min_nt = math.ceil(T * nx * nx / (span * span) - 1e-9)
    if nt is None:
        nt = min_nt
    if nt < min_nt:
        raise ArgumentError(f"nt={nt} violates the accuracy guard nt >= T*nx^2/span^2 = {min_nt}")

    xs = np.linspace(lo, hi, nx)
    dx = xs[1] - xs[0]
    dt = T / nt
    times = np.linspace(0.0, T, nt + 1)
    bc = _boundary_series(nl, data, domain, boundary, (lo, hi), times)

    u = np.array(_data_at_zero(data, xs), dtype=float)
    u[0], u[-1] = bc[0]
    if not np.all(np.isfinite(u)):
        raise NumericalError("initial data is not finite on the grid")

    r = dt / (4.0 * dx * dx)
    m = nx - 2
    ab = np.empty((3, m))
    ab[0] = -r
    ab[1] = 1.0 + 2.0 * r
    ab[2] = -r
    half = 0.5 * dt
    react = nl.reaction
    linear = nl.kind == "linear"

    stride = max(1, math.ceil(nt / (n_store - 1)))
    store_idx = list(range(0, nt + 1, stride))
    if store_idx[-1] != nt:
        store_idx.append(nt)
    stored = np.empty((nx, len(store_idx)))
    stored[:, 0] = u
    k = 1

    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(nt):
            w = u[1:-1]
            if not linear:
                w = w + half * react(w + 0.5 * half * react(w))
            rhs = (1.0 - 2.0 * r) * w
            rhs[1:] += r * w[:-1]
            rhs[:-1] += r * w[1:]
            rhs[0] += r * (bc[n, 0] + bc[n + 1, 0])
            rhs[-1] += r * (bc[n, 1] + bc[n + 1, 1])
            w = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
            if not linear:
                w = w + half * react(w + 0.5 * half * react(w))
            u = np.empty(nx)
            u[1:-1] = w
            u[0], u[-1] = bc[n + 1]
            if k < len(store_idx) and n + 1 == store_idx[k]:
                if not np.all(np.isfinite(u)):
                    raise NumericalError(
                        f"finite-difference solution blew up before t={times[n + 1]:.4g}")
                stored[:, k] = u
                k += 1
    return GridSolution(xs, times[store_idx], stored, dx, dt,
                        {"nl": nl.kind, "alpha": nl.alpha, "T": T, "nx": nx, "nt": nt})


@dataclass
class FDPoint:
    value: float
    budget: float
    coarse: GridSolution
    fine: GridSolution


def default_nx(span: float, dx: float = DEFAULT_DX) -> int:
    return int(math.ceil(span / dx)) + 1


def _span(domain, T, x_range):
    if domain.bounded:
        return domain.b - domain.a
    return max(x_range) - min(x_range) + 2 * TAIL_SIGMAS * math.sqrt(T)


def richardson_budget(coarse_val, fine_val, coarse: GridSolution, fine: GridSolution) -> float:
    """Error of the fine value, ``C (dx^2 + dt^2)`` with ``C`` fitted to the pair."""
    hc = coarse.dx ** 2 + coarse.dt ** 2
    hf = fine.dx ** 2 + fine.dt ** 2
    return float(abs(coarse_val - fine_val) * hf / (hc - hf))


def fd_pair(nl, data, domain, boundary=None, T=1.0, *, x_range=(-1.0, 1.0), dx=DEFAULT_DX,
            n_store=201):
    """Coarse grid at spacing ``dx`` and fine grid at ``dx / 2`` (with ``4x`` steps)."""
    nx = default_nx(_span(domain, T, x_range), dx)
    coarse = fd_solve(nl, data, domain, boundary, T, nx, x_range=x_range, n_store=n_store)
    fine = fd_solve(nl, data, domain, boundary, T, 2 * nx - 1, 4 * coarse.meta["nt"],
                    x_range=x_range, n_store=n_store)
    return coarse, fine


def fd_point(nl, data, domain, T, x, boundary=None, *, dx=DEFAULT_DX) -> FDPoint:
    """Fine-grid value at ``(T, x)`` with its Richardson error budget."""
    coarse, fine = fd_pair(nl, data, domain, boundary, T, x_range=(x, x), dx=dx)
    vc = float(coarse.at(T, x))
    vf = float(fine.at(T, x))
    return FDPoint(vf, richardson_budget(vc, vf, coarse, fine), coarse, fine)


# -- integral identities -----------------------------------------------------

@dataclass
class IntegralCheck:
    residual: float
    stderr: float
    fd_budget: float
    u: float
    green: float
    poisson: float


def _path_terms(nl, grid, f, domain, T, x, z_paths, gen, n_time, dt, n):
    """Per-path ``int_0^tau psi(u(T-s, xi_s)) ds - f(xi_tau)``."""
    if not domain.bounded:
        nodes, weights = leggauss(n_time)
        s = 0.5 * T * (nodes + 1.0)
        w = 0.5 * T * weights
        times = np.concatenate((s, [T]))
        steps = np.diff(np.concatenate(([0.0], times)))
        xi = x + np.cumsum(np.sqrt(steps)[:, None] * z_paths, axis=0)
        green = np.zeros(xi.shape[1])
        for j in range(n_time):
            green += w[j] * nl.psi(grid.at(T - s[j], xi[j]))
        return green, _data_at_zero(f, xi[-1])
    # interval: dt steps with bridge-corrected killing, left-point rule in time
    m, last = step_count(T, dt)
    pos = np.full(n, float(x))
    alive = np.ones(n, dtype=bool)
    green = np.zeros(n)
    exit_val = np.zeros(n)
    s = 0.0
    for i in range(m):
        h = last if i == m - 1 else dt
        green[alive] += h * nl.psi(grid.at(T - s, pos[alive]))
        new = pos + math.sqrt(h) * gen.standard_normal(n)
        pa = np.minimum(1.0, np.exp(-2.0 * (pos - domain.a) * (new - domain.a) / h))
        pb = np.minimum(1.0, np.exp(-2.0 * (pos - domain.b) * (new - domain.b) / h))
        u = gen.random(n)
        hit = alive & (u < pa + pb - pa * pb)
        if hit.any():
            edge = np.where(u[hit] < pa[hit], domain.a, domain.b)
            tau = s + 0.5 * h
            exit_val[hit] = f(edge, np.full(edge.shape, T - tau)) if f.needs_time else f(edge)
            alive &= ~hit
        pos = new
        s += h
    exit_val[alive] = _data_at_zero(f, pos[alive])
    return green, exit_val


def verify_integral_equation(nl: NonlinearitySpec, data, domain: DomainSpec, T: float, x: float,
                             n_paths: int, rng, *, n_time: int = 24, dt: float = 1e-3,
                             dx: float = DEFAULT_DX) -> IntegralCheck:
    """Residual ``|u(T,x) + G psi(u)(x) - K f(x)|`` with ``u`` from finite differences.

    ``G`` and ``K`` are estimated with plain Brownian paths (no branching).
    For KPP, ``data`` is the initial condition ``g`` of ``v`` and the check runs
    on ``u = 1 - v`` with ``f = 1 - g``.  The same paths are scored against a
    coarse and a fine grid; their difference gives the FD budget.
    """
    if nl.kind == "linear":
        raise ArgumentError("the integral-equation check needs a nonlinearity")
    data = as_field(data)
    if n_paths < 2:
        raise ArgumentError("n_paths must be at least 2")
    gen = as_generator(rng)
    coarse, fine = fd_pair(nl, data, domain, None, T, x_range=(x, x), dx=dx)
    if nl.kind == "kpp":
        f = as_field(f"1-({data.source})")
        flip = lambda g: GridSolution(g.xs, g.ts, 1.0 - g.values, g.dx, g.dt, g.meta)  # noqa: E731
        coarse, fine = flip(coarse), flip(fine)
    else:
        f = data
    z_paths = gen.standard_normal((n_time + 1, n_paths)) if not domain.bounded else None
    # bounded paths are drawn step by step; both grids replay the same stream
    key = int(gen.integers(2**62))
    results = []
    for grid in (coarse, fine):
        sub = np.random.Generator(np.random.Philox(key=key))
        green, poisson = _path_terms(nl, grid, f, domain, T, x, z_paths, sub, n_time, dt,
                                     n_paths)
        results.append((float(grid.at(T, x)), green, poisson))
    u_f, green, poisson = results[1]
    y = green - poisson
    signed_f = u_f + float(np.mean(y))
    u_c, green_c, poisson_c = results[0]
    signed_c = u_c + float(np.mean(green_c - poisson_c))
    stderr = float(np.std(y, ddof=1) / math.sqrt(n_paths))
    return IntegralCheck(abs(signed_f), stderr, richardson_budget(signed_c, signed_f, coarse, fine),
                         u_f, float(np.mean(green)), float(np.mean(poisson)))


def _lemma_u(y, t, k, u0, phi, z, wz, s_unit, w_unit):
    """``u(y, t)`` defined by the lemma's representation, by tensor quadrature.

    ``y`` has any shape; the result has the same shape.
    """
    y = np.asarray(y, dtype=float)[..., None]
    first = math.exp(-k * t) * np.sum(wz * u0(y + math.sqrt(t) * z), axis=-1)
    if t == 0.0:
        return first
    s = t * s_unit
    ws = t * w_unit
    total = np.zeros(first.shape)
    for sj, wj in zip(s, ws):
        inner = np.sum(wz * phi(y + math.sqrt(sj) * z, np.full(z.shape, t - sj)), axis=-1)
        total += wj * k * math.exp(-k * sj) * inner
    return first + total


def verify_lemma_identity(k: float, T: float, x: float, test_phi, quad_n: int = 64,
                          initial="exp(-x^2)") -> float:
    """Absolute difference of the two sides of the lemma identity.

    With ``u(x,t) = E_x[e^{-kt} u0(xi_t) + int_0^t k e^{-ks} Phi(xi_s, t-s) ds]``,
    the identity reads ``u(x,T) + k E_x int_0^T u(xi_s, T-s) ds =
    E_x u0(xi_T) + k E_x int_0^T Phi(xi_s, T-s) ds``.  Expectations over
    ``xi_s`` use Gauss-Hermite nodes, time integrals Gauss-Legendre nodes.
    """
    if not (k > 0 and T > 0 and quad_n >= 2):
        raise ArgumentError("need k > 0, T > 0 and quad_n >= 2")
    phi_f = as_field(test_phi)
    u0_f = as_field(initial)

    def phi(y, t):
        return phi_f(y, t) if phi_f.needs_time else phi_f(y)

    def u0(y):
        return _data_at_zero(u0_f, y)

    z, wz = gauss_hermite(quad_n)
    nodes, weights = leggauss(quad_n)
    s_unit = 0.5 * (nodes + 1.0)
    w_unit = 0.5 * weights

    lhs_u = float(_lemma_u(x, T, k, u0, phi, z, wz, s_unit, w_unit))
    lhs_int = 0.0
    rhs_int = 0.0
    for sj, wj in zip(T * s_unit, T * w_unit):
        ys = x + math.sqrt(sj) * z
        lhs_int += wj * np.sum(wz * _lemma_u(ys, T - sj, k, u0, phi, z, wz, s_unit, w_unit))
        rhs_int += wj * np.sum(wz * phi(ys, np.full(z.shape, T - sj)))
    lhs = lhs_u + k * lhs_int
    rhs = float(np.sum(wz * u0(x + math.sqrt(T) * z))) + k * rhs_int
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise NumericalError("lemma quadrature produced non-finite values")
    return abs(lhs - rhs)
