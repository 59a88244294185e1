"""Offspring laws and mass/rate scaling for the branching particle systems.

Two families are supported:

* the KPP law: every branching event produces exactly two children, with
  unit branching intensity and unit lifetime rate;
* the critical ``alpha``-stable-type laws for ``1 < alpha <= 2``, whose
  generating function is ``phi(z) = z + (1 - z)**alpha / alpha``.  The
  probabilities are ``p_0 = 1/alpha``, ``p_1 = 0`` and
  ``p_n = (-1)**n binom(alpha, n) / alpha`` for ``n >= 2``.

For ``alpha < 2`` the support is infinite.  Partial sums and the tail have
closed forms in terms of generalized binomials, which is what the sampler and
the normalization checks rely on instead of a hard truncation.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConstructionError
from .rng import as_generator

KPP = "kpp"
TABLE_SIZE = 1024
# offspring counts past this are reported as-is; any tree cap is far below it
MAX_DRAW = 2 ** 53


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float)) and 1.0 < alpha <= 2.0):
        raise ConstructionError(
            f"alpha={alpha!r} is outside (1, 2]: for alpha > 2 the offspring generating "
            "function has negative z**n coefficients, so no branching law exists "
            "(alpha <= 2 is required)"
        )


def tail_mass(alpha: float, n: int) -> float:
    """``sum_{m > n} p_m`` for the alpha-law, from the closed form.

    ``1 - S_n = Gamma(n + 1 - alpha) / (alpha |Gamma(1 - alpha)| Gamma(n + 1))`` for ``n >= 1``.
    """
    if n < 1:
        return 1.0 - 1.0 / alpha if n == 0 else 1.0
    if alpha == 2.0:
        return 0.5 if n == 1 else 0.0
    a = alpha - 1.0
    return math.exp(math.lgamma(n - a) - math.lgamma(n + 1) - _log_norm(alpha))


def mean_tail(alpha: float, n: int) -> float:
    """``sum_{m > n} m p_m`` for the alpha-law, from the closed form.

    Equals ``Gamma(n + 1 - alpha) / (Gamma(2 - alpha) Gamma(n))`` for ``n >= 1``.
    """
    if n < 1:
        return 1.0
    if alpha == 2.0:
        return 1.0 if n == 1 else 0.0
    return math.exp(math.lgamma(n + 1 - alpha) - math.lgamma(2 - alpha) - math.lgamma(n))


def _log_norm(alpha):
    return math.log(alpha) + math.lgamma(1.0 - alpha)


@dataclass(eq=False)
class OffspringLaw:
    """Homogeneous offspring distribution with branching intensity and lifetime rate.

    ``alpha`` is either a float in ``(1, 2]`` or the string ``"kpp"``.  The
    probability table is extended lazily and append-only under a lock, so a
    shared instance may be sampled from several threads.
    """

    alpha: float | str
    intensity_c: float = 1.0
    lifetime_rate_k: float = 1.0
    _p: list = field(default_factory=list, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.alpha == KPP:
            self._p = [0.0, 0.0, 1.0]
        else:
            _check_alpha(self.alpha)
            self.alpha = float(self.alpha)
            self._p = [1.0 / self.alpha, 0.0, (self.alpha - 1.0) / 2.0]

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_lock")
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def is_kpp(self) -> bool:
        return self.alpha == KPP

    @property
    def finite_support(self) -> bool:
        return self.is_kpp or self.alpha == 2.0

    def probabilities(self, n_terms: int | None = None) -> list[float]:
        """First ``n_terms`` probabilities (the full support when it is finite)."""
        if n_terms is None:
            if not self.finite_support:
                raise ArgumentError("infinite support: pass n_terms")
            return list(self._p)
        self.extend(n_terms)
        return self._p[:n_terms] + [0.0] * max(0, n_terms - len(self._p))

    def extend(self, n_terms: int) -> None:
        """Make sure ``p_0 .. p_{n_terms-1}`` are tabulated.

        Uses ``p_{n+1} = p_n (n - alpha) / (n + 1)``, exact at ``alpha = 2``.
        """
        if self.finite_support or len(self._p) >= n_terms:
            return
        with self._lock:
            p = self._p
            alpha = self.alpha
            while len(p) < n_terms:
                n = len(p) - 1
                p.append(p[n] * (n - alpha) / (n + 1))

    def prob(self, n: int) -> float:
        if n < 0:
            return 0.0
        if self.finite_support:
            return self._p[n] if n < len(self._p) else 0.0
        self.extend(n + 1)
        return self._p[n]

    def tail(self, n: int) -> float:
        """``P(N > n)``."""
        if self.is_kpp:
            return 1.0 if n < 2 else 0.0
        return tail_mass(self.alpha, n)

    def generating_function(self, z):
        """``phi(z) = sum p_n z**n`` in closed form (intensity not included)."""
        z = np.asarray(z, dtype=float)
        if self.is_kpp:
            return z * z
        return z + (1.0 - z) ** self.alpha / self.alpha

    def sampling_table(self) -> "OffspringTable":
        table = self.__dict__.get("_table")
        if table is None:
            table = self.__dict__["_table"] = OffspringTable.from_law(self)
        return table


@dataclass(frozen=True)
class ScalingParams:
    beta: float
    k_beta: float

    @classmethod
    def for_alpha(cls, alpha: float, beta: float) -> "ScalingParams":
        return cls(beta, k_beta(alpha, beta))


@dataclass(frozen=True, eq=False)
class OffspringTable:
    """Flat, picklable inverse-CDF table handed to the tree kernels.

    ``fixed_n >= 0`` marks a degenerate law (no random draw).  ``tail_alpha``
    is zero when the table already covers the whole support; otherwise draws
    beyond the table are resolved on the closed-form tail using ``log_norm``.
    """

    cdf: np.ndarray
    fixed_n: int = -1
    tail_alpha: float = 0.0
    log_norm: float = 0.0

    @classmethod
    def from_law(cls, law: OffspringLaw, size: int = TABLE_SIZE) -> "OffspringTable":
        if law.is_kpp:
            return cls(np.array([0.0, 0.0, 1.0]), fixed_n=2)
        if law.alpha == 2.0:
            return cls(np.array([0.5, 0.5, 1.0]))
        alpha = law.alpha
        a = alpha - 1.0
        tails = np.empty(size)
        tails[0] = tails[1] = a / alpha
        for n in range(1, size - 1):
            tails[n + 1] = tails[n] * (n - a) / (n + 1)
        return cls(1.0 - tails, tail_alpha=alpha, log_norm=_log_norm(alpha))

    def tail(self, n: int) -> float:
        a = self.tail_alpha - 1.0
        return math.exp(math.lgamma(n - a) - math.lgamma(n + 1) - self.log_norm)

    def inverse(self, u: float) -> int:
        """Smallest ``n`` with ``P(N <= n) > u``.

        Binary search in the table, then exponential search and bisection on
        the closed-form tail for the rare draws past it.
        """
        cdf = self.cdf
        size = len(cdf)
        if u < cdf[size - 1] or self.tail_alpha == 0.0:
            lo, hi = -1, size - 1
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if cdf[mid] > u:
                    hi = mid
                else:
                    lo = mid
            return hi
        q = 1.0 - u
        lo, hi = size - 1, 2 * size
        while self.tail(hi) >= q:
            lo, hi = hi, 2 * hi
            if hi > MAX_DRAW:
                return MAX_DRAW
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail(mid) < q:
                hi = mid
            else:
                lo = mid
        return hi


def kpp_law() -> OffspringLaw:
    return OffspringLaw(KPP, intensity_c=1.0, lifetime_rate_k=1.0)


def alpha_law(alpha: float, beta: float = 1.0) -> OffspringLaw:
    """Critical law for the ``-u**alpha`` nonlinearity; ``k`` set to ``k_beta(alpha, beta)``."""
    _check_alpha(alpha)
    return OffspringLaw(float(alpha), intensity_c=1.0, lifetime_rate_k=k_beta(alpha, beta))


def k_beta(alpha: float, beta: float) -> float:
    """Branching rate ``alpha / beta**(alpha - 1)`` that cancels the linear term of ``phi``."""
    _check_alpha(alpha)
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    return alpha / beta ** (alpha - 1.0)


def sample_offspring(law: OffspringLaw, rng) -> int:
    """Inverse-CDF draw of an offspring count (one uniform per draw)."""
    table = law.sampling_table()
    if table.fixed_n >= 0:
        return table.fixed_n
    return table.inverse(float(as_generator(rng).random()))


def mean_offspring(law: OffspringLaw, tol: float = 1e-8, max_terms: int = 10_000) -> float:
    """``sum n p_n``: explicit partial sum plus the closed-form remainder.

    Terms are summed until the remainder drops below ``tol`` or ``max_terms``
    is reached; the remainder ``sum_{n > N} n p_n`` is then added from its
    gamma-function closed form, since for ``alpha`` near 1 it decays only
    like ``N**(1 - alpha)``.
    """
    if law.is_kpp:
        return 2.0
    if law.alpha == 2.0:
        return 1.0
    law.extend(max_terms)
    terms = []
    n = 0
    for n in range(max_terms):
        terms.append(n * law._p[n])
        if n >= 1 and mean_tail(law.alpha, n) < tol:
            break
    return math.fsum(terms) + mean_tail(law.alpha, n)
