"""
Hermite polynomials, Gaussian moments and the limit-variance constants.

Expansion coefficients of monomials in the Hermite basis are exact integers,
obtained by peeling leading terms off x^m with the recurrence-built table.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd

from src.gaussian_core import Hurst, rho

logger = logging.getLogger(__name__)

# Constant of the critical H = 1/6 change-of-variable formula; literal value.
KAPPA_3_CRITICAL = 2.322

DEFAULT_TRUNCATION = 2 ** 14
ALPHA_REL_TOL = 1e-10
ALPHA_WORK_CAP = 2 ** 24


class AlphaDivergence(ValueError):
    """Σ ρ(a)^m diverges: H >= 1 - 1/(2m)."""


class AlphaUnconverged(RuntimeError):
    """Tail bound not reached within the work cap."""


class HermiteBasis:
    """
    Probabilists' Hermite polynomials H_0..H_max as integer coefficient rows.

    coefficients[p][d] is the coefficient of x^d in H_p.
    """

    def __init__(self, max_degree=32):
        if max_degree < 1:
            raise ValueError(f"max_degree must be positive, got {max_degree}")
        self.max_degree = max_degree
        rows = [[1], [0, 1]]
        for p in range(1, max_degree):
            # H_{p+1} = x H_p - p H_{p-1}
            nxt = [0] + rows[p]
            for d, c in enumerate(rows[p - 1]):
                nxt[d] -= p * c
            rows.append(nxt)
        self.coefficients = tuple(tuple(row) for row in rows[:max_degree + 1])

    def _check(self, p):
        if p < 0 or p > self.max_degree:
            raise ValueError(f"degree {p} outside 0..{self.max_degree}")

    def evaluate(self, p, x):
        """H_p(x) by the three-term recurrence."""
        self._check(p)
        x = np.asarray(x, dtype=np.float64)
        prev, cur = np.ones_like(x), x.copy()
        if p == 0:
            out = prev
        else:
            for k in range(1, p):
                prev, cur = cur, x * cur - k * prev
            out = cur
        return out[()] if out.ndim == 0 else out

    def monomial(self, m):
        """
        Integer coefficients c_q with x^m = Σ_q c_q H_q(x).

        Returns:
            tuple of length m+1
        """
        self._check(m)
        remaining = [0] * m + [1]
        expansion = [0] * (m + 1)
        for deg in range(m, -1, -1):
            c = remaining[deg]
            if c == 0:
                continue
            expansion[deg] = c
            for d, a in enumerate(self.coefficients[deg]):
                remaining[d] -= c * a
        return tuple(expansion)


_BASIS = HermiteBasis()


def _basis_for(degree):
    global _BASIS
    if degree > _BASIS.max_degree:
        _BASIS = HermiteBasis(max(degree, 2 * _BASIS.max_degree))
    return _BASIS


def hermite_eval(p, x, basis=None):
    """Value of H_p at x (probabilists' convention)."""
    basis = basis or _BASIS
    return basis.evaluate(p, x)


@lru_cache(maxsize=None)
def monomial_in_hermite(m):
    return _basis_for(m).monomial(m)


def gaussian_moment(p):
    """μ_p = E[N^p] for standard normal N: 0 for odd p, (p-1)!! otherwise."""
    if p < 0:
        raise ValueError(f"moment order must be nonnegative, got {p}")
    if p % 2:
        return 0
    return math.prod(range(p - 1, 0, -2))


def kappa(r, i):
    """Coefficient κ_{r,i} of H_{2i-1} in x^{2r-1}."""
    if not 1 <= i <= r:
        raise ValueError(f"kappa index i must lie in 1..{r}, got {i}")
    return monomial_in_hermite(2 * r - 1)[2 * i - 1]


def b_even(r, a):
    """Coefficient b_{2r,a} of H_{2a} in x^{2r}."""
    if not 1 <= a <= r:
        raise ValueError(f"b index a must lie in 1..{r}, got {a}")
    return monomial_in_hermite(2 * r)[2 * a]


def _tail_estimate(H, m, K):
    # ρ(a) ~ H(2H-1) a^{2H-2}; both tails of Σ_{|a|>K} ρ(a)^m by the midpoint integral
    c = H * (2 * H - 1)
    if c == 0.0:
        return 0.0
    decay = (2.0 - 2.0 * H) * m - 1.0
    return 2.0 * c ** m * (K + 0.5) ** (-decay) / decay


@lru_cache(maxsize=256)
def _rho_power_sum(H, m, truncation, rel_tol, work_cap):
    K = truncation
    partial = 1.0 + 2.0 * math.fsum(rho(H, np.arange(1, K + 1)) ** m)
    estimate = partial + _tail_estimate(H, m, K)
    while True:
        if 2 * K > work_cap:
            raise AlphaUnconverged(
                f"Σρ(a)^{m} at H={H} not within {rel_tol:g} after {K} terms"
            )
        partial += 2.0 * math.fsum(rho(H, np.arange(K + 1, 2 * K + 1)) ** m)
        K *= 2
        corrected = partial + _tail_estimate(H, m, K)
        if abs(corrected - estimate) <= rel_tol * abs(corrected):
            return corrected
        estimate = corrected
        logger.debug("alpha(H=%s, m=%d): extended truncation to %d", H, m, K)


def alpha(H, m, truncation=DEFAULT_TRUNCATION, rel_tol=ALPHA_REL_TOL, work_cap=ALPHA_WORK_CAP):
    """
    α_m = sqrt(m! Σ_{a∈Z} ρ(a)^m).

    The sum is truncated at K plus an integral estimate of the tail; K
    doubles until two successive corrected sums agree to rel_tol.

    Raises:
        AlphaDivergence: if H >= 1 - 1/(2m)
        AlphaUnconverged: if the work cap is hit first
    """
    H = Hurst(H)
    if m < 1:
        raise ValueError(f"alpha order must be positive, got {m}")
    if H >= 1.0 - 1.0 / (2 * m):
        raise AlphaDivergence(
            f"Σρ(a)^{m} diverges for H={H}: convergence requires H < 1 - 1/(2·{m})"
        )
    if m == 1:
        # partial sums telescope to (K+1)^{2H} - K^{2H}, which vanishes for H < 1/2
        return 0.0
    total = _rho_power_sum(float(H), m, truncation, rel_tol, work_cap)
    return math.sqrt(math.factorial(m) * max(total, 0.0))


def beta_odd(H, r):
    """β_{2r-1} = sqrt(Σ_{l=2..r} κ_{r,l}² α_{2l-1}²)."""
    if r < 2:
        raise ValueError(f"beta_odd needs r >= 2, got {r}")
    return math.sqrt(math.fsum(kappa(r, l) ** 2 * alpha(H, 2 * l - 1) ** 2 for l in range(2, r + 1)))


def gamma_even(H, r):
    """γ_{2r} = sqrt(Σ_{a=1..r} b_{2r,a}² α_{2a}²)."""
    if r < 1:
        raise ValueError(f"gamma_even needs r >= 1, got {r}")
    return math.sqrt(math.fsum(b_even(r, a) ** 2 * alpha(H, 2 * a) ** 2 for a in range(1, r + 1)))


@dataclass(frozen=True)
class LimitConstants:
    """All constants attached to one (H, r)."""

    hurst: Hurst
    r: int
    mu: dict = field(default_factory=dict)
    kappa: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    alpha: dict = field(default_factory=dict)
    beta_odd: float = None
    gamma_even: float = None

    def to_frame(self):
        """Long table: one row per constant."""
        rows = [("mu", p, v) for p, v in self.mu.items()]
        rows += [("kappa", i, v) for i, v in self.kappa.items()]
        rows += [("b", a, v) for a, v in self.b.items()]
        rows += [("alpha", m, v) for m, v in self.alpha.items()]
        rows.append(("beta", 2 * self.r - 1, self.beta_odd))
        rows.append(("gamma", 2 * self.r, self.gamma_even))
        frame = pd.DataFrame(rows, columns=["constant", "index", "value"])
        frame.insert(0, "r", self.r)
        frame.insert(0, "H", float(self.hurst))
        return frame


def limit_constants(H, r):
    """Collect μ_p (p <= 4r), κ_{r,·}, b_{2r,·}, convergent α_m (m <= 2r), β, γ."""
    H = Hurst(H)
    if r < 1:
        raise ValueError(f"r must be positive, got {r}")
    alphas = {}
    for m in range(1, 2 * r + 1):
        try:
            alphas[m] = alpha(H, m)
        except (AlphaDivergence, AlphaUnconverged) as e:
            logger.info("alpha_%d omitted: %s", m, e)
    try:
        beta = beta_odd(H, r) if r >= 2 else None
    except (AlphaDivergence, AlphaUnconverged):
        beta = None
    try:
        gamma = gamma_even(H, r)
    except (AlphaDivergence, AlphaUnconverged):
        gamma = None
    return LimitConstants(
        hurst=H,
        r=r,
        mu={p: gaussian_moment(p) for p in range(4 * r + 1)},
        kappa={i: kappa(r, i) for i in range(1, r + 1)},
        b={a: b_even(r, a) for a in range(1, r + 1)},
        alpha=alphas,
        beta_odd=beta,
        gamma_even=gamma,
    )
