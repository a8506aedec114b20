"""
Computable versions of the limit objects.

Stratonovich integrals are realized by their endpoint formula F(X_u) - F(0).
Wiener-Itô integrals against a Brownian motion W independent of (X, Y) are
left-point Riemann sums on the X lattice with fresh N(0, h) increments; their
conditional variance given (X, Y) is returned beside the value.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.crossing_scheme import occupation_local_time, simulate_coupled
from src.hermite_constants import KAPPA_3_CRITICAL
from src.seeding import stream
from src.variation_stats import GridMismatch, v_statistic, z_along_walk
from src.weights import derivative_weight, get_weight

logger = logging.getLogger(__name__)

STRATONOVICH_ENDPOINT = "stratonovich_endpoint"
WIENER_ITO = "wiener_ito"
LOCAL_TIME_WEIGHTED = "local_time_weighted"
CRITICAL_RESIDUAL = "critical_residual"

# Per-step trapezoid remainder is at most (1/120) sup|f''''| |ΔZ|^5 (its Peano kernel is
# nonnegative); doubled.
TAYLOR_CONSTANT = 1.0 / 60.0


@dataclass(frozen=True)
class LimitValue:
    kind: str
    value: float
    conditional_variance: float = None

    def __post_init__(self):
        if self.conditional_variance is not None and self.conditional_variance < 0:
            raise ValueError(f"conditional variance must be nonnegative, got {self.conditional_variance}")

    @property
    def standardized(self):
        """value / conditional sd, or None when the variance is missing or zero."""
        if not self.conditional_variance:
            return None
        return self.value / math.sqrt(self.conditional_variance)


def _primitive(f):
    f = get_weight(f)
    if not f.has_primitive:
        raise ValueError(f"weight '{f.name}' has no registered primitive")
    return f.primitive


def stratonovich_endpoint(f, X, y_end):
    """F(X_{y_end}) - F(X_0), with X read at the lattice point nearest y_end."""
    F = _primitive(f)
    x_end = X.values_at(X.nearest_index(y_end))
    return float(F(x_end) - F(0.0))


def _side_integrand(f, X, j_end):
    f = get_weight(f)
    side = X.side(1 if j_end >= 0 else -1, abs(int(j_end)))
    return f(side[:-1])


def side_conditional_variance(f, X, j_end):
    """Σ_{j < |j_end|} f(X^±_{jh})² h, the variance of ∫_0^{j_end·h} f(X) dW given X."""
    if j_end == 0:
        return 0.0
    return math.fsum(_side_integrand(f, X, j_end) ** 2) * X.h


def wiener_ito_at_index(f, X, j_end, seed=None):
    if j_end == 0:
        return LimitValue(WIENER_ITO, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    integrand = _side_integrand(f, X, j_end)
    dW = rng.standard_normal(len(integrand)) * math.sqrt(X.h)
    return LimitValue(
        WIENER_ITO,
        math.fsum(integrand * dW),
        math.fsum(integrand ** 2) * X.h,
    )


def wiener_ito_integral(f, X, u, seed=None):
    """
    ∫_0^u f(X_s) dW_s on the side of sign(u), as a left-point sum.

    Args:
        f: Weight name or WeightFunction
        X: FbmGrid covering |u|
        u: Signed upper limit
        seed: Source of the W increments; keep it disjoint from X and Y streams

    Returns:
        LimitValue with the conditional variance Σ f(X^±_{jh})² h
    """
    count = int(math.floor(abs(u) / X.h + 1e-9))
    return wiener_ito_at_index(f, X, count if u >= 0 else -count, seed)


def _local_time_integrand(f, X, L):
    if L.level != X.level:
        raise GridMismatch(f"local time level {L.level} does not match FbmGrid level {X.level}")
    f = get_weight(f)
    return f(X.values_at(L.indices)) * L.values


def local_time_conditional_variance(f, X, L):
    """Σ_j f(X_{jh})² L_j² h."""
    return math.fsum(_local_time_integrand(f, X, L) ** 2) * X.h


def local_time_weighted_integral(f, X, L, seed=None):
    """∫ f(X_s) L_t^s dW_s over the support of L, with fresh W."""
    integrand = _local_time_integrand(f, X, L)
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal(len(integrand)) * math.sqrt(X.h)
    return LimitValue(
        LOCAL_TIME_WEIGHTED,
        math.fsum(integrand * dW),
        math.fsum(integrand ** 2) * X.h,
    )


def expected_local_time_square(horizon):
    """E ∫ (L_t^s)² ds = (8/3) t^{3/2} / √(2π) for standard Brownian motion."""
    return 8.0 / 3.0 * horizon ** 1.5 / math.sqrt(2.0 * math.pi)


def local_time_square_mc(level, horizon, reps, master_seed=0, fine_level=None):
    """
    Monte Carlo estimate of E ∫ (L_t^s)² ds from coupled records.

    Returns:
        (mean, standard error)
    """
    if reps < 2:
        raise ValueError(f"need at least 2 replications, got {reps}")
    samples = np.empty(reps)
    for rep in range(reps):
        rec = simulate_coupled(level, horizon, fine_level, seed=stream(master_seed, "oracle", rep, level))
        L = occupation_local_time(rec)
        samples[rep] = math.fsum(L.values ** 2) * L.h
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(reps))


def fifth_power_envelope(X, rec):
    """Σ_k |Z_{T_{k+1}} - Z_{T_k}|^5."""
    return math.fsum(np.abs(np.diff(z_along_walk(X, rec))) ** 5)


def taylor_envelope(f, X, rec):
    """TAYLOR_CONSTANT · sup|f''''| · Σ|ΔZ|^5."""
    f = get_weight(f)
    if f.fourth_bound is None:
        raise ValueError(f"weight '{f.name}' has no recorded bound on its fourth derivative")
    return TAYLOR_CONSTANT * f.fourth_bound * fifth_power_envelope(X, rec)


def taylor_consistency(f, X, rec):
    """
    |F(Z_end) - F(0) - 2^{-nH/2}V^{(1)}(f) + (2^{-3nH/2}/12) V^{(3)}(f'')|.

    Bounded by taylor_envelope for the registered weights.
    """
    f = get_weight(f)
    F = _primitive(f)
    scale = 2.0 ** (-rec.level * X.hurst / 2.0)
    z_end = X.values_at(rec.j_star)
    first = scale * v_statistic(X, rec, f, 1)
    third = scale ** 3 * v_statistic(X, rec, derivative_weight(f, 2), 3)
    return abs(float(F(z_end) - F(0.0)) - first + third / 12.0)


def critical_residual(f, X, rec):
    """
    2^{-nH/2}V^{(1)}(f) - (F(Z_end) - F(0)).

    At H = 1/6 this converges in law to (κ₃/12)∫_0^{Y_t} f''(X) dW; the
    conditional variance of that limit, evaluated at the walk endpoint, is
    attached.
    """
    f = get_weight(f)
    F = _primitive(f)
    scale = 2.0 ** (-rec.level * X.hurst / 2.0)
    z_end = X.values_at(rec.j_star)
    value = scale * v_statistic(X, rec, f, 1) - float(F(z_end) - F(0.0))
    predicted = (KAPPA_3_CRITICAL / 12.0) ** 2 * side_conditional_variance(
        derivative_weight(f, 2), X, rec.j_star
    )
    return LimitValue(CRITICAL_RESIDUAL, value, predicted)
