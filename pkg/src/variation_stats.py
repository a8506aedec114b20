"""
Weighted power variations of Z = X∘Y along the crossing scheme.

The statistics read Z only at the hitting times, where Z_{T_k} is X at the
walk position, so they are functions of an FbmGrid and a CrossingRecord.
Sums are accumulated with math.fsum so the exact identities below can be
checked at relative 1e-9.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from src.crossing_scheme import COUPLED
from src.gaussian_core import Hurst
from src.hermite_constants import gaussian_moment, hermite_eval, kappa
from src.weights import get_weight

logger = logging.getLogger(__name__)

STATISTICS = ("V", "W", "S", "R")


class GridMismatch(ValueError):
    """Two lattice objects live on different levels."""


def _check_levels(X, rec):
    if X.level != rec.level:
        raise GridMismatch(f"FbmGrid level {X.level} does not match crossing level {rec.level}")


def _trapezoid(f, values):
    fv = f(values)
    return 0.5 * (fv[:-1] + fv[1:])


def _scale(X):
    return 2.0 ** (X.level * X.hurst / 2.0)


def relative_discrepancy(left, right):
    return abs(left - right) / (1.0 + abs(left))


def z_along_walk(X, rec):
    """Z_{T_k} = X at grid index positions[k], k = 0..⌊2^n t⌋."""
    _check_levels(X, rec)
    return X.values_at(rec.positions)


def v_statistic(X, rec, f, r):
    """
    V_n^{(r)}(f,t) = Σ_k ½(f(Z_{T_k}) + f(Z_{T_{k+1}}))[(2^{nH/2}ΔZ_k)^r - μ_r].

    Raises:
        SpanExceeded: if the walk leaves the simulated X span
    """
    f = get_weight(f)
    z = z_along_walk(X, rec)
    increments = _scale(X) * np.diff(z)
    terms = _trapezoid(f, z) * (increments ** r - gaussian_moment(r))
    return math.fsum(terms)


def v_statistic_separated(X, rec, f, r):
    """Same quantity summed over cells: Σ_j Δf_j[(2^{nH/2}ΔX_j)^r - μ_r](U_j + (-1)^r D_j)."""
    f = get_weight(f)
    _check_levels(X, rec)
    cells = rec.cells
    if len(cells) == 0:
        return 0.0
    grid = X.values_at(np.append(cells, cells[-1] + 1))
    increments = _scale(X) * np.diff(grid)
    sign = -1 if r % 2 else 1
    multiplicity = rec.up.astype(np.float64) + sign * rec.down
    terms = _trapezoid(f, grid) * (increments ** r - gaussian_moment(r)) * multiplicity
    return math.fsum(terms)


def w_statistic_at_index(X, f, order, j_end):
    """W_n^{(order)} on the side of sign(j_end), summed over the first |j_end| cells."""
    f = get_weight(f)
    if j_end == 0:
        return 0.0
    side = X.side(1 if j_end > 0 else -1, abs(int(j_end)))
    increments = _scale(X) * np.diff(side)
    return math.fsum(_trapezoid(f, side) * hermite_eval(order, increments))


def w_statistic(X, f, order, t_signed):
    """
    W_n^{(order)}(f, t) for signed t; t < 0 reads X^-_s = X_{-s}.

    Sums over j < ⌊2^{n/2}|t|⌋.
    """
    count = int(math.floor(abs(t_signed) / X.h + 1e-9))
    return w_statistic_at_index(X, f, order, count if t_signed >= 0 else -count)


def separation_identity_check(X, rec, f, r):
    """Relative gap between v_statistic and v_statistic_separated."""
    return relative_discrepancy(v_statistic(X, rec, f, r), v_statistic_separated(X, rec, f, r))


def transform_side(X, rec, f, r):
    """Σ_i κ_{r,i} W_n^{(2i-1)}(f, Y_{T_⌊2^n t⌋})."""
    _check_levels(X, rec)
    return math.fsum(
        kappa(r, i) * w_statistic_at_index(X, f, 2 * i - 1, rec.j_star) for i in range(1, r + 1)
    )


def transform_identity_check(X, rec, f, r):
    """Relative gap between V_n^{(2r-1)} and its Hermite decomposition into W's."""
    return relative_discrepancy(v_statistic(X, rec, f, 2 * r - 1), transform_side(X, rec, f, r))


def s_statistic(X, rec, f, p, kappa_exp):
    """Normalized symmetric p-variation along the hitting times: 2^{-nκ} V_n^{(p)}."""
    return 2.0 ** (-rec.level * kappa_exp) * v_statistic(X, rec, f, p)


def raw_increment_moment(H, level, p):
    """
    E[(Z_{(k+1)2^{-n}} - Z_{k2^{-n}})^p].

    Conditioning on Y, the increment is N(0, |ΔY|^{2H}) with ΔY ~ N(0, 2^{-n}),
    so the moment is μ_p · 2^{-npH/2} · E|N|^{pH}, where
    E|N|^q = 2^{q/2} Γ((q+1)/2) / √π.
    """
    H = Hurst(H)
    mu = gaussian_moment(p)
    if mu == 0:
        return 0.0
    q = p * H
    abs_moment = 2.0 ** (q / 2.0) * special.gamma((q + 1.0) / 2.0) / math.sqrt(math.pi)
    return mu * 2.0 ** (-level * q / 2.0) * abs_moment


def r_statistic(X, rec, f, p, kappa_exp=0.0):
    """
    Raw S_n^{(p)} on the time grid k2^{-n}, read from a coupled record.

    Y is taken from the fine path and X at the nearest lattice point, so the
    value carries a discretization bias of order one lattice cell.
    """
    if rec.mode != COUPLED:
        raise ValueError("the raw time-grid statistic needs a coupled record")
    _check_levels(X, rec)
    f = get_weight(f)
    count = rec.n_steps
    stride = 2 ** (rec.fine_level - rec.level)
    y = rec.y_path[:count * stride + 1:stride]
    z = X.values_at(np.rint(y / X.h).astype(np.int64))
    centering = raw_increment_moment(X.hurst, rec.level, p)
    terms = _trapezoid(f, z) * (np.diff(z) ** p - centering)
    return 2.0 ** (rec.level * kappa_exp) * math.fsum(terms)


@dataclass
class VariationSeries:
    """One statistic of one realization across levels."""

    statistic: str
    order: int
    weight: str
    hurst: float
    horizon: float
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = [n for n, v in self.values.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite {self.statistic} values at levels {bad}")
        levels = sorted(self.values)
        gaps = set(np.diff(levels).tolist())
        if len(gaps) > 1:
            raise ValueError(f"levels {levels} are not evenly spaced")


def variation_series(statistic, X, records, f, order, kappa_exp=0.0):
    """
    Evaluate one statistic at several levels from a single X realization.

    X is generated at the finest level and coarsened to each record's level.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic '{statistic}'; expected one of {STATISTICS}")
    f = get_weight(f)
    values = {}
    horizon = None
    for rec in records:
        Xn = X.coarsen(rec.level) if rec.level != X.level else X
        if statistic == "V":
            values[rec.level] = v_statistic(Xn, rec, f, order)
        elif statistic == "W":
            values[rec.level] = w_statistic_at_index(Xn, f, order, rec.j_star)
        elif statistic == "S":
            values[rec.level] = s_statistic(Xn, rec, f, order, kappa_exp)
        else:
            values[rec.level] = r_statistic(Xn, rec, f, order, kappa_exp)
        horizon = rec.horizon
    return VariationSeries(statistic, order, f.name, float(X.hurst), horizon, values)
