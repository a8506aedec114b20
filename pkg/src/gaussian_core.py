"""
Two-sided fractional Brownian motion on dyadic grids.

Covariance kernel, fGn autocovariance, exact path generation (circulant
embedding with a Cholesky fallback) and the inner products that the
tech-lemma inequalities are stated in.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy import linalg

logger = logging.getLogger(__name__)

# Relative size below which negative circulant eigenvalues count as round-off.
EIGEN_CLAMP_TOL = 1e-10


class SpanExceeded(IndexError):
    """A grid index lies outside the simulated span."""


class EmbeddingError(ArithmeticError):
    """Neither circulant embedding nor Cholesky produced a valid factor."""


class Hurst(float):
    """Hurst parameter, a float restricted to the open interval (0, 1)."""

    def __new__(cls, value):
        value = float(value)
        if not 0.0 < value < 1.0:
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {value}")
        return super().__new__(cls, value)


def grid_spacing(level):
    """Spacing h = 2^{-n/2} of the level-n lattice."""
    return 2.0 ** (-level / 2.0)


def cov(H, t, s):
    """
    Covariance E[X_t X_s] of two-sided fBm.

    Works elementwise on arrays.
    """
    two_h = 2.0 * Hurst(H)
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    out = 0.5 * (np.abs(s) ** two_h + np.abs(t) ** two_h - np.abs(t - s) ** two_h)
    return out[()] if out.ndim == 0 else out


def rho(H, k):
    """Autocovariance of unit-spacing fGn at integer lag k."""
    two_h = 2.0 * Hurst(H)
    k = np.abs(np.asarray(k, dtype=np.float64))
    out = 0.5 * (np.abs(k + 1.0) ** two_h + np.abs(k - 1.0) ** two_h - 2.0 * k ** two_h)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class AutocovSeq:
    """ρ(k) for |k| <= max_lag, indexed by signed lag."""

    hurst: Hurst
    max_lag: int

    def __post_init__(self):
        object.__setattr__(self, "hurst", Hurst(self.hurst))
        lags = np.arange(-self.max_lag, self.max_lag + 1)
        values = rho(self.hurst, lags)
        values.setflags(write=False)
        object.__setattr__(self, "_values", values)

    @property
    def lags(self):
        return np.arange(-self.max_lag, self.max_lag + 1)

    @property
    def values(self):
        return self._values

    def __getitem__(self, k):
        if abs(k) > self.max_lag:
            raise KeyError(k)
        return float(self._values[k + self.max_lag])


def inner_eps_delta(H, level, u, j):
    """⟨ε_u, δ_{(j+1)h}⟩ = E[X_u (X_{(j+1)h} - X_{jh})] with h = 2^{-n/2}."""
    h = grid_spacing(level)
    j = np.asarray(j, dtype=np.float64)
    return cov(H, u, (j + 1.0) * h) - cov(H, u, j * h)


def inner_delta_delta(H, level, k, l):
    """⟨δ_{(k+1)h}, δ_{(l+1)h}⟩ = 2^{-nH} ρ(k - l), signed."""
    H = Hurst(H)
    return 2.0 ** (-level * H) * rho(H, np.asarray(k) - np.asarray(l))


@dataclass(frozen=True, eq=False)
class FbmGrid:
    """
    Sample of two-sided fBm on {j·h : |j·h| <= span}.

    values[i] holds X at index j = i - half, so values[half] is X_0 = 0.
    """

    hurst: Hurst
    level: int
    span: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "hurst", Hurst(self.hurst))
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) % 2 == 0:
            raise ValueError("FbmGrid values must be a 1-d array of odd length")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def h(self):
        return grid_spacing(self.level)

    @property
    def half(self):
        """Largest index on either side."""
        return (len(self.values) - 1) // 2

    @property
    def indices(self):
        return np.arange(-self.half, self.half + 1)

    def covers(self, j):
        return bool(np.all(np.abs(np.asarray(j)) <= self.half))

    def values_at(self, j):
        """X at integer grid indices (scalar or array)."""
        j = np.asarray(j, dtype=np.int64)
        if j.size and np.max(np.abs(j)) > self.half:
            raise SpanExceeded(
                f"index {int(np.max(np.abs(j)))} outside grid half-width {self.half} "
                f"(span {self.span}, level {self.level})"
            )
        out = self.values[j + self.half]
        return out[()] if out.ndim == 0 else out

    def side(self, sign, count):
        """X^± at 0, h, ..., count·h: X_{jh} for sign >= 0, X_{-jh} otherwise."""
        j = np.arange(count + 1)
        return self.values_at(j if sign >= 0 else -j)

    def nearest_index(self, y):
        """Grid index nearest to the real point y."""
        return int(np.rint(y / self.h))

    def coarsen(self, level):
        """Restrict to a coarser level of the same parity."""
        if level > self.level or (self.level - level) % 2:
            raise ValueError(
                f"cannot coarsen level {self.level} to {level}: "
                "levels must share parity and not exceed the grid level"
            )
        stride = 2 ** ((self.level - level) // 2)
        keep = (self.half // stride) * stride
        sub = self.values[self.half - keep:self.half + keep + 1:stride]
        return FbmGrid(self.hurst, level, self.span, sub)

    def to_frame(self):
        j = self.indices
        return pd.DataFrame({"j": j, "t": j * self.h, "X": self.values})


@lru_cache(maxsize=64)
def _embedding_eigenvalues(hurst, size):
    """Eigenvalues of the 2·size circulant embedding of fGn autocovariance."""
    lags = np.arange(size + 1)
    r = rho(hurst, lags)
    row = np.concatenate([r, r[-2:0:-1]])
    eig = np.fft.fft(row).real
    eig.setflags(write=False)
    return eig


def _fgn_circulant(hurst, size, rng):
    eig = _embedding_eigenvalues(float(hurst), size)
    lam_max = float(np.max(eig))
    lam_min = float(np.min(eig))
    if lam_min < -EIGEN_CLAMP_TOL * lam_max:
        return None
    if lam_min < 0.0:
        logger.warning(
            "Clamping circulant eigenvalues down to %.3e to zero (H=%.4f, size=%d)",
            lam_min, hurst, size,
        )
        eig = np.clip(eig, 0.0, None)
    m = len(eig)
    noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(eig / m) * noise)
    return w[:size].real


def _fgn_cholesky(hurst, size, rng):
    column = rho(hurst, np.arange(size))
    try:
        factor = linalg.cholesky(linalg.toeplitz(column), lower=True)
    except linalg.LinAlgError as e:
        raise EmbeddingError(
            f"fGn covariance is not numerically positive definite (H={hurst}, size={size})"
        ) from e
    return factor @ rng.standard_normal(size)


def fgn(H, size, seed=None, method="circulant"):
    """
    Unit-spacing fractional Gaussian noise of the given length.

    Args:
        H: Hurst parameter
        size: Number of increments
        seed: Anything numpy.random.default_rng accepts
        method: 'circulant' (falls back to Cholesky when the embedding is
            not nonnegative definite) or 'cholesky'

    Returns:
        numpy array with autocovariance ρ(k)
    """
    H = Hurst(H)
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    if method == "cholesky":
        return _fgn_cholesky(H, size, rng)
    if method != "circulant":
        raise ValueError(f"unknown fGn method: {method}")
    sample = _fgn_circulant(H, size, rng)
    if sample is None:
        logger.warning(
            "Circulant embedding not nonnegative definite (H=%.4f, size=%d); using Cholesky",
            H, size,
        )
        sample = _fgn_cholesky(H, size, rng)
    return sample


def generate_fbm(H, level, span, seed=None, method="circulant"):
    """
    Exact two-sided fBm on the level-n grid over [-span, span].

    One stationary fGn sequence covers the whole doubled grid and is summed
    with the origin pinned at the centre index, so both sides are coupled
    through the fBm covariance.
    """
    H = Hurst(H)
    if span <= 0:
        raise ValueError(f"span must be positive, got {span}")
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    h = grid_spacing(level)
    half = int(math.floor(span / h + 1e-9))
    if half == 0:
        return FbmGrid(H, level, span, np.zeros(1))
    increments = fgn(H, 2 * half, seed, method) * h ** H
    path = np.concatenate([[0.0], np.cumsum(increments)])
    path = path - path[half]
    path[half] = 0.0
    return FbmGrid(H, level, span, path)


def _cells(level, horizon):
    return int(math.floor(horizon * 2.0 ** (level / 2.0) + 1e-9))


def eps_delta_inner_sum(H, level, horizon, shift=0):
    """
    Σ_{k,l < ⌊2^{n/2}t⌋} |⟨ε_{(k+shift)h}, δ_{(l+1)h}⟩|.

    shift=0 and shift=1 give the two sums bounded by 2^{n/2+1} t^{2H+1}.
    """
    K = _cells(level, horizon)
    if K == 0:
        return 0.0
    h = grid_spacing(level)
    u = (np.arange(K) + shift)[:, None] * h
    return math.fsum(np.abs(inner_eps_delta(H, level, u, np.arange(K)[None, :])).ravel())


def delta_power_sum(H, level, horizon, r):
    """Σ_{k,l < ⌊2^{n/2}t⌋} |⟨δ_{(k+1)h}, δ_{(l+1)h}⟩|^r, by lag counting."""
    H = Hurst(H)
    K = _cells(level, horizon)
    if K == 0:
        return 0.0
    lags = np.arange(-(K - 1), K)
    terms = (K - np.abs(lags)) * np.abs(2.0 ** (-level * H) * rho(H, lags)) ** r
    return math.fsum(terms)


def delta_power_rate(H, level, horizon, r):
    """Rate function bounding delta_power_sum, up to a constant depending on (H, r)."""
    H = Hurst(H)
    critical = 1.0 - 1.0 / (2 * r)
    base = 2.0 ** (level * (0.5 - r * H))
    if math.isclose(H, critical, rel_tol=0.0, abs_tol=1e-12):
        return base * (horizon * (1 + level) + horizon ** 2)
    if H < critical:
        return horizon * base
    return horizon * base + horizon ** (2 - (2 - 2 * H) * r) * 2.0 ** (level * (1 - r))
