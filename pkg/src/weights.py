"""
Weight functions for the weighted variations.
Closed registry of C_b^∞ candidates with derivatives up to order 4 and,
where known, a primitive.
"""

from dataclasses import dataclass

import numpy as np

MAX_DERIVATIVE = 4


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


def _identity(x):
    return np.asarray(x, dtype=np.float64)


def _rational(x):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + x * x)


def _rational_d1(x):
    x = np.asarray(x, dtype=np.float64)
    return -2.0 * x / (1.0 + x * x) ** 2


def _rational_d2(x):
    x = np.asarray(x, dtype=np.float64)
    return (6.0 * x * x - 2.0) / (1.0 + x * x) ** 3


def _rational_d3(x):
    x = np.asarray(x, dtype=np.float64)
    return 24.0 * x * (1.0 - x * x) / (1.0 + x * x) ** 4


def _rational_d4(x):
    x = np.asarray(x, dtype=np.float64)
    x2 = x * x
    return 24.0 * (5.0 * x2 * x2 - 10.0 * x2 + 1.0) / (1.0 + x2) ** 5


@dataclass(frozen=True)
class WeightFunction:
    """
    A weight f with its derivatives f', f'', ... and an optional primitive F.
    fourth_bound is sup |f''''| when known.

    All callables act elementwise on numpy arrays.
    """

    name: str
    f: callable
    derivatives: tuple = ()
    primitive: callable = None
    fourth_bound: float = None

    def __call__(self, x):
        return self.f(x)

    def derivative(self, k):
        """The k-th derivative as a callable (k=0 is f itself)."""
        if k == 0:
            return self.f
        if not 1 <= k <= len(self.derivatives):
            raise ValueError(f"weight '{self.name}' has no derivative of order {k}")
        return self.derivatives[k - 1]

    @property
    def has_primitive(self):
        return self.primitive is not None


WEIGHTS = {
    "one": WeightFunction("one", _one, (_zero,) * MAX_DERIVATIVE, _identity, 0.0),
    "cos": WeightFunction(
        "cos",
        np.cos,
        (lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin, np.cos),
        np.sin,
        1.0,
    ),
    "rational": WeightFunction(
        "rational",
        _rational,
        (_rational_d1, _rational_d2, _rational_d3, _rational_d4),
        np.arctan,
        24.0,
    ),
}


def weight_names():
    return sorted(WEIGHTS)


def get_weight(name):
    """
    Look up a registered weight by name.

    Args:
        name: Registry key, or a WeightFunction which is returned unchanged

    Returns:
        WeightFunction
    """
    if isinstance(name, WeightFunction):
        return name
    try:
        return WEIGHTS[name]
    except KeyError:
        raise ValueError(
            f"unknown weight '{name}'; registered: {', '.join(weight_names())}"
        ) from None


def derivative_weight(weight, k):
    """f^{(k)} as a WeightFunction of its own, with primitive f^{(k-1)}."""
    weight = get_weight(weight)
    if k == 0:
        return weight
    g = weight.derivative(k)
    primitive = weight.derivative(k - 1)
    suffix = "'" * k
    return WeightFunction(f"{weight.name}{suffix}", g, weight.derivatives[k:], primitive)
