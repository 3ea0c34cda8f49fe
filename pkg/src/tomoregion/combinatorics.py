"""Exact dimension counts and the constants that enter the confidence bounds.

Everything is computed with Python integers / :class:`fractions.Fraction` and
only converted to float at the last step, since the constants end up inside
logarithms where a silent overflow would corrupt the region radius.
"""

from __future__ import annotations

import math
from fractions import Fraction

__all__ = [
    "sym_dim",
    "definetti_constant",
    "delta_radius",
    "delta_radius_unclamped",
    "mass_threshold",
    "mass_threshold_exact",
]


def _check_nd(n: int, d: int, name: str = "n") -> None:
    if int(n) != n or n < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {n!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 < float(epsilon) < 1.0):
        raise ValueError(f"epsilon must lie in the open interval (0, 1), got {epsilon!r}")


def sym_dim(n: int, d: int) -> int:
    """Dimension of the symmetric subspace of ``n`` copies of ``C^d``.

    Equal to ``C(n + d - 1, n)``, bounded above by ``(n + 1) ** (d - 1)``.
    """
    _check_nd(n, d)
    return math.comb(n + d - 1, n)


def definetti_constant(N: int, d: int) -> int:
    """``C(N + d^2 - 1, d^2 - 1)``, i.e. ``sym_dim(N, d**2)``."""
    _check_nd(N, d, "N")
    return math.comb(N + d * d - 1, d * d - 1)


def delta_radius_unclamped(n: int, d: int, epsilon: float) -> float:
    """Square root of ``(2/n) (ln(2/eps) + 2 ln c_{2n,d})`` without the clamp at 1."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    _check_nd(n, d)
    _check_epsilon(epsilon)
    c = definetti_constant(2 * n, d)
    # math.log accepts arbitrarily large ints exactly
    delta_sq = (2.0 / n) * (math.log(2.0 / epsilon) + 2.0 * math.log(c))
    return math.sqrt(delta_sq)


def delta_radius(n: int, d: int, epsilon: float) -> float:
    """Purified-distance enlargement radius of the confidence region.

    Values above 1 are clamped to 1: the purified distance never exceeds 1,
    so a clamped radius means the enlarged region is the whole state space.
    """
    return min(1.0, delta_radius_unclamped(n, d, epsilon))


def mass_threshold_exact(n: int, d: int, epsilon: float | Fraction) -> Fraction:
    """``1 - (eps/2) / c_{2n,d}`` as an exact rational (``epsilon`` taken exactly)."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    _check_nd(n, d)
    _check_epsilon(epsilon)
    eps = Fraction(epsilon)
    return 1 - eps / 2 / definetti_constant(2 * n, d)


def mass_threshold(n: int, d: int, epsilon: float) -> float:
    """Minimal mu-mass the high-density set must carry."""
    return float(mass_threshold_exact(n, d, epsilon))
