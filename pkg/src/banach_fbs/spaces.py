"""Weighted discrete Lebesgue/sequence spaces and their duality maps.

A point of the primal space is a :class:`Signal`: a coefficient vector
together with strictly positive cell measures (all ones for sequence
spaces, the cell volume for sampled functions on a grid).  Dual vectors
fold the measure into their entries, so the duality pairing is a plain
dot product and never needs to touch the weights again::

    <w, v> = sum_k w.values[k] * v.values[k]

All functions here are pure; reductions use numpy's pairwise summation,
so results do not depend on any internal partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Signal",
    "DualVector",
    "Exponents",
    "signed_power",
    "norm",
    "dual_norm",
    "duality_map",
    "pairing",
    "holder_bound_jr",
]


def _as_vector(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        a = a.reshape(-1)
    return a


@dataclass(frozen=True)
class Signal:
    """Coefficient vector of a weighted ell^e / discretized L^e space.

    Parameters
    ----------
    values : array_like
        Coefficients, finite reals.
    exponent : float
        Norm exponent e > 1 of the ambient space.
    weights : array_like, optional
        Strictly positive cell measures; defaults to all ones.
    """

    values: np.ndarray
    exponent: float
    weights: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values))
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones_like(self.values))
        else:
            object.__setattr__(self, "weights", _as_vector(self.weights))
        if self.weights.shape != self.values.shape:
            raise DomainError("weights and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("signal values must be finite")
        if not (np.all(self.weights > 0.0) and np.all(np.isfinite(self.weights))):
            raise DomainError("weights must be strictly positive and finite")
        if not self.exponent > 1.0:
            raise DomainError(f"exponent must be > 1, got {self.exponent}")

    def __len__(self):
        return self.values.size

    def with_values(self, values) -> "Signal":
        """Same space, new coefficients."""
        return Signal(values, self.exponent, self.weights)


@dataclass(frozen=True)
class DualVector:
    """Element of the dual space, cell measures folded into the entries."""

    values: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values))
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones_like(self.values))
        else:
            object.__setattr__(self, "weights", _as_vector(self.weights))
        if self.weights.shape != self.values.shape:
            raise DomainError("weights and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("dual vector values must be finite")
        if not (np.all(self.weights > 0.0) and np.all(np.isfinite(self.weights))):
            raise DomainError("weights must be strictly positive and finite")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class Exponents:
    """Exponent bundle (p, r, s) of a solve plus the step-size margin.

    p is the smoothness exponent of the data-space norm, r the power on
    the data-fit term, s the power on the penalty, delta the safety
    margin in the step-size cap.
    """

    p: float
    r: float
    s: float
    p_dual: float
    delta: float = 0.5

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise DomainError(f"p must be in (1, 2], got {self.p}")
        if not self.r >= self.p:
            raise DomainError(f"r must satisfy r >= p, got r={self.r}, p={self.p}")
        if not 1.0 <= self.s <= self.r:
            raise DomainError(f"s must be in [1, r], got s={self.s}, r={self.r}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")
        if abs(1.0 / self.p + 1.0 / self.p_dual - 1.0) > 1e-12:
            raise DomainError("p_dual inconsistent with p")

    @staticmethod
    def make(p: float, r: float, s: float, delta: float = 0.5) -> "Exponents":
        """Build a bundle with p_dual derived from p."""
        return Exponents(p=p, r=r, s=s, p_dual=p / (p - 1.0), delta=delta)


def signed_power(x, a: float):
    """sign(x) * |x|**a, elementwise; 0 at x = 0 for a > 0, sign(x) for a = 0.

    Accepts scalars or arrays.  a must be non-negative and x finite.
    """
    if a < 0.0:
        raise DomainError(f"exponent must be >= 0, got {a}")
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("signed_power requires finite input")
    if a == 0.0:
        out = np.sign(xa)
    elif a == 1.0:
        out = xa.copy()
    else:
        out = np.sign(xa) * np.abs(xa) ** a
    if np.isscalar(x) or xa.ndim == 0:
        return float(out)
    return out


def norm(u: Signal, exponent: float = None) -> float:
    """Weighted e-norm (sum_k w_k |u_k|^e)^(1/e); defaults to u.exponent."""
    e = u.exponent if exponent is None else float(exponent)
    if e < 1.0:
        raise DomainError(f"norm exponent must be >= 1, got {e}")
    return float(np.sum(u.weights * np.abs(u.values) ** e) ** (1.0 / e))


def dual_norm(w: DualVector, primal_exponent: float) -> float:
    """Norm of a dual vector against the weighted e-norm with e = primal_exponent.

    With measures folded into the dual entries this is
    (sum_k w_k^(1-e') |values_k|^(e'))^(1/e'), e' the conjugate exponent.
    primal_exponent = 1 gives the sup of |values_k| / w_k.
    """
    e = float(primal_exponent)
    if e < 1.0:
        raise DomainError(f"primal exponent must be >= 1, got {e}")
    ratios = np.abs(w.values) / w.weights
    if e == 1.0:
        return float(np.max(ratios, initial=0.0))
    ep = e / (e - 1.0)
    return float(np.sum(w.weights * ratios**ep) ** (1.0 / ep))


def pairing(w: DualVector, v: Signal) -> float:
    """Duality pairing <w, v>: a plain dot product by construction."""
    return float(np.dot(w.values, v.values))


def duality_map(u: Signal, space_exponent: float, power: float) -> DualVector:
    """Gradient of ||.||^q / q at u, for the weighted e-norm.

    Componentwise ``w_k * signed_power(u_k, e-1) * norm(u, e)^(q-e)`` with
    e = space_exponent and q = power, the measure folded in.  Satisfies
    ``<j(u), u> = norm(u, e)^q`` and ``dual_norm(j(u), e) = norm(u, e)^(q-1)``.
    Maps 0 to 0 (single-valued there for q > 1).
    """
    e = float(space_exponent)
    q = float(power)
    if e <= 1.0:
        raise DomainError(f"space exponent must be > 1, got {e}")
    if q <= 1.0:
        raise DomainError(f"power must be > 1, got {q}")
    n = norm(u, e)
    if n == 0.0:
        return DualVector(np.zeros_like(u.values), u.weights)
    scale = n ** (q - e) if q != e else 1.0
    return DualVector(u.weights * signed_power(u.values, e - 1.0) * scale, u.weights)


# Scalar-kink constants 2^(2-p) for the pointwise map sign(t)|t|^(e-1),
# tabulated on a grid of space exponents and validated against sampled
# difference ratios (see tests); entries interpolate linearly in e.
_KINK_TABLE_E = np.array([1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0])
_KINK_TABLE_C = 2.0 ** (2.0 - np.minimum(_KINK_TABLE_E, 2.0))

_HEADROOM = 1.15


def holder_bound_jr(space_exponent: float, power: float, radius: float) -> float:
    """Upper bound M with ||j(u) - j(v)|| <= M ||u - v||^(p-1) on a ball.

    p = min(2, space_exponent) is the smoothness order; the bound is valid
    for norm(u), norm(v) <= radius.  The Hilbert case (e = q = 2) returns
    the exact Lipschitz constant 1; every other entry carries 15% headroom
    over the sampled difference-ratio supremum.
    """
    e = float(space_exponent)
    q = float(power)
    if e <= 1.0:
        raise DomainError(f"space exponent must be > 1, got {e}")
    p = min(2.0, e)
    if q < p:
        raise DomainError(f"power must be >= min(2, space exponent), got {q} < {p}")
    if radius <= 0.0:
        raise DomainError(f"radius must be positive, got {radius}")
    if e == 2.0 and q == 2.0:
        return 1.0
    kink = float(np.interp(min(e, 2.0), _KINK_TABLE_E, _KINK_TABLE_C))
    c = max(1.0, e - 1.0) * (kink + max(0.0, q - p))
    return _HEADROOM * c * max(1.0, radius) ** (q - p)
