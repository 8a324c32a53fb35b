"""Scalar resolvents of |x-y|^r/r + sigma*x + t|x|^s/s and the sparse backward step.

The backward step of the splitting iteration for weighted power penalties
decouples into independent scalar problems once the norm coupling factor
z is known; this module provides the scalar solver, its vectorized form,
and the outer fixed-point loop on z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError
from .spaces import DualVector, Exponents, Signal, norm, signed_power

__all__ = [
    "ScalarProxParams",
    "AuxSolveReport",
    "psi_value",
    "threshold_scalar",
    "threshold_array",
    "solve_aux_sparse",
]

#: Absolute tolerance on the root of the monotone scalar equation (s > 1).
ROOT_ATOL = 1e-13

#: Relative residual required of the z coupling fixed point.
Z_RTOL = 1e-11


@dataclass(frozen=True)
class ScalarProxParams:
    """Parameters of one scalar subproblem: base point y, weight t, exponents."""

    y: float
    t: float
    r: float
    s: float

    def __post_init__(self):
        if not self.t >= 0.0:
            raise DomainError(f"t must be >= 0, got {self.t}")
        if not self.r > 1.0:
            raise DomainError(f"r must be > 1, got {self.r}")
        if not 1.0 <= self.s <= self.r:
            raise DomainError(f"s must be in [1, r], got {self.s}")


@dataclass(frozen=True)
class AuxSolveReport:
    """Result of the sparse backward step."""

    v: Signal
    z: float
    z_iterations: int
    residual: float


def psi_value(x: float, params: ScalarProxParams, sigma: float) -> float:
    """Objective |x-y|^r / r + sigma*x + t |x|^s / s."""
    y, t, r, s = params.y, params.t, params.r, params.s
    return abs(x - y) ** r / r + sigma * x + t * abs(x) ** s / s


def _threshold_s1(x: float, y: float, t: float, r: float) -> float:
    # closed form via the shifted dead-zone map; exact zero on the zone,
    # boundary included
    thr = -signed_power(y, r - 1.0)
    if x < thr - t:
        shifted = x + t
    elif x > thr + t:
        shifted = x - t
    else:
        return 0.0
    return y + signed_power(shifted, 1.0 / (r - 1.0))


def _root_monotone(x: float, y: float, t: float, r: float, s: float) -> float:
    """Solve signed_power(v-y, r-1) + t*signed_power(v, s-1) = x for v.

    The left side is continuous, strictly increasing and surjective.
    Bisection narrows the bracket below width one, then Newton takes over
    with the closed-form derivative, falling back to bisection whenever a
    step leaves the bracket or lands on the kinks at v in {0, y}.
    """

    def g(v):
        return signed_power(v - y, r - 1.0) + t * signed_power(v, s - 1.0) - x

    def dg(v):
        d = (r - 1.0) * abs(v - y) ** (r - 2.0) if v != y else np.inf
        if s > 1.0:
            d += t * (s - 1.0) * abs(v) ** (s - 2.0) if v != 0.0 else np.inf
        return d

    lo, hi = y - 1.0, y + 1.0
    span = 1.0
    while g(lo) > 0.0:
        lo -= span
        span *= 2.0
    span = 1.0
    while g(hi) < 0.0:
        hi += span
        span *= 2.0

    v = 0.5 * (lo + hi)
    for _ in range(200):
        if hi - lo <= ROOT_ATOL:
            break
        use_newton = hi - lo < 1.0 and v not in (0.0, y)
        if use_newton:
            gv, dv = g(v), dg(v)
            if np.isfinite(dv) and dv > 0.0:
                v_new = v - gv / dv
                if lo < v_new < hi:
                    if gv > 0.0:
                        hi = v
                    elif gv < 0.0:
                        lo = v
                    else:
                        return v
                    v = v_new
                    continue
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        v = 0.5 * (lo + hi)
    else:  # pragma: no cover - the bracket always collapses
        raise SolverError("scalar root bracket failed to collapse", residual=hi - lo)
    return v


def threshold_scalar(x: float, params: ScalarProxParams) -> float:
    """Minimizer of psi_value(., params, sigma=-x): the thresholding-like map.

    For s = 1 a closed form with an exact dead zone; for s > 1 the unique
    root of the strictly monotone optimality equation, to ROOT_ATOL.
    Reduces to soft thresholding sign(x+y) * max(|x+y| - t, 0) at r = 2, s = 1.
    """
    y, t, r, s = params.y, params.t, params.r, params.s
    if t == 0.0:
        return y + signed_power(x, 1.0 / (r - 1.0))
    if s == 1.0:
        return _threshold_s1(x, y, t, r)
    if r == 2.0 and s == 2.0:
        return (x + y) / (1.0 + t)
    return _root_monotone(x, y, t, r, s)


def threshold_array(x: np.ndarray, y: np.ndarray, t: np.ndarray, r: float, s: float) -> np.ndarray:
    """Componentwise threshold_scalar, vectorized for the s = 1 closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
    if s == 1.0:
        thr = -signed_power(y, r - 1.0)
        shifted = np.where(x < thr - t, x + t, x - t)
        dead = np.abs(x - thr) <= t
        out = y + signed_power(shifted, 1.0 / (r - 1.0))
        return np.where(dead, 0.0, out)
    return np.array(
        [threshold_scalar(xi, ScalarProxParams(yi, ti, r, s)) for xi, yi, ti in zip(x, y, t)]
    )


def _coupled_v(u: Signal, wv: np.ndarray, tau: float, alpha: np.ndarray, exps: Exponents, z: float) -> np.ndarray:
    # scalar inputs divide out the cell measures (dual entries have them folded in)
    x = -z * tau * wv / u.weights
    t = z * tau * alpha / u.weights
    return threshold_array(x, u.values, t, exps.r, exps.s)


def solve_aux_sparse(
    u: Signal,
    w: DualVector,
    tau: float,
    alpha: np.ndarray,
    exps: Exponents,
    max_outer: int = 200,
) -> AuxSolveReport:
    """Backward step for the weighted power penalty sum_k alpha_k |v_k|^s / s.

    Minimizes ``norm(v - u, r)^p / p + tau * (<w, v> + sum_k alpha_k |v_k|^s / s)``.
    The componentwise solves are tied together only through
    ``z = norm(v - u, r)^(r - p)``, solved by a damped fixed point with a
    bisection fallback; z = 1 exactly when r = p and no outer loop runs.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), u.values.shape)
    if np.any(alpha < 0.0) or not np.all(np.isfinite(alpha)):
        raise DomainError("alpha entries must be finite and >= 0")
    p, r = exps.p, exps.r

    if r == p:
        v = _coupled_v(u, w.values, tau, alpha, exps, 1.0)
        return AuxSolveReport(u.with_values(v), 1.0, 0, 0.0)

    def step_norm(z: float) -> float:
        v = _coupled_v(u, w.values, tau, alpha, exps, z)
        return norm(u.with_values(v - u.values), r)

    # Degenerate coupling: if nothing moves the exponent r - p > 0 sends the
    # norm factor to zero and any z reproduces v = u.
    if step_norm(1.0) == 0.0:
        v = _coupled_v(u, w.values, tau, alpha, exps, 1.0)
        return AuxSolveReport(u.with_values(v), 1.0, 0, 0.0)

    # g is continuous with g(0+) > 0 and g -> -inf, so a sign-change bracket
    # [lo, hi] always exists; the damped fixed point usually lands first.
    def g(z: float) -> float:
        return step_norm(z) ** (r - p) - z

    evals = 0

    def residual_at(z: float):
        nonlocal evals
        evals += 1
        gz = g(z)
        return gz, abs(gz) / max(abs(z), 1e-300)

    omega = 0.5
    z = 1.0
    lo = hi = None  # g(lo) > 0, g(hi) < 0
    best_res = np.inf
    recent = []
    while evals < max_outer:
        gz, res = residual_at(z)
        best_res = min(best_res, res)
        if res <= Z_RTOL:
            v = _coupled_v(u, w.values, tau, alpha, exps, z)
            return AuxSolveReport(u.with_values(v), z, evals, res)
        if gz > 0.0:
            lo = z if lo is None else max(lo, z)
        else:
            hi = z if hi is None else min(hi, z)
        recent.append(res)
        stalled = len(recent) >= 8 and res > 0.5 * recent[-8]
        if stalled:
            break
        z = max(z + omega * gz, 0.25 * z)

    # Bisection fallback: expand the missing endpoint, then halve.
    probe = max(z, 1.0)
    while hi is None and evals < max_outer:
        probe *= 2.0
        gz, res = residual_at(probe)
        if res <= Z_RTOL:
            v = _coupled_v(u, w.values, tau, alpha, exps, probe)
            return AuxSolveReport(u.with_values(v), probe, evals, res)
        if gz < 0.0:
            hi = probe
        else:
            lo = probe
    probe = min(z, 1.0)
    while lo is None and evals < max_outer:
        probe *= 0.5
        gz, res = residual_at(probe)
        if res <= Z_RTOL:
            v = _coupled_v(u, w.values, tau, alpha, exps, probe)
            return AuxSolveReport(u.with_values(v), probe, evals, res)
        if gz > 0.0:
            lo = probe
        else:
            hi = probe
    while lo is not None and hi is not None and evals < max_outer:
        mid = 0.5 * (lo + hi)
        gm, res = residual_at(mid)
        best_res = min(best_res, res)
        if res <= Z_RTOL:
            v = _coupled_v(u, w.values, tau, alpha, exps, mid)
            return AuxSolveReport(u.with_values(v), mid, evals, res)
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    raise SolverError(
        f"z coupling did not reach {Z_RTOL:g} within {max_outer} evaluations",
        residual=best_res,
    )
