"""Forward-backward splitting driver with descent and rate diagnostics.

One iteration evaluates the data-fit gradient through the duality map of
the data space, then solves the backward (resolvent) problem for the
penalty: componentwise thresholding for weighted power penalties, the
predual projected-gradient solve for total variation.  Each step records
the descent measure

    D(u) = Phi(u) - Phi(u_next) + <w, u - u_next>

which vanishes exactly at minimizers and bounds the step norm through
||u - u_next||^p / tau <= D(u); the recorded history feeds the envelope
fit of the objective-gap decay  r_n <= C n^(1-p).
"""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, SolverError
from .operators import LinearOperator
from .spaces import DualVector, Exponents, Signal, duality_map, norm, pairing
from .threshold import solve_aux_sparse
from .tv import GridField, PredualConfig, tv_backward_step, tv_seminorm

__all__ = [
    "ProblemSpec",
    "StepPolicy",
    "StopRule",
    "SolveHistory",
    "StepDiagnostics",
    "penalty_value",
    "objective_value",
    "gradient_F",
    "initial_ball_and_constant",
    "default_policy",
    "propose_tau",
    "descent_measure_D",
    "fbs_step",
    "fbs_run",
    "distances_RT",
    "rate_fit",
]

WEIGHTED_POWER = "weighted_power"
TOTAL_VARIATION = "total_variation"

HISTORY_COLUMNS = ("n", "objective", "D", "tau", "step_norm", "seconds")


@dataclass(frozen=True)
class ProblemSpec:
    """Data-fit term ||Ku - f||^r / r plus a penalty.

    For penalty_kind "weighted_power" the penalty is
    sum_k alpha[k] |u_k|^s / s with alpha a positive vector (cell measures
    already folded into alpha for sampled-function problems).  For
    "total_variation" alpha is a scalar, the iterate is a flattened grid
    of shape grid_shape with cell width grid_spacing, and the penalty is
    alpha * TV(u).
    """

    K: LinearOperator
    f: Signal
    exps: Exponents
    alpha: np.ndarray
    penalty_kind: str = WEIGHTED_POWER
    grid_shape: tuple = None
    grid_spacing: float = 1.0
    predual: PredualConfig = None

    def __post_init__(self):
        if self.penalty_kind not in (WEIGHTED_POWER, TOTAL_VARIATION):
            raise DomainError(f"unknown penalty kind {self.penalty_kind!r}")
        if self.penalty_kind == WEIGHTED_POWER:
            alpha = np.broadcast_to(
                np.asarray(self.alpha, dtype=float), (self.K.domain_len,)
            ).copy()
            object.__setattr__(self, "alpha", alpha)
            if np.any(alpha <= 0.0) or not np.all(np.isfinite(alpha)):
                raise DomainError("alpha must be strictly positive and finite")
        else:
            alpha = float(np.asarray(self.alpha))
            object.__setattr__(self, "alpha", alpha)
            if not alpha >= 0.0:
                raise DomainError("alpha must be >= 0")
            if self.grid_shape is None:
                raise DomainError("total variation problems need grid_shape")
            object.__setattr__(self, "grid_shape", tuple(int(d) for d in self.grid_shape))
            if int(np.prod(self.grid_shape)) != self.K.domain_len:
                raise DomainError("grid_shape does not match the operator domain")
            if self.predual is None:
                object.__setattr__(self, "predual", PredualConfig())
        if len(self.f) != self.K.range_len:
            raise DomainError("data length does not match the operator range")

    def zero_start(self) -> Signal:
        return Signal(np.zeros(self.K.domain_len), self.exps.r, self.K.domain_weights)

    def as_grid(self, u: Signal) -> GridField:
        return GridField(u.values.reshape(self.grid_shape), self.grid_spacing, self.exps.r)


def penalty_value(prob: ProblemSpec, u: Signal) -> float:
    """Phi(u) for the configured penalty."""
    if prob.penalty_kind == WEIGHTED_POWER:
        s = prob.exps.s
        return float(np.sum(prob.alpha * np.abs(u.values) ** s) / s)
    return prob.alpha * tv_seminorm(prob.as_grid(u))


def _residual(prob: ProblemSpec, u: Signal) -> Signal:
    return Signal(
        prob.K.apply_values(u.values) - prob.f.values, prob.f.exponent, prob.f.weights
    )


def data_fit_value(prob: ProblemSpec, u: Signal) -> float:
    """F(u) = ||Ku - f||^r / r in the data-space norm."""
    return norm(_residual(prob, u)) ** prob.exps.r / prob.exps.r


def objective_value(prob: ProblemSpec, u: Signal) -> float:
    return data_fit_value(prob, u) + penalty_value(prob, u)


def gradient_F(u: Signal, prob: ProblemSpec) -> DualVector:
    """F'(u): the adjoint applied to the duality map of the residual."""
    res = _residual(prob, u)
    return prob.K.adjoint_apply(duality_map(res, prob.f.exponent, prob.exps.r))


def _ball_radius(prob: ProblemSpec, level: float) -> float:
    if prob.penalty_kind == WEIGHTED_POWER:
        alpha_min = float(np.min(prob.alpha))
        return (max(level, 0.0) / alpha_min) ** (1.0 / prob.exps.s)
    # TV: the Hoelder constant only needs a residual-norm bound, and every
    # sublevel iterate satisfies ||Ku - f|| <= (r * level)^(1/r).
    return (prob.exps.r * max(level, 0.0)) ** (1.0 / prob.exps.r)


def initial_ball_and_constant(prob: ProblemSpec, u0: Signal, operator_norm: float = None):
    """Norm bound for the starting sublevel set and the matching Hoelder constant.

    The constant follows the chain ||F'|| <= ||j_r|| * ||K||^p with the
    duality-map constant taken on a ball containing every residual the
    sublevel set can produce.  operator_norm overrides the stored bound
    when a sharper certified value is available.
    """
    from .spaces import holder_bound_jr  # local import keeps module load cheap

    k_norm = prob.K.norm_bound if operator_norm is None else operator_norm
    level = objective_value(prob, u0)
    radius = _ball_radius(prob, level)
    if prob.penalty_kind == WEIGHTED_POWER:
        arg = k_norm * radius + norm(prob.f)
    else:
        arg = radius
    constant = holder_bound_jr(prob.f.exponent, prob.exps.r, max(arg, 1e-12))
    constant *= k_norm**prob.exps.p
    return radius, constant


@dataclass(frozen=True)
class StepPolicy:
    """Step-size policy: cap p(1-delta)/holder_constant, optional backtracking."""

    holder_constant: float
    delta: float
    tau_floor: float
    backtracking: bool = True
    shrink_factor: float = 0.5

    def __post_init__(self):
        if not self.holder_constant > 0.0:
            raise DomainError("holder_constant must be positive")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")
        if not self.tau_floor > 0.0:
            raise DomainError("tau_floor must be positive")
        if not 0.0 < self.shrink_factor < 1.0:
            raise DomainError("shrink_factor must be in (0, 1)")


def default_policy(prob: ProblemSpec, u0: Signal = None, backtracking: bool = True,
                   operator_norm: float = None) -> StepPolicy:
    """Policy from the initial ball, with tau_floor at 1e-6 of the cap.

    Pass operator_norm (for example from
    :func:`banach_fbs.operators.interpolated_norm_bound`) to sharpen the
    step cap; backtracking keeps the descent inequality enforced either way.
    """
    u0 = u0 if u0 is not None else prob.zero_start()
    _, constant = initial_ball_and_constant(prob, u0, operator_norm)
    cap = prob.exps.p * (1.0 - prob.exps.delta) / constant
    return StepPolicy(
        holder_constant=constant,
        delta=prob.exps.delta,
        tau_floor=1e-6 * cap,
        backtracking=backtracking,
    )


def propose_tau(policy: StepPolicy, exps: Exponents) -> float:
    """Largest admissible step p(1-delta)/holder_constant."""
    cap = exps.p * (1.0 - policy.delta) / policy.holder_constant
    if policy.tau_floor > cap:
        raise DomainError(
            f"infeasible policy: tau_floor {policy.tau_floor:g} exceeds the cap {cap:g}"
        )
    return cap


def descent_measure_D(u: Signal, u_next: Signal, w: DualVector, prob: ProblemSpec) -> float:
    """D(u) = Phi(u) - Phi(u_next) + <w, u - u_next>; zero iff u is optimal."""
    return (
        penalty_value(prob, u)
        - penalty_value(prob, u_next)
        + pairing(w, u.with_values(u.values - u_next.values))
    )


@dataclass(frozen=True)
class StepDiagnostics:
    tau: float
    D: float
    objective: float
    step_norm: float
    backtracks: int
    extra: dict = field(default_factory=dict)


def _backward(u, w, tau, prob, tv_state):
    if prob.penalty_kind == WEIGHTED_POWER:
        report = solve_aux_sparse(u, w, tau, prob.alpha, prob.exps)
        return report.v, {"z": report.z, "z_iterations": report.z_iterations,
                          "z_residual": report.residual}
    grid_u = prob.as_grid(u)
    cell = grid_u.cell_volume
    w_grid = (w.values / cell).reshape(prob.grid_shape)
    cfg = prob.predual
    if tv_state is not None and tv_state.get("tol") is not None:
        cfg = dataclasses.replace(cfg, tol=tv_state["tol"])
    z0 = tv_state.get("z") if tv_state is not None else None
    v_grid, info = tv_backward_step(grid_u, w_grid, tau, prob.alpha, cfg, z0)
    if tv_state is not None and info.get("z") is not None:
        tv_state["z"] = info["z"]
    return u.with_values(v_grid.values.reshape(-1)), info


def fbs_step(
    u: Signal,
    prob: ProblemSpec,
    policy: StepPolicy,
    tau: float = None,
    objective_u: float = None,
    tv_state: dict = None,
):
    """One forward-backward step; returns (u_next, StepDiagnostics).

    With backtracking enabled the step is re-solved with a shrunken tau
    until the measured descent satisfies
    (F+Phi)(u_next) <= (F+Phi)(u) - (1 - tau*H/p) * D(u), which the
    Hoelder constant H guarantees for admissible steps.
    """
    obj_u = objective_value(prob, u) if objective_u is None else objective_u
    w = gradient_F(u, prob)
    tau_try = propose_tau(policy, prob.exps) if tau is None else tau
    p = prob.exps.p
    slack = 1e-12 * (1.0 + abs(obj_u))
    max_shrinks = 30
    for shrink_count in range(max_shrinks + 1):
        u_next, extra = _backward(u, w, tau_try, prob, tv_state)
        d_val = descent_measure_D(u, u_next, w, prob)
        obj_next = objective_value(prob, u_next)
        if not policy.backtracking:
            break
        required = (1.0 - tau_try * policy.holder_constant / p) * d_val
        if obj_u - obj_next >= required - slack:
            break
        tau_try = max(tau_try * policy.shrink_factor, policy.tau_floor)
    else:
        raise SolverError(
            "backtracking exhausted: the Hoelder constant is off by orders of magnitude",
            residual=obj_next - obj_u,
        )
    step_norm = norm(u.with_values(u_next.values - u.values), prob.exps.r)
    diag = StepDiagnostics(
        tau=tau_try,
        D=d_val,
        objective=obj_next,
        step_norm=step_norm,
        backtracks=shrink_count,
        extra=extra,
    )
    return u_next, diag


@dataclass(frozen=True)
class StopRule:
    max_iters: int
    D_tol: float = None  # None: 1e-12 * (1 + initial objective)
    objective_tol: float = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise DomainError("max_iters must be >= 0")


@dataclass
class SolveHistory:
    """Per-iteration record of one solve; row k describes the k-th step.

    Column n counts completed steps starting at 1, objective is the value
    at the new iterate, D the descent measure of the step that produced
    it.  Serializes to CSV with header ``n,objective,D,tau,step_norm,seconds``.
    """

    n: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    D: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    status: str = "max_iters"
    initial_objective: float = float("nan")

    def __len__(self):
        return len(self.n)

    def append(self, n, objective, d_val, tau, step_norm, seconds):
        self.n.append(int(n))
        self.objective.append(float(objective))
        self.D.append(float(d_val))
        self.tau.append(float(tau))
        self.step_norm.append(float(step_norm))
        self.seconds.append(float(seconds))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for row in zip(self.n, self.objective, self.D, self.tau, self.step_norm, self.seconds):
                writer.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])

    @staticmethod
    def from_csv(path) -> "SolveHistory":
        hist = SolveHistory()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for column in HISTORY_COLUMNS:
                if column not in header:
                    raise ConfigError(f"history CSV is missing the '{column}' column")
            for lineno, row in enumerate(reader, start=2):
                try:
                    hist.append(
                        int(row["n"]), float(row["objective"]), float(row["D"]),
                        float(row["tau"]), float(row["step_norm"]), float(row["seconds"]),
                    )
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"history CSV line {lineno}: {exc}") from exc
        return hist


def fbs_run(
    prob: ProblemSpec,
    policy: StepPolicy = None,
    stop: StopRule = StopRule(max_iters=1000),
    u0: Signal = None,
    on_step=None,
):
    """Run the iteration from u0 (default 0) until a stopping rule fires.

    Returns (u_final, SolveHistory).  Stopping order per iteration:
    exact fixed point, D <= D_tol, objective stall (when objective_tol is
    set; reported as converged_D), then the iteration budget.  Every 100
    iterations the Hoelder constant is re-estimated from the current
    objective level and the step cap loosened if the sublevel ball shrank.
    """
    u = u0 if u0 is not None else prob.zero_start()
    if policy is None:
        policy = default_policy(prob, u)
    obj = objective_value(prob, u)
    d_tol = 1e-12 * (1.0 + abs(obj)) if stop.D_tol is None else stop.D_tol
    history = SolveHistory(initial_objective=obj)
    tv_state = {} if prob.penalty_kind == TOTAL_VARIATION else None
    current = policy
    tau_next = None  # carry the accepted step forward, growing back to the cap
    for k in range(1, stop.max_iters + 1):
        if tv_state is not None:
            tv_state["tol"] = max(1e-10, 1e-3 * history.D[-1]) if len(history) else None
        tic = time.perf_counter()
        u_next, diag = fbs_step(u, prob, current, tau=tau_next, objective_u=obj,
                                tv_state=tv_state)
        tau_next = min(2.0 * diag.tau, propose_tau(current, prob.exps))
        history.append(k, diag.objective, diag.D, diag.tau, diag.step_norm,
                       time.perf_counter() - tic)
        if on_step is not None:
            on_step(k, u_next, diag)
        decrease = obj - diag.objective
        u, obj = u_next, diag.objective
        if diag.step_norm == 0.0:
            history.status = "fixed_point"
            break
        if diag.D <= d_tol:
            history.status = "converged_D"
            break
        if stop.objective_tol is not None and decrease <= stop.objective_tol:
            history.status = "converged_D"
            break
        if k % 100 == 0:
            _, constant = initial_ball_and_constant(prob, u)
            if constant < current.holder_constant:
                current = dataclasses.replace(current, holder_constant=constant)
    else:
        history.status = "max_iters"
    return u, history


def distances_RT(v: Signal, u_star: Signal, prob: ProblemSpec):
    """Bregman-like distance of the penalty and Taylor remainder of the fit.

    R(v) = Phi(v) - Phi(u*) + <F'(u*), v - u*> and
    T(v) = F(v) - F(u*) - <F'(u*), v - u*>; R + T equals the objective gap
    identically, and both are non-negative at a converged u*.
    """
    w_star = gradient_F(u_star, prob)
    diff = v.with_values(v.values - u_star.values)
    cross = pairing(w_star, diff)
    r_val = penalty_value(prob, v) - penalty_value(prob, u_star) + cross
    t_val = data_fit_value(prob, v) - data_fit_value(prob, u_star) - cross
    return r_val, t_val


def rate_fit(history: SolveHistory, reference_objective: float, burn_in: int, p: float):
    """Envelope constant and log-log slope of the objective gap decay.

    r_n = objective_n - reference_objective for rows with n > burn_in;
    returns (C, slope) with C = max r_n * n^(p-1) and slope the
    least-squares slope of log r_n against log n.  Raises if any gap is
    non-positive (the reference is then not optimal).
    """
    if len(history) <= burn_in + 10:
        raise DomainError("history too short for the requested burn-in")
    ns = np.asarray(history.n, dtype=float)
    gaps = np.asarray(history.objective, dtype=float) - reference_objective
    keep = ns > burn_in
    ns, gaps = ns[keep], gaps[keep]
    if np.any(gaps <= 0.0):
        raise DomainError("non-positive objective gap: reference objective is not optimal")
    slope = float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])
    envelope = float(np.max(gaps * ns ** (p - 1.0)))
    return envelope, slope
