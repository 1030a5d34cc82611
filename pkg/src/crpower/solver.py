"""Ensemble-level solvers for the dual variables and the Dinkelbach cost factor.

Expectations in the ATP/AIP constraints and in the objectives are replaced by
sample averages over a fixed channel ensemble.  The projected subgradient
method updates the multipliers (step size 0.1 by default); the energy
efficiency problem wraps that in an outer Dinkelbach iteration on the cost
factor.  A blocked exhaustive grid search over per-realization powers acts as
an independent reference for small ensembles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    LN2,
    ChannelRealization,
    DualState,
    PolicyKind,
    SystemParams,
    power_array,
    rate_array,
)


@dataclass(frozen=True)
class SolverOptions:
    step_size: float = 0.1
    max_dual_iters: int = 20000
    dual_tol: float = 1e-3
    dinkelbach_tol: float = 1e-6
    max_dinkelbach_iters: int = 50
    # Per-multiplier step scaling: halve on residual sign flip, grow gently
    # otherwise.  Plain fixed-step subgradient when disabled.
    adaptive_step: bool = True

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.dual_tol <= 0 or self.dinkelbach_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_dual_iters < 1 or self.max_dinkelbach_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class SolveReport:
    duals: DualState
    dual_iterations: int
    dinkelbach_iterations: int
    avg_power: float
    avg_interference: float
    ergodic_rate: float
    avg_cost: float
    ee: float
    converged: bool
    eta_trace: list = field(default_factory=list)


@dataclass
class PolicyMetrics:
    ergodic_rate: float
    avg_power: float
    avg_interference: float
    avg_cost: float
    ee: float


@dataclass(frozen=True)
class GridSpec:
    points_per_axis: int = 40
    refine_rounds: int = 3

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if self.refine_rounds < 1:
            raise ValueError("refine_rounds must be >= 1")


def ensemble_arrays(ensemble):
    """Stack an ensemble into (g_ss, g_sp, h_ps) float64 arrays."""
    if len(ensemble) == 0:
        raise ValueError("ensemble must be non-empty")
    g = np.array([[c.g_ss, c.g_sp, c.h_ps] for c in ensemble], dtype=np.float64)
    return g[:, 0], g[:, 1], g[:, 2]


def estimate_constraints(ensemble, duals: DualState, kind: PolicyKind,
                         params: SystemParams):
    """Sample-average transmit power and interference under the closed-form
    policy at the given duals."""
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    eta = duals.eta if kind is PolicyKind.EE else 0.0
    p = power_array(g_ss, g_sp, h_ps, duals.tau, duals.mu, eta, params)
    return float(np.mean(p)), float(np.mean(g_sp * p))


def _policy_metrics_arrays(p, g_ss, g_sp, h_ps, params):
    rate = float(np.mean(rate_array(p, g_ss, h_ps, params)))
    cost = float(np.mean(params.zeta * p + params.p_c))
    return PolicyMetrics(
        ergodic_rate=rate,
        avg_power=float(np.mean(p)),
        avg_interference=float(np.mean(g_sp * p)),
        avg_cost=cost,
        ee=rate / cost if cost > 0 else 0.0,
    )


def _subgradient(g_ss, g_sp, h_ps, params, opts, eta, tau0, mu0):
    """Projected subgradient ascent on (tau, mu) for a fixed cost factor."""
    tau, mu = tau0, mu0
    scale_t = scale_m = 1.0
    prev_rp = prev_ri = None
    converged = False
    iters = 0
    for k in range(1, opts.max_dual_iters + 1):
        iters = k
        p = power_array(g_ss, g_sp, h_ps, tau, mu, eta, params)
        res_p = float(np.mean(p)) - params.p_th
        res_i = float(np.mean(g_sp * p)) - params.p_in
        ok_p = abs(res_p) <= opts.dual_tol * params.p_th or \
            (tau < 1e-12 and res_p <= opts.dual_tol * params.p_th)
        ok_i = abs(res_i) <= opts.dual_tol * params.p_in or \
            (mu < 1e-12 and res_i <= opts.dual_tol * params.p_in)
        if ok_p and ok_i:
            converged = True
            break
        if opts.adaptive_step and prev_rp is not None:
            scale_t = scale_t * 0.5 if res_p * prev_rp < 0 else min(scale_t * 1.2, 1e6)
            scale_m = scale_m * 0.5 if res_i * prev_ri < 0 else min(scale_m * 1.2, 1e6)
        prev_rp, prev_ri = res_p, res_i
        tau = max(0.0, tau + opts.step_size * scale_t * res_p)
        mu = max(0.0, mu + opts.step_size * scale_m * res_i)
    return tau, mu, iters, converged


def solve_se_duals(ensemble, params: SystemParams,
                   opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Converge (tau, mu) for the spectral-efficiency problem."""
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    if not np.any(g_ss > 0):
        raise ValueError("degenerate ensemble: every g_ss is zero")
    tau, mu, iters, converged = _subgradient(
        g_ss, g_sp, h_ps, params, opts, eta=0.0, tau0=1.0, mu0=1.0)
    p = power_array(g_ss, g_sp, h_ps, tau, mu, 0.0, params)
    m = _policy_metrics_arrays(p, g_ss, g_sp, h_ps, params)
    return SolveReport(
        duals=DualState(tau=tau, mu=mu, eta=0.0),
        dual_iterations=iters,
        dinkelbach_iterations=0,
        avg_power=m.avg_power,
        avg_interference=m.avg_interference,
        ergodic_rate=m.ergodic_rate,
        avg_cost=m.avg_cost,
        ee=m.ee,
        converged=converged,
    )


def solve_ee(ensemble, params: SystemParams,
             opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Dinkelbach iteration on the cost factor with warm-started inner duals."""
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    if not np.any(g_ss > 0):
        raise ValueError("degenerate ensemble: every g_ss is zero")
    if params.p_c <= 0 and params.zeta <= 0:
        raise ValueError("consumed power must be positive (p_c or zeta > 0)")

    eta = 0.0
    tau, mu = 1.0, 1.0
    eta_trace = []
    total_dual_iters = 0
    inner_converged = False
    outer_converged = False
    outer = 0
    m = None
    for outer in range(1, opts.max_dinkelbach_iters + 1):
        tau, mu, iters, inner_converged = _subgradient(
            g_ss, g_sp, h_ps, params, opts, eta=eta, tau0=tau, mu0=mu)
        total_dual_iters += iters
        p = power_array(g_ss, g_sp, h_ps, tau, mu, eta, params)
        m = _policy_metrics_arrays(p, g_ss, g_sp, h_ps, params)
        eta_trace.append(m.ergodic_rate / m.avg_cost)
        if abs(m.ergodic_rate - eta * m.avg_cost) < opts.dinkelbach_tol:
            outer_converged = True
            break
        eta = m.ergodic_rate / m.avg_cost

    achieved_eta = m.ergodic_rate / m.avg_cost
    return SolveReport(
        duals=DualState(tau=tau, mu=mu, eta=achieved_eta),
        dual_iterations=total_dual_iters,
        dinkelbach_iterations=outer,
        avg_power=m.avg_power,
        avg_interference=m.avg_interference,
        ergodic_rate=m.ergodic_rate,
        avg_cost=m.avg_cost,
        ee=achieved_eta,
        converged=inner_converged and outer_converged,
        eta_trace=eta_trace,
    )


def ergodic_metrics(ensemble, policy, params: SystemParams) -> PolicyMetrics:
    """Evaluate an arbitrary per-realization policy over the ensemble."""
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    p = np.array([policy(c) for c in ensemble], dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("policy returned a non-finite power")
    return _policy_metrics_arrays(p, g_ss, g_sp, h_ps, params)


def brute_force_small(ensemble, params: SystemParams, kind: PolicyKind,
                      grid: GridSpec = GridSpec()):
    """Exhaustive product-grid search over per-realization powers.

    Feasibility is the sample-average ATP/AIP pair; each refinement round
    shrinks every axis window around the incumbent.  Intended for ensembles
    of at most ~6 realizations.
    """
    n = len(ensemble)
    if n == 0:
        raise ValueError("ensemble must be non-empty")
    if n > 6:
        raise ValueError("brute_force_small supports at most 6 realizations")
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)

    # A single realization may absorb the whole sample-average budget.
    with np.errstate(divide="ignore"):
        cap_i = np.where(g_sp > 0, n * params.p_in / g_sp, np.inf)
    hi = np.minimum(n * params.p_th, cap_i)
    lo = np.zeros(n)

    pts = grid.points_per_axis
    best_p = np.zeros(n)
    best_obj = -np.inf
    for _ in range(grid.refine_rounds):
        axes = [np.linspace(lo[i], hi[i], pts) for i in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=-1)  # (pts**n, n)
        avg_p = flat.mean(axis=1)
        avg_i = flat @ g_sp / n
        feasible = (avg_p <= params.p_th + 1e-12) & (avg_i <= params.p_in + 1e-12)
        if not np.any(feasible):
            raise ValueError("no feasible grid point; grid must include 0")
        rates = np.log2(1.0 + flat * (g_ss / (h_ps * params.p_p + params.noise_var)))
        mean_rate = rates.mean(axis=1)
        if kind is PolicyKind.SE:
            obj = mean_rate
        else:
            obj = mean_rate / (params.zeta * flat.mean(axis=1) + params.p_c)
        obj = np.where(feasible, obj, -np.inf)
        idx = int(np.argmax(obj))
        if obj[idx] > best_obj:
            best_obj = float(obj[idx])
            best_p = flat[idx].copy()
        # Shrink each axis window around the incumbent.  +/- 3 grid steps
        # keeps the true optimum inside the window even when the coarse
        # incumbent sits a couple of cells away along a flat direction.
        step = (hi - lo) / (pts - 1)
        lo = np.maximum(0.0, best_p - 3.0 * step)
        hi = best_p + 3.0 * step
    return best_p, best_obj
