"""
Optimal control of the penalized dynamics.

Cost (trapezoid quadrature on the forward grid):

    J(a)      = 1/2 int ||x - x_target||^2 + 1/2 int ||a||^2
    J_ql(a)   = J(a) + lambda/2 ||x(T) - z_target||^2 + lambda/2 ||a(0)||^2

The adjoint below is the exact discrete adjoint of the semi-implicit forward
scheme, so ``gateaux_dJ`` is the derivative of the discrete J_ql. Away from
the end points it is the time-reversed mirror of the forward step; the
trapezoid end weights only halve the source at t_0 and t_K.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from hyperlap.dynamics import (
    ControlPath,
    TimeGrid,
    Trajectory,
    apply_H,
    embed_rows,
    solve_constrained,
    solve_penalized,
)
from hyperlap.energy import EnergyParams, hess_phi_pq
from hyperlap.errors import DegenerateExponent, GridMismatch, InvalidSweep, NoDescent
from hyperlap.hypergraph import Hypergraph
from hyperlap.prox import ProxOptions
from hyperlap.utils import l2_inner, l2_norm, sup_norm, trapezoid_weights

logger = logging.getLogger(__name__)

# Certificate a = H gamma is only asserted while the budget is inactive.
ACTIVE_BUDGET_RATIO = 0.99
# Iterates with B >= (1 - BOUNDARY_RTOL) M are treated as lying on the budget boundary.
BOUNDARY_RTOL = 1e-6


@dataclass(frozen=True)
class ControlProblem:
    graph: Hypergraph
    params: EnergyParams
    lam: float
    grid: TimeGrid
    h: np.ndarray
    x0_free: np.ndarray
    x_target: np.ndarray
    z_target: np.ndarray
    M: float

    def __post_init__(self):
        N, K = self.graph.N, self.grid.K
        h = embed_rows(self.h, self.graph, self.grid, "forcing", controlled_only=False)
        x_target = embed_rows(self.x_target, self.graph, self.grid, "x_target", controlled_only=False)
        x0_free = np.asarray(self.x0_free, dtype=float).reshape(-1)
        z_target = np.asarray(self.z_target, dtype=float).reshape(-1)
        if x0_free.shape != (self.graph.n,):
            raise GridMismatch(f"x0 free part has {x0_free.size} entries, expected {self.graph.n}")
        if z_target.shape != (N,):
            raise GridMismatch(f"z_target has {z_target.size} entries, expected {N}")
        if not self.lam > 0:
            raise GridMismatch(f"lambda must be positive, got {self.lam}")
        if not self.M > 0:
            raise GridMismatch(f"budget M must be positive, got {self.M}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "x_target", x_target)
        object.__setattr__(self, "x0_free", x0_free)
        object.__setattr__(self, "z_target", z_target)
        logger.debug(f"ControlProblem: N={N}, K={K}, p={self.params.p}, q={self.params.q}, lambda={self.lam:g}")

    def initial_state(self, a: np.ndarray) -> np.ndarray:
        """x0 = (x0_free, a(0) on the controlled vertices), so x0 lies in K_a(0)."""
        return np.concatenate([self.x0_free, np.asarray(a)[0, self.graph.n :]])

    def with_params(self, q: Optional[float] = None, lam: Optional[float] = None) -> "ControlProblem":
        params = self.params if q is None else EnergyParams(self.params.p, q)
        return dataclasses.replace(self, params=params, lam=self.lam if lam is None else lam)

    def controls(self, a) -> np.ndarray:
        if isinstance(a, ControlPath):
            a = a.values
        return embed_rows(a, self.graph, self.grid, "control")

    def forward(self, a) -> Trajectory:
        A = self.controls(a)
        return solve_penalized(self.graph, self.params, self.lam, A, self.h, self.initial_state(A), self.grid)


@dataclass(frozen=True)
class AdjointPath:
    """
    gamma(t_k) on the forward grid; ``values[-1]`` is the terminal condition
    -(x(T) - z_target). ``terminal_step`` is the half step that seeds the
    backward recursion and ``control_image`` the adjoint as it pairs with
    controls (equal to ``values`` at interior nodes).
    """

    grid: TimeGrid
    values: np.ndarray
    terminal_step: np.ndarray
    control_image: np.ndarray


@dataclass
class OptResult:
    control: np.ndarray
    trajectory: Trajectory
    adjoint: AdjointPath
    cost_history: List[float]
    residual: float
    budget: float
    budget_usage: float
    gradient_norm: float
    iterations: int
    converged: bool
    certificate_checked: bool
    free_adjoint_sup: float
    lambda_adjoint_sup: float

    @property
    def cost(self) -> float:
        return self.cost_history[-1]


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 200
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-6
    max_backtracks: int = 40


@dataclass
class SweepStage:
    q: float
    lam: float
    result: OptResult
    cost_original: float
    distance_to_previous: Optional[float] = None


@dataclass
class SweepReport:
    stages: List[SweepStage] = field(default_factory=list)

    @property
    def distances(self) -> List[float]:
        return [s.distance_to_previous for s in self.stages[1:]]

    @property
    def residuals(self) -> List[float]:
        return [s.result.residual for s in self.stages]

    @property
    def original_costs(self) -> List[float]:
        return [s.cost_original for s in self.stages]


# -----------------------------
# Costs
# -----------------------------
def _check_grid(problem: ControlProblem, traj: Trajectory) -> None:
    if traj.states.shape != (problem.grid.K + 1, problem.graph.N):
        raise GridMismatch(f"trajectory {traj.states.shape} does not match the problem grid")


def cost_J(problem: ControlProblem, a, traj: Trajectory) -> float:
    _check_grid(problem, traj)
    A = problem.controls(a)
    dt = problem.grid.dt
    dev = traj.states - problem.x_target
    return 0.5 * l2_inner(dev, dev, dt) + 0.5 * l2_inner(A, A, dt)


def cost_Jql(problem: ControlProblem, a, traj: Trajectory) -> float:
    A = problem.controls(a)
    end = traj.final - problem.z_target
    extra = 0.5 * problem.lam * (float(end @ end) + float(A[0] @ A[0]))
    return cost_J(problem, A, traj) + extra


# -----------------------------
# Linearized and adjoint systems
# -----------------------------
def _require_c3(params: EnergyParams) -> None:
    if not params.smooth or params.p <= 3 or params.q <= 3:
        raise DegenerateExponent(
            f"linearized and adjoint systems need p, q > 3 (got p={params.p}, q={params.q})"
        )


def _hessians(problem: ControlProblem, traj: Trajectory) -> List[np.ndarray]:
    return [hess_phi_pq(problem.graph, problem.params, x) for x in traj.states[:-1]]


def _apply_Dinv(v: np.ndarray, n: int, ratio: float) -> np.ndarray:
    out = v.copy()
    out[n:] /= 1.0 + ratio
    return out


def solve_linearized(problem: ControlProblem, a, x_traj: Trajectory, b) -> np.ndarray:
    """
    Xi_0 = b_0,  Xi_{k+1} = D^{-1} ((I - dt D^2 phi(x_k)) Xi_k + (dt/lambda) b_{k+1}):
    the directional derivative of the forward scheme along b.
    """
    _require_c3(problem.params)
    _check_grid(problem, x_traj)
    B = problem.controls(b)
    dt, n = problem.grid.dt, problem.graph.n
    ratio = dt / problem.lam

    Xi = np.empty_like(B)
    Xi[0] = B[0]
    for k, Hk in enumerate(_hessians(problem, x_traj)):
        Xi[k + 1] = _apply_Dinv(Xi[k] - dt * (Hk @ Xi[k]) + ratio * B[k + 1], n, ratio)
    return Xi


def solve_adjoint(problem: ControlProblem, a, x_traj: Trajectory) -> AdjointPath:
    """
    Backward recursion from gamma_K = -(x_K - z_target):

        gamma_hat = D^{-1} (gamma_K - dt/(2 lambda) (x_K - x_target_K))
        gamma_k   = D^{-1} ((I - dt D^2 phi(x_k)) gamma_{k+1} - c_k (x_k - x_target_k))

    with gamma_hat in place of gamma_K for k = K-1, c_k = dt/lambda and
    c_0 = dt/(2 lambda).
    """
    _require_c3(problem.params)
    _check_grid(problem, x_traj)
    grid, lam = problem.grid, problem.lam
    dt, n, K = grid.dt, problem.graph.n, grid.K
    ratio = dt / lam
    dev = x_traj.states - problem.x_target

    gamma = np.empty_like(x_traj.states)
    gamma[K] = -(x_traj.final - problem.z_target)
    terminal_step = _apply_Dinv(gamma[K] - 0.5 * ratio * dev[K], n, ratio)

    hessians = _hessians(problem, x_traj)
    following = terminal_step
    for k in range(K - 1, -1, -1):
        c = 0.5 * ratio if k == 0 else ratio
        Hk = hessians[k]
        gamma[k] = _apply_Dinv(following - dt * (Hk @ following) - c * dev[k], n, ratio)
        following = gamma[k]

    image = gamma.copy()
    image[K] = 2.0 * terminal_step
    image[0] = gamma[0] * (dt + lam) / (0.5 * dt + lam)
    return AdjointPath(grid, gamma, terminal_step, image)


def _effective_adjoint(gamma: AdjointPath) -> np.ndarray:
    eff = gamma.values.copy()
    eff[-1] = gamma.terminal_step
    return eff


def gateaux_dJ(problem: ControlProblem, a, b, x_traj: Trajectory, gamma: AdjointPath) -> float:
    """
    dJ_ql(a; b) = sum_k w_k a_k.b_k + lambda a_0.b_0 - dt sum_k gamma_k.b_k - lambda gamma_0.b_0,
    the trapezoid form of int (a - gamma).b + lambda (a(0) - gamma(0)).b(0).
    Only controlled components enter (b vanishes on the free vertices).
    """
    _check_grid(problem, x_traj)
    if gamma.values.shape != x_traj.states.shape:
        raise GridMismatch("adjoint and trajectory grids differ")
    A = problem.controls(a)
    B = problem.controls(b)
    dt, lam, n = problem.grid.dt, problem.lam, problem.graph.n
    eff = _effective_adjoint(gamma)

    value = l2_inner(A[:, n:], B[:, n:], dt)
    value += lam * float(A[0, n:] @ B[0, n:])
    value -= dt * float(np.sum(eff[:, n:] * B[:, n:]))
    value -= lam * float(gamma.values[0, n:] @ B[0, n:])
    return value


def _representer(problem: ControlProblem, A: np.ndarray, gamma: AdjointPath) -> np.ndarray:
    """g with l2_inner(g, b) = gateaux_dJ(a, b) for every controlled-only b."""
    dt, lam, n = problem.grid.dt, problem.lam, problem.graph.n
    w = trapezoid_weights(problem.grid.K, dt)
    eff = _effective_adjoint(gamma)
    g = A - (dt / w)[:, None] * eff
    g[0] = A[0] - 2.0 * gamma.values[0] + (lam / w[0]) * (A[0] - gamma.values[0])
    return apply_H(g, n)


def _evaluate(problem: ControlProblem, A: np.ndarray):
    traj = problem.forward(A)
    gamma = solve_adjoint(problem, A, traj)
    return traj, gamma, cost_Jql(problem, A, traj), _representer(problem, A, gamma)


def control_gradient(problem: ControlProblem, a) -> np.ndarray:
    """L2 (trapezoid) representer of dJ_ql(a; .) on controlled-only directions."""
    A = problem.controls(a)
    _, _, _, g = _evaluate(problem, A)
    return g


def certificate_residual(problem: ControlProblem, a, gamma: AdjointPath) -> float:
    """||a - H gamma||_{L2} / (1 + ||a||_{L2}), with gamma seen through the control pairing."""
    A = problem.controls(a)
    dt = problem.grid.dt
    return l2_norm(A - apply_H(gamma.control_image, problem.graph.n), dt) / (1.0 + l2_norm(A, dt))


# -----------------------------
# Admissible set
# -----------------------------
def budget(a, grid: TimeGrid) -> float:
    """dt * sum_k ||a'_k||^2 over the K forward differences."""
    d = np.diff(np.asarray(a, dtype=float), axis=0) / grid.dt
    return float(grid.dt * np.sum(d * d))


def project_admissible(a, M: float, grid: TimeGrid) -> np.ndarray:
    """
    Scale the derivative samples by sqrt(M/B) keeping a(0), i.e.
    a(0) + sqrt(M/B) (a - a(0)), when the budget B exceeds M.
    """
    A = np.array(a.values if isinstance(a, ControlPath) else a, dtype=float, copy=True)
    B = budget(A, grid)
    if B <= M:
        return A
    return A[0] + np.sqrt(M / B) * (A - A[0])


def budget_gradient(a, grid: TimeGrid) -> np.ndarray:
    """L2 (trapezoid) representer of the derivative of ``budget`` at a."""
    A = np.asarray(a.values if isinstance(a, ControlPath) else a, dtype=float)
    dt = grid.dt
    diff = np.diff(A, axis=0) * (2.0 / dt)
    e = np.zeros_like(A)
    e[1:] += diff
    e[:-1] -= diff
    return e / trapezoid_weights(grid.K, dt)[:, None]


def feasible_direction(problem: ControlProblem, A: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    Search direction for a <- P_M(a - s d). Inside the budget set d = g; on its
    boundary, when -g points outward, the component of g along the budget
    gradient is removed so that -d is tangent to {B = M}.
    """
    grid = problem.grid
    if budget(A, grid) < (1.0 - BOUNDARY_RTOL) * problem.M:
        return g
    r = budget_gradient(A, grid)
    slope = l2_inner(g, r, grid.dt)
    if slope >= 0.0:
        return g
    return g - (slope / l2_inner(r, r, grid.dt)) * r


# -----------------------------
# Optimizer
# -----------------------------
def optimize(problem: ControlProblem, a_init, opts: Optional[OptimizerOptions] = None) -> OptResult:
    """
    Projected gradient with backtracking Armijo:

        a <- P_M(a - s d),  s = step0 / (1 + ||d||), shrunk by ``backtrack`` until
        J_new <= J - armijo * <g, a - a_new>

    d is ``feasible_direction(g)``: the gradient itself, or its tangential part
    when the iterate sits on the budget boundary and -g points outward.
    Stops when ||d|| <= tol (1 + ||a||), when the projected step no longer
    moves a, or after ``max_iters``. Raises NoDescent when the line search
    exhausts.
    """
    opts = opts or OptimizerOptions()
    _require_c3(problem.params)
    grid, n, dt = problem.grid, problem.graph.n, problem.grid.dt

    A = project_admissible(problem.controls(a_init), problem.M, grid)
    traj, gamma, J, g = _evaluate(problem, A)
    history = [J]
    converged = False
    iterations = 0

    for it in range(opts.max_iters):
        d = apply_H(feasible_direction(problem, A, g), n)
        d_norm = l2_norm(d, dt)
        a_norm = l2_norm(A, dt)
        if d_norm <= opts.tol * (1.0 + a_norm):
            converged = True
            break

        step = opts.step0 / (1.0 + d_norm)
        for _ in range(opts.max_backtracks):
            A_new = apply_H(project_admissible(A - step * d, problem.M, grid), n)
            moved = l2_norm(A_new - A, dt)
            if moved <= 1e-14 * (1.0 + a_norm):
                break
            trial = _evaluate(problem, A_new)
            decrease = l2_inner(g, A - A_new, dt)
            if trial[2] <= J - opts.armijo * max(decrease, 0.0):
                break
            step *= opts.backtrack
        else:
            raise NoDescent(f"line search exhausted at iteration {it} (J={J:.6e}, |d|={d_norm:.3e})")

        iterations = it + 1
        if moved <= 1e-14 * (1.0 + a_norm):
            logger.info(f"Projected step stalled at iteration {it}; stopping on the admissible boundary")
            converged = True
            break

        A = A_new
        traj, gamma, J, g = trial
        history.append(J)
        logger.debug(f"iter {iterations}: J={J:.10e}, |d|={d_norm:.3e}, step={step:.3e}")

    B = budget(A, grid)
    usage = B / problem.M
    residual = certificate_residual(problem, A, gamma)
    free_sup = sup_norm(gamma.values[:, :n]) if n else 0.0
    lam_sup = problem.lam * sup_norm(gamma.values)
    certificate_checked = usage <= ACTIVE_BUDGET_RATIO

    logger.info(
        f"optimize: J={J:.6e} after {iterations} iterations, residual={residual:.3e}, "
        f"budget usage={usage:.3f}, sup|(id-H)gamma|={free_sup:.3e}, lambda sup|gamma|={lam_sup:.3e}"
    )
    if not certificate_checked:
        logger.info("Budget constraint active: a = H gamma is reported but not asserted")

    return OptResult(
        control=A,
        trajectory=traj,
        adjoint=gamma,
        cost_history=history,
        residual=residual,
        budget=B,
        budget_usage=usage,
        gradient_norm=l2_norm(g, dt),
        iterations=iterations,
        converged=converged,
        certificate_checked=certificate_checked,
        free_adjoint_sup=free_sup,
        lambda_adjoint_sup=lam_sup,
    )


def sweep_to_original(
    problem: ControlProblem,
    stages: Sequence[Tuple[float, float]],
    a_init,
    opts: Optional[OptimizerOptions] = None,
    prox_opts: Optional[ProxOptions] = None,
    progress: bool = False,
) -> SweepReport:
    """
    Optimize along (q_i, lambda_i) with q increasing and lambda decreasing,
    warm-starting each stage from the previous optimum. Each optimum is also
    scored with the original cost J through the constrained dynamics.
    """
    if not stages:
        raise InvalidSweep("sweep needs at least one (q, lambda) stage")
    qs = [float(q) for q, _ in stages]
    lams = [float(l) for _, l in stages]
    if any(b <= a for a, b in zip(qs, qs[1:])):
        raise InvalidSweep(f"q values must increase: {qs}")
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise InvalidSweep(f"lambda values must decrease: {lams}")

    report = SweepReport()
    A = problem.controls(a_init)
    previous = None
    for q, lam in tqdm(list(zip(qs, lams)), desc="Sweep", unit="stage", disable=not progress):
        stage_problem = problem.with_params(q=q, lam=lam)
        result = optimize(stage_problem, A, opts)
        A = result.control

        x0 = problem.initial_state(A)
        original = solve_constrained(problem.graph, problem.params.p, A, problem.h, x0, problem.grid, prox_opts)
        J_orig = cost_J(problem, A, original)
        distance = None if previous is None else sup_norm(A - previous)
        report.stages.append(SweepStage(q, lam, result, J_orig, distance))
        logger.info(
            f"stage q={q:g}, lambda={lam:g}: J_ql={result.cost:.6e}, J={J_orig:.6e}, "
            f"residual={result.residual:.3e}" + ("" if distance is None else f", distance={distance:.3e}")
        )
        previous = A
    return report
