"""
Proximal solvers shared by the constrained integrator and the resolvents.

Every routine minimizes

    Psi(z) = ||z_F - c_F||^2 / (2 s) + phi(z)

over the free coordinates F, the remaining coordinates of the starting point
being held fixed. ``newton_solve`` handles the smooth clique energy;
``prox_nonsmooth`` reaches the max-type energy through a q-ladder of Newton
solves followed by an exact epigraph solve (SciPy SLSQP).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Type

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from hyperlap.energy import EnergyParams, grad_phi_pq, newton_hessian, phi_p, phi_pq
from hyperlap.errors import HyperlapError
from hyperlap.hypergraph import Hypergraph

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30


@dataclass(frozen=True)
class ProxOptions:
    q_start: float = 4.0
    q_max: float = 512.0
    stage_tol: float = 1e-8
    newton_tol: float = 1e-10
    max_newton: int = 100
    polish: bool = True


def q_ladder(q_start: float, q_max: float) -> List[float]:
    """q_start, 2 q_start, ... up to and including q_max."""
    ladder = []
    q = float(q_start)
    while q <= q_max * (1 + 1e-12):
        ladder.append(q)
        q *= 2.0
    return ladder


def _free_index(graph: Hypergraph, free: Optional[Sequence[int]]) -> np.ndarray:
    if free is None:
        return np.arange(graph.N)
    return np.asarray(free, dtype=np.intp)


def prox_objective(graph: Hypergraph, params: EnergyParams, center, step: float, z, free) -> float:
    diff = (np.asarray(z) - np.asarray(center))[free]
    return float(diff @ diff) / (2.0 * step) + phi_pq(graph, params, z)


def _gradient_step(graph, params, center, step, z, r, free) -> np.ndarray:
    """Backtracking descent along -r when the Newton direction fails to reduce the residual."""
    base = prox_objective(graph, params, center, step, z, free)
    t = step
    for _ in range(60):
        trial = z.copy()
        trial[free] -= t * r / step
        if prox_objective(graph, params, center, step, trial, free) < base:
            return trial
        t *= 0.5
    return z


def newton_solve(
    graph: Hypergraph,
    params: EnergyParams,
    center,
    step: float,
    z0=None,
    free: Optional[Sequence[int]] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> Tuple[np.ndarray, bool]:
    """
    Damped Newton on z_F - c_F + s D phi_pq(z)_F = 0.

    Jacobian I + s D^2 phi_pq restricted to F (symmetric positive definite).
    The step is halved until the residual norm decreases; after MAX_HALVINGS
    halvings a gradient step on Psi is taken instead.

    Returns (z, converged) with converged meaning ||residual|| <= tol (1 + ||c_F||).
    """
    c = np.asarray(center, dtype=float)
    z = (c if z0 is None else np.asarray(z0, dtype=float)).copy()
    free = _free_index(graph, free)
    if free.size == 0:
        return z, True

    threshold = tol * (1.0 + np.linalg.norm(c[free]))

    def residual(v: np.ndarray) -> np.ndarray:
        return (v - c + step * grad_phi_pq(graph, params, v))[free]

    r = residual(z)
    rn = np.linalg.norm(r)
    for it in range(max_iter):
        if rn <= threshold:
            logger.debug(f"Newton converged in {it} iterations (q={params.q}, |r|={rn:.3e})")
            return z, True

        J = np.eye(free.size) + step * newton_hessian(graph, params, z)[np.ix_(free, free)]
        try:
            d = scipy.linalg.solve(J, -r, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            d = -r

        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = z.copy()
            trial[free] += t * d
            r_trial = residual(trial)
            if np.all(np.isfinite(r_trial)) and np.linalg.norm(r_trial) < rn:
                break
            t *= 0.5
        else:
            logger.warning(f"Newton damping exhausted at iteration {it}; gradient step")
            trial = _gradient_step(graph, params, c, step, z, r, free)
            r_trial = residual(trial)

        z, r = trial, r_trial
        rn = np.linalg.norm(r)

    return z, bool(rn <= threshold)


# -----------------------------
# Exact solve for the max-type energy
# -----------------------------
def _pair_constraints(graph: Hypergraph, z0: np.ndarray, free: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rows of A v + b >= 0 encoding u_e >= z_i - z_j for ordered pairs i != j of each edge."""
    n_free = free.size
    position = {int(v): k for k, v in enumerate(free)}
    rows: List[np.ndarray] = []
    offsets: List[float] = []
    for j, e in enumerate(graph.edges):
        for i in e:
            for k in e:
                if i == k:
                    continue
                row = np.zeros(n_free + graph.num_edges)
                row[n_free + j] = 1.0
                const = 0.0
                if i in position:
                    row[position[i]] -= 1.0
                else:
                    const -= z0[i]
                if k in position:
                    row[position[k]] += 1.0
                else:
                    const += z0[k]
                rows.append(row)
                offsets.append(const)
    if not rows:
        return np.zeros((0, n_free + graph.num_edges)), np.zeros(0)
    return np.vstack(rows), np.asarray(offsets)


def epigraph_polish(
    graph: Hypergraph,
    p: float,
    center,
    step: float,
    z0,
    free: Optional[Sequence[int]] = None,
    max_iter: int = 500,
) -> Tuple[np.ndarray, bool]:
    """
    Solve min ||z_F - c_F||^2/(2s) + (1/p) sum_e w(e) u_e^p  s.t. u_e >= z_i - z_j, u >= 0
    with SLSQP, starting from z0. Returns the better of z0 and the SLSQP point
    (measured on the true objective) and whether SLSQP reported convergence.
    """
    c = np.asarray(center, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    free = _free_index(graph, free)
    params = EnergyParams(p)
    if free.size == 0 or graph.num_edges == 0:
        z = z0.copy()
        z[free] = c[free]
        return z, True

    n_free = free.size
    w = graph.weight_array
    cf = c[free]
    A, b = _pair_constraints(graph, z0, free)

    def fun(v: np.ndarray):
        zf, u = v[:n_free], np.maximum(v[n_free:], 0.0)
        diff = zf - cf
        value = float(diff @ diff) / (2.0 * step) + float(np.sum(w * u ** p)) / p
        grad = np.concatenate([diff / step, w * u ** (p - 1)])
        return value, grad

    u0 = np.array([z0[idx].max() - z0[idx].min() for idx in graph.edge_index])
    v0 = np.concatenate([z0[free], u0])
    bounds = [(None, None)] * n_free + [(0.0, None)] * graph.num_edges
    constraints = [{"type": "ineq", "fun": lambda v: A @ v + b, "jac": lambda v: A}]

    res = minimize(
        fun,
        v0,
        jac=True,
        method="SLSQP",
        bounds=bounds,
        constraints=constraints,
        options={"ftol": 1e-15, "maxiter": max_iter},
    )
    violation = float(np.max(np.maximum(-(A @ res.x + b), 0.0), initial=0.0))
    converged = bool(res.success or (res.status == 8 and violation <= 1e-9))
    if not converged:
        logger.debug(f"SLSQP polish stopped: status={res.status} ({res.message}), violation={violation:.2e}")

    z = z0.copy()
    z[free] = res.x[:n_free]

    def true_objective(v: np.ndarray) -> float:
        diff = v[free] - cf
        return float(diff @ diff) / (2.0 * step) + phi_p(graph, params, v)

    if true_objective(z) > true_objective(z0):
        return z0.copy(), converged
    return z, converged


def prox_nonsmooth(
    graph: Hypergraph,
    p: float,
    center,
    step: float,
    z0,
    free: Optional[Sequence[int]] = None,
    opts: Optional[ProxOptions] = None,
    error_cls: Type[HyperlapError] = HyperlapError,
) -> np.ndarray:
    """
    argmin over z (fixed coordinates taken from z0) of ||z_F - c_F||^2/(2s) + phi_p(z).

    Two-uniform graphs are solved exactly by Newton on phi_{p,2} (identical to
    phi_p there). Otherwise a warm-started Newton ladder over q feeds the
    epigraph polish. Raises ``error_cls`` when neither the ladder nor the
    polish converges.
    """
    opts = opts or ProxOptions()
    free = _free_index(graph, free)
    z = np.asarray(z0, dtype=float).copy()
    if free.size == 0:
        return z

    if p > 1 and graph.is_two_uniform:
        z, ok = newton_solve(graph, EnergyParams(p, 2.0), center, step, z, free, opts.newton_tol, opts.max_newton)
        if not ok:
            raise error_cls(f"Newton prox did not converge (p={p}, two-uniform graph)")
        return z

    ladder_ok = False
    if p > 1:
        previous = None
        for q in q_ladder(opts.q_start, opts.q_max):
            z, _ = newton_solve(graph, EnergyParams(p, q), center, step, z, free, opts.newton_tol, opts.max_newton)
            if previous is not None and np.linalg.norm(z - previous) < opts.stage_tol * (1.0 + np.linalg.norm(z)):
                ladder_ok = True
                logger.debug(f"q-ladder settled at q={q}")
                break
            previous = z

    if opts.polish or p == 1:
        polished, ok = epigraph_polish(graph, p, center, step, z, free)
        if ok or ladder_ok:
            return polished

    if ladder_ok:
        return z
    raise error_cls(f"prox of the nonsmooth energy did not converge (p={p}, q_max={opts.q_max})")
