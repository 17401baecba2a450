"""
Time integrators.

- ``solve_penalized``: semi-implicit Euler for x' + D phi_pq(x) + (Hx - a)/lambda = h
  (penalty implicit, Laplacian explicit; the implicit part is diagonal).
- ``solve_constrained``: proximal implicit Euler for x' + d phi_p(x) + d I_{K_a(t)}(x) ∋ h.
- ``solve_free``: gradient flow x' + D phi_pq(x) = 0.

Forcing and controls are grid samples; a step from t_k to t_{k+1} uses the
values at t_{k+1}.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from hyperlap.energy import EnergyParams, grad_phi_pq, phi_pq
from hyperlap.errors import ControlShape, GridMismatch, InfeasibleInit, ProxNoConverge, StepUnstable
from hyperlap.hypergraph import Hypergraph
from hyperlap.prox import ProxOptions, newton_solve, prox_nonsmooth

logger = logging.getLogger(__name__)

BLOWUP_NORM = 1e12
EXTINCTION_RADIUS = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise GridMismatch(f"horizon T must be positive, got {self.T}")
        if int(self.K) != self.K or self.K < 1:
            raise GridMismatch(f"step count K must be an integer >= 1, got {self.K}")

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.K + 1) * self.dt
        t[-1] = self.T
        return t


@dataclass(frozen=True)
class ControlPath:
    """Control samples a(t_k) in R^N, first n components identically zero."""

    values: np.ndarray
    n: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ControlShape(f"control samples must be a (K+1, N) array, got shape {values.shape}")
        if self.n and np.any(values[:, : self.n] != 0.0):
            raise ControlShape("controls must vanish on the free vertices")
        object.__setattr__(self, "values", values)

    @property
    def K(self) -> int:
        return self.values.shape[0] - 1

    def derivatives(self, grid: TimeGrid) -> np.ndarray:
        """Forward differences (a_{k+1} - a_k)/dt, K rows."""
        return np.diff(self.values, axis=0) / grid.dt

    def budget(self, grid: TimeGrid) -> float:
        """dt * sum_k ||a'_k||^2, the exact derivative energy of the piecewise-linear interpolant."""
        d = self.derivatives(grid)
        return float(grid.dt * np.sum(d * d))


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    n: int
    sections: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes


# -----------------------------
# Constraint helpers
# -----------------------------
def apply_H(z, n: int) -> np.ndarray:
    """Zero the first n components (last axis), keep the controlled ones."""
    out = np.array(z, dtype=float, copy=True)
    out[..., :n] = 0.0
    return out


def project_K(z, a_t, n: int) -> np.ndarray:
    """Projection onto K_a(t) = {z : Hz = a(t)}: free part of z, controlled part of a(t)."""
    out = np.array(z, dtype=float, copy=True)
    out[..., n:] = np.asarray(a_t, dtype=float)[..., n:]
    return out


def embed_rows(rows, graph: Hypergraph, grid: TimeGrid, what: str = "control", controlled_only: bool = True) -> np.ndarray:
    """
    Normalize per-node samples to a (K+1, N) array.

    Rows may list the controlled components only (length m) or the full state
    (length N). ``None`` means identically zero. With ``controlled_only`` the
    free components must be zero.
    """
    shape = (grid.K + 1, graph.N)
    if rows is None:
        return np.zeros(shape)
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] != grid.K + 1:
        raise GridMismatch(f"{what} needs {grid.K + 1} rows (one per grid node), got shape {data.shape}")
    if data.shape[1] == graph.N:
        if controlled_only and graph.n and np.any(data[:, : graph.n] != 0.0):
            raise ControlShape(f"{what} rows must vanish on the free vertices 1..{graph.n}")
        return data.copy()
    if controlled_only and data.shape[1] == graph.m:
        out = np.zeros(shape)
        out[:, graph.n :] = data
        return out
    raise ControlShape(f"{what} rows have length {data.shape[1]}; expected {graph.m} or {graph.N}")


def _control_values(a: Union[ControlPath, np.ndarray, Sequence], graph: Hypergraph, grid: TimeGrid) -> np.ndarray:
    if isinstance(a, ControlPath):
        a = a.values
    return embed_rows(a, graph, grid, "control")


def _check_state(x0, graph: Hypergraph) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    if x.shape != (graph.N,):
        raise ControlShape(f"initial state has shape {x.shape}, expected ({graph.N},)")
    return x.copy()


def _guard(x: np.ndarray, k: int, dt: float) -> None:
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOWUP_NORM:
        raise StepUnstable(f"state norm exceeded {BLOWUP_NORM:.0e} at step {k}; try a smaller time step (dt={dt:.3g})")


# -----------------------------
# Integrators
# -----------------------------
def solve_penalized(
    graph: Hypergraph,
    params: EnergyParams,
    lam: float,
    a,
    h,
    x0,
    grid: TimeGrid,
    record_sections: bool = False,
) -> Trajectory:
    """
    x_{k+1} = D^{-1} (x_k - dt D phi_pq(x_k) + dt h_{k+1} + (dt/lambda) a_{k+1}),
    D = I + (dt/lambda) H.

    With ``record_sections`` the gradient D phi_pq(x_k) used by each step is kept
    (row K repeats the last one so the array matches the grid).
    """
    if not lam > 0:
        raise GridMismatch(f"penalty parameter lambda must be positive, got {lam}")
    A = _control_values(a, graph, grid)
    F = embed_rows(h, graph, grid, "forcing", controlled_only=False)
    x = _check_state(x0, graph)
    dt, n = grid.dt, graph.n
    ratio = dt / lam

    states = np.empty((grid.K + 1, graph.N))
    states[0] = x
    sections = np.empty((grid.K + 1, graph.N)) if record_sections else None
    for k in range(grid.K):
        g = grad_phi_pq(graph, params, x)
        if sections is not None:
            sections[k] = g
        y = x - dt * g + dt * F[k + 1]
        y[n:] = (y[n:] + ratio * A[k + 1, n:]) / (1.0 + ratio)
        _guard(y, k + 1, dt)
        x = y
        states[k + 1] = x
    if sections is not None:
        sections[-1] = sections[-2]

    logger.debug(f"solve_penalized: p={params.p}, q={params.q}, lambda={lam:g}, K={grid.K}")
    return Trajectory(grid, states, n, sections)


def solve_constrained(
    graph: Hypergraph,
    p: float,
    a,
    h,
    x0,
    grid: TimeGrid,
    prox_opts: Optional[ProxOptions] = None,
) -> Trajectory:
    """
    Each step solves
        x_{k+1} = argmin_{z in K_a(t_{k+1})} ||z - x_k - dt h_{k+1}||^2/(2 dt) + phi_p(z)
    over the free components; Hx(t_k) = a(t_k) holds exactly.
    """
    A = _control_values(a, graph, grid)
    F = embed_rows(h, graph, grid, "forcing", controlled_only=False)
    x = _check_state(x0, graph)
    dt, n = grid.dt, graph.n

    gap = np.max(np.abs(x[n:] - A[0, n:]), initial=0.0)
    if gap > 1e-12 * (1.0 + np.max(np.abs(A[0]), initial=0.0)):
        raise InfeasibleInit(f"x0 is not in K_a(0): controlled components differ from a(0) by {gap:.3e}")
    x[n:] = A[0, n:]

    free = np.arange(n)
    states = np.empty((grid.K + 1, graph.N))
    states[0] = x
    for k in range(grid.K):
        center = x + dt * F[k + 1]
        z0 = x.copy()
        z0[n:] = A[k + 1, n:]
        x = prox_nonsmooth(graph, p, center, dt, z0, free, prox_opts, ProxNoConverge)
        x[n:] = A[k + 1, n:]
        _guard(x, k + 1, dt)
        states[k + 1] = x

    logger.debug(f"solve_constrained: p={p}, K={grid.K}")
    return Trajectory(grid, states, n)


def solve_free(
    graph: Hypergraph,
    params: EnergyParams,
    x0,
    grid: TimeGrid,
    prox_opts: Optional[ProxOptions] = None,
) -> Trajectory:
    """
    Explicit Euler for x' + D phi_pq(x) = 0. For p < 2 an implicit (resolvent)
    step replaces the explicit one when ||x - mean|| < EXTINCTION_RADIUS or when
    the explicit step would raise the energy; a state that collapses onto its
    mean is snapped there.
    """
    prox_opts = prox_opts or ProxOptions()
    x = _check_state(x0, graph)
    dt = grid.dt
    mean = x.mean()
    implicit_steps = 0

    states = np.empty((grid.K + 1, graph.N))
    states[0] = x
    for k in range(grid.K):
        spread = np.linalg.norm(x - mean)
        if spread == 0.0:
            states[k + 1] = x
            continue

        y = x - dt * grad_phi_pq(graph, params, x)
        if params.p < 2 and (spread < EXTINCTION_RADIUS or phi_pq(graph, params, y) > phi_pq(graph, params, x)):
            y, ok = newton_solve(graph, params, x, dt, x, None, prox_opts.newton_tol, prox_opts.max_newton)
            if not ok:
                raise ProxNoConverge(f"implicit step did not converge at step {k + 1}")
            implicit_steps += 1
            if np.linalg.norm(y - y.mean()) <= 1e-12 * (1.0 + abs(mean)):
                y = np.full_like(y, y.mean())
        _guard(y, k + 1, dt)
        x = y
        states[k + 1] = x

    if implicit_steps:
        logger.debug(f"solve_free: {implicit_steps} implicit steps near extinction")
    return Trajectory(grid, states, graph.n)


# -----------------------------
# Diagnostics
# -----------------------------
def constraint_violation(traj: Trajectory, a) -> float:
    """max_k ||H x(t_k) - a(t_k)||."""
    A = a.values if isinstance(a, ControlPath) else np.asarray(a, dtype=float)
    if A.shape != traj.states.shape:
        raise GridMismatch(f"control samples {A.shape} do not match trajectory {traj.states.shape}")
    n = traj.n
    diff = traj.states[:, n:] - A[:, n:]
    free_part = A[:, :n]
    per_node = np.sqrt(np.sum(diff * diff, axis=1) + np.sum(free_part * free_part, axis=1))
    return float(per_node.max())


def energy_history(traj: Trajectory, graph: Hypergraph, params: EnergyParams) -> np.ndarray:
    """phi_pq(x(t_k)) at every grid node."""
    return np.array([phi_pq(graph, params, x) for x in traj.states])


def deviation_from_mean(traj: Trajectory) -> np.ndarray:
    """X(t_k) = ||x(t_k) - mean(x(0))||."""
    mean0 = traj.states[0].mean()
    return np.linalg.norm(traj.states - mean0, axis=1)
