"""
Invariant suite behind the ``verify`` command.

Each check samples random inputs from a seeded generator and compares a
measured worst case against its tolerance. Checks that do not apply to the
given (G, p, q) are reported as SKIP.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from hyperlap.dynamics import TimeGrid, constraint_violation, deviation_from_mean, energy_history, solve_constrained, solve_free
from hyperlap.energy import EnergyParams, grad_phi_pq, hess_phi_pq, phi_p, phi_pq, subdiff_face
from hyperlap.hypergraph import Hypergraph, is_connected, nu_E
from hyperlap.spectral import (
    EigenOptions,
    decay_envelope,
    eigen_first_positive,
    poincare_constants,
    resolvent_pq,
)

logger = logging.getLogger(__name__)

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


@dataclass
class CheckResult:
    name: str
    status: str
    measured: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class VerifyContext:
    graph: Hypergraph
    params: EnergyParams
    rng: np.random.Generator
    samples: int

    @property
    def smooth(self) -> bool:
        return self.params.smooth and self.params.p > 1 and self.params.q > 1

    def random_state(self) -> np.ndarray:
        return self.rng.standard_normal(self.graph.N)


def _result(name: str, measured: float, tolerance: float, detail: str = "") -> CheckResult:
    status = PASS if measured <= tolerance else FAIL
    return CheckResult(name, status, float(measured), float(tolerance), detail)


def _skip(name: str, why: str) -> CheckResult:
    return CheckResult(name, SKIP, detail=why)


# -----------------------------
# Energy checks
# -----------------------------
def check_gradient(ctx: VerifyContext) -> CheckResult:
    name = "gradient vs central differences"
    if not ctx.smooth or ctx.params.p < 2 or ctx.params.q < 2:
        return _skip(name, "needs finite q and p, q >= 2")
    worst = 0.0
    for _ in range(ctx.samples):
        x = ctx.random_state()
        g = grad_phi_pq(ctx.graph, ctx.params, x)
        h = 1e-5 * (1.0 + np.linalg.norm(x))
        fd = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (phi_pq(ctx.graph, ctx.params, x + e) - phi_pq(ctx.graph, ctx.params, x - e)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / (1.0 + np.linalg.norm(g)))
    return _result(name, worst, 1e-6)


def check_gradient_identities(ctx: VerifyContext) -> CheckResult:
    name = "1.grad = 0 and x.grad = p phi"
    if not ctx.smooth:
        return _skip(name, "needs finite q and p, q > 1")
    worst = 0.0
    for _ in range(ctx.samples):
        x = ctx.random_state()
        g = grad_phi_pq(ctx.graph, ctx.params, x)
        phi = phi_pq(ctx.graph, ctx.params, x)
        worst = max(
            worst,
            abs(g.sum()) / (1e-12 * (1.0 + np.linalg.norm(g))),
            abs(x @ g - ctx.params.p * phi) / (1e-10 * (1.0 + abs(phi))),
        )
    return _result(name, worst, 1.0, "ratio to tolerance")


def check_sandwich(ctx: VerifyContext) -> CheckResult:
    name = "phi_p <= phi_pq <= nu_E^(p/q) phi_p"
    if not ctx.params.smooth:
        return _skip(name, "q = inf")
    factor = nu_E(ctx.graph) ** (ctx.params.p / ctx.params.q)
    worst = 0.0
    for _ in range(ctx.samples):
        x = ctx.random_state()
        lo = phi_p(ctx.graph, ctx.params, x)
        mid = phi_pq(ctx.graph, ctx.params, x)
        slack = 1e-12 * (1.0 + mid)
        worst = max(worst, lo - mid - slack, mid - factor * lo - slack)
    return _result(name, worst, 0.0, "largest violation")


def check_subgradient(ctx: VerifyContext) -> CheckResult:
    name = "canonical subgradient inequality"
    worst = -math.inf
    for _ in range(ctx.samples):
        x = ctx.random_state()
        eta = subdiff_face(ctx.graph, ctx.params, x).eta
        base = phi_p(ctx.graph, ctx.params, x)
        for _ in range(10):
            z = ctx.random_state()
            gap = eta @ (z - x) - (phi_p(ctx.graph, ctx.params, z) - base)
            worst = max(worst, gap - 1e-10 * (1.0 + abs(base)))
    return _result(name, max(worst, 0.0), 0.0, "largest violation")


def check_hessian(ctx: VerifyContext) -> CheckResult:
    name = "Hessian symmetric PSD, H 1 = 0"
    if not ctx.params.smooth or ctx.params.p <= 2 or ctx.params.q <= 2:
        return _skip(name, "needs p, q > 2")
    worst = 0.0
    ones = np.ones(ctx.graph.N)
    for _ in range(ctx.samples):
        H = hess_phi_pq(ctx.graph, ctx.params, ctx.random_state())
        scale = 1.0 + np.abs(H).max()
        worst = max(worst, np.abs(H @ ones).max() / scale, -np.linalg.eigvalsh(H).min() / scale)
    return _result(name, worst, 1e-9)


# -----------------------------
# Spectral checks
# -----------------------------
def check_poincare(ctx: VerifyContext) -> CheckResult:
    name = "Poincare sandwich"
    if not is_connected(ctx.graph) or ctx.graph.N < 2:
        return _skip(name, "hypergraph not connected")
    if not ctx.params.p > 1:
        return _skip(name, "needs p > 1")
    c = poincare_constants(ctx.graph, ctx.params.p)
    p = ctx.params.p
    worst = 0.0
    for _ in range(ctx.samples):
        x = ctx.random_state()
        dev = np.linalg.norm(x - x.mean()) ** p
        value = p * phi_pq(ctx.graph, ctx.params, x)
        worst = max(worst, c.gamma * dev - value, value - c.Gamma * dev)
    return _result(name, worst, 1e-12, "largest violation")


def check_resolvent(ctx: VerifyContext) -> CheckResult:
    name = "resolvent: mean, nonexpansive, Yosida identity"
    if not ctx.smooth:
        return _skip(name, "needs finite q and p, q > 1")
    p, q = ctx.params.p, ctx.params.q
    lam = 0.5
    worst = 0.0
    for _ in range(max(1, ctx.samples // 4)):
        x, y = ctx.random_state(), ctx.random_state()
        rx = resolvent_pq(ctx.graph, p, q, lam, x)
        ry = resolvent_pq(ctx.graph, p, q, lam, y)
        a = (x - rx) / lam
        worst = max(
            worst,
            abs(rx.mean() - x.mean()) / 1e-12,
            (np.linalg.norm(rx - ry) - np.linalg.norm(x - y)) / 1e-10,
            np.linalg.norm(a - grad_phi_pq(ctx.graph, ctx.params, rx)) / (1e-9 * (1.0 + np.linalg.norm(a))),
        )
    return _result(name, worst, 1.0, "ratio to tolerance")


def check_eigen(ctx: VerifyContext) -> CheckResult:
    name = "eigenvalue stationarity and bounds"
    if not ctx.smooth or not is_connected(ctx.graph) or ctx.graph.N < 2:
        return _skip(name, "needs finite q, p, q > 1 and a connected hypergraph")
    seed = int(ctx.rng.integers(0, 2**31 - 1))
    res = eigen_first_positive(ctx.graph, ctx.params.p, ctx.params.q, EigenOptions(restarts=4, seed=seed))
    c = poincare_constants(ctx.graph, ctx.params.p)
    bound_gap = max(c.gamma - res.value, res.value - c.Gamma, 0.0)
    norm_gap = abs(np.linalg.norm(res.vector) - 1.0) + abs(res.vector.sum())
    return _result(name, max(res.residual, bound_gap, norm_gap), 1e-6, f"lambda_1q={res.value:.12g}")


# -----------------------------
# Dynamics checks
# -----------------------------
def check_free_flow(ctx: VerifyContext) -> CheckResult:
    name = "free flow: mean, dissipation, decay envelopes"
    if not ctx.smooth or not is_connected(ctx.graph) or ctx.graph.N < 2:
        return _skip(name, "needs finite q, p, q > 1 and a connected hypergraph")
    p = ctx.params.p
    x0 = ctx.random_state()
    kappa_scale = 1.0 + sum(ctx.graph.weights) * max(ctx.graph.edge_sizes) ** 2
    grid = TimeGrid(0.5, int(max(200, 50 * kappa_scale * (1 + np.abs(x0).max()) ** max(p - 2, 0))))
    traj = solve_free(ctx.graph, ctx.params, x0, grid)
    c = poincare_constants(ctx.graph, p)
    X = deviation_from_mean(traj)
    lower, upper = decay_envelope(c, p, X[0], grid.nodes)
    energies = energy_history(traj, ctx.graph, ctx.params)
    worst = max(
        abs(traj.final.mean() - x0.mean()) / 1e-9,
        np.max(np.diff(energies)) / 1e-9,
        np.max(lower - X) / 1e-6,
        np.max(X - upper) / 1e-6,
    )
    return _result(name, worst, 1.0, f"K={grid.K}, ratio to tolerance")


def check_constrained(ctx: VerifyContext) -> CheckResult:
    name = "constrained solve keeps Hx = a"
    if ctx.graph.m == 0 or ctx.graph.n == 0:
        return _skip(name, "needs free and controlled vertices")
    grid = TimeGrid(0.2, 10)
    a = np.zeros((grid.K + 1, ctx.graph.N))
    a[:, ctx.graph.n :] = np.sin(np.outer(grid.nodes, np.arange(1, ctx.graph.m + 1)))
    x0 = ctx.random_state()
    x0[ctx.graph.n :] = a[0, ctx.graph.n :]
    traj = solve_constrained(ctx.graph, ctx.params.p, a, None, x0, grid)
    return _result(name, constraint_violation(traj, a), 0.0)


CHECKS: List[Callable[[VerifyContext], CheckResult]] = [
    check_gradient,
    check_gradient_identities,
    check_sandwich,
    check_subgradient,
    check_hessian,
    check_poincare,
    check_resolvent,
    check_eigen,
    check_free_flow,
    check_constrained,
]


def run_suite(graph: Hypergraph, params: EnergyParams, seed: int = 0, samples: int = 20, progress: bool = False) -> List[CheckResult]:
    """Run every check with its own generator derived from ``seed`` (order-independent)."""
    results = []
    for i, check in enumerate(tqdm(CHECKS, desc="Verify", unit="check", disable=not progress)):
        ctx = VerifyContext(graph, params, np.random.default_rng([seed, i]), samples)
        result = check(ctx)
        logger.info(f"{result.status}  {result.name}  {result.measured if result.measured is not None else ''}")
        results.append(result)
    return results
