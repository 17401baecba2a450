"""
Poincare constants, decay envelopes, resolvents / Yosida approximations and
the first positive eigenvalue of the hypergraph p-Laplacian.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from hyperlap.energy import INF, EnergyParams, grad_phi_pq, kappa_bounds, phi_p, phi_pq
from hyperlap.errors import Disconnected, NewtonNoConverge, NoConverge, NotMeanFree, ZeroVector
from hyperlap.hypergraph import Hypergraph, diameter, is_connected, nu_E
from hyperlap.prox import ProxOptions, newton_solve, prox_nonsmooth, q_ladder

logger = logging.getLogger(__name__)

EIGEN_REFERENCE_Q = 512.0


@dataclass(frozen=True)
class PoincareConstants:
    gamma: float
    Gamma: float
    nu_E: float
    diam: int


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: np.ndarray
    restarts: int
    residual: float
    converged: bool
    q: float


@dataclass(frozen=True)
class EigenOptions:
    restarts: int = 16
    iters: int = 5000
    tol: float = 1e-8
    seed: int = 0


# -----------------------------
# Poincare inequality and decay
# -----------------------------
def _require_connected(graph: Hypergraph, what: str) -> None:
    if graph.N < 2 or graph.num_edges == 0:
        raise Disconnected(f"{what} needs at least two vertices and one edge", module="spectral")
    if not is_connected(graph):
        raise Disconnected(f"{what} needs a connected hypergraph", module="spectral")


def poincare_constants(graph: Hypergraph, p: float) -> PoincareConstants:
    """
    gamma ||x - mean||^p <= p phi_pq(x) <= Gamma ||x - mean||^p for every q, with
    gamma = min w / (N^p diam^(p-1)) and Gamma = (sum_e w(e) #e^p) N^(p/2).
    """
    _require_connected(graph, "poincare_constants")
    N = graph.N
    diam = diameter(graph)
    w = graph.weight_array
    gamma = float(w.min()) / (N ** p * diam ** (p - 1))
    Gamma = float(np.sum(w * graph.edge_sizes.astype(float) ** p)) * N ** (p / 2.0)
    return PoincareConstants(gamma, Gamma, nu_E(graph), diam)


def upper_constant_q(graph: Hypergraph, p: float, q: float) -> float:
    """
    q-dependent upper constant: p phi_pq(x) <= Gamma_q ||x - mean||^p with
    Gamma_q = sum_e w(e) (2^(q-1) (#e - 1))^(p/q), times N^(p(2-q)/2q) for q < 2.
    Never larger than the q-free constant.
    """
    if math.isinf(q):
        per_edge = 2.0 ** p * np.ones(graph.num_edges)
    else:
        sizes = graph.edge_sizes.astype(float)
        per_edge = (2.0 ** (q - 1) * (sizes - 1)) ** (p / q)
    value = float(np.sum(graph.weight_array * per_edge))
    if q < 2:
        value *= graph.N ** (p * (2 - q) / (2 * q))
    return value


def decay_envelope(constants: PoincareConstants, p: float, X0: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lower / upper envelopes of X(t) = ||x(t) - mean|| for x' + D phi_pq(x) = 0:
    Gamma drives the lower envelope and gamma the upper one.
    """
    t = np.asarray(t, dtype=float)

    def envelope(c: float) -> np.ndarray:
        if X0 <= 0:
            return np.zeros_like(t)
        if p == 2:
            return X0 * np.exp(-c * t)
        if p > 2:
            return (X0 ** (-(p - 2)) + (p - 2) * c * t) ** (-1.0 / (p - 2))
        return np.maximum(X0 ** (2 - p) - (2 - p) * c * t, 0.0) ** (1.0 / (2 - p))

    return envelope(constants.Gamma), envelope(constants.gamma)


# -----------------------------
# Resolvents and Yosida approximations
# -----------------------------
def resolvent_pq(graph: Hypergraph, p: float, q: float, lam: float, x, tol: float = 1e-10) -> np.ndarray:
    """(id + lambda D phi_pq)^(-1) x by damped Newton; large q is reached along a warm-started q-ladder."""
    x = np.asarray(x, dtype=float)
    if not lam > 0:
        raise NewtonNoConverge(f"lambda must be positive, got {lam}")
    ladder = [s for s in q_ladder(4.0, q) if s < q] if q > 16 else []
    z = x.copy()
    for stage in ladder:
        z, _ = newton_solve(graph, EnergyParams(p, stage), x, lam, z, None, tol)
    z, ok = newton_solve(graph, EnergyParams(p, q), x, lam, z, None, tol, max_iter=200)
    if not ok:
        raise NewtonNoConverge(f"resolvent Newton did not reach tolerance (p={p}, q={q}, lambda={lam})")
    return z


def resolvent_p(graph: Hypergraph, p: float, lam: float, x, opts: Optional[ProxOptions] = None) -> np.ndarray:
    """(id + lambda d phi_p)^(-1) x: prox of the nonsmooth energy."""
    x = np.asarray(x, dtype=float)
    opts = opts or ProxOptions(stage_tol=1e-9)
    z = prox_nonsmooth(graph, p, x, lam, x, None, opts, NoConverge)
    # the exact prox keeps the mean
    return z + (x.mean() - z.mean())


def resolvent(graph: Hypergraph, p: float, q: float, lam: float, x, opts: Optional[ProxOptions] = None) -> np.ndarray:
    if math.isinf(q):
        return resolvent_p(graph, p, lam, x, opts)
    return resolvent_pq(graph, p, q, lam, x)


def yosida(graph: Hypergraph, p: float, q: float, lam: float, x, opts: Optional[ProxOptions] = None) -> np.ndarray:
    """(x - R^lambda x) / lambda; q = INF selects the nonsmooth energy."""
    x = np.asarray(x, dtype=float)
    return (x - resolvent(graph, p, q, lam, x, opts)) / lam


def yosida_schedule_q(nu: float, p: float, lam: float, delta: float) -> float:
    """Smallest q with p log(nu_E) / log(lambda^(1+delta) + 1) <= q (at least 2)."""
    if nu <= 1:
        return 2.0
    return max(2.0, math.ceil(p * math.log(nu) / math.log1p(lam ** (1.0 + delta))))


def resolvent_gap_bound(graph: Hypergraph, p: float, q: float, lam: float, x) -> float:
    """Upper bound for ||R_p x - R_pq x||^2: lambda kappa (nu_E^(p/q) - 1) ||x||^p."""
    kappa, _ = kappa_bounds(graph, EnergyParams(p))
    return lam * kappa * (nu_E(graph) ** (p / q) - 1.0) * float(np.linalg.norm(x)) ** p


def yosida_gap_bound(graph: Hypergraph, p: float, lam: float, delta: float, x) -> float:
    """Upper bound for ||A_p x - A_pq x||^2 under the coupled schedule: lambda^delta kappa ||x||^p."""
    kappa, _ = kappa_bounds(graph, EnergyParams(p))
    return lam ** delta * kappa * float(np.linalg.norm(x)) ** p


def moreau_envelope(graph: Hypergraph, p: float, lam: float, x, opts: Optional[ProxOptions] = None) -> float:
    """min_xi ||xi - x||^2/(2 lambda) + phi_p(xi), evaluated at the resolvent."""
    x = np.asarray(x, dtype=float)
    r = resolvent_p(graph, p, lam, x, opts)
    diff = r - x
    return float(diff @ diff) / (2.0 * lam) + phi_p(graph, EnergyParams(p), r)


def minimal_section_trace(
    graph: Hypergraph, p: float, x, lams=(1e-1, 1e-2), delta: float = 0.5
) -> List[Dict[str, object]]:
    """Yosida values A^lambda_{p,q(lambda)} x along decreasing lambda (diagnostic, no limit asserted)."""
    nu = nu_E(graph)
    trace = []
    for lam in lams:
        q = yosida_schedule_q(nu, p, lam, delta)
        value = yosida(graph, p, q, lam, x)
        trace.append({"lambda": lam, "q": q, "yosida": value, "norm": float(np.linalg.norm(value))})
        logger.debug(f"minimal section trace: lambda={lam:g}, q={q:g}, |A x|={trace[-1]['norm']:.6e}")
    return trace


# -----------------------------
# Eigenvalue
# -----------------------------
def rayleigh(graph: Hypergraph, p: float, q: float, x) -> float:
    """p phi_pq(x) / ||x||^p for nonzero mean-free x (q = INF uses phi_p)."""
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ZeroVector("rayleigh quotient of the zero vector")
    if abs(x.sum()) > 1e-10 * norm:
        raise NotMeanFree(f"vector is not mean-free (sum={x.sum():.3e})")
    return p * phi_pq(graph, EnergyParams(p, q), x) / norm ** p


def _sphere(v: np.ndarray) -> np.ndarray:
    v = v - v.mean()
    return v / np.linalg.norm(v)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(v) > 1e-12)
    if nonzero.size and v[nonzero[0]] < 0:
        return -v
    return v


def _descend(graph: Hypergraph, params: EnergyParams, zeta: np.ndarray, opts: EigenOptions) -> Tuple[float, np.ndarray, float, bool]:
    """Projected gradient with Armijo backtracking on the unit sphere of mean-free vectors."""
    p = params.p
    zeta = _sphere(zeta)
    value = p * phi_pq(graph, params, zeta)
    step = 1.0
    residual = math.inf
    for _ in range(opts.iters):
        g = grad_phi_pq(graph, params, zeta)
        r = value * zeta - g
        residual = float(np.linalg.norm(r))
        if residual <= opts.tol:
            return value, zeta, residual, True

        direction = -p * r
        slope = float(direction @ direction)
        for _ in range(60):
            trial = _sphere(zeta - step * direction)
            trial_value = p * phi_pq(graph, params, trial)
            if trial_value <= value - 1e-4 * step * slope:
                zeta, value = trial, trial_value
                step *= 2.0
                break
            step *= 0.5
        else:
            break

    g = grad_phi_pq(graph, params, zeta)
    residual = float(np.linalg.norm(value * zeta - g))
    return value, zeta, residual, residual <= opts.tol


def _best(candidates):
    return min(candidates, key=lambda c: (c[0], tuple(c[1])))


def eigen_first_positive(graph: Hypergraph, p: float, q: float, opts: Optional[EigenOptions] = None) -> EigenResult:
    """
    lambda_{1,q} = min over the unit sphere of mean-free vectors of p phi_pq,
    best of ``restarts`` seeded starts; the vector is reported with its first
    nonzero entry positive.
    """
    opts = opts or EigenOptions()
    _require_connected(graph, "eigen_first_positive")
    params = EnergyParams(p, q)
    rng = np.random.default_rng(opts.seed)

    candidates = []
    for _ in range(max(1, opts.restarts)):
        value, zeta, residual, ok = _descend(graph, params, rng.standard_normal(graph.N), opts)
        candidates.append((value, _fix_sign(zeta), residual, ok))
    value, zeta, residual, ok = _best(candidates)
    if not ok:
        logger.warning(f"eigen_first_positive: best restart stopped at residual {residual:.3e} (tol {opts.tol:.1e})")
    return EigenResult(value, zeta, len(candidates), residual, ok, q)


def eigen_reference(graph: Hypergraph, p: float, opts: Optional[EigenOptions] = None, q_max: float = EIGEN_REFERENCE_Q) -> EigenResult:
    """lambda_{1,q_max} along a warm-started ladder q = 4, 8, ..., q_max (stand-in for lambda_1)."""
    opts = opts or EigenOptions()
    ladder = q_ladder(4.0, q_max)
    result = eigen_first_positive(graph, p, ladder[0], opts)
    zeta = result.vector
    for q in ladder[1:]:
        value, zeta, residual, ok = _descend(graph, EnergyParams(p, q), zeta, opts)
        zeta = _fix_sign(zeta)
        result = EigenResult(value, zeta, result.restarts, residual, ok, q)
    if not result.converged:
        logger.info(f"eigen_reference: residual {result.residual:.3e} at q={q_max:g}")
    return result


def eigen_limit_value(graph: Hypergraph, p: float, zeta) -> float:
    """p phi_p(zeta): the nonsmooth Rayleigh value at a clique-energy eigenvector."""
    return rayleigh(graph, p, INF, zeta)


# -----------------------------
# Report
# -----------------------------
@dataclass
class SpectralReport:
    p: float
    q: float
    lam: float
    constants: PoincareConstants
    upper_constant_q: float
    eigen: EigenResult
    eigen_reference: EigenResult
    limit_value: float
    resolvent_gaps: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "p": self.p,
            "q": "inf" if math.isinf(self.q) else self.q,
            "lambda": self.lam,
            "gamma": self.constants.gamma,
            "Gamma": self.constants.Gamma,
            "Gamma_q": self.upper_constant_q,
            "nu_E": self.constants.nu_E,
            "diam": self.constants.diam,
            "lambda1q": self.eigen.value,
            "zeta1q": self.eigen.vector.tolist(),
            "restarts": self.eigen.restarts,
            "residual": self.eigen.residual,
            "converged": self.eigen.converged,
            "lambda1_reference": self.eigen_reference.value,
            "lambda1_reference_q": self.eigen_reference.q,
            "limit_value": self.limit_value,
            "resolvent_gaps": self.resolvent_gaps,
        }


def spectral_report(
    graph: Hypergraph,
    p: float,
    q: float,
    lam: float,
    samples: int = 8,
    eigen_opts: Optional[EigenOptions] = None,
) -> SpectralReport:
    """Constants, eigenvalues and sampled resolvent gaps for one (p, q, lambda)."""
    eigen_opts = eigen_opts or EigenOptions()
    constants = poincare_constants(graph, p)
    q_eig = EIGEN_REFERENCE_Q if math.isinf(q) else q
    eigen = eigen_first_positive(graph, p, q_eig, eigen_opts)
    reference = eigen_reference(graph, p, eigen_opts)

    rng = np.random.default_rng(eigen_opts.seed)
    gaps = []
    if p > 1 and not math.isinf(q):
        for _ in range(samples):
            x = rng.standard_normal(graph.N)
            measured = float(np.sum((resolvent_p(graph, p, lam, x) - resolvent_pq(graph, p, q, lam, x)) ** 2))
            gaps.append({"measured": measured, "bound": resolvent_gap_bound(graph, p, q, lam, x)})

    return SpectralReport(
        p=p,
        q=q,
        lam=lam,
        constants=constants,
        upper_constant_q=upper_constant_q(graph, p, q),
        eigen=eigen,
        eigen_reference=reference,
        limit_value=eigen_limit_value(graph, p, eigen.vector),
        resolvent_gaps=gaps,
    )
