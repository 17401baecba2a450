"""
Hypergraph p-Dirichlet energy and its clique-expansion smoothing.

phi_p(x)  = (1/p) sum_e w(e) f_e(x)^p,       f_e(x)   = max_{i,j in e} |x_i - x_j|
phi_pq(x) = (1/p) sum_e w(e) f_{e,q}(x)^p,   f_{e,q}(x) = (sum_{i<j in e} |x_i - x_j|^q)^(1/q)

All per-edge work is done on ratios |x_i - x_j| / f, which stay in [0, 1], so
large q never overflows.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple, Union

import numpy as np

from hyperlap.errors import DegenerateExponent, DimensionMismatch, InvalidExponent
from hyperlap.hypergraph import Hypergraph, clique_weights

logger = logging.getLogger(__name__)

INF = math.inf

# Tie tolerance for argmax / argmin membership, relative to 1 + ||x||.
FACE_TOL = 1e-12


@dataclass(frozen=True)
class EnergyParams:
    """Exponents (p, q); q = INF selects the nonsmooth energy."""

    p: float
    q: float = INF

    def __post_init__(self):
        if not (self.p >= 1 and math.isfinite(self.p)):
            raise InvalidExponent(f"p must be a finite number >= 1, got {self.p}")
        if not self.q >= 1:
            raise InvalidExponent(f"q must be >= 1 or inf, got {self.q}")

    @property
    def smooth(self) -> bool:
        return math.isfinite(self.q)

    @classmethod
    def parse(cls, p: Union[float, str], q: Union[float, str, None] = None) -> "EnergyParams":
        """Accepts q as a number, None or one of "inf", "INF", "infinity"."""
        if q is None or (isinstance(q, str) and q.strip().lower() in ("inf", "infinity")):
            return cls(float(p), INF)
        return cls(float(p), float(q))


@dataclass(frozen=True)
class EdgeFace:
    """Face of one edge's subdifferential at x (0-based vertex indices)."""

    edge_id: int
    value: float
    argmax: Tuple[int, ...]
    argmin: Tuple[int, ...]


@dataclass(frozen=True)
class SubgradientFace:
    faces: Tuple[EdgeFace, ...]
    eta: np.ndarray


# -----------------------------
# Helpers
# -----------------------------
@lru_cache(maxsize=64)
def _upper_pairs(k: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(k, 1)


def _as_state(graph: Hypergraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (graph.N,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({graph.N},)")
    return x


def _edge_feq(xe: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(xe.max() - xe.min())
    iu, ju = _upper_pairs(len(xe))
    d = np.abs(xe[iu] - xe[ju])
    top = d.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((d / top) ** q) ** (1.0 / q))


def _require_smooth(params: EnergyParams, order: int) -> None:
    if not params.smooth:
        raise DegenerateExponent("derivatives of the clique energy need a finite q")
    if params.p <= order or params.q <= order:
        what = "gradient" if order == 1 else "Hessian"
        raise DegenerateExponent(f"{what} needs p, q > {order} (got p={params.p}, q={params.q})")


# -----------------------------
# Nonsmooth energy
# -----------------------------
def f_e(x, e) -> float:
    """max_{i,j in e} |x_i - x_j|."""
    xe = np.asarray(x, dtype=float)[np.asarray(e)]
    return float(xe.max() - xe.min())


def phi_p(graph: Hypergraph, params: EnergyParams, x) -> float:
    x = _as_state(graph, x)
    p = params.p
    total = 0.0
    for idx, w in zip(graph.edge_index, graph.weights):
        xe = x[idx]
        total += w * (xe.max() - xe.min()) ** p
    return total / p


def subdiff_face(graph: Hypergraph, params: EnergyParams, x) -> SubgradientFace:
    """
    Per-edge argmax/argmin sets and one canonical subgradient.

    The canonical element averages the extreme points 1_i - 1_j over
    argmax x argmin, scaled by w(e) f_e(x)^(p-1); edges with f_e(x) = 0 add 0.
    """
    x = _as_state(graph, x)
    tol = FACE_TOL * (1.0 + np.linalg.norm(x))
    eta = np.zeros(graph.N)
    faces: List[EdgeFace] = []

    for edge_id, (idx, w) in enumerate(zip(graph.edge_index, graph.weights)):
        xe = x[idx]
        hi, lo = xe.max(), xe.min()
        value = float(hi - lo)
        argmax = tuple(int(i) for i in idx[xe >= hi - tol])
        argmin = tuple(int(i) for i in idx[xe <= lo + tol])
        faces.append(EdgeFace(edge_id, value, argmax, argmin))

        if value <= tol:
            continue
        scale = w * value ** (params.p - 1)
        eta[list(argmax)] += scale / len(argmax)
        eta[list(argmin)] -= scale / len(argmin)

    return SubgradientFace(tuple(faces), eta)


def edge_extreme_points(graph: Hypergraph, params: EnergyParams, face: EdgeFace) -> List[np.ndarray]:
    """Extreme points w(e) f_e^(p-1) (1_i - 1_j), i in argmax, j in argmin, of one edge's face."""
    if face.value == 0.0:
        return [np.zeros(graph.N)]
    scale = graph.weights[face.edge_id] * face.value ** (params.p - 1)
    points = []
    for i in face.argmax:
        for j in face.argmin:
            if i == j:
                continue
            b = np.zeros(graph.N)
            b[i] += scale
            b[j] -= scale
            points.append(b)
    return points


# -----------------------------
# Clique-expansion energy
# -----------------------------
def f_eq(x, e, q: float) -> float:
    """l^q aggregation of |x_i - x_j| over unordered pairs of e; q = INF gives f_e."""
    xe = np.asarray(x, dtype=float)[np.asarray(e)]
    return _edge_feq(xe, q)


def phi_pq(graph: Hypergraph, params: EnergyParams, x) -> float:
    if not params.smooth:
        return phi_p(graph, params, x)
    x = _as_state(graph, x)
    p, q = params.p, params.q
    total = 0.0
    for idx, w in zip(graph.edge_index, graph.weights):
        total += w * _edge_feq(x[idx], q) ** p
    return total / p


def phi_pq_usual(graph: Hypergraph, p: float, x) -> float:
    """(1/2p) sum_{i,j} w_ij |x_i - x_j|^p over the clique weights (equals phi_pq when p = q)."""
    x = _as_state(graph, x)
    W = clique_weights(graph)
    return float(np.sum(W * np.abs(x[:, None] - x[None, :]) ** p) / (2.0 * p))


def grad_phi_pq(graph: Hypergraph, params: EnergyParams, x) -> np.ndarray:
    """
    D phi_pq(x). Component l is
    sum_{e ni l} w(e) f_{e,q}^(p-q) sum_{i in e} |x_l - x_i|^(q-2) (x_l - x_i);
    edges with f_{e,q}(x) = 0 contribute their limit 0.
    """
    _require_smooth(params, 1)
    x = _as_state(graph, x)
    p, q = params.p, params.q
    g = np.zeros(graph.N)
    for idx, w in zip(graph.edge_index, graph.weights):
        xe = x[idx]
        f = _edge_feq(xe, q)
        if f == 0.0:
            continue
        R = (xe[:, None] - xe[None, :]) / f
        S = np.sign(R) * np.abs(R) ** (q - 1)
        g[idx] += w * f ** (p - 1) * S.sum(axis=1)
    return g


def _edge_hessian(xe: np.ndarray, w: float, p: float, q: float) -> np.ndarray:
    k = len(xe)
    f = _edge_feq(xe, q)
    if f == 0.0:
        if p == 2.0 and q == 2.0:
            return w * (k * np.eye(k) - np.ones((k, k)))
        return np.zeros((k, k))

    R = (xe[:, None] - xe[None, :]) / f
    A = np.abs(R)
    off = ~np.eye(k, dtype=bool)
    P = np.zeros_like(A)
    if q == 2.0:
        P[off] = 1.0
    else:
        # tied pairs: limit 0 for q > 2, left out of the model for q < 2
        mask = off & (A > 0)
        P[mask] = A[mask] ** (q - 2)
    L = np.diag(P.sum(axis=1)) - P
    u = (np.sign(R) * A ** (q - 1)).sum(axis=1)
    return w * f ** (p - 2) * ((p - q) * np.outer(u, u) + (q - 1) * L)


def newton_hessian(graph: Hypergraph, params: EnergyParams, x) -> np.ndarray:
    """Analytic Hessian for any p, q > 1, used as the Newton model by the prox solvers."""
    _require_smooth(params, 1)
    x = _as_state(graph, x)
    H = np.zeros((graph.N, graph.N))
    for idx, w in zip(graph.edge_index, graph.weights):
        H[np.ix_(idx, idx)] += _edge_hessian(x[idx], w, params.p, params.q)
    return H


def hess_phi_pq(graph: Hypergraph, params: EnergyParams, x) -> np.ndarray:
    """D^2 phi_pq(x) for p, q > 2 (symmetric, positive semidefinite, H 1_V = 0)."""
    _require_smooth(params, 2)
    H = newton_hessian(graph, params, x)
    return 0.5 * (H + H.T)


def kappa_bounds(graph: Hypergraph, params: EnergyParams) -> Tuple[float, float]:
    """
    Explicit constants (kappa, kappa') with

    phi_p(z) <= kappa ||z||^p,  ||eta|| <= kappa ||z||^(p-1)            (eta in the subdifferential)
    phi_pq(x) <= kappa' ||x||^p, ||D phi_pq(x)|| <= kappa' ||x||^(p-1)  (every finite q)
    """
    p = params.p
    w = graph.weight_array
    sizes = graph.edge_sizes.astype(float)
    total = float(w.sum())
    kappa = max((2.0 ** p / p) * total, math.sqrt(2.0) * 2.0 ** (p - 1) * total)
    pairs = sizes * (sizes - 1)
    kappa_prime = max(
        float(np.sum(w * pairs ** p)) / p,
        float(np.sum(w * sizes ** 2 * pairs ** (p - 1))),
    )
    return kappa, kappa_prime
