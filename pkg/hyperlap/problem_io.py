"""
Problem files.

A problem is a JSON object::

    {"graph": "G.json" | {...}, "p": 4, "q": 4 | "inf", "lambda": 1e-3,
     "T": 1.0, "steps": 200, "x0": [...], "h": [[...], ...], "a": [[...], ...],
     "x_target": [[...], ...], "z_target": [...], "M": 10.0,
     "opt": {"max_iters": 200, "tol": 1e-6}}

``graph`` is a path relative to the problem file or an inline hypergraph
object. ``h``/``a``/``x_target`` hold one row per grid node; ``a`` and ``h``
rows may list only the m controlled components. ``x0`` may list the n free
components only (control problems) or all N.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np

from hyperlap.control import ControlProblem, OptimizerOptions
from hyperlap.dynamics import TimeGrid, embed_rows
from hyperlap.energy import EnergyParams
from hyperlap.errors import BadInput
from hyperlap.hypergraph import Hypergraph, load_hypergraph, validate

logger = logging.getLogger(__name__)


@dataclass
class Problem:
    graph: Hypergraph
    params: EnergyParams
    lam: float
    grid: TimeGrid
    x0: np.ndarray
    h: np.ndarray
    a: np.ndarray
    x_target: Optional[np.ndarray] = None
    z_target: Optional[np.ndarray] = None
    M: Optional[float] = None
    opt: Dict[str, Any] = field(default_factory=dict)

    def require_finite_q(self, purpose: str) -> None:
        """A missing 'q' means q = inf, which the penalized dynamics cannot use."""
        if not self.params.smooth:
            raise BadInput(f"{purpose} needs a finite 'q' (missing or 'inf' in the problem file; set it there or pass --q)")

    def control_problem(self) -> ControlProblem:
        """Control view: targets default to zero, z_target to the last target row."""
        if self.M is None:
            raise BadInput("control problems need a budget 'M'")
        x_target = self.x_target if self.x_target is not None else np.zeros((self.grid.K + 1, self.graph.N))
        z_target = self.z_target if self.z_target is not None else x_target[-1]
        return ControlProblem(
            graph=self.graph,
            params=self.params,
            lam=self.lam,
            grid=self.grid,
            h=self.h,
            x0_free=self.x0[: self.graph.n],
            x_target=x_target,
            z_target=z_target,
            M=self.M,
        )

    def optimizer_options(self, base: Optional[OptimizerOptions] = None) -> OptimizerOptions:
        base = base or OptimizerOptions()
        known = {k: v for k, v in self.opt.items() if k in OptimizerOptions.__dataclass_fields__}
        unknown = sorted(set(self.opt) - set(known))
        if unknown:
            logger.warning(f"Ignoring unknown optimizer options: {unknown}")
        values = {**base.__dict__, **known}
        return OptimizerOptions(**values)


def read_json(path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise BadInput(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise BadInput(f"{path}: invalid JSON ({e})")
    except OSError as e:
        raise BadInput(f"{path}: {e}")


def parse_q(value) -> float:
    if value is None:
        return float("inf")
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return float("inf")
        try:
            return float(value)
        except ValueError:
            raise BadInput(f"q must be a number or 'inf', got {value!r}")
    return float(value)


def _number(raw: Mapping[str, Any], key: str, default=None) -> float:
    value = raw.get(key, default)
    if value is None:
        raise BadInput(f"problem is missing '{key}'")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise BadInput(f"'{key}' must be a number, got {value!r}")


def _graph(raw: Mapping[str, Any], base_dir: Path) -> Hypergraph:
    ref = raw.get("graph")
    if isinstance(ref, Mapping):
        return validate(ref)
    if isinstance(ref, str):
        path = Path(ref) if Path(ref).is_absolute() else base_dir / ref
        if not path.exists():
            raise BadInput(f"graph file not found: {path}")
        return load_hypergraph(str(path))
    raise BadInput("problem needs 'graph' (path or inline hypergraph)")


def _rows(raw: Mapping[str, Any], key: str):
    value = raw.get(key)
    if value is None:
        return None
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise BadInput(f"'{key}' must be a list of numeric rows")


def parse_problem(raw: Mapping[str, Any], base_dir: Path = Path("."), overrides: Optional[Mapping[str, Any]] = None) -> Problem:
    """Build a Problem; ``overrides`` (p, q, lambda, T, steps, M) win over the file."""
    if not isinstance(raw, Mapping):
        raise BadInput("problem file must hold a JSON object")
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    graph = _graph(merged, base_dir)
    params = EnergyParams(_number(merged, "p"), parse_q(merged.get("q")))
    lam = _number(merged, "lambda", 1e-3)
    steps = _number(merged, "steps")
    if steps != int(steps):
        raise BadInput(f"'steps' must be an integer, got {steps}")
    grid = TimeGrid(_number(merged, "T"), int(steps))

    a = embed_rows(_rows(merged, "a"), graph, grid, "control")
    h = embed_rows(_rows(merged, "h"), graph, grid, "forcing", controlled_only=False)

    x0 = _rows(merged, "x0")
    x0 = np.zeros(graph.N) if x0 is None else x0.reshape(-1)
    if x0.size == graph.n and graph.m:
        # free part only: controlled part starts on the constraint
        x0 = np.concatenate([x0, a[0, graph.n :]])
    if x0.size != graph.N:
        raise BadInput(f"'x0' has {x0.size} entries, expected {graph.N} (or {graph.n} free components)")

    x_target = _rows(merged, "x_target")
    if x_target is not None:
        x_target = embed_rows(x_target, graph, grid, "x_target", controlled_only=False)
    z_target = _rows(merged, "z_target")
    if z_target is not None:
        z_target = z_target.reshape(-1)
    M = merged.get("M")
    opt = merged.get("opt") or {}
    if not isinstance(opt, Mapping):
        raise BadInput("'opt' must be an object")

    problem = Problem(
        graph=graph,
        params=params,
        lam=lam,
        grid=grid,
        x0=x0,
        h=h,
        a=a,
        x_target=x_target,
        z_target=z_target,
        M=None if M is None else _number(merged, "M"),
        opt=dict(opt),
    )
    logger.info(
        f"Problem: N={graph.N} (n={graph.n}, m={graph.m}), |E|={graph.num_edges}, p={params.p}, "
        f"q={params.q}, lambda={lam:g}, T={grid.T:g}, K={grid.K}"
    )
    return problem


def load_problem(path: str, overrides: Optional[Mapping[str, Any]] = None) -> Problem:
    file_path = Path(path)
    return parse_problem(read_json(file_path), file_path.parent, overrides)


def load_vector(spec: str) -> np.ndarray:
    """A vector given inline as JSON (``"[1, 0, 0]"``) or as a path to a JSON file."""
    text = spec.strip()
    data = None
    if text.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise BadInput(f"invalid inline vector ({e})")
    else:
        data = read_json(text)
        if isinstance(data, Mapping):
            data = data.get("x")
    try:
        return np.asarray(data, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise BadInput("vector must be a JSON list of numbers")
