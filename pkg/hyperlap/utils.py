"""
Utility functions: file output, float formatting and time-grid quadrature.
"""

import hashlib
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np


def calculate_sha256(file_path: str, chunk_size: int = 8192) -> str:
    """SHA-256 of a file (recorded in reports to identify the inputs)."""
    sha256_hash = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            sha256_hash.update(chunk)
    return sha256_hash.hexdigest()


def ensure_dir(path) -> Path:
    """Create directory (and parents) if it doesn't exist."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def atomic_write_text(path, text: str) -> str:
    """
    Write text to ``path`` through a temporary file in the same directory and
    ``os.replace``, so readers never see a partial file.
    """
    final_path = Path(path)
    ensure_dir(final_path.parent)
    fd, tmp = tempfile.mkstemp(prefix=f".{final_path.name}.", suffix=".tmp", dir=str(final_path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, final_path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return str(final_path)


def format_float(value: float) -> str:
    """17 significant digits (exact round-trip for IEEE doubles)."""
    return "%.17g" % value


def format_row(values: Iterable[float]) -> str:
    return ",".join(format_float(float(v)) for v in values)


# -----------------------------
# Quadrature on a uniform grid
# -----------------------------
def trapezoid_weights(K: int, dt: float) -> np.ndarray:
    """dt/2 at both ends, dt inside (K+1 nodes)."""
    w = np.full(K + 1, dt)
    w[0] = w[-1] = dt / 2.0
    return w


def l2_inner(u: np.ndarray, v: np.ndarray, dt: float) -> float:
    """Trapezoid quadrature of int u(t).v(t) dt for (K+1, N) sample arrays."""
    w = trapezoid_weights(u.shape[0] - 1, dt)
    return float(np.sum(w * np.sum(u * v, axis=1)))


def l2_norm(u: np.ndarray, dt: float) -> float:
    return float(np.sqrt(max(l2_inner(u, u, dt), 0.0)))


def sup_norm(u: np.ndarray) -> float:
    """max_k ||u(t_k)|| (C([0,T]) norm with the Euclidean norm in space)."""
    if u.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(u, axis=-1)))
