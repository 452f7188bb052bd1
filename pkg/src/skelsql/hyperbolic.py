"""Poincaré-ball primitives: projection, Möbius addition, geodesic distance."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteInput, OutsideBall

# Norms are clipped to this bound before artanh to avoid the boundary singularity.
BALL_EPS = 1e-5

# tanh rounds to 1.0 in float64 once its argument exceeds ~19; cap the projected
# radius so outputs stay strictly inside the ball.
_MAX_RADIUS = 1.0 - 1e-9


def project_hyperbolic(h: np.ndarray) -> np.ndarray:
    """Map a Euclidean vector into the unit ball: tanh(|h|) * h / |h|; zero stays zero."""
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise NonFiniteInput("cannot project a non-finite vector")
    norm = np.linalg.norm(h)
    if norm == 0.0:
        return np.zeros_like(h)
    return min(np.tanh(norm), _MAX_RADIUS) * h / norm


def _check_inside(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"{name} is not finite")
    if np.linalg.norm(v) >= 1.0:
        raise OutsideBall(f"{name} has norm {np.linalg.norm(v):.6f} >= 1")
    return v


def mobius_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Möbius addition on the curvature-1 Poincaré ball."""
    x = _check_inside(x, "x")
    y = _check_inside(y, "y")
    x2 = float(x @ x)
    y2 = float(y @ y)
    xy = float(x @ y)
    num = (1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y
    den = 1.0 + 2.0 * xy + x2 * y2
    return num / den


def poincare_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance 2 * artanh(|(-a) ⊕ b|)."""
    a = _check_inside(a, "a")
    b = _check_inside(b, "b")
    diff_norm = float(np.linalg.norm(mobius_add(-a, b)))
    diff_norm = min(diff_norm, 1.0 - BALL_EPS)
    return float(2.0 * np.arctanh(diff_norm))
