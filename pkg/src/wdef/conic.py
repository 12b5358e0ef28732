"""Constrained least-squares ellipse fitting.

Conics are stored as xi = (a, b, c, d, e, f) for
a x^2 + b xy + c y^2 + d x + e y + f = 0, normalised so that
xi^T C xi = 4ac - b^2 = 1 with ``a + c > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, FitFailureError, InsufficientBoundaryError, NotAxisAlignedError

CONSTRAINT = np.zeros((6, 6))
CONSTRAINT[0, 2] = CONSTRAINT[2, 0] = 2.0
CONSTRAINT[1, 1] = -1.0

AXIS_ALIGN_TOL = 0.05


@dataclass(frozen=True)
class ConicCoefficients:
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape != (6,) or not np.any(xi):
            raise ValueError("conic needs 6 coefficients, not all zero")
        object.__setattr__(self, "xi", xi)

    @property
    def discriminant(self) -> float:
        a, b, c = self.xi[:3]
        return 4 * a * c - b * b

    def is_ellipse(self) -> bool:
        return self.discriminant > 0

    def evaluate(self, x, y):
        a, b, c, d, e, f = self.xi
        return a * x * x + b * x * y + c * y * y + d * x + e * y + f


def normalize_conic(xi) -> np.ndarray:
    """Scale ``xi`` so that 4ac - b^2 = 1 and a + c > 0."""
    xi = np.asarray(xi, dtype=float)
    disc = 4 * xi[0] * xi[2] - xi[1] ** 2
    if not disc > 0:
        raise FitFailureError("conic is not an ellipse (4ac - b^2 <= 0)")
    xi = xi / np.sqrt(disc)
    if xi[0] + xi[2] < 0:
        xi = -xi
    return xi


def design_matrix(x, y) -> np.ndarray:
    """Rows [x^2, xy, y^2, x, y, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])


def _uncondition(xi, mx: float, my: float, s: float) -> np.ndarray:
    """Map a conic in u = (x - mx)/s, v = (y - my)/s back to (x, y)."""
    A, B, C, D, E, F = xi
    s2 = s * s
    a, b, c = A / s2, B / s2, C / s2
    d = (-2 * A * mx - B * my) / s2 + D / s
    e = (-2 * C * my - B * mx) / s2 + E / s
    f = (A * mx * mx + B * mx * my + C * my * my) / s2 - (D * mx + E * my) / s + F
    return np.array([a, b, c, d, e, f])


def fit_ellipse_direct(points) -> ConicCoefficients:
    """Direct least-squares ellipse fit: min |D xi|^2 subject to xi^T C xi = 1.

    The generalized eigenproblem (D^T D) xi = lambda C xi is solved in its
    partitioned form (quadratic block against the linear block), which stays
    well posed when the scatter matrix is singular, as it is for noiseless
    samples. Only one eigenvector is elliptic for valid data; it is the one
    returned. Points are centred and scaled to unit RMS radius first.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if len(pts) < 6:
        raise InsufficientBoundaryError(f"need at least 6 points, got {len(pts)}")
    mx, my = pts.mean(axis=0)
    s = np.sqrt(np.mean((pts[:, 0] - mx) ** 2 + (pts[:, 1] - my) ** 2))
    if s == 0:
        raise DegenerateFitError("all points coincide")
    u = (pts[:, 0] - mx) / s
    v = (pts[:, 1] - my) / s
    D = design_matrix(u, v)
    sv = np.linalg.svd(D, compute_uv=False)
    if sv[4] <= 1e-10 * sv[0]:
        raise DegenerateFitError("points do not determine a conic (rank < 5)")

    S = D.T @ D
    S1, S2, S3 = S[:3, :3], S[:3, 3:], S[3:, 3:]
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFitError("linear block of the scatter matrix is singular") from exc
    M = S1 + S2 @ T
    # C1^{-1} M with C1 the upper-left 3x3 block of the constraint
    M = np.vstack([M[2] / 2.0, -M[1], M[0] / 2.0])
    w, V = np.linalg.eig(M)
    w, V = np.real(w), np.real(V)
    cond = 4 * V[0] * V[2] - V[1] ** 2
    admissible = np.flatnonzero(cond > 0)
    if admissible.size == 0:
        raise FitFailureError("no elliptic solution of the constrained eigenproblem")
    # several admissible vectors only appear through round-off; keep the
    # smallest non-negative eigenvalue
    k = admissible[np.argmin(np.where(w[admissible] >= -1e-12 * abs(w).max(), w[admissible], np.inf))]
    q = V[:, k]
    xi = np.concatenate([q, T @ q])
    xi = _uncondition(xi, mx, my, s)
    return ConicCoefficients(normalize_conic(xi))


def fit_boundary_family(points, governed_axis: str) -> ConicCoefficients:
    """Fit the one-parameter boundary family a * k_gov^2 + k_other^2 = 1.

    Every boundary of a scatterer's spectral support is a centred,
    axis-aligned ellipse with unit coefficient on the non-governed axis, so
    only ``a`` is free. The residual is measured along the governed axis,
    |k_gov| - sqrt((1 - k_other^2) / a), which has the closed-form minimiser
    1/sqrt(a) = sum(|k_gov| w) / sum(w^2) with w = sqrt(1 - k_other^2).
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 6:
        raise InsufficientBoundaryError(f"need at least 6 points, got {len(pts)}")
    if governed_axis not in ("x", "y"):
        raise ValueError("governed_axis must be 'x' or 'y'")
    gov, other = (pts[:, 0], pts[:, 1]) if governed_axis == "x" else (pts[:, 1], pts[:, 0])
    w = np.sqrt(np.clip(1.0 - other ** 2, 0.0, None))
    num = np.sum(np.abs(gov) * w)
    if num <= 0:
        raise DegenerateFitError("boundary samples lie on the governed axis origin")
    a = (np.sum(w * w) / num) ** 2
    xi = [a, 0, 1, 0, 0, -1] if governed_axis == "x" else [1, 0, a, 0, 0, -1]
    return ConicCoefficients(normalize_conic(xi))


def canonical_axis_ratio(xi: ConicCoefficients, governed_axis: str, tol: float = AXIS_ALIGN_TOL) -> float:
    """Boundary coefficient of a near-centred, axis-aligned conic.

    ``governed_axis='x'`` gives a/c (boundaries 1 and 3), ``'y'`` gives c/a
    (boundaries 2 and 4). Scale invariant.
    """
    a, b, c, d, e, _ = xi.xi
    big = max(abs(a), abs(c))
    if big == 0 or max(abs(b), abs(d), abs(e)) >= tol * big:
        raise NotAxisAlignedError(
            f"conic not centred/axis aligned (b={b:.3g}, d={d:.3g}, e={e:.3g} vs {big:.3g})")
    if governed_axis == "x":
        return a / c
    if governed_axis == "y":
        return c / a
    raise ValueError("governed_axis must be 'x' or 'y'")
