"""Closed-form multilateration from anchor ranges.

Bancroft's method treats each (anchor, range) row as a 4-vector and solves
the pseudorange equations globally under the Lorentz product
<u, v> = u1*v1 + u2*v2 + u3*v3 - u4*v4: one linear solve plus a scalar
quadratic yields up to two (position, clock-bias) candidates without any
initial guess. An iterative Gauss-Newton refiner on the same residuals is
provided as an independent cross-check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DegenerateGeometryError",
    "NoRealSolutionError",
    "NoValidFixError",
    "DivergenceError",
    "Anchor",
    "RoomBounds",
    "PositionFix",
    "bancroft_solve",
    "select_solution",
    "position_error",
    "gauss_newton_refine",
    "anchors_to_json",
    "anchors_from_json",
]

CONDITION_LIMIT = 1e12


class DegenerateGeometryError(ValueError):
    """Anchor geometry is rank deficient or numerically singular."""


class NoRealSolutionError(ValueError):
    """The Bancroft quadratic has no real root for these ranges."""


class NoValidFixError(ValueError):
    """Every candidate was rejected by the selection rules."""


class DivergenceError(RuntimeError):
    """Gauss-Newton iteration diverged."""


@dataclass(frozen=True)
class Anchor:
    id: str
    position: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.position) != 3 or not all(math.isfinite(v) for v in self.position):
            raise ValueError("anchor position must be 3 finite coordinates")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class RoomBounds:
    minimum: tuple[float, float, float]
    maximum: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(lo >= hi for lo, hi in zip(self.minimum, self.maximum)):
            raise ValueError("bounds must satisfy min < max on every axis")

    def contains(self, p: tuple[float, float, float] | np.ndarray, tol: float = 1e-9) -> bool:
        return all(
            lo - tol <= v <= hi + tol
            for v, lo, hi in zip(p, self.minimum, self.maximum)
        )


@dataclass(frozen=True)
class PositionFix:
    """One multilateration candidate with its diagnostics."""

    position: tuple[float, float, float]
    clock_bias: float  # meters of range equivalent
    residual_rms: float
    candidate_index: int
    selection_rule: str | None = None

    def __post_init__(self) -> None:
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be >= 0")


def _lorentz(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[0] + u[1] * v[1] + u[2] * v[2] - u[3] * v[3])


def _residual_rms(anchors: list[Anchor], ranges: np.ndarray, pos: np.ndarray, bias: float) -> float:
    pred = np.array([np.linalg.norm(pos - np.asarray(a.position)) for a in anchors]) + bias
    return float(np.sqrt(np.mean((pred - ranges) ** 2)))


def _zero_bias_candidates(anchors: list[Anchor], rng_arr: np.ndarray) -> list[PositionFix]:
    """Sphere-intersection candidates under the synchronized (zero-bias) prior.

    Used when the pseudorange matrix is rank deficient, which happens exactly
    when the bias column is expressible from the anchor columns (coplanar
    anchors with matching ranges): the pseudorange system then has a solution
    family and the physical members are the zero-bias ones. Differencing the
    sphere equations gives a linear system whose null direction (normal of
    the anchor plane) carries the remaining quadratic.
    """
    pos_mat = np.array([a.position for a in anchors])
    d_mat = 2.0 * (pos_mat[1:] - pos_mat[0])
    rhs = (
        np.sum(pos_mat[1:] ** 2, axis=1) - np.sum(pos_mat[0] ** 2)
        - (rng_arr[1:] ** 2 - rng_arr[0] ** 2)
    )
    u_svd, s_svd, vt_svd = np.linalg.svd(d_mat)
    rank = int(np.sum(s_svd > s_svd[0] * 1e-10)) if s_svd[0] > 0 else 0
    if rank < 2:
        raise DegenerateGeometryError("anchor geometry is rank deficient beyond recovery")
    p0, *_ = np.linalg.lstsq(d_mat, rhs, rcond=1e-10)
    if rank == 3:
        candidates = [p0]
    else:
        normal = vt_svd[-1]
        rel = p0 - pos_mat[0]
        half = float(normal @ rel)
        const = float(rel @ rel) - rng_arr[0] ** 2
        disc = half * half - const
        if disc < 0:
            raise NoRealSolutionError(f"negative discriminant ({disc:.3g})")
        roots = (-half + math.sqrt(disc), -half - math.sqrt(disc))
        candidates = [p0 + t * normal for t in roots]
    return [
        PositionFix(
            position=tuple(p),
            clock_bias=0.0,
            residual_rms=_residual_rms(anchors, rng_arr, p, 0.0),
            candidate_index=idx,
        )
        for idx, p in enumerate(candidates, start=1)
    ]


def bancroft_solve(anchors: list[Anchor], ranges) -> list[PositionFix]:
    """Solve the pseudorange system; returns the real candidates (0 to 2).

    With four anchors the 4x4 system is solved directly; more anchors use the
    least-squares normal-equation form. A rank-deficient system (condition
    number above 1e12, e.g. coplanar anchors with equal ranges) falls back to
    the zero-bias sphere intersection; geometry degenerate beyond that raises
    DegenerateGeometryError, and a negative quadratic discriminant raises
    NoRealSolutionError.
    """
    if len(anchors) < 4:
        raise ValueError(f"need at least 4 anchors, got {len(anchors)}")
    rng_arr = np.asarray(ranges, dtype=float)
    if rng_arr.shape != (len(anchors),):
        raise ValueError("one range per anchor required")
    if np.any(rng_arr <= 0):
        raise ValueError("ranges must be positive")

    b_mat = np.array([[*a.position, r] for a, r in zip(anchors, rng_arr)])
    if np.linalg.cond(b_mat) > CONDITION_LIMIT:
        return _zero_bias_candidates(anchors, rng_arr)
    a_vec = 0.5 * np.array([_lorentz(row, row) for row in b_mat])
    ones = np.ones(len(anchors))

    if len(anchors) == 4:
        u = np.linalg.solve(b_mat, ones)
        v = np.linalg.solve(b_mat, a_vec)
    else:
        normal = b_mat.T @ b_mat
        if np.linalg.cond(normal) > CONDITION_LIMIT:
            return _zero_bias_candidates(anchors, rng_arr)
        u = np.linalg.solve(normal, b_mat.T @ ones)
        v = np.linalg.solve(normal, b_mat.T @ a_vec)

    qa = _lorentz(u, u)
    qb = 2.0 * (_lorentz(u, v) - 1.0)
    qc = _lorentz(v, v)
    if abs(qa) < 1e-300:
        raise DegenerateGeometryError("quadratic collapsed; geometry degenerate")
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise NoRealSolutionError(f"negative discriminant ({disc:.3g})")
    sq = math.sqrt(disc)
    metric = np.array([1.0, 1.0, 1.0, -1.0])
    fixes = []
    for idx, lam in enumerate(((-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)), start=1):
        y = metric * (v + lam * u)
        pos = y[:3]
        bias = float(y[3])
        fixes.append(
            PositionFix(
                position=tuple(pos),
                clock_bias=bias,
                residual_rms=_residual_rms(anchors, rng_arr, pos, bias),
                candidate_index=idx,
            )
        )
    return fixes


def select_solution(
    candidates: list[PositionFix], bounds: RoomBounds, tolerance: float = 1e-9
) -> PositionFix:
    """Reject out-of-bounds candidates; break remaining ties by residual RMS.

    ``tolerance`` widens the bounds so estimates jittering just past a wall
    (a target on the floor, say) are not discarded. The returned fix records
    which rule selected it ('bounds' when rejection left a single survivor,
    'residual' when both candidates were in bounds).
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    inside = [c for c in candidates if bounds.contains(c.position, tol=tolerance)]
    if not inside:
        raise NoValidFixError(
            f"all {len(candidates)} candidates fall outside the room bounds")
    if len(inside) == 1:
        return replace(inside[0], selection_rule="bounds")
    best = min(inside, key=lambda c: c.residual_rms)
    return replace(best, selection_rule="residual")


def position_error(fix: PositionFix | tuple[float, float, float], truth) -> float:
    """Euclidean distance between an estimate and the true position."""
    pos = fix.position if isinstance(fix, PositionFix) else fix
    return float(np.linalg.norm(np.asarray(pos, dtype=float) - np.asarray(truth, dtype=float)))


def gauss_newton_refine(
    anchors: list[Anchor],
    ranges,
    initial: tuple[float, float, float],
    max_iter: int = 50,
    step_tol: float = 1e-10,
) -> PositionFix:
    """Iterative least squares on range residuals, starting from ``initial``.

    Estimates position and a clock-bias term (initialized at zero) so the fit
    matches the closed form on consistent data. Raises DivergenceError when
    the step size grows five iterations in a row.
    """
    rng_arr = np.asarray(ranges, dtype=float)
    pos = np.asarray(initial, dtype=float).copy()
    bias = 0.0
    anchor_mat = np.array([a.position for a in anchors])
    prev_step = math.inf
    growth = 0
    for _ in range(max_iter):
        diff = pos[None, :] - anchor_mat
        dist = np.linalg.norm(diff, axis=1)
        if np.any(dist < 1e-12):
            raise DivergenceError("iterate collided with an anchor")
        resid = dist + bias - rng_arr
        jac = np.hstack([diff / dist[:, None], np.ones((len(anchors), 1))])
        step, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        pos += step[:3]
        bias += float(step[3])
        norm = float(np.linalg.norm(step))
        if norm > prev_step:
            growth += 1
            if growth >= 5:
                raise DivergenceError("step size grew five consecutive iterations")
        else:
            growth = 0
        prev_step = norm
        if norm < step_tol:
            break
    return PositionFix(
        position=tuple(pos),
        clock_bias=bias,
        residual_rms=_residual_rms(anchors, rng_arr, pos, bias),
        candidate_index=1,
    )


# -- serialization ----------------------------------------------------------

def anchors_to_json(anchors: list[Anchor], path: str | Path | None = None) -> list[dict]:
    obj = [{"id": a.id, "x": a.position[0], "y": a.position[1], "z": a.position[2]} for a in anchors]
    if path is not None:
        Path(path).write_text(json.dumps(obj, indent=2))
    return obj


def anchors_from_json(source: str | Path | list) -> list[Anchor]:
    if isinstance(source, list):
        obj = source
    else:
        obj = json.loads(Path(source).read_text())
    return [Anchor(str(e["id"]), (float(e["x"]), float(e["y"]), float(e["z"]))) for e in obj]
