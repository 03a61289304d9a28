"""Numerical certificates for trajectories and test functions.

All randomized routines take an explicit seed and are reproducible bit for
bit for a given seed.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .functions import DifferentiableFunction
from .harness import Trajectory, fmt

__all__ = [
    "Verdict",
    "TaylorResiduals",
    "DivergenceSummary",
    "Check",
    "DiagnosticsReport",
    "divergence_verdict",
    "estimate_lipschitz",
    "taylor_residuals",
    "scan_lower_bound",
    "finite_difference_audit",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Verdict(str, enum.Enum):
    DIVERGES = "Diverges"
    STALLS = "Stalls"
    CONVERGES = "Converges"


def _span(span) -> tuple[float, float]:
    lo, hi = (float(s) for s in span)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"degenerate span [{lo!r}, {hi!r}]")
    return lo, hi


def divergence_verdict(traj: Trajectory, threshold: float, gradient_floor: float) -> Verdict:
    """Classify a finite run.

    Converges when some gradient magnitude falls below ``gradient_floor``;
    Diverges when gradients stay above it and the last iterate reaches
    ``threshold`` in magnitude; Stalls otherwise.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if threshold <= 0.0 or gradient_floor <= 0.0:
        raise ValueError("threshold and gradient_floor must be positive")
    if traj.min_abs_g < gradient_floor:
        return Verdict.CONVERGES
    if abs(float(traj.x[-1])) >= threshold:
        return Verdict.DIVERGES
    return Verdict.STALLS


def estimate_lipschitz(
    fn: DifferentiableFunction,
    span,
    num_pairs: int = 100_000,
    seed: int = 0,
    scale: float | None = None,
) -> float:
    """Largest sampled ``|f'(t) - f'(t')| / |t - t'|`` over pairs in ``span``.

    Half of the pairs are uniform in ``span``; the other half are separated by
    a log-uniform distance in ``[1e-5, 1e-1] * scale``, which resolves the
    curvature peaks at piece ends.  ``scale`` defaults to the median spacing of
    the function's breakpoints inside ``span`` (or the span width).
    """
    lo, hi = _span(span)
    if num_pairs < 1:
        raise ValueError("num_pairs must be positive")
    if scale is None:
        bp = np.asarray(fn.breakpoints)
        bp = bp[(bp >= lo) & (bp <= hi)]
        scale = float(np.median(np.diff(bp))) if bp.size > 2 else hi - lo
    scale = min(scale, hi - lo)
    rng = np.random.default_rng(seed)
    n_far = num_pairs // 2
    n_near = num_pairs - n_far
    a_far = rng.uniform(lo, hi, n_far)
    b_far = rng.uniform(lo, hi, n_far)
    a_near = rng.uniform(lo, hi, n_near)
    sep = scale * 10.0 ** rng.uniform(-5.0, -1.0, n_near)
    sign = np.where(rng.random(n_near) < 0.5, -1.0, 1.0)
    b_near = np.clip(a_near + sign * sep, lo, hi)
    a = np.concatenate([a_far, a_near])
    b = np.concatenate([b_far, b_near])
    keep = a != b
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0
    da = np.asarray(fn.derivative(a), dtype=np.float64)
    db = np.asarray(fn.derivative(b), dtype=np.float64)
    return float(np.max(np.abs(da - db) / np.abs(a - b)))


@dataclass
class TaylorResiduals:
    """Per-step residuals of the first-order model ``f_k + g_k s``."""

    value_residual: np.ndarray
    gradient_residual: np.ndarray
    value_bound: np.ndarray
    gradient_bound: np.ndarray
    value_holds: np.ndarray
    gradient_holds: np.ndarray
    steps: np.ndarray

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.value_holds) and np.all(self.gradient_holds))

    def __len__(self) -> int:
        return int(self.steps.shape[0])


def taylor_residuals(traj: Trajectory, alpha: float, rtol: float = 1e-9) -> TaylorResiduals:
    """``|f_{k+1} - (f_k + g_k s_k)|`` against ``s_k**2 / alpha`` and
    ``|g_{k+1} - g_k|`` against ``s_k / alpha`` for consecutive records.

    The inequalities are tested with a relative slack ``rtol`` because the
    stored iterates carry rounding of order ``ulp(x_k)``.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if len(traj) < 2:
        raise ValueError("need at least two records")
    f, g, x = traj.f, traj.g, traj.x
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise ValueError("trajectory is missing function values or gradients")
    s = x[1:] - x[:-1]
    model = f[:-1] + g[:-1] * s
    value_res = np.abs(f[1:] - model)
    grad_res = np.abs(g[1:] - g[:-1])
    value_bound = s * s / alpha
    grad_bound = np.abs(s) / alpha
    return TaylorResiduals(
        value_residual=value_res,
        gradient_residual=grad_res,
        value_bound=value_bound,
        gradient_bound=grad_bound,
        value_holds=value_res <= value_bound * (1.0 + rtol),
        gradient_holds=grad_res <= grad_bound * (1.0 + rtol),
        steps=s,
    )


def _golden_min(fn, a: float, b: float, tol: float = 1e-13) -> tuple[float, float]:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = float(fn.value(c)), float(fn.value(d))
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = float(fn.value(c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = float(fn.value(d))
    t = 0.5 * (a + b)
    return t, float(fn.value(t))


def scan_lower_bound(fn: DifferentiableFunction, span, points_per_unit: int = 10_000) -> float:
    """Minimum of ``fn`` on a uniform grid over ``span``, polished by golden section."""
    lo, hi = _span(span)
    if points_per_unit < 1:
        raise ValueError("points_per_unit must be positive")
    n = max(2, int(math.ceil((hi - lo) * points_per_unit)) + 1)
    i = np.arange(n, dtype=np.float64)
    grid = (lo * (n - 1 - i) + hi * i) / (n - 1)
    vals = np.asarray(fn.value(grid), dtype=np.float64)
    best = int(np.argmin(vals))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, n - 1)]
    _, refined = _golden_min(fn, float(a), float(b))
    return min(float(vals[best]), refined)


def finite_difference_audit(
    fn: DifferentiableFunction,
    span,
    num_points: int = 1000,
    h: float = 1e-6,
    seed: int = 0,
    min_knot_distance: float | None = None,
) -> float:
    """Max of ``|central difference - f'| / max(1, |f'|)`` over random points.

    Points closer than ``min_knot_distance`` (default ``2 h``) to a
    breakpoint are redrawn; pass ``0`` to keep them, in which case errors of
    order ``h`` at the kinks are expected.
    """
    if not h > 0.0:
        raise ValueError("h must be positive")
    lo, hi = _span(span)
    if num_points < 1:
        raise ValueError("num_points must be positive")
    gap = 2.0 * h if min_knot_distance is None else float(min_knot_distance)
    bp = np.sort(np.asarray(fn.breakpoints, dtype=np.float64))
    rng = np.random.default_rng(seed)
    pts = np.empty(0)
    for _ in range(100):
        cand = rng.uniform(lo, hi, num_points)
        if gap > 0.0 and bp.size:
            j = np.searchsorted(bp, cand)
            left = np.abs(cand - bp[np.clip(j - 1, 0, bp.size - 1)])
            right = np.abs(bp[np.clip(j, 0, bp.size - 1)] - cand)
            cand = cand[np.minimum(left, right) >= gap]
        pts = np.concatenate([pts, cand])[:num_points]
        if pts.size == num_points:
            break
    else:
        raise ValueError("could not draw enough points away from breakpoints")
    tp = pts + h
    tm = pts - h
    fd = (np.asarray(fn.value(tp)) - np.asarray(fn.value(tm))) / (tp - tm)
    exact = np.asarray(fn.derivative(pts), dtype=np.float64)
    return float(np.max(np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))))


@dataclass
class DivergenceSummary:
    verdict: Verdict
    final_abs_x: float
    min_abs_g: float
    max_abs_step: float
    threshold: float
    gradient_floor: float


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class DiagnosticsReport:
    """Collected certificates for one configuration.

    ``taylor_residuals`` keeps the per-step pairs for at most
    ``MAX_LISTED_STEPS`` steps; the summary fields cover every step.
    """

    MAX_LISTED_STEPS = 1000

    lipschitz_estimate: float
    lipschitz_bound: float | None
    lower_bound_estimate: float
    divergence: DivergenceSummary
    taylor: TaylorResiduals | None = None
    max_abs_gradient: float | None = None
    checks: list[Check] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_checks(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        def opt(v):
            return None if v is None else fmt(v)

        d = self.divergence
        out: dict[str, Any] = {
            "config": self.config,
            "lipschitz_estimate": fmt(self.lipschitz_estimate),
            "lipschitz_bound": opt(self.lipschitz_bound),
            "lower_bound_estimate": fmt(self.lower_bound_estimate),
            "max_abs_gradient": opt(self.max_abs_gradient),
            "divergence": {
                "verdict": d.verdict.value,
                "final_abs_x": fmt(d.final_abs_x),
                "min_abs_g": fmt(d.min_abs_g),
                "max_abs_step": fmt(d.max_abs_step),
                "threshold": fmt(d.threshold),
                "gradient_floor": fmt(d.gradient_floor),
            },
            "taylor_residuals": None,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "passed": self.passed,
        }
        t = self.taylor
        if t is not None:
            n = min(len(t), self.MAX_LISTED_STEPS)
            out["taylor_residuals"] = {
                "num_steps": len(t),
                "all_hold": t.all_hold,
                "max_value_residual": fmt(float(np.max(t.value_residual))),
                "max_gradient_residual": fmt(float(np.max(t.gradient_residual))),
                "pairs": [
                    [fmt(a), fmt(b)]
                    for a, b in zip(t.value_residual[:n].tolist(), t.gradient_residual[:n].tolist())
                ],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"
