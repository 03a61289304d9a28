"""Deterministic ADAM recurrence without bias correction.

The method keeps, per coordinate, an exponential moving average ``m`` of the
gradients and ``v`` of the squared gradients, and moves the iterate by
``-alpha * m / sqrt(v)``.  Both averages are seeded from the first gradient
(``m_{-1} = g_0`` and ``v_{-1} = g_0**2``), so the very first update already
sees ``m_0 = g_0`` and ``v_0 = g_0**2``.

Two regularised denominators are supported next to the plain one::

    eps-inside:   x' = x - alpha * m' / sqrt(eps + v'**2)
    eps-outside:  x' = x - alpha * m' / (eps + sqrt(v'**2))

Note that ``v'`` is squared in both, which differs from the usual
``sqrt(v') + eps`` regularisation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "Variant",
    "AdamParams",
    "AdamState",
    "adam_init",
    "adam_step",
    "scalar_step",
    "step_sizes",
]


class Variant(str, enum.Enum):
    """Denominator used in the iterate update."""

    PURE = "pure"
    EPS_INSIDE = "eps-inside"
    EPS_OUTSIDE = "eps-outside"


@dataclass(frozen=True)
class AdamParams:
    """Fixed hyperparameters of the method."""

    alpha: float
    beta1: float = 0.9
    beta2: float = 0.9
    variant: Variant = Variant.PURE
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        for name in ("alpha", "beta1", "beta2", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must be in [0, 1)")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta2 must be in [0, 1)")
        if self.variant is not Variant.PURE and self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive for variant {self.variant.value}")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "variant": self.variant.value,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AdamParams":
        return cls(
            alpha=float(data["alpha"]),
            beta1=float(data["beta1"]),
            beta2=float(data["beta2"]),
            variant=Variant(data.get("variant", "pure")),
            epsilon=float(data.get("epsilon", 0.0)),
        )


@dataclass(frozen=True)
class AdamState:
    """Iterate and moment estimates after ``k`` completed steps.

    After step ``k`` the state holds ``x_{k+1}`` together with the moments
    ``m_k`` and ``v_k`` that produced it.
    """

    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    k: int = 0
    initialized: bool = field(default=True)

    def __post_init__(self) -> None:
        shapes = {np.shape(self.x), np.shape(self.m), np.shape(self.v)}
        if len(shapes) != 1:
            raise ValueError(f"x, m and v must share one shape, got {sorted(shapes)}")
        if np.ndim(self.x) != 1 or np.size(self.x) < 1:
            raise ValueError("state vectors must be one-dimensional and nonempty")
        if self.k < 0:
            raise ValueError("iteration counter must be nonnegative")

    @property
    def dim(self) -> int:
        return int(self.x.shape[0])


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, ndmin=1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def adam_init(x0, g0, params: AdamParams) -> AdamState:
    """Seed the moments from the gradient at the starting point."""
    x = _as_vector(x0, "x0")
    g = _as_vector(g0, "g0")
    if x.shape != g.shape:
        raise ValueError(f"x0 has dimension {x.shape[0]} but g0 has dimension {g.shape[0]}")
    return AdamState(x=x, m=g.copy(), v=g * g, k=0, initialized=True)


def _denominator(v, params: AdamParams, sqrt):
    if params.variant is Variant.PURE:
        return sqrt(v)
    if params.variant is Variant.EPS_INSIDE:
        return sqrt(params.epsilon + v * v)
    return params.epsilon + sqrt(v * v)


def adam_step(state: AdamState, g, params: AdamParams) -> AdamState:
    """One componentwise update; returns a new state."""
    if not state.initialized:
        raise ValueError("state has not been seeded; call adam_init first")
    g = _as_vector(g, "g")
    if g.shape != state.x.shape:
        raise ValueError(f"gradient has dimension {g.shape[0]}, state has {state.dim}")
    b1, b2 = params.beta1, params.beta2
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * (g * g)
    den = _denominator(v, params, np.sqrt)
    zero = np.flatnonzero(den == 0.0)
    if zero.size:
        raise ZeroDivisionError(
            f"update denominator vanishes at component {int(zero[0])} (v={float(v[zero[0]])!r})"
        )
    x = state.x - params.alpha * m / den
    return AdamState(x=x, m=m, v=v, k=state.k + 1, initialized=True)


def scalar_step(
    x: float, m: float, v: float, g: float, params: AdamParams, alpha: float | None = None
) -> tuple[float, float, float]:
    """Scalar form of :func:`adam_step` on plain floats.

    Performs the same floating-point operations in the same order, so a 1D
    run driven through this function is bit-identical to one driven through
    :func:`adam_step`.  ``alpha`` overrides ``params.alpha`` for this step.
    """
    b1, b2 = params.beta1, params.beta2
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * (g * g)
    den = _denominator(v, params, math.sqrt)
    if den == 0.0:
        raise ZeroDivisionError(f"update denominator vanishes at component 0 (v={v!r})")
    a = params.alpha if alpha is None else alpha
    return x - a * m / den, m, v


def step_sizes(traj) -> np.ndarray:
    """Differences ``x_{k+1} - x_k`` between consecutive recorded iterates."""
    x = np.asarray(traj.x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("step sizes are defined for one-dimensional trajectories")
    if x.shape[0] < 2:
        raise ValueError("need at least two records to form a step")
    return np.diff(x)
