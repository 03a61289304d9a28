"""C^1 scalar test functions with analytic derivatives.

The central object is :class:`PiecewiseHermite`, a piecewise cubic Hermite
interpolant through prescribed ``(x_k, f_k, g_k)`` triples, extended linearly
beyond the first and last knot with the endpoint slopes.  The ADAM
counterexample is the special case ``f_k = 0``, ``g_k = -1`` on equally
spaced knots starting at the origin; on ``[x_k, x_{k+1}]`` with
``s = x_{k+1} - x_k`` and ``d = t - x_k`` it reads::

    f(t) = -d + 3 d**2 / s - 2 d**3 / s**2

and ``f(t) = -t`` to the left of the origin.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DifferentiableFunction",
    "LinearFunction",
    "QuadraticFunction",
    "PiecewiseHermite",
    "CounterexampleSpec",
    "hermite_build",
    "evaluate",
    "second_derivative",
    "build_counterexample",
    "counterexample_knots",
    "counterexample_closed_form",
]


class DifferentiableFunction(ABC):
    """Scalar function with an analytic first derivative.

    ``value`` and ``derivative`` accept a float or an array of floats.
    """

    @abstractmethod
    def value(self, t): ...

    @abstractmethod
    def derivative(self, t): ...

    def evaluate(self, t):
        return self.value(t), self.derivative(t)

    def evaluate_scalar(self, t: float) -> tuple[float, float]:
        value, slope = self.evaluate(float(t))
        return float(value), float(slope)

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where the function fails to be smooth (none by default)."""
        return np.empty(0)

    def describe(self) -> dict:
        return {"kind": type(self).__name__}

    def __call__(self, t):
        return self.value(t)


class LinearFunction(DifferentiableFunction):
    def __init__(self, slope: float, intercept: float = 0.0):
        self.slope = float(slope)
        self.intercept = float(intercept)

    def value(self, t):
        return self.intercept + self.slope * t

    def derivative(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), self.slope)
        return self.slope

    def describe(self) -> dict:
        return {"kind": "linear", "slope": self.slope, "intercept": self.intercept}


class QuadraticFunction(DifferentiableFunction):
    """``curvature / 2 * (t - center)**2``."""

    def __init__(self, curvature: float = 1.0, center: float = 0.0):
        self.curvature = float(curvature)
        self.center = float(center)

    def value(self, t):
        d = t - self.center
        return 0.5 * self.curvature * d * d

    def derivative(self, t):
        return self.curvature * (t - self.center)

    def describe(self) -> dict:
        return {"kind": "quadratic", "curvature": self.curvature, "center": self.center}


class PiecewiseHermite(DifferentiableFunction):
    """C^1 piecewise cubic through ``(knots[k], values[k])`` with slopes ``slopes[k]``.

    On ``[x_k, x_{k+1}]`` with ``h = x_{k+1} - x_k`` and ``u = (t - x_k) / h``
    the piece is the cubic Hermite form::

        f_k (2u^3 - 3u^2 + 1) + f_{k+1} (-2u^3 + 3u^2)
            + h g_k (u^3 - 2u^2 + u) + h g_{k+1} (u^3 - u^2)

    stored in monomial form around ``x_k`` for evaluation.

    Pieces are half-open, ``[x_k, x_{k+1})``; points left of the first knot
    and from the last knot on use the linear tails.
    """

    def __init__(self, knots, values, slopes):
        knots = np.array(knots, dtype=np.float64)
        values = np.array(values, dtype=np.float64)
        slopes = np.array(slopes, dtype=np.float64)
        if knots.ndim != 1 or values.ndim != 1 or slopes.ndim != 1:
            raise ValueError("knots, values and slopes must be one-dimensional")
        if not (knots.shape == values.shape == slopes.shape):
            raise ValueError(
                f"length mismatch: {knots.size} knots, {values.size} values, {slopes.size} slopes"
            )
        if knots.size < 2:
            raise ValueError("at least two knots are required")
        for name, arr in (("knots", knots), ("values", values), ("slopes", slopes)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contain non-finite entries")
        if np.any(np.diff(knots) <= 0.0):
            bad = int(np.flatnonzero(np.diff(knots) <= 0.0)[0])
            raise ValueError(f"knots must be strictly increasing (violated at index {bad + 1})")
        for arr in (knots, values, slopes):
            arr.flags.writeable = False
        self.knots = knots
        self.values = values
        self.slopes = slopes
        # piece k in monomial form: f_k + g_k d + c2_k d**2 + c3_k d**3, d = t - x_k
        h = np.diff(knots)
        secant = np.diff(values) / h
        self._c2 = (3.0 * secant - 2.0 * slopes[:-1] - slopes[1:]) / h
        self._c3 = (slopes[:-1] + slopes[1:] - 2.0 * secant) / (h * h)
        # plain lists keep the scalar path free of numpy scalar overhead
        self._x = knots.tolist()
        self._f = values.tolist()
        self._g = slopes.tolist()
        self._c2_list = self._c2.tolist()
        self._c3_list = self._c3.tolist()

    def __len__(self) -> int:
        return self.knots.size

    @property
    def breakpoints(self) -> np.ndarray:
        return self.knots

    def describe(self) -> dict:
        return {
            "kind": "piecewise_hermite",
            "num_knots": int(self.knots.size),
            "first_knot": float(self.knots[0]),
            "last_knot": float(self.knots[-1]),
        }

    def piece_index(self, t: float) -> int:
        """Index ``k`` with ``x_k <= t < x_{k+1}``; -1 on the left tail, K on the right."""
        return bisect_right(self._x, t) - 1

    def evaluate_scalar(self, t) -> tuple[float, float]:
        # hot path of every optimizer run
        if t.__class__ is not float:
            t = float(t)
        if t - t != 0.0:
            raise ValueError(f"cannot evaluate at non-finite t={t!r}")
        x = self._x
        i = bisect_right(x, t) - 1
        if i < 0:
            g = self._g[0]
            return self._f[0] + g * (t - x[0]), g
        if i >= len(x) - 1:
            g = self._g[-1]
            return self._f[-1] + g * (t - x[-1]), g
        d = t - x[i]
        c2 = self._c2_list[i]
        c3 = self._c3_list[i]
        g0 = self._g[i]
        # d == 0 returns (f_k, g_k) exactly
        return ((c3 * d + c2) * d + g0) * d + self._f[i], (3.0 * c3 * d + 2.0 * c2) * d + g0

    def _pieces(self, t: np.ndarray):
        if not np.all(np.isfinite(t)):
            raise ValueError("cannot evaluate at non-finite t")
        n = self.knots.size
        i = np.searchsorted(self.knots, t, side="right") - 1
        left = i < 0
        right = i >= n - 1
        j = np.clip(i, 0, n - 2)
        d = t - self.knots[j]
        return left, right, j, d

    def _vector(self, t: np.ndarray):
        left, right, j, d = self._pieces(t)
        c2, c3, g0 = self._c2[j], self._c3[j], self.slopes[j]
        val = ((c3 * d + c2) * d + g0) * d + self.values[j]
        der = (3.0 * c3 * d + 2.0 * c2) * d + g0
        x0, xn = self.knots[0], self.knots[-1]
        f0, fn, s0, sn = self.values[0], self.values[-1], self.slopes[0], self.slopes[-1]
        val = np.where(left, f0 + s0 * (t - x0), np.where(right, fn + sn * (t - xn), val))
        der = np.where(left, s0, np.where(right, sn, der))
        return val, der

    def evaluate(self, t):
        if np.ndim(t) == 0:
            return self.evaluate_scalar(t)
        return self._vector(np.asarray(t, dtype=np.float64))

    def value(self, t):
        return self.evaluate(t)[0]

    def derivative(self, t):
        return self.evaluate(t)[1]

    def second_derivative(self, t):
        """Second derivative of the active piece; undefined at knots."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        hit = np.isin(t, self.knots)
        if np.any(hit):
            raise ValueError(
                f"second derivative is undefined at knot t={t[hit][0]!r} "
                "(the interpolant is C^1 but not C^2 there)"
            )
        left, right, j, d = self._pieces(t)
        out = np.where(left | right, 0.0, 6.0 * self._c3[j] * d + 2.0 * self._c2[j])
        return float(out[0]) if scalar else out


def hermite_build(knots, values, slopes) -> PiecewiseHermite:
    return PiecewiseHermite(knots, values, slopes)


def evaluate(fn: DifferentiableFunction, t):
    """Return ``(value, derivative)`` of ``fn`` at ``t``."""
    return fn.evaluate(t)


def second_derivative(fn: PiecewiseHermite, t):
    return fn.second_derivative(t)


@dataclass(frozen=True)
class CounterexampleSpec:
    """Knot data for the counterexample family.

    ``alpha`` is the knot spacing, ``gradient_level`` the constant slope at
    every knot and ``value_increment`` the growth ``f_k = k * delta`` of the
    knot values (zero for the plain counterexample).
    """

    alpha: float
    num_knots: int
    gradient_level: float = -1.0
    value_increment: float = 0.0
    origin: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError("alpha must be positive")
        if int(self.num_knots) != self.num_knots or self.num_knots < 2:
            raise ValueError("num_knots must be an integer >= 2")
        if not (math.isfinite(self.gradient_level) and self.gradient_level < 0.0):
            raise ValueError("gradient_level must be negative")
        if not (math.isfinite(self.value_increment) and self.value_increment >= 0.0):
            raise ValueError("value_increment must be nonnegative")
        if not math.isfinite(self.origin):
            raise ValueError("origin must be finite")


def counterexample_knots(spec: CounterexampleSpec) -> np.ndarray:
    """Knots ``x_0 = origin``, ``x_{k+1} = x_k + alpha``, accumulated in order.

    Sequential accumulation reproduces the floating-point iterates of the
    plain ADAM update bit for bit.
    """
    steps = np.full(int(spec.num_knots), spec.alpha)
    steps[0] = spec.origin
    return np.add.accumulate(steps)


def build_counterexample(spec: CounterexampleSpec, knots=None) -> PiecewiseHermite:
    """Hermite interpolant through ``(x_k, k * delta, c)``.

    ``knots`` overrides the default equally spaced knots, e.g. with the exact
    iterates an optimizer variant is predicted to visit.
    """
    if knots is None:
        knots = counterexample_knots(spec)
    knots = np.asarray(knots, dtype=np.float64)
    k = np.arange(knots.size, dtype=np.float64)
    values = k * spec.value_increment
    slopes = np.full(knots.size, spec.gradient_level)
    return PiecewiseHermite(knots, values, slopes)


def counterexample_closed_form(t, alpha: float):
    """Closed-form counterexample (unit slope, zero values, knots at ``k * alpha``).

    Independent of :class:`PiecewiseHermite`; used as a cross-check of the
    general construction.  Returns ``(value, derivative)``.
    """
    t = np.asarray(t, dtype=np.float64)
    k = np.floor(t / alpha)
    xk = k * alpha
    s = (k + 1.0) * alpha - xk
    d = t - xk
    val = -d + 3.0 / s * d**2 - 2.0 / s**2 * d**3
    der = -1.0 + 6.0 / s * d - 6.0 / s**2 * d**2
    neg = t < 0.0
    val = np.where(neg, -t, val)
    der = np.where(neg, -1.0, der)
    if val.ndim == 0:
        return float(val), float(der)
    return val, der
