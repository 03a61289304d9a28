"""Run the optimizer on a function, sweep hyperparameters, persist results."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .functions import (
    CounterexampleSpec,
    DifferentiableFunction,
    PiecewiseHermite,
    build_counterexample,
)
from .optimizer import AdamParams, AdamState, Variant, _denominator, scalar_step

__all__ = [
    "NonFiniteValueError",
    "TrajectoryIOError",
    "TrajectoryRecord",
    "RunStats",
    "Trajectory",
    "predicted_iterates",
    "counterexample_for",
    "run",
    "run_counterexample",
    "GridSpec",
    "SweepCell",
    "SweepResult",
    "sweep",
    "export_trajectory",
    "load_trajectory",
    "fmt",
]


def fmt(value: float) -> str:
    """Decimal text with 17 significant digits (round-trips any double)."""
    return f"{value:.17g}"


class NonFiniteValueError(FloatingPointError):
    def __init__(self, step: int, what: str, value: float):
        super().__init__(f"non-finite {what} ({value!r}) at step {step}")
        self.step = step


class TrajectoryIOError(OSError):
    pass


class TrajectoryRecord(NamedTuple):
    k: int
    x: float
    f: float
    g: float
    m: float
    v: float


@dataclass
class RunStats:
    """Quantities tracked at every step, recorded or not."""

    min_abs_g: float = math.inf
    max_abs_g: float = 0.0
    min_step: float = math.inf
    max_step: float = -math.inf
    m_min: float = math.inf
    m_max: float = -math.inf
    v_min: float = math.inf
    v_max: float = -math.inf

    def to_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


COLUMNS = ("k", "x", "f", "g", "m", "v")
_CHUNK = 1 << 16


@dataclass
class Trajectory:
    """Recorded iterates with the moments computed from their gradients.

    Record ``k`` holds ``x_k``, ``f(x_k)``, ``g_k = f'(x_k)`` and the moments
    ``m_k``, ``v_k`` obtained by folding ``g_k`` in.  ``final_state`` allows a
    run to be continued.
    """

    k: np.ndarray
    x: np.ndarray
    f: np.ndarray
    g: np.ndarray
    m: np.ndarray
    v: np.ndarray
    params: AdamParams | None = None
    function_id: dict[str, Any] = field(default_factory=dict)
    record_stride: int = 1
    stats: RunStats | None = None
    final_state: AdamState | None = None

    def __post_init__(self) -> None:
        self.k = np.asarray(self.k, dtype=np.int64)
        for name in COLUMNS[1:]:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.k.shape[0]
        if any(getattr(self, c).shape != (n,) for c in COLUMNS):
            raise ValueError("trajectory columns must have equal length")
        if n > 1 and np.any(np.diff(self.k) <= 0):
            raise ValueError("records must be ordered by strictly increasing k")

    def __len__(self) -> int:
        return int(self.k.shape[0])

    @property
    def records(self) -> list[TrajectoryRecord]:
        return [TrajectoryRecord(*row) for row in zip(self.k.tolist(), *(getattr(self, c).tolist() for c in COLUMNS[1:]))]

    @property
    def num_steps(self) -> int:
        return int(self.k[-1]) if len(self) else 0

    @property
    def min_abs_g(self) -> float:
        if self.stats is not None:
            return self.stats.min_abs_g
        return float(np.min(np.abs(self.g)))

    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.k) == 1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": None if self.params is None else self.params.to_dict(),
            "function": self.function_id,
            "record_stride": self.record_stride,
            "stats": None if self.stats is None else self.stats.to_dict(),
            "records": [r._asdict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Trajectory":
        records = data["records"]
        cols = {c: [r[c] for r in records] for c in COLUMNS}
        params = data.get("params")
        stats = data.get("stats")
        return cls(
            **cols,
            params=None if params is None else AdamParams.from_dict(params),
            function_id=data.get("function") or {},
            record_stride=int(data.get("record_stride", 1)),
            stats=None if stats is None else RunStats(**stats),
        )


def predicted_iterates(
    params: AdamParams, x0: float, gradient: float, num: int
) -> np.ndarray:
    """Iterates the method visits when every gradient equals ``gradient``.

    These are the knots on which a counterexample has to be built so that the
    actual run lands exactly on them.  Once the moments reach their fixed
    point the remaining iterates are accumulated in one vectorized pass,
    performing the same roundings as the scalar update.
    """
    if num < 1:
        raise ValueError("num must be positive")
    xs = [float(x0)]
    x, m, v = float(x0), gradient, gradient * gradient
    while len(xs) < num:
        x_new, m_new, v_new = scalar_step(x, m, v, gradient, params)
        fixed = m_new == m and v_new == v
        xs.append(x_new)
        x, m, v = x_new, m_new, v_new
        if fixed:
            break
    if len(xs) == num:
        return np.array(xs)
    increment = params.alpha * m / _denominator(v, params, math.sqrt)
    tail = np.full(num - len(xs) + 1, increment)
    tail[0] = x
    rest = np.subtract.accumulate(tail)
    return np.concatenate([np.array(xs[:-1]), rest])


def counterexample_for(
    params: AdamParams,
    num_steps: int,
    x0: float = 0.0,
    gradient_level: float = -1.0,
    value_increment: float = 0.0,
) -> PiecewiseHermite:
    """Counterexample sized for a ``num_steps`` run (``num_steps + 2`` knots).

    The knots are the iterates predicted under a constant gradient, so each
    actual iterate is a knot and sees exactly ``gradient_level``.
    """
    num_knots = num_steps + 2
    spec = CounterexampleSpec(
        alpha=params.alpha,
        num_knots=num_knots,
        gradient_level=gradient_level,
        value_increment=value_increment,
        origin=x0,
    )
    knots = predicted_iterates(params, x0, gradient_level, num_knots)
    return build_counterexample(spec, knots=knots)


def run(
    fn: DifferentiableFunction,
    params: AdamParams,
    x0: float = 0.0,
    num_steps: int = 1,
    record_stride: int = 1,
    *,
    state: AdamState | None = None,
    decreasing_stepsize: bool = False,
) -> Trajectory:
    """Run ``num_steps`` updates from ``x0`` (or from ``state`` when continuing).

    Every ``record_stride``-th step is recorded, plus the final iterate.
    ``decreasing_stepsize`` switches to ``alpha / sqrt(k + 1)``; it is an
    exploratory mode only.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be positive")
    if record_stride < 1:
        raise ValueError("record_stride must be positive")
    evaluate = fn.evaluate_scalar
    b1, b2 = params.beta1, params.beta2
    c1, c2 = 1.0 - b1, 1.0 - b2
    alpha, eps = params.alpha, params.epsilon
    pure = params.variant is Variant.PURE
    inside = params.variant is Variant.EPS_INSIDE
    sqrt = math.sqrt
    if state is None:
        x = float(x0)
        if x - x != 0.0:
            raise NonFiniteValueError(0, "x0", x)
        k0 = 0
        f, g = evaluate(x)
        m, v = g, g * g
    else:
        if state.dim != 1:
            raise ValueError("run drives one-dimensional states only")
        x, m, v, k0 = float(state.x[0]), float(state.m[0]), float(state.v[0]), state.k
        f, g = evaluate(x)

    kept: dict[str, list[np.ndarray]] = {c: [] for c in COLUMNS}
    acc = RunStats()
    done = 0
    while done < num_steps:
        n = min(_CHUNK, num_steps - done)
        xs: list[float] = []
        fs: list[float] = []
        gs: list[float] = []
        ms: list[float] = []
        vs: list[float] = []
        # same operations, in the same order, as optimizer.scalar_step
        for k in range(k0 + done, k0 + done + n):
            if f - f != 0.0 or g - g != 0.0:
                raise NonFiniteValueError(k, "function value or gradient", g if f - f == 0.0 else f)
            m = b1 * m + c1 * g
            v = b2 * v + c2 * (g * g)
            if pure:
                den = sqrt(v)
            elif inside:
                den = sqrt(eps + v * v)
            else:
                den = eps + sqrt(v * v)
            if den == 0.0:
                raise ZeroDivisionError(f"update denominator vanishes at component 0 (v={v!r}, step {k})")
            a = alpha / sqrt(k + 1) if decreasing_stepsize else alpha
            xs.append(x)
            fs.append(f)
            gs.append(g)
            ms.append(m)
            vs.append(v)
            x = x - a * m / den
            if x - x != 0.0:
                raise NonFiniteValueError(k + 1, "iterate", x)
            f, g = evaluate(x)
        xs.append(x)
        X = np.array(xs)
        G = np.abs(np.array(gs))
        M = np.array(ms)
        V = np.array(vs)
        S = X[1:] - X[:-1]
        acc.min_abs_g = min(acc.min_abs_g, float(G.min()))
        acc.max_abs_g = max(acc.max_abs_g, float(G.max()))
        acc.min_step = min(acc.min_step, float(S.min()))
        acc.max_step = max(acc.max_step, float(S.max()))
        acc.m_min = min(acc.m_min, float(M.min()))
        acc.m_max = max(acc.m_max, float(M.max()))
        acc.v_min = min(acc.v_min, float(V.min()))
        acc.v_max = max(acc.v_max, float(V.max()))
        sel = slice((-done) % record_stride, n, record_stride)
        kept["k"].append(np.arange(k0 + done, k0 + done + n)[sel])
        kept["x"].append(X[:-1][sel])
        kept["f"].append(np.array(fs)[sel])
        kept["g"].append(np.array(gs)[sel])
        kept["m"].append(M[sel])
        kept["v"].append(V[sel])
        done += n

    k_final = k0 + num_steps
    if f - f != 0.0 or g - g != 0.0:
        raise NonFiniteValueError(k_final, "function value or gradient", g if f - f == 0.0 else f)
    # moments at the last iterate; the returned state still holds the previous ones
    m_last = b1 * m + c1 * g
    v_last = b2 * v + c2 * (g * g)
    for c, val in zip(COLUMNS, (k_final, x, f, g, m_last, v_last)):
        kept[c].append(np.array([val]))
    rec = {c: np.concatenate(parts) for c, parts in kept.items()}
    ag = abs(g)
    stats = RunStats(
        min_abs_g=min(acc.min_abs_g, ag),
        max_abs_g=max(acc.max_abs_g, ag),
        min_step=acc.min_step,
        max_step=acc.max_step,
        m_min=min(acc.m_min, m_last),
        m_max=max(acc.m_max, m_last),
        v_min=min(acc.v_min, v_last),
        v_max=max(acc.v_max, v_last),
    )
    final_state = AdamState(x=np.array([x]), m=np.array([m]), v=np.array([v]), k=k_final)
    function_id = fn.describe()
    if decreasing_stepsize:
        function_id = {**function_id, "schedule": "alpha/sqrt(k+1)"}
    return Trajectory(
        **rec,
        params=params,
        function_id=function_id,
        record_stride=record_stride,
        stats=stats,
        final_state=final_state,
    )


def run_counterexample(
    params: AdamParams,
    num_steps: int,
    x0: float = 0.0,
    record_stride: int = 1,
    gradient_level: float = -1.0,
    value_increment: float = 0.0,
    decreasing_stepsize: bool = False,
) -> Trajectory:
    """Build the counterexample matched to ``params`` and run on it."""
    fn = counterexample_for(params, num_steps, x0, gradient_level, value_increment)
    traj = run(fn, params, x0, num_steps, record_stride, decreasing_stepsize=decreasing_stepsize)
    traj.function_id = {
        **traj.function_id,
        "kind": "counterexample",
        "gradient_level": gradient_level,
        "value_increment": value_increment,
    }
    return traj


@dataclass(frozen=True)
class GridSpec:
    beta1: tuple[float, ...]
    beta2: tuple[float, ...]
    alpha: tuple[float, ...]
    variant: Variant = Variant.PURE
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        for name in ("beta1", "beta2", "alpha"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} range is empty")
            object.__setattr__(self, name, values)
        for name in ("beta1", "beta2"):
            for b in getattr(self, name):
                if not 0.0 <= b < 1.0:
                    raise ValueError(f"{name} must be < 1 and >= 0, got {b!r}")
        for a in self.alpha:
            if not (math.isfinite(a) and a > 0.0):
                raise ValueError(f"alpha must be positive, got {a!r}")
        object.__setattr__(self, "variant", Variant(self.variant))

    def cells(self) -> list[AdamParams]:
        return [
            AdamParams(alpha=a, beta1=b1, beta2=b2, variant=self.variant, epsilon=self.epsilon)
            for b1, b2, a in itertools.product(self.beta1, self.beta2, self.alpha)
        ]


@dataclass(frozen=True)
class SweepCell:
    beta1: float
    beta2: float
    alpha: float
    final_x: float
    min_abs_g: float
    verdict: str


@dataclass
class SweepResult:
    cells: list[SweepCell]
    num_steps: int

    def count(self, verdict: str) -> int:
        return sum(c.verdict == verdict for c in self.cells)

    @property
    def all_diverge(self) -> bool:
        return self.count("Diverges") == len(self.cells)

    def to_csv(self, path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["beta1", "beta2", "alpha", "final_x", "min_abs_g", "verdict"])
                for c in self.cells:
                    w.writerow([fmt(c.beta1), fmt(c.beta2), fmt(c.alpha), fmt(c.final_x), fmt(c.min_abs_g), c.verdict])
        except OSError as exc:
            raise TrajectoryIOError(f"cannot write sweep results to {path}: {exc}") from exc


def _sweep_cell(params: AdamParams, num_steps: int) -> SweepCell:
    from .diagnostics import divergence_verdict

    traj = run_counterexample(params, num_steps, record_stride=num_steps)
    verdict = divergence_verdict(traj, threshold=0.9 * num_steps * params.alpha, gradient_floor=0.5)
    return SweepCell(
        beta1=params.beta1,
        beta2=params.beta2,
        alpha=params.alpha,
        final_x=float(traj.x[-1]),
        min_abs_g=traj.min_abs_g,
        verdict=verdict.value,
    )


def sweep(grid: GridSpec, num_steps: int, jobs: int = 1) -> SweepResult:
    """Run the counterexample in every cell, row-major over (beta1, beta2, alpha)."""
    if num_steps < 1:
        raise ValueError("num_steps must be positive")
    cells = grid.cells()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells, itertools.repeat(num_steps)))
    else:
        results = [_sweep_cell(p, num_steps) for p in cells]
    return SweepResult(cells=results, num_steps=num_steps)


def export_trajectory(traj: Trajectory, path, format: str = "csv") -> None:
    path = Path(path)
    format = format.lower()
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}; expected csv or json")
    try:
        with path.open("w", newline="") as fh:
            if format == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(COLUMNS)
                for r in traj.records:
                    w.writerow([r.k, *(fmt(val) for val in r[1:])])
            else:
                json.dump(traj.to_dict(), fh)
                fh.write("\n")
    except OSError as exc:
        raise TrajectoryIOError(f"cannot write trajectory to {path}: {exc}") from exc


def load_trajectory(path) -> Trajectory:
    """Read a trajectory written by :func:`export_trajectory` (format from the suffix)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TrajectoryIOError(f"cannot read trajectory from {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        return Trajectory.from_dict(json.loads(text))
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(COLUMNS)}")
    cols = list(zip(*rows[1:])) or [()] * len(COLUMNS)
    data: dict[str, Sequence] = {c: [float(v) for v in col] for c, col in zip(COLUMNS, cols)}
    data["k"] = [int(v) for v in data["k"]]
    return Trajectory(**data)
