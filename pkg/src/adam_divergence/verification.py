"""End-to-end certificate for the counterexample at a given step length."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .diagnostics import (
    Check,
    DiagnosticsReport,
    DivergenceSummary,
    divergence_verdict,
    estimate_lipschitz,
    finite_difference_audit,
    scan_lower_bound,
    taylor_residuals,
)
from .functions import (
    CounterexampleSpec,
    build_counterexample,
    counterexample_closed_form,
    hermite_build,
)
from .harness import Trajectory, counterexample_for, fmt, run
from .optimizer import AdamParams

__all__ = ["certify", "lower_bound_constant", "ORACLE_ULPS"]

ORACLE_ULPS = 8.0
LIPSCHITZ_PAIRS = 100_000
ORACLE_POINTS = 10_000
FD_POINTS = 1000
PIECES = 20


def lower_bound_constant(alpha: float) -> float:
    """Minimum of the plain counterexample: ``-sqrt(3) * alpha / 18``."""
    return -math.sqrt(3.0) * alpha / 18.0


def oracle_discrepancy_ulps(alpha: float, num_points: int, seed: int) -> float:
    """Largest gap between the Hermite construction and the closed form, in ulps of ``alpha``."""
    forge = hermite_build(
        np.arange(PIECES + 3, dtype=np.float64) * alpha,
        np.zeros(PIECES + 3),
        np.full(PIECES + 3, -1.0),
    )
    rng = np.random.default_rng(seed)
    t = rng.uniform(-2.0 * alpha, PIECES * alpha, num_points)
    forged = forge.value(t)
    closed, _ = counterexample_closed_form(t, alpha)
    return float(np.max(np.abs(forged - closed)) / np.spacing(alpha))


def _trajectory_checks(traj: Trajectory, alpha: float, gradient_level: float) -> tuple[list[Check], dict]:
    checks: list[Check] = []
    contiguous = traj.is_contiguous()
    s_nominal = alpha  # plain update with a constant negative gradient moves by alpha
    if contiguous:
        # recompute from records so that an edited trajectory cannot hide behind stale stats
        g_lo, g_hi = float(traj.g.min()), float(traj.g.max())
        m_lo, m_hi = float(traj.m.min()), float(traj.m.max())
        v_lo, v_hi = float(traj.v.min()), float(traj.v.max())
        steps = np.diff(traj.x)
        s_lo, s_hi = float(steps.min()), float(steps.max())
    else:
        st = traj.stats
        if st is None:
            raise ValueError("a strided trajectory needs its run statistics")
        # unrecorded steps are only known through |g|; recorded ones fix the sign
        g_lo, g_hi = float(traj.g.min()), float(traj.g.max())
        if st.min_abs_g != abs(gradient_level) or st.max_abs_g != abs(gradient_level):
            g_lo, g_hi = -st.max_abs_g, -st.min_abs_g
        m_lo, m_hi, v_lo, v_hi = st.m_min, st.m_max, st.v_min, st.v_max
        s_lo, s_hi = st.min_step, st.max_step
    c = gradient_level
    checks.append(Check(
        "constant_gradient",
        g_lo == c and g_hi == c,
        f"g in [{fmt(g_lo)}, {fmt(g_hi)}], expected {fmt(c)}",
    ))
    checks.append(Check(
        "constant_moments",
        m_lo == m_hi == c and v_lo == v_hi == c * c,
        f"m in [{fmt(m_lo)}, {fmt(m_hi)}], v in [{fmt(v_lo)}, {fmt(v_hi)}]",
    ))
    ulp = float(np.spacing(max(float(np.max(np.abs(traj.x))), s_nominal)))
    dev = max(abs(s_hi - s_nominal), abs(s_lo - s_nominal))
    checks.append(Check(
        "step_length",
        dev <= ulp,
        f"max |s_k - alpha| = {fmt(dev)} (one ulp of the iterates: {fmt(ulp)})",
    ))
    info = {"max_abs_step": max(abs(s_lo), abs(s_hi))}
    if contiguous and len(traj) >= 2:
        tr = taylor_residuals(traj, alpha)
        exact = bool(np.all(tr.value_residual == tr.steps) and np.all(tr.gradient_residual == 0.0))
        checks.append(Check(
            "taylor_equalities",
            exact and tr.all_hold,
            f"value residual == s_k: {bool(np.all(tr.value_residual == tr.steps))}, "
            f"gradient residual == 0: {bool(np.all(tr.gradient_residual == 0.0))}, bounds hold: {tr.all_hold}",
        ))
        info["taylor"] = tr
    return checks, info


def certify(
    alpha: float,
    num_steps: int,
    seed: int = 0,
    beta1: float = 0.9,
    beta2: float = 0.9,
    trajectory: Trajectory | None = None,
) -> DiagnosticsReport:
    """Run the full invariant suite for the plain counterexample.

    When ``trajectory`` is given it replaces the fresh run in the
    trajectory-based checks.
    """
    params = AdamParams(alpha=alpha, beta1=beta1, beta2=beta2)
    if trajectory is None:
        fn = counterexample_for(params, num_steps)
        traj = run(fn, params, 0.0, num_steps, record_stride=1)
    else:
        traj = trajectory
        if traj.is_contiguous():
            traj = dataclasses.replace(traj, stats=None)
        if traj.params is not None:
            alpha = traj.params.alpha
        num_steps = traj.num_steps
    checks, info = _trajectory_checks(traj, alpha, -1.0)

    threshold = 0.9 * num_steps * alpha
    verdict = divergence_verdict(traj, threshold=threshold, gradient_floor=0.5)
    checks.append(Check("divergence", verdict.value == "Diverges", f"verdict {verdict.value}"))

    plain = build_counterexample(CounterexampleSpec(alpha=alpha, num_knots=PIECES + 2))
    span = (0.0, PIECES * alpha)
    bound = 6.0 / alpha
    lip = estimate_lipschitz(plain, span, LIPSCHITZ_PAIRS, seed)
    checks.append(Check(
        "lipschitz",
        0.98 * bound <= lip <= bound * (1.0 + 1e-9),
        f"estimate {fmt(lip)} against 6/alpha = {fmt(bound)}",
    ))

    lower = scan_lower_bound(plain, span, points_per_unit=int(math.ceil(10_000 * max(1.0, 1.0 / alpha))))
    expected = lower_bound_constant(alpha)
    checks.append(Check(
        "lower_bound",
        abs(lower - expected) <= 1e-6,
        f"grid minimum {fmt(lower)}, -sqrt(3) alpha / 18 = {fmt(expected)}",
    ))

    h = 1e-6 * min(1.0, alpha)
    fd = finite_difference_audit(plain, (-alpha, PIECES * alpha), FD_POINTS, h, seed)
    checks.append(Check("finite_difference", fd <= 1e-8, f"max relative error {fmt(fd)} (h={fmt(h)})"))

    ulps = oracle_discrepancy_ulps(alpha, ORACLE_POINTS, seed)
    checks.append(Check(
        "oracle_equivalence",
        ulps <= ORACLE_ULPS,
        f"max discrepancy {fmt(ulps)} ulps of alpha",
    ))

    grid = np.linspace(-alpha, PIECES * alpha, 20_001)
    max_grad = float(np.max(np.abs(plain.derivative(grid))))

    return DiagnosticsReport(
        lipschitz_estimate=lip,
        lipschitz_bound=bound,
        lower_bound_estimate=lower,
        divergence=DivergenceSummary(
            verdict=verdict,
            final_abs_x=abs(float(traj.x[-1])),
            min_abs_g=traj.min_abs_g,
            max_abs_step=info["max_abs_step"],
            threshold=threshold,
            gradient_floor=0.5,
        ),
        taylor=info.get("taylor"),
        max_abs_gradient=max_grad,
        checks=checks,
        config={"alpha": fmt(alpha), "steps": num_steps, "seed": seed, "beta1": fmt(beta1), "beta2": fmt(beta2)},
    )
