import json
import math

import numpy as np
import pytest

from adam_divergence.diagnostics import (
    Verdict,
    divergence_verdict,
    estimate_lipschitz,
    finite_difference_audit,
    scan_lower_bound,
    taylor_residuals,
)
from adam_divergence.functions import (
    CounterexampleSpec,
    LinearFunction,
    QuadraticFunction,
    build_counterexample,
)
from adam_divergence.harness import Trajectory, run_counterexample
from adam_divergence.optimizer import AdamParams, Variant
from adam_divergence.verification import certify, lower_bound_constant


def plain(alpha, pieces=20):
    return build_counterexample(CounterexampleSpec(alpha=alpha, num_knots=pieces + 2))


def gradient_descent_on_quadratic(x0=1.0, alpha=0.5, steps=100):
    q = QuadraticFunction()
    xs = [x0]
    for _ in range(steps):
        xs.append(xs[-1] - alpha * q.derivative(xs[-1]))
    xs = np.array(xs)
    return Trajectory(
        k=np.arange(xs.size), x=xs, f=q.value(xs), g=q.derivative(xs), m=np.zeros(xs.size), v=np.zeros(xs.size)
    )


class TestDivergenceVerdict:
    def test_counterexample_long_run(self):
        traj = run_counterexample(AdamParams(alpha=0.001), 10**6, record_stride=10**5)
        assert traj.x[-1] == pytest.approx(1000.0, rel=1e-9)
        assert divergence_verdict(traj, threshold=999, gradient_floor=0.5) is Verdict.DIVERGES

    def test_gradient_descent_converges(self):
        traj = gradient_descent_on_quadratic()
        assert divergence_verdict(traj, threshold=10, gradient_floor=1e-6) is Verdict.CONVERGES

    def test_constant_trajectory_stalls(self):
        n = 20
        traj = Trajectory(k=np.arange(n), x=np.ones(n), f=np.zeros(n), g=np.ones(n), m=np.ones(n), v=np.ones(n))
        assert divergence_verdict(traj, threshold=10, gradient_floor=0.5) is Verdict.STALLS

    def test_empty(self):
        traj = Trajectory(k=[], x=[], f=[], g=[], m=[], v=[])
        with pytest.raises(ValueError, match="empty"):
            divergence_verdict(traj, 1.0, 0.5)

    @pytest.mark.parametrize("variant", [Variant.EPS_INSIDE, Variant.EPS_OUTSIDE])
    def test_invariant_under_eps_variants(self, variant):
        base = run_counterexample(AdamParams(alpha=0.1), 2000, record_stride=2000)
        eps = run_counterexample(AdamParams(alpha=0.1, variant=variant, epsilon=1e-8), 2000, record_stride=2000)
        thr = 0.9 * 2000 * 0.1
        assert divergence_verdict(base, thr, 0.5) == divergence_verdict(eps, thr, 0.5) == Verdict.DIVERGES


class TestLipschitz:
    def test_unit_alpha(self):
        est = estimate_lipschitz(plain(1.0, 10), (0.0, 10.0), 100_000, seed=1)
        assert 5.9 <= est <= 6.0

    def test_linear_function(self):
        assert estimate_lipschitz(LinearFunction(-1.0), (-5.0, -1.0), 1000, seed=0) == 0.0

    def test_half_alpha(self):
        est = estimate_lipschitz(plain(0.5, 10), (0.0, 5.0), 100_000, seed=2)
        assert 11.8 <= est <= 12.0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0, 3.0])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_never_exceeds_bound(self, alpha, seed):
        est = estimate_lipschitz(plain(alpha), (0.0, 20 * alpha), 20_000, seed=seed)
        assert est <= 6.0 / alpha * (1 + 1e-9)

    def test_reproducible(self):
        fn = plain(1.0)
        assert estimate_lipschitz(fn, (0, 20), 5000, seed=9) == estimate_lipschitz(fn, (0, 20), 5000, seed=9)

    def test_degenerate_span(self):
        with pytest.raises(ValueError, match="degenerate"):
            estimate_lipschitz(plain(1.0), (1.0, 1.0), 10, 0)


class TestTaylorResiduals:
    def test_counterexample_equalities(self):
        traj = run_counterexample(AdamParams(alpha=0.5), 40)
        tr = taylor_residuals(traj, 0.5)
        assert np.all(tr.value_residual == 0.5)
        assert np.all(tr.value_bound == 0.5)
        assert np.all(tr.gradient_residual == 0.0)
        assert tr.all_hold and len(tr) == 40

    def test_quadratic_remainder(self):
        # f(x + s) - f(x) - f'(x) s = s**2 / 2 exactly for x**2 / 2 with dyadic iterates
        traj = gradient_descent_on_quadratic(steps=30)
        tr = taylor_residuals(traj, 0.5)
        assert np.array_equal(tr.value_residual, tr.steps**2 / 2)

    def test_missing_values(self):
        n = 3
        traj = Trajectory(k=np.arange(n), x=np.arange(n), f=[0, math.nan, 0], g=np.ones(n), m=np.ones(n), v=np.ones(n))
        with pytest.raises(ValueError, match="missing"):
            taylor_residuals(traj, 1.0)

    def test_needs_two_records(self):
        traj = Trajectory(k=[0], x=[0], f=[0], g=[0], m=[0], v=[0])
        with pytest.raises(ValueError):
            taylor_residuals(traj, 1.0)


class TestLowerBound:
    def test_unit_alpha(self):
        assert scan_lower_bound(plain(1.0), (0.0, 20.0), 10_000) == pytest.approx(-0.096225, abs=1e-6)

    def test_half_alpha(self):
        assert scan_lower_bound(plain(0.5), (0.0, 10.0), 10_000) == pytest.approx(-0.0481125, abs=1e-6)

    def test_linear(self):
        assert scan_lower_bound(LinearFunction(-1.0), (-3.0, 0.0), 100) == 0.0

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
    def test_doubling_alpha_doubles_minimum(self, alpha):
        lo = scan_lower_bound(plain(alpha), (0.0, 20 * alpha), 10_000)
        hi = scan_lower_bound(plain(2 * alpha), (0.0, 40 * alpha), 10_000)
        assert hi == pytest.approx(2 * lo, rel=1e-9)
        assert lo == pytest.approx(lower_bound_constant(alpha), abs=1e-12)


class TestFiniteDifferenceAudit:
    def test_counterexample(self):
        assert finite_difference_audit(plain(1.0), (-1.0, 20.0), 1000, 1e-6, seed=0) <= 1e-8

    def test_linear_branch(self):
        assert finite_difference_audit(LinearFunction(-1.0), (-5.0, 0.0), 1000, 1e-3, seed=0) <= 1e-12

    def test_kinks_are_reported(self):
        # central differences straddling a kink are off by O(h)
        err = finite_difference_audit(plain(1.0), (-1.0, 20.0), 20_000, 1e-3, seed=0, min_knot_distance=0.0)
        assert 1e-5 < err <= 6 * 1e-3

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_difference_audit(plain(1.0), (0, 1), 10, 0.0)


class TestReport:
    def test_json_schema(self):
        report = certify(1.0, 200, seed=3)
        data = json.loads(report.to_json())
        assert report.passed and data["passed"] is True
        for key in ("lipschitz_estimate", "lipschitz_bound", "lower_bound_estimate", "max_abs_gradient"):
            assert isinstance(data[key], str)
            float(data[key])
        assert data["divergence"]["verdict"] == "Diverges"
        assert float(data["divergence"]["min_abs_g"]) == 1.0
        assert data["taylor_residuals"]["num_steps"] == 200
        assert len(data["taylor_residuals"]["pairs"]) == 200
        assert float(data["lipschitz_estimate"]) <= float(data["lipschitz_bound"]) * (1 + 1e-9)
        # the bound |f'| <= L is not tight: max |f'| is 1 at the knots
        assert float(data["max_abs_gradient"]) == 1.0

    def test_reproducible(self):
        assert certify(0.5, 100, seed=4).to_json() == certify(0.5, 100, seed=4).to_json()

    def test_corrupted_trajectory_fails(self):
        traj = run_counterexample(AdamParams(alpha=1.0), 50)
        traj.g[17] = -0.99
        report = certify(1.0, 50, trajectory=traj)
        assert not report.passed
        assert "constant_gradient" in report.failed_checks
