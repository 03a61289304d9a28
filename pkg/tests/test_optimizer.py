import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from adam_divergence.harness import run_counterexample
from adam_divergence.optimizer import (
    AdamParams,
    AdamState,
    Variant,
    adam_init,
    adam_step,
    scalar_step,
    step_sizes,
)

betas = st.floats(min_value=0.0, max_value=1.0, exclude_max=True)
alphas = st.floats(min_value=1e-4, max_value=1e3)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"alpha": 0.0}, "alpha must be positive"),
            ({"alpha": -1.0}, "alpha must be positive"),
            ({"alpha": 1.0, "beta1": 1.0}, "beta1"),
            ({"alpha": 1.0, "beta2": -0.1}, "beta2"),
            ({"alpha": 1.0, "variant": "eps-inside", "epsilon": 0.0}, "epsilon"),
            ({"alpha": math.nan}, "finite"),
        ],
    )
    def test_rejects_invalid(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            AdamParams(**kwargs)

    def test_pure_ignores_epsilon(self):
        assert AdamParams(alpha=1.0, epsilon=0.0).variant is Variant.PURE

    def test_dict_round_trip(self):
        p = AdamParams(alpha=0.25, beta1=0.3, beta2=0.6, variant="eps-outside", epsilon=1e-8)
        assert AdamParams.from_dict(p.to_dict()) == p


class TestInit:
    @pytest.mark.parametrize("b1, b2", [(0.0, 0.0), (0.9, 0.9), (0.3, 0.99)])
    def test_counterexample_seed(self, b1, b2):
        s = adam_init([0.0], [-1.0], AdamParams(alpha=1.0, beta1=b1, beta2=b2))
        assert s.m.tolist() == [-1.0] and s.v.tolist() == [1.0] and s.k == 0 and s.initialized

    def test_zero_gradient_seeds_zero_moments(self):
        s = adam_init([5.0], [0.0], AdamParams(alpha=1.0))
        assert s.m.tolist() == [0.0] and s.v.tolist() == [0.0]

    def test_componentwise_square(self):
        s = adam_init([0.0, 0.0], [-1.0, 2.0], AdamParams(alpha=1.0))
        assert s.m.tolist() == [-1.0, 2.0] and s.v.tolist() == [1.0, 4.0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            adam_init([0.0, 1.0], [1.0], AdamParams(alpha=1.0))

    def test_non_finite_gradient(self):
        with pytest.raises(ValueError, match="non-finite"):
            adam_init([0.0], [math.inf], AdamParams(alpha=1.0))

    @given(b1=betas, b2=betas, g0=st.floats(-1e6, 1e6).filter(lambda g: abs(g) > 1e-100))
    def test_first_step_sees_seed(self, b1, b2, g0):
        # beta*a + (1-beta)*a == a, so m_0 = g_0 and v_0 = g_0**2
        p = AdamParams(alpha=1.0, beta1=b1, beta2=b2)
        s = adam_step(adam_init([0.0], [g0], p), [g0], p)
        assert s.m[0] == pytest.approx(g0, rel=4e-16, abs=0.0)
        assert s.v[0] == pytest.approx(g0 * g0, rel=4e-16, abs=0.0)


class TestStep:
    def test_counterexample_step(self):
        p = AdamParams(alpha=0.5, beta1=0.9, beta2=0.9)
        s = AdamState(x=np.array([0.0]), m=np.array([-1.0]), v=np.array([1.0]), k=0)
        s = adam_step(s, [-1.0], p)
        assert (s.x[0], s.m[0], s.v[0], s.k) == (0.5, -1.0, 1.0, 1)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("b1, b2", [(0.0, 0.0), (0.9, 0.99)])
    def test_eps_outside_hand_value(self, alpha, b1, b2):
        # m'=-1, v'=1: denominator eps + sqrt(1) = 2
        p = AdamParams(alpha=alpha, beta1=b1, beta2=b2, variant=Variant.EPS_OUTSIDE, epsilon=1.0)
        s = AdamState(x=np.array([3.0]), m=np.array([-1.0]), v=np.array([1.0]))
        assert adam_step(s, [-1.0], p).x[0] == 3.0 + alpha / 2

    def test_eps_inside_hand_value(self):
        p = AdamParams(alpha=1.0, variant=Variant.EPS_INSIDE, epsilon=3.0)
        s = AdamState(x=np.array([0.0]), m=np.array([-1.0]), v=np.array([1.0]))
        assert adam_step(s, [-1.0], p).x[0] == 0.5  # 1 / sqrt(3 + 1)

    def test_zero_second_moment_raises(self):
        p = AdamParams(alpha=1.0)
        s = adam_init([1.0, 2.0], [1.0, 0.0], p)
        with pytest.raises(ZeroDivisionError, match="component 1"):
            adam_step(s, [1.0, 0.0], p)

    def test_eps_variant_tolerates_zero_gradient(self):
        p = AdamParams(alpha=1.0, variant=Variant.EPS_OUTSIDE, epsilon=1e-8)
        s = adam_step(adam_init([1.0], [0.0], p), [0.0], p)
        assert s.x[0] == 1.0

    def test_rejects_wrong_dimension_and_unseeded(self):
        p = AdamParams(alpha=1.0)
        s = adam_init([0.0, 0.0], [1.0, 1.0], p)
        with pytest.raises(ValueError):
            adam_step(s, [1.0], p)
        raw = AdamState(x=np.zeros(1), m=np.zeros(1), v=np.zeros(1), initialized=False)
        with pytest.raises(ValueError, match="adam_init"):
            adam_step(raw, [1.0], p)

    def test_state_shape_validation(self):
        with pytest.raises(ValueError):
            AdamState(x=np.zeros(2), m=np.zeros(1), v=np.zeros(1))

    def test_does_not_mutate_input(self):
        p = AdamParams(alpha=1.0)
        s = adam_init([0.0], [-1.0], p)
        adam_step(s, [-1.0], p)
        assert s.x[0] == 0.0 and s.k == 0


@settings(max_examples=200)
@given(
    b1=betas,
    b2=betas,
    alpha=alphas,
    x=st.floats(-1e3, 1e3),
    m=st.floats(-10, 10),
    v=st.floats(1e-6, 10),
    g=st.floats(-10, 10),
    variant=st.sampled_from(list(Variant)),
)
def test_scalar_step_is_bit_identical_to_vector_step(b1, b2, alpha, x, m, v, g, variant):
    p = AdamParams(alpha=alpha, beta1=b1, beta2=b2, variant=variant, epsilon=1e-8 if variant is not Variant.PURE else 0.0)
    assume(variant is not Variant.PURE or b2 * v + (1.0 - b2) * (g * g) > 0.0)
    s = adam_step(AdamState(x=np.array([x]), m=np.array([m]), v=np.array([v])), [g], p)
    assert scalar_step(x, m, v, g, p) == (s.x[0], s.m[0], s.v[0])


@settings(max_examples=100, deadline=None)
@given(b1=betas, b2=betas, alpha=alphas)
def test_counterexample_moments_are_fixed_points(b1, b2, alpha):
    p = AdamParams(alpha=alpha, beta1=b1, beta2=b2)
    s = adam_init([0.0], [-1.0], p)
    for _ in range(50):
        prev = s.x[0]
        s = adam_step(s, [-1.0], p)
        assert s.m[0] == -1.0 and s.v[0] == 1.0
        # the realised step is alpha up to the rounding of the new iterate
        assert abs((s.x[0] - prev) - alpha) <= np.spacing(max(s.x[0], alpha))


def test_componentwise_equals_independent_runs():
    rng = np.random.default_rng(3)
    p = AdamParams(alpha=0.1, beta1=0.8, beta2=0.95)
    grads = rng.normal(size=(40, 3))
    full = adam_init(np.zeros(3), grads[0], p)
    singles = [adam_init([0.0], [grads[0, i]], p) for i in range(3)]
    for g in grads:
        full = adam_step(full, g, p)
        singles = [adam_step(s, [g[i]], p) for i, s in enumerate(singles)]
    for i, s in enumerate(singles):
        assert (full.x[i], full.m[i], full.v[i]) == (s.x[0], s.m[0], s.v[0])


@given(c=st.floats(min_value=1e-3, max_value=1e3), sign=st.sampled_from([-1.0, 1.0]), b1=betas, b2=betas)
def test_constant_gradient_step_depends_on_sign_only(c, sign, b1, b2):
    p = AdamParams(alpha=0.5, beta1=b1, beta2=b2)
    g = sign * c
    s = adam_init([0.0], [g], p)
    for _ in range(5):
        prev = s.x[0]
        s = adam_step(s, [g], p)
        assert s.x[0] - prev == pytest.approx(-0.5 * sign, rel=4 * 2.0**-52)


@pytest.mark.parametrize("c", [-0.25, -2.0, -8.0])
def test_power_of_two_gradient_levels_step_exactly(c):
    p = AdamParams(alpha=0.5, beta1=0.9, beta2=0.9)
    s = adam_init([0.0], [c], p)
    for k in range(1, 6):
        s = adam_step(s, [c], p)
        assert s.x[0] == 0.5 * k


@pytest.mark.parametrize("eps", [1e-8, 0.5])
def test_eps_variant_steps_on_unit_moments(eps):
    for variant, expected in [
        (Variant.EPS_INSIDE, 1.0 / math.sqrt(eps + 1.0)),
        (Variant.EPS_OUTSIDE, 1.0 / (eps + 1.0)),
    ]:
        p = AdamParams(alpha=1.0, variant=variant, epsilon=eps)
        s = adam_init([0.0], [-1.0], p)
        xs = [0.0]
        for _ in range(20):
            s = adam_step(s, [-1.0], p)
            xs.append(s.x[0])
        steps = np.diff(xs)
        assert steps == pytest.approx(expected, rel=1e-15)
        assert np.all(np.abs(steps - steps[0]) <= np.spacing(np.array(xs[1:])))


class TestStepSizes:
    def test_counterexample(self):
        traj = run_counterexample(AdamParams(alpha=0.1), num_steps=4)
        s = step_sizes(traj)
        assert len(s) == 4
        assert np.all(np.abs(s - 0.1) <= np.spacing(traj.x[1:]))

    def test_single_record(self):
        with pytest.raises(ValueError):
            step_sizes(SimpleNamespace(x=[1.0]))

    def test_gradient_descent_on_quadratic(self):
        # x <- x - 0.5 x from x = 1
        xs = [1.0]
        for _ in range(5):
            xs.append(xs[-1] - 0.5 * xs[-1])
        assert step_sizes(SimpleNamespace(x=xs)).tolist() == [-0.5, -0.25, -0.125, -0.0625, -0.03125]
