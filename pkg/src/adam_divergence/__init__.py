"""Deterministic ADAM on a C^1 counterexample with Lipschitz gradient.

Modules:

* :mod:`~adam_divergence.optimizer`: the ADAM recurrence and its eps variants
* :mod:`~adam_divergence.functions`: piecewise cubic Hermite functions and the counterexample
* :mod:`~adam_divergence.harness`: runs, sweeps, trajectory files
* :mod:`~adam_divergence.diagnostics`: divergence, Lipschitz, Taylor and lower-bound checks
* :mod:`~adam_divergence.verification`: the combined certificate behind ``verify``
"""
from .diagnostics import (
    DiagnosticsReport,
    Verdict,
    divergence_verdict,
    estimate_lipschitz,
    finite_difference_audit,
    scan_lower_bound,
    taylor_residuals,
)
from .functions import (
    CounterexampleSpec,
    DifferentiableFunction,
    LinearFunction,
    PiecewiseHermite,
    QuadraticFunction,
    build_counterexample,
    counterexample_closed_form,
    evaluate,
    hermite_build,
    second_derivative,
)
from .harness import (
    GridSpec,
    SweepResult,
    Trajectory,
    export_trajectory,
    load_trajectory,
    run,
    run_counterexample,
    sweep,
)
from .optimizer import AdamParams, AdamState, Variant, adam_init, adam_step, step_sizes
from .verification import certify

__version__ = "0.1.0"
