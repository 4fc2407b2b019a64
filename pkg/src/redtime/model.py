"""Closed-form predictions for the two-probe measurement with finite reduction time.

Two incompatible spin probings land at independent random times inside a
shared window of duration ``dt_window``.  If the collapse started by the
first probing takes a non-zero time ``dt_reduction``, the second probing
occasionally interrupts it, and the ensemble of sigma_3 outcomes acquires a
small polarization.  Everything observable depends on just two dimensionless
numbers:

* ``tau = dt_reduction / dt_window``, the chance scale for an interruption,
* ``gamma``, the interruption-weighted mean of the reduction trajectory
  (see :mod:`redtime.profiles`).

The functions here are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExperimentConfig",
    "QubitMixedState",
    "AnalyticPrediction",
    "gap_density",
    "overlap_probability",
    "sigma3_bias",
    "rho_collapse",
    "rho_reduced",
    "expected_delta_n",
    "small_tau_delta_n",
    "analytic_prediction",
]

_MAX_SEED = 2**64


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one simulated counting experiment.

    ``window_duration`` and ``reduction_time`` are in the same (arbitrary)
    time unit; only their ratio ``tau`` enters the predictions.  The window
    is anchored at t=0: the model is invariant under time translation, so
    only probing-time gaps matter.
    """

    window_duration: float
    reduction_time: float
    trials: int
    initial_sign: int = +1
    seed: int = 0

    def __post_init__(self):
        if not self.window_duration > 0:
            raise ValueError(f"window_duration must be > 0, got {self.window_duration}")
        if not 0 <= self.reduction_time <= self.window_duration:
            raise ValueError(
                "reduction_time must lie in [0, window_duration], got "
                f"{self.reduction_time} with window {self.window_duration}"
            )
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.initial_sign not in (+1, -1):
            raise ValueError(f"initial_sign must be +1 or -1, got {self.initial_sign}")
        if not 0 <= self.seed < _MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def tau(self) -> float:
        """Reduction time as a fraction of the measurement window."""
        return self.reduction_time / self.window_duration


@dataclass(frozen=True)
class QubitMixedState:
    """Diagonal qubit mixture in the sigma_3 basis.

    The protocol never creates sigma_1/sigma_2 coherences in the ensemble
    (every trial ends in a sigma_3 eigenstate), so off-diagonal elements are
    structurally zero and only the two populations are stored.
    """

    p_plus: float
    p_minus: float

    def __post_init__(self):
        if not (0.0 <= self.p_plus <= 1.0 and 0.0 <= self.p_minus <= 1.0):
            raise ValueError(f"populations must lie in [0, 1], got {self}")
        if abs(self.p_plus + self.p_minus - 1.0) > 1e-12:
            raise ValueError(f"populations must sum to 1, got {self}")

    @property
    def sigma3_expectation(self) -> float:
        return self.p_plus - self.p_minus

    def swapped(self) -> "QubitMixedState":
        """Same mixture with the roles of |+> and |-> exchanged."""
        return QubitMixedState(self.p_minus, self.p_plus)


@dataclass(frozen=True)
class AnalyticPrediction:
    """Bundle of the closed-form quantities for one (tau, gamma, N) point."""

    tau: float
    gamma: float
    overlap_probability: float
    p3_plus: float
    expected_delta_n: float


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def gap_density(y, window_duration: float):
    """Probability density of the gap y between two uniform probing times.

    For two independent times uniform on ``[0, window_duration]`` the
    absolute separation ``y`` has density ``(2 / dt^2) * (dt - y)``:
    triangular, maximal at zero gap, vanishing at ``y = dt``.  Accepts
    scalars or arrays of ``y``.
    """
    if not window_duration > 0:
        raise ValueError(f"window_duration must be > 0, got {window_duration}")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > window_duration):
        raise ValueError(f"gap must lie in [0, {window_duration}]")
    out = (2.0 / window_duration**2) * (window_duration - y)
    return out if out.ndim else float(out)


def overlap_probability(tau: float) -> float:
    """Probability that the second probing lands inside the reduction.

    Equals the gap density integrated from 0 to ``tau * dt``, which for the
    uniform probing model is ``2*tau - tau**2``.
    """
    _check_tau(tau)
    return 2.0 * tau - tau * tau


def sigma3_bias(tau: float, gamma: float) -> float:
    """Polarization ``p_plus - p_minus`` of the finite-reduction mixture.

    ``(tau - tau^2/2) * (2*gamma - 1)``: zero for instantaneous collapse
    (tau = 0) and for trajectories indistinguishable from it (gamma = 1/2).
    """
    _check_tau(tau)
    _check_gamma(gamma)
    return (tau - 0.5 * tau * tau) * (2.0 * gamma - 1.0)


def rho_collapse() -> QubitMixedState:
    """Unpolarized mixture left by two completed incompatible probings."""
    return QubitMixedState(0.5, 0.5)


def rho_reduced(tau: float, gamma: float, initial_sign: int = +1) -> QubitMixedState:
    """Ensemble state when the reduction can be interrupted.

    For an initial |+> eigenstate the |+> population is
    ``(1 + (tau - tau^2/2) * (2*gamma - 1)) / 2``; starting from |-> swaps
    the two populations.
    """
    if initial_sign not in (+1, -1):
        raise ValueError(f"initial_sign must be +1 or -1, got {initial_sign}")
    bias = sigma3_bias(tau, gamma)
    state = QubitMixedState(0.5 * (1.0 + bias), 0.5 * (1.0 - bias))
    return state if initial_sign == +1 else state.swapped()


def expected_delta_n(tau: float, gamma: float, trials: int) -> float:
    """Expected count difference N(+) - N(-) over ``trials`` realizations."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    return sigma3_bias(tau, gamma) * trials


def small_tau_delta_n(tau: float, gamma: float, trials: int) -> float:
    """First-order-in-tau count difference, ``tau * (2*gamma - 1) * N``.

    Agrees with :func:`expected_delta_n` up to a relative difference of
    ``(tau/2) / (1 - tau/2)``.
    """
    _check_tau(tau)
    _check_gamma(gamma)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    return tau * (2.0 * gamma - 1.0) * trials


def analytic_prediction(
    tau: float, gamma: float, trials: int, initial_sign: int = +1
) -> AnalyticPrediction:
    """Collect every closed-form quantity for one parameter point."""
    state = rho_reduced(tau, gamma, initial_sign)
    return AnalyticPrediction(
        tau=tau,
        gamma=gamma,
        overlap_probability=overlap_probability(tau),
        p3_plus=state.p_plus,
        expected_delta_n=(state.p_plus - state.p_minus) * trials,
    )


def tau_from_times(window_duration: float, reduction_time: float) -> float:
    """Dimensionless reduction fraction from the two raw durations."""
    cfg = ExperimentConfig(window_duration, reduction_time, trials=1)
    return cfg.tau


def _overlap_probability_quadrature(tau: float, window_duration: float = 1.0) -> float:
    """Overlap probability recomputed by integrating the gap density.

    Cross-check helper: trapezoidal quadrature of :func:`gap_density` over
    ``[0, tau * dt]`` on a fine grid.  Exact for the triangular density up
    to float rounding because the integrand is linear.
    """
    _check_tau(tau)
    if tau == 0.0:
        return 0.0
    y = np.linspace(0.0, tau * window_duration, 2049)
    return float(np.trapezoid(gap_density(y, window_duration), y))
