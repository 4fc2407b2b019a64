"""Statistical power of the count-difference signal against the null.

Under instantaneous collapse every trial is a fair coin, so the observed
count difference fluctuates around zero with scale sqrt(N) while the
finite-reduction signal grows like N.  These helpers size an experiment,
score an observed difference against the fair-coin null, and convert a null
result into an upper bound on the reduction fraction tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from scipy.stats import binom

from . import model

__all__ = [
    "Significance",
    "PowerReport",
    "EXACT_BINOMIAL_MAX",
    "fluctuation_scale",
    "trial_threshold",
    "min_trials",
    "significance",
    "tau_upper_bound",
    "worst_case_margin",
    "power_report",
]

# Below this trial count the null p-value uses the exact symmetric binomial;
# above it the normal tail is indistinguishable at the precision reported.
EXACT_BINOMIAL_MAX = 100_000

_MIN_P = 5e-324  # smallest subnormal; keeps p-values in (0, 1]


class Significance(NamedTuple):
    z_score: float
    p_value_two_sided: float


def fluctuation_scale(trials: int) -> float:
    """Root-mean-square of the null count difference, sqrt(N)."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    return math.sqrt(trials)


def trial_threshold(tau: float, gamma: float) -> float:
    """Trial count at which signal and fluctuation scales meet.

    ``[1 / (tau * (2*gamma - 1))]^2``; infinite when the signal vanishes
    (tau = 0 or gamma = 1/2).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    denom = tau * (2.0 * gamma - 1.0)
    if denom == 0.0:
        return math.inf
    return (1.0 / denom) ** 2


def min_trials(tau: float, gamma: float, safety_factor: float = 1.0) -> Optional[int]:
    """Trials needed for a reliable detection, or None if no finite count works.

    ``safety_factor`` operationalizes the "much greater than" in the design
    condition; 1.0 gives the bare threshold, and the worked example in this
    package's reports uses roughly a factor 12 (800,000 against 65,000).
    """
    if safety_factor < 1.0:
        raise ValueError(f"safety_factor must be >= 1, got {safety_factor}")
    threshold = trial_threshold(tau, gamma)
    if math.isinf(threshold):
        return None
    return math.ceil(safety_factor * threshold)


def _p_two_sided(delta_n: float, trials: int) -> float:
    """Two-sided null probability of a count difference at least this large."""
    mag = abs(delta_n)
    if mag == 0.0:
        return 1.0
    if trials < EXACT_BINOMIAL_MAX:
        # n_plus = (N + delta) / 2 under the fair-coin null.
        k = math.ceil((trials + mag) / 2.0)
        p = 2.0 * float(binom.sf(k - 1, trials, 0.5))
    else:
        p = math.erfc(mag / math.sqrt(trials) / math.sqrt(2.0))
    return min(max(p, _MIN_P), 1.0)


def significance(observed_delta_n: int, trials: int) -> Significance:
    """Score an observed count difference against the fair-coin null.

    The z-score is ``delta_n / sqrt(N)``.  The two-sided p-value uses the
    exact symmetric binomial below EXACT_BINOMIAL_MAX trials and the normal
    tail above; the one-sided value is half the two-sided one by symmetry.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if abs(observed_delta_n) > trials:
        raise ValueError(
            f"|observed_delta_n| cannot exceed the trial count, got "
            f"{observed_delta_n} of {trials}"
        )
    z = observed_delta_n / math.sqrt(trials)
    return Significance(z, _p_two_sided(observed_delta_n, trials))


def tau_upper_bound(trials: int) -> float:
    """Order-of-magnitude bound on tau from a null result at N trials.

    A signal with tau above ``N**-0.5`` would have cleared the fluctuation
    scale, so a null outcome caps tau there (unit proportionality constant).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    return trials**-0.5

def worst_case_margin(expected_delta_n: float, trials: int) -> float:
    """Expected difference minus one full fluctuation scale.

    The pessimistic reading of a run where fluctuations partially cancel
    the signal.
    """
    return expected_delta_n - fluctuation_scale(trials)


@dataclass(frozen=True)
class PowerReport:
    """Planning summary for one (tau, gamma, N) design point."""

    tau: float
    gamma: float
    trials: int
    n_required_strict: Optional[int]
    fluctuation_scale: float
    expected_delta_n: float
    z_score: float
    p_value_two_sided: float
    tau_upper_bound: float

    def __post_init__(self):
        if not 0.0 < self.p_value_two_sided <= 1.0:
            raise ValueError(f"p-value must lie in (0, 1], got {self.p_value_two_sided}")

    def to_kv_text(self) -> str:
        n_req = "none" if self.n_required_strict is None else str(self.n_required_strict)
        lines = [
            f"tau = {self.tau!r}",
            f"gamma = {self.gamma!r}",
            f"trials = {self.trials}",
            f"n_required_strict = {n_req}",
            f"fluctuation_scale = {self.fluctuation_scale!r}",
            f"expected_delta_n = {self.expected_delta_n!r}",
            f"worst_case_margin = {worst_case_margin(self.expected_delta_n, self.trials)!r}",
            f"z_score = {self.z_score!r}",
            f"p_value_two_sided = {self.p_value_two_sided!r}",
            f"p_value_one_sided = {0.5 * self.p_value_two_sided!r}",
            f"tau_upper_bound = {self.tau_upper_bound!r}",
        ]
        return "\n".join(lines)

    @staticmethod
    def csv_header() -> str:
        return (
            "tau,gamma,trials,n_required_strict,fluctuation_scale,"
            "expected_delta_n,z_score,p_value_two_sided,tau_upper_bound"
        )

    def to_csv_row(self) -> str:
        n_req = "" if self.n_required_strict is None else str(self.n_required_strict)
        return (
            f"{self.tau!r},{self.gamma!r},{self.trials},{n_req},"
            f"{self.fluctuation_scale!r},{self.expected_delta_n!r},"
            f"{self.z_score!r},{self.p_value_two_sided!r},{self.tau_upper_bound!r}"
        )


def power_report(
    tau: float,
    gamma: float,
    trials: int,
    observed_delta_n: Optional[int] = None,
) -> PowerReport:
    """Build the planning report for a design point.

    By default the z-score and p-value refer to the expected count
    difference (how strong the signal would look); pass ``observed_delta_n``
    to score an actual run instead.
    """
    expected = model.expected_delta_n(tau, gamma, trials)
    scored = float(observed_delta_n) if observed_delta_n is not None else expected
    z = scored / math.sqrt(trials)
    return PowerReport(
        tau=tau,
        gamma=gamma,
        trials=trials,
        n_required_strict=min_trials(tau, gamma, 1.0),
        fluctuation_scale=fluctuation_scale(trials),
        expected_delta_n=expected,
        z_score=z,
        p_value_two_sided=_p_two_sided(scored, trials),
        tau_upper_bound=tau_upper_bound(trials),
    )
