"""Trial-level Monte Carlo of the two-probe protocol.

Each trial realizes the full measurement story once:

1. The sigma_1 and sigma_3 devices probe at independent random times
   ``t1`` and ``t3`` inside the window.
2. If the sigma_3 probing comes first (or the times tie in floating point),
   it leaves the sigma_3-eigenstate input unchanged; the later sigma_1
   probing then randomizes the state, and the final macroscopic sigma_3
   readout is a fair coin.
3. If the sigma_1 probing comes first and the gap ``y = |t1 - t3|`` is at
   least the reduction time, its collapse completes undisturbed and the
   readout is again a fair coin.
4. If the sigma_1 probing comes first and ``y`` is shorter than the
   reduction time, the sigma_3 probing interrupts the collapse at progress
   ``x = y / dt_reduction`` and the readout yields +1 with probability
   ``|c_plus(x)|^2``.  Starting from |-> instead of |+> flips the outcome.

The final readout happens after the window closes, so the second probing's
own collapse always completes; there is no third interruption.

Reproducibility contract: every trial draws its randomness from a
counter-based substream keyed by ``(seed, trial_index)`` (one Philox counter
block of four 64-bit draws per trial: t1, t3, outcome, spare).  Ensemble
results are therefore bitwise independent of chunking and of the number of
worker threads, and a single trial can be replayed in isolation.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.random import Generator, Philox

from .model import ExperimentConfig
from .profiles import ReductionProfile

__all__ = [
    "ProbingModel",
    "TrialRecord",
    "EnsembleStats",
    "GapHistogram",
    "uniform_probing",
    "exponential_probing",
    "trial_substream",
    "sample_probing_times",
    "run_trial",
    "run_ensemble",
    "empirical_gap_histogram",
]

# Philox draws consumed per trial; one 4-word counter block.
DRAWS_PER_TRIAL = 4

DEFAULT_CHUNK_SIZE = 1 << 20

_TRIAL_LOG_FIELDS = ("t1", "t3", "sigma1_first", "y", "overlapped", "interruption_x", "outcome")


@dataclass(frozen=True)
class ProbingModel:
    """Distribution of a single device's probing time on [0, window].

    ``uniform`` has constant density ``1/window``.  ``truncated_exponential``
    renormalizes ``exp(-t / decay_time)`` on the window, mimicking probing by
    spontaneous decay; for ``decay_time >> window`` it approaches uniform.
    """

    kind: str
    window: float
    decay_time: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated_exponential"):
            raise ValueError(f"unknown probing kind {self.kind!r}")
        if not self.window > 0:
            raise ValueError(f"window must be > 0, got {self.window}")
        if self.kind == "truncated_exponential":
            if self.decay_time is None or not self.decay_time > 0:
                raise ValueError("truncated_exponential needs decay_time > 0")
        elif self.decay_time is not None:
            raise ValueError("decay_time only applies to the truncated_exponential kind")

    def quantile(self, u):
        """Map uniform draws in [0, 1) to probing times in [0, window)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            t = u * self.window
        else:
            scale = -math.expm1(-self.window / self.decay_time)
            t = -self.decay_time * np.log1p(-u * scale)
        return t if t.ndim else float(t)


def uniform_probing(window: float = 1.0) -> ProbingModel:
    return ProbingModel(kind="uniform", window=window)


def exponential_probing(window: float, decay_time: float) -> ProbingModel:
    return ProbingModel(kind="truncated_exponential", window=window, decay_time=decay_time)


@dataclass(frozen=True)
class TrialRecord:
    """Everything observable about a single realization."""

    t1: float
    t3: float
    sigma1_first: bool
    gap: float
    overlapped: bool
    interruption_x: Optional[float]
    outcome: int


@dataclass(frozen=True)
class EnsembleStats:
    """Counting summary of an ensemble of trials."""

    n_plus: int
    n_minus: int
    delta_n: int
    empirical_p3_plus: float
    std_error: float
    overlap_fraction: float
    sigma1_first_fraction: float

    @property
    def trials(self) -> int:
        return self.n_plus + self.n_minus

    @classmethod
    def from_counts(cls, n_plus: int, n_minus: int, n_overlap: int, n_sigma1_first: int):
        total = n_plus + n_minus
        p_hat = n_plus / total
        return cls(
            n_plus=n_plus,
            n_minus=n_minus,
            delta_n=n_plus - n_minus,
            empirical_p3_plus=p_hat,
            std_error=math.sqrt(p_hat * (1.0 - p_hat) / total),
            overlap_fraction=n_overlap / total,
            sigma1_first_fraction=n_sigma1_first / total,
        )

    def to_kv_text(self) -> str:
        """Flat key=value block; stable across runs for diffing."""
        lines = [
            f"trials = {self.trials}",
            f"n_plus = {self.n_plus}",
            f"n_minus = {self.n_minus}",
            f"delta_n = {self.delta_n}",
            f"empirical_p3_plus = {self.empirical_p3_plus!r}",
            f"std_error = {self.std_error!r}",
            f"overlap_fraction = {self.overlap_fraction!r}",
            f"sigma1_first_fraction = {self.sigma1_first_fraction!r}",
        ]
        return "\n".join(lines)


@dataclass(frozen=True)
class GapHistogram:
    """Binned distribution of the probing-time gap ``y = |t1 - t3|``."""

    bin_edges: np.ndarray
    counts: np.ndarray
    masses: np.ndarray
    expected_masses: Optional[np.ndarray]
    samples: int


def trial_substream(seed: int, trial_index: int) -> Generator:
    """Independent generator for one trial, keyed by (seed, trial_index).

    Positions a Philox counter at the trial's own 4-draw block, so the
    stream a trial sees never depends on how many trials ran before it.
    """
    if trial_index < 0:
        raise ValueError(f"trial_index must be >= 0, got {trial_index}")
    return Generator(Philox(key=seed, counter=[trial_index, 0, 0, 0]))


def _trial_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform draws for trials [start, start+count), shaped (count, 4)."""
    gen = Generator(Philox(key=seed, counter=[start, 0, 0, 0]))
    return gen.random((count, DRAWS_PER_TRIAL))


def sample_probing_times(
    model: ProbingModel,
    rng: Generator,
    model_sigma3: Optional[ProbingModel] = None,
) -> Tuple[float, float]:
    """Draw the two probing times (sigma_1 device first in the tuple)."""
    u = rng.random(2)
    second = model_sigma3 if model_sigma3 is not None else model
    return float(model.quantile(u[0])), float(second.quantile(u[1]))


def _resolve_trials(
    config: ExperimentConfig,
    model: ProbingModel,
    model_sigma3: Optional[ProbingModel],
    profile: ReductionProfile,
    u: np.ndarray,
):
    """Turn per-trial uniforms into outcomes; the single source of branch logic.

    ``u`` has one row per trial: columns are the t1 draw, the t3 draw and the
    outcome draw (the fourth column is reserved).  Returns the raw per-trial
    arrays; callers reduce them to counts or records.
    """
    t1 = model.quantile(u[:, 0])
    t3 = (model_sigma3 if model_sigma3 is not None else model).quantile(u[:, 1])
    gap = np.abs(t1 - t3)
    # Strict comparison: an exact floating-point tie counts as sigma_3-first,
    # which lands in the fair-coin branch either way.
    sigma1_first = t1 < t3
    dt_red = config.reduction_time
    overlapped = sigma1_first & (gap < dt_red) if dt_red > 0 else np.zeros_like(sigma1_first)

    p_plus = np.full(u.shape[0], 0.5)
    if overlapped.any():
        x = gap[overlapped] / dt_red
        p_plus[overlapped] = profile(x)

    base = np.where(u[:, 2] < p_plus, 1, -1)
    outcome = config.initial_sign * base
    return t1, t3, sigma1_first, gap, overlapped, outcome


def run_trial(
    config: ExperimentConfig,
    model: ProbingModel,
    profile: ReductionProfile,
    rng: Generator,
    model_sigma3: Optional[ProbingModel] = None,
) -> TrialRecord:
    """Realize one trial using the next draws from ``rng``.

    Pass ``trial_substream(config.seed, i)`` to replay exactly the trial the
    ensemble runner would have produced at index ``i``.
    """
    u = rng.random(DRAWS_PER_TRIAL - 1).reshape(1, -1)
    t1, t3, s1f, gap, ov, outcome = _resolve_trials(config, model, model_sigma3, profile, u)
    overlapped = bool(ov[0])
    return TrialRecord(
        t1=float(t1[0]),
        t3=float(t3[0]),
        sigma1_first=bool(s1f[0]),
        gap=float(gap[0]),
        overlapped=overlapped,
        interruption_x=float(gap[0] / config.reduction_time) if overlapped else None,
        outcome=int(outcome[0]),
    )


def _chunk_counts(args):
    config, model, model_sigma3, profile, start, count = args
    u = _trial_uniforms(config.seed, start, count)
    _, _, s1f, _, ov, outcome = _resolve_trials(config, model, model_sigma3, profile, u)
    n_plus = int(np.count_nonzero(outcome == 1))
    return n_plus, count - n_plus, int(np.count_nonzero(ov)), int(np.count_nonzero(s1f))


def run_ensemble(
    config: ExperimentConfig,
    model: ProbingModel,
    profile: ReductionProfile,
    *,
    model_sigma3: Optional[ProbingModel] = None,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    trial_log: Optional[str] = None,
) -> EnsembleStats:
    """Run ``config.trials`` independent trials and reduce them to counts.

    Trials are processed in chunks; thanks to the per-trial counter streams
    the result is bitwise identical for any ``workers`` or ``chunk_size``.
    Count merging is a plain integer sum, so the reduction is associative
    and order-insensitive.

    ``trial_log`` optionally writes one CSV row per trial.  The log is
    written in trial order and forces sequential chunk processing; leave it
    off for large ensembles.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    total = config.trials
    tasks = [
        (config, model, model_sigma3, profile, start, min(chunk_size, total - start))
        for start in range(0, total, chunk_size)
    ]

    if trial_log is not None:
        with open(trial_log, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_TRIAL_LOG_FIELDS)
            counts = [0, 0, 0, 0]
            for task in tasks:
                start, count = task[4], task[5]
                u = _trial_uniforms(config.seed, start, count)
                t1, t3, s1f, gap, ov, outcome = _resolve_trials(
                    config, model, model_sigma3, profile, u
                )
                n_plus = int(np.count_nonzero(outcome == 1))
                counts[0] += n_plus
                counts[1] += count - n_plus
                counts[2] += int(np.count_nonzero(ov))
                counts[3] += int(np.count_nonzero(s1f))
                dt_red = config.reduction_time
                for i in range(count):
                    writer.writerow(
                        (
                            repr(float(t1[i])),
                            repr(float(t3[i])),
                            int(s1f[i]),
                            repr(float(gap[i])),
                            int(ov[i]),
                            repr(float(gap[i] / dt_red)) if ov[i] else "",
                            int(outcome[i]),
                        )
                    )
        return EnsembleStats.from_counts(*counts)

    if workers == 1:
        results = map(_chunk_counts, tasks)
        merged = [0, 0, 0, 0]
        for res in results:
            for k in range(4):
                merged[k] += res[k]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            merged = [0, 0, 0, 0]
            for res in pool.map(_chunk_counts, tasks):
                for k in range(4):
                    merged[k] += res[k]
    return EnsembleStats.from_counts(*merged)


def empirical_gap_histogram(
    model: ProbingModel,
    samples: int,
    bins: int = 20,
    seed: int = 0,
    model_sigma3: Optional[ProbingModel] = None,
) -> GapHistogram:
    """Sample probing-time pairs and bin the gap ``y = |t1 - t3|``.

    For the uniform kind the exact per-bin masses of the triangular gap
    density are attached for comparison; the truncated-exponential gap
    density has no closed form here, so ``expected_masses`` is None.
    """
    if samples < 10_000:
        raise ValueError(f"need at least 10000 samples, got {samples}")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    second = model_sigma3 if model_sigma3 is not None else model
    window = max(model.window, second.window)
    gen = Generator(Philox(key=seed))
    counts = np.zeros(bins, dtype=np.int64)
    edges = np.linspace(0.0, window, bins + 1)
    remaining = samples
    while remaining > 0:
        count = min(remaining, DEFAULT_CHUNK_SIZE)
        u = gen.random((count, 2))
        y = np.abs(model.quantile(u[:, 0]) - second.quantile(u[:, 1]))
        hist, _ = np.histogram(y, bins=edges)
        counts += hist
        remaining -= count

    expected = None
    if model.kind == "uniform" and second.kind == "uniform" and model.window == second.window:
        # CDF of the gap is 2(y/w) - (y/w)^2; bin mass is the CDF increment.
        rel = edges / model.window
        cdf = 2.0 * rel - rel * rel
        expected = np.diff(cdf)
    return GapHistogram(
        bin_edges=edges,
        counts=counts,
        masses=counts / samples,
        expected_masses=expected,
        samples=samples,
    )
