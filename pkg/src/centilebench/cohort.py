"""Simulated antenatal cohorts.

Each subject is scheduled for one visit per interval; visit times are
uniform within the interval, log measurements follow the AR(1) process, and
attendance is an independent coin per visit. The latent value is kept for
every slot (missingness is a mask), so oracle tests can compare observed
subsets against the full process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GA_WINDOW, VISIT_INTERVAL_WEEKS, LognormalAR1Model, log_mean
from .numerics import RngStream, std_normal_quantile, _MIN_UNIFORM

__all__ = [
    "VisitSchedule",
    "Measurement",
    "Cohort",
    "PairSet",
    "generate_cohort",
    "lag1_pairs",
]

_DEFAULT_WINDOWS = tuple(
    (GA_WINDOW[0] + k * VISIT_INTERVAL_WEEKS, GA_WINDOW[0] + (k + 1) * VISIT_INTERVAL_WEEKS)
    for k in range(int((GA_WINDOW[1] - GA_WINDOW[0]) / VISIT_INTERVAL_WEEKS))
)


@dataclass(frozen=True)
class VisitSchedule:
    """Visit windows (half-open week intervals) and the attendance probability."""

    windows: tuple[tuple[float, float], ...] = _DEFAULT_WINDOWS
    attendance_prob: float = 0.8

    def __post_init__(self):
        object.__setattr__(
            self, "windows", tuple((float(a), float(b)) for a, b in self.windows)
        )
        if not self.windows:
            raise ValueError("schedule needs at least one window")
        for lo, hi in self.windows:
            if not lo < hi:
                raise ValueError(f"degenerate window ({lo}, {hi})")
        for (_, hi), (lo, _) in zip(self.windows, self.windows[1:]):
            if lo != hi:
                raise ValueError("windows must be ordered and contiguous")
        if not 0.0 < self.attendance_prob <= 1.0:
            raise ValueError(
                f"attendance_prob must lie in (0, 1], got {self.attendance_prob!r}"
            )

    @property
    def n_intervals(self) -> int:
        return len(self.windows)

    @property
    def span(self) -> tuple[float, float]:
        return (self.windows[0][0], self.windows[-1][1])


@dataclass(frozen=True)
class Measurement:
    """One scheduled measurement slot; ``observed`` marks clinic attendance."""

    subject_id: int
    interval_index: int
    time: float
    value: float
    observed: bool


@dataclass(frozen=True)
class PairSet:
    """Vectorized pairs of earlier/later observed measurements per subject."""

    subject_id: np.ndarray
    idx_prev: np.ndarray  # interval index of the earlier measurement
    idx_cur: np.ndarray
    t_prev: np.ndarray
    y_prev: np.ndarray
    t_cur: np.ndarray
    y_cur: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        """Interval-index difference, >= 1; 1 means adjacent intervals."""
        return self.idx_cur - self.idx_prev

    def __len__(self) -> int:
        return self.t_prev.size


@dataclass(frozen=True)
class Cohort:
    """A simulated cohort: per-subject times, latent values and attendance."""

    model: LognormalAR1Model
    schedule: VisitSchedule
    times: np.ndarray  # (n_subjects, n_intervals)
    values: np.ndarray  # (n_subjects, n_intervals), mmHg
    observed: np.ndarray  # (n_subjects, n_intervals), bool

    @property
    def n_subjects(self) -> int:
        return self.times.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.times.shape[1]

    def measurements(self) -> list[Measurement]:
        """All slots as records, ordered by subject then interval."""
        return [
            Measurement(
                subject_id=i,
                interval_index=j,
                time=float(self.times[i, j]),
                value=float(self.values[i, j]),
                observed=bool(self.observed[i, j]),
            )
            for i in range(self.n_subjects)
            for j in range(self.n_intervals)
        ]

    def observed_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values of observed measurements only."""
        mask = self.observed
        return self.times[mask], self.values[mask]

    def pair_set(self, max_gap: int | None = 1) -> PairSet:
        """Pairs of successive observed measurements on the same subject.

        With ``max_gap=1`` only pairs in adjacent intervals qualify and
        pairs spanning a missed visit are dropped; with ``max_gap=None``
        every consecutive pair of observed visits qualifies, whatever the
        gap.
        """
        subj, ia, ib = [], [], []
        for i in range(self.n_subjects):
            idx = np.nonzero(self.observed[i])[0]
            for a, b in zip(idx[:-1], idx[1:]):
                if max_gap is not None and b - a > max_gap:
                    continue
                subj.append(i)
                ia.append(int(a))
                ib.append(int(b))
        subj = np.asarray(subj, dtype=int)
        ia = np.asarray(ia, dtype=int)
        ib = np.asarray(ib, dtype=int)
        return PairSet(
            subject_id=subj,
            idx_prev=ia,
            idx_cur=ib,
            t_prev=self.times[subj, ia] if len(subj) else np.empty(0),
            y_prev=self.values[subj, ia] if len(subj) else np.empty(0),
            t_cur=self.times[subj, ib] if len(subj) else np.empty(0),
            y_cur=self.values[subj, ib] if len(subj) else np.empty(0),
        )

    def to_csv(self, path_or_file, metadata: dict | None = None) -> None:
        """Write all slots as CSV; metadata entries become '#' header lines."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", encoding="utf-8") if own else path_or_file
        try:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}: {val}\n")
            fh.write("subject_id,interval_index,time_weeks,value_mmhg,observed\n")
            for i in range(self.n_subjects):
                for j in range(self.n_intervals):
                    fh.write(
                        f"{i},{j},{float(self.times[i, j])!r},"
                        f"{float(self.values[i, j])!r},{int(self.observed[i, j])}\n"
                    )
        finally:
            if own:
                fh.close()


def generate_cohort(
    model: LognormalAR1Model,
    schedule: VisitSchedule,
    n_subjects: int,
    stream: RngStream,
) -> Cohort:
    """Simulate a cohort; bit-identical for identical streams.

    Subject i consumes the child stream ``stream.child(i)`` and draws
    3 * n_intervals uniforms: visit times, attendance coins, then the
    innovations of the latent AR(1) via the inverse normal CDF. The latent
    start is stationary, so every marginal is exactly N(mu(t), sigma^2) on
    the log scale, and missingness is a mask applied afterwards.
    """
    if n_subjects < 1:
        raise ValueError("n_subjects must be at least 1")
    lo_w, hi_w = schedule.span
    if lo_w < model.window[0] or hi_w > model.window[1]:
        raise ValueError(
            f"schedule span {schedule.span} exceeds the model window {model.window}"
        )
    k = schedule.n_intervals
    uniforms = np.empty((n_subjects, 3 * k))
    for i in range(n_subjects):
        uniforms[i] = stream.child(i).generator().random(3 * k)

    lows = np.array([w[0] for w in schedule.windows])
    widths = np.array([w[1] - w[0] for w in schedule.windows])
    times = lows + widths * uniforms[:, :k]
    observed = uniforms[:, k : 2 * k] < schedule.attendance_prob

    innov = std_normal_quantile(np.maximum(uniforms[:, 2 * k :], _MIN_UNIFORM))
    z = np.empty((n_subjects, k))
    z[:, 0] = innov[:, 0]
    carry = np.sqrt(1.0 - model.rho * model.rho)
    for j in range(1, k):
        z[:, j] = model.rho * z[:, j - 1] + carry * innov[:, j]
    values = np.exp(log_mean(model, times) + model.sigma * z)

    return Cohort(
        model=model, schedule=schedule, times=times, values=values, observed=observed
    )


def lag1_pairs(cohort: Cohort) -> list[tuple[Measurement, Measurement]]:
    """Ordered pairs of observed measurements exactly one interval apart.

    Pairs spanning a missed visit are excluded.
    """
    pairs = cohort.pair_set(max_gap=1)
    return [
        (
            Measurement(
                int(pairs.subject_id[n]), int(pairs.idx_prev[n]),
                float(pairs.t_prev[n]), float(pairs.y_prev[n]), True,
            ),
            Measurement(
                int(pairs.subject_id[n]), int(pairs.idx_cur[n]),
                float(pairs.t_cur[n]), float(pairs.y_cur[n]), True,
            ),
        )
        for n in range(len(pairs))
    ]
