"""Telemetry samples, per-process sliding windows and window statistics."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptySeries, EmptyWindow, InvariantViolation, NonMonotonicTime, PidMismatch

DEFAULT_CAPACITY = 60
DEFAULT_PERIOD_S = 1.0


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_real(value) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool)
            and math.isfinite(value))


@dataclass(frozen=True, slots=True)
class MetricSample:
    """One per-process telemetry reading.

    ``util`` and ``mem_pct`` are percentages of the device, ``ram_bytes`` is
    host resident memory and ``t`` is seconds since monitoring started.
    """

    t: float
    pid: int
    name: str
    util: float
    mem_pct: float
    ram_bytes: int

    def __post_init__(self):
        if not _is_real(self.t) or self.t < 0:
            raise InvariantViolation("t", self.t)
        if not _is_int(self.pid) or self.pid <= 0:
            raise InvariantViolation("pid", self.pid)
        if not isinstance(self.name, str):
            raise InvariantViolation("name", self.name)
        if not _is_real(self.util) or not 0 <= self.util <= 100:
            raise InvariantViolation("util", self.util)
        if not _is_real(self.mem_pct) or not 0 <= self.mem_pct <= 100:
            raise InvariantViolation("mem_pct", self.mem_pct)
        if not _is_int(self.ram_bytes) or self.ram_bytes < 0:
            raise InvariantViolation("ram_bytes", self.ram_bytes)

    def to_dict(self) -> dict:
        return {"t": self.t, "pid": self.pid, "name": self.name, "util": self.util,
                "mem_pct": self.mem_pct, "ram_bytes": self.ram_bytes}


@dataclass
class SlidingWindow:
    """Bounded, time-ordered buffer of samples for a single process.

    Besides the count bound, samples older than roughly ``capacity`` sampling
    periods are evicted on every push, so that missed polls show up as a
    window with fewer than ``capacity`` samples (lower presence).
    """

    pid: int
    capacity: int = DEFAULT_CAPACITY
    expected_period: float = DEFAULT_PERIOD_S
    samples: deque = field(default_factory=deque)

    def __post_init__(self):
        if not _is_int(self.capacity) or self.capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {self.capacity!r}")
        if not _is_real(self.expected_period) or self.expected_period <= 0:
            raise ValueError(f"expected_period must be positive, got {self.expected_period!r}")
        self.samples = deque(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def last_t(self) -> float | None:
        return self.samples[-1].t if self.samples else None

    @property
    def horizon(self) -> float:
        # half-period slack keeps exactly `capacity` on-grid samples despite float error
        return (self.capacity - 0.5) * self.expected_period

    def push(self, s: MetricSample) -> "SlidingWindow":
        if s.pid != self.pid:
            raise PidMismatch(self.pid, s.pid)
        if self.samples and s.t <= self.samples[-1].t:
            raise NonMonotonicTime(s.pid, s.t, self.samples[-1].t)
        self.samples.append(s)
        while len(self.samples) > self.capacity:
            self.samples.popleft()
        cutoff = s.t - self.horizon
        while self.samples[0].t < cutoff:
            self.samples.popleft()
        return self

    def clear(self) -> None:
        self.samples.clear()


def push_sample(window: SlidingWindow, s: MetricSample) -> SlidingWindow:
    """Append ``s`` to ``window``, evicting the oldest samples as needed."""
    return window.push(s)


@dataclass(frozen=True)
class WindowStats:
    pid: int
    n: int
    util_mean: float
    util_std: float
    mem_pct_mean: float
    ram_mean: float
    ram_std: float
    ram_cv: float
    presence: float
    name: str = ""
    t_first: float = 0.0
    t_last: float = 0.0

    def to_dict(self) -> dict:
        return {
            "pid": self.pid, "name": self.name, "n": self.n,
            "util_mean": self.util_mean, "util_std": self.util_std,
            "mem_pct_mean": self.mem_pct_mean,
            "ram_mean": self.ram_mean, "ram_std": self.ram_std, "ram_cv": self.ram_cv,
            "presence": self.presence, "t_first": self.t_first, "t_last": self.t_last,
        }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo, 0.0
    # fsum/n can land one ulp outside the data range
    mean = min(hi, max(lo, math.fsum(values) / n))
    var = math.fsum((x - mean) ** 2 for x in values) / n
    return mean, math.sqrt(var)


def population_std(values: Iterable[float]) -> float:
    """Population standard deviation (divide by n), computed in two passes."""
    values = list(values)
    if not values:
        raise EmptySeries("population_std of an empty series")
    return _mean_std(values)[1]


def compute_stats(window: SlidingWindow) -> WindowStats:
    samples = window.samples
    n = len(samples)
    if n == 0:
        raise EmptyWindow(f"window for pid {window.pid} holds no samples")
    util_mean, util_std = _mean_std([s.util for s in samples])
    mem_mean = math.fsum(s.mem_pct for s in samples) / n
    ram_mean, ram_std = _mean_std([float(s.ram_bytes) for s in samples])
    return WindowStats(
        pid=window.pid,
        n=n,
        util_mean=util_mean,
        util_std=util_std,
        mem_pct_mean=mem_mean,
        ram_mean=ram_mean,
        ram_std=ram_std,
        ram_cv=ram_std / ram_mean if ram_mean > 0 else 0.0,
        presence=min(1.0, n / window.capacity),
        name=samples[-1].name,
        t_first=samples[0].t,
        t_last=samples[-1].t,
    )
