"""Threshold decision tree over window statistics, alert debouncing and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Hashable, Iterable, Sequence

from .errors import ConfigError, GpuSentryError, TraceError
from .metrics import (
    DEFAULT_CAPACITY,
    DEFAULT_PERIOD_S,
    MetricSample,
    SlidingWindow,
    WindowStats,
    compute_stats,
)


class Outcome(str, Enum):
    SUSPICIOUS = "Suspicious"
    BENIGN = "Benign"
    INDETERMINATE = "Indeterminate"


class Reason(str, Enum):
    LOW_PRESENCE = "LOW_PRESENCE"
    LOW_GPU_UTIL = "LOW_GPU_UTIL"
    LOW_GPU_MEM = "LOW_GPU_MEM"
    VOLATILE_UTIL = "VOLATILE_UTIL"
    VOLATILE_RAM = "VOLATILE_RAM"
    RAM_OUT_OF_BAND = "RAM_OUT_OF_BAND"
    ALL_INDICATORS_MET = "ALL_INDICATORS_MET"


@dataclass(frozen=True)
class Thresholds:
    """Decision boundaries of the miner branch plus alerting knobs.

    Miners were observed at >= 85 % utilization and >= 96 % GPU memory, with
    a utilization deviation below 3.1 points while legitimate GPU-heavy
    software stayed at or above 4.7; ``util_std_max`` sits between the two.
    ``strict_ram`` additionally requires the mean RAM to lie in the band seen
    for miners (3.1 to 4.2 GB).
    """

    util_min: float = 85.0
    mem_min: float = 96.0
    util_std_max: float = 3.9
    ram_cv_max: float = 0.02
    min_presence: float = 0.9
    consecutive_windows: int = 3
    alert_cooldown_s: float = 300.0
    strict_ram: bool = False
    ram_min: float = 3.1e9
    ram_max: float = 4.2e9

    def __post_init__(self):
        for name in ("util_min", "mem_min", "util_std_max", "ram_cv_max", "min_presence",
                     "consecutive_windows", "alert_cooldown_s", "ram_min", "ram_max"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not math.isfinite(value) or value <= 0:
                raise ConfigError(f"threshold {name} must be a positive number, got {value!r}")
        if self.util_min > 100 or self.mem_min > 100:
            raise ConfigError("util_min and mem_min are percentages and must be <= 100")
        if self.min_presence > 1:
            raise ConfigError("min_presence must be <= 1")
        if not isinstance(self.consecutive_windows, int):
            raise ConfigError("consecutive_windows must be an integer")
        if self.ram_min > self.ram_max:
            raise ConfigError("ram_min must not exceed ram_max")

    @classmethod
    def from_dict(cls, data: dict) -> "Thresholds":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Verdict:
    pid: int
    outcome: Outcome
    reasons: tuple[Reason, ...]
    stats: WindowStats


def classify_window(stats: WindowStats, th: Thresholds) -> Verdict:
    """Run the decision tree; a Benign verdict names the first check that failed."""

    def verdict(outcome, reason):
        return Verdict(stats.pid, outcome, (reason,), stats)

    if stats.presence < th.min_presence:
        return verdict(Outcome.INDETERMINATE, Reason.LOW_PRESENCE)
    if stats.util_mean < th.util_min:
        return verdict(Outcome.BENIGN, Reason.LOW_GPU_UTIL)
    if stats.mem_pct_mean < th.mem_min:
        return verdict(Outcome.BENIGN, Reason.LOW_GPU_MEM)
    if stats.util_std > th.util_std_max:
        return verdict(Outcome.BENIGN, Reason.VOLATILE_UTIL)
    if stats.ram_cv > th.ram_cv_max:
        return verdict(Outcome.BENIGN, Reason.VOLATILE_RAM)
    if th.strict_ram and not th.ram_min <= stats.ram_mean <= th.ram_max:
        return verdict(Outcome.BENIGN, Reason.RAM_OUT_OF_BAND)
    return verdict(Outcome.SUSPICIOUS, Reason.ALL_INDICATORS_MET)


# --- alerting ---------------------------------------------------------------

@dataclass(frozen=True)
class Alert:
    pid: int
    name: str
    first_t: float
    last_t: float
    reasons: tuple[Reason, ...]
    stats: WindowStats

    def to_dict(self) -> dict:
        return {
            "event": "alert",
            "pid": self.pid,
            "name": self.name,
            "first_t": self.first_t,
            "last_t": self.last_t,
            "reasons": [r.value for r in self.reasons],
            "stats": self.stats.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def format_human(self) -> str:
        s = self.stats
        return (f"ALERT pid={self.pid} name={self.name or '?'} "
                f"t=[{self.first_t:g}s, {self.last_t:g}s] "
                f"util={s.util_mean:.1f}% util_std={s.util_std:.2f} "
                f"gpu_mem={s.mem_pct_mean:.1f}% ram={s.ram_mean / 1e9:.2f}GB "
                f"ram_cv={s.ram_cv:.4f} reasons={','.join(r.value for r in self.reasons)}")


@dataclass(frozen=True)
class AlertState:
    """Debounce state for one process."""

    consecutive: int = 0
    streak_first_t: float | None = None
    last_alert_t: float | None = None


def step_alert_state(state: AlertState, v: Verdict, now: float,
                     th: Thresholds) -> tuple[AlertState, Alert | None]:
    if v.outcome is Outcome.INDETERMINATE:
        return state, None
    if v.outcome is Outcome.BENIGN:
        return replace(state, consecutive=0, streak_first_t=None), None

    first_t = state.streak_first_t if state.consecutive else v.stats.t_first
    state = replace(state, consecutive=state.consecutive + 1, streak_first_t=first_t)
    if state.consecutive < th.consecutive_windows:
        return state, None
    if state.last_alert_t is not None and now - state.last_alert_t < th.alert_cooldown_s:
        return state, None
    alert = Alert(pid=v.pid, name=v.stats.name, first_t=first_t, last_t=v.stats.t_last,
                  reasons=v.reasons, stats=v.stats)
    return replace(state, last_alert_t=now), alert


# --- streaming pipeline -----------------------------------------------------

@dataclass(frozen=True)
class WindowConfig:
    """How samples are grouped into classified windows.

    ``stride`` is the number of pushes between classifications; the default
    (None) classifies once per full window, i.e. non-overlapping windows.
    """

    capacity: int = DEFAULT_CAPACITY
    period_s: float = DEFAULT_PERIOD_S
    stride: int | None = None

    def __post_init__(self):
        if not isinstance(self.capacity, int) or self.capacity < 2:
            raise ConfigError(f"window capacity must be an integer >= 2, got {self.capacity!r}")
        if not isinstance(self.period_s, (int, float)) or self.period_s <= 0:
            raise ConfigError(f"sampling period must be positive, got {self.period_s!r}")
        if self.stride is not None and (not isinstance(self.stride, int) or self.stride < 1):
            raise ConfigError(f"stride must be a positive integer, got {self.stride!r}")

    @property
    def effective_stride(self) -> int:
        return self.stride or self.capacity


@dataclass
class _Track:
    window: SlidingWindow
    state: AlertState = field(default_factory=AlertState)
    pushes: int = 0


class Monitor:
    """Per-process windows and alert states fed one sample at a time.

    Processes are identified by an arbitrary hashable key (the pid for
    replayed traces, ``(gpu_index, pid)`` for live polling).
    """

    def __init__(self, thresholds: Thresholds | None = None, window: WindowConfig | None = None):
        self.thresholds = thresholds or Thresholds()
        self.window = window or WindowConfig()
        self.tracks: dict[Hashable, _Track] = {}
        self.verdicts: list[Verdict] = []
        self.keep_verdicts = True

    def feed(self, sample: MetricSample, key: Hashable | None = None) -> Alert | None:
        key = sample.pid if key is None else key
        track = self.tracks.get(key)
        if track is None:
            track = self.tracks[key] = _Track(SlidingWindow(
                sample.pid, self.window.capacity, self.window.period_s))
        track.window.push(sample)
        track.pushes += 1
        if track.pushes % self.window.effective_stride:
            return None
        verdict = classify_window(compute_stats(track.window), self.thresholds)
        if self.keep_verdicts:
            self.verdicts.append(verdict)
        track.state, alert = step_alert_state(track.state, verdict, sample.t, self.thresholds)
        return alert

    def feed_all(self, samples: Iterable[MetricSample]) -> list[Alert]:
        alerts = []
        for s in samples:
            alert = self.feed(s)
            if alert is not None:
                alerts.append(alert)
        return alerts


def replay(samples: Iterable[MetricSample], thresholds: Thresholds | None = None,
           window: WindowConfig | None = None) -> tuple[list[Alert], list[Verdict]]:
    monitor = Monitor(thresholds, window)
    alerts = monitor.feed_all(samples)
    return alerts, monitor.verdicts


# --- corpus evaluation ------------------------------------------------------

SET_ORDER = ("test", "validation", "legitimate")
SET_TITLES = {
    "test": "Test set",
    "validation": "Validation set",
    "legitimate": "Legitimate applications",
}
LABELS = ("miner", "legitimate")


@dataclass(frozen=True)
class CorpusItem:
    label: str
    set_name: str
    trace: Sequence[MetricSample]
    trace_id: str = ""


@dataclass(frozen=True)
class SetCount:
    name: str
    total: int
    detected: int


@dataclass(frozen=True)
class TraceResult:
    trace_id: str
    set_name: str
    label: str
    detected: bool
    alerts: int
    outcomes: tuple[str, ...]
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class EvalReport:
    sets: tuple[SetCount, ...]
    false_positives: int
    traces: tuple[TraceResult, ...]

    def counts(self) -> dict[str, tuple[int, int]]:
        return {s.name: (s.detected, s.total) for s in self.sets}

    def to_dict(self) -> dict:
        return {
            "sets": [asdict(s) for s in self.sets],
            "false_positives": self.false_positives,
            "traces": [asdict(t) for t in self.traces],
        }

    def format_table(self) -> str:
        width = max([len("Samples set")] + [len(SET_TITLES.get(s.name, s.name)) for s in self.sets])
        lines = [f"{'Samples set':<{width}}  {'Number of samples':>17}  {'Detections':>10}"]
        for s in self.sets:
            lines.append(f"{SET_TITLES.get(s.name, s.name):<{width}}  {s.total:>17}  {s.detected:>10}")
        lines.append(f"False positives: {self.false_positives}")
        return "\n".join(lines)


def evaluate_corpus(corpus: Iterable[CorpusItem], th: Thresholds | None = None,
                    window: WindowConfig | None = None) -> EvalReport:
    """Replay every trace independently and count traces that raised an alert."""
    th = th or Thresholds()
    totals: dict[str, list[int]] = {}
    results = []
    false_positives = 0
    for i, item in enumerate(corpus):
        trace_id = item.trace_id or f"#{i}"
        if item.label not in LABELS:
            raise TraceError(trace_id, ValueError(f"unknown label {item.label!r}"))
        try:
            alerts, verdicts = replay(item.trace, th, window)
        except GpuSentryError as exc:
            raise TraceError(trace_id, exc) from exc
        detected = bool(alerts)
        counts = totals.setdefault(item.set_name, [0, 0])
        counts[0] += 1
        counts[1] += detected
        if detected and item.label == "legitimate":
            false_positives += 1
        results.append(TraceResult(
            trace_id=trace_id,
            set_name=item.set_name,
            label=item.label,
            detected=detected,
            alerts=len(alerts),
            outcomes=tuple(v.outcome.value for v in verdicts),
            reasons=tuple(v.reasons[0].value for v in verdicts),
        ))

    order = list(SET_ORDER) + sorted(set(totals) - set(SET_ORDER))
    sets = tuple(SetCount(name, *totals.get(name, (0, 0))) for name in order)
    return EvalReport(sets=sets, false_positives=false_positives, traces=tuple(results))
