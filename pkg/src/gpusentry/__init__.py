"""Behavioral detection of GPU cryptojacking from per-process telemetry."""

__version__ = "0.1.0"

from .detector import (
    Alert,
    AlertState,
    CorpusItem,
    EvalReport,
    Monitor,
    Outcome,
    Reason,
    Thresholds,
    Verdict,
    WindowConfig,
    classify_window,
    evaluate_corpus,
    step_alert_state,
)
from .metrics import (
    MetricSample,
    SlidingWindow,
    WindowStats,
    compute_stats,
    population_std,
    push_sample,
)
from .sources import read_trace, write_trace
