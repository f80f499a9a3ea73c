"""Live monitoring loop: one poller thread feeding one detector consumer."""

from __future__ import annotations

import logging
import queue
import threading
import time
from typing import Callable, Protocol

from .detector import Alert, Monitor
from .sources import GpuInfo, SourceDiagnostics, SourceSnapshot, snapshot_to_keyed_samples

log = logging.getLogger(__name__)

_DONE = object()


class SnapshotSource(Protocol):
    gpus: list[GpuInfo]

    def poll(self) -> SourceSnapshot: ...


def _poll_loop(source: SnapshotSource, out: queue.Queue, interval: float,
               stop: threading.Event, max_polls: int | None) -> None:
    polls = 0
    try:
        while not stop.is_set() and (max_polls is None or polls < max_polls):
            started = time.monotonic()
            snap = source.poll()
            polls += 1
            # blocks when the consumer lags, so nothing piles up unbounded
            while not stop.is_set():
                try:
                    out.put(snap, timeout=0.1)
                    break
                except queue.Full:
                    continue
            stop.wait(max(0.0, interval - (time.monotonic() - started)))
    except Exception as exc:  # handed to the consumer, which re-raises it
        out.put(exc)
        return
    out.put(_DONE)


def run_watch(
    source: SnapshotSource,
    monitor: Monitor,
    emit: Callable[[Alert], None],
    interval: float = 1.0,
    max_polls: int | None = None,
    stop: threading.Event | None = None,
    queue_size: int = 4,
) -> int:
    """Poll ``source`` until stopped (or ``max_polls``), emitting alerts as they fire.

    Returns the number of alerts emitted.
    """
    stop = stop or threading.Event()
    gpus = source.gpus
    diagnostics = getattr(source, "diagnostics", None) or SourceDiagnostics()
    handoff: queue.Queue = queue.Queue(maxsize=queue_size)
    poller = threading.Thread(target=_poll_loop, name="gpusentry-poller", daemon=True,
                              args=(source, handoff, interval, stop, max_polls))
    poller.start()
    alerts = 0
    try:
        while True:
            item = handoff.get()
            if item is _DONE:
                break
            if isinstance(item, Exception):
                raise item
            for key, sample in snapshot_to_keyed_samples(item, gpus, diagnostics):
                alert = monitor.feed(sample, key)
                if alert is not None:
                    alerts += 1
                    emit(alert)
    finally:
        stop.set()
        poller.join(timeout=5.0)
    return alerts
