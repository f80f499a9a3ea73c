"""Sample sources: nvidia-smi text parsers, a live poller and JSON-Lines traces.

The live source shells out to ``nvidia-smi`` (process monitor + device query)
and reads host RAM per pid from the OS process table. Everything here that
touches text is a pure function so it can be exercised from golden files on
machines without a GPU.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import (
    InvariantViolation,
    MalformedHeader,
    MalformedLine,
    NonMonotonicTime,
    UnknownGpuIndex,
    UnparsableField,
)
from .metrics import MetricSample

log = logging.getLogger(__name__)

DEFAULT_PMON_COMMAND = "nvidia-smi pmon -c 1 -s um"
DEFAULT_QUERY_COMMAND = "nvidia-smi --query-gpu=index,memory.total --format=csv"

PMON_COLUMNS = ("gpu", "pid", "type", "sm", "mem", "enc", "dec", "fb", "command")
TRACE_KEYS = ("t", "pid", "name", "util", "mem_pct", "ram_bytes")


@dataclass(frozen=True)
class GpuInfo:
    index: int
    total_mem_mib: int

    def __post_init__(self):
        if self.index < 0:
            raise InvariantViolation("index", self.index)
        if self.total_mem_mib <= 0:
            raise InvariantViolation("total_mem_mib", self.total_mem_mib)


@dataclass(frozen=True)
class PmonRow:
    gpu_index: int
    pid: int
    sm_pct: float | None
    fb_mib: float | None
    name: str


@dataclass
class SourceSnapshot:
    t: float
    rows: list[PmonRow]
    ram_by_pid: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        keys = [(r.gpu_index, r.pid) for r in self.rows]
        if len(keys) != len(set(keys)):
            raise InvariantViolation("rows", "duplicate (gpu_index, pid)")


@dataclass
class SourceDiagnostics:
    """Counters for conditions that are tolerated but worth surfacing."""

    mem_clamped: int = 0
    rows_without_util: int = 0


# --- device query CSV -------------------------------------------------------

def _parse_mib(token: str, row: int, column: str) -> int:
    text = token.strip()
    if text.endswith("MiB"):
        text = text[:-3].strip()
    try:
        return int(text)
    except ValueError:
        raise UnparsableField(f"row {row}: cannot parse {column!r} from {token!r}",
                              row=row, column=column) from None


def parse_query_gpu_csv(text: str) -> list[GpuInfo]:
    """Parse ``nvidia-smi --query-gpu=index,memory.total --format=csv`` output."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeader("empty device query output")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) != 2 or header[0] != "index" or not header[1].startswith("memory.total"):
        raise MalformedHeader(f"unexpected device query header: {lines[0]!r}")

    gpus = []
    for row, line in enumerate(lines[1:]):
        fields = line.split(",")
        if len(fields) != 2:
            raise UnparsableField(f"row {row}: expected 2 fields, got {len(fields)}", row=row)
        try:
            index = int(fields[0].strip())
        except ValueError:
            raise UnparsableField(f"row {row}: cannot parse 'index' from {fields[0]!r}",
                                  row=row, column="index") from None
        total = _parse_mib(fields[1], row, "memory.total")
        try:
            gpus.append(GpuInfo(index, total))
        except InvariantViolation as exc:
            raise UnparsableField(f"row {row}: {exc}", row=row, column=exc.field) from None
    return gpus


# --- process monitor --------------------------------------------------------

def _opt_number(token: str, line_no: int, column: str) -> float | None:
    if token == "-":
        return None
    try:
        value = float(token)
    except ValueError:
        raise UnparsableField(f"line {line_no}: non-numeric {column} {token!r}",
                              row=line_no, column=column) from None
    if value < 0 or (column == "sm" and value > 100):
        raise UnparsableField(f"line {line_no}: {column} out of range: {token!r}",
                              row=line_no, column=column)
    return value


def parse_pmon_block(text: str) -> list[PmonRow]:
    """Parse one ``nvidia-smi pmon`` snapshot.

    Column positions come from the first ``#`` comment naming ``pid``; the
    units line that pmon prints underneath is ignored. Data lines without a
    numeric pid (pmon prints ``-`` for idle GPUs) are skipped.
    """
    columns: list[str] | None = None
    rows = []
    for line_no, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            names = line.lstrip("#").split()
            if columns is None and "pid" in names:
                columns = names
            continue
        cols = columns or list(PMON_COLUMNS)
        tokens = line.split()
        if "command" in cols:
            cmd_at = cols.index("command")
            # process names may contain spaces; they always come last
            tokens = tokens[:cmd_at] + [" ".join(tokens[cmd_at:])]
        values = dict(zip(cols, tokens))

        pid_tok = values.get("pid", "-")
        if pid_tok == "-":
            continue
        try:
            pid = int(pid_tok)
            gpu = int(values.get("gpu", "0"))
        except ValueError:
            raise UnparsableField(f"line {line_no}: non-numeric pid/gpu in {line!r}",
                                  row=line_no, column="pid") from None
        rows.append(PmonRow(
            gpu_index=gpu,
            pid=pid,
            sm_pct=_opt_number(values.get("sm", "-"), line_no, "sm"),
            fb_mib=_opt_number(values.get("fb", "-"), line_no, "fb"),
            name="" if values.get("command", "-") == "-" else values["command"],
        ))
    return rows


def snapshot_to_keyed_samples(
    snap: SourceSnapshot,
    gpus: Iterable[GpuInfo],
    diagnostics: SourceDiagnostics | None = None,
) -> list[tuple[tuple[int, int], MetricSample]]:
    """Like :func:`snapshot_to_samples` but keeps the ``(gpu_index, pid)`` key."""
    totals = {g.index: g.total_mem_mib for g in gpus}
    out = []
    for row in snap.rows:
        if row.gpu_index not in totals:
            raise UnknownGpuIndex(row.gpu_index)
        if row.sm_pct is None:
            if diagnostics is not None:
                diagnostics.rows_without_util += 1
            continue
        mem_pct = 0.0
        if row.fb_mib is not None:
            mem_pct = 100.0 * row.fb_mib / totals[row.gpu_index]
            if mem_pct > 100.0:
                log.warning("pid %d: fb %s MiB exceeds GPU %d total %d MiB; clamping",
                            row.pid, row.fb_mib, row.gpu_index, totals[row.gpu_index])
                mem_pct = 100.0
                if diagnostics is not None:
                    diagnostics.mem_clamped += 1
        sample = MetricSample(
            t=snap.t,
            pid=row.pid,
            name=row.name,
            util=float(row.sm_pct),
            mem_pct=mem_pct,
            ram_bytes=int(snap.ram_by_pid.get(row.pid, 0)),
        )
        out.append(((row.gpu_index, row.pid), sample))
    return out


def snapshot_to_samples(snap: SourceSnapshot, gpus: Iterable[GpuInfo],
                        diagnostics: SourceDiagnostics | None = None) -> list[MetricSample]:
    return [s for _, s in snapshot_to_keyed_samples(snap, gpus, diagnostics)]


# --- live polling -----------------------------------------------------------

def ram_of(pid: int) -> int | None:
    """Resident host memory of ``pid`` in bytes, or None if it is gone."""
    import psutil

    try:
        return psutil.Process(pid).memory_info().rss
    except (psutil.NoSuchProcess, psutil.AccessDenied, psutil.ZombieProcess):
        return None


def run_command(command: str, timeout: float = 10.0) -> str:
    proc = subprocess.run(shlex.split(command), capture_output=True, text=True,
                          timeout=timeout, check=True)
    return proc.stdout


class NvidiaSmiSource:
    """Polls nvidia-smi and the OS process table.

    ``runner`` and ``ram_lookup`` are injectable so the poller can be driven
    from canned text in tests.
    """

    def __init__(
        self,
        pmon_command: str = DEFAULT_PMON_COMMAND,
        query_command: str = DEFAULT_QUERY_COMMAND,
        runner: Callable[[str], str] = run_command,
        ram_lookup: Callable[[int], int | None] = ram_of,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.pmon_command = pmon_command
        self.query_command = query_command
        self.runner = runner
        self.ram_lookup = ram_lookup
        self.clock = clock
        self.diagnostics = SourceDiagnostics()
        self._gpus: list[GpuInfo] | None = None
        self._t0: float | None = None
        self._last_t = -1.0

    @property
    def gpus(self) -> list[GpuInfo]:
        if self._gpus is None:
            self._gpus = parse_query_gpu_csv(self.runner(self.query_command))
        return self._gpus

    def poll(self) -> SourceSnapshot:
        now = self.clock()
        if self._t0 is None:
            self._t0 = now
        # never hand out a timestamp that goes backwards
        t = max(now - self._t0, self._last_t + 1e-6 if self._last_t >= 0 else 0.0)
        self._last_t = t
        rows = parse_pmon_block(self.runner(self.pmon_command))
        ram = {}
        for pid in {r.pid for r in rows}:
            value = self.ram_lookup(pid)
            if value is not None:
                ram[pid] = value
        return SourceSnapshot(t=t, rows=rows, ram_by_pid=ram)

    def samples(self) -> list[tuple[tuple[int, int], MetricSample]]:
        return snapshot_to_keyed_samples(self.poll(), self.gpus, self.diagnostics)


# --- trace files ------------------------------------------------------------

def _sample_from_obj(obj, line_no: int) -> MetricSample:
    if not isinstance(obj, dict):
        raise MalformedLine(line_no, "expected a JSON object")
    missing = [k for k in TRACE_KEYS if k not in obj]
    if missing:
        raise MalformedLine(line_no, f"missing keys {missing}")
    try:
        return MetricSample(**{k: obj[k] for k in TRACE_KEYS})
    except InvariantViolation as exc:
        raise InvariantViolation(exc.field, exc.value, line_no) from None


def iter_trace(path: str | Path) -> Iterator[MetricSample]:
    last_t: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from None
            s = _sample_from_obj(obj, line_no)
            prev = last_t.get(s.pid)
            if prev is not None and s.t <= prev:
                raise NonMonotonicTime(s.pid, s.t, prev, line_no)
            last_t[s.pid] = s.t
            yield s


def read_trace(path: str | Path) -> list[MetricSample]:
    """Load a JSON-Lines trace, validating every sample and per-pid time order."""
    return list(iter_trace(path))


def write_trace(samples: Iterable[MetricSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict()))
            fh.write("\n")
