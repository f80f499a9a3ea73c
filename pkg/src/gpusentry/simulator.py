"""Seeded synthetic GPU telemetry for miners, stealth miners and legitimate apps.

Randomness comes from numpy's PCG64 bit generator seeded with
``SeedSequence([seed, pid, crc32(kind)])``, so every trace is reproducible
bit-for-bit and corpus entries are independent of one another. Per-sample
jitter is Gaussian truncated at +/-2.5 standard deviations (by redrawing),
then clamped to the valid range of the channel.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .detector import CorpusItem, LABELS, SET_ORDER
from .errors import GpuSentryError, MalformedLine, ProfileError, TraceError
from .metrics import MetricSample
from .sources import read_trace, write_trace

TRUNCATE_SD = 2.5

KINDS = ("miner", "stealth_miner", "furmark_like", "passmark_like",
         "game_like", "modeling_like", "browser_like")
MINER_KINDS = ("miner", "stealth_miner")


@dataclass(frozen=True)
class Swing:
    """Square wave: ``high`` for the first half of each period, then ``low``."""

    low: float
    high: float
    period_s: float

    def at(self, t: float) -> float:
        return self.high if (t % self.period_s) < self.period_s / 2 else self.low


@dataclass(frozen=True)
class TraceProfile:
    kind: str
    util_base: float
    util_jitter_sd: float
    mem_pct_base: float
    mem_pct_jitter_sd: float
    ram_base: float
    ram_jitter_sd: float
    util_swing: Swing | None = None
    duration_s: float = 300.0
    period_s: float = 1.0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if not self.duration_s > 0 or not self.period_s > 0:
            raise ProfileError("duration_s and period_s must be positive")
        for name in ("util_base", "mem_pct_base"):
            if not 0 <= getattr(self, name) <= 100:
                raise ProfileError(f"{name} must be a percentage")
        for name in ("util_jitter_sd", "mem_pct_jitter_sd", "ram_jitter_sd", "ram_base"):
            if getattr(self, name) < 0:
                raise ProfileError(f"{name} must be non-negative")
        sw = self.util_swing
        if sw is not None and not (0 <= sw.low <= sw.high <= 100 and sw.period_s > 0):
            raise ProfileError(f"invalid util swing {sw}")


PROFILES: dict[str, TraceProfile] = {
    "miner": TraceProfile("miner", 92.0, 2.0, 98.0, 0.5, 3.7e9, 2e7),
    "stealth_miner": TraceProfile("stealth_miner", 75.0, 2.0, 98.0, 0.5, 3.6e9, 2e7,
                                  util_swing=Swing(60.0, 90.0, 30.0)),
    "furmark_like": TraceProfile("furmark_like", 96.0, 1.5, 70.0, 2.0, 5.0e8, 5e6),
    # deliberately drawn from the miner distribution: nothing separates it
    "passmark_like": TraceProfile("passmark_like", 93.0, 2.0, 98.5, 0.5, 3.5e9, 2e7),
    "game_like": TraceProfile("game_like", 70.0, 3.0, 75.0, 3.0, 6.0e9, 2e8,
                              util_swing=Swing(55.0, 85.0, 20.0)),
    "modeling_like": TraceProfile("modeling_like", 55.0, 4.0, 50.0, 5.0, 8.0e9, 4e8,
                                  util_swing=Swing(20.0, 95.0, 45.0)),
    "browser_like": TraceProfile("browser_like", 15.0, 4.0, 8.0, 1.0, 7.0e8, 3e7),
}

PROCESS_NAMES = {
    "miner": "xmrig",
    "stealth_miner": "xmrig",
    "furmark_like": "furmark",
    "passmark_like": "passmark",
    "game_like": "game",
    "modeling_like": "maya",
    "browser_like": "chrome",
}


def profile(kind: str, **overrides) -> TraceProfile:
    try:
        base = PROFILES[kind]
    except KeyError:
        raise ProfileError(f"unknown profile kind {kind!r}; choose from {', '.join(KINDS)}") from None
    return replace(base, **overrides)


def trace_rng(seed: int, pid: int, kind: str) -> np.random.Generator:
    if seed < 0:
        raise ProfileError("seed must be non-negative")
    entropy = [seed, pid, zlib.crc32(kind.encode("utf-8"))]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _truncated_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal(n)
    bad = np.abs(z) > TRUNCATE_SD
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > TRUNCATE_SD
    return z


def gen_trace(prof: TraceProfile, pid: int, seed: int, name: str | None = None) -> list[MetricSample]:
    prof.validate()
    n = math.floor(prof.duration_s / prof.period_s + 1e-9)
    rng = trace_rng(seed, pid, prof.kind)
    z_util = _truncated_normal(rng, n)
    z_mem = _truncated_normal(rng, n)
    z_ram = _truncated_normal(rng, n)
    name = PROCESS_NAMES.get(prof.kind, prof.kind) if name is None else name

    samples = []
    for k in range(n):
        t = k * prof.period_s
        centre = prof.util_swing.at(t) if prof.util_swing else prof.util_base
        util = min(100.0, max(0.0, centre + prof.util_jitter_sd * float(z_util[k])))
        mem = min(100.0, max(0.0, prof.mem_pct_base + prof.mem_pct_jitter_sd * float(z_mem[k])))
        ram = max(0, round(prof.ram_base + prof.ram_jitter_sd * float(z_ram[k])))
        samples.append(MetricSample(t=t, pid=pid, name=name, util=util, mem_pct=mem, ram_bytes=ram))
    return samples


# --- builtin corpus ---------------------------------------------------------

@dataclass(frozen=True)
class CorpusEntry:
    set_name: str
    label: str
    profile: TraceProfile
    seed: int
    pid: int
    trace_id: str

    def generate(self) -> list[MetricSample]:
        return gen_trace(self.profile, self.pid, self.seed)


@dataclass(frozen=True)
class LabeledCorpus:
    entries: tuple[CorpusEntry, ...]

    def sizes(self) -> dict[str, int]:
        return {s: sum(e.set_name == s for e in self.entries) for s in SET_ORDER}

    def items(self) -> list[CorpusItem]:
        return [CorpusItem(e.label, e.set_name, e.generate(), e.trace_id) for e in self.entries]


# (util_base, mem_pct_base, ram_base, util_jitter_sd) for the eight plain
# validation miners; bases sit inside the band the miners were observed in
VALIDATION_MINERS = (
    (88.0, 97.5, 3.3e9, 2.0),
    (89.0, 98.0, 3.9e9, 1.5),
    (90.0, 99.0, 3.2e9, 2.5),
    (91.0, 97.0, 4.1e9, 2.0),
    (92.5, 99.5, 3.6e9, 1.8),
    (93.0, 98.5, 3.8e9, 2.2),
    (94.0, 97.5, 3.4e9, 1.5),
    (95.0, 99.0, 4.0e9, 2.0),
)
STEALTH_SWINGS = (Swing(60.0, 90.0, 30.0), Swing(60.0, 90.0, 20.0))
LEGIT_KINDS = ("furmark_like", "passmark_like", "game_like", "modeling_like", "browser_like")


def builtin_corpus(seed: int = 0) -> LabeledCorpus:
    """3 test miners, 10 validation miners (2 stealthy) and 5 legitimate apps."""
    specs: list[tuple[str, str, TraceProfile]] = []
    for ram in (3.1e9, 3.7e9, 4.2e9):
        specs.append(("test", "miner", profile("miner", ram_base=ram)))
    for util, mem, ram, sd in VALIDATION_MINERS:
        specs.append(("validation", "miner", profile(
            "miner", util_base=util, mem_pct_base=mem, ram_base=ram, util_jitter_sd=sd)))
    for swing in STEALTH_SWINGS:
        specs.append(("validation", "miner", profile("stealth_miner", util_swing=swing)))
    for kind in LEGIT_KINDS:
        specs.append(("legitimate", "legitimate", profile(kind)))

    entries = []
    counters: dict[str, int] = {}
    for i, (set_name, label, prof) in enumerate(specs):
        k = counters[set_name] = counters.get(set_name, 0) + 1
        entries.append(CorpusEntry(set_name, label, prof, seed, pid=4100 + i,
                                   trace_id=f"{set_name}_{k:02d}_{prof.kind}"))
    return LabeledCorpus(tuple(entries))


# --- manifest ---------------------------------------------------------------

def write_corpus(corpus: LabeledCorpus, out_dir: str | Path) -> Path:
    """Write every trace plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in corpus.entries:
        filename = f"{e.trace_id}.jsonl"
        write_trace(e.generate(), out / filename)
        entries.append({"set": e.set_name, "label": e.label, "trace": filename,
                        "seed": e.seed, "profile": e.profile.kind, "pid": e.pid})
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"entries": entries}, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path: str | Path) -> list[CorpusItem]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        entries = data["entries"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedLine(1, f"{path}: not a corpus manifest ({exc})") from None
    items = []
    for i, entry in enumerate(entries):
        try:
            set_name, label, trace = entry["set"], entry["label"], entry["trace"]
        except (KeyError, TypeError):
            raise MalformedLine(i + 1, f"{path}: manifest entry {i} lacks set/label/trace") from None
        if label not in LABELS:
            raise MalformedLine(i + 1, f"{path}: entry {i} has unknown label {label!r}")
        trace_path = Path(trace)
        if not trace_path.is_absolute():
            trace_path = path.parent / trace_path
        try:
            samples = read_trace(trace_path)
        except (GpuSentryError, OSError) as exc:
            raise TraceError(str(trace), exc) from exc
        items.append(CorpusItem(label, set_name, samples, str(trace)))
    return items
