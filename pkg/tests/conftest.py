import math
from pathlib import Path

from gpusentry.metrics import MetricSample, WindowStats

GOLDEN = Path(__file__).parent / "golden"


def two_pass_std(values):
    """Textbook population standard deviation, kept independent of the package."""
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((x - mean) ** 2 for x in values) / n)


def sample(t, pid=4242, util=92.0, mem_pct=98.0, ram=3_700_000_000, name="xmrig"):
    return MetricSample(t=t, pid=pid, name=name, util=util, mem_pct=mem_pct, ram_bytes=ram)


def make_stats(**kw):
    base = dict(pid=4242, n=60, util_mean=92.0, util_std=2.0, mem_pct_mean=98.0,
                ram_mean=3.7e9, ram_std=1.85e7, ram_cv=0.005, presence=1.0,
                name="xmrig", t_first=0.0, t_last=59.0)
    base.update(kw)
    return WindowStats(**base)


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
