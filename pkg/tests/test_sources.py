import json
from dataclasses import asdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, sample
from gpusentry.errors import (
    InvariantViolation,
    MalformedHeader,
    MalformedLine,
    NonMonotonicTime,
    UnknownGpuIndex,
    UnparsableField,
)
from gpusentry.metrics import MetricSample
from gpusentry.sources import (
    GpuInfo,
    NvidiaSmiSource,
    PmonRow,
    SourceDiagnostics,
    SourceSnapshot,
    parse_pmon_block,
    parse_query_gpu_csv,
    read_trace,
    snapshot_to_keyed_samples,
    snapshot_to_samples,
    write_trace,
)

PMON_GOLDEN = sorted(GOLDEN.glob("pmon_*.txt"))
QUERY_GOLDEN = sorted(GOLDEN.glob("query_*.csv"))


def expected_for(path):
    return json.loads(path.with_name(path.stem + ".expected.json").read_text())


@pytest.mark.parametrize("path", PMON_GOLDEN, ids=lambda p: p.name)
def test_pmon_golden(path):
    rows = parse_pmon_block(path.read_text())
    assert [asdict(r) for r in rows] == expected_for(path)


@pytest.mark.parametrize("path", QUERY_GOLDEN, ids=lambda p: p.name)
def test_query_golden(path):
    gpus = parse_query_gpu_csv(path.read_text())
    assert [asdict(g) for g in gpus] == expected_for(path)


class TestQueryCsv:
    def test_single(self):
        assert parse_query_gpu_csv("index, memory.total [MiB]\n0, 12288 MiB\n") == [GpuInfo(0, 12288)]

    def test_header_only(self):
        assert parse_query_gpu_csv("index, memory.total [MiB]\n") == []

    @pytest.mark.parametrize("text", ["garbage", "", "name, memory.total [MiB]\n0, 1\n"])
    def test_bad_header(self, text):
        with pytest.raises(MalformedHeader):
            parse_query_gpu_csv(text)

    def test_bad_field_reports_row(self):
        with pytest.raises(UnparsableField) as exc:
            parse_query_gpu_csv("index, memory.total [MiB]\n0, 12288 MiB\n1, lots MiB\n")
        assert exc.value.row == 1
        assert exc.value.column == "memory.total"

    def test_zero_memory_rejected(self):
        with pytest.raises(UnparsableField):
            parse_query_gpu_csv("index, memory.total [MiB]\n0, 0 MiB\n")


class TestPmon:
    def test_basic(self):
        rows = parse_pmon_block("# gpu pid type sm mem enc dec fb command\n"
                                "0 4242 C 92 70 - - 11800 xmrig\n")
        assert rows == [PmonRow(0, 4242, 92, 11800, "xmrig")]

    def test_all_dash(self):
        (row,) = parse_pmon_block("0 4242 C - - - - - app\n")
        assert row.sm_pct is None and row.fb_mib is None and row.name == "app"

    def test_non_numeric_pid(self):
        with pytest.raises(UnparsableField):
            parse_pmon_block("0 abc C 92 70 - - 11800 xmrig\n")

    def test_non_numeric_sm(self):
        with pytest.raises(UnparsableField) as exc:
            parse_pmon_block("0 42 C high 70 - - 11800 xmrig\n")
        assert exc.value.column == "sm"

    def test_empty_text(self):
        assert parse_pmon_block("") == []


class TestSnapshotToSamples:
    gpus = [GpuInfo(0, 12288)]

    def test_miner_row(self):
        snap = SourceSnapshot(3.0, [PmonRow(0, 4242, 92, 11800, "xmrig")], {4242: 3_700_000_000})
        (s,) = snapshot_to_samples(snap, self.gpus)
        assert s.util == 92 and s.ram_bytes == 3_700_000_000 and s.t == 3.0
        # 100 * 11800 / 12288
        assert s.mem_pct == pytest.approx(96.02864583333333, rel=1e-12)

    def test_absent_fb_is_zero_mem(self):
        (s,) = snapshot_to_samples(SourceSnapshot(0, [PmonRow(0, 7, 50, None, "a")]), self.gpus)
        assert s.mem_pct == 0 and s.ram_bytes == 0

    def test_absent_sm_dropped(self):
        diag = SourceDiagnostics()
        snap = SourceSnapshot(0, [PmonRow(0, 7, None, 100, "a")])
        assert snapshot_to_samples(snap, self.gpus, diag) == []
        assert diag.rows_without_util == 1

    def test_unknown_gpu(self):
        with pytest.raises(UnknownGpuIndex):
            snapshot_to_samples(SourceSnapshot(0, [PmonRow(7, 1, 50, 1, "a")]), self.gpus)

    def test_overshoot_clamps(self, caplog):
        diag = SourceDiagnostics()
        snap = SourceSnapshot(0, [PmonRow(0, 7, 50, 13000, "a")])
        (s,) = snapshot_to_samples(snap, self.gpus, diag)
        assert s.mem_pct == 100.0
        assert diag.mem_clamped == 1
        assert "clamping" in caplog.text

    def test_keyed_by_gpu_and_pid(self):
        gpus = [GpuInfo(0, 1000), GpuInfo(1, 2000)]
        snap = SourceSnapshot(0, [PmonRow(0, 7, 50, 500, "a"), PmonRow(1, 7, 60, 500, "a")])
        keyed = snapshot_to_keyed_samples(snap, gpus)
        assert [k for k, _ in keyed] == [(0, 7), (1, 7)]
        assert [s.mem_pct for _, s in keyed] == [50.0, 25.0]

    def test_duplicate_rows_rejected(self):
        with pytest.raises(InvariantViolation):
            SourceSnapshot(0, [PmonRow(0, 7, 50, 1, "a"), PmonRow(0, 7, 51, 1, "a")])

    @given(fb=st.floats(min_value=0, max_value=20000), total=st.integers(1, 16384))
    def test_mem_pct_always_in_range(self, fb, total):
        (s,) = snapshot_to_samples(SourceSnapshot(0, [PmonRow(0, 7, 50, fb, "a")]), [GpuInfo(0, total)])
        assert 0 <= s.mem_pct <= 100


class TestNvidiaSmiSource:
    def test_poll_with_canned_output(self):
        outputs = {
            "q": "index, memory.total [MiB]\n0, 12288 MiB\n",
            "p": (GOLDEN / "pmon_driver_format.txt").read_text(),
        }
        clock = iter([100.0, 101.0])
        src = NvidiaSmiSource("p", "q", runner=outputs.__getitem__,
                              ram_lookup=lambda pid: 3_700_000_000 if pid == 4242 else None,
                              clock=lambda: next(clock))
        keyed = src.samples()
        # chrome has no sm value and is dropped
        assert [k for k, _ in keyed] == [(0, 1873), (0, 4242)]
        miner = dict(keyed)[(0, 4242)]
        assert miner.t == 0.0 and miner.ram_bytes == 3_700_000_000 and miner.util == 94
        assert src.poll().t == 1.0


class TestTraceFiles:
    def test_two_lines(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"t": 0, "pid": 1, "name": "a", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n'
                        '{"t": 1.5, "pid": 1, "name": "a", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n')
        assert [s.t for s in read_trace(path)] == [0, 1.5]

    def test_util_out_of_range(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"t": 0, "pid": 1, "name": "a", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n'
                        '{"t": 1, "pid": 1, "name": "a", "util": 150, "mem_pct": 2, "ram_bytes": 3}\n')
        with pytest.raises(InvariantViolation) as exc:
            read_trace(path)
        assert exc.value.line_no == 2 and exc.value.field == "util"

    def test_time_goes_backwards(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"t": 5, "pid": 1, "name": "a", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n'
                        '{"t": 9, "pid": 2, "name": "b", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n'
                        '{"t": 4, "pid": 1, "name": "a", "util": 1, "mem_pct": 2, "ram_bytes": 3}\n')
        with pytest.raises(NonMonotonicTime) as exc:
            read_trace(path)
        assert exc.value.pid == 1 and exc.value.line_no == 3

    @pytest.mark.parametrize("line", ["not json", "[1, 2]", '{"t": 0, "pid": 1}'])
    def test_malformed(self, tmp_path, line):
        path = tmp_path / "t.jsonl"
        path.write_text(line + "\n")
        with pytest.raises(MalformedLine) as exc:
            read_trace(path)
        assert exc.value.line_no == 1

    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_trace([], path)
        assert path.read_text() == ""
        assert read_trace(path) == []

    def test_unwritable_path(self, tmp_path):
        target = tmp_path / "missing-dir" / "t.jsonl"
        with pytest.raises(OSError) as exc:
            write_trace([sample(0)], target)
        assert "missing-dir" in str(exc.value)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(
        st.floats(min_value=0.001, max_value=10, allow_nan=False),
        st.floats(min_value=0, max_value=100, allow_nan=False),
        st.floats(min_value=0, max_value=100, allow_nan=False),
        st.integers(0, 2**40),
        st.text(max_size=12),
    ), max_size=40))
    def test_round_trip_property(self, tmp_path_factory, rows):
        t = 0.0
        samples = []
        for dt, util, mem, ram, name in rows:
            t += dt
            samples.append(MetricSample(t=t, pid=77, name=name, util=util, mem_pct=mem, ram_bytes=ram))
        path = tmp_path_factory.mktemp("rt") / "t.jsonl"
        write_trace(samples, path)
        assert read_trace(path) == samples
