import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from happysim.addrmap import DramGeometry
from happysim.errors import ConfigError, TraceParseError
from happysim.metrics import footprint, oracle
from happysim.trace import (GeneratorKind, GeneratorSpec, Trace, generate, mix, parse, serialize,
                            write_trace)

GEO = DramGeometry()
SMALL = DramGeometry(banks=4, rows=256, columns=16)


def test_parse_examples():
    t = parse(["0 R 0x0", "5 W 0x1FC0"])
    assert t.arrival.tolist() == [0, 6]
    assert t.is_write.tolist() == [False, True]
    assert t.addr.tolist() == [0, 0x1FC0]


def test_parse_skips_comments_and_blanks():
    t = parse(io.StringIO("# header\n\n  2 R 40\n"))
    assert len(t) == 1 and t.arrival[0] == 2 and t.addr[0] == 0x40


@pytest.mark.parametrize("line, token", [
    ("3 X 0x10", "X"), ("-1 R 0x10", "-1"), ("1 R 0xZZ", "0xZZ"), ("1 R", "1 R"),
    ("1 R -0x10", "-0x10"),
])
def test_parse_errors_name_line_and_token(line, token):
    with pytest.raises(TraceParseError) as exc:
        parse(["0 R 0x0", line])
    assert exc.value.lineno == 2 and exc.value.token == token
    assert "line 2" in str(exc.value)


def test_parse_error_on_first_line():
    with pytest.raises(TraceParseError) as exc:
        parse(["3 X 0x10"])
    assert exc.value.lineno == 1


def test_capacity_check():
    with pytest.raises(TraceParseError):
        parse([f"0 R {GEO.capacity:#x}"], capacity=GEO.capacity)


@st.composite
def traces(draw):
    n = draw(st.integers(0, 50))
    gaps = draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n))
    arrival = np.cumsum(np.asarray(gaps, dtype=np.int64) + 1) - 1 if n else np.zeros(0, np.int64)
    writes = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    addrs = draw(st.lists(st.integers(0, GEO.capacity - 1), min_size=n, max_size=n))
    return Trace(arrival, writes, addrs, name="t")


@settings(max_examples=100, deadline=None)
@given(traces())
def test_round_trip(trace):
    back = parse(serialize(trace).splitlines(), name="t")
    assert back == trace


def test_file_round_trip(tmp_path):
    t = generate(GeneratorSpec("zipf", length=500, seed=3), GEO)
    path = tmp_path / "z.trace"
    write_trace(t, path)
    assert parse(path) == t


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_generator_is_deterministic(kind):
    spec = GeneratorSpec(kind, length=3000, seed=11)
    assert serialize(generate(spec, GEO)) == serialize(generate(spec, GEO))
    other = generate(GeneratorSpec(kind, length=3000, seed=12), GEO)
    assert other != generate(spec, GEO)


def test_stream_locality():
    t = generate(GeneratorSpec("stream", length=20000, run_length=128, seed=0), GEO)
    b = oracle(t, GEO)
    assert b.hits / len(t) >= 0.99


def test_uniform_locality():
    t = generate(GeneratorSpec("uniform", length=20000, seed=0), GEO)
    b = oracle(t, GEO)
    assert b.hits / len(t) <= 0.01


@pytest.mark.parametrize("kind", ["uniform", "zipf", "phase", "stream"])
def test_coverage_target(kind):
    t = generate(GeneratorSpec(kind, length=40000, coverage=0.3, run_length=4, seed=2), SMALL)
    assert abs(footprint(t, SMALL) - 0.30) <= 0.02


def test_footprint_monotone_in_coverage():
    prints = [footprint(generate(GeneratorSpec("uniform", length=5000, coverage=c, seed=5), SMALL),
                        SMALL) for c in (0.05, 0.1, 0.3, 0.6, 1.0)]
    assert prints == sorted(prints)


def test_infeasible_coverage():
    with pytest.raises(ConfigError):
        generate(GeneratorSpec("uniform", length=10, coverage=1.0), SMALL)
    with pytest.raises(ConfigError):
        GeneratorSpec("uniform", coverage=1.5)


def test_mean_gap():
    t = generate(GeneratorSpec("uniform", length=50000, mean_gap=20, seed=1), GEO)
    assert abs(t.gaps().mean() - 20) < 0.5


def test_mix_of_one_is_identity_plus_tags():
    t = generate(GeneratorSpec("zipf", length=300, seed=1), SMALL)
    m = mix([t], SMALL)
    assert np.array_equal(m.addr, t.addr) and np.array_equal(m.arrival, t.arrival)
    assert set(m.source.tolist()) == {0}


def test_mix_merges_by_arrival():
    parts = [generate(GeneratorSpec("uniform", length=400, ways=4, seed=s), SMALL) for s in range(3)]
    m = mix(parts, SMALL)
    assert np.all(np.diff(m.arrival) >= 0)
    for i, p in enumerate(parts):
        sel = m.source == i
        assert sel.sum() == len(p)
        assert np.array_equal(m.arrival[sel], p.arrival)
        assert np.array_equal(m.addr[sel] - (i << (SMALL.address_bits - 2)), p.addr)
    # ties go to the lower index
    same = np.flatnonzero(np.diff(m.arrival) == 0)
    assert np.all(m.source[same] < m.source[same + 1])


def test_mix_overflow():
    full = generate(GeneratorSpec("uniform", length=400, seed=0), SMALL)
    with pytest.raises(ConfigError):
        mix([full, full], SMALL)


def test_sixteen_way_full_coverage_footprint():
    geo = DramGeometry(banks=8, rows=512, columns=16)
    parts = [generate(GeneratorSpec("uniform", length=2000, coverage=1.0, ways=16, seed=s), geo)
             for s in range(16)]
    assert footprint(mix(parts, geo), geo) >= 0.95


def test_serialize_rejects_simultaneous_records():
    t = Trace(np.array([0, 0]), np.array([False, False]), np.array([0, 64]))
    with pytest.raises(ValueError):
        serialize(t)
