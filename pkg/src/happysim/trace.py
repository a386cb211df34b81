"""Memory traces: text format, synthetic generators and multi-workload mixes.

Trace file grammar (one record per line)::

    <gap> <R|W> <hex-addr>

``gap`` is a non-negative decimal count of non-memory cycles since the
previous record, the address is hexadecimal with an optional ``0x`` prefix.
Blank lines and lines starting with ``#`` are ignored. Arrival cycles are
``arrival[0] = gap[0]`` and ``arrival[k] = arrival[k-1] + 1 + gap[k]``: every
record costs one issue cycle on top of its gap.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .addrmap import MappingScheme, encode
from .dram import MemoryRequest, Op
from .errors import ConfigError, TraceParseError


@dataclass
class Trace:
    """Column-oriented request stream (numpy arrays of equal length)."""

    arrival: np.ndarray
    is_write: np.ndarray
    addr: np.ndarray
    source: np.ndarray = None
    name: str = "trace"

    def __post_init__(self):
        self.arrival = np.asarray(self.arrival, dtype=np.int64)
        self.is_write = np.asarray(self.is_write, dtype=bool)
        self.addr = np.asarray(self.addr, dtype=np.int64)
        if self.source is None:
            self.source = np.zeros(len(self.arrival), dtype=np.int32)
        self.source = np.asarray(self.source, dtype=np.int32)
        n = len(self.arrival)
        if not (len(self.is_write) == len(self.addr) == len(self.source) == n):
            raise ValueError("trace columns must have equal length")

    def __len__(self):
        return len(self.arrival)

    def __iter__(self):
        for t, w, a, s in zip(self.arrival.tolist(), self.is_write.tolist(),
                              self.addr.tolist(), self.source.tolist()):
            yield MemoryRequest(t, Op.WRITE if w else Op.READ, a, s)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (np.array_equal(self.arrival, other.arrival)
                and np.array_equal(self.is_write, other.is_write)
                and np.array_equal(self.addr, other.addr)
                and np.array_equal(self.source, other.source))

    def gaps(self):
        """Per-record gaps that reproduce ``arrival`` under the file grammar."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        g = np.empty(len(self), dtype=np.int64)
        g[0] = self.arrival[0]
        g[1:] = np.diff(self.arrival) - 1
        return g

    @classmethod
    def from_requests(cls, requests, name="trace"):
        reqs = list(requests)
        return cls([r.arrival for r in reqs], [r.op is Op.WRITE for r in reqs],
                   [r.addr for r in reqs], [r.source for r in reqs], name=name)


def parse(source, capacity=None, name=None):
    """Read a trace from a path, an open text file or an iterable of lines.

    ``capacity`` (bytes) rejects addresses at or beyond it. Raises
    ``TraceParseError`` naming the line and token on malformed input.
    """
    path = None
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "r", encoding="ascii") as fh:
            lines = fh.readlines()
        if name is None:
            name = os.path.splitext(os.path.basename(path))[0]
    elif isinstance(source, io.IOBase):
        lines = source.readlines()
    else:
        lines = list(source)
    gaps, writes, addrs = [], [], []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise TraceParseError(f"expected '<gap> <R|W> <hex-addr>', got {len(parts)} fields",
                                  lineno, text, path)
        gap_tok, op_tok, addr_tok = parts
        if not gap_tok.isdigit():
            raise TraceParseError(f"invalid gap {gap_tok!r}", lineno, gap_tok, path)
        if op_tok not in ("R", "W"):
            raise TraceParseError(f"invalid op {op_tok!r} (expected R or W)", lineno, op_tok, path)
        try:
            addr = int(addr_tok, 16)
        except ValueError:
            raise TraceParseError(f"invalid hex address {addr_tok!r}", lineno, addr_tok, path) from None
        if addr < 0:
            raise TraceParseError(f"negative address {addr_tok!r}", lineno, addr_tok, path)
        if capacity is not None and addr >= capacity:
            raise TraceParseError(f"address {addr_tok} outside capacity {capacity:#x}",
                                  lineno, addr_tok, path)
        gaps.append(int(gap_tok))
        writes.append(op_tok == "W")
        addrs.append(addr)
    g = np.asarray(gaps, dtype=np.int64)
    arrival = np.cumsum(g + 1) - 1 if len(g) else g
    return Trace(arrival, writes, addrs, name=name or "trace")


def serialize(trace):
    """Render ``trace`` in the text grammar; ``parse`` inverts it."""
    gaps = trace.gaps()
    if len(gaps) and gaps.min() < 0:
        raise ValueError("arrivals must strictly increase to be expressible as gaps")
    out = [f"# {trace.name}: {len(trace)} records"]
    for g, w, a in zip(gaps.tolist(), trace.is_write.tolist(), trace.addr.tolist()):
        out.append(f"{g} {'W' if w else 'R'} {a:#x}")
    return "\n".join(out) + "\n"


def write_trace(trace, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize(trace))


class GeneratorKind(str, enum.Enum):
    STREAM = "stream"
    UNIFORM = "uniform"
    ZIPF = "zipf"
    PHASE = "phase"

    @classmethod
    def parse(cls, value):
        aliases = {"uniformrandom": cls.UNIFORM, "random": cls.UNIFORM, "zipfrows": cls.ZIPF,
                   "phasealternating": cls.PHASE}
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown generator kind {value!r}") from None


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic workload description.

    ``coverage`` is the fraction of DRAM rows the trace must touch (None:
    unconstrained). ``run_length`` is the number of consecutive records that
    stay in one row (fixed for stream, geometric mean for the other kinds).
    ``ways`` confines the trace to the low ``1/ways`` of the address space so
    it can later be mixed with ``ways - 1`` others.
    """

    kind: GeneratorKind = GeneratorKind.UNIFORM
    length: int = 10_000
    coverage: float | None = None
    run_length: int | None = None
    zipf_s: float = 1.1
    phase_length: int = 4096
    mean_gap: float = 20.0
    write_fraction: float = 0.3
    ways: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind.parse(self.kind))
        if self.length < 0:
            raise ConfigError("generator length must be >= 0")
        if self.coverage is not None and not 0 < self.coverage <= 1:
            raise ConfigError(f"generator coverage must lie in (0, 1], got {self.coverage}")
        if self.run_length is not None and self.run_length < 1:
            raise ConfigError("generator run_length must be >= 1")
        if self.mean_gap < 0:
            raise ConfigError("generator mean_gap must be >= 0")
        if not 0 <= self.write_fraction <= 1:
            raise ConfigError("generator write_fraction must lie in [0, 1]")
        if self.ways < 1 or self.ways & (self.ways - 1):
            raise ConfigError("generator ways must be a power of two")
        if self.phase_length < 1:
            raise ConfigError("generator phase_length must be >= 1")

    @property
    def effective_run_length(self):
        if self.run_length is not None:
            return self.run_length
        return 128 if self.kind in (GeneratorKind.STREAM, GeneratorKind.PHASE) else 1


def subspace(geo, ways):
    """Geometry covering the low ``1/ways`` of ``geo``'s address space.

    Row is the most significant field under every mapping scheme, so
    addresses encoded against the subspace are valid, identical addresses in
    the full geometry.
    """
    if ways == 1:
        return geo
    if geo.rows % ways:
        raise ConfigError(f"cannot split {geo.rows} rows per bank {ways} ways")
    return replace(geo, rows=geo.rows // ways)


def _split_row_id(g, geo):
    # global row id ordered (row, rank, bank, channel) MSB -> LSB
    ch = g % geo.channels
    g = g // geo.channels
    bank = g % geo.banks
    g = g // geo.banks
    rank = g % geo.ranks
    row = g // geo.ranks
    return ch, rank, bank, row


def _run_lengths(rng, total, mean, fixed):
    """Split ``total`` records into runs; returns run lengths."""
    if fixed or mean == 1:
        n = -(-total // mean)
        runs = np.full(n, mean, dtype=np.int64)
    else:
        runs = rng.geometric(1.0 / mean, size=max(1, 2 * total // mean + 16)).astype(np.int64)
        while runs.sum() < total:
            runs = np.concatenate([runs, rng.geometric(1.0 / mean, size=len(runs))])
        runs = runs[: int(np.searchsorted(np.cumsum(runs), total)) + 1]
    if len(runs):
        runs[-1] -= runs.sum() - total
    return runs[runs > 0]


def _covering_draws(rng, pool, count, weights=None):
    """``count`` row draws from ``pool`` that contain every pool entry at least once."""
    k = len(pool)
    if count < k:
        raise ConfigError(f"coverage of {k} rows needs at least {k} row visits, trace provides {count}")
    extra = rng.choice(pool, size=count - k, p=weights)
    draws = np.concatenate([pool, extra])
    rng.shuffle(draws)
    return draws


def generate(spec, geo, scheme=MappingScheme.ROW_LOCALITY, name=None):
    """Deterministic synthetic trace for ``spec`` (same spec -> same trace).

    Rows, run lengths and coverage are laid out in DRAM coordinates and then
    encoded with ``scheme``. Decoding the result under a different mapping
    replays the same address stream under that mapping, which is how mapping
    sensitivity is measured; keep ``scheme`` fixed across such sweeps.
    """
    scheme = MappingScheme.parse(scheme)
    sub = subspace(geo, spec.ways)
    rng = np.random.default_rng(spec.seed)
    n = spec.length
    nrows = sub.total_rows
    run = spec.effective_run_length

    if spec.coverage is not None:
        k = max(1, int(round(spec.coverage * nrows)))
        if k > n:
            raise ConfigError(f"coverage {spec.coverage} needs {k} distinct rows but length is {n}")
        pool = np.sort(rng.choice(nrows, size=k, replace=False))
    else:
        pool = None

    def stream_rows(nruns, start_state):
        # sequential sweep through the pool (or all rows), wrapping around
        size = len(pool) if pool is not None else nrows
        if pool is not None and nruns < size and spec.kind is GeneratorKind.STREAM:
            raise ConfigError(f"stream with {nruns} runs cannot cover {size} rows")
        idx = (start_state + np.arange(nruns)) % size
        return (pool[idx] if pool is not None else idx), start_state + nruns

    def random_rows(nruns):
        if spec.kind is GeneratorKind.ZIPF:
            size = len(pool) if pool is not None else nrows
            ranks = np.arange(1, size + 1, dtype=np.float64)
            w = ranks ** -spec.zipf_s
            w /= w.sum()
            base = rng.permutation(pool if pool is not None else np.arange(nrows))
            if pool is not None:
                return _covering_draws(rng, base, nruns, w)
            return base[rng.choice(size, size=nruns, p=w)]
        if pool is not None:
            return _covering_draws(rng, pool, nruns)
        return rng.integers(0, nrows, size=nruns)

    row_ids = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    if spec.kind is GeneratorKind.STREAM:
        runs = _run_lengths(rng, n, run, fixed=True)
        start = int(rng.integers(0, len(pool) if pool is not None else nrows))
        rows, _ = stream_rows(len(runs), start)
        row_ids[:] = np.repeat(rows, runs)
        col0 = np.repeat(rng.integers(0, sub.columns, size=len(runs)), runs)
        offs = np.arange(n) - np.repeat(np.cumsum(runs) - runs, runs)
        cols[:] = (col0 + offs) % sub.columns
    elif spec.kind in (GeneratorKind.UNIFORM, GeneratorKind.ZIPF):
        runs = _run_lengths(rng, n, run, fixed=False)
        row_ids[:] = np.repeat(random_rows(len(runs)), runs)
        cols[:] = rng.integers(0, sub.columns, size=n)
    else:
        # alternate stream / uniform segments of phase_length records
        seg_starts = np.arange(0, n, spec.phase_length)
        stream_segs = [(s, min(n, s + spec.phase_length)) for j, s in enumerate(seg_starts) if j % 2 == 0]
        random_segs = [(s, min(n, s + spec.phase_length)) for j, s in enumerate(seg_starts) if j % 2 == 1]
        n_random = sum(b - a for a, b in random_segs)
        if pool is not None and n_random == 0:
            raise ConfigError("phase generator needs at least two phases to honour coverage")
        rand_rows = random_rows(n_random) if n_random else np.zeros(0, dtype=np.int64)
        pos = 0
        for a, b in random_segs:
            row_ids[a:b] = rand_rows[pos:pos + (b - a)]
            cols[a:b] = rng.integers(0, sub.columns, size=b - a)
            pos += b - a
        state = int(rng.integers(0, len(pool) if pool is not None else nrows))
        for a, b in stream_segs:
            runs = _run_lengths(rng, b - a, run, fixed=True)
            size = len(pool) if pool is not None else nrows
            idx = (state + np.arange(len(runs))) % size
            state += len(runs)
            rows = pool[idx] if pool is not None else idx
            row_ids[a:b] = np.repeat(rows, runs)
            offs = np.arange(b - a) - np.repeat(np.cumsum(runs) - runs, runs)
            cols[a:b] = offs % sub.columns

    ch, rank, bank, row = _split_row_id(row_ids, sub)
    addr = encode((ch, rank, bank, row, cols), sub, scheme)
    if spec.mean_gap > 0:
        gaps = rng.geometric(1.0 / (spec.mean_gap + 1.0), size=n).astype(np.int64) - 1
    else:
        gaps = np.zeros(n, dtype=np.int64)
    arrival = np.cumsum(gaps + 1) - 1 if n else gaps
    writes = rng.random(n) < spec.write_fraction
    return Trace(arrival, writes, addr, name=name or f"{spec.kind.value}-{spec.seed}")


def mix(traces, geo, name="mix"):
    """Merge traces by arrival cycle into one tagged stream.

    Trace ``i`` is moved into its own slice of the address space by prefixing
    its addresses with ``i`` in the top ``ceil(log2(len(traces)))`` bits.
    Ties in arrival go to the lower trace index; each record's ``source`` is
    its trace index.
    """
    traces = list(traces)
    if not traces:
        raise ConfigError("mix needs at least one trace")
    prefix_bits = (len(traces) - 1).bit_length()
    shift = geo.address_bits - prefix_bits
    if shift < 0:
        raise ConfigError(f"cannot mix {len(traces)} traces into a {geo.address_bits}-bit space")
    limit = 1 << shift
    addrs, arrivals, writes, sources = [], [], [], []
    for i, t in enumerate(traces):
        if len(t) and int(t.addr.max()) >= limit:
            raise ConfigError(f"trace {t.name!r} reaches {int(t.addr.max()):#x}, beyond the "
                              f"{limit:#x}-byte slice available in a {len(traces)}-way mix")
        addrs.append(t.addr + (i << shift))
        arrivals.append(t.arrival)
        writes.append(t.is_write)
        sources.append(np.full(len(t), i, dtype=np.int32))
    arrival = np.concatenate(arrivals)
    source = np.concatenate(sources)
    order = np.lexsort((source, arrival))
    return Trace(arrival[order], np.concatenate(writes)[order], np.concatenate(addrs)[order],
                 source[order], name=name)
