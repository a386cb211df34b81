"""Physical address -> DRAM coordinate decoding.

Three interleaving schemes are supported. Field layouts, listed MSB to LSB
(``offset`` is the byte offset inside a cacheline):

``ROW_LOCALITY``
    ``row | rank | bank | column | channel | offset``. A linear sweep stays
    inside one row for a full row's worth of cachelines.
``PERMUTATION``
    Same slices as ``ROW_LOCALITY``, but the bank index is the bank field
    XOR the lowest ``log2(banks)`` row bits, so rows that would collide in a
    bank get spread across banks.
``MINIMALIST``
    ``row | column_hi | rank | bank | column_lo | channel | offset`` with the
    same bank XOR. Only ``MINIMALIST_LOW_COLUMN_BITS`` column bits sit right
    above the channel field; the remaining column bits move above rank, so a
    sweep touches a short run of lines per row before hopping bank.

The exact slice positions are a fixed convention of this package (the
original figures are diagrams only). Every scheme is a bijection between
cacheline addresses and ``DecodedAddress`` tuples; ``encode`` is the inverse.

All bit-twiddling helpers accept Python ints or integer numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import AddressRangeError, ConfigError

MINIMALIST_LOW_COLUMN_BITS = 2


def _is_pow2(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def _log2(n):
    return int(n).bit_length() - 1


class MappingScheme(str, enum.Enum):
    ROW_LOCALITY = "row_locality"
    PERMUTATION = "permutation"
    MINIMALIST = "minimalist"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "1": cls.ROW_LOCALITY,
            "mapping1": cls.ROW_LOCALITY,
            "3": cls.PERMUTATION,
            "mapping3": cls.PERMUTATION,
            "4": cls.MINIMALIST,
            "mapping4": cls.MINIMALIST,
        }
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown mapping scheme {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class DramGeometry:
    """Channel/rank/bank/row/column topology plus DRAM timings in cycles."""

    channels: int = 1
    ranks: int = 1
    banks: int = 8
    rows: int = 65536
    columns: int = 128  # cachelines per row
    line_bytes: int = 64
    tRCD: int = 13
    tCL: int = 13
    tRP: int = 13
    tRC: int = 40
    bus_mhz: float = 800.0

    def __post_init__(self):
        for name in ("channels", "ranks", "banks", "rows", "columns", "line_bytes"):
            value = getattr(self, name)
            if not _is_pow2(value):
                raise ConfigError(f"geometry.{name} must be a positive power of two, got {value!r}")
        for name in ("tRCD", "tCL", "tRP", "tRC"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ConfigError(f"geometry.{name} must be a positive integer cycle count, got {value!r}")
        if self.tRC < self.tRCD + self.tRP:
            raise ConfigError(
                f"geometry.tRC={self.tRC} violates tRC >= tRCD + tRP ({self.tRCD} + {self.tRP})"
            )

    @property
    def capacity(self):
        return self.channels * self.ranks * self.banks * self.rows * self.columns * self.line_bytes

    @property
    def address_bits(self):
        return _log2(self.capacity)

    @property
    def row_bytes(self):
        return self.columns * self.line_bytes

    @property
    def total_banks(self):
        return self.channels * self.ranks * self.banks

    @property
    def total_rows(self):
        return self.total_banks * self.rows

    def bits(self):
        """Field widths in bits, keyed by field name."""
        return {
            "offset": _log2(self.line_bytes),
            "channel": _log2(self.channels),
            "column": _log2(self.columns),
            "bank": _log2(self.banks),
            "rank": _log2(self.ranks),
            "row": _log2(self.rows),
        }

    @classmethod
    def from_capacity(cls, capacity_bytes, *, rank_bytes=2 << 30, banks=8, columns=128,
                      line_bytes=64, channels=1, **timings):
        """Geometry with a fixed per-rank size; ranks grow with capacity.

        Used for storage-scaling sweeps: 2 GB ranks of 8 banks with 8 KB rows
        by default. Capacities below one rank shrink the row count instead.
        """
        if not _is_pow2(capacity_bytes):
            raise ConfigError(f"capacity must be a power of two number of bytes, got {capacity_bytes!r}")
        row_bytes = columns * line_bytes
        per_channel = capacity_bytes // channels
        if per_channel >= rank_bytes:
            ranks = per_channel // rank_bytes
            rows = rank_bytes // (banks * row_bytes)
        else:
            ranks = 1
            rows = per_channel // (banks * row_bytes)
        if rows < 1:
            raise ConfigError(f"capacity {capacity_bytes} too small for {banks} banks of {row_bytes} B rows")
        return cls(channels=channels, ranks=ranks, banks=banks, rows=rows, columns=columns,
                   line_bytes=line_bytes, **timings)


@dataclass(frozen=True)
class DecodedAddress:
    channel: int
    rank: int
    bank: int
    row: int
    column: int

    @property
    def bank_key(self):
        """Flat identifier of the (channel, rank, bank) this address lands in."""
        return (self.channel, self.rank, self.bank)


@dataclass(frozen=True)
class _Layout:
    # (field, lsb position, width); column may appear as column_lo / column_hi
    slices: tuple
    column_lo_bits: int
    xor_bank: bool
    positions: dict = field(default_factory=dict)


_LAYOUT_CACHE = {}


def _layout(geo, scheme):
    key = (geo.channels, geo.ranks, geo.banks, geo.rows, geo.columns, geo.line_bytes, scheme)
    cached = _LAYOUT_CACHE.get(key)
    if cached is not None:
        return cached
    b = geo.bits()
    if scheme is MappingScheme.MINIMALIST:
        lo = min(MINIMALIST_LOW_COLUMN_BITS, b["column"])
        order = [("offset", b["offset"]), ("channel", b["channel"]), ("column_lo", lo),
                 ("bank", b["bank"]), ("rank", b["rank"]), ("column_hi", b["column"] - lo),
                 ("row", b["row"])]
    else:
        lo = b["column"]
        order = [("offset", b["offset"]), ("channel", b["channel"]), ("column_lo", lo),
                 ("column_hi", 0), ("bank", b["bank"]), ("rank", b["rank"]), ("row", b["row"])]
    slices = []
    pos = 0
    for name, width in order:
        slices.append((name, pos, width))
        pos += width
    layout = _Layout(tuple(slices), lo, scheme is not MappingScheme.ROW_LOCALITY,
                     {name: (p, w) for name, p, w in slices})
    _LAYOUT_CACHE[key] = layout
    return layout


def _field(addr, lsb, width):
    return (addr >> lsb) & ((1 << width) - 1)


def decode_fields(addr, geo, scheme):
    """Decode ``addr`` (int or integer array) into a tuple of
    ``(channel, rank, bank, row, column)`` without range checks."""
    scheme = MappingScheme.parse(scheme)
    lay = _layout(geo, scheme)
    p = lay.positions
    channel = _field(addr, *p["channel"])
    rank = _field(addr, *p["rank"])
    bank = _field(addr, *p["bank"])
    row = _field(addr, *p["row"])
    column = _field(addr, *p["column_lo"]) | (_field(addr, *p["column_hi"]) << lay.column_lo_bits)
    if lay.xor_bank:
        bank = bank ^ (row & (geo.banks - 1))
    return channel, rank, bank, row, column


def _check_range(addr, geo):
    if isinstance(addr, np.ndarray):
        if addr.size and (addr.min() < 0 or addr.max() >= geo.capacity):
            bad = addr[(addr < 0) | (addr >= geo.capacity)][0]
            raise AddressRangeError(f"address {int(bad):#x} outside capacity {geo.capacity:#x}")
    elif addr < 0 or addr >= geo.capacity:
        raise AddressRangeError(f"address {addr:#x} outside capacity {geo.capacity:#x}")


def decode(addr, geo, scheme=MappingScheme.ROW_LOCALITY):
    """Decode one physical address into a ``DecodedAddress``."""
    addr = int(addr)
    _check_range(addr, geo)
    return DecodedAddress(*(int(v) for v in decode_fields(addr, geo, scheme)))


def decode_array(addrs, geo, scheme=MappingScheme.ROW_LOCALITY):
    """Vectorised decode; returns five int64 arrays (channel, rank, bank, row, column)."""
    addrs = np.asarray(addrs, dtype=np.int64)
    _check_range(addrs, geo)
    return tuple(np.asarray(v, dtype=np.int64) for v in decode_fields(addrs, geo, scheme))


def encode(decoded, geo, scheme=MappingScheme.ROW_LOCALITY, offset=0):
    """Inverse of ``decode``: build the cacheline address (plus byte ``offset``).

    ``decoded`` may be a ``DecodedAddress`` or a 5-tuple of ints/arrays in
    ``(channel, rank, bank, row, column)`` order.
    """
    scheme = MappingScheme.parse(scheme)
    if isinstance(decoded, DecodedAddress):
        channel, rank, bank, row, column = (decoded.channel, decoded.rank, decoded.bank,
                                            decoded.row, decoded.column)
        bounds = ((channel, geo.channels, "channel"), (rank, geo.ranks, "rank"),
                  (bank, geo.banks, "bank"), (row, geo.rows, "row"), (column, geo.columns, "column"))
        for value, limit, name in bounds:
            if not 0 <= value < limit:
                raise AddressRangeError(f"{name} index {value} outside [0, {limit})")
    else:
        channel, rank, bank, row, column = decoded
    lay = _layout(geo, scheme)
    p = lay.positions
    if lay.xor_bank:
        bank = bank ^ (row & (geo.banks - 1))
    col_lo = column & ((1 << lay.column_lo_bits) - 1)
    col_hi = column >> lay.column_lo_bits
    return ((row << p["row"][0]) | (rank << p["rank"][0]) | (bank << p["bank"][0])
            | (col_hi << p["column_hi"][0]) | (col_lo << p["column_lo"][0])
            | (channel << p["channel"][0]) | offset)


def participant_bits(geo, scheme=MappingScheme.ROW_LOCALITY):
    """Address bit positions feeding channel, rank, bank or row (ascending).

    Column and byte-offset bits are excluded. The XOR of the permutation
    schemes re-uses row bits, so the set is the same physical positions as
    the plain slice layout.
    """
    scheme = MappingScheme.parse(scheme)
    lay = _layout(geo, scheme)
    out = []
    for name in ("channel", "bank", "rank", "row"):
        lsb, width = lay.positions[name]
        out.extend(range(lsb, lsb + width))
    return tuple(sorted(out))
