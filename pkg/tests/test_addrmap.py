import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from happysim.addrmap import (DecodedAddress, DramGeometry, MappingScheme, decode, decode_array,
                              encode, participant_bits)
from happysim.errors import AddressRangeError, ConfigError

SCHEMES = list(MappingScheme)
DEFAULT = DramGeometry()


@st.composite
def geometries(draw):
    p2 = lambda lo, hi: st.integers(lo, hi).map(lambda k: 1 << k)
    return DramGeometry(channels=draw(p2(0, 2)), ranks=draw(p2(0, 2)), banks=draw(p2(0, 4)),
                        rows=draw(p2(1, 12)), columns=draw(p2(0, 8)), line_bytes=draw(p2(0, 7)))


def test_zero_address_decodes_to_origin():
    assert decode(0, DEFAULT, MappingScheme.ROW_LOCALITY) == DecodedAddress(0, 0, 0, 0, 0)


def test_permutation_xors_low_row_bits_into_bank():
    # row 5 = 0b101, raw bank field 0b001 -> bank 0b100
    bits = DEFAULT.bits()
    bank_lsb = bits["offset"] + bits["channel"] + bits["column"]
    row_lsb = bank_lsb + bits["bank"] + bits["rank"]
    addr = (5 << row_lsb) | (1 << bank_lsb)
    d = decode(addr, DEFAULT, MappingScheme.PERMUTATION)
    assert d.row == 5 and d.bank == 4
    assert decode(addr, DEFAULT, MappingScheme.ROW_LOCALITY).bank == 1


def test_row_locality_slice_order():
    geo = DramGeometry(channels=2, ranks=2, banks=4, rows=8, columns=4, line_bytes=2)
    # offset 1 bit, channel 1, column 2, bank 2, rank 1, row 3 (LSB first)
    addr = 0b101_1_10_11_1_0
    assert decode(addr, geo, "row_locality") == DecodedAddress(channel=1, rank=1, bank=2, row=5, column=3)


def test_minimalist_splits_column_above_channel():
    geo = DramGeometry(channels=2, ranks=1, banks=4, rows=8, columns=16, line_bytes=2)
    # offset 1 | channel 1 | column_lo 2 | bank 2 | column_hi 2 | row 3
    addr = (0b011 << 8) | (0b10 << 6) | (0b01 << 4) | (0b11 << 2) | (1 << 1)
    d = decode(addr, geo, MappingScheme.MINIMALIST)
    assert d.channel == 1 and d.column == 0b1011 and d.row == 3
    assert d.bank == 0b01 ^ (3 & 3)


def test_scheme_aliases():
    assert MappingScheme.parse("mapping3") is MappingScheme.PERMUTATION
    assert MappingScheme.parse(4) is MappingScheme.MINIMALIST
    with pytest.raises(ConfigError):
        MappingScheme.parse("zigzag")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_bijective_on_small_geometry(scheme):
    geo = DramGeometry(channels=2, ranks=2, banks=4, rows=16, columns=8, line_bytes=1)
    addrs = np.arange(geo.capacity)
    decoded = decode_array(addrs, geo, scheme)
    keys = set(zip(*(a.tolist() for a in decoded)))
    assert len(keys) == geo.capacity
    assert np.array_equal(encode(decoded, geo, scheme), addrs)


@settings(max_examples=200, deadline=None)
@given(geometries(), st.sampled_from(SCHEMES), st.data())
def test_encode_inverts_decode(geo, scheme, data):
    line = data.draw(st.integers(0, geo.capacity // geo.line_bytes - 1))
    addr = line * geo.line_bytes
    d = decode(addr, geo, scheme)
    assert encode(d, geo, scheme) == addr


def test_out_of_range_rejected():
    with pytest.raises(AddressRangeError):
        decode(DEFAULT.capacity, DEFAULT)
    with pytest.raises(AddressRangeError):
        decode(-1, DEFAULT)
    with pytest.raises(AddressRangeError):
        encode(DecodedAddress(0, 0, 8, 0, 0), DEFAULT)


@pytest.mark.parametrize("field", ["channels", "ranks", "banks", "rows", "columns", "line_bytes"])
def test_non_power_of_two_geometry_rejected(field):
    with pytest.raises(ConfigError):
        DramGeometry(**{field: 3})


def test_trc_must_cover_row_cycle():
    with pytest.raises(ConfigError):
        DramGeometry(tRC=20)


def test_participant_bit_counts():
    geo = DramGeometry(channels=1, ranks=2, banks=8, rows=32768)
    assert len(participant_bits(geo)) == 19
    bits = participant_bits(DramGeometry(channels=1, ranks=1, banks=8, rows=1024))
    assert len(bits) == 3 + 10


@given(geometries())
def test_permutation_shares_row_locality_participants(geo):
    assert participant_bits(geo, "permutation") == participant_bits(geo, "row_locality")


@settings(max_examples=60, deadline=None)
@given(geometries(), st.sampled_from(SCHEMES), st.data())
def test_non_participant_bits_never_change_location(geo, scheme, data):
    part = set(participant_bits(geo, scheme))
    addr = data.draw(st.integers(0, geo.capacity - 1))
    base = decode(addr, geo, scheme)
    for b in range(geo.address_bits):
        flipped = decode(addr ^ (1 << b), geo, scheme)
        same = (flipped.channel, flipped.rank, flipped.bank, flipped.row) == \
               (base.channel, base.rank, base.bank, base.row)
        assert same == (b not in part)


def test_from_capacity_convention():
    geo = DramGeometry.from_capacity(64 << 30)
    assert (geo.ranks, geo.banks, geo.rows, geo.row_bytes) == (32, 8, 32768, 8192)
    assert geo.capacity == 64 << 30
    with pytest.raises(ConfigError):
        DramGeometry.from_capacity(3 << 30)


def test_vector_decode_matches_scalar():
    rng = np.random.default_rng(1)
    addrs = rng.integers(0, DEFAULT.capacity, 500)
    for scheme in SCHEMES:
        arrays = decode_array(addrs, DEFAULT, scheme)
        for i, a in enumerate(addrs.tolist()):
            d = decode(a, DEFAULT, scheme)
            assert (d.channel, d.rank, d.bank, d.row, d.column) == tuple(int(x[i]) for x in arrays)
