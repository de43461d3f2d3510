import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import S2K2, S2K3, first_state, naive_region
from latticeperm.lattice import (
    BitLatticeTuple,
    CapacityError,
    LatticeError,
    LatticeShape,
    RegionLabel,
    axis_slice,
    classify,
    color_class_size,
    count_color_classes,
    format_tuple_line,
    in_distinct,
    index_pack,
    index_unpack,
    parse_tuple_line,
    region_census,
    region_labels_all,
    set_partitions,
    slice_coloring,
    standard_start,
)


# -- packing ----------------------------------------------------------------------


@given(st.integers(1, 3), st.integers(2, 4), st.integers(1, 3), st.data())
def test_index_pack_roundtrip(dims, side, k, data):
    shape = LatticeShape(dims, side, k)
    coords = tuple(data.draw(st.integers(0, side - 1)) for _ in range(dims))
    member = data.draw(st.integers(0, k - 1))
    idx = index_pack(coords, member, shape)
    assert 0 <= idx < shape.nbits
    assert index_unpack(idx, shape) == (coords, member)


def test_index_pack_is_a_bijection():
    shape = LatticeShape(2, 3, 2)
    seen = {index_pack((i, j), l, shape) for i in range(3) for j in range(3) for l in range(2)}
    assert seen == set(range(shape.nbits))


@pytest.mark.parametrize("coords,member", [((2, 0), 0), ((0, -1), 0), ((0, 0), 2), ((0,), 0)])
def test_index_pack_rejects_out_of_range(coords, member):
    with pytest.raises(LatticeError):
        index_pack(coords, member, S2K2)


def test_slice_bits_are_contiguous():
    # every axis-0 slice occupies a consecutive run of n/s * k bits
    shape = LatticeShape(3, 2, 2)
    for i in range(2):
        idx = sorted(index_pack((i, a, b), l, shape) for a in range(2) for b in range(2) for l in range(2))
        assert idx == list(range(idx[0], idx[0] + 8))


@given(st.integers(0, 255))
def test_members_roundtrip(bits):
    X = BitLatticeTuple(S2K2, bits)
    assert BitLatticeTuple.from_members(X.member_bits(), S2K2) == X
    assert BitLatticeTuple.from_grids([X.member(0), X.member(1)]) == X


@given(st.integers(0, (1 << 18) - 1))
def test_text_roundtrip(bits):
    X = BitLatticeTuple(LatticeShape(2, 3, 2), bits)
    assert parse_tuple_line(format_tuple_line(X), 2, 3) == X


def test_text_accepts_unicode_minus_and_rejects_garbage():
    assert parse_tuple_line("+−−+|++++", 2, 2) == parse_tuple_line("+--+|++++", 2, 2)
    with pytest.raises(LatticeError):
        parse_tuple_line("+-x+|++++", 2, 2)
    with pytest.raises(LatticeError):
        parse_tuple_line("+-+|++++", 2, 2)


def test_render_one_line_per_slice():
    X = parse_tuple_line("+--+|++++", 2, 2)
    assert X.render() == "+−|++\n−+|++"


def test_axis_slice():
    X = parse_tuple_line("+--+|++-+", 2, 2)
    assert format_tuple_line(axis_slice(X, 0, 1)) == "-+|-+"
    assert format_tuple_line(axis_slice(X, 1, 0)) == "+-|+-"
    with pytest.raises(LatticeError):
        axis_slice(X, 2, 0)
    with pytest.raises(LatticeError):
        axis_slice(X, 0, 2)


def test_bits_must_fit_shape():
    with pytest.raises(LatticeError):
        BitLatticeTuple(S2K2, 256)


# -- partitions and classes ------------------------------------------------------------


def test_set_partitions_bell_numbers():
    assert [len(list(set_partitions(k))) for k in range(7)] == [1, 1, 2, 5, 15, 52, 203]


def test_set_partitions_are_canonical():
    for p in set_partitions(5):
        assert p[0] == 0
        assert all(p[i] <= max(p[:i]) + 1 for i in range(1, 5))


def test_set_partitions_cap():
    with pytest.raises(CapacityError):
        list(set_partitions(9))


@pytest.mark.parametrize("shape", [S2K2, S2K3, LatticeShape(2, 2, 1)])
def test_classify_matches_definitions(shape):
    names = {RegionLabel.SAFE: "safe", RegionLabel.COLL: "coll", RegionLabel.IDENT: "ident"}
    lab = region_labels_all(shape)
    for bits in range(shape.num_states):
        want = naive_region(shape, bits)
        assert names[RegionLabel(int(lab[bits]))] == want
        if bits % 37 == 0:
            assert names[classify(BitLatticeTuple(shape, bits))] == want


@pytest.mark.parametrize("shape", [S2K2, S2K3, LatticeShape(2, 2, 1)])
def test_color_class_sizes_match_enumeration(shape):
    sigs = Counter(slice_coloring(BitLatticeTuple(shape, b)) for b in range(shape.num_states))
    for sig, size in sigs.items():
        assert color_class_size(sig, shape) == size
    assert len(sigs) == count_color_classes(shape).exact


def test_color_class_size_of_safe_class():
    X = first_state(S2K2, RegionLabel.SAFE)
    assert color_class_size(slice_coloring(X), S2K2) == 144


def test_in_distinct():
    assert in_distinct(parse_tuple_line("+--+|++++", 2, 2))
    assert not in_distinct(parse_tuple_line("+--+|+--+", 2, 2))


# -- census ----------------------------------------------------------------------


def _naive_census(shape):
    c = Counter(naive_region(shape, b) for b in range(shape.num_states))
    return (c["safe"], c["coll"], c["ident"], c["safe"] + c["coll"])


# values frozen from the pure-python oracle above
CENSUS = {
    (2, 2, 1): (16, 0, 0, 16),
    (2, 2, 2): (144, 96, 16, 240),
    (2, 2, 3): (576, 2784, 736, 3360),
    (2, 3, 2): (175616, 86016, 512, 261632),
    (3, 2, 2): (57600, 7680, 256, 65280),
}


@pytest.mark.parametrize("key", [(2, 2, 1), (2, 2, 2), (2, 2, 3)])
def test_census_frozen_values_match_naive_oracle(key):
    assert _naive_census(LatticeShape(*key)) == CENSUS[key]


@pytest.mark.parametrize("key", sorted(CENSUS))
@pytest.mark.parametrize("method", ["enumerate", "formula"])
def test_census(key, method):
    c = region_census(LatticeShape(*key), method)
    assert c.as_tuple() == CENSUS[key]
    assert c.total == 2 ** LatticeShape(*key).nbits
    assert c.distinct == math.perm(2 ** LatticeShape(*key).n, key[2])


def test_census_threads_do_not_change_counts():
    shape = LatticeShape(2, 3, 2)
    assert region_census(shape, "enumerate", threads=3).as_tuple() == CENSUS[(2, 3, 2)]


def test_census_formula_beyond_enumeration():
    shape = LatticeShape(2, 4, 2)
    c = region_census(shape)
    assert c.method == "formula"
    assert c.safe == (16 * 15) ** 4
    assert c.distinct == 2**16 * (2**16 - 1)
    assert c.coll_ratio <= c.coll_bound


@pytest.mark.parametrize("key", sorted(CENSUS))
def test_coll_ratio_bound(key):
    c = region_census(LatticeShape(*key))
    assert c.coll_ratio <= c.coll_bound


def test_enumeration_ceiling():
    with pytest.raises(CapacityError):
        region_census(LatticeShape(2, 5, 2), "enumerate")


@pytest.mark.parametrize("k,exact", [(1, 1), (2, 4), (3, 25)])
def test_color_class_count_bound(k, exact):
    cc = count_color_classes(LatticeShape(2, 2, k))
    assert cc.exact == exact
    assert cc.holds and cc.bound == k ** (2 * k)


@settings(max_examples=30)
@given(st.integers(2, 6), st.integers(1, 4))
def test_color_class_count_bound_property(side, k):
    assert count_color_classes(LatticeShape(2, side, k)).holds


def test_standard_start_regions():
    for shape in [S2K2, S2K3, LatticeShape(2, 4, 2), LatticeShape(3, 3, 4)]:
        assert classify(standard_start(shape, "safe")) == RegionLabel.SAFE
        assert classify(standard_start(shape, "coll")) == RegionLabel.COLL
    with pytest.raises(LatticeError):
        standard_start(LatticeShape(2, 2, 5))
