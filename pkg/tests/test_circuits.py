import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from latticeperm.circuits import (
    AxisParallel,
    Base1D,
    Gate3,
    Sequence,
    apply,
    apply_tuple,
    brickwork_triples,
    build_brickwork_1d,
    build_lattice_circuit,
    compile_circuit,
    depth,
    from_json,
    gate_count,
    invert,
    lattice_shape_of,
    predicted_depth,
    sample_gate,
    sample_tables,
    suggest_base_layers,
    to_json,
)
from latticeperm.lattice import LatticeError, LatticeShape, parse_tuple_line
from latticeperm.rng import RngSeed


def _all_inputs(width):
    x = np.arange(1 << width)
    return ((x[:, None] >> np.arange(width)) & 1).astype(np.uint8)


def _as_ints(bits):
    return bits.astype(np.int64) @ (1 << np.arange(bits.shape[1]))


# -- gates -----------------------------------------------------------------------------


def test_gate_validation():
    with pytest.raises(LatticeError):
        Gate3((0, 0, 1), tuple(range(8)))
    with pytest.raises(LatticeError):
        Gate3((0, 1, 2), (0,) * 8)


@given(st.permutations(range(8)))
def test_gate_inverse(table):
    g = Gate3((0, 1, 2), tuple(table))
    assert all(g.inverse().table[g.table[i]] == i for i in range(8))
    assert g.inverse().inverse() == g


def test_gate_bit_order():
    # table maps input 1 (wire 0 set) to 4 (wire 2 set)
    table = [0, 4, 2, 3, 1, 5, 6, 7]
    c = Base1D(3, ((Gate3((0, 1, 2), tuple(table)),),))
    assert apply(c, 0b001) == 0b100
    assert apply(c, 0b010) == 0b010


def test_gate_tables_uniform_chi_square():
    tables = sample_tables(np.random.default_rng(2024), 4_000_000)
    assert (np.sort(tables, axis=1) == np.arange(8)).all()
    codes = tables.astype(np.int64) @ (8 ** np.arange(8))
    _, counts = np.unique(codes, return_counts=True)
    assert len(counts) == 40320
    assert stats.chisquare(counts).pvalue > 1e-3


def test_sample_gate_uniform_chi_square():
    rng = np.random.default_rng(5)
    counts = np.zeros(8)
    for _ in range(40_000):
        counts[sample_gate(rng, (0, 1, 2)).table[0]] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


# -- structure ---------------------------------------------------------------------------


def test_brickwork_layout():
    assert brickwork_triples(7, 0) == [(0, 1, 2), (3, 4, 5)]
    assert brickwork_triples(7, 1) == [(1, 2, 3), (4, 5, 6)]
    assert brickwork_triples(3, 1) == []
    with pytest.raises(LatticeError):
        build_brickwork_1d(2, 3)


def test_layer_wires_disjoint_enforced():
    g = Gate3((0, 1, 2), tuple(range(8)))
    h = Gate3((2, 3, 4), tuple(range(8)))
    with pytest.raises(LatticeError):
        Base1D(5, ((g, h),))


def test_axis_parallel_validation():
    piece = build_brickwork_1d(3, 2, 0)
    with pytest.raises(LatticeError):
        AxisParallel(2, 3, 0, "slice", (piece, piece))
    with pytest.raises(LatticeError):
        AxisParallel(2, 3, 0, "diagonal", (piece,) * 3)


def test_suggest_base_layers():
    assert suggest_base_layers(4, 2) == 14
    assert suggest_base_layers(16, 3, c=0.5) == 47


@pytest.mark.parametrize("dims", [2, 3, 4])
@pytest.mark.parametrize("t", [0, 1, 2])
def test_depth_matches_prediction(dims, t):
    c = build_lattice_circuit(dims, 3, t, 4, 1)
    assert depth(c) == predicted_depth(dims, t, 4)


def test_depth_examples():
    assert depth(build_lattice_circuit(2, 3, 1, 5, 0)) == 15
    assert depth(build_lattice_circuit(3, 3, 1, 5, 0)) == 45
    # recursion factor relative to the two-dimensional circuit
    for D in (3, 4):
        for t in (0, 1, 2):
            assert predicted_depth(D, t, 5) == (2 * t + 1) ** (D - 2) * predicted_depth(2, t, 5)


def test_lattice_shape_of():
    assert lattice_shape_of(build_lattice_circuit(3, 3, 0, 2, 0)) == LatticeShape(3, 3)


# -- evaluation --------------------------------------------------------------------------


@pytest.mark.parametrize("width", range(3, 17))
def test_brickwork_is_bijection(width):
    c = build_brickwork_1d(width, 4, width)
    out = _as_ints(compile_circuit(c).apply_bits(_all_inputs(width)))
    assert len(np.unique(out)) == 1 << width


@pytest.mark.parametrize("side,dims", [(3, 2), (4, 2)])
def test_lattice_circuit_is_bijection(side, dims):
    c = build_lattice_circuit(dims, side, 1, 3, 9)
    width = side**dims
    out = _as_ints(compile_circuit(c).apply_bits(_all_inputs(width)))
    assert len(np.unique(out)) == 1 << width


def test_invert_roundtrip_random_inputs():
    c = build_lattice_circuit(3, 3, 1, 3, 17)
    x = np.random.default_rng(0).integers(0, 2, (10_000, 27)).astype(np.uint8)
    y = compile_circuit(c).apply_bits(x)
    assert not np.array_equal(x, y)
    assert np.array_equal(compile_circuit(invert(c)).apply_bits(y), x)
    assert invert(invert(c)) == c


def test_packed_and_array_apply_agree():
    c = build_lattice_circuit(2, 3, 1, 3, 4)
    for v in (0, 1, 77, 511):
        bits = np.array([(v >> j) & 1 for j in range(9)], dtype=np.uint8)
        assert _as_ints(apply(c, bits)[None])[0] == apply(c, v)


def test_apply_tuple_keeps_equal_members_equal():
    c = build_lattice_circuit(2, 3, 1, 3, 4)
    X = parse_tuple_line("+-+-+-+-+|+-+-+-+-+|---------", 2, 3)
    Y = apply_tuple(c, X)
    mb = Y.member_bits()
    assert np.array_equal(mb[0], mb[1]) and not np.array_equal(mb[0], mb[2])


def test_width_mismatch():
    c = build_lattice_circuit(2, 3, 0, 2, 0)
    with pytest.raises(LatticeError):
        compile_circuit(c).apply_bits(np.zeros(8, dtype=np.uint8))


def test_empty_sequence():
    assert depth(Sequence(())) == 0
    cc = compile_circuit(Sequence(()), 5)
    assert np.array_equal(cc.apply_bits(np.ones(5)), np.ones(5))


# -- seeding and serialization ---------------------------------------------------------


@pytest.mark.parametrize("threads", [2, 4])
def test_threads_do_not_change_circuit(threads):
    a = build_lattice_circuit(3, 3, 1, 3, 42)
    b = build_lattice_circuit(3, 3, 1, 3, 42, threads=threads)
    assert a == b and to_json(a) == to_json(b)


def test_seeds_differ():
    assert build_lattice_circuit(2, 3, 1, 3, 1) != build_lattice_circuit(2, 3, 1, 3, 2)
    assert build_lattice_circuit(2, 3, 1, 3, RngSeed(1, (0,))) != build_lattice_circuit(2, 3, 1, 3, RngSeed(1))


def test_json_roundtrip():
    c = build_lattice_circuit(3, 3, 1, 2, 8)
    text = to_json(c, seed=8)
    doc = json.loads(text)
    assert doc["format"] == "latticeperm.circuit" and doc["version"] == 1
    assert doc["metadata"] == {"seed": 8}
    assert from_json(text) == c
    assert gate_count(from_json(text)) == gate_count(c)


def test_json_version_checked():
    doc = json.loads(to_json(build_brickwork_1d(3, 1, 0)))
    doc["version"] = 99
    with pytest.raises(LatticeError):
        from_json(json.dumps(doc))
    with pytest.raises(LatticeError):
        from_json(json.dumps({"format": "other"}))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**40), st.integers(0, 511))
def test_circuit_is_deterministic_in_seed(seed, x):
    a = build_lattice_circuit(2, 3, 1, 2, seed)
    b = build_lattice_circuit(2, 3, 1, 2, seed)
    assert apply(a, x) == apply(b, x)
    assert apply(invert(a), apply(a, x)) == x
