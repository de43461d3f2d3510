import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import LinearOperator, eigsh

from conftest import S2K2, S2K3, first_state
from latticeperm.lattice import BitLatticeTuple, CapacityError, LatticeError, LatticeShape, RegionLabel
from latticeperm.walks import (
    AxisWalk,
    Composition,
    FiberWalk,
    GlobalWalk,
    WalkVector,
    _difference,
    apply_operator,
    check_operator_identities,
    collision_bound,
    collision_probability_exact,
    collision_profile,
    column_walk,
    dense_operator,
    push_forward,
    round_sequence,
    spectral_norm_diff,
    support_bound_check,
    transition_probability,
)


def _brute_axis_walk(shape, axis, perms):
    """Transition matrix obtained by averaging over every pair of slice permutations."""
    N = shape.num_states
    T = np.zeros((N, N))
    for x in range(N):
        mb = BitLatticeTuple(shape, x).member_bits().reshape(shape.k, 2, 2)
        for p0, p1 in itertools.product(perms, perms):
            out = mb.copy()
            for i, p in enumerate((p0, p1)):
                for l in range(shape.k):
                    v = mb[l, i, :] if axis == 0 else mb[l, :, i]
                    nv = p[v[0] * 2 + v[1]]
                    bits = [nv >> 1, nv & 1]
                    if axis == 0:
                        out[l, i, :] = bits
                    else:
                        out[l, :, i] = bits
            T[x, BitLatticeTuple.from_members(out.reshape(shape.k, 4), shape).bits] += 1
    return T / len(perms) ** 2


@pytest.fixture(scope="module")
def brute(perms4):
    return {a: _brute_axis_walk(S2K2, a, perms4) for a in (0, 1)}


def test_axis_walks_match_brute_force(brute):
    for a in (0, 1):
        assert np.abs(brute[a] - dense_operator(AxisWalk(a), S2K2)).max() < 1e-15


def test_round_norm_matches_brute_force(brute):
    R, C = brute[0], brute[1]
    G = dense_operator(GlobalWalk(), S2K2)
    A = R @ C @ R - G
    assert np.abs(np.linalg.eigvalsh(0.5 * (A + A.T))).max() == pytest.approx(16 / 81, abs=1e-12)


def test_fiber_walk_equals_column_walk_in_two_dims():
    assert np.array_equal(dense_operator(FiberWalk(0), S2K2), dense_operator(AxisWalk(1), S2K2))
    assert column_walk(S2K2) == AxisWalk(1)
    assert column_walk(LatticeShape(3, 2, 2)) == FiberWalk(0)


def test_composition_order_rightmost_first():
    R, C = (dense_operator(w, S2K2) for w in (AxisWalk(0), AxisWalk(1)))
    assert np.allclose(dense_operator(Composition([AxisWalk(0), AxisWalk(1)]), S2K2), R @ C)


def test_push_forward_uses_row_vector_order():
    X = first_state(S2K2, RegionLabel.SAFE)
    R, C = (dense_operator(w, S2K2) for w in (AxisWalk(0), AxisWalk(1)))
    e = np.zeros(256)
    e[X.bits] = 1
    p = push_forward(X, [AxisWalk(0), AxisWalk(1)], S2K2).values
    assert np.allclose(p, e @ R @ C)
    q = push_forward(X, [Composition([AxisWalk(0), AxisWalk(1)])], S2K2).values
    assert np.allclose(q, e @ R @ C)


def test_transition_probability_is_a_distribution():
    X = first_state(S2K2, RegionLabel.COLL)
    total = sum(transition_probability(AxisWalk(0), X, y, S2K2) for y in range(256))
    assert total == pytest.approx(1.0)


def test_walk_vector_validation():
    with pytest.raises(LatticeError):
        WalkVector(S2K2, np.zeros(10))
    with pytest.raises(LatticeError):
        WalkVector(S2K2, np.full(256, np.nan))
    v = WalkVector.indicator(S2K2, [RegionLabel.SAFE, RegionLabel.COLL])
    assert v.norm1() == 240
    assert v.norm_inf() == 1
    assert len(v.support()) == 240


@pytest.mark.parametrize("shape", [S2K2, LatticeShape(2, 2, 1), LatticeShape(3, 2, 2)])
def test_operator_identities(shape):
    records = check_operator_identities(shape, seed=3)
    assert records
    for r in records:
        assert r.passed, r.as_json()
        assert set(r.as_json()) == {"identity", "shape", "residual", "tolerance", "pass", "witness"}


def test_identity_record_reports_failure():
    records = check_operator_identities(S2K2, tol=-1.0)
    assert not any(r.passed for r in records)


def test_dense_operator_capacity():
    with pytest.raises(CapacityError):
        dense_operator(AxisWalk(0), LatticeShape(2, 3, 2))


# -- spectral -------------------------------------------------------------------------


@pytest.mark.parametrize("side", [2, 3])
def test_spectral_norm_zero_for_k1(side):
    res = spectral_norm_diff(LatticeShape(2, side, 1))
    assert res.value <= 1e-10


def test_spectral_norm_s2k2():
    res = spectral_norm_diff(S2K2)
    # exact value from the dense oracle, confirmed against brute force above
    assert res.value == pytest.approx(16 / 81, abs=1e-10)
    assert res.oracle_delta <= 1e-8


def _arpack_norm(shape):
    A = _difference(shape, round_sequence(shape))
    op = LinearOperator((shape.num_states,) * 2, matvec=A, dtype=float)
    return float(np.abs(eigsh(op, k=1, which="LM", return_eigenvectors=False, tol=1e-12)[0]))


@pytest.mark.parametrize("shape", [LatticeShape(3, 2, 2), LatticeShape(2, 3, 2)])
def test_spectral_norm_matches_arpack(shape):
    assert spectral_norm_diff(shape).value == pytest.approx(_arpack_norm(shape), abs=1e-8)


def test_spectral_norm_is_seed_independent():
    a = spectral_norm_diff(S2K2, seed=1, oracle=False).value
    b = spectral_norm_diff(S2K2, seed=7, oracle=False).value
    assert a == pytest.approx(b, abs=1e-12)


def test_ident_states_annihilated_for_k2():
    # with two equal members the walk is the single-lattice walk, which already equals T_G
    A = _difference(S2K2, round_sequence(S2K2))
    for x in np.flatnonzero(WalkVector.indicator(S2K2, RegionLabel.IDENT).values):
        e = np.zeros(256)
        e[x] = 1
        assert np.abs(A(e)).max() < 1e-10


# -- support bound -------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([AxisWalk(0), AxisWalk(1), GlobalWalk()]))
def test_support_bound_random_vectors(seed, kind):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(256) * (rng.random(256) < 0.2)
    g = rng.standard_normal(256) * (rng.random(256) < 0.2)
    rep = support_bound_check(WalkVector(S2K2, f), WalkVector(S2K2, g), kind)
    assert rep.holds
    assert 0.0 <= rep.factor <= 1.0


def test_support_bound_disjoint_supports_give_zero():
    safe = WalkVector.indicator(S2K2, RegionLabel.SAFE)
    ident = WalkVector.indicator(S2K2, RegionLabel.IDENT)
    rep = support_bound_check(safe, ident, AxisWalk(0))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds


# -- collisions -------------------------------------------------------------------------------


def test_collision_zero_for_k1():
    shape = LatticeShape(2, 3, 1)
    assert np.nanmax(collision_profile(shape)) == 0.0
    assert collision_probability_exact(BitLatticeTuple(shape, 5)).probability == 0.0


def test_collision_profile_matches_push_forward():
    prof = collision_profile(S2K2)
    for region in (RegionLabel.SAFE, RegionLabel.COLL):
        for off in (0, 7, 31):
            X = first_state(S2K2, region, off)
            assert collision_probability_exact(X).probability == pytest.approx(prof[X.bits], abs=1e-14)


def test_collision_worst_cases_frozen():
    # exhaustive maxima over D; the worst start sits in B_coll at both sizes
    assert np.nanmax(collision_profile(S2K2)) == pytest.approx(14 / 27, abs=1e-12)
    prof3 = collision_profile(LatticeShape(2, 3, 2))
    assert np.nanmax(prof3) == pytest.approx(0.6097460, abs=1e-6)


def test_collision_rejects_ident_start():
    with pytest.raises(LatticeError):
        collision_probability_exact(first_state(S2K2, RegionLabel.IDENT))


def test_collision_bound_value():
    assert collision_bound(LatticeShape(2, 16, 2)) == pytest.approx(2 * 16 * 4 / 2)
