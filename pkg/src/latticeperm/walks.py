"""Idealized transition operators on the packed state space.

An idealized walk applies independent uniformly random permutations to a
family of disjoint site blocks (the axis slices, the 1-D fibers, or the whole
lattice). Acting on a k-tuple, such a step sends ``X`` to a uniform element
of its color class: the tuples whose restriction to every block has the same
equality pattern across members. The transition operator is therefore the
class-mean projection

    (T f)(X) = mean of f over the class of X,

which is symmetric and idempotent. Operators are applied by grouping the
``2**(n k)`` packed states by class key once per (shape, walk) and then
averaging with ``np.bincount``, so one application costs O(2**(n k)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy import sparse

from .lattice import (
    BitLatticeTuple,
    CapacityError,
    LatticeError,
    LatticeShape,
    RegionLabel,
    all_states,
    block_partition_codes,
    fiber_sites,
    region_labels_all,
    slice_sites,
)

logger = logging.getLogger(__name__)

#: Dense eigen-decomposition is only used up to this many states.
DENSE_ORACLE_LIMIT = 1 << 12

STRUCTURAL_TOL = 1e-12


class ConvergenceError(ArithmeticError):
    """Power iteration hit its iteration cap; carries the last two estimates."""

    def __init__(self, message: str, estimates: tuple[float, float]):
        super().__init__(message)
        self.estimates = estimates


# -- operator kinds -----------------------------------------------------------


@dataclass(frozen=True)
class AxisWalk:
    """Uniform permutation of every ``(D-1)``-dimensional slice along ``axis``."""

    axis: int


@dataclass(frozen=True)
class FiberWalk:
    """Uniform permutation of every 1-D line running along ``axis``."""

    axis: int


@dataclass(frozen=True)
class GlobalWalk:
    """Uniform permutation of the whole cube."""


@dataclass(frozen=True)
class Composition:
    """Matrix product of ``kinds``; the rightmost factor acts on a vector first."""

    kinds: tuple

    def __init__(self, kinds: Sequence):
        object.__setattr__(self, "kinds", tuple(kinds))


OperatorKind = Union[AxisWalk, FiberWalk, GlobalWalk, Composition]


def row_walk(shape: LatticeShape) -> AxisWalk:
    return AxisWalk(0)


def column_walk(shape: LatticeShape) -> OperatorKind:
    """The column step: 1-D fibers along axis 0 (``AxisWalk(1)`` in two dimensions)."""
    return AxisWalk(1) if shape.dims == 2 else FiberWalk(0)


def round_sequence(shape: LatticeShape) -> list[OperatorKind]:
    """Row, column, row: the sandwich whose distance to the global walk is measured."""
    return [row_walk(shape), column_walk(shape), row_walk(shape)]


def walk_blocks(kind: OperatorKind, shape: LatticeShape) -> list[np.ndarray]:
    if isinstance(kind, AxisWalk):
        shape.check_axis(kind.axis)
        if shape.dims == 1:
            return [np.array([i]) for i in range(shape.side)]
        return [slice_sites(shape.dims, shape.side, kind.axis, i) for i in range(shape.side)]
    if isinstance(kind, FiberWalk):
        shape.check_axis(kind.axis)
        return fiber_sites(shape.dims, shape.side, kind.axis)
    if isinstance(kind, GlobalWalk):
        return [np.arange(shape.n)]
    raise LatticeError(f"{kind!r} is not a single walk")


@dataclass(frozen=True)
class ClassStructure:
    """Partition of all packed states into the color classes of one walk."""

    inverse: np.ndarray = field(repr=False)  # class id of each state
    sizes: np.ndarray = field(repr=False)

    @property
    def num_classes(self) -> int:
        return len(self.sizes)

    def mean(self, values: np.ndarray) -> np.ndarray:
        if values.ndim == 1:
            sums = np.bincount(self.inverse, weights=values, minlength=self.num_classes)
            return (sums / self.sizes)[self.inverse]
        P = self.indicator()
        return P @ ((P.T @ values) / self.sizes[:, None])

    def indicator(self) -> sparse.csr_matrix:
        n = len(self.inverse)
        return sparse.csr_matrix(
            (np.ones(n), (np.arange(n), self.inverse)), shape=(n, self.num_classes)
        )


@lru_cache(maxsize=64)
def class_structure(kind: OperatorKind, shape: LatticeShape) -> ClassStructure:
    blocks = walk_blocks(kind, shape)
    states = all_states(shape)
    codes = block_partition_codes(states, shape, blocks)
    key = np.zeros(len(states), dtype=np.int64)
    base = np.int64(shape.k**shape.k)
    for b in range(codes.shape[1]):
        _, key = np.unique(key * base + codes[:, b], return_inverse=True)
    sizes = np.bincount(key).astype(float)
    inverse = key.astype(np.int64)
    inverse.setflags(write=False)
    sizes.setflags(write=False)
    return ClassStructure(inverse, sizes)


# -- vectors -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WalkVector:
    """A real function on the packed state space ``{±1}^(n k)``."""

    shape: LatticeShape
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.shape.num_states,):
            raise LatticeError(f"vector length {vals.shape} does not match {self.shape}")
        if not np.all(np.isfinite(vals)):
            raise LatticeError("WalkVector entries must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def basis(cls, shape: LatticeShape, X: BitLatticeTuple | int) -> WalkVector:
        v = np.zeros(shape.num_states)
        v[_state_index(X)] = 1.0
        return cls(shape, v)

    @classmethod
    def indicator(cls, shape: LatticeShape, region: RegionLabel | Sequence[RegionLabel]) -> WalkVector:
        regions = [region] if isinstance(region, RegionLabel) else list(region)
        lab = region_labels_all(shape)
        return cls(shape, np.isin(lab, [int(r) for r in regions]).astype(float))

    def inner(self, other: WalkVector) -> float:
        return float(self.values @ other.values)

    def norm1(self) -> float:
        return float(np.abs(self.values).sum())

    def norm2(self) -> float:
        return float(np.linalg.norm(self.values))

    def norm_inf(self) -> float:
        return float(np.abs(self.values).max())

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)


def _state_index(X: BitLatticeTuple | int) -> int:
    return X.bits if isinstance(X, BitLatticeTuple) else int(X)


# -- application ---------------------------------------------------------------


def apply_values(kind: OperatorKind, shape: LatticeShape, values: np.ndarray) -> np.ndarray:
    """Apply ``kind`` to a raw array of shape ``(N,)`` or ``(N, m)``."""
    if isinstance(kind, Composition):
        out = values
        for inner in reversed(kind.kinds):
            out = apply_values(inner, shape, out)
        return out
    return class_structure(kind, shape).mean(values)


def apply_operator(kind: OperatorKind, f: WalkVector) -> WalkVector:
    f.shape.require_enumerable()
    return WalkVector(f.shape, apply_values(kind, f.shape, f.values))


def transition_probability(
    kind: OperatorKind, X: BitLatticeTuple | int, Y: BitLatticeTuple | int, shape: LatticeShape
) -> float:
    """``<e_X, T e_Y>``: probability of moving from X to Y (factors in matrix order)."""
    return float(apply_operator(kind, WalkVector.basis(shape, Y)).values[_state_index(X)])


def push_forward(X: BitLatticeTuple | int, kinds: Sequence[OperatorKind], shape: LatticeShape) -> WalkVector:
    """Distribution of the walk started at ``X`` after the steps ``kinds`` in order.

    Single walks are symmetric, so the row-vector recursion ``p <- p T``
    coincides with ``p <- T p``.
    """
    shape.require_enumerable()
    p = WalkVector.basis(shape, X).values
    for kind in kinds:
        if isinstance(kind, Composition):
            # a composition's transpose applies its leftmost factor first
            for inner in kind.kinds:
                p = apply_values(inner, shape, p)
        else:
            p = apply_values(kind, shape, p)
    return WalkVector(shape, p)


def dense_operator(kind: OperatorKind, shape: LatticeShape) -> np.ndarray:
    """Dense transition matrix; only for small state spaces."""
    if shape.num_states > DENSE_ORACLE_LIMIT:
        raise CapacityError(f"dense operators limited to {DENSE_ORACLE_LIMIT} states")
    return apply_values(kind, shape, np.eye(shape.num_states))


# -- spectral norm ---------------------------------------------------------------


@dataclass
class SpectralResult:
    shape: LatticeShape
    value: float
    iterations: int
    seed: int
    oracle: float | None = None

    @property
    def oracle_delta(self) -> float | None:
        return None if self.oracle is None else abs(self.value - self.oracle)


def _difference(shape: LatticeShape, seq: Sequence[OperatorKind]):
    product = Composition(seq)

    def A(v: np.ndarray) -> np.ndarray:
        return apply_values(product, shape, v) - apply_values(GlobalWalk(), shape, v)

    return A


def spectral_norm_diff(
    shape: LatticeShape,
    seq: Sequence[OperatorKind] | None = None,
    *,
    rtol: float = 1e-10,
    max_iter: int = 10_000,
    seed: int = 0,
    atol: float = 1e-24,
    oracle: bool | None = None,
) -> SpectralResult:
    """Operator 2-norm of ``prod(seq) - T_G`` by power iteration on its square.

    The difference must be self-adjoint (true for palindromic ``seq``).
    Iteration stops once successive Rayleigh quotients of ``A^2`` agree to
    ``rtol`` (or fall below ``atol``, the exactly-zero case). With
    ``oracle=None`` a dense eigen-decomposition is added whenever the state
    space has at most ``DENSE_ORACLE_LIMIT`` states.
    """
    shape.require_enumerable()
    seq = round_sequence(shape) if seq is None else list(seq)
    A = _difference(shape, seq)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape.num_states)
    x /= np.linalg.norm(x)
    prev = np.inf
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = A(A(x))
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0 or (lam < atol and it > 2):
            lam = max(lam, 0.0)
            break
        if abs(lam - prev) <= rtol * abs(lam):
            break
        prev = lam
        x = y / ny
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} steps", (float(prev), float(lam))
        )
    logger.debug("power iteration on %s converged after %d steps", shape, it)
    result = SpectralResult(shape, float(np.sqrt(lam)), it, seed)
    if oracle or (oracle is None and shape.num_states <= DENSE_ORACLE_LIMIT):
        result.oracle = dense_spectral_norm(shape, seq)
    return result


def dense_spectral_norm(shape: LatticeShape, seq: Sequence[OperatorKind] | None = None) -> float:
    """Largest absolute eigenvalue of the (symmetric) difference, from ``eigvalsh``."""
    seq = round_sequence(shape) if seq is None else list(seq)
    M = dense_operator(Composition(seq), shape) - dense_operator(GlobalWalk(), shape)
    M = 0.5 * (M + M.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(M))))


# -- identity checks -----------------------------------------------------------


@dataclass
class IdentityRecord:
    identity: str
    shape: LatticeShape
    residual: float
    tolerance: float
    witness: int | None = None

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def as_json(self) -> dict:
        return {
            "identity": self.identity,
            "shape": {"dims": self.shape.dims, "side": self.shape.side, "k": self.shape.k},
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "witness": self.witness,
        }


def _probe_matrix(shape: LatticeShape, seed: int, probes: int) -> np.ndarray:
    """Columns to test identities on: the full basis when small, else random vectors."""
    if shape.num_states <= DENSE_ORACLE_LIMIT:
        return np.eye(shape.num_states)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((shape.num_states, probes))


def _worst(residuals: np.ndarray) -> tuple[float, int]:
    flat = np.abs(residuals)
    idx = int(np.argmax(flat))
    row, col = np.unravel_index(idx, flat.shape) if flat.ndim == 2 else (idx, idx)
    return float(flat.max()), int(col)


def check_operator_identities(
    shape: LatticeShape, *, seed: int = 0, probes: int = 8, tol: float = STRUCTURAL_TOL
) -> list[IdentityRecord]:
    """Self-adjointness, idempotence, absorption into ``T_G`` and the class-size norm identity.

    Each record's ``witness`` is the basis state (column) with the largest
    residual. Above ``DENSE_ORACLE_LIMIT`` states, seeded random probe
    vectors replace the basis sweep.
    """
    shape.require_enumerable()
    E = _probe_matrix(shape, seed, probes)
    walks: list[OperatorKind] = [AxisWalk(a) for a in range(shape.dims)]
    if shape.dims > 2:
        walks.append(FiberWalk(0))
    walks.append(GlobalWalk())
    G = GlobalWalk()
    records = []
    for w in walks:
        TE = apply_values(w, shape, E)
        # <E_i, T E_j> - <T E_i, E_j>
        res, wit = _worst(E.T @ TE - TE.T @ E)
        records.append(IdentityRecord(f"self_adjoint[{_name(w)}]", shape, res, tol, wit))
        res, wit = _worst(apply_values(w, shape, TE) - TE)
        records.append(IdentityRecord(f"idempotent[{_name(w)}]", shape, res, tol, wit))
        if w != G:
            GE = apply_values(G, shape, E)
            res, wit = _worst(apply_values(w, shape, GE) - GE)
            records.append(IdentityRecord(f"absorb_left[{_name(w)}]", shape, res, tol, wit))
            res, wit = _worst(apply_values(G, shape, TE) - GE)
            records.append(IdentityRecord(f"absorb_right[{_name(w)}]", shape, res, tol, wit))
    cs = class_structure(AxisWalk(0), shape)
    # T e_U has value 1/|B(U)| on the |B(U)| members of B(U)
    if shape.num_states <= DENSE_ORACLE_LIMIT:
        norms = np.linalg.norm(apply_values(AxisWalk(0), shape, np.eye(shape.num_states)), axis=0)
        expected = cs.sizes[cs.inverse] ** -0.5
        res, wit = _worst(norms - expected)
    else:
        rng = np.random.default_rng(seed)
        us = rng.choice(shape.num_states, size=probes, replace=False)
        worst, wit = 0.0, None
        for u in us:
            e = np.zeros(shape.num_states)
            e[u] = 1.0
            r = abs(np.linalg.norm(apply_values(AxisWalk(0), shape, e)) - cs.sizes[cs.inverse[u]] ** -0.5)
            if r >= worst:
                worst, wit = r, int(u)
        res = worst
    records.append(IdentityRecord("class_norm[axis0]", shape, res, tol, wit))
    return records


def _name(kind: OperatorKind) -> str:
    if isinstance(kind, AxisWalk):
        return f"axis{kind.axis}"
    if isinstance(kind, FiberWalk):
        return f"fiber{kind.axis}"
    if isinstance(kind, GlobalWalk):
        return "global"
    return "*".join(_name(k) for k in kind.kinds)


# -- support-restricted transition bound ----------------------------------------


@dataclass
class SupportBoundReport:
    lhs: float
    rhs: float
    factor: float
    tolerance: float = STRUCTURAL_TOL

    @property
    def holds(self) -> bool:
        return abs(self.lhs) <= self.rhs + self.tolerance * max(1.0, self.rhs)


def support_bound_check(f: WalkVector, g: WalkVector, kind: OperatorKind) -> SupportBoundReport:
    """Compare ``<f, T g>`` with ``max_{X in supp f} sqrt(Pr[X -> supp g]) |f| |g|``.

    The inequality holds for every transition operator built from random
    permutations; a violation points at a bug in the operator code.
    """
    shape = f.shape
    Tg = apply_values(kind, shape, g.values)
    lhs = float(f.values @ Tg)
    hit = apply_values(kind, shape, (g.values != 0).astype(float))
    supp = f.support()
    factor = float(np.sqrt(max(hit[supp].max(), 0.0))) if len(supp) else 0.0
    return SupportBoundReport(lhs, factor * f.norm2() * g.norm2(), factor)


# -- collisions ------------------------------------------------------------------


@dataclass
class CollisionReport:
    shape: LatticeShape
    start: int
    probability: float
    bound: float


def collision_bound(shape: LatticeShape) -> float:
    """Union bound ``2 s k^2 / 2^(s/16)`` for landing in ``B_coll``."""
    s = shape.side
    return 2 * s * shape.k**2 / 2.0 ** (s / 16)


def collision_probability_exact(X: BitLatticeTuple) -> CollisionReport:
    """Probability that a row step followed by a column step lands in ``B_coll``."""
    shape = X.shape
    lab = region_labels_all(shape)
    if lab[X.bits] == RegionLabel.IDENT:
        raise LatticeError("start state has two equal members (not in D)")
    p = push_forward(X, [row_walk(shape), column_walk(shape)], shape).values
    prob = float(p[lab == RegionLabel.COLL].sum())
    return CollisionReport(shape, X.bits, prob, collision_bound(shape))


def collision_profile(shape: LatticeShape) -> np.ndarray:
    """Collision probability for every start state (NaN outside D).

    Uses ``(T_R T_C 1_coll)(X) = Pr[X -> B_coll]`` with the row step first.
    """
    lab = region_labels_all(shape)
    coll = (lab == RegionLabel.COLL).astype(float)
    out = apply_values(Composition([row_walk(shape), column_walk(shape)]), shape, coll)
    out[lab == RegionLabel.IDENT] = np.nan
    return out
