"""Distance to uniform: exact trajectories, per-target envelopes and Monte Carlo.

Exact quantities push a point mass through the idealized walks (see
:mod:`latticeperm.walks`). Monte Carlo quantities draw many independent
trajectories at once from either the idealized walk or actual random
circuits, all on 0/1 arrays of shape ``(trials, k, n)``.

The step pattern ``L (C L)^t`` is shared by both: ``L`` acts on the axis-0
slices and ``C`` on the columns (axis-0 fibers). The value reported at
round ``t`` is measured after ``2t + 1`` steps.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .circuits import build_layers, compile_circuit, layer_pattern, suggest_base_layers
from .lattice import (
    BitLatticeTuple,
    CapacityError,
    LatticeError,
    LatticeShape,
    RegionLabel,
    canonical_labels,
    labels_of,
    region_census,
    region_labels_all,
    set_partitions,
    slice_sites,
)
from .rng import RngSeed, as_seed
from .walks import (
    AxisWalk,
    GlobalWalk,
    apply_values,
    class_structure,
    column_walk,
    row_walk,
    walk_blocks,
)

#: Samples per independently seeded Monte Carlo chunk.
MC_CHUNK = 1 << 16

#: Plug-in TV is flagged as unreliable below this many samples per target state.
SAMPLES_PER_STATE = 50

_PERMS8 = np.array(list(itertools.permutations(range(8))), dtype=np.uint8)


def _check_start(X: BitLatticeTuple) -> None:
    mb = X.member_bits()
    if len({row.tobytes() for row in mb}) != X.shape.k:
        raise LatticeError("start state has two equal members (not in D)")


# -- exact trajectories ----------------------------------------------------------


@dataclass
class TvTrajectory:
    shape: LatticeShape
    start: int
    tv: list[float]
    distinct: int

    def points(self) -> list[tuple[int, float]]:
        return list(enumerate(self.tv))

    def is_nonincreasing(self, tol: float = 1e-12) -> bool:
        return all(b <= a + tol for a, b in zip(self.tv, self.tv[1:]))

    def first_below(self, eps: float) -> int | None:
        return next((t for t, v in enumerate(self.tv) if v < eps), None)


def _distinct_mask(shape: LatticeShape) -> np.ndarray:
    return region_labels_all(shape) != RegionLabel.IDENT


def tv_to_uniform(p: np.ndarray, shape: LatticeShape) -> float:
    """Total variation between ``p`` and the uniform distribution on D."""
    mask = _distinct_mask(shape)
    u = mask / mask.sum()
    return 0.5 * float(np.abs(p - u).sum())


def exact_tv_trajectory(X: BitLatticeTuple, t_max: int) -> TvTrajectory:
    """Exact TV to uniform on D after ``R (C R)^t`` for ``t = 0..t_max``."""
    shape = X.shape
    shape.require_enumerable()
    _check_start(X)
    R, C = row_walk(shape), column_walk(shape)
    p = np.zeros(shape.num_states)
    p[X.bits] = 1.0
    p = apply_values(R, shape, p)
    tv = [tv_to_uniform(p, shape)]
    for _ in range(t_max):
        p = apply_values(R, shape, apply_values(C, shape, p))
        tv.append(tv_to_uniform(p, shape))
    return TvTrajectory(shape, X.bits, tv, int(_distinct_mask(shape).sum()))


@dataclass
class PerTargetReport:
    t: int
    lhs: float
    envelope: float
    tolerance: float = 1e-12

    @property
    def holds(self) -> bool:
        return self.lhs <= self.envelope + self.tolerance


def _round_operator_columns(shape: LatticeShape, cols: np.ndarray, t: int) -> np.ndarray:
    R, C = row_walk(shape), column_walk(shape)
    out = apply_values(R, shape, cols)
    for _ in range(t):
        out = apply_values(R, shape, apply_values(C, shape, out))
    return out


def per_target_bound_report(X: BitLatticeTuple, Y: BitLatticeTuple, t: int) -> PerTargetReport:
    """``|Pr[X -> Y after t rounds] - Pr[X -> Y under T_G]|`` against ``(t+1)/|B(Y)|``.

    ``B(Y)`` is the color class of ``Y`` under the row step.
    """
    shape = X.shape
    e = np.zeros(shape.num_states)
    e[Y.bits] = 1.0
    rounds = _round_operator_columns(shape, e, t)
    glob = apply_values(GlobalWalk(), shape, e)
    cs = class_structure(AxisWalk(0), shape)
    lhs = abs(float(rounds[X.bits] - glob[X.bits]))
    return PerTargetReport(t, lhs, (t + 1) / cs.sizes[cs.inverse[Y.bits]])


def per_target_worst(shape: LatticeShape, t_max: int) -> list[tuple[float, float]]:
    """For each ``t``, the largest deviation over all ``X, Y`` in D and the largest ratio to the envelope."""
    shape.require_enumerable()
    d = np.flatnonzero(_distinct_mask(shape))
    if len(d) * shape.num_states > 1 << 26:
        raise CapacityError("all-pairs envelope table is too large for this shape")
    E = np.zeros((shape.num_states, len(d)))
    E[d, np.arange(len(d))] = 1.0
    glob = apply_values(GlobalWalk(), shape, E)[d]
    cs = class_structure(AxisWalk(0), shape)
    class_size = cs.sizes[cs.inverse[d]]
    out = []
    for t in range(t_max + 1):
        dev = np.abs(_round_operator_columns(shape, E, t)[d] - glob)
        out.append((float(dev.max()), float((dev * class_size[None, :]).max() / (t + 1))))
    return out


# -- projection to distinct members ------------------------------------------------


@dataclass
class TauReport:
    t: int
    tau: int
    tv_k: float
    tv_tau: float
    class_size: int
    image_size: int
    injective: bool
    tolerance: float = 1e-12

    @property
    def delta(self) -> float:
        return abs(self.tv_k - self.tv_tau)

    @property
    def holds(self) -> bool:
        return self.injective and self.class_size == self.image_size and self.delta <= self.tolerance


def distinct_members(X: BitLatticeTuple) -> tuple[int, ...]:
    """Indices of the first occurrence of each distinct member."""
    labels = canonical_labels([row.tobytes() for row in X.member_bits()])
    return tuple(labels.index(j) for j in range(max(labels) + 1))


def project_to_distinct(X: BitLatticeTuple, members: tuple[int, ...] | None = None) -> BitLatticeTuple:
    members = distinct_members(X) if members is None else members
    return BitLatticeTuple.from_members(X.member_bits()[list(members)], X.shape.with_k(len(members)))


def k_to_tau_check(X: BitLatticeTuple, t: int) -> TauReport:
    """Compare the walk on a tuple with repeated members to the walk on its distinct members.

    The k-tuple walk mixes toward the uniform distribution on the set of
    tuples sharing ``X``'s equality pattern; projecting onto the
    first-occurrence members maps that set bijectively onto the distinct
    ``tau``-tuples, and the two TV trajectories must coincide.
    """
    shape = X.shape
    shape.require_enumerable()
    members = distinct_members(X)
    tau = len(members)
    if tau == shape.k:
        raise LatticeError("start state has no repeated members (it lies in D)")
    cs = class_structure(GlobalWalk(), shape)
    cls = np.flatnonzero(cs.inverse == cs.inverse[X.bits])
    p = np.zeros(shape.num_states)
    p[X.bits] = 1.0
    p = _round_operator_columns(shape, p, t)
    tv_k = 0.5 * float(np.abs(p[cls] - 1.0 / len(cls)).sum() + np.abs(p).sum() - np.abs(p[cls]).sum())

    sub = shape.with_k(tau)
    images = {
        project_to_distinct(BitLatticeTuple(shape, int(y)), members).bits for y in cls
    }
    image_size = int(_distinct_mask(sub).sum())
    injective = len(images) == len(cls) and all(_distinct_mask(sub)[b] for b in images)
    tv_tau = exact_tv_trajectory(project_to_distinct(X, members), t).tv[t]
    return TauReport(t, tau, tv_k, tv_tau, len(cls), image_size, injective)


# -- Monte Carlo samplers ------------------------------------------------------------


def _block_values(bits: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Integer value of each member on ``sites``: ``(trials, k, b) -> (trials, k)``."""
    w = np.int64(1) << np.arange(len(sites), dtype=np.int64)
    return bits[:, :, sites].astype(np.int64) @ w


def _distinct_draws(rng: np.random.Generator, trials: int, m: int, alphabet: int) -> np.ndarray:
    """``trials`` rows of ``m`` pairwise distinct uniform values from ``range(alphabet)``."""
    if alphabet <= 256:
        return np.argsort(rng.random((trials, alphabet)), axis=1)[:, :m]
    out = rng.integers(0, alphabet, size=(trials, m))
    while True:
        bad = np.zeros(trials, dtype=bool)
        for a, b in itertools.combinations(range(m), 2):
            bad |= out[:, a] == out[:, b]
        if not bad.any():
            return out
        out[bad] = rng.integers(0, alphabet, size=(int(bad.sum()), m))


class IdealizedSampler:
    """Exact simulation of the idealized walk: each step sends every block to a uniform point of its class.

    Steps are ``L`` (axis-0 slices), ``C`` (columns) and ``G`` (the whole
    lattice, i.e. a uniform element of D for a start in D).
    """

    def __init__(self, shape: LatticeShape):
        self.shape = shape
        self._blocks = {
            "L": walk_blocks(row_walk(shape), shape),
            "C": walk_blocks(column_walk(shape), shape),
            "G": walk_blocks(GlobalWalk(), shape),
        }

    def run(self, bits: np.ndarray, rng: np.random.Generator, pattern: str):
        """Apply ``pattern`` in place, yielding the array after every step."""
        trials, k, _ = bits.shape
        for step in pattern:
            for sites in self._blocks[step]:
                if len(sites) > 62:
                    raise CapacityError("blocks wider than 62 sites are not supported")
                vals = _block_values(bits, sites)
                labels = labels_of([vals[:, l] for l in range(k)])
                cand = _distinct_draws(rng, trials, min(k, 1 << len(sites)), 1 << len(sites))
                new = np.take_along_axis(cand, np.minimum(labels, cand.shape[1] - 1), axis=1)
                shifts = np.arange(len(sites), dtype=np.int64)
                bits[:, :, sites] = ((new[:, :, None] >> shifts) & 1).astype(np.uint8)
            yield bits


class CircuitSampler:
    """Independent random lattice circuits; every trial gets its own gate tables.

    The gate layout is fixed by ``(dims, side, t, base_layers)``; tables are
    drawn fresh per trial, shared by the ``k`` members of that trial.
    """

    def __init__(self, shape: LatticeShape, base_layers: int | None = None, t: int = 1):
        if shape.side < 3:
            raise LatticeError("circuits need side >= 3")
        self.shape = shape
        self.t = t
        self.base_layers = suggest_base_layers(shape.side, shape.k) if base_layers is None else base_layers
        self._layers: dict[str, np.ndarray] = {}
        for step in "LC":
            c = build_layers(shape.dims, shape.side, t, self.base_layers, step, RngSeed(0))
            self._layers[step] = compile_circuit(c).wires

    def run(self, bits: np.ndarray, rng: np.random.Generator, pattern: str):
        trials = bits.shape[0]
        rows = np.arange(trials)[:, None]
        for step in pattern:
            for a, b, c in self._layers[step]:
                idx = bits[:, :, a] | (bits[:, :, b] << 1) | (bits[:, :, c] << 2)
                out = _PERMS8[rng.integers(0, len(_PERMS8), size=trials)[:, None], idx]
                bits[:, :, a] = out & 1
                bits[:, :, b] = (out >> 1) & 1
                bits[:, :, c] = (out >> 2) & 1
            yield bits


SAMPLERS = ("idealized", "circuit", "uniform")


def make_sampler(kind: str, shape: LatticeShape, base_layers: int | None = None, t: int = 1):
    if kind in ("idealized", "uniform"):
        return IdealizedSampler(shape)
    if kind == "circuit":
        return CircuitSampler(shape, base_layers, t)
    raise LatticeError(f"unknown sampler {kind!r}")


def _start_bits(X: BitLatticeTuple, trials: int) -> np.ndarray:
    return np.repeat(X.member_bits()[None], trials, axis=0)


def _pack(bits: np.ndarray) -> np.ndarray:
    """Packed state index of each trial (bit ``site * k + member``)."""
    trials, k, n = bits.shape
    if n * k > 62:
        raise CapacityError("states wider than 62 bits cannot be packed")
    flat = bits.transpose(0, 2, 1).reshape(trials, n * k).astype(np.int64)
    return flat @ (np.int64(1) << np.arange(n * k, dtype=np.int64))


def _all_distinct(bits: np.ndarray) -> np.ndarray:
    trials, k, n = bits.shape
    ok = np.ones(trials, dtype=bool)
    for a, b in itertools.combinations(range(k), 2):
        ok &= np.any(bits[:, a] != bits[:, b], axis=1)
    return ok


def _slice_collides(bits: np.ndarray, shape: LatticeShape) -> np.ndarray:
    """Whether some axis-0 slice has two equal members."""
    hit = np.zeros(bits.shape[0], dtype=bool)
    for i in range(shape.side):
        sites = slice_sites(shape.dims, shape.side, 0, i)
        sl = bits[:, :, sites]
        for a, b in itertools.combinations(range(shape.k), 2):
            hit |= np.all(sl[:, a] == sl[:, b], axis=1)
    return hit


def _chunks(samples: int) -> list[tuple[int, int]]:
    return [(i, min(MC_CHUNK, samples - i * MC_CHUNK)) for i in range(math.ceil(samples / MC_CHUNK))]


def _run_chunks(fn, samples: int, threads: int) -> list:
    """Evaluate ``fn(chunk_index, size)`` for every chunk; results in chunk order."""
    jobs = _chunks(samples)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


# -- Monte Carlo TV -------------------------------------------------------------------


@dataclass
class McTvPoint:
    t: int
    samples: int
    tv: float
    bias: float
    sigma: float
    distinct_states: int
    warning: bool
    slice_tv: float | None = None
    slice_bias: float | None = None
    distinct_ok: bool = True

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def slice_marginal_target(shape: LatticeShape) -> np.ndarray:
    """Law of the axis-0 slice-0 values of a uniform element of D.

    Cell index is ``sum_l v_l * A^l`` with ``A = 2^(n/side)``. A cell whose
    values have equality pattern with blocks ``b`` has probability
    ``prod_b perm(2^(n - n/side), |b|) / |D|``.
    """
    A = 1 << shape.slice_sites
    if A**shape.k > 1 << 22:
        raise CapacityError("slice marginal has too many cells")
    rest = 1 << (shape.n - shape.slice_sites)
    weight = {}
    for p in set_partitions(shape.k):
        sizes = np.bincount(np.array(p))
        weight[p] = math.prod(math.perm(rest, int(c)) for c in sizes)
    total = sum(math.perm(A, max(p) + 1) * w for p, w in weight.items())
    cells = np.arange(A**shape.k, dtype=np.int64)
    vals = [(cells // A**l) % A for l in range(shape.k)]
    labels = labels_of(vals)
    out = np.empty(len(cells))
    for p, w in weight.items():
        out[np.all(labels == np.array(p), axis=1)] = w / total
    return out


def _plug_in_tv(keys: np.ndarray, support_size: int) -> tuple[float, int]:
    _, counts = np.unique(keys, return_counts=True)
    n = len(keys)
    u = 1.0 / support_size
    tv = 0.5 * (float(np.abs(counts / n - u).sum()) + (support_size - len(counts)) * u)
    return tv, len(counts)


def mc_tv_estimate(
    X: BitLatticeTuple,
    samples: int,
    t_max: int,
    *,
    sampler: str = "idealized",
    base_layers: int | None = None,
    seed: RngSeed | int | None = None,
    threads: int = 1,
    slice_marginal: bool = False,
) -> list[McTvPoint]:
    """Plug-in TV to uniform on D at rounds ``0..t_max`` from ``samples`` trajectories.

    ``sampler`` is ``"idealized"`` (exact idealized walk), ``"circuit"``
    (fresh random lattice circuits per trial) or ``"uniform"`` (every step
    draws directly from the target, a null check of the estimator).

    ``bias`` is the worst-case plug-in bias ``sqrt(|D| / (4 N))`` and
    ``sigma`` the Efron-Stein bound ``1 / sqrt(2 N)`` on the standard
    deviation. ``warning`` is set when ``N < 50 |D|``, where the plug-in
    estimate is dominated by bias. With ``slice_marginal`` the TV of the
    axis-0 slice-0 marginal (a small, well-sampled projection) is reported
    as well.
    """
    shape = X.shape
    _check_start(X)
    root = as_seed(seed)
    smp = make_sampler(sampler, shape, base_layers, max(t_max, 1))
    pattern = layer_pattern(t_max)
    if sampler == "uniform":
        pattern = "G" * len(pattern)
    checkpoints = {2 * t: t for t in range(t_max + 1)}
    A = 1 << shape.slice_sites
    s0 = slice_sites(shape.dims, shape.side, 0, 0)

    def chunk(i: int, size: int):
        rng = root.child(i).generator()
        bits = _start_bits(X, size)
        keys, cells, ok = {}, {}, True
        for step, b in enumerate(smp.run(bits, rng, pattern)):
            if step in checkpoints:
                t = checkpoints[step]
                ok &= bool(_all_distinct(b).all())
                keys[t] = _pack(b)
                if slice_marginal:
                    v = _block_values(b, s0)
                    cells[t] = v @ (np.int64(A) ** np.arange(shape.k, dtype=np.int64))
        return keys, cells, ok

    results = _run_chunks(chunk, samples, threads)
    distinct = region_census(shape).distinct
    target = slice_marginal_target(shape) if slice_marginal else None
    ok = all(r[2] for r in results)
    out = []
    for t in range(t_max + 1):
        keys = np.concatenate([r[0][t] for r in results])
        tv, seen = _plug_in_tv(keys, distinct)
        pt = McTvPoint(
            t, samples, tv,
            bias=math.sqrt(distinct / (4 * samples)),
            sigma=1 / math.sqrt(2 * samples),
            distinct_states=seen,
            warning=samples < SAMPLES_PER_STATE * distinct,
            distinct_ok=ok,
        )
        if target is not None:
            cells = np.concatenate([r[1][t] for r in results])
            emp = np.bincount(cells, minlength=len(target)) / samples
            pt.slice_tv = 0.5 * float(np.abs(emp - target).sum())
            pt.slice_bias = math.sqrt(len(target) / (4 * samples))
        out.append(pt)
    return out


# -- Monte Carlo collisions -------------------------------------------------------------


@dataclass
class CollisionRate:
    hits: int
    samples: int
    low: float
    high: float
    bound: float

    @property
    def rate(self) -> float:
        return self.hits / self.samples


def mc_collision_rate(
    X: BitLatticeTuple,
    samples: int,
    *,
    sampler: str = "idealized",
    base_layers: int | None = None,
    seed: RngSeed | int | None = None,
    threads: int = 1,
    confidence: float = 0.95,
) -> CollisionRate:
    """Fraction of row-then-column runs that land in ``B_coll``, with a Wilson interval."""
    from .walks import collision_bound

    shape = X.shape
    _check_start(X)
    root = as_seed(seed)
    smp = make_sampler(sampler, shape, base_layers)

    def chunk(i: int, size: int) -> int:
        bits = _start_bits(X, size)
        for b in smp.run(bits, root.child(i).generator(), "LC"):
            pass
        return int((_slice_collides(bits, shape) & _all_distinct(bits)).sum())

    hits = sum(_run_chunks(chunk, samples, threads))
    ci = stats.binomtest(hits, samples).proportion_ci(confidence_level=confidence, method="wilson")
    return CollisionRate(hits, samples, float(ci.low), float(ci.high), collision_bound(shape))


# -- Hamming distance of a uniform distinct pair -------------------------------------------


@dataclass
class HammingTailReport:
    side: int
    samples: int
    empirical: float
    exact: float
    bound: float
    sigma: float = field(init=False)

    def __post_init__(self):
        p = self.empirical
        self.sigma = math.sqrt(max(p * (1 - p), 1e-300) / self.samples)

    @property
    def holds(self) -> bool:
        return self.empirical <= self.bound + 3 * self.sigma


def hamming_tail_check(side: int, samples: int, seed: RngSeed | int | None = None) -> HammingTailReport:
    """``Pr[d(x, y) <= side/4]`` for a uniform pair of distinct ``side``-bit strings vs ``exp(-side/16)``."""
    if side > 62:
        raise CapacityError("strings wider than 62 bits are not supported")
    rng = as_seed(seed).generator()
    x = _distinct_draws(rng, samples, 2, 1 << side)
    diff = x[:, 0] ^ x[:, 1]
    d = np.zeros(samples, dtype=np.int64)
    for j in range(side):
        d += (diff >> j) & 1
    cut = side // 4
    exact = sum(math.comb(side, j) for j in range(1, cut + 1)) / ((1 << side) - 1)
    return HammingTailReport(side, samples, float(np.mean(d <= cut)), exact, math.exp(-side / 16))
