"""Packed k-tuples of D-dimensional bit lattices and their color classes.

A state is a k-tuple of lattices ``X^1..X^k``, each a map from
``[side]^dims`` to {+1, -1}. States are packed into a single integer: the
site with lattice coordinates ``c`` of member ``l`` lives at bit position
``index_pack(c, l)``, row-major over ``(axis_0, ..., axis_{D-1}, l)``. Bit 1
stores +1 and bit 0 stores -1. With this layout the sites of one axis-0
slice form a contiguous run of bits.

Everything that needs all ``2**(n*k)`` states at once works on numpy arrays
of packed integers, so the same helpers serve both single-state and
exhaustive code paths.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

#: Default ceiling on ``2**(n*k)`` for exhaustive enumeration.
ENUMERATION_CEILING = 1 << 24

#: Largest tuple arity for which set partitions are enumerated.
MAX_PARTITION_ARITY = 8

_CHUNK = 1 << 20


class LatticeError(ValueError):
    """Out-of-range coordinate, axis or malformed argument."""


class CapacityError(RuntimeError):
    """The requested computation exceeds the configured enumeration limits."""


@dataclass(frozen=True)
class LatticeShape:
    """Geometry of a k-tuple of ``dims``-dimensional lattices of side ``side``."""

    dims: int
    side: int
    k: int = 1

    def __post_init__(self):
        if self.dims < 1 or self.side < 1 or self.k < 1:
            raise LatticeError(f"invalid shape {self}")

    @property
    def n(self) -> int:
        return self.side**self.dims

    @property
    def nbits(self) -> int:
        return self.n * self.k

    @property
    def slice_sites(self) -> int:
        """Number of sites in one axis slice (``n / side``)."""
        return self.n // self.side

    @property
    def num_states(self) -> int:
        return 1 << self.nbits

    def with_k(self, k: int) -> LatticeShape:
        return LatticeShape(self.dims, self.side, k)

    def enumerable(self, ceiling: int = ENUMERATION_CEILING) -> bool:
        return self.num_states <= ceiling

    def require_enumerable(self, ceiling: int = ENUMERATION_CEILING) -> None:
        if not self.enumerable(ceiling):
            raise CapacityError(
                f"{self} has 2^{self.nbits} states, above the enumeration ceiling "
                f"2^{ceiling.bit_length() - 1}"
            )

    def check_axis(self, axis: int) -> None:
        if not 0 <= axis < self.dims:
            raise LatticeError(f"axis {axis} out of range for dims={self.dims}")

    def __str__(self) -> str:
        return f"D={self.dims},s={self.side},k={self.k}"


def index_pack(coords: Sequence[int], member: int, shape: LatticeShape) -> int:
    """Flat bit position of lattice site ``coords`` in tuple member ``member``."""
    if len(coords) != shape.dims:
        raise LatticeError(f"expected {shape.dims} coordinates, got {len(coords)}")
    site = 0
    for c in coords:
        if not 0 <= c < shape.side:
            raise LatticeError(f"coordinate {c} out of range [0, {shape.side})")
        site = site * shape.side + c
    if not 0 <= member < shape.k:
        raise LatticeError(f"tuple index {member} out of range [0, {shape.k})")
    return site * shape.k + member


def index_unpack(index: int, shape: LatticeShape) -> tuple[tuple[int, ...], int]:
    """Inverse of :func:`index_pack`."""
    if not 0 <= index < shape.nbits:
        raise LatticeError(f"flat index {index} out of range")
    site, member = divmod(index, shape.k)
    coords = []
    for _ in range(shape.dims):
        site, c = divmod(site, shape.side)
        coords.append(c)
    return tuple(reversed(coords)), member


def site_grid(dims: int, side: int) -> np.ndarray:
    """Site indices of a single lattice arranged as a ``[side]*dims`` array."""
    return np.arange(side**dims, dtype=np.int64).reshape((side,) * dims)


def slice_sites(dims: int, side: int, axis: int, i: int) -> np.ndarray:
    """Sites of the slice at index ``i`` along ``axis``, row-major over the other axes."""
    return np.take(site_grid(dims, side), i, axis=axis).ravel()


def fiber_sites(dims: int, side: int, axis: int) -> list[np.ndarray]:
    """The 1-D lines along ``axis``, ordered row-major over the remaining axes."""
    grid = np.moveaxis(site_grid(dims, side), axis, -1)
    return list(grid.reshape(-1, side))


# -- tuples -----------------------------------------------------------------


@dataclass(frozen=True)
class BitLatticeTuple:
    """A k-tuple of lattices packed into one integer (see module docstring)."""

    shape: LatticeShape
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.shape.nbits):
            raise LatticeError("packed value does not fit the shape")

    @classmethod
    def from_members(cls, members: Sequence[Sequence[int]], shape: LatticeShape) -> BitLatticeTuple:
        """Build from ``k`` member lattices given as flat row-major sequences.

        Entries may be +1/-1 or 1/0.
        """
        arr = np.asarray(members)
        if arr.shape != (shape.k, shape.n):
            raise LatticeError(f"expected members of shape {(shape.k, shape.n)}, got {arr.shape}")
        return cls(shape, pack_bits((arr > 0).T.ravel()))

    @classmethod
    def from_grids(cls, grids: Sequence[np.ndarray], dims: int | None = None) -> BitLatticeTuple:
        """Build from a list of ``±1`` arrays of identical hypercubic shape."""
        arrs = [np.asarray(g) for g in grids]
        dims = arrs[0].ndim if dims is None else dims
        shape = LatticeShape(dims, arrs[0].shape[0], len(arrs))
        return cls.from_members([a.ravel() for a in arrs], shape)

    def site_bits(self) -> np.ndarray:
        """All ``n*k`` bits as a uint8 array in packed order."""
        return unpack_bits(self.bits, self.shape.nbits)

    def member_bits(self) -> np.ndarray:
        """Bits as a ``(k, n)`` array, member-major."""
        return self.site_bits().reshape(self.shape.n, self.shape.k).T.copy()

    def member(self, l: int) -> np.ndarray:
        """Member ``l`` as a ``±1`` array of shape ``[side]*dims``."""
        bits = self.member_bits()[l]
        return (2 * bits.astype(np.int8) - 1).reshape((self.shape.side,) * self.shape.dims)

    def render(self) -> str:
        """One line per axis-0 slice, '+'/'−' characters, members separated by '|'."""
        mb = self.member_bits()
        s = self.shape
        lines = []
        for i in range(s.side):
            sites = slice_sites(s.dims, s.side, 0, i)
            parts = ["".join("+" if b else "−" for b in mb[l, sites]) for l in range(s.k)]
            lines.append("|".join(parts))
        return "\n".join(lines)


def pack_bits(bits: Sequence[int]) -> int:
    """Pack a sequence of 0/1 values, element ``j`` at bit ``j``."""
    out = 0
    for j, b in enumerate(bits):
        if b:
            out |= 1 << j
    return out


def unpack_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> j) & 1 for j in range(width)], dtype=np.uint8)


def axis_slice(X: BitLatticeTuple, axis: int, i: int) -> BitLatticeTuple:
    """The k-tuple of ``(D-1)``-dimensional slices of ``X`` at index ``i`` along ``axis``."""
    s = X.shape
    s.check_axis(axis)
    if not 0 <= i < s.side:
        raise LatticeError(f"slice index {i} out of range [0, {s.side})")
    if s.dims == 1:
        raise LatticeError("cannot slice a 1-dimensional lattice")
    sites = slice_sites(s.dims, s.side, axis, i)
    sub = LatticeShape(s.dims - 1, s.side, s.k)
    return BitLatticeTuple.from_members(X.member_bits()[:, sites], sub)


# -- partitions -------------------------------------------------------------


def set_partitions(k: int) -> Iterator[tuple[int, ...]]:
    """All set partitions of ``range(k)`` as first-occurrence label tuples.

    Yields restricted growth strings, so ``len(list(set_partitions(k)))`` is
    the Bell number ``B_k``.
    """
    if k > MAX_PARTITION_ARITY:
        raise CapacityError(f"partition enumeration capped at k={MAX_PARTITION_ARITY}")
    if k == 0:
        yield ()
        return

    def grow(prefix: list[int], top: int):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        for label in range(top + 2):
            prefix.append(label)
            yield from grow(prefix, max(top, label))
            prefix.pop()

    yield from grow([0], 0)


def canonical_labels(values: Sequence) -> tuple[int, ...]:
    """First-occurrence labeling of the equality pattern of ``values``."""
    seen: dict = {}
    return tuple(seen.setdefault(v, len(seen)) for v in values)


def block_count(labels: Sequence[int]) -> int:
    return max(labels) + 1 if len(labels) else 0


def meet(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    """Intersection of two equivalence relations given as label tuples."""
    return canonical_labels(list(zip(a, b)))


def is_discrete(labels: Sequence[int]) -> bool:
    return block_count(labels) == len(labels)


@dataclass(frozen=True)
class ColorSignature:
    """Per-slice equality patterns of a k-tuple along one axis."""

    axis: int
    slice_partitions: tuple[tuple[int, ...], ...]

    def block_counts(self) -> tuple[int, ...]:
        return tuple(block_count(p) for p in self.slice_partitions)

    def is_safe(self) -> bool:
        return all(is_discrete(p) for p in self.slice_partitions)

    def grid_partition(self) -> tuple[int, ...]:
        """Equality pattern of the whole members implied by the slices."""
        k = len(self.slice_partitions[0])
        out = (0,) * k
        for p in self.slice_partitions:
            out = meet(out, p)
        return out


def slice_coloring(X: BitLatticeTuple, axis: int = 0) -> ColorSignature:
    s = X.shape
    s.check_axis(axis)
    mb = X.member_bits()
    parts = []
    for i in range(s.side):
        sites = slice_sites(s.dims, s.side, axis, i)
        parts.append(canonical_labels([mb[l, sites].tobytes() for l in range(s.k)]))
    return ColorSignature(axis, tuple(parts))


class RegionLabel(enum.IntEnum):
    SAFE = 0
    COLL = 1
    IDENT = 2


def classify(X: BitLatticeTuple, axis: int = 0) -> RegionLabel:
    sig = slice_coloring(X, axis)
    if not is_discrete(sig.grid_partition()):
        return RegionLabel.IDENT
    return RegionLabel.SAFE if sig.is_safe() else RegionLabel.COLL


def in_distinct(X: BitLatticeTuple) -> bool:
    """Whether the members of ``X`` are pairwise distinct (``X`` in D)."""
    mb = X.member_bits()
    return is_discrete(canonical_labels([row.tobytes() for row in mb]))


def color_class_size(sig: ColorSignature, shape: LatticeShape) -> int:
    """Exact number of tuples whose slices along ``sig.axis`` have signature ``sig``.

    Each slice with ``tau`` blocks contributes the falling factorial
    ``A (A-1) ... (A-tau+1)`` with ``A = 2**(n/side)``. Unrealizable
    signatures give 0.
    """
    if len(sig.slice_partitions) != shape.side:
        raise LatticeError("signature does not match the lattice side")
    alphabet = 1 << shape.slice_sites
    size = 1
    for tau in sig.block_counts():
        size *= math.perm(alphabet, tau)
    return size


# -- census -----------------------------------------------------------------


@dataclass(frozen=True)
class RegionCensus:
    shape: LatticeShape
    safe: int
    coll: int
    ident: int
    method: str

    @property
    def distinct(self) -> int:
        return self.safe + self.coll

    @property
    def total(self) -> int:
        return self.safe + self.coll + self.ident

    @property
    def coll_ratio(self) -> float:
        return self.coll / self.distinct if self.distinct else 0.0

    @property
    def coll_bound(self) -> float:
        """Union bound ``2 s k^2 / 2^(n/s)`` on ``|B_coll| / |D|``."""
        s = self.shape
        return 2 * s.side * s.k**2 / 2.0**s.slice_sites

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.safe, self.coll, self.ident, self.distinct)


def region_census(shape: LatticeShape, method: str = "auto", threads: int = 1) -> RegionCensus:
    """Exact sizes of ``B_safe``, ``B_coll``, ``B_I`` (and ``D``).

    ``method`` is ``"enumerate"``, ``"formula"`` or ``"auto"`` (enumerate
    when the state space is under the ceiling).
    """
    if method == "auto":
        method = "enumerate" if shape.enumerable() else "formula"
    if method == "enumerate":
        shape.require_enumerable()
        counts = np.zeros(3, dtype=np.int64)

        def work(lo: int, hi: int) -> np.ndarray:
            lab = region_labels(shape, np.arange(lo, hi, dtype=np.int64))
            return np.bincount(lab, minlength=3)

        for c in _map_chunks(work, shape.num_states, threads):
            counts += c
        safe, coll, ident = (int(c) for c in counts)
    elif method == "formula":
        safe, coll, ident = _census_formula(shape)
    else:
        raise LatticeError(f"unknown census method {method!r}")
    return RegionCensus(shape, safe, coll, ident, method)


def _census_formula(shape: LatticeShape) -> tuple[int, int, int]:
    k = shape.k
    alphabet = 1 << shape.slice_sites
    weights = {p: math.perm(alphabet, block_count(p)) for p in set_partitions(k)}
    weights = {p: w for p, w in weights.items() if w}
    # dynamic program over slices; state is the meet of the partitions so far
    dist = {(0,) * k: 1}
    for _ in range(shape.side):
        nxt: dict[tuple[int, ...], int] = {}
        for m, w in dist.items():
            for p, wp in weights.items():
                key = meet(m, p)
                nxt[key] = nxt.get(key, 0) + w * wp
        dist = nxt
    total = 1 << shape.nbits
    ident = sum(w for m, w in dist.items() if not is_discrete(m))
    safe = math.perm(alphabet, k) ** shape.side
    return safe, total - safe - ident, ident


@dataclass(frozen=True)
class ClassCount:
    shape: LatticeShape
    exact: int
    bound: int

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound


def count_color_classes(shape: LatticeShape) -> ClassCount:
    """Number of realizable color signatures along one axis and the ``k^(k s)`` bound."""
    alphabet = 1 << shape.slice_sites
    realizable = sum(1 for p in set_partitions(shape.k) if block_count(p) <= alphabet)
    return ClassCount(shape, realizable**shape.side, shape.k ** (shape.k * shape.side))


# -- vectorized helpers over arrays of packed states -------------------------


def all_states(shape: LatticeShape) -> np.ndarray:
    shape.require_enumerable()
    return np.arange(shape.num_states, dtype=np.int64)


def gather_values(states: np.ndarray, sites: np.ndarray, member: int, k: int) -> np.ndarray:
    """Integer value of member ``member`` restricted to ``sites`` for each packed state."""
    out = np.zeros(states.shape, dtype=np.int64)
    for j, site in enumerate(sites):
        out |= ((states >> np.int64(site * k + member)) & 1) << j
    return out


def labels_of(values: Sequence[np.ndarray]) -> np.ndarray:
    """First-occurrence labels for ``k`` parallel value arrays; shape ``(len, k)``."""
    k = len(values)
    labels = np.zeros(values[0].shape + (k,), dtype=np.int64)
    nblocks = np.ones(values[0].shape, dtype=np.int64)
    for l in range(1, k):
        lab = np.full(values[0].shape, -1, dtype=np.int64)
        for m in range(l):
            hit = (lab < 0) & (values[l] == values[m])
            lab[hit] = labels[..., m][hit]
        new = lab < 0
        lab[new] = nblocks[new]
        nblocks += new
        labels[..., l] = lab
    return labels


def partition_code(labels: np.ndarray) -> np.ndarray:
    """Encode label rows as integers in ``[0, k^k)``."""
    k = labels.shape[-1]
    weights = np.int64(k) ** np.arange(k, dtype=np.int64)
    return labels @ weights


def block_partition_codes(states: np.ndarray, shape: LatticeShape, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Partition code of each site block for each state; shape ``(len(states), len(blocks))``."""
    k = shape.k
    out = np.empty(states.shape + (len(blocks),), dtype=np.int64)
    for b, sites in enumerate(blocks):
        vals = [gather_values(states, sites, l, k) for l in range(k)]
        out[..., b] = partition_code(labels_of(vals))
    return out


def discrete_code(k: int) -> int:
    return int(partition_code(np.arange(k, dtype=np.int64)[None, :])[0])


def region_labels(shape: LatticeShape, states: np.ndarray, axis: int = 0) -> np.ndarray:
    """Vectorized :func:`classify` over an array of packed states."""
    k = shape.k
    full = np.arange(shape.n, dtype=np.int64)
    grid = block_partition_codes(states, shape, [full])[..., 0]
    ident = grid != discrete_code(k)
    blocks = [slice_sites(shape.dims, shape.side, axis, i) for i in range(shape.side)]
    codes = block_partition_codes(states, shape, blocks)
    safe = np.all(codes == discrete_code(k), axis=-1)
    out = np.full(states.shape, int(RegionLabel.COLL), dtype=np.int64)
    out[safe] = int(RegionLabel.SAFE)
    out[ident] = int(RegionLabel.IDENT)
    return out


@lru_cache(maxsize=32)
def region_labels_all(shape: LatticeShape) -> np.ndarray:
    """Region label of every packed state (cached, read-only)."""
    lab = region_labels(shape, all_states(shape))
    lab.setflags(write=False)
    return lab


def _map_chunks(fn, total: int, threads: int):
    bounds = [(lo, min(lo + _CHUNK, total)) for lo in range(0, total, _CHUNK)]
    if threads <= 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


# -- text form -----------------------------------------------------------------

_PLUS = "+"
_MINUS = "-−"


def format_tuple_line(X: BitLatticeTuple) -> str:
    """Members as row-major '+'/'-' strings joined by '|'."""
    return "|".join("".join("+" if b else "-" for b in row) for row in X.member_bits())


def parse_tuple_line(line: str, dims: int, side: int) -> BitLatticeTuple:
    """Inverse of :func:`format_tuple_line`; accepts '-' or '−' for -1."""
    parts = line.strip().split("|")
    shape = LatticeShape(dims, side, len(parts))
    rows = []
    for p in parts:
        p = p.strip()
        if len(p) != shape.n or any(ch not in _PLUS + _MINUS for ch in p):
            raise LatticeError(f"member {p!r} is not {shape.n} '+'/'-' characters")
        rows.append([1 if ch == _PLUS else 0 for ch in p])
    return BitLatticeTuple.from_members(rows, shape)


def standard_start(shape: LatticeShape, region: str = "safe") -> BitLatticeTuple:
    """A fixed start tuple in ``B_safe`` or ``B_coll`` without enumeration.

    ``safe``: member ``l`` holds the value ``l`` in every axis-0 slice.
    ``coll``: member ``l`` holds ``l`` in slice 0 and zeros elsewhere, so
    all other slices collide.
    """
    A = 1 << shape.slice_sites
    if shape.k > A:
        raise LatticeError(f"k={shape.k} exceeds the {A} values of a slice")
    if region == "coll" and shape.side < 2:
        raise LatticeError("a collision start needs at least two slices")
    if region not in ("safe", "coll"):
        raise LatticeError(f"unknown start region {region!r}")
    members = np.zeros((shape.k, shape.n), dtype=np.uint8)
    for i in range(shape.side if region == "safe" else 1):
        sites = slice_sites(shape.dims, shape.side, 0, i)
        for l in range(shape.k):
            members[l, sites] = (l >> np.arange(len(sites))) & 1
    return BitLatticeTuple.from_members(members, shape)
