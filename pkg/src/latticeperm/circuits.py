"""Random reversible circuits of uniform 3-bit gates on D-dimensional lattices.

A circuit is a small tree:

* ``Base1D`` -- a 1-D brickwork of 3-bit gates on ``width`` wires;
* ``AxisParallel`` -- independent sub-circuits on the slices (or the 1-D
  fibers) of a lattice along one axis, run side by side;
* ``Sequence`` -- sub-circuits on the same wires, run one after another.

Wire ``j`` of a lattice is the site with row-major flat index ``j``. A
single lattice state is either a packed integer (bit ``j`` = wire ``j``) or
an array of 0/1 values whose last axis runs over wires.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from .lattice import BitLatticeTuple, LatticeError, LatticeShape, site_grid
from .rng import RngSeed, as_seed

FORMAT = "latticeperm.circuit"
FORMAT_VERSION = 1


# -- gates ---------------------------------------------------------------------


@dataclass(frozen=True)
class Gate3:
    """A reversible gate: ``table`` permutes the 8 values of its three wires.

    The input index is ``bit(w0) | bit(w1) << 1 | bit(w2) << 2``.
    """

    wires: tuple[int, int, int]
    table: tuple[int, ...]

    def __post_init__(self):
        if len(self.wires) != 3 or len(set(self.wires)) != 3 or min(self.wires) < 0:
            raise LatticeError(f"gate wires must be three distinct non-negative ints: {self.wires}")
        if sorted(self.table) != list(range(8)):
            raise LatticeError(f"gate table is not a permutation of 0..7: {self.table}")

    def inverse(self) -> Gate3:
        inv = [0] * 8
        for i, v in enumerate(self.table):
            inv[v] = i
        return Gate3(self.wires, tuple(inv))


def sample_gate(rng: np.random.Generator, wires) -> Gate3:
    """Gate on ``wires`` with a uniformly random table (Fisher-Yates via ``rng.permutation``)."""
    return Gate3(tuple(int(w) for w in wires), tuple(int(v) for v in rng.permutation(8)))


def sample_tables(rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` independent uniform permutations of 0..7, shape ``(count, 8)``.

    Vectorized Fisher-Yates: position ``i`` swaps with a uniform index in
    ``[0, i]`` for ``i = 7..1``.
    """
    tables = np.tile(np.arange(8, dtype=np.uint8), (count, 1))
    rows = np.arange(count)
    for i in range(7, 0, -1):
        j = rng.integers(0, i + 1, size=count)
        tmp = tables[rows, j].copy()
        tables[rows, j] = tables[:, i]
        tables[:, i] = tmp
    return tables


# -- circuit nodes -------------------------------------------------------------


@dataclass(frozen=True)
class Base1D:
    width: int
    layers: tuple[tuple[Gate3, ...], ...]

    def __post_init__(self):
        for layer in self.layers:
            used = [w for g in layer for w in g.wires]
            if len(used) != len(set(used)):
                raise LatticeError("a wire appears in two gates of one layer")
            if used and max(used) >= self.width:
                raise LatticeError("gate wire outside the circuit width")


@dataclass(frozen=True)
class AxisParallel:
    """Sub-circuits on the parallel pieces of a ``[side]^dims`` lattice.

    ``span="slice"``: one child per index along ``axis``, acting on that
    ``(dims-1)``-dimensional slice. ``span="fiber"``: one child per line
    running along ``axis``, ordered row-major over the other axes.
    """

    dims: int
    side: int
    axis: int
    span: str
    children: tuple

    def __post_init__(self):
        if self.span not in ("slice", "fiber"):
            raise LatticeError(f"unknown span {self.span!r}")
        if not 0 <= self.axis < self.dims:
            raise LatticeError(f"axis {self.axis} out of range")
        expected = self.side if self.span == "slice" else self.side ** (self.dims - 1)
        if len(self.children) != expected:
            raise LatticeError(f"expected {expected} sub-circuits, got {len(self.children)}")
        piece = self.side ** (self.dims - 1) if self.span == "slice" else self.side
        for c in self.children:
            w = width(c)
            if w is not None and w != piece:
                raise LatticeError(f"sub-circuit width {w} does not match piece size {piece}")


@dataclass(frozen=True)
class Sequence:
    children: tuple


CircuitSpec = Union[Base1D, AxisParallel, Sequence]


def width(c: CircuitSpec) -> int | None:
    """Number of wires, or None for an empty sequence (which fits any width)."""
    if isinstance(c, Base1D):
        return c.width
    if isinstance(c, AxisParallel):
        return c.side**c.dims
    widths = {width(ch) for ch in c.children} - {None}
    if len(widths) > 1:
        raise LatticeError(f"sequence children disagree on width: {widths}")
    return widths.pop() if widths else None


def depth(c: CircuitSpec) -> int:
    if isinstance(c, Base1D):
        return len(c.layers)
    if isinstance(c, AxisParallel):
        return max((depth(ch) for ch in c.children), default=0)
    return sum(depth(ch) for ch in c.children)


def gate_count(c: CircuitSpec) -> int:
    if isinstance(c, Base1D):
        return sum(len(layer) for layer in c.layers)
    return sum(gate_count(ch) for ch in c.children)


def invert(c: CircuitSpec) -> CircuitSpec:
    if isinstance(c, Base1D):
        return Base1D(c.width, tuple(tuple(g.inverse() for g in layer) for layer in reversed(c.layers)))
    if isinstance(c, AxisParallel):
        return AxisParallel(c.dims, c.side, c.axis, c.span, tuple(invert(ch) for ch in c.children))
    return Sequence(tuple(invert(ch) for ch in reversed(c.children)))


# -- construction --------------------------------------------------------------


def brickwork_triples(width: int, layer: int) -> list[tuple[int, int, int]]:
    """Wire triples of one brickwork layer; odd layers are shifted by one wire."""
    off = layer % 2
    return [(a, a + 1, a + 2) for a in range(off, width - 2, 3)]


def build_brickwork_1d(width: int, layers: int, seed: RngSeed | int | None = None) -> Base1D:
    if width < 3:
        raise LatticeError(f"brickwork needs at least 3 wires, got {width}")
    if layers < 1:
        raise LatticeError("brickwork needs at least one layer")
    rng = as_seed(seed).generator()
    return Base1D(
        width,
        tuple(tuple(sample_gate(rng, w) for w in brickwork_triples(width, m)) for m in range(layers)),
    )


def suggest_base_layers(width: int, k: int, c: float = 1.0) -> int:
    """Heuristic brickwork depth ``ceil(c * width * (k + ln width))``.

    A stand-in for the asymptotic depth of 1-D brickwork k-wise independence;
    tune ``c`` per experiment.
    """
    return max(1, math.ceil(c * width * (k + math.log(width))))


def predicted_depth(dims: int, t: int, base_depth: int) -> int:
    """Depth of :func:`build_lattice_circuit`: ``(2t+1)^(dims-1) * base_depth``."""
    if dims < 2:
        raise LatticeError("lattice circuits need dims >= 2")
    return (2 * t + 1) ** (dims - 1) * base_depth


def layer_pattern(t: int) -> str:
    """``L`` (slice layer) and ``C`` (column layer) steps: ``L (C L)^t``."""
    if t < 0:
        raise LatticeError("t must be non-negative")
    return "L" + "CL" * t


def build_lattice_circuit(
    dims: int,
    side: int,
    t: int,
    base_layers: int,
    seed: RngSeed | int | None = None,
    *,
    threads: int = 1,
) -> CircuitSpec:
    """Alternating slice and column layers, ``2t+1`` of them, starting and ending with slices.

    In two dimensions the slices are rows and the columns are axis-1
    slices, each filled with a 1-D brickwork of ``base_layers`` layers. In
    ``dims >= 3`` each slice gets a recursively built ``(dims-1)``-dimensional
    circuit and the column layer runs 1-D brickworks along the axis-0 fibers;
    those brickworks are given as many layers as the slice circuits have, so
    every layer of the recursion has the same depth.
    """
    return build_layers(dims, side, t, base_layers, layer_pattern(t), seed, threads=threads)


def build_layers(
    dims: int,
    side: int,
    t: int,
    base_layers: int,
    pattern: str,
    seed: RngSeed | int | None = None,
    *,
    threads: int = 1,
) -> Sequence:
    """Lattice circuit for an explicit layer ``pattern`` of ``L``/``C`` steps.

    ``t`` is the round count used for the recursive slice circuits when
    ``dims >= 3``.
    """
    if dims < 2:
        raise LatticeError("lattice circuits need dims >= 2")
    if side < 3:
        raise LatticeError(f"side {side} is too small for 3-bit gates")
    if base_layers < 1:
        raise LatticeError("base_layers must be positive")
    root = as_seed(seed)
    sub_depth = base_layers if dims == 2 else predicted_depth(dims - 1, t, base_layers)

    def piece(m: int, step: str, i: int) -> CircuitSpec:
        s = root.child(m, i)
        if step == "L" and dims > 2:
            return build_lattice_circuit(dims - 1, side, t, base_layers, s)
        if step == "L":
            return build_brickwork_1d(side, base_layers, s)
        return build_brickwork_1d(side, sub_depth, s)

    jobs = []
    for m, step in enumerate(pattern):
        if step not in "LC":
            raise LatticeError(f"unknown layer step {step!r}")
        count = side if (step == "L" or dims == 2) else side ** (dims - 1)
        jobs.extend((m, step, i) for i in range(count))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            built = list(pool.map(lambda j: piece(*j), jobs))
    else:
        built = [piece(*j) for j in jobs]

    layers = []
    for m, step in enumerate(pattern):
        children = tuple(c for (mm, _, _), c in zip(jobs, built) if mm == m)
        if step == "L":
            layers.append(AxisParallel(dims, side, 0, "slice", children))
        elif dims == 2:
            layers.append(AxisParallel(dims, side, 1, "slice", children))
        else:
            layers.append(AxisParallel(dims, side, 0, "fiber", children))
    return Sequence(tuple(layers))


# -- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class CompiledCircuit:
    """Flat gate list in application order, with wires mapped to global indices."""

    width: int
    wires: np.ndarray  # (G, 3)
    tables: np.ndarray  # (G, 8)

    def apply_bits(self, bits: np.ndarray) -> np.ndarray:
        x = np.array(bits, dtype=np.uint8, copy=True)
        if x.shape[-1] != self.width:
            raise LatticeError(f"state has {x.shape[-1]} wires, circuit has {self.width}")
        for (a, b, c), table in zip(self.wires, self.tables):
            idx = x[..., a] | (x[..., b] << 1) | (x[..., c] << 2)
            out = table[idx]
            x[..., a] = out & 1
            x[..., b] = (out >> 1) & 1
            x[..., c] = (out >> 2) & 1
        return x


def compile_circuit(c: CircuitSpec, n_wires: int | None = None) -> CompiledCircuit:
    w = width(c)
    if w is None:
        if n_wires is None:
            raise LatticeError("width of an empty circuit must be given")
        w = n_wires
    elif n_wires is not None and n_wires != w:
        raise LatticeError(f"circuit acts on {w} wires, not {n_wires}")
    wires: list = []
    tables: list = []
    _flatten(c, np.arange(w, dtype=np.int64), wires, tables)
    return CompiledCircuit(
        w,
        np.array(wires, dtype=np.int64).reshape(-1, 3),
        np.array(tables, dtype=np.uint8).reshape(-1, 8),
    )


def _flatten(c: CircuitSpec, sites: np.ndarray, wires: list, tables: list) -> None:
    if isinstance(c, Base1D):
        for layer in c.layers:
            for g in layer:
                wires.append(sites[list(g.wires)])
                tables.append(g.table)
    elif isinstance(c, AxisParallel):
        grid = sites[site_grid(c.dims, c.side)]
        if c.span == "slice":
            pieces = [np.take(grid, i, axis=c.axis).ravel() for i in range(c.side)]
        else:
            pieces = list(np.moveaxis(grid, c.axis, -1).reshape(-1, c.side))
        for ch, p in zip(c.children, pieces):
            _flatten(ch, p, wires, tables)
    else:
        for ch in c.children:
            _flatten(ch, sites, wires, tables)


def apply(c: CircuitSpec | CompiledCircuit, x, n_wires: int | None = None):
    """Evaluate the circuit on one lattice (packed int) or on a 0/1 array ``(..., wires)``."""
    cc = c if isinstance(c, CompiledCircuit) else compile_circuit(c, n_wires)
    if isinstance(x, (int, np.integer)):
        bits = np.array([(int(x) >> j) & 1 for j in range(cc.width)], dtype=np.uint8)
        out = cc.apply_bits(bits)
        return sum(int(b) << j for j, b in enumerate(out))
    return cc.apply_bits(np.asarray(x))


def apply_tuple(c: CircuitSpec | CompiledCircuit, X: BitLatticeTuple) -> BitLatticeTuple:
    """Apply the same circuit to every member of ``X``."""
    out = apply(c, X.member_bits(), X.shape.n)
    return BitLatticeTuple.from_members(out, X.shape)


# -- serialization -------------------------------------------------------------


def node_to_dict(c: CircuitSpec) -> dict:
    if isinstance(c, Base1D):
        return {
            "type": "base1d",
            "width": c.width,
            "layers": [[{"wires": list(g.wires), "table": list(g.table)} for g in layer] for layer in c.layers],
        }
    if isinstance(c, AxisParallel):
        return {
            "type": "axis_parallel",
            "dims": c.dims,
            "side": c.side,
            "axis": c.axis,
            "span": c.span,
            "children": [node_to_dict(ch) for ch in c.children],
        }
    return {"type": "sequence", "children": [node_to_dict(ch) for ch in c.children]}


def node_from_dict(d: dict) -> CircuitSpec:
    kind = d.get("type")
    if kind == "base1d":
        layers = tuple(
            tuple(Gate3(tuple(g["wires"]), tuple(g["table"])) for g in layer) for layer in d["layers"]
        )
        return Base1D(int(d["width"]), layers)
    if kind == "axis_parallel":
        return AxisParallel(
            int(d["dims"]), int(d["side"]), int(d["axis"]), d["span"],
            tuple(node_from_dict(ch) for ch in d["children"]),
        )
    if kind == "sequence":
        return Sequence(tuple(node_from_dict(ch) for ch in d["children"]))
    raise LatticeError(f"unknown circuit node type {kind!r}")


def to_json(c: CircuitSpec, **metadata) -> str:
    """Versioned JSON document; ``metadata`` (seed, parameters) is stored alongside."""
    doc = {"format": FORMAT, "version": FORMAT_VERSION, "metadata": metadata, "circuit": node_to_dict(c)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def from_json(text: str) -> CircuitSpec:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise LatticeError("not a circuit document")
    if doc.get("version") != FORMAT_VERSION:
        raise LatticeError(f"unsupported circuit format version {doc.get('version')}")
    return node_from_dict(doc["circuit"])


def lattice_shape_of(c: CircuitSpec) -> LatticeShape | None:
    """Lattice geometry of a top-level lattice circuit, if it has one."""
    node = c
    while isinstance(node, Sequence) and node.children:
        node = node.children[0]
    if isinstance(node, AxisParallel):
        return LatticeShape(node.dims, node.side)
    return None
