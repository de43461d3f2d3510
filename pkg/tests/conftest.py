import itertools

import numpy as np
import pytest

from latticeperm.lattice import BitLatticeTuple, LatticeShape, RegionLabel, region_labels_all

S2K2 = LatticeShape(2, 2, 2)
S2K3 = LatticeShape(2, 2, 3)
S3K2 = LatticeShape(2, 3, 2)


def first_state(shape: LatticeShape, region: RegionLabel, offset: int = 0) -> BitLatticeTuple:
    idx = np.flatnonzero(region_labels_all(shape) == region)
    return BitLatticeTuple(shape, int(idx[offset]))


def naive_members(shape: LatticeShape, bits: int) -> list[tuple[int, ...]]:
    """Member lattices of a packed state as bit tuples, decoded bit by bit."""
    return [
        tuple((bits >> (site * shape.k + l)) & 1 for site in range(shape.n))
        for l in range(shape.k)
    ]


def naive_rows(shape: LatticeShape, member: tuple[int, ...]) -> list[tuple[int, ...]]:
    m = shape.n // shape.side
    return [member[i * m:(i + 1) * m] for i in range(shape.side)]


def naive_region(shape: LatticeShape, bits: int) -> str:
    """Independent classification straight from the definitions."""
    ms = naive_members(shape, bits)
    if len(set(ms)) < len(ms):
        return "ident"
    for i in range(shape.side):
        rows = [naive_rows(shape, m)[i] for m in ms]
        if len(set(rows)) < len(rows):
            return "coll"
    return "safe"


@pytest.fixture(scope="session")
def perms4():
    return list(itertools.permutations(range(4)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
