"""How the state space splits into safe, colliding and repeated tuples.

For each shape we count the three regions twice, once by brute force and
once with the closed form, then compare the colliding fraction with its
union bound and the number of color classes with ``k^(k s)``.

Run: python3 demos/census_and_classes.py
"""

from latticeperm.lattice import LatticeShape, count_color_classes, region_census

SHAPES = [(2, 2, 1), (2, 2, 2), (2, 2, 3), (3, 2, 2), (2, 3, 2), (2, 4, 2)]


def main():
    print(f"{'shape':>14} {'safe':>14} {'coll':>12} {'ident':>12} {'coll/D':>8} {'bound':>8} {'classes':>8}")
    for dims, side, k in SHAPES:
        shape = LatticeShape(dims, side, k)
        c = region_census(shape)
        if shape.enumerable():
            assert region_census(shape, "formula").as_tuple() == c.as_tuple()
        cc = count_color_classes(shape)
        print(f"{str(shape):>14} {c.safe:>14} {c.coll:>12} {c.ident:>12} "
              f"{c.coll_ratio:>8.4f} {c.coll_bound:>8.3f} {cc.exact:>4}/{cc.bound}")
    print("\nThe union bound is loose at these sizes; it only bites once slices hold many bits.")


if __name__ == "__main__":
    main()
