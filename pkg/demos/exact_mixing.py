"""Exact distance to uniform for pairs of 2x2 lattices.

Starting from a tuple whose rows are pairwise distinct, we push the point
mass through row and column steps and track the total variation distance
to the uniform distribution on distinct pairs. The ratio between rounds
settles at the operator norm from ``spectral_gap.py``. The per-target
envelope ``(t+1)/|B(Y)|`` is then checked for every start and target.

Run: python3 demos/exact_mixing.py
"""

from latticeperm.lattice import LatticeShape, parse_tuple_line, standard_start
from latticeperm.mixing import exact_tv_trajectory, k_to_tau_check, per_target_worst


def main():
    shape = LatticeShape(2, 2, 2)
    for region in ("safe", "coll"):
        tr = exact_tv_trajectory(standard_start(shape, region), 10)
        print(f"start in B_{region}:")
        for t, v in tr.points():
            ratio = "" if t == 0 or tr.tv[t - 1] == 0 else f"  ratio {v / tr.tv[t - 1]:.4f}"
            print(f"  t={t:>2}  TV={v:.3e}{ratio}")
        print(f"  first t with TV < 1e-6: {tr.first_below(1e-6)}")

    print("\nworst per-target deviation over all X, Y in D, and its ratio to (t+1)/|B(Y)|:")
    for t, (dev, ratio) in enumerate(per_target_worst(shape, 4)):
        print(f"  t={t}: {dev:.3e}  ratio {ratio:.3f}")

    X = parse_tuple_line("+--+|+--+|++--", 2, 2)
    rep = k_to_tau_check(X, 2)
    print(f"\nthree members, two distinct: TV {rep.tv_k:.6e} vs projected pair {rep.tv_tau:.6e}")


if __name__ == "__main__":
    main()
