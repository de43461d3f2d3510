"""Distance between one row-column-row sandwich and a fully random permutation.

Power iteration on the squared difference gives its operator norm. For a
single lattice (k=1) one row step already randomizes everything, so the
norm is zero. For pairs the norm is a constant below one, which is what
drives geometric mixing. At these tiny sides the norm does not yet shrink
with the lattice size.

Run: python3 demos/spectral_gap.py
"""

import time

from latticeperm.lattice import LatticeShape
from latticeperm.walks import check_operator_identities, spectral_norm_diff


def main():
    shape = LatticeShape(2, 2, 2)
    bad = [r for r in check_operator_identities(shape) if not r.passed]
    print(f"operator identities on {shape}: {'all pass' if not bad else bad}")
    for dims, side, k in [(2, 2, 1), (2, 3, 1), (2, 2, 2), (2, 2, 3), (3, 2, 2), (2, 3, 2)]:
        shape = LatticeShape(dims, side, k)
        t0 = time.perf_counter()
        res = spectral_norm_diff(shape, oracle=shape.num_states <= 256)
        oracle = "" if res.oracle is None else f"  dense oracle delta {res.oracle_delta:.1e}"
        print(f"{str(shape):>12}: norm {res.value:.10f} after {res.iterations:>3} steps "
              f"({time.perf_counter() - t0:.2f}s){oracle}")


if __name__ == "__main__":
    main()
