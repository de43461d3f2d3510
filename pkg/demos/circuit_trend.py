"""Real random circuits on 4x4 lattices, estimated by Monte Carlo.

Each trial samples a fresh circuit of 3-bit gates (row brickworks, then
column brickworks, alternating) and applies it to a fixed pair of lattices.
With about 4.3e9 distinct pairs the plug-in TV over whole pairs cannot be
resolved by a million samples, so the script also reports the TV of the
first-row marginal (256 cells) where the estimate is meaningful.

Run: python3 demos/circuit_trend.py [samples]
"""

import sys

from latticeperm.lattice import LatticeShape, standard_start
from latticeperm.mixing import mc_collision_rate, mc_tv_estimate


def main(samples: int = 200_000):
    shape = LatticeShape(2, 4, 2)
    X = standard_start(shape, "coll")
    print(f"start:\n{X.render()}\n")
    pts = mc_tv_estimate(X, samples, 4, sampler="circuit", seed=1, slice_marginal=True)
    print(f"{'t':>2} {'plug-in TV':>11} {'bias bound':>11} {'row-0 TV':>9} {'row-0 bias':>11}")
    for p in pts:
        print(f"{p.t:>2} {p.tv:>11.6f} {p.bias:>11.2f} {p.slice_tv:>9.4f} {p.slice_bias:>11.4f}")
    rate = mc_collision_rate(X, samples, sampler="circuit", seed=2)
    print(f"\nrow-then-column collision rate {rate.rate:.4f} (95% CI {rate.low:.4f}..{rate.high:.4f})")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200_000)
