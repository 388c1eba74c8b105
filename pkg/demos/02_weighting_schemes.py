"""Compare fusion weighting schemes on the bundled state design.

Each method is run on the same simulated replicates of the 51-unit state
design with three regimes. Spatially decaying weights should recover the
regimes better than constant weights, which fuse distant units as readily
as neighbours. Pure adjacency only links neighbours, so regimes that are
not contiguous cannot fuse.

    python3 demos/02_weighting_schemes.py [R]

R defaults to 10 replicates (about a minute on one core).
"""

import sys

from gwpcr.simulation import get_design, run_comparison

R = int(sys.argv[1]) if len(sys.argv) > 1 else 10
design = get_design("state-1")
methods = [("spatial-adjacency", 0.8), ("spatial-pairwise", 0.8),
           ("constant", None), ("pure-adjacency", None)]

rows = run_comparison(design, methods, R=R)
print(f"{design.name}: n={design.n}, true K={design.K}, R={R}\n")
print(f"{'method':<20}{'RI':>7}{'CA':>7}{'RCC':>7}{'mean K':>8}{'MSE beta':>10}")
for row in rows:
    print(f"{row['method']:<20}{row['RI']:>7.3f}{row['CA']:>7.3f}{row['RCC']:>7.2f}"
          f"{row['mean_K']:>8.1f}{row['mse_beta']:>10.3f}")
