"""How the decay scale r changes the selected number of clusters.

Small r keeps fusion local, large r lets distant units fuse, so the
BIC-selected cluster count usually drops as r grows. For one replicate of
the state design we print the minimum BIC and the selected K per r.

    python3 demos/03_decay_sensitivity.py
"""

from gwpcr.compositional import build_design
from gwpcr.graph import all_pairs_distance
from gwpcr.selection import r_sweep
from gwpcr.simulation import generate, get_design

design = get_design("state-1")
data = generate(design, replicate=0)
td = build_design(data.x, data.x2, data.y)

sweep = r_sweep(td, all_pairs_distance(design.graph), [0.5, 1.0, 1.5, 2.5, 3.5])
print(f"{'r':>5}{'min BIC':>10}{'lambda':>10}{'K':>4}")
for s in sweep:
    print(f"{s['r']:>5}{s['bic']:>10.4f}{s['lambda']:>10.4f}{s['K']:>4}")
