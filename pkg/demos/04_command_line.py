"""Drive the command-line tool end to end.

Writes a small dataset and edge list to a temporary directory, then runs
``gwpcr path``, ``gwpcr evaluate`` and ``gwpcr replay`` exactly as a user
would from a shell, and shows the files each step produces.

    python3 demos/04_command_line.py
"""

import csv
import subprocess
import sys
import tempfile
from pathlib import Path

from gwpcr.simulation import generate, lattice_design


def gwpcr(*args):
    cmd = [sys.executable, "-m", "gwpcr.cli", *map(str, args)]
    print("$ gwpcr " + " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout + done.stderr, end="")
    print(f"(exit {done.returncode})\n")
    return done.returncode


design = lattice_design(8, 8)
data = generate(design, 0)
ids = [f"cell{k:02d}" for k in range(design.n)]

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    with open(tmp / "data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "comp_1", "comp_2", "comp_3", "x_1", "x_2", "y"])
        for i, u in enumerate(ids):
            w.writerow([u, *data.x[i], *data.x2[i], data.y[i]])
    with open(tmp / "edges.csv", "w") as fh:
        fh.write("from,to\n" + "".join(f"{ids[i]},{ids[j]}\n" for i, j in design.graph.edges))
    with open(tmp / "truth.csv", "w") as fh:
        fh.write("id,cluster\n" + "".join(f"{u},{c}\n" for u, c in zip(ids, design.partition.labels)))

    gwpcr("path", tmp / "data.csv", "--edges", tmp / "edges.csv", "--scheme", "adjusted",
          "--r", 1.5, "--grid-size", 20, "--out", tmp / "run")
    print("files:", sorted(p.name for p in (tmp / "run").iterdir()), "\n")

    # the coefficients file doubles as a label file (id, cluster, ...)
    gwpcr("evaluate", tmp / "truth.csv", tmp / "run" / "coefficients.csv", "--true-k", 4)

    gwpcr("replay", tmp / "run" / "manifest.json", "--out", tmp / "again")
    same = all((tmp / "run" / f).read_bytes() == (tmp / "again" / f).read_bytes()
               for f in ("coefficients.csv", "fit.json", "path.csv"))
    print("replay byte-identical:", same)

    # a malformed row is rejected with its line number
    rows = (tmp / "data.csv").read_text().splitlines()
    rows[3] = rows[3].replace(rows[3].split(",")[1], "0.05", 1)
    (tmp / "bad.csv").write_text("\n".join(rows) + "\n")
    gwpcr("fit", tmp / "bad.csv", "--lattice", "8x8", "--r", 1.5, "--lambda", 0.5,
          "--out", tmp / "bad")
