"""Regenerate the bundled graphs, partitions and design files.

Run from the repository root::

    python3 tools/build_data.py

State adjacency follows shared land borders, plus the two conventional
links that keep the graph connected (HI-CA, AK-WA). The county layer is a
synthetic stand-in for Texas: 254 cells from Lloyd iterations inside a rough
outline of the state, joined by Delaunay edges, with partitions built from
11 anchor points placed near the public health region hubs. It reproduces
the size and typical degree of the real county graph, not its exact shape.
"""

import csv
import json
from pathlib import Path

import numpy as np
from matplotlib.path import Path as Polygon
from scipy.cluster.vq import kmeans2
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

OUT = Path(__file__).resolve().parents[1] / "src" / "gwpcr" / "data"

STATES = ("AL AK AZ AR CA CO CT DE DC FL GA HI ID IL IN IA KS KY LA ME MD MA MI MN MS "
          "MO MT NE NV NH NJ NM NY NC ND OH OK OR PA RI SC SD TN TX UT VT VA WA WV WI WY").split()

BORDERS = {
    "AL": "FL GA MS TN", "AZ": "CA NV UT NM", "AR": "LA MS MO OK TN TX",
    "CA": "AZ NV OR HI", "CO": "KS NE NM OK UT WY", "CT": "MA NY RI", "DE": "MD NJ PA",
    "DC": "MD VA", "FL": "AL GA", "GA": "AL FL NC SC TN", "ID": "MT NV OR UT WA WY",
    "IL": "IN IA KY MO WI", "IN": "IL KY MI OH", "IA": "IL MN MO NE SD WI",
    "KS": "CO MO NE OK", "KY": "IL IN MO OH TN VA WV", "LA": "AR MS TX", "ME": "NH",
    "MD": "DE PA VA WV DC", "MA": "CT NH NY RI VT", "MI": "IN OH WI", "MN": "IA ND SD WI",
    "MS": "AL AR LA TN", "MO": "AR IL IA KS KY NE OK TN", "MT": "ID ND SD WY",
    "NE": "CO IA KS MO SD WY", "NV": "AZ CA ID OR UT", "NH": "ME MA VT", "NJ": "DE NY PA",
    "NM": "AZ CO OK TX", "NY": "CT MA NJ PA VT", "NC": "GA SC TN VA", "ND": "MN MT SD",
    "OH": "IN KY MI PA WV", "OK": "AR CO KS MO NM TX", "OR": "CA ID NV WA",
    "PA": "DE MD NJ NY OH WV", "RI": "CT MA", "SC": "GA NC", "SD": "IA MN MT NE ND WY",
    "TN": "AL AR GA KY MS MO NC VA", "TX": "AR LA NM OK", "UT": "AZ CO ID NV WY",
    "VT": "MA NH NY", "VA": "KY MD NC TN WV DC", "WA": "ID OR AK", "WV": "KY MD OH PA VA",
    "WI": "IL IA MI MN", "WY": "CO ID MT NE SD UT", "AK": "WA", "HI": "CA",
}

STATE_DESIGNS = {
    # broad regional divisions
    "design1": {
        "west": "WA OR CA NV ID MT WY UT CO AZ NM AK HI",
        "central": "ND SD NE KS OK TX MN IA MO AR LA WI IL MS AL TN KY IN MI",
        "east": "ME NH VT MA RI CT NY NJ PA DE MD DC VA WV OH NC SC GA FL",
    },
    # development gradient, ignores contiguity
    "design2": {
        "urban": "CA NY NJ MA CT RI MD DC IL FL NV AZ WA TX DE HI",
        "mixed": "CO UT OR PA OH MI VA GA MN NH NC TN MO WI IN LA KS NM SC",
        "rural": "AL AK AR ID IA KY ME MS MT NE ND OK SD VT WV WY",
    },
    # coastline states against the interior
    "design3": {
        "coastal": "AK HI WA OR CA TX LA MS AL FL GA SC NC VA MD DE NJ NY CT RI MA NH ME",
        "inland": "NV ID MT WY UT CO AZ NM ND SD NE KS OK MN IA MO AR WI IL TN KY IN MI OH WV PA VT DC",
    },
    # scattered two-group structure
    "design4": {
        "a": "MT ND MN MI NY ME NV CO KS MO KY VA NC FL TX AZ OR AK IA PA MA",
        "b": "WA ID WY SD NE OK NM UT CA HI LA AR MS AL TN GA SC WV OH IN IL WI MD DE NJ CT RI VT NH DC",
    },
}

TEXAS = [(-106.6, 32.0), (-103.06, 32.0), (-103.04, 36.5), (-100.0, 36.5), (-100.0, 34.56),
         (-99.2, 34.4), (-97.9, 33.9), (-96.5, 33.8), (-95.3, 33.9), (-94.04, 33.55),
         (-94.04, 31.0), (-93.6, 30.0), (-93.85, 29.7), (-94.7, 29.35), (-95.5, 28.8),
         (-96.6, 28.1), (-97.3, 27.4), (-97.2, 26.0), (-97.5, 25.9), (-98.5, 26.2),
         (-99.5, 27.5), (-100.3, 28.3), (-101.0, 29.8), (-102.4, 29.8), (-103.1, 29.0),
         (-104.0, 29.4), (-104.7, 30.2), (-106.6, 31.8)]

# rough hubs of the 11 public health regions, (lon, lat)
REGION_HUBS = [(-101.6, 34.6), (-99.3, 33.0), (-97.0, 32.9), (-95.0, 32.5), (-94.3, 30.7),
               (-95.4, 29.6), (-97.5, 30.9), (-99.2, 29.0), (-102.3, 31.4), (-104.9, 30.7),
               (-98.0, 26.9)]

COUNTY_DESIGNS = {
    # border and coast against the interior
    "design1": [[1, 2, 3, 4, 7, 9], [5, 6, 8, 10, 11]],
    "design2": [[1, 2, 9, 10], [3, 4, 7], [5, 6, 8, 11]],
    "design3": [[1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]],
    "design4": [[1, 9], [2, 3, 7], [4, 5, 6], [8, 11], [10]],
}

STATE_R = {"design1": (0.8, 0.8), "design2": (2.0, 3.5), "design3": (2.5, 3.5), "design4": (2.0, 2.5)}
COUNTY_R = {"design1": (2.0, 2.0), "design2": (2.5, 2.5), "design3": (2.5, 3.0), "design4": (2.0, 1.0)}

CENTERS = {2: [[2, 2], [-2, -2]],
           3: [[2, 2], [-2, 2], [0, -2]],
           4: [[2, 2], [-2, 2], [-2, -2], [2, -2]],
           5: [[2, 2], [-2, 2], [-2, -2], [2, -2], [0, 0]]}


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def state_layer():
    edges = set()
    for a, nbrs in BORDERS.items():
        for b in nbrs.split():
            assert a in BORDERS[b].split(), (a, b)
            edges.add(tuple(sorted((a, b), key=STATES.index)))
    assert set(BORDERS) == set(STATES) and len(STATES) == 51
    write_rows(OUT / "state_edges.csv", ["from", "to"],
               sorted(edges, key=lambda e: (STATES.index(e[0]), STATES.index(e[1]))))
    labels = {}
    for name, groups in STATE_DESIGNS.items():
        lab = {}
        for g, members in groups.items():
            for s in members.split():
                assert s not in lab, (name, s)
                lab[s] = g
        assert set(lab) == set(STATES), (name, set(STATES) - set(lab))
        labels[name] = lab
    write_rows(OUT / "state_partitions.csv", ["id"] + list(STATE_DESIGNS),
               [[s] + [labels[d][s] for d in STATE_DESIGNS] for s in STATES])


def county_layer(n=254, seed=20240517):
    poly = Polygon(TEXAS)
    coslat = np.cos(np.deg2rad(31.0))
    lon, lat = np.meshgrid(np.linspace(-106.7, -93.5, 420), np.linspace(25.8, 36.6, 340))
    grid = np.column_stack([lon.ravel(), lat.ravel()])
    grid = grid[poly.contains_points(grid)]
    xy = grid * [coslat, 1.0]
    rng = np.random.default_rng(seed)
    centers, _ = kmeans2(xy, n, iter=60, minit="++", seed=rng)
    order = np.lexsort((centers[:, 0], -centers[:, 1]))
    centers = centers[order]
    tri = Delaunay(centers)
    cand = set()
    for s in tri.simplices:
        for a, b in ((s[0], s[1]), (s[1], s[2]), (s[0], s[2])):
            cand.add((min(a, b), max(a, b)))
    cand = np.array(sorted(cand))
    length = np.linalg.norm(centers[cand[:, 0]] - centers[cand[:, 1]], axis=1)
    mid = (centers[cand[:, 0]] + centers[cand[:, 1]]) / 2 / [coslat, 1.0]
    keep = (length <= 1.6 * np.median(length)) & poly.contains_points(mid)
    edges = cand[keep]
    from scipy import sparse
    g = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    assert connected_components(g, directed=False)[0] == 1
    ids = [f"C{k + 1:03d}" for k in range(n)]
    lonlat = centers / [coslat, 1.0]
    hubs = np.array(REGION_HUBS) * [coslat, 1.0]
    region = np.argmin(((centers[:, None, :] - hubs[None]) ** 2).sum(-1), axis=1) + 1
    write_rows(OUT / "county_centroids.csv", ["id", "lon", "lat", "region"],
               [[ids[k], f"{lonlat[k, 0]:.4f}", f"{lonlat[k, 1]:.4f}", int(region[k])] for k in range(n)])
    write_rows(OUT / "county_edges.csv", ["from", "to"], [[ids[a], ids[b]] for a, b in edges])
    cols = {}
    for name, groups in COUNTY_DESIGNS.items():
        to_group = {r: gi for gi, regs in enumerate(groups) for r in regs}
        assert sorted(to_group) == list(range(1, 12)), name
        cols[name] = [f"g{to_group[int(r)] + 1}" for r in region]
    write_rows(OUT / "county_partitions.csv", ["id"] + list(COUNTY_DESIGNS),
               [[ids[k]] + [cols[d][k] for d in COUNTY_DESIGNS] for k in range(n)])
    print(f"county layer: {n} units, {len(edges)} edges, mean degree {2 * len(edges) / n:.2f}")


def design_files():
    sd = float(np.sqrt(0.1))
    for level, designs, r_table, edges, parts, seed0 in (
            ("state", STATE_DESIGNS, STATE_R, "state_edges.csv", "state_partitions.csv", 1000),
            ("county", COUNTY_DESIGNS, COUNTY_R, "county_edges.csv", "county_partitions.csv", 2000)):
        for k, name in enumerate(designs, start=1):
            K = len(designs[name])
            spec = {
                "name": f"{level}-{k}",
                "graph": {"edges": "../" + edges},
                "partition": {"file": "../" + parts, "column": name},
                "beta": CENTERS[K],
                "eta": [1.0, 1.0],
                "noise_sd": sd,
                "p": 3,
                "q": 2,
                "seed": seed0 + k,
                "reference_r": {"spatial-pairwise": r_table[name][0],
                                "spatial-adjacency": r_table[name][1]},
            }
            with open(OUT / "designs" / f"{level}-{k}.json", "w") as fh:
                json.dump(spec, fh, indent=2)
                fh.write("\n")
    lattice = {"name": "lattice", "graph": {"lattice": [10, 10]}, "partition": {"quadrants": True},
               "beta": CENTERS[4], "eta": [1.0, 1.0], "noise_sd": sd, "p": 3, "q": 2, "seed": 3001,
               "reference_r": {"spatial-pairwise": 1.5, "spatial-adjacency": 1.5}}
    with open(OUT / "designs" / "lattice.json", "w") as fh:
        json.dump(lattice, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    (OUT / "designs").mkdir(parents=True, exist_ok=True)
    state_layer()
    county_layer()
    design_files()
