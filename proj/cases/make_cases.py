#!/usr/bin/env python3
"""Regenerates the bundled case and load files.

Run from anywhere: python3 cases/make_cases.py
Output is deterministic (fixed seeds, fixed rounding).
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent


def rounded(x, digits=6):
    return round(float(x), digits)


def write(name, doc):
    text = json.dumps(doc, indent=1) + "\n"
    (OUT / name).write_text(text)


def hops(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = [[-1] * n for _ in range(n)]
    for s in range(n):
        dist[s][s] = 0
        queue = [s]
        for u in queue:
            for w in adj[u]:
                if dist[s][w] < 0:
                    dist[s][w] = dist[s][u] + 1
                    queue.append(w)
    return dist


def extra_edges(n, reference, tree, count, seed, max_hops=4):
    """Random non-tree pairs between 2 and max_hops apart, avoiding the reference."""
    rng = random.Random(seed)
    dist = hops(n, tree)
    tree_set = {tuple(sorted(e)) for e in tree}
    pool = [
        (a, b)
        for a in range(n)
        for b in range(a + 1, n)
        if reference not in (a, b) and (a, b) not in tree_set and 2 <= dist[a][b] <= max_hops
    ]
    rng.shuffle(pool)
    if len(pool) < count:
        raise SystemExit(f"only {len(pool)} extra candidates, need {count}")
    return sorted(pool[:count])


def single_case(n, tree, z, extras):
    lines = [{"from": a, "to": b, "z": [rounded(z[i].real), rounded(z[i].imag)]} for i, (a, b) in enumerate(tree)]
    perm = sorted({tuple(sorted(e)) for e in tree} | set(extras))
    return {
        "phase_mode": "single",
        "n_bus": n,
        "reference": 0,
        "lines": lines,
        "permissible_edges": [list(e) for e in perm],
    }


def three_case(n, tree, zs, extras):
    lines = []
    for (a, b), z in zip(tree, zs):
        lines.append({"from": a, "to": b,
                      "z": [[[rounded(z[r][c].real), rounded(z[r][c].imag)] for c in range(3)] for r in range(3)]})
    perm = sorted({tuple(sorted(e)) for e in tree} | set(extras))
    return {
        "phase_mode": "three",
        "n_bus": n,
        "reference": 0,
        "lines": lines,
        "permissible_edges": [list(e) for e in perm],
    }


def single_load(means, fraction=0.1):
    return {
        "phase_mode": "single",
        "loads": [{"bus": b, "mean": [rounded(p, 8), rounded(q, 8)]} for b, (p, q) in sorted(means.items())],
        "covariance": {"kind": "relative", "fraction": fraction, "pq_correlation": 0.0},
    }


def three_load(means, variance):
    return {
        "phase_mode": "three",
        "loads": [{"bus": b, "mean": [[rounded(p, 8), rounded(q, 8)] for p, q in m]} for b, m in sorted(means.items())],
        "covariance": {"kind": "absolute", "variance": variance, "pq_correlation": 0.0},
    }


# --- path5: reference 0 followed by a 5-bus path --------------------------------------
def make_path5():
    tree = [(b - 1, b) for b in range(1, 6)]
    z = [complex(0.01, 0.02)] * 5
    write("path5.json", single_case(6, tree, z, []))
    write("path5.load.json", single_load({b: (-0.02, -0.01) for b in range(1, 6)}))


# --- junction10: a non-leaf chain 2-3-4 whose middle node has leaves of its own ------
def make_junction10():
    tree = [(0, 1), (1, 2), (2, 3), (3, 4), (2, 5), (2, 6), (3, 7), (3, 8), (4, 9)]
    rng = random.Random(10)
    z = [complex(rng.uniform(0.01, 0.03), rng.uniform(0.02, 0.05)) for _ in tree]
    write("junction10.json", single_case(10, tree, z, []))
    write("junction10.load.json", single_load({b: (-rng.uniform(0.01, 0.03), -rng.uniform(0.005, 0.015))
                                               for b in range(1, 10)}))


# --- bus20: 19 load buses, 19 operational lines, 14 extra permissible lines ----------
def make_bus20():
    tree = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6),
            (2, 7), (7, 8), (8, 9), (3, 10), (10, 11), (4, 12), (12, 13), (13, 14),
            (5, 15), (15, 16), (6, 17), (17, 18), (18, 19)]
    rng = random.Random(20)
    z = []
    for _ in tree:
        r = rng.uniform(0.01, 0.03)
        z.append(complex(r, r * rng.uniform(1.0, 2.0)))
    extras = extra_edges(20, 0, tree, 14, seed=2020)
    write("bus20.json", single_case(20, tree, z, extras))
    means = {}
    for b in range(1, 20):
        p = rng.uniform(0.01, 0.03)
        means[b] = (-p, -p * rng.uniform(0.3, 0.6))
    write("bus20.load.json", single_load(means))


# --- bus33: 33-bus radial feeder (Baran-Wu line and load data), 44 extra lines -------
BW_LINES = [
    (0, 1, 0.0922, 0.0470), (1, 2, 0.4930, 0.2511), (2, 3, 0.3660, 0.1864), (3, 4, 0.3811, 0.1941),
    (4, 5, 0.8190, 0.7070), (5, 6, 0.1872, 0.6188), (6, 7, 0.7114, 0.2351), (7, 8, 1.0300, 0.7400),
    (8, 9, 1.0440, 0.7400), (9, 10, 0.1966, 0.0650), (10, 11, 0.3744, 0.1238), (11, 12, 1.4680, 1.1550),
    (12, 13, 0.5416, 0.7129), (13, 14, 0.5910, 0.5260), (14, 15, 0.7463, 0.5450), (15, 16, 1.2890, 1.7210),
    (16, 17, 0.7320, 0.5740), (1, 18, 0.1640, 0.1565), (18, 19, 1.5042, 1.3554), (19, 20, 0.4095, 0.4784),
    (20, 21, 0.7089, 0.9373), (2, 22, 0.4512, 0.3083), (22, 23, 0.8980, 0.7091), (23, 24, 0.8960, 0.7011),
    (5, 25, 0.2030, 0.1034), (25, 26, 0.2842, 0.1447), (26, 27, 1.0590, 0.9337), (27, 28, 0.8042, 0.7006),
    (28, 29, 0.5075, 0.2585), (29, 30, 0.9744, 0.9630), (30, 31, 0.3105, 0.3619), (31, 32, 0.3410, 0.5302),
]
BW_LOADS_KW = [
    (100, 60), (90, 40), (120, 80), (60, 30), (60, 20), (200, 100), (200, 100), (60, 20), (60, 20),
    (45, 30), (60, 35), (60, 35), (120, 80), (60, 10), (60, 20), (60, 20), (90, 40), (90, 40), (90, 40),
    (90, 40), (90, 40), (90, 50), (420, 200), (420, 200), (60, 25), (60, 25), (60, 20), (120, 70),
    (200, 600), (150, 70), (210, 100), (60, 40),
]


def make_bus33():
    z_base = 12.66 ** 2 / 10.0  # 12.66 kV, 10 MVA
    tree = [(a, b) for a, b, _, _ in BW_LINES]
    z = [complex(r / z_base, x / z_base) for _, _, r, x in BW_LINES]
    extras = extra_edges(33, 0, tree, 44, seed=3333, max_hops=6)
    write("bus33.json", single_case(33, tree, z, extras))
    # kW/kvar on a 10 MVA base, halved so the AC drop stays moderate.
    means = {b + 1: (-0.5 * p / 10000.0, -0.5 * q / 10000.0) for b, (p, q) in enumerate(BW_LOADS_KW)}
    write("bus33.load.json", single_load(means))


# --- three-phase impedances (ohm/mile matrices of common overhead configurations) ----
CONFIG = {
    "601": [[complex(0.3465, 1.0179), complex(0.1560, 0.5017), complex(0.1580, 0.4236)],
            [complex(0.1560, 0.5017), complex(0.3375, 1.0478), complex(0.1535, 0.3849)],
            [complex(0.1580, 0.4236), complex(0.1535, 0.3849), complex(0.3414, 1.0348)]],
    "602": [[complex(0.7526, 1.1814), complex(0.1580, 0.4236), complex(0.1560, 0.5017)],
            [complex(0.1580, 0.4236), complex(0.7475, 1.1983), complex(0.1535, 0.3849)],
            [complex(0.1560, 0.5017), complex(0.1535, 0.3849), complex(0.7436, 1.2112)]],
}


def scaled(config, feet, z_base):
    miles = feet / 5280.0
    return [[CONFIG[config][r][c] * miles / z_base for c in range(3)] for r in range(3)]


def make_bus10_3ph():
    z_base = 4.16 ** 2 / 5.0  # 4.16 kV, 5 MVA
    spans = [((0, 1), "601", 2000), ((1, 2), "602", 500), ((1, 3), "602", 500), ((3, 4), "602", 300),
             ((1, 5), "601", 2000), ((5, 6), "601", 1000), ((5, 7), "602", 300), ((7, 8), "602", 800),
             ((5, 9), "602", 500)]
    tree = [e for e, _, _ in spans]
    zs = [scaled(cfg, feet, z_base) for _, cfg, feet in spans]
    write("bus10_3ph.json", three_case(10, tree, zs, []))
    rng = random.Random(1010)
    means = {}
    for b in range(1, 10):
        base = rng.uniform(0.02, 0.05)
        means[b] = [(-base * rng.uniform(0.7, 1.3), -0.5 * base * rng.uniform(0.7, 1.3)) for _ in range(3)]
    write("bus10_3ph.load.json", three_load(means, 1e-5))


def make_bus35_3ph():
    z_base = 4.8 ** 2 / 2.5  # 4.8 kV, 2.5 MVA
    rng = random.Random(3535)
    # Random recursive tree over buses 1..34 with bounded branching, reference 0 on bus 1.
    tree = [(0, 1)]
    children = {1: 0}
    for b in range(2, 35):
        while True:
            parent = rng.choice(list(children))
            if children[parent] < 3 and (b - parent) <= 8:
                break
        children[parent] += 1
        children[b] = 0
        tree.append((parent, b))
    zs = [scaled(rng.choice(["601", "602"]), rng.uniform(200, 900), z_base) for _ in tree]
    extras = extra_edges(35, 0, tree, 50, seed=353535, max_hops=6)
    write("bus35_3ph.json", three_case(35, tree, zs, extras))
    means = {}
    for b in range(1, 35):
        base = rng.uniform(0.015, 0.045)
        means[b] = [(-base * rng.uniform(0.7, 1.3), -0.5 * base * rng.uniform(0.7, 1.3)) for _ in range(3)]
    write("bus35_3ph.load.json", three_load(means, 1e-6))


if __name__ == "__main__":
    make_path5()
    make_junction10()
    make_bus20()
    make_bus33()
    make_bus10_3ph()
    make_bus35_3ph()
