"""Direct simulation of random fields and measurement of their zero sets.

Run: python demos/04_field_simulation.py [dump.json]

This estimator does not use the Kac-Rice formula at all: it samples whole
fields, extracts the zero set numerically and counts or measures it.
"""

import json
import math
import sys

import numpy as np

from stochgeo import field_sim as fs

SEED = 11

# Roots of Kostlan binary forms on RP^1 are counted exactly with Sturm sequences.
for d in (1, 4, 25):
    est = fs.mc_roots_rp1(d, 50_000, SEED)
    print(f"Kostlan d={d:2d}: mean real roots {est.mean:.4f} +- {est.stderr:.4f}   (sqrt d = {math.sqrt(d):.4f})")

# Zeros of random waves on the circle, bracketed on a grid and bisected.
est = fs.mc_zeros_circle(1, 50_000, SEED)
print(f"circle, lambda=1: mean zeros {est.mean:.4f} +- {est.stderr:.4f}   (exact {2 * math.sqrt(2 / 3):.4f})")

# Nodal curves on T^2 by marching squares.
est = fs.mc_curve_length_t2(1, 500, SEED)
print(f"T^2 nodal length, lambda=1: {est.mean:.3f} +- {est.stderr:.3f}   (exact {math.sqrt(2 / 5) * 2 * math.pi**2:.3f})")

# Common zeros of two independent waves on T^2 by Newton from candidate cells.
est = fs.mc_common_zeros_t2(1, 1000, SEED)
print(f"T^2 common zeros, lambda=1: {est.mean:.3f} +- {est.stderr:.3f}   (exact {4 * math.pi / 5:.3f})")
if est.note:
    print("  note:", est.note)

# A single field, dumped for external plotting.
field = fs.sample_torus_field(2, 5, 1, np.random.default_rng(SEED))
dump = fs.field_dump(field, grid_size=128)
print(f"\none field at lambda=5: {len(dump['segments'])} nodal segments, length {fs.curve_length_t2(field, 256):.3f}")
if len(sys.argv) > 1:
    with open(sys.argv[1], "w") as fh:
        json.dump(dump, fh)
    print("wrote", sys.argv[1])
