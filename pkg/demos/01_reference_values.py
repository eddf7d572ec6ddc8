"""Exact reference values for expected volume and Euler characteristic.

Run: python demos/01_reference_values.py

Everything here is closed-form arithmetic. The Monte Carlo estimators in the
other demos are checked against these numbers.
"""

import math

from stochgeo import closed_forms as cf

# Kostlan polynomials of degree d on RP^n: r equations cut out a random
# submanifold of codimension r whose expected volume is d^(r/2) vol(RP^(n-r)).
print("Kostlan expected volume d^(r/2) vol(RP^(n-r))")
for n, r, d in [(1, 1, 4), (1, 1, 25), (2, 1, 9), (2, 2, 5), (3, 1, 2)]:
    res = cf.kostlan_expected_volume(n, r, d)
    print(f"  n={n} r={r} d={d:3d}  {res.value:10.6f}")

# The expected Euler characteristic is an alternating Gamma sum. It is
# evaluated exactly in rationals, so large degrees lose nothing to cancellation.
print("\nExpected Euler characteristic of a random surface in RP^3 (r=1)")
for d in (1, 2, 3, 5, 10, 100):
    res = cf.burgisser_expected_euler(3, 1, d)
    print(f"  d={d:4d}  {res.value:+12.6f}")
print("  (the sign flips: a degree-3 surface has expected chi exactly 0)")

# Flat torus T^n with random waves of eigenvalue <= lambda: the answer only
# depends on the mean of p_1^2 over the lattice ball.
print("\nTorus random waves")
for n, r, lam in [(1, 1, 1), (2, 1, 1), (2, 2, 1), (3, 1, 1)]:
    vol = cf.torus_expected_volume(n, r, lam)
    eul = cf.torus_expected_euler(n, r, lam)
    print(f"  n={n} r={r} lambda={lam}  E[vol]={vol.value:9.5f}  E[chi]={eul.value:+9.5f} ({eul.provenance})")

# Leading-order asymptotics: ratios of exact values to leading terms go to 1.
print("\nExact value / leading asymptotic term")
for lam in (1e2, 1e3, 1e4):
    exact = cf.torus_expected_volume(2, 1, lam).value
    lead = cf.asymptotic_leading_term(1, 2, 1, (2 * math.pi) ** 2, lam).value
    print(f"  torus n=2 r=1 lambda={lam:8.0f}  {exact / lead:.6f}")
for d in (10**2, 10**4, 10**6):
    exact = cf.burgisser_expected_euler(3, 1, d).value
    lead = cf.asymptotic_leading_term(4, 3, 1, cf.rp_volume(3), d).value
    print(f"  RP^3 Euler, r=1, d={d:8d}    {exact / lead:.6f}")
