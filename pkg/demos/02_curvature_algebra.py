"""Double forms, curvature and the Chern-Gauss-Bonnet integrand.

Run: python demos/02_curvature_algebra.py

A curvature tensor is a symmetric (2,2) double form. Wedge powers and traces
of these forms give the Gauss-Bonnet integrand, and the Gauss equation gives
the curvature of a zero set from a jet (gradient L, Hessian S).
"""

import math

import numpy as np

from stochgeo import double_forms as dfm
from stochgeo.gaussian_core import RngSeed, sphere_volume

g = dfm.DoubleForm.metric(2)
sphere = dfm.wedge(g, g) * 0.5  # unit sphere: R = g^2 / 2
print("g ^ g on R^2:", dfm.wedge(g, g).coeffs.ravel(), " trace", dfm.trace(dfm.wedge(g, g)))
print("chi(S^2)  =", dfm.cgb_integrand(sphere, 2) * sphere_volume(2))
print("chi(RP^2) =", dfm.cgb_integrand(dfm.rpn_curvature(2), 2) * sphere_volume(2) / 2)

# The square of a symmetric bilinear form, evaluated on (x, y; z, w), is the
# 2x2 determinant identity used throughout the curvature computations.
gen = RngSeed(3).generator()
a = gen.standard_normal((4, 4))
a = a + a.T
x, y, z, w = gen.standard_normal((4, 4))
direct = dfm.sym_square_evaluate(a, x, y, z, w)
via = dfm.wedge_power(dfm.DoubleForm.from_bilinear(a), 2).evaluate(np.column_stack([x, y]), np.column_stack([z, w]))
print(f"\nalpha^2(x,y; z,w): direct {direct:.12f}  via wedge {float(via):.12f}")

# Gaussian wedge moments: E[alpha^4] = 3 E[alpha^2]^2 for a centered Gaussian alpha.
n, samples = 4, 50_000
m = np.triu(gen.standard_normal((samples, n, n)))
m = m + np.swapaxes(np.triu(m, 1), -1, -2)
mc = dfm.wedge_power(dfm.DoubleForm.from_bilinear(m), 4).coeffs.mean(axis=0)
cov4 = np.zeros((n,) * 4)
for i in range(n):
    for k in range(n):
        cov4[i, k, i, k] = cov4[i, k, k, i] = 1.0
exact = dfm.gaussian_wedge_moment(dfm.expected_wedge_square(cov4), 2).coeffs
print(f"E[alpha^4] on R^4: Monte Carlo {mc.item():.3f}, exact {exact.item():.3f}")

# Gauss equation: the level set {x_1 = 0} of f = x_1 + |x|^2 / 2 in flat R^3
# has second fundamental form I on the kernel, so it is curved like a unit sphere.
L = np.array([[1.0, 0.0, 0.0]])
S = np.eye(3)[None]
R_f = dfm.gauss_curvature_of_zero_set(None, L, S)
print("\nzero-set curvature coefficients:", R_f.coeffs.ravel(), "(half of g^2 on the unit 2-sphere is 1)")
print("its Gauss-Bonnet integrand:", dfm.cgb_integrand(R_f, 2), "=", 1 / (2 * math.pi))
