"""Double forms on R^n.

A (p, q)-double form is stored densely as an array of shape
``batch + (C(n,p), C(n,q))`` whose entry ``[I, J]`` is the coefficient of
``e_I^* (x) e_J^*`` for strictly increasing index tuples I, J, enumerated in
lexicographic order (``itertools.combinations``). A leading batch shape lets
the Monte Carlo estimators process many samples at once.

Basis forms use the determinant convention, ``(e_1^* ^ e_2^*)(x, y) = x_1 y_2 - x_2 y_1``,
so the trace of ``e_I^* (x) e_J^*`` is ``delta_IJ``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .gaussian_core import SingularMapError, is_surjective


@lru_cache(maxsize=None)
def subsets(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing p-subsets of range(n), in lexicographic order."""
    return tuple(combinations(range(n), p))


@lru_cache(maxsize=None)
def _subset_index(n: int, p: int) -> dict[tuple[int, ...], int]:
    return {s: i for i, s in enumerate(subsets(n, p))}


@lru_cache(maxsize=None)
def _merge_table(n: int, p1: int, p2: int) -> np.ndarray:
    """T[a, b, c] = sign of e_A ^ e_B = sign * e_C, zero when A and B overlap."""
    out_index = _subset_index(n, p1 + p2)
    t = np.zeros((math.comb(n, p1), math.comb(n, p2), math.comb(n, p1 + p2)))
    for a, sa in enumerate(subsets(n, p1)):
        for b, sb in enumerate(subsets(n, p2)):
            if set(sa) & set(sb):
                continue
            inversions = sum(1 for i in sa for j in sb if i > j)
            t[a, b, out_index[tuple(sorted(sa + sb))]] = -1.0 if inversions % 2 else 1.0
    t.setflags(write=False)
    return t


@dataclass
class DoubleForm:
    n: int
    p: int
    q: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = (math.comb(self.n, self.p), math.comb(self.n, self.q))
        if self.coeffs.shape[-2:] != expected:
            raise ValueError(
                f"({self.p},{self.q})-form on R^{self.n} needs trailing shape {expected}, got {self.coeffs.shape}"
            )

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-2]

    @classmethod
    def zeros(cls, n: int, p: int, q: int, batch=()) -> DoubleForm:
        return cls(n, p, q, np.zeros(tuple(batch) + (math.comb(n, p), math.comb(n, q))))

    @classmethod
    def unit(cls, n: int) -> DoubleForm:
        """The scalar 1 as a (0,0)-form."""
        return cls(n, 0, 0, np.ones((1, 1)))

    @classmethod
    def from_bilinear(cls, a) -> DoubleForm:
        """(1,1)-form with matrix ``a`` (stack-aware): sum a_ik e_i^* (x) e_k^*."""
        a = np.asarray(a, dtype=float)
        return cls(a.shape[-1], 1, 1, a)

    @classmethod
    def metric(cls, n: int) -> DoubleForm:
        return cls.from_bilinear(np.eye(n))

    def _check_compatible(self, other: DoubleForm):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise ValueError(
                f"cannot combine ({self.p},{self.q}) on R^{self.n} with ({other.p},{other.q}) on R^{other.n}"
            )

    def __add__(self, other: DoubleForm) -> DoubleForm:
        self._check_compatible(other)
        return DoubleForm(self.n, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other: DoubleForm) -> DoubleForm:
        self._check_compatible(other)
        return DoubleForm(self.n, self.p, self.q, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> DoubleForm:
        s = np.asarray(scalar, dtype=float)
        return DoubleForm(self.n, self.p, self.q, self.coeffs * s[..., None, None])

    __rmul__ = __mul__

    def __neg__(self) -> DoubleForm:
        return DoubleForm(self.n, self.p, self.q, -self.coeffs)

    def is_pair_symmetric(self, atol: float = 0.0) -> bool:
        """Whether the coefficient matrix equals its transpose (for p == q)."""
        if self.p != self.q:
            return False
        return bool(np.all(np.abs(self.coeffs - np.swapaxes(self.coeffs, -1, -2)) <= atol))

    def pullback(self, basis) -> DoubleForm:
        """Restrict to the subspace spanned by the columns of ``basis`` (n x k, stack-aware)."""
        k = np.asarray(basis).shape[-1]
        cp = _minors(basis, self.p)
        cq = cp if self.q == self.p else _minors(basis, self.q)
        coeffs = np.swapaxes(cp, -1, -2) @ self.coeffs @ cq
        return DoubleForm(k, self.p, self.q, coeffs)

    def evaluate(self, xs, ys):
        """Value on ((x_1..x_p), (y_1..y_q)), vectors given as columns of n x p and n x q arrays."""
        xs = np.asarray(xs, dtype=float).reshape(self.n, self.p)
        ys = np.asarray(ys, dtype=float).reshape(self.n, self.q)
        left = _minors(xs, self.p)[..., 0]
        right = _minors(ys, self.q)[..., 0]
        return np.einsum("...i,...ij,...j->...", left, self.coeffs, right)


def _minors(basis, p: int) -> np.ndarray:
    """M[..., I, A] = det(basis[..., I, A]) over p-subsets I of rows and A of columns."""
    b = np.asarray(basis, dtype=float)
    n, k = b.shape[-2:]
    rows, cols = subsets(n, p), subsets(k, p)
    if p == 0:
        return np.ones(b.shape[:-2] + (1, 1))
    ri = np.array(rows)
    ci = np.array(cols)
    # gather to shape batch + (len(rows), len(cols), p, p)
    sub = b[..., ri[:, None, :, None], ci[None, :, None, :]]
    return np.linalg.det(sub)


def wedge(a: DoubleForm, b: DoubleForm) -> DoubleForm:
    """Double wedge product: (a (x) b) ^ (a' (x) b') = (a ^ a') (x) (b ^ b')."""
    if a.n != b.n:
        raise ValueError(f"ambient dimensions differ: {a.n} vs {b.n}")
    n, p, q = a.n, a.p + b.p, a.q + b.q
    if p > n or q > n:
        # C(n, p) == 0 for p > n: the form space is zero-dimensional
        return DoubleForm.zeros(n, p, q, np.broadcast_shapes(a.batch_shape, b.batch_shape))
    tp = _merge_table(n, a.p, b.p)
    tq = _merge_table(n, a.q, b.q)
    # out[KL] = sum A[ab] B[cd] tp[acK] tq[bdL], contracted in three matmul-shaped steps
    x = np.swapaxes(np.tensordot(a.coeffs, tp, axes=([-2], [0])), -2, -1)  # (..., b, K, c)
    y = x @ b.coeffs[..., None, :, :]  # (..., b, K, d)
    y = np.swapaxes(y, -3, -2)  # (..., K, b, d)
    nb, nd = y.shape[-2], y.shape[-1]
    coeffs = y.reshape(y.shape[:-2] + (nb * nd,)) @ tq.reshape(nb * nd, -1)
    return DoubleForm(n, p, q, coeffs)


def wedge_power(a: DoubleForm, k: int) -> DoubleForm:
    """a ^ a ^ ... ^ a (k factors); k = 0 gives the unit (0,0)-form."""
    if k < 0:
        raise ValueError("wedge power must be non-negative")
    if a.p != a.q:
        raise ValueError(f"wedge_power needs a (p,p)-form, got ({a.p},{a.q})")
    out = DoubleForm(a.n, 0, 0, np.ones(a.batch_shape + (1, 1)))
    for _ in range(k):
        out = wedge(out, a)
    return out


def trace(a: DoubleForm):
    """Sum of the diagonal coefficients of a (p,p)-form in the orthonormal basis."""
    if a.p != a.q:
        raise ValueError(f"trace is defined on (p,p)-forms, got ({a.p},{a.q})")
    return np.trace(a.coeffs, axis1=-2, axis2=-1)


def sym_square_evaluate(alpha, x, y, z, w) -> float:
    """2 (alpha(x,z) alpha(y,w) - alpha(x,w) alpha(y,z)) for a symmetric bilinear alpha."""
    a = np.asarray(alpha, dtype=float)
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(a))):
        raise ValueError("alpha must be symmetric")
    f = lambda u, v: float(np.asarray(u) @ a @ np.asarray(v))  # noqa: E731
    return 2.0 * (f(x, z) * f(y, w) - f(x, w) * f(y, z))


def expected_wedge_square(cov4) -> DoubleForm:
    """E[alpha ^ alpha] for a centered Gaussian (1,1)-form alpha.

    ``cov4[i, k, j, l] = E[alpha_ik alpha_jl]``.
    """
    c = np.asarray(cov4, dtype=float)
    n = c.shape[0]
    t = _merge_table(n, 1, 1)
    coeffs = np.einsum("ikjl,ijK,klL->KL", c, t, t)
    return DoubleForm(n, 2, 2, coeffs)


def gaussian_wedge_moment(m2: DoubleForm, p: int) -> DoubleForm:
    """E[alpha^{2p}] = (2p)! / (2^p p!) * E[alpha^2]^p for centered Gaussian (1,1)-forms."""
    if (m2.p, m2.q) != (2, 2):
        raise ValueError("expected the (2,2)-form E[alpha ^ alpha]")
    if 2 * p > m2.n:
        raise ValueError(f"need 2p <= n, got p={p}, n={m2.n}")
    factor = math.factorial(2 * p) / (2**p * math.factorial(p))
    return wedge_power(m2, p) * factor


def cgb_integrand(R: DoubleForm, dim: int | None = None) -> float:
    """tr(R^m) / ((2 pi)^m m!) for a curvature (2,2)-form on a 2m-dimensional space."""
    dim = R.n if dim is None else dim
    if dim != R.n:
        raise ValueError(f"curvature lives on R^{R.n}, not R^{dim}")
    if dim % 2:
        raise ValueError("odd-dimensional closed manifolds have Euler characteristic 0; no integrand")
    m = dim // 2
    if m == 0:
        return np.ones(R.batch_shape) if R.batch_shape else 1.0
    if (R.p, R.q) != (2, 2):
        raise ValueError("curvature must be a (2,2)-form")
    return trace(wedge_power(R, m)) / ((2 * math.pi) ** m * math.factorial(m))


def rpn_curvature(dim: int) -> DoubleForm:
    """Curvature of the round RP^dim (sectional curvature 1) in an orthonormal frame."""
    if dim < 2:
        raise ValueError("curvature tensor needs dim >= 2")
    size = math.comb(dim, 2)
    return DoubleForm(dim, 2, 2, np.eye(size))


def kernel_basis(L) -> np.ndarray:
    """Orthonormal basis of ker(L) as columns (n x (n-r)), via complete QR of L^T."""
    a = np.asarray(L, dtype=float)
    r = a.shape[-2]
    q, _ = np.linalg.qr(np.swapaxes(a, -1, -2), mode="complete")
    return q[..., :, r:]


def gauss_curvature_of_zero_set(R_ambient: DoubleForm | None, L, S, basis=None) -> DoubleForm:
    """Curvature of the zero set of f at a point where d_x f = L and the Hessian is S.

    Computes R|_ker + 1/2 sum_ab G_ab S~_a ^ S~_b with G = (L L^T)^{-1} and
    S~_a the a-th Hessian sheet restricted to ker(L). This is the Gaussian
    average over U of the Gauss-equation term, done in closed form.

    Arguments are stack-aware: L ``(..., r, n)``, S ``(..., r, n, n)``.
    ``R_ambient=None`` means a flat ambient space.
    """
    L = np.asarray(L, dtype=float)
    S = np.asarray(S, dtype=float)
    if not np.all(is_surjective(L)):
        raise SingularMapError("differential is rank deficient at the point")
    K = kernel_basis(L) if basis is None else np.asarray(basis, dtype=float)
    k = K.shape[-1]
    gram_inv = np.linalg.inv(L @ np.swapaxes(L, -1, -2))
    s_restr = np.swapaxes(K, -1, -2)[..., None, :, :] @ S @ K[..., None, :, :]
    t = _merge_table(k, 1, 1)
    gauss = 0.5 * np.einsum("...aik,...bjl,...ab,ijK,klL->...KL", s_restr, s_restr, gram_inv, t, t, optimize=True)
    out = DoubleForm(k, 2, 2, gauss)
    if R_ambient is not None:
        out = out + R_ambient.pullback(K)
    return out


def gauss_curvature_nested(R_ambient: DoubleForm | None, L, S, rng, n_inner: int, basis=None) -> DoubleForm:
    """Per-sample Gauss-equation terms for ``n_inner`` draws of U.

    The batch mean estimates :func:`gauss_curvature_of_zero_set`; kept as a
    self-test of the closed-form average. ``L`` and ``S`` are single jets here.
    """
    from .gaussian_core import as_generator, pseudo_inverse

    L = np.asarray(L, dtype=float)
    S = np.asarray(S, dtype=float)
    K = kernel_basis(L) if basis is None else np.asarray(basis, dtype=float)
    gen = as_generator(rng)
    U = gen.standard_normal((n_inner, L.shape[-1]))
    w = U @ pseudo_inverse(L)  # rows are (L^dagger)^T U
    s_restr = K.T @ S @ K
    alpha = DoubleForm.from_bilinear(np.einsum("ua,aij->uij", w, s_restr))
    sq = wedge(alpha, alpha)
    out = DoubleForm(K.shape[-1], 2, 2, 0.5 * sq.coeffs)
    if R_ambient is not None:
        out = out + DoubleForm(K.shape[-1], 2, 2, R_ambient.pullback(K).coeffs[None])
    return out
