"""Covariance kernels and 2-jet covariances of the two homogeneous models.

Flat torus T^n = (R / 2 pi Z)^n with random waves of eigenvalue <= lambda:
    e(x, y) = (2 pi)^{-n} sum_{p in B} cos<p, x - y>,   B = {p in Z^n : |p|^2 <= lambda}.

Kostlan polynomials of degree d on RP^n, in the affine chart at [1:0:...:0]:
    e(x, y) = c (1 + <x, y>)^d,   c = (n + d)! / (pi^n d!).

Both covariances are stationary, so the jet covariance at the base point
describes the whole field. Jets are stored per scalar output component; the r
components are independent and identically distributed.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Maximum number of bounding-box points visited by the lattice enumeration.
LATTICE_BUDGET = 20_000_000


class LatticeBudgetError(ValueError):
    """Enumerating the lattice ball would exceed the configured budget."""


@dataclass(frozen=True)
class TorusSpectralData:
    """Exact lattice moments of B = {p in Z^n : |p|^2 <= lambda}.

    Moment arrays hold Python ints (object dtype), so no rounding happens
    before the single division by (2 pi)^n.
    """

    n: int
    lam: float
    points: np.ndarray  # (count, n) int64
    m1: np.ndarray  # sum p_i
    m2: np.ndarray  # sum p_i p_j
    m3: np.ndarray  # sum p_i p_j p_k
    m4: np.ndarray  # sum p_i p_j p_k p_l

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def mean_p1_squared(self) -> float:
        return int(self.m2[0, 0]) / self.count


def _exact_moment(points: np.ndarray, order: int) -> np.ndarray:
    n = points.shape[1]
    out = np.empty((n,) * order, dtype=object)
    bound = int(np.abs(points).max(initial=0)) ** order * len(points)
    # int64 sums are exact while the worst-case total stays below 2^62
    fast = bound < 2**62
    cols = None if fast else [[int(v) for v in points[:, i]] for i in range(n)]
    for idx in itertools.product(range(n), repeat=order):
        if tuple(sorted(idx)) != idx:
            continue
        if fast:
            total = int(np.prod(points[:, list(idx)], axis=1).sum())
        else:
            total = sum(math.prod(row) for row in zip(*(cols[i] for i in idx)))
        for perm in set(itertools.permutations(idx)):
            out[perm] = total
    return out


@lru_cache(maxsize=64)
def torus_spectral_data(n: int, lam: float, budget: int = LATTICE_BUDGET) -> TorusSpectralData:
    """Enumerate the integer points of the closed ball of radius sqrt(lambda)."""
    if n < 1:
        raise ValueError("torus dimension must be >= 1")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    k = math.isqrt(int(math.floor(lam)))
    box = (2 * k + 1) ** n
    if box > budget:
        raise LatticeBudgetError(f"lattice box has {box} points, budget is {budget}")
    axis = np.arange(-k, k + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    norms = np.sum(grid * grid, axis=1)
    points = grid[norms <= math.floor(lam)]
    return TorusSpectralData(
        n=n,
        lam=lam,
        points=points,
        m1=_exact_moment(points, 1),
        m2=_exact_moment(points, 2),
        m3=_exact_moment(points, 3),
        m4=_exact_moment(points, 4),
    )


def hessian_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i, k), i <= k, of the vectorized symmetric Hessian, row-major."""
    return [(i, k) for i in range(n) for k in range(i, n)]


@dataclass
class JetCovariance:
    """Covariance of the 2-jet (value, gradient, Hessian) of one scalar component.

    Blocks, with H the coordinate Hessian:
        v00 = Var f,  v01[j] = Cov(f, d_j f),  v02[j, l] = Cov(f, H_jl),
        v11[i, j] = Cov(d_i f, d_j f),  v12[i, j, l] = Cov(d_i f, H_jl),
        v22[i, k, j, l] = Cov(H_ik, H_jl).
    The r output components are i.i.d. copies.
    """

    n: int
    r: int
    model: str
    param: float
    v00: float
    v01: np.ndarray
    v02: np.ndarray
    v11: np.ndarray
    v12: np.ndarray
    v22: np.ndarray

    def scalar_matrix(self) -> np.ndarray:
        """Covariance over value (+) gradient (+) vech(Hessian) for one component."""
        n = self.n
        pairs = hessian_pairs(n)
        h = len(pairs)
        size = 1 + n + h
        m = np.zeros((size, size))
        m[0, 0] = self.v00
        m[0, 1 : 1 + n] = self.v01
        m[1 : 1 + n, 1 : 1 + n] = self.v11
        for a, (j, l) in enumerate(pairs):
            m[0, 1 + n + a] = self.v02[j, l]
            m[1 : 1 + n, 1 + n + a] = self.v12[:, j, l]
            for b, (i, k) in enumerate(pairs):
                m[1 + n + b, 1 + n + a] = self.v22[i, k, j, l]
        return np.triu(m) + np.triu(m, 1).T

    def full_matrix(self) -> np.ndarray:
        """Covariance of all r components, ordered component-major."""
        return np.kron(np.eye(self.r), self.scalar_matrix())

    def scaled(self, factor: float) -> JetCovariance:
        """Jet covariance of (factor * f)."""
        s = factor * factor
        return JetCovariance(
            self.n, self.r, self.model, self.param, s * self.v00,
            s * self.v01, s * self.v02, s * self.v11, s * self.v12, s * self.v22,
        )

    def to_json(self) -> str:
        """Serialize with field order: n, r, model, param, v00, v01, v02, v11, v12, v22."""
        record = {
            "n": self.n,
            "r": self.r,
            "model": self.model,
            "param": self.param,
            "v00": self.v00,
            "v01": self.v01.tolist(),
            "v02": self.v02.tolist(),
            "v11": self.v11.tolist(),
            "v12": self.v12.tolist(),
            "v22": self.v22.tolist(),
        }
        return json.dumps(record)

    @classmethod
    def from_json(cls, text: str) -> JetCovariance:
        d = json.loads(text)
        return cls(
            n=d["n"], r=d["r"], model=d["model"], param=d["param"], v00=float(d["v00"]),
            **{k: np.asarray(d[k], dtype=float) for k in ("v01", "v02", "v11", "v12", "v22")},
        )


def torus_jet_covariance(n: int, lam: float, r: int = 1) -> JetCovariance:
    """Jet covariance of random waves on T^n at eigenvalue cutoff lambda."""
    data = torus_spectral_data(n, lam)
    if not all(v == 0 for v in data.m1.flat) or not all(v == 0 for v in data.m3.flat):
        raise AssertionError("odd lattice moments must vanish by symmetry")
    vol = (2 * math.pi) ** n
    as_float = lambda a: np.array(a.tolist(), dtype=float) / vol  # noqa: E731
    m2 = as_float(data.m2)
    return JetCovariance(
        n=n,
        r=r,
        model="torus",
        param=lam,
        v00=data.count / vol,
        v01=np.zeros(n),
        v02=-m2,
        v11=m2.copy(),
        v12=np.zeros((n, n, n)),
        v22=as_float(data.m4),
    )


def kostlan_constant(n: int, d: int) -> float:
    """(n + d)! / (pi^n d!)."""
    if d < 0 or n < 0:
        raise ValueError("n and d must be non-negative")
    try:
        return math.prod(range(d + 1, d + n + 1)) / math.pi**n
    except OverflowError:
        log_c = math.lgamma(n + d + 1) - math.lgamma(d + 1) - n * math.log(math.pi)
        if log_c > 709.0:
            raise ValueError(f"kostlan constant for n={n}, d={d} exceeds the float range") from None
        return math.exp(log_c)


def kostlan_jet_covariance(n: int, d: int, r: int = 1) -> JetCovariance:
    """Jet covariance of Kostlan polynomials of degree d at a point of RP^n."""
    if d < 1:
        raise ValueError("degree must be >= 1")
    c = kostlan_constant(n, d)
    eye = np.eye(n)
    v22 = c * d * (d - 1) * (np.einsum("ij,kl->ikjl", eye, eye) + np.einsum("il,kj->ikjl", eye, eye))
    return JetCovariance(
        n=n,
        r=r,
        model="kostlan",
        param=d,
        v00=c,
        v01=np.zeros(n),
        v02=np.zeros((n, n)),
        v11=c * d * eye,
        v12=np.zeros((n, n, n)),
        v22=v22,
    )


def gamma_constants(n: int) -> tuple[float, float, float]:
    """Leading coefficients of the diagonal spectral-function asymptotics on an n-manifold."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    base = (4 * math.pi) ** (n / 2)
    g0 = 1.0 / (base * math.gamma(1 + n / 2))
    g1 = 1.0 / (2 * base * math.gamma(2 + n / 2))
    g2 = 1.0 / (4 * base * math.gamma(3 + n / 2))
    return g0, g1, g2
