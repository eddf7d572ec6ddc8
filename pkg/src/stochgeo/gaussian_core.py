"""Gaussian vector utilities.

Sampling from (possibly degenerate) covariances, conditioning on a block being
zero, orthogonal determinants and pseudo-inverses of linear maps, and the
closed-form moments of Gaussian norms and orthogonal determinants.

Random numbers come from numpy's counter-based Philox generator. A stream is
addressed by ``(seed, stream)`` through ``SeedSequence(seed, spawn_key=(stream,))``,
so parallel chunks are reproducible and independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Relative numerical-rank threshold: L is treated as surjective when
# odet(L) > RANK_TOL * prod(row norms of L).
RANK_TOL = 1e-12
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
CONDITIONING_TOL = 1e-12


class CovarianceError(ValueError):
    """Matrix is not a valid covariance (asymmetric or indefinite)."""


class DegenerateConditioningError(ValueError):
    """The conditioning block of a covariance is singular."""


class SingularMapError(ValueError):
    """A linear map expected to be surjective is numerically rank deficient."""


@dataclass(frozen=True)
class RngSeed:
    """Address of a reproducible random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.stream < 0:
            raise ValueError(f"stream index must be non-negative, got {self.stream}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def subgenerator(self, part: int) -> np.random.Generator:
        """Independent generator for one named part of this stream's work."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, part))
        return np.random.Generator(np.random.Philox(ss))

    def with_stream(self, stream: int) -> RngSeed:
        return RngSeed(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngSeed, a Generator, or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngSeed(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


# --------------------------------------------------------------------------
# Covariances


def check_covariance(cov) -> np.ndarray:
    """Validate a covariance matrix and return it as a float array.

    Raises:
        CovarianceError: if the matrix is not square, not symmetric to
            ``SYMMETRY_TOL`` (relative), or has an eigenvalue below
            ``-PSD_TOL * spectral_norm``.
    """
    c = np.atleast_2d(np.asarray(cov, dtype=float))
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise CovarianceError(f"covariance must be square, got shape {c.shape}")
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    if scale == 0.0:
        return c
    if np.max(np.abs(c - c.T)) > SYMMETRY_TOL * scale:
        raise CovarianceError("covariance is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (c + c.T))
    norm = max(abs(eig[0]), abs(eig[-1]))
    if eig[0] < -PSD_TOL * norm:
        raise CovarianceError(f"covariance is indefinite (smallest eigenvalue {eig[0]:.3e})")
    return c


def covariance_sqrt(cov) -> np.ndarray:
    """Symmetric PSD square root with negative eigenvalues clipped to zero.

    The symmetric root is unique, so it does not depend on how the
    eigensolver picks bases of repeated eigenspaces.
    """
    c = check_covariance(cov)
    if not c.any():
        return np.zeros_like(c)
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    cutoff = PSD_TOL * max(abs(w[0]), abs(w[-1]))
    w = np.where(w > cutoff, w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def sample_gaussian(mean, cov, rng, size: int | tuple | None = None) -> np.ndarray:
    """Draw from N(mean, cov).

    Returns an array of shape ``size + (dim,)`` (or ``(dim,)`` if size is None).
    """
    c = check_covariance(cov)
    m = np.asarray(mean, dtype=float).reshape(-1)
    if m.shape[0] != c.shape[0]:
        raise ValueError(f"mean has length {m.shape[0]} but covariance has dim {c.shape[0]}")
    root = covariance_sqrt(c)
    gen = as_generator(rng)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    z = gen.standard_normal(shape + (c.shape[0],))
    return m + z @ root.T


def _check_split(cov: np.ndarray, k: int):
    if not 0 < k < cov.shape[0]:
        raise ValueError(f"split index must satisfy 0 < k < {cov.shape[0]}, got {k}")


def regression(cov, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression of the trailing block on the leading ``k`` coordinates.

    For X = (X1, X2) centered Gaussian with covariance ``cov``, returns
    ``(A, C)`` such that X2 has the law of ``A @ X1 + Y`` with Y ~ N(0, C)
    independent of X1.

    Raises:
        DegenerateConditioningError: if the leading block is singular.
    """
    c = check_covariance(cov)
    _check_split(c, k)
    c11, c12 = c[:k, :k], c[:k, k:]
    c21, c22 = c[k:, :k], c[k:, k:]
    eig = np.linalg.eigvalsh(c11)
    if eig[-1] <= 0.0 or eig[0] <= CONDITIONING_TOL * eig[-1]:
        raise DegenerateConditioningError(
            f"conditioning block (leading {k}x{k}) is singular: eigenvalues in [{eig[0]:.3e}, {eig[-1]:.3e}]"
        )
    a = np.linalg.solve(c11, c12).T
    schur = c22 - c21 @ np.linalg.solve(c11, c12)
    return a, 0.5 * (schur + schur.T)


def condition_on_zero(cov, k: int) -> np.ndarray:
    """Covariance of the trailing block given that the leading ``k`` coordinates vanish."""
    _, schur = regression(cov, k)
    return schur


# --------------------------------------------------------------------------
# Linear maps


def _as_maps(L) -> np.ndarray:
    a = np.asarray(L, dtype=float)
    if a.ndim < 2:
        raise ValueError("a linear map needs at least two dimensions (rows, cols)")
    if a.shape[-2] > a.shape[-1]:
        raise ValueError(f"expected r <= n for an r x n map, got shape {a.shape[-2:]}")
    return a


def odet_raw(L) -> np.ndarray:
    """sqrt(det(L L^T)) without the rank cutoff. Works on stacks of maps."""
    a = _as_maps(L)
    gram = a @ np.swapaxes(a, -1, -2)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


def is_surjective(L) -> np.ndarray:
    a = _as_maps(L)
    row_prod = np.prod(np.linalg.norm(a, axis=-1), axis=-1)
    return odet_raw(a) > RANK_TOL * row_prod


def odet(L):
    """Orthogonal determinant sqrt(det(L L^T)); exactly 0 below the rank threshold."""
    a = _as_maps(L)
    val = np.where(is_surjective(a), odet_raw(a), 0.0)
    return float(val) if val.ndim == 0 else val


def pseudo_inverse(L) -> np.ndarray:
    """Moore-Penrose inverse L^T (L L^T)^{-1} of a surjective map (stack-aware)."""
    a = _as_maps(L)
    if not np.all(is_surjective(a)):
        raise SingularMapError("pseudo-inverse requested for a rank-deficient map")
    at = np.swapaxes(a, -1, -2)
    # (L L^T) is symmetric, so solve(G, L) = G^{-1} L = (L^dagger)^T
    return np.swapaxes(np.linalg.solve(a @ at, a), -1, -2)


# --------------------------------------------------------------------------
# Closed-form Gaussian moments


def sphere_volume(m: int) -> float:
    """Volume of the unit sphere S^m in R^{m+1}."""
    if m < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


def gaussian_norm_moment(n: int, k: int) -> float:
    """E[|X|^k] for X standard Gaussian in R^n."""
    if n < 1:
        raise ValueError("dimension must be positive")
    if k <= -n:
        raise ValueError(f"E|X|^k diverges for k={k} <= -n={-n}")
    return (2 * math.pi) ** (k / 2) * sphere_volume(n - 1) / sphere_volume(n + k - 1)


def expected_odet(n: int, r: int) -> float:
    """E[odet(L)] for L an r x n matrix with i.i.d. N(0,1) entries."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    return (2 * math.pi) ** (r / 2) * sphere_volume(n - r) / sphere_volume(n)


def _chi(gen: np.random.Generator, dof: int, size) -> np.ndarray:
    # norm of a dof-dimensional standard Gaussian
    return np.sqrt(gen.chisquare(dof, size=size))


def sample_odet_chi_representation(n: int, r: int, rng, size: int) -> np.ndarray:
    """Samples of prod_{p=n-r+1}^{n} |X_p| with X_p ~ N(0, I_p) independent."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    gen = as_generator(rng)
    out = np.ones(size)
    for p in range(n - r + 1, n + 1):
        out *= _chi(gen, p, size)
    return out


class JointSample(NamedTuple):
    odet: np.ndarray
    w: np.ndarray
    rejected: int


def sample_joint_odet_pinv(n: int, r: int, rng, size: int, mode: str = "direct") -> JointSample:
    """Samples of (odet(L), (L^dagger)^T U) for independent standard L and U.

    ``mode="direct"`` builds L and U explicitly; ``mode="representation"``
    uses the product-of-chi representation (|X_n|...|X_{n-r+1}|, U'/|X_{n-r+1}|).
    Both produce the same joint law.
    """
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    gen = as_generator(rng)
    if mode == "direct":
        L = gen.standard_normal((size, r, n))
        rejected = 0
        bad = ~is_surjective(L)
        while bad.any():
            rejected += int(bad.sum())
            L[bad] = gen.standard_normal((int(bad.sum()), r, n))
            bad = ~is_surjective(L)
        U = gen.standard_normal((size, n))
        w = np.einsum("bni,bn->bi", pseudo_inverse(L), U)
        return JointSample(odet_raw(L), w, rejected)
    if mode == "representation":
        last = _chi(gen, n - r + 1, size)
        det = last.copy()
        for p in range(n - r + 2, n + 1):
            det *= _chi(gen, p, size)
        u = gen.standard_normal((size, r))
        return JointSample(det, u / last[:, None], 0)
    raise ValueError(f"unknown mode {mode!r}; expected 'direct' or 'representation'")
