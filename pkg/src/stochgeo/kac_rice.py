"""Monte Carlo Kac-Rice evaluation on homogeneous models.

Both supported models are stationary, so the Kac-Rice density is the same at
every point and the expectation is the density at one point times the ambient
volume:

    E[Vol Z]  = vol(M) (2 pi)^{-r/2} det(V00)^{-1/2} E[odet(L) | f = 0]
    E[chi(Z)] = vol(M) (2 pi)^{-n/2} / m! det(V00)^{-1/2} E[odet(L) tr(R_f^m) | f = 0]

with m = (n - r) / 2 and R_f the curvature of the zero set from the Gauss
equation. Per stream, L is drawn from its own sub-generator and the Hessian S
from another, so volume and Euler runs at a shared seed see the same L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import double_forms as dfm
from .closed_forms import rp_volume
from .gaussian_core import (
    DegenerateConditioningError,
    RngSeed,
    covariance_sqrt,
    is_surjective,
    odet_raw,
    pseudo_inverse,
    regression,
)
from .kernels import JetCovariance, hessian_pairs, kostlan_jet_covariance, torus_jet_covariance
from .montecarlo import McEstimate, estimate

BATCH = 8192
_PART_L = 0
_PART_S = 1
_PART_U = 2


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "torus" or "kostlan"
    n: int
    r: int
    param: float  # lambda for the torus, degree d for kostlan

    def __post_init__(self):
        if self.kind not in ("torus", "kostlan"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not 1 <= self.r <= self.n:
            raise ValueError(f"need 1 <= r <= n, got n={self.n}, r={self.r}")

    @classmethod
    def torus(cls, n: int, r: int, lam: float) -> ModelSpec:
        return cls("torus", n, r, lam)

    @classmethod
    def kostlan(cls, n: int, r: int, d: int) -> ModelSpec:
        return cls("kostlan", n, r, d)

    @property
    def homogeneous(self) -> bool:
        return True

    @property
    def ambient_volume(self) -> float:
        return (2 * math.pi) ** self.n if self.kind == "torus" else rp_volume(self.n)

    @property
    def ambient_curvature(self) -> dfm.DoubleForm | None:
        if self.kind == "torus" or self.n < 2:
            return None
        return dfm.rpn_curvature(self.n)

    @property
    def params(self) -> dict:
        key = "lambda" if self.kind == "torus" else "d"
        return {"n": self.n, "r": self.r, key: self.param}

    def jet(self) -> JetCovariance:
        if self.kind == "torus":
            return torus_jet_covariance(self.n, self.param, self.r)
        return kostlan_jet_covariance(self.n, int(self.param), self.r)


class JetSampler:
    """Draws (L, S) from the value-conditioned jet law of a ModelSpec.

    ``jet`` may be passed explicitly, e.g. a rescaled covariance.
    """

    def __init__(self, spec: ModelSpec, jet: JetCovariance | None = None):
        self.spec = spec
        self.jet = spec.jet() if jet is None else jet
        n = spec.n
        scalar = self.jet.scalar_matrix()
        self.v00 = float(scalar[0, 0])
        if not self.v00 > 0:
            raise DegenerateConditioningError("value block of the jet covariance is singular")
        a_val, cond = regression(scalar, 1)
        # value is uncorrelated with the gradient in both models: conditioning leaves it alone
        if np.any(a_val[:n] != 0) or not np.array_equal(cond[:n, :n], scalar[1 : 1 + n, 1 : 1 + n]):
            raise AssertionError("conditioning on the value changed the gradient block")
        self.grad_cov = cond[:n, :n]
        self.degenerate = not np.any(self.grad_cov)
        self.pairs = hessian_pairs(n)
        if self.degenerate:
            return
        self.grad_root = covariance_sqrt(self.grad_cov)
        self.hess_coef, schur = regression(cond, n)
        self.hess_root = covariance_sqrt(schur)

    def sample_L(self, gen: np.random.Generator, size: int) -> tuple[np.ndarray, int]:
        r, n = self.spec.r, self.spec.n
        L = gen.standard_normal((size, r, n)) @ self.grad_root.T
        rejected = 0
        bad = ~is_surjective(L)
        while bad.any():
            k = int(bad.sum())
            rejected += k
            L[bad] = gen.standard_normal((k, r, n)) @ self.grad_root.T
            bad = ~is_surjective(L)
        return L, rejected

    def sample_S(self, gen: np.random.Generator, L: np.ndarray) -> np.ndarray:
        """Hessian sheets (size, r, n, n) given the gradient rows L (size, r, n)."""
        size, r, n = L.shape
        h = len(self.pairs)
        vec = gen.standard_normal((size, r, h)) @ self.hess_root.T + L @ self.hess_coef.T
        S = np.zeros((size, r, n, n))
        for a, (i, k) in enumerate(self.pairs):
            S[..., i, k] = vec[..., a]
            S[..., k, i] = vec[..., a]
        return S


def _batches(count: int):
    done = 0
    while done < count:
        size = min(BATCH, count - done)
        yield size
        done += size


def _odd_parity_estimate(spec: ModelSpec, samples: int, seed: int, streams: int) -> McEstimate:
    return McEstimate(0.0, 0.0, 0, 0, seed, streams, spec.kind, spec.params,
                      note="n - r odd: the zero set is odd-dimensional and closed, so chi = 0")


def _antithetic_fold(values: np.ndarray) -> np.ndarray:
    # values holds [x_1..x_k, x'_1..x'_k]; average each antithetic pair
    half = values.shape[0] // 2
    return 0.5 * (values[:half] + values[half:])


def _volume_kernel(sampler: JetSampler, antithetic: bool):
    def kernel(seed: RngSeed, count: int):
        if sampler.degenerate:
            return np.zeros(count), 0
        gen = seed.subgenerator(_PART_L)
        out, rejected = [], 0
        for size in _batches(count):
            L, rej = sampler.sample_L(gen, size)
            rejected += rej
            vals = odet_raw(L)
            if antithetic:
                vals = _antithetic_fold(np.concatenate([vals, odet_raw(-L)]))
            out.append(vals)
        return (np.concatenate(out) if out else np.zeros(0)), rejected

    return kernel


def _curvature_trace(sampler: JetSampler, L, S, m: int, inner: str, gen_u, n_inner: int) -> np.ndarray:
    if m == 0:
        return np.ones(L.shape[0])
    R_amb = sampler.spec.ambient_curvature
    if inner == "closed":
        R_f = dfm.gauss_curvature_of_zero_set(R_amb, L, S)
    else:
        K = dfm.kernel_basis(L)
        U = gen_u.standard_normal((L.shape[0], n_inner, L.shape[-1]))
        w = np.einsum("bun,bnr->bur", U, pseudo_inverse(L))
        s_restr = np.swapaxes(K, -1, -2)[:, None] @ S @ K[:, None]
        alpha = dfm.DoubleForm.from_bilinear(np.einsum("bur,brij->buij", w, s_restr))
        sq = dfm.wedge(alpha, alpha).coeffs.mean(axis=1)
        R_f = dfm.DoubleForm(K.shape[-1], 2, 2, 0.5 * sq)
        if R_amb is not None:
            R_f = R_f + R_amb.pullback(K)
    return dfm.trace(dfm.wedge_power(R_f, m))


def _euler_kernel(sampler: JetSampler, m: int, antithetic: bool, inner: str, n_inner: int):
    def kernel(seed: RngSeed, count: int):
        if sampler.degenerate:
            return np.zeros(count), 0
        gen_l = seed.subgenerator(_PART_L)
        gen_s = seed.subgenerator(_PART_S)
        gen_u = seed.subgenerator(_PART_U)
        out, rejected = [], 0
        for size in _batches(count):
            L, rej = sampler.sample_L(gen_l, size)
            rejected += rej
            S = sampler.sample_S(gen_s, L)
            if antithetic:
                L, S = np.concatenate([L, -L]), np.concatenate([S, -S])
            vals = odet_raw(L) * _curvature_trace(sampler, L, S, m, inner, gen_u, n_inner)
            out.append(_antithetic_fold(vals) if antithetic else vals)
        return (np.concatenate(out) if out else np.zeros(0)), rejected

    return kernel


def _note(sampler: JetSampler) -> str:
    if sampler.degenerate:
        return "gradient covariance is zero: the field is constant and Z is empty almost surely"
    return ""


def expected_volume_kr(spec: ModelSpec, samples: int, seed: int, streams: int = 1, *,
                       antithetic: bool = False, jet: JetCovariance | None = None) -> McEstimate:
    """Kac-Rice estimate of E[Vol Z_f].

    ``antithetic`` pairs every draw with its negation. The integrand is even,
    so the pair members coincide; the option is kept for completeness and
    the pair average is treated as one sample.
    """
    sampler = JetSampler(spec, jet)
    scale = spec.ambient_volume * (2 * math.pi) ** (-spec.r / 2) * sampler.v00 ** (-spec.r / 2)
    return estimate(_volume_kernel(sampler, antithetic), samples, seed, streams, scale=scale,
                    model=spec.kind, params=spec.params, note=_note(sampler))


def expected_euler_kr(spec: ModelSpec, samples: int, seed: int, streams: int = 1, *,
                      antithetic: bool = False, inner: str = "closed", n_inner: int = 64,
                      jet: JetCovariance | None = None) -> McEstimate:
    """Kac-Rice estimate of E[chi(Z_f)].

    ``inner="closed"`` averages the Gauss-equation term over U exactly;
    ``inner="nested"`` uses ``n_inner`` Monte Carlo draws of U per jet (a
    self-test; for m >= 2 the finite inner average makes it biased).
    """
    if inner not in ("closed", "nested"):
        raise ValueError(f"inner must be 'closed' or 'nested', got {inner!r}")
    n, r = spec.n, spec.r
    if (n - r) % 2:
        return _odd_parity_estimate(spec, samples, seed, streams)
    m = (n - r) // 2
    sampler = JetSampler(spec, jet)
    scale = spec.ambient_volume * (2 * math.pi) ** (-n / 2) / math.factorial(m) * sampler.v00 ** (-r / 2)
    return estimate(_euler_kernel(sampler, m, antithetic, inner, n_inner), samples, seed, streams,
                    scale=scale, model=spec.kind, params=spec.params, note=_note(sampler))


def convergence_report(spec: ModelSpec, schedule, seed: int, streams: int = 1,
                       quantity: str = "volume") -> list[McEstimate]:
    """Estimates at each sample count of an increasing schedule, all at the same seed."""
    schedule = [int(s) for s in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("sample schedule must be strictly increasing")
    if quantity == "volume":
        run = expected_volume_kr
    elif quantity == "euler":
        run = expected_euler_kr
    else:
        raise ValueError(f"quantity must be 'volume' or 'euler', got {quantity!r}")
    return [run(spec, s, seed, streams) for s in schedule]
