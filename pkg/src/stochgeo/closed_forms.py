"""Exact and leading-order reference values for expected volume and Euler characteristic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .gaussian_core import sphere_volume
from .kernels import torus_spectral_data

PROVENANCES = (
    "kostlan",
    "burgisser",
    "torus_vol",
    "torus_euler",
    "asym_thm1",
    "asym_thm2",
    "asym_thm3",
    "asym_thm4",
    "odd_dimension",
)


@dataclass(frozen=True)
class ClosedFormResult:
    value: float
    provenance: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


def rp_volume(m: int) -> float:
    """vol(RP^m) = vol(S^m) / 2; vol(RP^0) = 1 (one point)."""
    return sphere_volume(m) / 2


def _check_codim(n: int, r: int):
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got n={n}, r={r}")


def _check_degree(d: int):
    if d < 1:
        raise ValueError(f"degree must be >= 1, got {d}")


def euler_constant(n: int, r: int) -> float:
    """vol(S^{n-r+1}) vol(S^{r-1}) / (pi vol(S^n) vol(S^{n-1}))."""
    return sphere_volume(n - r + 1) * sphere_volume(r - 1) / (math.pi * sphere_volume(n) * sphere_volume(n - 1))


def kostlan_expected_volume(n: int, r: int, d: int) -> ClosedFormResult:
    _check_codim(n, r)
    _check_degree(d)
    value = d ** (r / 2) * rp_volume(n - r)
    return ClosedFormResult(value, "kostlan", {"n": n, "r": r, "d": d})


def burgisser_series(n: int, r: int, d: int) -> Fraction:
    """sum_{p=0}^{(n-r)/2} (1-d)^p Gamma(p + r/2) / (p! Gamma(r/2)), exactly.

    Gamma(p + r/2) / Gamma(r/2) is the rising factorial (r/2)_p, so every term
    is rational and the alternating sum has no cancellation error.
    """
    total = Fraction(0)
    term = Fraction(1)  # (r/2)_p / p!
    for p in range((n - r) // 2 + 1):
        if p > 0:
            term *= Fraction(r + 2 * (p - 1), 2 * p)
        total += term * (1 - d) ** p
    return total


def burgisser_expected_euler(n: int, r: int, d: int) -> ClosedFormResult:
    _check_codim(n, r)
    _check_degree(d)
    params = {"n": n, "r": r, "d": d}
    if (n - r) % 2:
        return ClosedFormResult(0.0, "odd_dimension", params)
    value = float(burgisser_series(n, r, d)) * d ** (r / 2)
    return ClosedFormResult(value, "burgisser", params)


def torus_mean_p1_squared(n: int, lam: float) -> float:
    return torus_spectral_data(n, lam).mean_p1_squared


def torus_expected_volume(n: int, r: int, lam: float) -> ClosedFormResult:
    _check_codim(n, r)
    a = torus_mean_p1_squared(n, lam)
    value = a ** (r / 2) * (2 * math.pi) ** n * sphere_volume(n - r) / sphere_volume(n)
    return ClosedFormResult(value, "torus_vol", {"n": n, "r": r, "lambda": lam})


def torus_expected_euler(n: int, r: int, lam: float) -> ClosedFormResult:
    _check_codim(n, r)
    params = {"n": n, "r": r, "lambda": lam}
    if (n - r) % 2:
        return ClosedFormResult(0.0, "odd_dimension", params)
    m = (n - r) // 2
    a = torus_mean_p1_squared(n, lam)
    value = (-1) ** m * a ** (n / 2) * (2 * math.pi) ** n * euler_constant(n, r)
    return ClosedFormResult(value, "torus_euler", params)


def asymptotic_leading_term(theorem: int, n: int, r: int, vol_m: float, scale: float) -> ClosedFormResult:
    """Leading term of the large-lambda (theorems 1, 2) or large-degree (3, 4) asymptotics.

    ``scale`` is lambda for theorems 1 and 2 and the degree d for 3 and 4.
    Error terms are not modeled.
    """
    _check_codim(n, r)
    params = {"theorem": theorem, "n": n, "r": r, "vol_m": vol_m, "scale": scale}
    if theorem in (2, 4) and (n - r) % 2:
        raise ValueError(f"theorem {theorem} needs n - r even, got n={n}, r={r}")
    m = (n - r) // 2
    if theorem == 1:
        value = (scale / (n + 2)) ** (r / 2) * vol_m * sphere_volume(n - r) / sphere_volume(n)
    elif theorem == 2:
        value = (-1) ** m * (scale / (n + 2)) ** (n / 2) * vol_m * euler_constant(n, r)
    elif theorem == 3:
        value = scale ** (r / 2) * vol_m * sphere_volume(n - r) / sphere_volume(n)
    elif theorem == 4:
        value = (-1) ** m * scale ** (n / 2) * vol_m * euler_constant(n, r)
    else:
        raise ValueError(f"theorem must be 1, 2, 3 or 4, got {theorem}")
    return ClosedFormResult(value, f"asym_thm{theorem}", params)
