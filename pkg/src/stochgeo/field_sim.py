"""Direct simulation of random fields and measurement of their zero sets.

This is the estimator that does not go through Kac-Rice: draw a field, find
its zero set numerically, measure it.

Torus fields are stored by raw trigonometric coefficients,

    f_c(x) = c0_c + sum_k A_ck cos<p_k, x> + B_ck sin<p_k, x>,

over half-lattice representatives p_k of B_lambda minus the origin (one of
each pair +-p). A random wave has c0, A, B i.i.d. N(0, 1) times the
normalization (2 pi)^{-n/2} on c0 and sqrt(2) (2 pi)^{-n/2} on A, B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gaussian_core import RngSeed
from .kernels import torus_spectral_data
from .montecarlo import McEstimate, run_streams, summarize

ZERO_VALUE_TOL = 1e-13
BISECT_TOL = 1e-10
STURM_COND_TOL = 1e-9
FIELD_BATCH = 4096
FIELD_DUMP_SCHEMA = "stochgeo.field/1"


class RepeatedRootError(ValueError):
    """The polynomial has a repeated real or complex root (discriminant zero)."""


# --------------------------------------------------------------------------
# Torus fields


def half_lattice(n: int, lam: float) -> np.ndarray:
    """Representatives of B_lambda \\ {0} modulo p -> -p (first nonzero coordinate positive)."""
    pts = torus_spectral_data(n, lam).points
    keep = []
    for p in pts:
        nz = np.flatnonzero(p)
        if nz.size and p[nz[0]] > 0:
            keep.append(p)
    return np.array(keep, dtype=np.int64).reshape(-1, n)


@dataclass
class TorusField:
    """Trigonometric field on T^n = (R / 2 pi Z)^n with r components.

    ``const`` has shape (..., r); ``cos_coef`` and ``sin_coef`` (..., r, k);
    ``modes`` (k, n). Leading dimensions index a batch of fields.
    """

    n: int
    modes: np.ndarray
    const: np.ndarray
    cos_coef: np.ndarray
    sin_coef: np.ndarray
    lam: float | None = None

    @property
    def r(self) -> int:
        return self.const.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.const.shape[:-1]

    def __getitem__(self, idx) -> TorusField:
        return TorusField(self.n, self.modes, self.const[idx], self.cos_coef[idx], self.sin_coef[idx], self.lam)

    def scaled(self, factor: float) -> TorusField:
        return TorusField(self.n, self.modes, factor * self.const, factor * self.cos_coef,
                          factor * self.sin_coef, self.lam)

    def magnitude(self) -> np.ndarray:
        """Coefficient 2-norm per field, a scale for absolute tolerances."""
        sq = np.sum(self.const**2, axis=-1) + np.sum(self.cos_coef**2 + self.sin_coef**2, axis=(-2, -1))
        return np.sqrt(sq)

    def value_and_grad(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Values (M, r) and gradients (M, r, n) of a single field at points x (M, n)."""
        if self.batch_shape:
            raise ValueError("value_and_grad needs a single field")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = x @ self.modes.T.astype(float)
        c, s = np.cos(phase), np.sin(phase)
        val = self.const + c @ self.cos_coef.T + s @ self.sin_coef.T
        dk = c[:, None, :] * self.sin_coef[None] - s[:, None, :] * self.cos_coef[None]  # (M, r, k)
        grad = dk @ self.modes.astype(float)
        return val, grad

    def evaluate(self, x) -> np.ndarray:
        return self.value_and_grad(x)[0]

    def grid_values(self, size: int, offset: float = 0.0) -> np.ndarray:
        """Values on the periodic grid x_j = 2 pi j / size + offset.

        Shape (..., r, size) for n = 1 and (..., r, size, size) for n = 2.
        """
        xs = 2 * math.pi * np.arange(size) / size + offset
        if self.n == 1:
            phase = np.outer(self.modes[:, 0], xs)
            return (self.const[..., None] + self.cos_coef @ np.cos(phase) + self.sin_coef @ np.sin(phase))
        if self.n == 2:
            kmax = int(np.max(np.abs(self.modes))) if self.modes.size else 0
            width = 2 * kmax + 1
            z = np.zeros(self.batch_shape + (self.r, width, width), dtype=complex)
            z[..., self.modes[:, 0] + kmax, self.modes[:, 1] + kmax] = self.cos_coef - 1j * self.sin_coef
            e = np.exp(1j * np.outer(xs, np.arange(-kmax, kmax + 1)))
            vals = np.einsum("jp,...pq,kq->...jk", e, z, e, optimize=True).real
            return vals + self.const[..., None, None]
        raise ValueError("grid evaluation supports n = 1 and n = 2")


def trig_field(n: int, terms, const=0.0) -> TorusField:
    """Single scalar field from explicit terms ``[(p, a, b), ...]`` meaning a cos<p,x> + b sin<p,x>."""
    modes = np.array([t[0] for t in terms], dtype=np.int64).reshape(-1, n)
    a = np.array([[t[1] for t in terms]], dtype=float).reshape(1, -1)
    b = np.array([[t[2] for t in terms]], dtype=float).reshape(1, -1)
    return TorusField(n, modes, np.array([float(const)]), a, b)


def trig_system(fields: list[TorusField]) -> TorusField:
    """Stack scalar fields with identical modes into one vector-valued field."""
    modes = fields[0].modes
    if any(f.modes.shape != modes.shape or np.any(f.modes != modes) for f in fields):
        raise ValueError("component fields must share their mode list")
    return TorusField(
        fields[0].n, modes,
        np.concatenate([f.const for f in fields]),
        np.concatenate([f.cos_coef for f in fields]),
        np.concatenate([f.sin_coef for f in fields]),
    )


def sample_torus_field(n: int, lam: float, r: int, gen: np.random.Generator, size: int | None = None,
                       scale: float = 1.0) -> TorusField:
    """Random wave with eigenvalue cutoff lambda; ``size`` fields if given."""
    modes = half_lattice(n, lam)
    k = modes.shape[0]
    batch = () if size is None else (size,)
    norm = (2 * math.pi) ** (-n / 2)
    const = gen.standard_normal(batch + (r,)) * (scale * norm)
    cos_coef = gen.standard_normal(batch + (r, k)) * (scale * math.sqrt(2) * norm)
    sin_coef = gen.standard_normal(batch + (r, k)) * (scale * math.sqrt(2) * norm)
    return TorusField(n, modes, const, cos_coef, sin_coef, lam)


def default_grid(lam: float, minimum: int = 256) -> int:
    return max(minimum, int(math.ceil(8 * (1 + math.sqrt(max(lam, 0.0))))))


def point_grid(lam: float) -> int:
    """Default grid for common-zero search: well above the sampling minimum, so close pairs separate."""
    return max(64, int(math.ceil(32 * (1 + math.sqrt(max(lam, 0.0))))))


def _check_grid(size: int, lam: float | None):
    if lam is not None and size < 8 * (1 + math.sqrt(lam)):
        raise ValueError(f"grid of {size} points is too coarse for lambda={lam}; need >= {8 * (1 + math.sqrt(lam)):.1f}")


# --------------------------------------------------------------------------
# Zeros on the circle


@dataclass
class CircleZeros:
    counts: np.ndarray  # per field
    field_index: np.ndarray  # per zero
    location: np.ndarray  # per zero, in [0, 2 pi)
    jittered: int  # fields re-gridded because a grid value was exactly zero


def _circle_brackets(vals: np.ndarray):
    pos = vals > 0
    change = pos != np.roll(pos, -1, axis=-1)
    return change


def circle_zeros(field: TorusField, grid_size: int | None = None) -> CircleZeros:
    """All zeros of a batch of scalar fields on the circle.

    Zeros are bracketed by sign changes on the periodic grid and each bracket
    is bisected to ``BISECT_TOL``. Fields with a grid value within
    ``ZERO_VALUE_TOL`` of zero are re-gridded with a half-cell shift.
    """
    if field.n != 1 or field.r != 1:
        raise ValueError("circle zero counting needs a scalar field on T^1")
    f = field if field.batch_shape else field[None]
    size = default_grid(field.lam or 0.0) if grid_size is None else grid_size
    _check_grid(size, field.lam)
    h = 2 * math.pi / size
    vals = f.grid_values(size)[:, 0, :]
    scale = f.magnitude()
    offsets = np.zeros(vals.shape[0])
    hit = np.any(np.abs(vals) <= ZERO_VALUE_TOL * scale[:, None], axis=1)
    if hit.any():
        offsets[hit] = 0.5 * h
        vals[hit] = f[hit].grid_values(size, 0.5 * h)[:, 0, :]
    change = _circle_brackets(vals)
    fi, ci = np.nonzero(change)
    lo = ci * h + offsets[fi]
    hi = lo + h
    sign_lo = vals[fi, ci] > 0
    for _ in range(int(math.ceil(math.log2(h / BISECT_TOL))) + 1):
        mid = 0.5 * (lo + hi)
        phase = np.outer(mid, f.modes[:, 0])
        v = (f.const[fi, 0] + np.sum(f.cos_coef[fi, 0] * np.cos(phase) + f.sin_coef[fi, 0] * np.sin(phase), axis=1))
        same = (v > 0) == sign_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    loc = np.mod(0.5 * (lo + hi), 2 * math.pi)
    counts = np.bincount(fi, minlength=vals.shape[0])
    return CircleZeros(counts, fi, loc, int(hit.sum()))


def count_zeros_circle(field: TorusField, grid_size: int | None = None) -> int | np.ndarray:
    """Number of zeros of a scalar field on the circle (per field for a batch)."""
    counts = circle_zeros(field, grid_size).counts
    return int(counts[0]) if not field.batch_shape else counts


# --------------------------------------------------------------------------
# Kostlan polynomials on RP^1


@dataclass
class KostlanPolynomial:
    """Binary form sum_k a_k X0^{d-k} X1^k, dehomogenized as sum_k a_k t^k.

    ``coeffs`` is ascending, shape (..., d + 1).
    """

    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    def rotated(self, theta: float) -> KostlanPolynomial:
        """Precompose with the rotation (X0, X1) -> (c X0 - s X1, s X0 + c X1)."""
        P = np.polynomial.polynomial
        c, s = math.cos(theta), math.sin(theta)
        d = self.degree
        basis = np.array([P.polymul(P.polypow([c, -s], d - k), P.polypow([s, c], k))[: d + 1] for k in range(d + 1)])
        basis = np.pad(basis, ((0, 0), (0, d + 1 - basis.shape[1])))
        return KostlanPolynomial(self.coeffs @ basis)


def kostlan_weights(d: int) -> np.ndarray:
    return np.sqrt([float(math.comb(d, k)) for k in range(d + 1)])


def sample_kostlan(d: int, gen: np.random.Generator, size: int | None = None, scale: float = 1.0) -> KostlanPolynomial:
    """Kostlan binary form of degree d (the common factor sqrt((1+d)!/(pi d!)) is dropped)."""
    if d < 1:
        raise ValueError("degree must be >= 1")
    batch = () if size is None else (size,)
    return KostlanPolynomial(gen.standard_normal(batch + (d + 1,)) * kostlan_weights(d) * scale)


def _sign_variations(signs: np.ndarray) -> np.ndarray:
    # zeros are skipped when counting Sturm sign variations
    out = np.zeros(signs.shape[0], dtype=np.int64)
    last = np.zeros(signs.shape[0])
    for j in range(signs.shape[1]):
        s = signs[:, j]
        out += (s != 0) & (last != 0) & (s != last)
        last = np.where(s != 0, s, last)
    return out


def _sturm_float(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real-root counts via a floating Sturm chain; also returns a per-row trust flag."""
    size, width = coeffs.shape
    d = width - 1
    a = coeffs[:, ::-1].copy()  # descending
    b = a[:, :-1] * np.arange(d, 0, -1)
    leads, degs = [a[:, 0], b[:, 0]], [d, d - 1]
    trusted = np.ones(size, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        while b.shape[1] > 1:
            a = a / np.abs(a).max(axis=1, keepdims=True)
            b = b / np.abs(b).max(axis=1, keepdims=True)
            q1 = a[:, 0] / b[:, 0]
            t = a[:, 1:] - q1[:, None] * np.concatenate([b[:, 1:], np.zeros((size, 1))], axis=1)
            q0 = t[:, 0] / b[:, 0]
            rem = t[:, 1:] - q0[:, None] * b[:, 1:]
            trusted &= np.abs(rem[:, 0]) > STURM_COND_TOL
            a, b = b, -rem
            leads.append(b[:, 0])
            degs.append(b.shape[1] - 1)
    lead = np.array(leads).T
    trusted &= np.all(np.isfinite(lead), axis=1)
    sign_pos = np.sign(np.nan_to_num(lead))
    sign_neg = sign_pos * (-1.0) ** np.array(degs)
    return _sign_variations(sign_neg) - _sign_variations(sign_pos), trusted


def _to_integers(coeffs) -> list[int]:
    # floats are dyadic rationals: one common power of two makes them integers
    fr = [Fraction(float(c)) for c in coeffs]
    den = max(f.denominator for f in fr)
    return [int(f * den) for f in fr]


def _primitive(p: list[int]) -> list[int]:
    g = math.gcd(*p)
    return [c // g for c in p] if g > 1 else p


def _sturm_rem(a: list[int], b: list[int]) -> list[int]:
    """Next Sturm chain element: a positive multiple of -(a mod b), made primitive.

    Descending integer coefficients, b[0] != 0. Pseudo-division multiplies a
    by lc(b)^(deg a - deg b + 1); its sign is undone so Sturm signs survive.
    """
    delta = len(a) - len(b) + 1
    lead = b[0]
    a = list(a)
    while len(a) >= len(b):
        q = a[0]
        a = [lead * c for c in a]
        for i in range(len(b)):
            a[i] -= q * b[i]
        a.pop(0)
    while a and a[0] == 0:
        a.pop(0)
    if not a:
        return a
    # a is lead^delta * (a mod b); flip to -(a mod b) up to a positive factor
    flip = -1 if (lead < 0 and delta % 2) else 1
    return _primitive([-flip * c for c in a])


def _sturm_exact(coeffs) -> int:
    """Exact projective real-root count of one binary form.

    Floats are exact rationals, so the chain is computed over the integers
    with a primitive pseudo-remainder sequence. Raises RepeatedRootError for
    forms with a repeated root, including a multiple root at infinity.
    """
    asc = _to_integers(coeffs)
    d = len(asc) - 1
    while asc and asc[-1] == 0:
        asc.pop()
    if not asc:
        raise RepeatedRootError("zero polynomial")
    at_infinity = d - (len(asc) - 1)
    if at_infinity > 1:
        raise RepeatedRootError("multiple root at infinity")
    p = _primitive(asc[::-1])
    deg = len(p) - 1
    if deg == 0:
        return at_infinity
    chain = [p, _primitive([c * (deg - i) for i, c in enumerate(p[:-1])])]
    while len(chain[-1]) > 1:
        rem = _sturm_rem(chain[-2], chain[-1])
        if not rem:
            raise RepeatedRootError("polynomial shares a factor with its derivative")
        chain.append(rem)

    def variations(signs):
        signs = [s for s in signs if s != 0]
        return sum(1 for u, v in zip(signs, signs[1:]) if u != v)

    pos = [(q[0] > 0) - (q[0] < 0) for q in chain]
    neg = [s * (-1) ** (len(q) - 1) for s, q in zip(pos, chain)]
    return variations(neg) - variations(pos) + at_infinity


def root_counts_rp1(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projective real-root counts for a batch (B, d + 1) and a mask of degenerate rows."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    size = coeffs.shape[0]
    counts = np.zeros(size, dtype=np.int64)
    degenerate = np.zeros(size, dtype=bool)
    norm = np.abs(coeffs).max(axis=1)
    safe = np.abs(coeffs[:, -1]) > STURM_COND_TOL * norm
    if coeffs.shape[1] == 2:
        counts[:] = 1
        degenerate[norm == 0] = True
        return counts, degenerate
    fast, trusted = _sturm_float(coeffs[safe])
    idx = np.flatnonzero(safe)
    counts[idx[trusted]] = fast[trusted]
    slow = np.concatenate([np.flatnonzero(~safe), idx[~trusted]])
    for i in slow:
        try:
            counts[i] = _sturm_exact(coeffs[i])
        except RepeatedRootError:
            degenerate[i] = True
    return counts, degenerate


def count_roots_rp1(poly: KostlanPolynomial) -> int | np.ndarray:
    """Number of real roots in RP^1, exact per polynomial.

    Raises RepeatedRootError if a single polynomial has a repeated root.
    """
    counts, degenerate = root_counts_rp1(poly.coeffs)
    if poly.coeffs.ndim == 1:
        if degenerate[0]:
            raise RepeatedRootError("polynomial has a repeated root")
        return int(counts[0])
    if degenerate.any():
        raise RepeatedRootError(f"{int(degenerate.sum())} polynomials have a repeated root")
    return counts


# --------------------------------------------------------------------------
# Nodal curves on T^2 (marching squares)


def _cell_corners(v: np.ndarray):
    v00 = v
    v10 = np.roll(v, -1, axis=-2)
    v01 = np.roll(v, -1, axis=-1)
    v11 = np.roll(v10, -1, axis=-1)
    return v00, v10, v01, v11


def _crossing(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((a > 0) != (b > 0), a / (a - b), np.nan)


def nodal_segments(vals: np.ndarray, center: np.ndarray):
    """Marching-squares segments of the zero set on a periodic grid.

    ``vals[..., i, j]`` is the value at (x_i, y_j) and ``center`` the true field
    value at each cell center, used to resolve saddle cells. Only cells whose
    corner signs differ are processed. Returns ``(cells, seg_a, seg_b)``:
    ``cells`` is the index tuple of those cells, and each segment array has
    shape (M, 2, 2) with endpoints in cell-local grid units (u along x, w
    along y). ``seg_b`` is NaN except in saddle cells.
    """
    corners = _cell_corners(vals)
    pos = [c > 0 for c in corners]
    active = (pos[0] != pos[1]) | (pos[0] != pos[2]) | (pos[0] != pos[3])
    cells = np.nonzero(active)
    v00, v10, v01, v11 = (c[cells] for c in corners)
    t = [_crossing(v00, v10), _crossing(v10, v11), _crossing(v01, v11), _crossing(v00, v01)]
    one, zero = np.ones_like(v00), np.zeros_like(v00)
    pts = np.stack([
        np.stack([t[0], zero], axis=-1),  # edge w = 0
        np.stack([one, t[1]], axis=-1),  # edge u = 1
        np.stack([t[2], one], axis=-1),  # edge w = 1
        np.stack([zero, t[3]], axis=-1),  # edge u = 0
    ], axis=1)  # (M, 4, 2)
    has = np.isfinite(np.stack(t, axis=1))
    rows = np.arange(len(v00))
    # two crossings: join the first and the last crossed edge
    first = np.argmax(has, axis=1)
    last = 3 - np.argmax(has[:, ::-1], axis=1)
    seg_a = np.stack([pts[rows, first], pts[rows, last]], axis=1)
    seg_b = np.full_like(seg_a, np.nan)
    four = has.all(axis=1)
    if four.any():
        # the center shares the sign of corner 00: contours cut off corners 10 and 01
        cut = (center[cells][four] > 0) == (v00[four] > 0)
        sp = pts[four]
        seg_a[four] = np.where(cut[:, None, None], sp[:, [0, 1]], sp[:, [0, 3]])
        seg_b[four] = np.where(cut[:, None, None], sp[:, [2, 3]], sp[:, [1, 2]])
    return cells, seg_a, seg_b


def _segment_length(seg: np.ndarray) -> np.ndarray:
    d = seg[..., 1, :] - seg[..., 0, :]
    return np.nan_to_num(np.sqrt(np.sum(d * d, axis=-1)))


def curve_length_t2(field: TorusField, grid_size: int = 256) -> float | np.ndarray:
    """Length of the nodal curve of a scalar field on T^2 (per field for a batch)."""
    if field.n != 2 or field.r != 1:
        raise ValueError("curve length needs a scalar field on T^2")
    _check_grid(grid_size, field.lam)
    f = field if field.batch_shape else field[None]
    h = 2 * math.pi / grid_size
    vals = f.grid_values(grid_size)[:, 0]
    center = f.grid_values(grid_size, 0.5 * h)[:, 0]
    cells, seg_a, seg_b = nodal_segments(vals, center)
    per_cell = _segment_length(seg_a) + _segment_length(seg_b)
    length = h * np.bincount(cells[0], weights=per_cell, minlength=vals.shape[0])
    return float(length[0]) if not field.batch_shape else length


def nodal_polylines(field: TorusField, grid_size: int = 256) -> list[list[float]]:
    """Segments [x0, y0, x1, y1] of the nodal curve in torus coordinates (single field)."""
    h = 2 * math.pi / grid_size
    vals = field.grid_values(grid_size)[0]
    center = field.grid_values(grid_size, 0.5 * h)[0]
    (i, j), seg_a, seg_b = nodal_segments(vals, center)
    out = []
    for seg in (seg_a, seg_b):
        ok = np.isfinite(seg[:, 0, 0])
        base = np.stack([i[ok], j[ok]], axis=-1)[:, None, :]
        ends = h * (base + seg[ok])
        out.extend(ends.reshape(-1, 4).tolist())
    return out


# --------------------------------------------------------------------------
# Common zeros on T^2


@dataclass
class CommonZeros:
    points: np.ndarray  # (count, 2)
    candidates: int
    unresolved: int  # candidate cells holding no zero; mostly sign changes without a crossing


def _periodic_delta(a, b):
    return np.mod(a - b + math.pi, 2 * math.pi) - math.pi


def _indexed_value_and_grad(field: TorusField, fi: np.ndarray, x: np.ndarray):
    """Values (M, r) and gradients (M, r, n) of batch members ``fi`` at points ``x``."""
    modes = field.modes.astype(float)
    phase = x @ modes.T
    c, s = np.cos(phase), np.sin(phase)
    A, B = field.cos_coef[fi], field.sin_coef[fi]
    val = field.const[fi] + np.einsum("mrk,mk->mr", A, c) + np.einsum("mrk,mk->mr", B, s)
    grad = np.einsum("mrk,kn->mrn", B * c[:, None, :] - A * s[:, None, :], modes)
    return val, grad


def _newton(field: TorusField, fi: np.ndarray, x0: np.ndarray, tol: np.ndarray,
            iters: int = 40, halvings: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton for F: T^2 -> R^2, one start per row; returns (points, converged).

    A step is halved until |F| decreases; rows that cannot decrease |F| or hit
    a singular Jacobian stop as failures.
    """
    x = x0.copy()
    live = np.ones(len(x), dtype=bool)
    conv = np.zeros(len(x), dtype=bool)
    for _ in range(iters):
        act = np.flatnonzero(live)
        if act.size == 0:
            break
        F, J = _indexed_value_and_grad(field, fi[act], x[act])
        f0 = np.linalg.norm(F, axis=1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        singular = np.abs(det) <= 1e-14 * np.maximum(np.sum(J * J, axis=(1, 2)), 1e-300)
        J[singular] = np.eye(2)
        step = np.linalg.solve(J, F[..., None])[..., 0]
        t = np.ones(len(act))
        trial = x[act] - step
        f1 = np.linalg.norm(_indexed_value_and_grad(field, fi[act], trial)[0], axis=1)
        for _ in range(halvings):
            worse = (f1 > f0) & (f0 > tol[act])
            if not worse.any():
                break
            t[worse] *= 0.5
            w = np.flatnonzero(worse)
            trial[w] = x[act[w]] - t[w, None] * step[w]
            f1[w] = np.linalg.norm(_indexed_value_and_grad(field, fi[act[w]], trial[w])[0], axis=1)
        stuck = singular | ((f1 > f0) & (f0 > tol[act]))
        x[act] = np.mod(trial, 2 * math.pi)
        small = np.linalg.norm(t[:, None] * step, axis=1) < 1e-13
        done = (f1 <= tol[act]) | (small & (f1 <= 1e3 * tol[act]))
        conv[act[done & ~stuck]] = True
        live[act[done | stuck]] = False
    return x, conv


# Newton solutions closer than this (max-norm, radians) are the same zero. Converged
# iterates of one simple zero agree to ~1e-12; distinct zeros of a near-tangent
# pair can sit far inside one grid cell, so the merge radius is not tied to h.
MERGE_TOL = 1e-7


def _dedupe(points: np.ndarray) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.max(np.abs(_periodic_delta(p, q))) >= MERGE_TOL for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, 2)


def _in_cells(cells: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    if len(points) == 0 or len(cells) == 0:
        return np.zeros(len(cells), dtype=bool)
    centers = (cells + 0.5) * h
    d = np.abs(_periodic_delta(points[None, :, :], centers[:, None, :])).max(axis=-1)
    return np.any(d <= 0.5 * h * (1 + 1e-9), axis=1)


_STARTS = np.array([[0.5, 0.5], [0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])


def common_zeros_batch(field: TorusField, grid_size: int | None = None) -> list[CommonZeros]:
    """Common zeros of each two-component field of a batch on T^2.

    Candidate cells are those where both components take both signs (or zero)
    at the corners. Damped Newton is started from the center and the four
    quarter-cell centers of every candidate, so a cell holding a close pair of
    zeros yields both. Solutions are merged only when they agree to MERGE_TOL.
    """
    if field.n != 2 or field.r != 2:
        raise ValueError("common zeros need two-component fields on T^2")
    f = field if field.batch_shape else field[None]
    if grid_size is None:
        grid_size = point_grid(f.lam or 0.0)
    _check_grid(grid_size, f.lam)
    h = 2 * math.pi / grid_size
    vals = f.grid_values(grid_size)  # (B, 2, N, N)
    candidate = np.ones((vals.shape[0], grid_size, grid_size), dtype=bool)
    for c in range(2):
        corners = np.stack(_cell_corners(vals[:, c]))
        candidate &= (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)
    fi, ci, cj = np.nonzero(candidate)
    cells = np.stack([ci, cj], axis=1)
    starts = ((cells[:, None, :] + _STARTS[None]) * h).reshape(-1, 2)
    start_f = np.repeat(fi, len(_STARTS))
    tol = 1e-12 * f.magnitude()
    pts, conv = _newton(f, start_f, starts, tol[start_f])
    results = []
    for b in range(vals.shape[0]):
        zs = _dedupe(pts[(start_f == b) & conv])
        mine = cells[fi == b]
        results.append(CommonZeros(zs, len(mine), int(np.sum(~_in_cells(mine, zs, h)))))
    return results


def common_zeros_t2(field: TorusField, grid_size: int | None = None) -> CommonZeros:
    """Common zeros of a single two-component field on T^2."""
    if field.batch_shape:
        raise ValueError("common_zeros_t2 needs a single field; use common_zeros_batch")
    return common_zeros_batch(field, grid_size)[0]


def count_common_zeros_t2(field: TorusField, grid_size: int | None = None) -> int:
    return int(len(common_zeros_t2(field, grid_size).points))


# --------------------------------------------------------------------------
# Per-field JSON dump


def field_dump(field: TorusField, grid_size: int = 64) -> dict:
    """Grid values and extracted zero set of a single field, as plain JSON types.

    Schema ``stochgeo.field/1``: schema, n, r, lambda, grid, modes, const,
    cos_coef, sin_coef, values (r x grid^n nested lists, values[c][i][j] at
    (2 pi i / grid, 2 pi j / grid)), and one zero-set entry: ``zeros``
    (n = 1, list of angles), ``segments`` (n = 2, r = 1, [x0, y0, x1, y1]
    lists) or ``points`` (n = 2, r = 2, [x, y] lists).
    """
    if field.batch_shape:
        raise ValueError("field_dump needs a single field")
    record = {
        "schema": FIELD_DUMP_SCHEMA,
        "n": field.n,
        "r": field.r,
        "lambda": field.lam,
        "grid": grid_size,
        "modes": field.modes.tolist(),
        "const": field.const.tolist(),
        "cos_coef": field.cos_coef.tolist(),
        "sin_coef": field.sin_coef.tolist(),
        "values": field.grid_values(grid_size).tolist(),
    }
    if field.n == 1 and field.r == 1:
        record["zeros"] = circle_zeros(field, grid_size).location.tolist()
    elif field.n == 2 and field.r == 1:
        record["segments"] = nodal_polylines(field, grid_size)
    elif field.n == 2 and field.r == 2:
        record["points"] = common_zeros_t2(field, grid_size).points.tolist()
    return record


# --------------------------------------------------------------------------
# Monte Carlo drivers


def _batches(count: int, batch: int):
    done = 0
    while done < count:
        size = min(batch, count - done)
        yield size
        done += size


def _finish(values, rejected, samples, seed, streams, model, params, note="") -> McEstimate:
    mean, stderr = summarize(values)
    return McEstimate(mean, stderr, int(values.shape[0]), rejected, seed, streams, model, params, note)


def mc_zeros_circle(lam: float, samples: int, seed: int, streams: int = 1, grid_size: int | None = None,
                    scale: float = 1.0) -> McEstimate:
    """Mean number of zeros of a random wave on the circle (equals E[Vol Z] for n = r = 1)."""
    jitter = [0]

    def kernel(s: RngSeed, count: int):
        gen = s.generator()
        out = []
        for size in _batches(count, FIELD_BATCH):
            z = circle_zeros(sample_torus_field(1, lam, 1, gen, size, scale), grid_size)
            jitter[0] += z.jittered
            out.append(z.counts)
        return (np.concatenate(out) if out else np.zeros(0)), 0

    values, rejected = run_streams(kernel, samples, seed, streams, threads=1)
    note = f"{jitter[0]} fields re-gridded after an exact grid zero" if jitter[0] else ""
    return _finish(values, rejected, samples, seed, streams, "torus-field", {"n": 1, "r": 1, "lambda": lam}, note)


def mc_roots_rp1(d: int, samples: int, seed: int, streams: int = 1, scale: float = 1.0) -> McEstimate:
    """Mean number of real roots of a Kostlan binary form of degree d."""

    def kernel(s: RngSeed, count: int):
        gen = s.generator()
        out, rejected = [], 0
        for size in _batches(count, 50_000):
            poly = sample_kostlan(d, gen, size, scale).coeffs
            counts, bad = root_counts_rp1(poly)
            while bad.any():
                rejected += int(bad.sum())
                poly[bad] = sample_kostlan(d, gen, int(bad.sum()), scale).coeffs
                counts[bad], bad_new = root_counts_rp1(poly[bad])
                bad[bad] = bad_new
            out.append(counts)
        return (np.concatenate(out) if out else np.zeros(0)), rejected

    values, rejected = run_streams(kernel, samples, seed, streams)
    return _finish(values, rejected, samples, seed, streams, "kostlan-field", {"n": 1, "r": 1, "d": d})


def mc_curve_length_t2(lam: float, samples: int, seed: int, streams: int = 1, grid_size: int = 256,
                       scale: float = 1.0) -> McEstimate:
    """Mean nodal length of a random wave on T^2."""

    def kernel(s: RngSeed, count: int):
        gen = s.generator()
        out = []
        for size in _batches(count, 32):
            out.append(curve_length_t2(sample_torus_field(2, lam, 1, gen, size, scale), grid_size))
        return (np.concatenate(out) if out else np.zeros(0)), 0

    values, rejected = run_streams(kernel, samples, seed, streams)
    return _finish(values, rejected, samples, seed, streams, "torus-field", {"n": 2, "r": 1, "lambda": lam})


def mc_common_zeros_t2(lam: float, samples: int, seed: int, streams: int = 1, grid_size: int | None = None,
                       scale: float = 1.0) -> McEstimate:
    """Mean number of common zeros of two independent random waves on T^2."""
    unresolved = [0]

    def kernel(s: RngSeed, count: int):
        gen = s.generator()
        out = []
        for size in _batches(count, 64):
            zs = common_zeros_batch(sample_torus_field(2, lam, 2, gen, size, scale), grid_size)
            unresolved[0] += sum(z.unresolved for z in zs)
            out.append(np.array([len(z.points) for z in zs], dtype=float))
        return (np.concatenate(out) if out else np.zeros(0)), 0

    values, rejected = run_streams(kernel, samples, seed, streams, threads=1)
    note = (f"{unresolved[0]} candidate cells held no zero after five Newton starts"
            if unresolved[0] else "")
    return _finish(values, rejected, samples, seed, streams, "torus-field", {"n": 2, "r": 2, "lambda": lam}, note)
