import json
import math

import numpy as np
import pytest
from scipy import stats

from stochgeo import field_sim as fs
from stochgeo.kernels import torus_spectral_data

SEED = 31337


def within(est, exact, k=3.0):
    return abs(est.mean - exact) <= k * est.stderr


# ---------------------------------------------------------------- torus fields


def test_half_lattice_covers_ball_once():
    for n, lam in [(1, 4), (2, 5), (3, 3)]:
        half = fs.half_lattice(n, lam)
        assert 2 * len(half) + 1 == torus_spectral_data(n, lam).count
        full = {tuple(p) for p in half} | {tuple(-p) for p in half}
        assert len(full) == 2 * len(half)


@pytest.mark.parametrize("n,lam", [(1, 1), (1, 9), (2, 1), (2, 5)])
def test_pointwise_variance_is_kernel_diagonal(n, lam):
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(n, lam, 1, gen, size=100_000)
    x = np.full(n, 0.7)
    phase = f.modes.astype(float) @ x
    vals = f.const[:, 0] + f.cos_coef[:, 0] @ np.cos(phase) + f.sin_coef[:, 0] @ np.sin(phase)
    target = torus_spectral_data(n, lam).count / (2 * math.pi) ** n
    sq = vals**2
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))


def test_grid_values_match_direct_evaluation():
    gen = np.random.default_rng(SEED)
    for n, size in [(1, 32), (2, 16)]:
        f = fs.sample_torus_field(n, 5, 2, gen)
        grid = f.grid_values(size, offset=0.1)
        xs = 2 * math.pi * np.arange(size) / size + 0.1
        if n == 1:
            direct = f.evaluate(xs[:, None]).T
        else:
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            direct = f.evaluate(np.stack([X.ravel(), Y.ravel()], axis=1)).T.reshape(2, size, size)
        assert np.allclose(grid, direct, atol=1e-12)


def test_gradient_matches_finite_differences():
    f = fs.sample_torus_field(2, 5, 2, np.random.default_rng(SEED))
    x = np.array([[0.3, 1.9]])
    _, grad = f.value_and_grad(x)
    eps = 1e-6
    for k in range(2):
        e = np.zeros((1, 2))
        e[0, k] = eps
        fd = (f.evaluate(x + e) - f.evaluate(x - e)) / (2 * eps)
        assert np.allclose(grad[0, :, k], fd[0], atol=1e-7)


def test_trig_system_requires_shared_modes():
    a = fs.trig_field(2, [((1, 0), 0, 1)])
    b = fs.trig_field(2, [((0, 1), 0, 1)])
    with pytest.raises(ValueError):
        fs.trig_system([a, b])


def test_grid_too_coarse():
    f = fs.sample_torus_field(1, 100, 1, np.random.default_rng(0))
    with pytest.raises(ValueError, match="too coarse"):
        fs.count_zeros_circle(f, grid_size=40)


# ---------------------------------------------------------------- circle zeros


def test_sine_has_two_zeros_and_grid_hit_is_flagged():
    f = fs.trig_field(1, [((1,), 0.0, 1.0)])
    z = fs.circle_zeros(f, 256)
    assert z.counts.tolist() == [2]
    assert z.jittered == 1
    assert sorted(np.round(z.location, 8) % (2 * np.pi)) == pytest.approx([0.0, math.pi], abs=1e-8)


def test_shifted_sine_is_not_jittered():
    f = fs.trig_field(1, [((1,), math.sin(0.3), math.cos(0.3))])  # sin(x + 0.3)
    z = fs.circle_zeros(f, 256)
    assert z.counts.tolist() == [2] and z.jittered == 0
    assert np.allclose(np.sort(z.location), [math.pi - 0.3, 2 * math.pi - 0.3], atol=1e-9)


def test_constant_field_has_no_zeros():
    assert fs.count_zeros_circle(fs.trig_field(1, [], const=1.5)) == 0
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(1, 0, 1, gen, size=50)
    assert np.all(fs.count_zeros_circle(f) == 0)


def test_high_frequency_zero_count():
    # cos(5x) + 0.1 cos(x) has exactly 10 simple zeros
    f = fs.trig_field(1, [((5,), 1.0, 0.0), ((1,), 0.1, 0.0)])
    assert fs.count_zeros_circle(f, 256) == 10


def test_circle_mean():
    est = fs.mc_zeros_circle(1, 100_000, SEED)
    assert within(est, 2 * math.sqrt(2 / 3))


def test_zero_locations_are_uniform():
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(1, 1, 1, gen, size=100_000)
    z = fs.circle_zeros(f)
    counts, _ = np.histogram(z.location, bins=16, range=(0, 2 * math.pi))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_rescaling_keeps_counts_identical():
    a = fs.mc_zeros_circle(2, 5000, SEED)
    b = fs.mc_zeros_circle(2, 5000, SEED, scale=3.0)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    a = fs.mc_roots_rp1(7, 5000, SEED)
    b = fs.mc_roots_rp1(7, 5000, SEED, scale=3.0)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    a = fs.mc_common_zeros_t2(1, 200, SEED)
    b = fs.mc_common_zeros_t2(1, 200, SEED, scale=3.0)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_rescaling_keeps_lengths():
    a = fs.mc_curve_length_t2(2, 64, SEED)
    b = fs.mc_curve_length_t2(2, 64, SEED, scale=3.0)
    assert b.mean == pytest.approx(a.mean, rel=1e-12)


# ---------------------------------------------------------------- roots on RP^1


def test_linear_forms_have_one_root():
    gen = np.random.default_rng(SEED)
    poly = fs.sample_kostlan(1, gen, size=1000)
    assert np.all(fs.count_roots_rp1(poly) == 1)


def test_root_at_infinity_counts():
    # 1 - t^2 as a cubic form: roots t = +-1 and the point at infinity
    assert fs.count_roots_rp1(fs.KostlanPolynomial(np.array([1.0, 0.0, -1.0, 0.0]))) == 3
    # X1^3 alone vanishes at t = 0 three times
    with pytest.raises(fs.RepeatedRootError):
        fs.count_roots_rp1(fs.KostlanPolynomial(np.array([0.0, 0.0, 0.0, 1.0])))


def test_repeated_root_is_reported():
    with pytest.raises(fs.RepeatedRootError):
        fs.count_roots_rp1(fs.KostlanPolynomial(np.array([1.0, -2.0, 1.0])))
    counts, bad = fs.root_counts_rp1(np.array([[1.0, -2.0, 1.0], [-1.0, 0.0, 1.0]]))
    assert bad.tolist() == [True, False] and counts[1] == 2


def test_known_root_counts():
    P = np.polynomial.polynomial
    cases = [(P.polyfromroots([-3, -1, 0.5, 2, 7]), 5),
             (P.polymul(P.polyfromroots([1, 2]), [1, 0, 1]), 2),
             (P.polymul([2, 0, 1], [5, 0, 1]), 0)]
    for coeffs, k in cases:
        assert fs.count_roots_rp1(fs.KostlanPolynomial(np.asarray(coeffs, dtype=float))) == k


def test_near_cluster_uses_exact_path():
    # roots 1, 1 + 1e-7, 3: float Sturm cannot be trusted, the integer path still separates them
    coeffs = np.polynomial.polynomial.polyfromroots([1.0, 1.0 + 2.0**-23, 3.0])
    counts, bad = fs.root_counts_rp1(coeffs[None])
    assert counts.tolist() == [3] and not bad[0]


def test_root_counts_against_eigenvalue_solver():
    gen = np.random.default_rng(SEED)
    disagreements = 0
    total = 0
    for d in range(1, 13):
        coeffs = fs.sample_kostlan(d, gen, size=84).coeffs
        counts = fs.count_roots_rp1(fs.KostlanPolynomial(coeffs))
        for row, k in zip(coeffs, counts):
            roots = np.polynomial.polynomial.polyroots(row)
            real = int(np.sum(np.abs(roots.imag) <= 1e-9 * (1 + np.abs(roots))))
            disagreements += real != k
            total += 1
    assert total >= 1000
    assert disagreements == 0


def test_rotated_polynomials_have_the_same_roots():
    gen = np.random.default_rng(SEED)
    poly = fs.sample_kostlan(6, gen, size=2000)
    rot = poly.rotated(0.83)
    assert np.array_equal(fs.count_roots_rp1(poly), fs.count_roots_rp1(rot))


def test_rotation_invariance_of_the_law():
    gen = np.random.default_rng(SEED)
    d = 6
    rot = np.concatenate([fs.sample_kostlan(d, gen, size=200).rotated(t).coeffs
                          for t in gen.uniform(0, math.pi, size=25)])
    fresh = fs.sample_kostlan(d, gen, size=len(rot)).coeffs
    # every coefficient keeps its law after a rotation
    for k in range(d + 1):
        assert stats.ks_2samp(rot[:, k], fresh[:, k]).pvalue > 1e-3
    assert stats.ks_2samp(fs.count_roots_rp1(fs.KostlanPolynomial(rot)),
                          fs.count_roots_rp1(fs.KostlanPolynomial(fresh))).pvalue > 1e-3


@pytest.mark.parametrize("d", [4, 9])
def test_kostlan_root_mean(d):
    est = fs.mc_roots_rp1(d, 100_000, SEED)
    assert within(est, math.sqrt(d))


# ---------------------------------------------------------------- nodal curves on T^2


def test_sine_nodal_length():
    f = fs.trig_field(2, [((1, 0), 0.0, 1.0)])
    assert fs.curve_length_t2(f, 512) == pytest.approx(4 * math.pi, abs=1e-3)


def test_diagonal_nodal_length():
    # sin(x1 + x2 + 0.2) vanishes on two closed diagonal geodesics of length 2 pi sqrt(2)
    f = fs.trig_field(2, [((1, 1), math.sin(0.2), math.cos(0.2))])
    assert fs.curve_length_t2(f, 256) == pytest.approx(4 * math.pi * math.sqrt(2), rel=1e-9)


def test_circle_nodal_length():
    # cos x1 + cos x2 vanishes on the square |x1| + |x2| = pi, length 4 sqrt(2) pi
    f = fs.trig_field(2, [((1, 0), 1.0, 0.0), ((0, 1), 1.0, 0.0)])
    assert fs.curve_length_t2(f, 512) == pytest.approx(4 * math.sqrt(2) * math.pi, rel=1e-3)


def test_saddle_cells_use_the_center_value():
    # cos x1 cos x2 + eps has saddles at the cell grid; the nodal set is a pair of closed curves
    f = fs.trig_field(2, [((1, 1), 0.5, 0.0), ((1, -1), 0.5, 0.0)], const=0.01)
    segs = fs.nodal_polylines(f, 64)
    assert len(segs) > 0
    coarse = fs.curve_length_t2(f, 128)
    fine = fs.curve_length_t2(f, 512)
    assert abs(coarse - fine) / fine < 5e-3


def test_grid_refinement_converges():
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(2, 5, 1, gen, size=8)
    a, b = fs.curve_length_t2(f, 256), fs.curve_length_t2(f, 512)
    assert np.all(np.abs(a - b) / b < 5e-3)


def test_batch_and_single_lengths_agree():
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(2, 2, 1, gen, size=3)
    batch = fs.curve_length_t2(f, 128)
    single = [fs.curve_length_t2(f[i], 128) for i in range(3)]
    assert np.allclose(batch, single, rtol=1e-13)


def test_curve_length_mean():
    est = fs.mc_curve_length_t2(1, 1500, SEED)
    exact = math.sqrt(2 / 5) * 2 * math.pi**2
    assert abs(est.mean - exact) <= 0.01 * exact + 3 * est.stderr


# ---------------------------------------------------------------- common zeros on T^2


def test_sine_pair_has_four_common_zeros():
    f = fs.trig_system([fs.trig_field(2, [((1, 0), 0, 1), ((0, 1), 0, 0)]),
                        fs.trig_field(2, [((1, 0), 0, 0), ((0, 1), 0, 1)])])
    z = fs.common_zeros_t2(f)
    assert len(z.points) == 4
    expected = {(0.0, 0.0), (0.0, math.pi), (math.pi, 0.0), (math.pi, math.pi)}
    got = {tuple(np.round(p, 8)) for p in z.points}
    assert got == {tuple(np.round(p, 8)) for p in expected}


def test_common_zeros_are_zeros():
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(2, 5, 2, gen)
    z = fs.common_zeros_t2(f)
    if len(z.points):
        assert np.max(np.abs(f.evaluate(z.points))) < 1e-10


def test_common_zero_counts_stable_under_refinement():
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(2, 2, 2, gen, size=300)
    base = [len(z.points) for z in fs.common_zeros_batch(f)]
    fine = [len(z.points) for z in fs.common_zeros_batch(f, 4 * fs.point_grid(2))]
    assert base == fine


def test_common_zero_count_is_even():
    # two generic curves on a torus meet an even number of times (with signs summing to 0)
    gen = np.random.default_rng(SEED)
    f = fs.sample_torus_field(2, 2, 2, gen, size=200)
    assert all(len(z.points) % 2 == 0 for z in fs.common_zeros_batch(f))


def test_common_zero_mean():
    est = fs.mc_common_zeros_t2(1, 3000, SEED)
    assert within(est, 4 * math.pi / 5)


# ---------------------------------------------------------------- dumps and drivers


@pytest.mark.parametrize("n,r,key", [(1, 1, "zeros"), (2, 1, "segments"), (2, 2, "points")])
def test_field_dump_schema(n, r, key):
    f = fs.sample_torus_field(n, 2, r, np.random.default_rng(SEED))
    dump = fs.field_dump(f, 32)
    text = json.dumps(dump)
    back = json.loads(text)
    assert back["schema"] == fs.FIELD_DUMP_SCHEMA
    assert (back["n"], back["r"], back["lambda"], back["grid"]) == (n, r, 2, 32)
    assert key in back
    assert np.asarray(back["values"]).shape == (r,) + (32,) * n
    assert np.allclose(np.asarray(back["values"]), f.grid_values(32))


def test_drivers_are_deterministic():
    for run in (lambda: fs.mc_roots_rp1(5, 3000, SEED, streams=3),
                lambda: fs.mc_zeros_circle(3, 3000, SEED, streams=3),
                lambda: fs.mc_curve_length_t2(1, 40, SEED, streams=3)):
        assert run().to_record() == run().to_record()


def test_field_and_kac_rice_agree():
    from stochgeo.kac_rice import ModelSpec, expected_volume_kr

    field = fs.mc_zeros_circle(2, 40_000, SEED)
    kr = expected_volume_kr(ModelSpec.torus(1, 1, 2), 40_000, SEED)
    assert abs(field.mean - kr.mean) <= 3 * math.hypot(field.stderr, kr.stderr)
    field = fs.mc_roots_rp1(9, 40_000, SEED)
    kr = expected_volume_kr(ModelSpec.kostlan(1, 1, 9), 40_000, SEED)
    assert abs(field.mean - kr.mean) <= 3 * math.hypot(field.stderr, kr.stderr)
