import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sa_diffusion.data import RING_STD, generate_dataset, nearest_center_counts, ring_centers
from sa_diffusion.errors import ConfigError
from sa_diffusion.metrics import _w2_1d, mode_coverage, sliced_wasserstein


def test_ring_mode_counts():
    ds = generate_dataset("gaussian_ring", 8000, seed=0)
    counts = nearest_center_counts(ds.raw, ds.centers)
    # binomial(8000, 1/8): sd = sqrt(8000 * 1/8 * 7/8)
    assert np.all(np.abs(counts - 1000) <= 4 * np.sqrt(1000 * 7 / 8))


def test_ring_spread_and_normalisation():
    ds = generate_dataset("gaussian_ring", 8000, seed=1)
    r = np.linalg.norm(ds.raw, axis=1)
    assert abs(r.mean() - 1.0) < 0.01
    nearest = ds.centers[np.argmin(((ds.raw[:, None] - ds.centers[None]) ** 2).sum(2), axis=1)]
    assert np.std(ds.raw - nearest) == pytest.approx(RING_STD, rel=0.05)
    np.testing.assert_allclose(ds.points.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(ds.points.std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(ds.to_raw(ds.points), ds.raw, atol=1e-12)


@pytest.mark.parametrize("kind", ["gaussian_ring", "swiss_roll", "checkerboard", "delta_point"])
def test_datasets_are_seeded(kind):
    a = generate_dataset(kind, 300, seed=4)
    b = generate_dataset(kind, 300, seed=4)
    np.testing.assert_array_equal(a.raw, b.raw)
    assert a.points.shape == (300, 2) and np.all(np.isfinite(a.points))
    if kind != "delta_point":
        assert not np.array_equal(a.raw, generate_dataset(kind, 300, seed=5).raw)


def test_delta_point_is_unnormalised():
    ds = generate_dataset("delta_point", 10, dim=3, point=[1.0, 2.0, 3.0])
    np.testing.assert_array_equal(ds.points, np.tile([1.0, 2.0, 3.0], (10, 1)))
    with pytest.raises(ConfigError):
        generate_dataset("delta_point", 10, dim=3, point=[1.0])


@pytest.mark.parametrize("kwargs", [dict(kind="moons", n_points=5), dict(kind="swiss_roll", n_points=0), dict(kind="checkerboard", n_points=5, dim=3)])
def test_dataset_errors(kwargs):
    with pytest.raises(ConfigError):
        generate_dataset(**kwargs)


def test_checkerboard_occupies_alternate_squares():
    x = generate_dataset("checkerboard", 4000, seed=2).raw
    parity = (np.floor(x[:, 0]) + np.floor(x[:, 1])) % 2
    assert np.all(parity == 0)


def test_sw_self_distance_floor():
    # one pair fluctuates around the threshold because mode counts are multinomial;
    # the noise floor itself is the mean over independent pairs
    vals = [
        sliced_wasserstein(
            generate_dataset("gaussian_ring", 4096, seed=2 * k).raw,
            generate_dataset("gaussian_ring", 4096, seed=2 * k + 1).raw,
            n_projections=128,
        )
        for k in range(20)
    ]
    assert np.mean(vals) < 0.05


def test_sw_detects_shift_and_is_symmetric():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((500, 2))
    b = rng.standard_normal((700, 2)) + [1.0, 0.0]
    d = sliced_wasserstein(a, b, seed=3)
    assert d == pytest.approx(sliced_wasserstein(b, a, seed=3), rel=1e-12)
    assert d > 0.3
    # a pure translation v projects to |u.v|; averaged over random directions ~ 2/pi
    c = a + [1.0, 0.0]
    assert sliced_wasserstein(a, c, n_projections=4000) == pytest.approx(2 / np.pi, rel=0.05)
    assert sliced_wasserstein(a, a) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 1000))
def test_w2_unequal_sizes_matches_replication(n, m, seed):
    # replicating each point m (resp. n) times gives equal-size measures with the same law
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, 3))
    b = rng.standard_normal((m, 3))
    rep = np.sqrt(np.mean((np.sort(np.repeat(a, m, axis=0), axis=0) - np.sort(np.repeat(b, n, axis=0), axis=0)) ** 2, axis=0))
    np.testing.assert_allclose(_w2_1d(a, b), rep, rtol=1e-10, atol=1e-12)


def test_sw_errors():
    with pytest.raises(ValueError):
        sliced_wasserstein(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sliced_wasserstein(np.zeros((0, 2)), np.zeros((3, 2)))


def test_mode_coverage():
    centers = ring_centers()
    assert mode_coverage(centers + 0.01, centers, 0.1) == 8
    assert mode_coverage(centers[:3], centers, 0.1) == 3
    assert mode_coverage(np.zeros((0, 2)), centers, 0.1) == 0
    assert mode_coverage(np.zeros((5, 2)), centers, 0.5) == 0
    with pytest.raises(ValueError):
        mode_coverage(centers, np.zeros((0, 2)), 0.1)
