import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowtop import brownian
from flowtop.brownian import BrownianPath, sample_brownian_path, standard_normals


def test_same_key_same_increments():
    a = sample_brownian_path(2, 1.0, 0.01, 7, 3).increments
    b = sample_brownian_path(2, 1.0, 0.01, 7, 3).increments
    assert np.array_equal(a, b)


def test_increment_count_and_variance():
    p = sample_brownian_path(1, 1.0, 0.01, 0, 0)
    assert p.n_steps == 100 and p.increments.shape == (100, 1)
    pooled = np.concatenate([sample_brownian_path(1, 1.0, 0.01, 0, k).increments.ravel() for k in range(100)])
    assert pooled.size == 10_000
    assert abs(pooled.var() / 0.01 - 1) < 0.2


def test_trials_are_uncorrelated():
    a = np.array([sample_brownian_path(1, 0.1, 0.01, 5, 2 * k).values()[-1, 0] for k in range(1000)])
    b = np.array([sample_brownian_path(1, 0.1, 0.01, 5, 2 * k + 1).values()[-1, 0] for k in range(1000)])
    assert abs(np.corrcoef(a, b)[0, 1]) <= 0.05


@given(seed=st.integers(0, 2**63 - 1), trial=st.integers(0, 10**6),
       start=st.integers(0, 500), count=st.integers(1, 50))
def test_seek_matches_prefix(seed, trial, start, count):
    full = standard_normals(seed, trial, start + count)
    assert np.array_equal(standard_normals(seed, trial, count, start=start), full[start:])


def test_prefix_consistency_across_horizons():
    short = sample_brownian_path(3, 1.0, 0.01, 1, 1).increments
    long = sample_brownian_path(3, 2.0, 0.01, 1, 1).increments
    assert np.array_equal(long[:100], short)


def test_increments_are_read_only():
    p = sample_brownian_path(1, 0.1, 0.01, 0, 0)
    with pytest.raises(ValueError):
        p.increments[0, 0] = 1.0


def test_coarsen_sums_increments():
    p = sample_brownian_path(2, 1.0, 0.01, 3, 0)
    c = p.coarsen(4)
    assert c.n_steps == 25 and c.dt == pytest.approx(0.04)
    assert np.allclose(c.values()[-1], p.values()[100])


def test_block_matches_single_trials():
    blk = brownian.increment_block(9, [4, 2], 10, 2, 0.1)
    assert np.array_equal(blk[1], brownian.increments(9, 2, 10, 2, 0.1))


def test_horizon_validation():
    with pytest.raises(ValueError):
        sample_brownian_path(1, 0.001, 0.01, 0, 0)
    with pytest.raises(ValueError):
        brownian.n_steps_for(1.0, 0.0)
    assert brownian.n_steps_for(0.3, 0.1) == 3


def test_normals_are_standard():
    z = standard_normals(11, 0, 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
    assert np.all(np.isfinite(z))


def test_explicit_path_does_not_touch_generator():
    before = brownian.draw_count()
    p = BrownianPath(1, 0.1, 2, 0, 0, explicit=np.array([[0.1], [0.2]]))
    assert np.allclose(p.values()[:, 0], [0, 0.1, 0.3])
    assert brownian.draw_count() == before
