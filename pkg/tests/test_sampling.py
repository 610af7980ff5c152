import numpy as np
import pytest
from scipy import stats

from tango.sampling import DegenerateDistributionError, tt_sample
from tango.tensor_train import TensorTrain, tt_constant, tt_from_dense


def test_delta_density():
    t = np.zeros((4, 5, 3))
    t[2, 1, 0] = 1.0
    s = tt_sample(tt_from_dense(t), 500, rng_seed=1)
    assert np.all(s == [2, 1, 0])


def test_uniform_chi_square():
    s = tt_sample(tt_constant([8, 8]), 10_000, rng_seed=0)
    counts = np.bincount(s[:, 0] * 8 + s[:, 1], minlength=64)
    assert stats.chisquare(counts).pvalue > 0.01


def test_product_marginals_tv():
    rng = np.random.default_rng(5)
    p1, p2 = rng.uniform(0.1, 1, 10), rng.uniform(0.1, 1, 7)
    pdf = TensorTrain([p1.reshape(1, -1, 1), p2.reshape(1, -1, 1)])
    s = tt_sample(pdf, 100_000, rng_seed=2)
    for k, p in enumerate((p1, p2)):
        emp = np.bincount(s[:, k], minlength=len(p)) / len(s)
        assert 0.5 * np.abs(emp - p / p.sum()).sum() <= 0.02


def test_matches_dense_joint():
    rng = np.random.default_rng(8)
    t = rng.uniform(0, 1, (3, 4, 3)) ** 3
    s = tt_sample(tt_from_dense(t), 60_000, rng_seed=3)
    emp = np.bincount(np.ravel_multi_index(tuple(s.T), t.shape), minlength=t.size)
    expected = t.ravel() / t.sum() * len(s)
    assert stats.chisquare(emp, expected).pvalue > 1e-3


def test_reproducible():
    rng = np.random.default_rng(0)
    pdf = tt_from_dense(rng.uniform(0, 1, (5, 5, 5)))
    np.testing.assert_array_equal(tt_sample(pdf, 300, 11), tt_sample(pdf, 300, 11))
    assert not np.array_equal(tt_sample(pdf, 300, 11), tt_sample(pdf, 300, 12))


def test_zero_weight_cells_never_sampled():
    t = np.ones((6, 6))
    t[:, 3] = 0.0
    t[1, :] = 0.0
    s = tt_sample(tt_from_dense(t), 20_000, rng_seed=4)
    assert not np.any(s[:, 1] == 3)
    assert not np.any(s[:, 0] == 1)


def test_degenerate():
    with pytest.raises(DegenerateDistributionError):
        tt_sample(tt_from_dense(np.zeros((3, 3))), 10)


def test_bad_count():
    with pytest.raises(ValueError):
        tt_sample(tt_constant([2]), 0)
