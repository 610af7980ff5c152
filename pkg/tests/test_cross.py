import math

import numpy as np
import pytest

from tango.cross import BlackBoxField, EvaluationError, maxvol, tt_cross
from tango.tensor_train import tt_eval


def separable_field(sizes, gamma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    g = [rng.uniform(0, 1, n) for n in sizes]

    def f(idx):
        return np.exp(-gamma * sum(g[k][idx[:, k]] for k in range(len(sizes))))

    return BlackBoxField(f, sizes), f


def rank_r_field(sizes, r, seed=0):
    """Sum of r separable terms with positive factors: TT rank at most r."""
    rng = np.random.default_rng(seed)
    facs = [[rng.uniform(0.5, 1.5, n) for n in sizes] for _ in range(r)]

    def f(idx):
        return sum(np.prod([fac[k][idx[:, k]] for k in range(len(sizes))], axis=0) for fac in facs)

    return BlackBoxField(f, sizes), f


def heldout(tt, f, sizes, n=2000, seed=99):
    idx = np.stack([np.random.default_rng(seed + k).integers(0, s, n) for k, s in enumerate(sizes)], axis=1)
    ref = f(idx)
    return np.linalg.norm(tt_eval(tt, idx) - ref) / np.linalg.norm(ref)


def test_separable_three_modes_rank_one():
    sizes = [16, 12, 10]
    field, f = separable_field(sizes, gamma=2.0)
    res = tt_cross(field, max_rank=10, n_sweeps=30, tol=1e-8)
    assert res.tt.ranks[1:-1] == [1, 1]
    assert res.heldout_error <= 1e-6
    assert heldout(res.tt, f, sizes) <= 1e-6


def test_constant_field():
    field = BlackBoxField(lambda idx: np.full(len(idx), 3.5), [4, 5, 6])
    res = tt_cross(field, max_rank=5, tol=1e-10)
    np.testing.assert_allclose(res.tt.full(), 3.5, atol=1e-10)


@pytest.mark.parametrize("r", [2, 3])
def test_rank_r_recovery(r):
    sizes = [6, 7, 6, 5, 6]
    field, f = rank_r_field(sizes, r, seed=r)
    res = tt_cross(field, max_rank=10, n_sweeps=30, tol=1e-9)
    assert max(res.tt.ranks) <= r + 1
    assert res.heldout_error <= 1e-6
    assert heldout(res.tt, f, sizes) <= 1e-6


def test_nonfinite_value_reports_index():
    bad = (1, 2, 3)

    def f(idx):
        out = np.ones(len(idx))
        out[np.all(idx == bad, axis=1)] = np.nan
        return out

    field = BlackBoxField(f, [4, 4, 4])
    with pytest.raises(EvaluationError) as info:
        field(np.array([[0, 0, 0], list(bad)]))
    assert info.value.index == bad


def test_nonfinite_during_sweeps():
    field = BlackBoxField(lambda idx: np.where(idx[:, 0] == 2, np.inf, 1.0), [3, 3, 3])
    with pytest.raises(EvaluationError):
        tt_cross(field, max_rank=3)


def test_deterministic_for_fixed_seed():
    sizes = [8, 8, 8, 8]
    field, _ = rank_r_field(sizes, 2)
    a = tt_cross(field, max_rank=6, seed=4)
    b = tt_cross(field, max_rank=6, seed=4)
    assert a.tt.to_bytes() == b.tt.to_bytes()
    assert a.heldout_error == b.heldout_error


def test_maxvol_close_to_brute_force():
    from itertools import combinations

    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.normal(size=(9, 3))
        piv = maxvol(a)
        assert len(set(piv.tolist())) == 3
        best = max(abs(np.linalg.det(a[list(c)])) for c in combinations(range(9), 3))
        got = abs(np.linalg.det(a[piv]))
        # dominance within 1.05 per row bounds the loss to a modest factor
        assert got >= best / 1.05**3 / math.factorial(3)
        coeffs = np.linalg.solve(a[piv].T, a.T).T
        assert np.abs(coeffs).max() <= 1.05 + 1e-9


def test_field_on_grid_uses_bin_centres():
    from tango.grid import Grid

    grid = Grid.uniform([[0.0, 1.0], [0.0, 2.0]], [4, 4])
    field = BlackBoxField.on_grid(lambda q: q[:, 0] + q[:, 1], grid)
    np.testing.assert_allclose(field(np.array([[0, 0], [3, 3]])), [0.125 + 0.25, 0.875 + 1.75])
