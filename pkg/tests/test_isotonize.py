import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qlab.core import Dataset, Method, QuantileModel, QuantileSheet, TauGrid, ValidationError
from qlab.isotonize import correct_matrix, pav_project, quantile_property_gap, rearrange
from qlab.qr import predict

TAUS2 = TauGrid.of([0.10, 0.15])


def sheet(values, taus=None):
    values = np.asarray(values, dtype=np.float64)
    taus = taus or TauGrid.of(np.arange(1, values.size + 1) / (values.size + 1))
    return QuantileSheet(np.ones(1), values, taus)


def projection_oracle(v, w):
    """Best monotone fit by enumerating every split into consecutive blocks (q <= 4)."""
    q = len(v)
    best, best_val = None, np.inf
    for cuts in itertools.product([False, True], repeat=q - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [q]
        fit = np.empty(q)
        for a, b in zip(bounds[:-1], bounds[1:]):
            fit[a:b] = np.average(v[a:b], weights=w[a:b])
        if np.all(np.diff(fit) >= -1e-12):
            val = float(np.sum(w * (v - fit) ** 2))
            if val < best_val:
                best, best_val = fit, val
    return best, best_val


class TestRearrange:
    def test_crossed_pair(self):
        out = rearrange(sheet([2.1010, 1.6796], TAUS2))
        assert out.values.tolist() == [1.6796, 2.1010] and out.isotonized

    @pytest.mark.parametrize("vals", [[1.312, 2.133], [4.0, 4.0, 4.0]])
    def test_noop(self, vals):
        assert rearrange(sheet(vals)).values.tolist() == vals


class TestPav:
    def test_pooled_pair(self):
        out = pav_project(sheet([2.1010, 1.6796], TAUS2))
        assert out.values == pytest.approx([1.8903, 1.8903], abs=1e-12)

    def test_three(self):
        assert pav_project(sheet([3.0, 1.0, 2.0])).values.tolist() == [2.0, 2.0, 2.0]

    def test_monotone_unchanged(self):
        v = [0.1, 0.5, 0.5, 2.0]
        assert pav_project(sheet(v)).values.tolist() == v

    def test_bad_weights(self):
        with pytest.raises(ValidationError):
            pav_project(sheet([1.0, 0.0]), [1.0, 0.0])
        with pytest.raises(ValidationError):
            pav_project(sheet([1.0, 0.0]), [1.0])

    def test_weighted(self):
        out = pav_project(sheet([2.0, 0.0]), [3.0, 1.0])
        assert out.values.tolist() == [1.5, 1.5]


def _check_instance(v, w):
    """Every property for one random vector; returns a list of failed property names."""
    failed = []
    s = sheet(v)
    r = rearrange(s).values
    p = pav_project(s, w).values
    if not np.all(np.diff(r) >= 0) or not np.all(np.diff(p) >= 0):
        failed.append("order")
    if not np.array_equal(rearrange(rearrange(s)).values, r):
        failed.append("rearrange idempotence")
    if not np.array_equal(pav_project(pav_project(s, w), w).values, p):
        failed.append("pav idempotence")
    if not np.array_equal(np.sort(v), np.sort(r)):
        failed.append("multiset")
    if abs(np.sum(w * p) - np.sum(w * v)) > 1e-9 * (1 + np.sum(np.abs(w * v))):
        failed.append("weighted mean")
    if len(v) <= 4:
        _, best = projection_oracle(v, w)
        if np.sum(w * (v - p) ** 2) > best + 1e-9:
            failed.append("projection optimality")
    return failed


def random_suite(n_instances=1000, seed=0):
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        q = int(rng.integers(1, 9)) if i % 2 else int(rng.integers(1, 5))
        v = rng.normal(0.0, 2.0, size=q)
        if i % 5 == 0:
            v = np.round(v)  # ties
        w = rng.uniform(0.1, 3.0, size=q) if i % 3 else np.ones(q)
        for name in _check_instance(v, w):
            failures.append((i, name))
    return failures


def test_randomized_suite():
    assert random_suite() == []


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 4), elements=st.floats(-1e3, 1e3)))
def test_pav_is_projection(v):
    w = np.ones(v.size)
    _, best = projection_oracle(v, w)
    p = pav_project(sheet(v), w).values
    assert np.sum((v - p) ** 2) <= best + 1e-9 * (1 + best)


class TestMatrix:
    def test_rows_match_sheets(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(50, 6))
        for method, fn in (("rearrange", rearrange), ("pav", pav_project)):
            out = correct_matrix(m, method)
            for i in range(50):
                assert np.array_equal(out[i], fn(sheet(m[i])).values)


class TestCoverage:
    def test_published_rows(self, ref_data, published_independent):
        table = quantile_property_gap(published_independent, ref_data, method="none")
        x, y = ref_data.x[:, 1], ref_data.y
        direct = np.mean(y <= 2.1010 - 0.0789 * x)
        assert table.rows[0].coverage_before == direct == 3 / 20

    def test_corrections_recounted(self, ref_data, published_independent):
        for method in ("rearrange", "pav"):
            t = quantile_property_gap(published_independent, ref_data, method=method)
            assert len(t.rows) == 2
            for row in t.rows:
                assert row.gap_after == pytest.approx(abs(row.coverage_after - row.tau))

    def test_interpolating_single_point(self):
        d = Dataset.from_arrays(np.empty((1, 0)), np.array([2.0]))
        m = QuantileModel(np.array([[2.0]]), TauGrid.of([0.5]), Method.INDEPENDENT,
                          np.zeros(1), ("(intercept)",), "y")
        assert quantile_property_gap(m, d, method="none").rows[0].coverage_before == 1.0

    def test_grid_mismatch(self, ref_data, published_independent):
        with pytest.raises(ValidationError):
            quantile_property_gap(published_independent, ref_data, taus=[0.1, 0.2])

    def test_unknown_method(self, ref_data, published_independent):
        with pytest.raises(ValidationError):
            quantile_property_gap(published_independent, ref_data, method="sort")
