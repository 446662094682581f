import numpy as np
import pytest

from qlab.cjqr import fit_joint
from qlab.core import Method, QuantileModel, QuantileSheet, TauGrid, ValidationError
from qlab.isotonize import rearrange
from qlab.qr import predict
from qlab.sgp import CrossingError, assign_sgp, parse_policy, percentile_roundtrip, sgp_batch

TAUS2 = TauGrid.of([0.10, 0.15])


def iso_sheet():
    return QuantileSheet(np.array([1.0, 0.0]), np.array([1.6796, 2.1010]), TAUS2, isotonized=True)


class TestAssign:
    def test_midpoint(self):
        s = assign_sgp(iso_sheet(), 1.89030)
        assert s.tau_hat == pytest.approx(0.125, abs=1e-12)
        assert s.bracket == (0, 1) and not s.clamped

    def test_lower_knot(self):
        s = assign_sgp(iso_sheet(), 1.6796)
        assert s.tau_hat == 0.10 and not s.clamped

    def test_crossed_raw_sheet(self, published_independent):
        raw = predict(published_independent, [1.0, 0.0])
        with pytest.raises(CrossingError) as info:
            assign_sgp(raw, 1.9, "require-monotone")
        assert info.value.pair == (0, 1)

    def test_auto_isotonize(self, published_independent):
        raw = predict(published_independent, [1.0, 0.0])
        s = assign_sgp(raw, 1.89030, "auto-isotonize(rearrange)")
        assert s.tau_hat == pytest.approx(0.125, abs=1e-12)

    @pytest.mark.parametrize("y,tau,bracket", [(0.0, 0.10, ("below", 0)), (9.0, 0.15, ("above", 1))])
    def test_clamping(self, y, tau, bracket):
        s = assign_sgp(iso_sheet(), y)
        assert s.tau_hat == tau and s.clamped and s.bracket == bracket

    def test_tie_takes_lowest_bracket(self):
        sheet = QuantileSheet(np.ones(1), np.array([1.0, 2.0, 2.0, 3.0]),
                              TauGrid.of([0.2, 0.4, 0.6, 0.8]))
        s = assign_sgp(sheet, 2.0)
        assert s.tau_hat == 0.4 and s.bracket == (0, 1)
        flat = QuantileSheet(np.ones(1), np.array([2.0, 2.0]), TauGrid.of([0.3, 0.7]))
        assert assign_sgp(flat, 2.0).tau_hat == 0.3

    def test_single_knot(self):
        with pytest.raises(ValidationError):
            assign_sgp(QuantileSheet(np.ones(1), np.array([1.0]), TauGrid.of([0.5])), 1.0)

    @pytest.mark.parametrize("text,expected", [("auto-isotonize(pav)", "pav"), ("auto-isotonize", "rearrange"),
                                               ("require-monotone", "require-monotone")])
    def test_parse_policy(self, text, expected):
        assert parse_policy(text) == expected

    def test_unknown_policy(self):
        with pytest.raises(ValidationError):
            parse_policy("sort")


class TestBatch:
    def test_published_independent(self, ref_data, published_independent):
        results, summary = sgp_batch(published_independent, ref_data.x, ref_data.y, "rearrange")
        assert summary.n == 20
        assert all(0.10 <= r.score.tau_hat <= 0.15 for r in results)
        crossed = ref_data.x[:, 1] < (2.1010 - 1.6796) / (0.0453 + 0.0789)
        assert [r.crossed_before_correction for r in results] == crossed.tolist()
        assert summary.crossing_frequency == crossed.mean()

    def test_joint_model_require_monotone(self, ref_data):
        model, _ = fit_joint(ref_data, TAUS2)
        _, summary = sgp_batch(model, ref_data.x, ref_data.y, "require-monotone")
        assert summary.crossing_errors == 0 and summary.crossing_count == 0

    def test_require_monotone_records_errors(self, ref_data, published_independent):
        results, summary = sgp_batch(published_independent, ref_data.x, ref_data.y, "require-monotone")
        assert summary.crossing_errors == summary.crossing_count == 7
        assert all((r.error is None) == (r.score is not None) for r in results)

    def test_empty(self, published_independent):
        results, summary = sgp_batch(published_independent, np.empty((0, 2)), np.empty(0))
        assert results == [] and summary.n == 0 and summary.crossing_frequency == 0.0


class TestRoundtrip:
    def test_strictly_monotone(self):
        m = QuantileModel(np.array([[0.0, 1.0], [1.0, 1.0], [2.5, 1.5]]), TauGrid.of([0.2, 0.5, 0.8]),
                          Method.INDEPENDENT, np.zeros(3), ("(intercept)", "x"), "y")
        rt = percentile_roundtrip(m, [1.0, 2.0])
        assert rt.discrepancy <= 1e-12 and not rt.degenerate

    def test_flat_joint_sheet(self, published_cjqr):
        rt = percentile_roundtrip(published_cjqr, [1.0, 5.0])
        assert rt.degenerate
        assert rt.discrepancy == pytest.approx(0.05, abs=1e-12)

    def test_isotonized_independent_at_five(self, published_independent):
        rt = percentile_roundtrip(published_independent, [1.0, 5.0], policy="rearrange")
        # at x=5 the published rows are already ordered, so the round trip is exact
        sheet = rearrange(predict(published_independent, [1.0, 5.0]))
        assert np.all(np.diff(sheet.values) > 0)
        assert rt.discrepancy <= 1e-12

    def test_grid_mismatch(self, published_cjqr):
        with pytest.raises(ValidationError):
            percentile_roundtrip(published_cjqr, [1.0, 5.0], taus=[0.1, 0.2])
