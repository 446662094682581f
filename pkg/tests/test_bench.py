import numpy as np
import pytest

from qlab import bench
from qlab.core import ValidationError


class TestSynth:
    def test_reproducible(self):
        a, b = bench.synth(20, 2, 1), bench.synth(20, 2, 1)
        assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_shape(self):
        d = bench.synth(1000, 2, 7)
        assert (d.n, d.p) == (1000, 2)
        assert d.x[:, 1].min() >= 0.0 and d.x[:, 1].max() <= 10.0

    def test_seed_changes_data(self):
        assert not np.array_equal(bench.synth(20, 2, 1).y, bench.synth(20, 2, 2).y)

    def test_too_small(self):
        with pytest.raises(ValidationError):
            bench.synth(1, 2)


def test_tau_grid():
    assert bench.tau_grid(3).tolist() == [0.25, 0.5, 0.75]


def test_loglog_slope_exact_power_law():
    n = np.array([10, 20, 40, 80])
    assert bench.loglog_slope(n, 3e-6 * n ** 2.0) == pytest.approx(2.0)
    assert np.isnan(bench.loglog_slope([10], [1.0]))


class TestScalingRun:
    @pytest.mark.parametrize("method", bench.METHODS)
    def test_cells_and_invariants(self, method):
        cells = bench.scaling_run(method, (30, 60), (2, 3), repeats=1, warmup=False, mqgd_evals=2)
        assert [(c.n, c.q) for c in cells] == [(30, 2), (60, 2), (30, 3), (60, 3)]
        assert all(c.invariant_ok and not c.skipped and c.seconds > 0 for c in cells)

    def test_guard_becomes_skipped_cell(self):
        (cell,) = bench.scaling_run("cjqr", (100_001,), (2,), repeats=1, warmup=False)
        assert cell.skipped and np.isnan(cell.seconds) and "200" in cell.note

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            bench.scaling_run("simplex", (10,), (2,), repeats=1)

    def test_csv(self, tmp_path):
        cells = bench.scaling_run("independent", (20,), (2,), repeats=1, warmup=False)
        bench.write_cells(cells, tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0].startswith("method,n,q,seconds") and len(lines) == 2
        assert "independent" in bench.format_cells(cells)


def test_compare_backends_rows():
    rows = bench.compare_backends(repeats=1)
    assert len(rows) == 4
    assert all(r["python"] > 0 for r in rows)
    assert "workload" in bench.format_backends(rows)
