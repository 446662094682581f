"""Acceptance criteria, each run at its stated tolerance.

Every clause records one ``[PASS]``/``[FAIL]`` line; pytest prints them in an
"acceptance criteria" section at the end of the run, so
``pytest tests/test_acceptance.py`` doubles as the verdict table.
"""

import json
import sys
import time

import numpy as np
import pytest

from conftest import VERDICTS, random_dataset
from qlab import bench
from qlab.cjqr import fit_joint, verify_noncrossing
from qlab.core import Method, TauGrid, reference_dataset, reference_model
from qlab.isotonize import quantile_property_gap
from qlab.mqgd import MqgdConfig, crossing_rate
from qlab.mqgd import fit as fit_mqgd
from qlab.qr import brute_force_oracle, fit_independent, fit_single, predict
from qlab.report import crossing_point, reproduce
from test_isotonize import random_suite
from test_mqgd import gradient_check_points

TAUS = (0.10, 0.15)
GRID = np.column_stack([np.ones(101), np.linspace(0.0, 10.0, 101)])


def verdict(label, ok, detail="", warn=False):
    status = "PASS" if ok else ("WARN" if warn else "FAIL")
    VERDICTS.append(f"[{status}] {label}" + (f"  ({detail})" if detail else ""))
    if not warn:
        assert ok, f"{label}: {detail}"


@pytest.fixture(scope="module")
def data():
    return reference_dataset()


@pytest.fixture(scope="module")
def mqgd_run(data):
    t0 = time.perf_counter()
    model, trace = fit_mqgd(data, TAUS, MqgdConfig())
    return model, trace, time.perf_counter() - t0


# -- 1 -----------------------------------------------------------------------

def test_c1_coefficients(data):
    t0 = time.perf_counter()
    b10, _ = fit_single(data, 0.10)
    b15, _ = fit_single(data, 0.15)
    secs = time.perf_counter() - t0
    target = np.array([[2.1010, -0.0789], [1.6796, 0.0453]])
    diff = float(np.max(np.abs(np.array([b10, b15]) - target)))
    verdict("1 independent QR coefficients within 1e-3 of (2.1010, -0.0789), (1.6796, 0.0453)",
            diff <= 1e-3 and secs < 1.0,
            f"got {np.round(b10, 4).tolist()} and {np.round(b15, 4).tolist()}, max diff {diff:.4f}, {secs:.3f}s")


def test_c1_objective_matches_oracle(data):
    t0 = time.perf_counter()
    gaps = []
    for t in TAUS:
        _, val = fit_single(data, t)
        _, ora = brute_force_oracle(data, t)
        gaps.append(abs(val - ora))
    secs = time.perf_counter() - t0
    verdict("1 LP objective equals brute-force oracle within 1e-9, runtime < 1 s",
            max(gaps) <= 1e-9 and secs < 1.0, f"max gap {max(gaps):.2e}, {secs:.3f}s")


# -- 2 -----------------------------------------------------------------------

def test_c2_evaluations():
    model = reference_model(Method.INDEPENDENT)
    at10 = predict(model, [1.0, 10.0])
    at0 = predict(model, [1.0, 0.0])
    ok = (np.max(np.abs(at10.values - [1.312, 2.133])) <= 2e-3
          and np.max(np.abs(at0.values - [2.1010, 1.6796])) <= 2e-3
          and not at0.is_monotone() and at10.is_monotone())
    verdict("2 x=10 gives (1.312, 2.133), x=0 gives (2.1010, 1.6796), violation at x=0 detected", ok,
            f"x10 {np.round(at10.values, 4).tolist()}, x0 {at0.values.tolist()}")


def test_c2_crossing_point_and_note():
    cp = crossing_point(reference_model(Method.INDEPENDENT).coef)
    rep = reproduce()
    noted = any("5.08" in n for n in rep["notes"])
    verdict("2 crossing abscissa 3.393 +/- 0.01 and the stated 5.08 noted as inconsistent",
            abs(cp - 3.393) <= 0.01 and noted, f"crossing at {cp:.4f}, note present: {noted}")


# -- 3 -----------------------------------------------------------------------

def test_c3_coefficients(data):
    model, _ = fit_joint(data, TAUS)
    diff = float(np.max(np.abs(model.coef - [[1.7727, 0.0], [1.7727, 0.0]])))
    verdict("3 CJQR rows both (1.7727, 0.0000) within 1e-3", diff <= 1e-3,
            f"got {np.round(model.coef, 4).tolist()}, max diff {diff:.4f}")


def test_c3_noncrossing_and_sandwich(data):
    model, _ = fit_joint(data, TAUS)
    rep = verify_noncrossing(model, data, 1e-9)
    joint = float(model.fit_loss.sum())
    indep = sum(fit_single(data, t)[1] for t in TAUS)
    verdict("3 CJQR zero violations at 1e-9 and joint objective >= sum of independent optima",
            rep.count == 0 and joint >= indep - 1e-9,
            f"{rep.count} violations, joint {joint:.6f} vs independent {indep:.6f}")


# -- 4 -----------------------------------------------------------------------

def test_c4a_crossing_rate(mqgd_run):
    model, _, secs = mqgd_run
    rate = crossing_rate(model, GRID)
    verdict("4a MQGD crossing rate 0.0 on 101-point grid over [0, 10], runtime < 30 s",
            rate == 0.0 and secs < 30.0, f"rate {rate}, {secs:.2f}s")


def test_c4b_loss_floor(data, mqgd_run):
    _, trace, _ = mqgd_run
    floor = sum(fit_single(data, t)[1] for t in TAUS) / data.n
    c = trace.final_composite
    verdict("4b MQGD composite loss >= LP floor and within 10% of it",
            floor - 1e-12 <= c <= 1.10 * floor, f"loss {c:.6f}, floor {floor:.6f}, ratio {c / floor:.4f}")


def test_c4c_neighbourhood(mqgd_run):
    model, _, _ = mqgd_run
    diff = float(np.max(np.abs(model.coef - reference_model(Method.MQGD).coef)))
    verdict("4c MQGD coefficients within 0.15 of the published row (pass/warn)", diff <= 0.15,
            f"max diff {diff:.4f}", warn=True)


# -- 5 -----------------------------------------------------------------------

def test_c5_isotonize_suite():
    failures = random_suite(1000, seed=2024)
    verdict("5 rearrange/PAV properties on 1000 random instances, zero failures", not failures,
            f"{len(failures)} failures")


# -- 6 -----------------------------------------------------------------------

def test_c6_coverage_exact(data):
    model = fit_independent(data, TAUS)
    cov = quantile_property_gap(model, data, method="none").rows[0].coverage_before
    verdict("6 independent QR coverage at tau=0.10 is exactly 2/20 = 0.10", cov == 0.10,
            f"coverage {cov} ({round(cov * 20)} of 20)")


def test_c6_post_isotonization_gap(data):
    model = fit_independent(data, TAUS)
    rows = {m: quantile_property_gap(model, data, method=m).rows for m in ("rearrange", "pav")}
    ok = all(np.isfinite(r.gap_after) and r.gap_after == abs(r.coverage_after - r.tau)
             for rs in rows.values() for r in rs)
    detail = ", ".join(f"{m} {rs[0].coverage_after:.2f}/{rs[1].coverage_after:.2f}" for m, rs in rows.items())
    verdict("6 post-isotonization coverage recomputed and gap reported", ok, detail)


# -- 7 -----------------------------------------------------------------------

def test_c7_oracle_sweep(data):
    taus = [round(0.05 * k, 2) for k in range(1, 20)]
    worst = 0.0
    for t in taus:
        worst = max(worst, abs(fit_single(data, t)[1] - brute_force_oracle(data, t)[1]))
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = random_dataset(rng, int(rng.integers(3, 51)), ties=bool(rng.integers(0, 2)))
        for t in taus:
            worst = max(worst, abs(fit_single(d, t)[1] - brute_force_oracle(d, t)[1]))
    verdict("7 fit_single equals oracle within 1e-9 for 19 taus on reference and 50 random datasets",
            worst <= 1e-9, f"max gap {worst:.2e}")


# -- 8 -----------------------------------------------------------------------

def test_c8_gradient_check(data):
    errs = gradient_check_points(data, 100, seed=8)
    verdict("8 MQGD subgradient matches central differences (h=1e-6) to 1e-4 relative at 100 points",
            max(errs) <= 1e-4, f"worst relative error {max(errs):.2e}")


# -- 9 -----------------------------------------------------------------------

@pytest.mark.slow
def test_c9_scaling():
    t0 = time.perf_counter()
    qs = (2, 3, 4, 6)
    ind = bench.scaling_run("independent", (200,), qs)
    cj = bench.scaling_run("cjqr", (200,), qs)
    nn = bench.scaling_run("mqgd", (20_000, 40_000, 80_000, 160_000), (5,))
    secs = time.perf_counter() - t0
    s_ind, s_cj, s_nn = bench.slope_in(ind, "q"), bench.slope_in(cj, "q"), bench.slope_in(nn, "n")
    ok = s_cj > s_ind and abs(s_nn - 1.0) <= 0.2 and secs < 300
    verdict("9 CJQR q-slope > independent q-slope at n=200; MQGD n-slope 1.0 +/- 0.2; < 5 min", ok,
            f"CJQR {s_cj:.2f} vs independent {s_ind:.2f}, MQGD {s_nn:.2f}, {secs:.1f}s")


# -- 10 ----------------------------------------------------------------------

def test_c10_reproduce_deterministic():
    blobs = []
    for _ in range(2):
        blobs.append(json.dumps(reproduce(), indent=2, sort_keys=True).encode())
    verdict("10 reproduce report byte-identical across two runs", blobs[0] == blobs[1],
            f"{len(blobs[0])} bytes")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
