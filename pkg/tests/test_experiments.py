import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tree_spectra import DomainError, InapplicableError, b_regular, eta_power_potential, indicator
from tree_spectra.experiments import (
    CSV_COLUMNS,
    SweepConfig,
    check_dn_bracket,
    check_necessity,
    emit,
    fit_slope,
    run_check,
    run_sweep,
    scenario_config,
    to_csv,
    to_json,
)

INDICATOR = {"pieces": [{"from": 0.0, "to": 2.0, "profile": {"kind": "constant", "c": 1.0}}], "support_bound": 2.0}
ZERO = {"pieces": [], "support_bound": 0.0}
TREE = {"kind": "b_regular", "b": 2, "d": 3.0, "horizon": 60}


@given(st.floats(0.3, 3.0), st.floats(0.5, 50.0), st.integers(3, 5))
def test_fitter_recovers_exact_power(p, A, decades):
    # start where A alpha^p >= 20 so that the floor is a small relative error
    a0 = max(10.0, (20.0 / A) ** (1.0 / p))
    alphas = np.geomspace(a0, a0 * 10.0**decades, 30)
    counts = np.floor(A * alphas**p)
    fit = fit_slope(alphas, counts, window=(alphas[0], alphas[-1]))
    assert abs(fit.slope - p) <= 0.02


def test_fitter_uses_upper_half_and_skips_bad_rows():
    alphas = np.geomspace(1, 1e4, 10)
    counts = np.r_[[1000] * 5, np.floor(alphas[5:] ** 0.5)]
    conv = [True] * 9 + [False]
    fit = fit_slope(alphas, counts, conv)
    assert fit.points == 4
    assert fit.slope == pytest.approx(0.5, abs=0.05)


def test_zero_counts_leave_slope_undefined():
    fit = fit_slope(np.geomspace(1, 10, 6), np.zeros(6))
    assert fit.slope is None and fit.reason == "all counts zero"
    res = run_sweep(SweepConfig(TREE, ZERO, alpha_min=1.0, alpha_max=1e3, points=6, p=1.0))
    assert res.counts == [0] * 6
    assert res.slope is None
    assert res.sup_ratio == 0.0


@pytest.mark.parametrize("bad", [
    dict(alpha_min=0.0), dict(alpha_min=10.0, alpha_max=1.0), dict(points=4), dict(bc="robin"), dict(p=-1.0),
])
def test_config_validation(bad):
    with pytest.raises(DomainError):
        SweepConfig(TREE, INDICATOR, **bad)
    with pytest.raises(DomainError):
        SweepConfig.from_dict({"tree": TREE, "potential": INDICATOR, "colour": "red"})


def test_config_accepts_alpha_grid_block():
    cfg = SweepConfig.from_dict({"tree": TREE, "potential": INDICATOR,
                                 "alpha_grid": {"min": 1.0, "max": 100.0, "points": 7}})
    np.testing.assert_allclose(cfg.alphas(), np.geomspace(1, 100, 7))


def _small_sweep(**kw):
    cfg = dict(alpha_min=1.0, alpha_max=1e3, points=8, p=0.5)
    cfg.update(kw)
    return run_sweep(SweepConfig(TREE, INDICATOR, **cfg))


def test_csv_layout_and_determinism():
    a, b = _small_sweep(), _small_sweep()
    text = to_csv(a)
    assert text == to_csv(b)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 8
    for r, row in zip(a.rows, rows[1:]):
        assert int(row[1]) == r["count"]
        assert float(row[3]) == pytest.approx(r["count"] / math.sqrt(r["alpha"]))


def test_empty_result_gives_header_only():
    res = _small_sweep()
    res.rows = []
    assert to_csv(res) == ",".join(CSV_COLUMNS) + "\n"


def test_json_round_trip(tmp_path):
    res = _small_sweep()
    path = tmp_path / "out.json"
    emit(res, "json", str(path))
    back = json.loads(path.read_text())
    assert back == json.loads(to_json(res))
    assert back["rows"] == res.rows
    assert back["config"]["points"] == 8
    with pytest.raises(DomainError):
        emit(res, "xml", str(path))


def test_workers_do_not_change_results():
    assert _small_sweep().rows == _small_sweep(workers=3).rows


def test_weyl_decade_ratios_settle():
    cfg = scenario_config("weyl", alpha_min=1e2, alpha_max=1e5, points=7)
    res = run_sweep(cfg)
    dev = [abs(r - 1.0) for a, r in res.weyl["ratios"][::2]]
    assert dev[-1] < dev[0]
    assert dev[-1] < 0.05
    assert res.slope == pytest.approx(0.5, abs=0.05)


def test_dn_bracket_examples():
    tree = b_regular(2, 3, horizon=60)
    rep = check_dn_bracket(tree, indicator(1.0, 0.0, 2.0), np.geomspace(1, 1e4, 6))
    assert rep.holds
    zero = check_dn_bracket(tree, indicator(0.0, 0.0, 1.0), [1.0, 10.0])
    assert all(r["dirichlet"] == 0 and r["neumann"] in (0, 1) for r in zero.rows)
    rec = check_dn_bracket(b_regular(2, 2.0, horizon=60), indicator(1.0, 0.0, 1.0), [1e-3, 1e-2])
    assert all(r["dirichlet"] == 0 and r["neumann"] == 1 for r in rec.rows)


@pytest.mark.parametrize("p,q,bounded", [(0.75, 1.5, False), (1.0, 0.75, True)])
def test_necessity_agrees(p, q, bounded):
    cfg = scenario_config("necessity", p=p, q=q, alpha_min=1e3, alpha_max=1e6, points=10)
    tree, V, _ = cfg.build()
    rep = check_necessity(tree, V, p, run_sweep(cfg))
    assert rep.empirical_bounded == bounded
    assert rep.quasinorm_finite == bounded
    assert rep.agree


def test_necessity_compact_support():
    tree = b_regular(2, 3, horizon=60)
    cfg = SweepConfig(TREE, INDICATOR, alpha_min=1e2, alpha_max=1e5, points=8, p=1.0)
    rep = check_necessity(tree, indicator(1.0, 0.0, 2.0), 1.0, run_sweep(cfg))
    assert rep.empirical_bounded and rep.quasinorm_finite and rep.agree


def test_necessity_needs_dimension_not_two():
    tree = b_regular(2, 2.0, horizon=60)
    cfg = SweepConfig(TREE, INDICATOR, alpha_min=1.0, alpha_max=10.0, points=5, p=1.0)
    with pytest.raises(InapplicableError):
        check_necessity(tree, eta_power_potential(tree, 1.0), 1.0, run_sweep(cfg))


def test_check_reports_failures():
    cfg = scenario_config("example-7-1", p=1.5, alpha_min=1e3, alpha_max=1e5, points=8)
    cfg.p = 0.75  # claim the wrong exponent for the same potential
    names = {o.name: o.passed for o in run_check(cfg)}
    assert names["slope"] is False
    with pytest.raises(DomainError):
        scenario_config("nope")
