import json
import math

import numpy as np
import pytest

from signorini_hom import study
from signorini_hom.config import SourceExpression
from signorini_hom.study import COLUMNS, StudyPlan, regime_of, regime_limit, run_study
from signorini_hom.vi import ConvergenceError

from conftest import wave


def small_plan(**kw):
    base = dict(gammas=[-2.0, 0.0], epsilons=[0.25, 0.125], source=SourceExpression("10*sin(2*pi*x)*sin(pi*y)"),
                homog_resolution=32, n_directions=16)
    base.update(kw)
    return StudyPlan(**base)


@pytest.mark.parametrize("gamma, regime", [(-2, "whole"), (-1, "vi"), (-1.0000001, "whole"),
                                           (-0.9999999, "perforated"), (0.999, "perforated"), (1, "obstacle")])
def test_regime_of(gamma, regime):
    assert regime_of(gamma) == regime


def test_regime_of_rejects_above_one():
    with pytest.raises(ValueError):
        regime_of(1.0000001)


def test_plan_validation():
    with pytest.raises(ValueError):
        small_plan(gammas=[2.0])
    with pytest.raises(ValueError):
        small_plan(epsilons=[0.3])
    with pytest.raises(ValueError):
        small_plan(window=1 / 8, epsilons=[0.25])
    with pytest.raises(ValueError):
        small_plan(homog_resolution=30)


def test_zero_source_rates_undefined():
    rep = run_study(small_plan(source=SourceExpression("0")))
    for row in rep.rows:
        assert all(row[m] == 0.0 for m in study.METRICS)
    for per in rep.rates.values():
        for vals in per.values():
            assert all(v["rate"] is None and v["flag"] == "undefined" for v in vals)


@pytest.fixture(scope="module")
def report():
    return run_study(small_plan(gammas=[-2.0, -1.0, 0.0, 1.0]))


def test_report_shape(report):
    text = report.csv_text()
    lines = text.splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert len(lines) == 1 + 8
    keys = [(r["gamma"], r["epsilon"]) for r in report.rows]
    assert keys == [(g, e) for g in (-2.0, -1.0, 0.0, 1.0) for e in (0.25, 0.125)]
    assert [r["regime"] for r in report.rows[::2]] == ["whole", "vi", "perforated", "obstacle"]
    assert not report.failed and not report.interrupted


def test_report_rates(report):
    for g in (-2.0, 0.0):
        e = report.column(g, "weak_u1")
        rate = report.rates[str(g)]["weak_u1"][0]
        assert rate["flag"] == "ok" and math.isclose(rate["rate"], math.log2(e[0] / e[1]))


def test_report_json(report):
    d = json.loads(report.to_json())
    assert {"plan", "environment", "rates", "row_diagnostics"} <= set(d)
    assert d["plan"]["gammas"] == [-2.0, -1.0, 0.0, 1.0]
    assert {"numpy", "scipy", "numba", "numba_kernels"} <= set(d["environment"])
    assert all("jump_bound_ratio" in x for x in d["row_diagnostics"])


def test_rows_satisfy_complementarity(report):
    for r in report.rows:
        assert r["compl_residual"] <= 1e-8 and r["energy"] > 0


def test_deterministic_csv():
    a = run_study(small_plan()).csv_text()
    b = run_study(small_plan()).csv_text()
    assert a == b


def test_parallel_matches_serial():
    plan = small_plan()
    assert run_study(plan, jobs=2).csv_text() == run_study(plan).csv_text()


def test_failure_isolation(monkeypatch):
    original = study.solve_epsilon

    def flaky(spec, mesh, **kw):
        if spec.gamma == 0.0 and spec.epsilon == 0.125:
            raise ConvergenceError("forced failure")
        return original(spec, mesh, **kw)

    monkeypatch.setattr(study, "solve_epsilon", flaky)
    rep = run_study(small_plan())
    status = [r["iters"] for r in rep.rows]
    assert status[3] == "failed" and all(isinstance(s, int) for s in status[:3])
    assert math.isnan(rep.rows[3]["energy"])
    assert rep.csv_text().splitlines()[4].split(",")[3:5] == ["failed", "nan"]
    assert "forced failure" in rep.extras[3]["error"]
    assert rep.rates["0.0"]["energy"][0]["flag"] == "undefined"


def test_limit_failure_marks_regime(monkeypatch):
    original = study.regime_limit

    def broken(plan, regime):
        if regime == "whole":
            raise ConvergenceError("limit")
        return original(plan, regime)

    monkeypatch.setattr(study, "regime_limit", broken)
    rep = run_study(small_plan())
    assert [r["iters"] for r in rep.rows[:2]] == ["failed", "failed"]
    assert all(isinstance(r["iters"], int) for r in rep.rows[2:])


def test_interrupt_marks_remaining_rows():
    seen = []

    def stop_after_first(key):
        seen.append(key)
        if len(seen) == 1:
            raise KeyboardInterrupt

    rep = run_study(small_plan(), progress=stop_after_first)
    assert rep.interrupted
    assert isinstance(rep.rows[0]["iters"], int)
    assert [r["iters"] for r in rep.rows[1:]] == ["interrupted"] * 3


def test_cache_keys(monkeypatch):
    calls = []
    original = study.solve_epsilon

    def counting(spec, mesh, **kw):
        calls.append((spec.gamma, spec.epsilon))
        return original(spec, mesh, **kw)

    monkeypatch.setattr(study, "solve_epsilon", counting)
    plan = small_plan(gammas=[0.0, -2.0, 0.0], epsilons=[0.25])
    rep = run_study(plan)
    assert len(rep.rows) == 3 and len(calls) == 2
    assert rep.csv_text().splitlines()[1] == rep.csv_text().splitlines()[3]
    assert plan.spec_key(0.0, 0.25) != plan.spec_key(-2.0, 0.25)


def test_regime_consistency_perforated():
    a = regime_limit(small_plan(gammas=[-0.5]), "perforated")["law"].matrix
    b = regime_limit(small_plan(gammas=[0.5]), "perforated")["law"].matrix
    assert np.abs(a - b).max() <= 1e-12


def test_callable_source():
    rep = run_study(small_plan(gammas=[-2.0], epsilons=[0.25], source=wave))
    assert rep.rows[0]["energy"] > 0
