import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from bfwsim.harness import (CSV_COLUMNS, SweepSpec, family_descriptor, fit_loglog, render_csv,
                            round_cap, sweep, two_leader_probe, write_outputs)


def csv_body(text: str) -> str:
    first, rest = text.split("\n", 1)
    assert first.startswith("# bfwsim sweep schema=")
    return rest


def test_round_caps():
    assert round_cap(64, 63, "uniform") == 50 * 63 * 63 * 6
    assert round_cap(64, 63, "diameter_tuned") == 50 * 63 * 6
    assert round_cap(2, 1, "uniform") == 50
    assert round_cap(1, 0, "uniform") == 50
    assert round_cap(9, 4, "uniform", multiplier=2) == 2 * 16 * 4


def test_family_descriptors():
    assert family_descriptor("path", 8, 0) == "path:8"
    assert family_descriptor("grid", 16, 0) == "grid:4x4"
    assert family_descriptor("tree", 20, 3) == family_descriptor("tree", 20, 3)
    assert family_descriptor("gnp:0.2", 20, 3).startswith("gnp:20:0.2:")
    for bad in [("grid", 10), ("gnp", 10), ("star", 5)]:
        with pytest.raises(ValueError):
            family_descriptor(bad[0], bad[1], 0)


@pytest.mark.parametrize("kw", [dict(sizes=(16, 8)), dict(sizes=()), dict(trials=0),
                                dict(cap_multiplier=0.5), dict(mode="x"), dict(p=1.0)])
def test_sweep_spec_validation(kw):
    base = dict(family="path", sizes=(8, 16))
    base.update(kw)
    with pytest.raises(ValueError):
        SweepSpec(**base)


@settings(max_examples=50)
@given(slope=st.floats(-3, 3), intercept=st.floats(-2, 2),
       noise=st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=5))
def test_loglog_fit_matches_linregress(slope, intercept, noise):
    x = np.array([4.0, 8, 16, 32, 64])
    y = np.exp(intercept + slope * np.log(x) + np.array(noise))
    fit = fit_loglog(zip(x, y))
    ref = sps.linregress(np.log(x), np.log(y))
    assert fit.slope == pytest.approx(ref.slope, abs=1e-9)
    assert fit.intercept == pytest.approx(ref.intercept, abs=1e-9)
    # linregress derives stderr through r and loses precision on exact fits
    assert fit.stderr == pytest.approx(ref.stderr, rel=1e-6, abs=1e-7)
    assert fit.ci95[0] <= fit.slope <= fit.ci95[1]


def test_loglog_fit_rejects_bad_points():
    with pytest.raises(ValueError):
        fit_loglog([(1, 2), (2, 3)])
    with pytest.raises(ValueError):
        fit_loglog([(1, 2), (2, 0), (3, 4)])
    with pytest.raises(ValueError):
        fit_loglog([(2, 1), (2, 2), (2, 3)])


def test_sweep_records_and_csv():
    res = sweep(SweepSpec("cycle", (6, 12, 24), trials=6, seed=3))
    assert len(res.records) == 18
    rows = list(csv.reader(io.StringIO(csv_body(res.csv_text))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 19
    assert {r.seed for r in res.records} == {int(row[6]) for row in rows[1:]}
    assert len({r.seed for r in res.records}) == 18
    assert res.nonconverged == 0 and res.fit is not None
    assert [s.D for s in res.summaries] == [3, 6, 12]


def test_sweep_is_reproducible_across_worker_counts():
    spec = dict(family="tree", sizes=(8, 16, 32), trials=8, seed=21)
    one = sweep(SweepSpec(**spec, threads=1))
    two = sweep(SweepSpec(**spec, threads=2))
    assert csv_body(one.csv_text) == csv_body(two.csv_text)
    assert csv_body(render_csv(one.records, "x")) == csv_body(one.csv_text)


def test_nonconvergence_is_reported():
    res = sweep(SweepSpec("clique", (32, 64), trials=10, seed=0, cap_multiplier=1))
    assert res.nonconverged > 0
    capped = [r for r in res.records if not r.converged]
    assert all(r.convergence_round is None and r.rounds_executed == round_cap(r.n, 1, "uniform", 1)
               for r in capped)
    assert res.summary_json()["nonconverged"] == res.nonconverged


def test_tuned_mode_uses_diameter():
    res = sweep(SweepSpec("path", (8, 16, 32), mode="diameter_tuned", trials=4, seed=1))
    assert [r.p for r in res.records[::4]] == [1 / 8, 1 / 16, 1 / 32]
    assert all(r.p_mode == "diameter_tuned" for r in res.records)


def test_audited_sweep_is_clean():
    res = sweep(SweepSpec("grid", (9, 16), trials=3, seed=2, audit=True))
    assert res.audit_failures == []


def test_outputs_written(tmp_path):
    res = sweep(SweepSpec("path", (4, 8, 16), trials=3, seed=0))
    out = tmp_path / "sub" / "sweep.csv"
    json_path = write_outputs(res, str(out))
    assert out.read_text() == res.csv_text
    summary = json.loads(open(json_path).read())
    assert summary["schema"] == 1 and len(summary["sizes"]) == 3


def test_two_leader_probe():
    res = two_leader_probe([1, 2, 4, 8], trials=30, seed=0)
    assert [s.D for s in res.summaries] == [1, 2, 4, 8]
    assert all(s.nonconverged == 0 for s in res.summaries)
    meds = [s.median for s in res.summaries]
    assert meds == sorted(meds)
    assert res.fit is not None and res.to_json()["D"] == [1, 2, 4, 8]
    with pytest.raises(ValueError):
        two_leader_probe([0, 2], trials=2, seed=0)
