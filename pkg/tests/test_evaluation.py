import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from benchdata import report_from_cells
from mtunlearn import (
    EvalReport,
    UISInput,
    evaluate,
    mia_auc,
    partition,
    uis,
)
from mtunlearn.errors import ConfigError, DimensionError, EmptySubsetError
from mtunlearn.model import MultiTaskModel, zero_init_edit


def test_mia_auc_known_values():
    assert mia_auc([0.1, 0.2], [0.9, 0.8]) == 1.0  # members fit much better
    assert mia_auc([0.9, 0.8], [0.1, 0.2]) == 0.0
    assert mia_auc([0.5], [0.5]) == 0.5  # ties count one half


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 15),
    m=st.integers(1, 15),
    seed=st.integers(0, 10_000),
)
def test_mia_auc_matches_mann_whitney_oracle(n, m, seed):
    rng = np.random.default_rng(seed)
    members = np.round(rng.standard_normal(n), 1)  # rounding forces ties
    nonmembers = np.round(rng.standard_normal(m), 1)
    # score = -loss with members positive
    u, _ = scipy.stats.mannwhitneyu(-members, -nonmembers, alternative="two-sided")
    assert mia_auc(members, nonmembers) == pytest.approx(u / (n * m), abs=1e-12)


def test_mia_auc_empty_rejected():
    with pytest.raises(EmptySubsetError):
        mia_auc([], [1.0])


def make_report(n_tasks=2, offset=0.0):
    cells = [
        (0.8 + offset, 0.6 + offset, 0.7 + offset, 0.55)
        for _ in range(n_tasks)
    ]
    return report_from_cells(cells)


def test_evaluate_fills_every_cell(small_problem):
    ds = small_problem.dataset
    part = partition(ds, [0, 1], [0])
    model = MultiTaskModel(
        edit=zero_init_edit(np.zeros((5, 4)), rank=2, seed=0),
        heads=tuple(small_problem.heads),
    )
    rep = evaluate(model, ds, part, small_problem.val_dataset)
    rep.validate()
    for t in range(3):
        for s in ("ret", "unl", "val"):
            assert 0.0 < rep.metrics[(t, s)] <= 1.0
        assert 0.0 <= rep.mia_unl[t] <= 1.0
        assert 0.0 <= rep.mia_ret[t] <= 1.0


def test_report_json_round_trip():
    rep = make_report()
    text = rep.to_json()
    back = EvalReport.from_json(text)
    assert back.metrics == rep.metrics
    assert back.mia_unl == rep.mia_unl
    assert back.mia_ret == rep.mia_ret
    assert back.to_json() == text
    with pytest.raises(ConfigError):
        EvalReport.from_json(text.replace('"schema_version": 1', '"schema_version": 9'))


def test_report_csv_round_trip():
    rep = make_report()
    back = EvalReport.from_csv(rep.to_csv())
    for key, value in rep.metrics.items():
        assert back.metrics[key] == value
    assert back.mia_unl == rep.mia_unl


def test_report_validate_rejects_incomplete():
    rep = make_report()
    del rep.metrics[(1, "val")]
    with pytest.raises(ConfigError):
        rep.validate()
    rep2 = make_report()
    rep2.mia_unl[0] = 1.5
    with pytest.raises(ConfigError):
        rep2.validate()


def test_uis_zero_when_evaluated_equals_references():
    rep = make_report()
    inp = UISInput(
        evaluated=rep,
        original_ref=rep,
        retrain_ref=rep,
        setting="full",
    )
    assert uis(inp) == 0.0


def test_uis_full_setting_reference_assignment():
    """ret/val compare against original, unl/mia against retrain."""
    original = report_from_cells([(0.8, 0.7, 0.6, 0.9)] * 2)
    retrain = report_from_cells([(0.9, 0.5, 0.65, 0.5)] * 2)
    evaluated = report_from_cells([(0.8, 0.5, 0.6, 0.5)] * 2)
    inp = UISInput(
        evaluated=evaluated, original_ref=original, retrain_ref=retrain, setting="full"
    )
    assert uis(inp) == pytest.approx(0.0, abs=1e-12)
    # deviating only in ret is measured against the original value
    shifted = report_from_cells([(0.4, 0.5, 0.6, 0.5)] * 2)
    inp2 = UISInput(
        evaluated=shifted, original_ref=original, retrain_ref=retrain, setting="full"
    )
    assert uis(inp2) == pytest.approx(abs(0.4 - 0.8) / 0.8, rel=1e-12)


def test_uis_partial_setting_reference_assignment():
    """Forgotten task uses retrain for all four cells, retained tasks original."""
    original = report_from_cells([(0.8, 0.7, 0.6, 0.9), (0.7, 0.6, 0.5, 0.8)])
    retrain = report_from_cells([(0.9, 0.5, 0.65, 0.5), (0.75, 0.55, 0.52, 0.45)])
    matches = report_from_cells([(0.9, 0.5, 0.65, 0.5), (0.7, 0.6, 0.5, 0.8)])
    inp = UISInput(
        evaluated=matches,
        original_ref=original,
        retrain_ref=retrain,
        setting="partial",
        forget_tasks=frozenset({0}),
    )
    assert uis(inp) == pytest.approx(0.0, abs=1e-12)
    # per-cell deviations accumulate against the assigned reference
    off = report_from_cells([(0.45, 0.5, 0.65, 0.5), (0.7, 0.3, 0.5, 0.8)])
    inp2 = UISInput(
        evaluated=off,
        original_ref=original,
        retrain_ref=retrain,
        setting="partial",
        forget_tasks=frozenset({0}),
    )
    expected = (abs(0.45 - 0.9) / 0.9 + abs(0.3 - 0.6) / 0.6) / 2
    assert uis(inp2) == pytest.approx(expected, rel=1e-12)


def test_uis_partial_requires_forget_tasks():
    rep = make_report()
    inp = UISInput(
        evaluated=rep, original_ref=rep, retrain_ref=rep, setting="partial"
    )
    with pytest.raises(ConfigError):
        uis(inp)


def test_uis_rejects_mismatched_reports():
    inp = UISInput(
        evaluated=make_report(2),
        original_ref=make_report(3),
        retrain_ref=make_report(2),
        setting="full",
    )
    with pytest.raises(DimensionError):
        uis(inp)
