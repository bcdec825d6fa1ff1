import logging
import math

import numpy as np
import pytest

from conftest import oracle_compare, random_dataset
from spp.data import Dataset, Hyperparams, null_reference
from spp.objective import LogisticLoss, SquaredLoss
from spp.path import (
    CVRecord,
    FoldPlan,
    PathGrid,
    cv_path,
    lambda_max,
    make_grid,
    path_2d,
    select_hyperparams,
    validation_metric,
)
from spp.solver import fit

KAPPAS = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)


def test_lambda_max_tiny(tiny):
    # centered y = (1,-1,0); |x^T y| is 1 for {a}, {b} and {a,b}
    assert lambda_max(tiny, SquaredLoss(), 3) == pytest.approx(1.0)


def test_lambda_max_constant_labels(caplog):
    ds = Dataset(((0,), (0, 1), (1,)), np.array([2.0, 2.0, 2.0]), "itemset", "regression", 2)
    with caplog.at_level(logging.WARNING, logger="spp"):
        assert lambda_max(ds, SquaredLoss(), 3) == 0.0
    assert "lambda_max = 0" in caplog.text


def test_lambda_max_matches_brute_force(rng):
    from spp.oracle import dense_null_lambda_max, dense_problem

    for kind in ("itemset", "sequence"):
        for task, loss in (("regression", SquaredLoss()), ("classification", LogisticLoss())):
            ds = random_dataset(rng, 15, 5, kind, task)
            ref = dense_null_lambda_max(dense_problem(ds, 1.0, 0.0, 3, loss.kind))
            assert lambda_max(ds, loss, 3) == pytest.approx(ref, rel=1e-12)


def test_make_grid():
    g = make_grid(2.0, 5, KAPPAS, 0.01)
    assert g.lambdas[0] == 2.0 and g.lambdas[-1] == pytest.approx(0.02)
    ratios = np.array(g.lambdas[1:]) / np.array(g.lambdas[:-1])
    assert np.allclose(ratios, 0.01 ** 0.25)
    assert g.kappas == KAPPAS
    for K in (5, 10, 20, 40):
        assert len(make_grid(1.0, K).lambdas) == K
    for bad in [dict(count=1), dict(ratio=0.0), dict(ratio=1.0)]:
        with pytest.raises(ValueError):
            make_grid(1.0, **{"count": 5, **bad})
    with pytest.raises(ValueError):
        make_grid(0.0, 5)
    with pytest.raises(ValueError):
        PathGrid((1.0, 0.5), (0.1, 1.0))
    with pytest.raises(ValueError):
        PathGrid((1.0, 1.0), (0.0,))


@pytest.fixture
def path_fixture():
    rng = np.random.default_rng(31)
    ds = random_dataset(rng, 20, 5, "sequence", "regression")
    loss = SquaredLoss()
    lm = lambda_max(ds, loss, 3)
    grid = make_grid(lm, 5, KAPPAS)
    return ds, loss, grid, lm


def test_path_visit_order_and_references(path_fixture, caplog):
    ds, loss, grid, lm = path_fixture
    with caplog.at_level(logging.INFO, logger="spp"):
        cells = path_2d(ds, loss, grid, Hyperparams(lm))
    assert len(cells) == 5 * 6
    assert list(cells) == [(k, kk) for k in range(5) for kk in range(6)]
    assert [c.order for c in cells.values()] == list(range(30))
    for (k, kk), c in cells.items():
        expect = ([(k - 1, kk)] if k else []) + ([(k, kk - 1)] if kk else [])
        assert list(c.ref_cells) == expect
        assert c.result.stats.n_refs == max(len(expect), 1)
        assert c.solution.gap < 1e-4
    assert cells[(0, 0)].solution.beta == {} and cells[(0, 0)].result.stats.coordinate_updates == 0
    assert len(cells[(1, 1)].ref_cells) == 2
    assert caplog.text.count("refs=2") == 4 * 5


def test_path_matches_oracle(path_fixture):
    ds, loss, grid, lm = path_fixture
    cells = path_2d(ds, loss, grid, Hyperparams(lm, epsilon=1e-9))
    for c in cells.values():
        status, detail, _ = oracle_compare(ds, loss, c.solution, c.lam, c.kappa, 3, 1e-9)
        assert status != "violation", (c.lam, c.kappa, detail)


def test_single_reference_mode(path_fixture):
    ds, loss, grid, lm = path_fixture
    cells = path_2d(ds, loss, grid, Hyperparams(lm), max_refs=1)
    assert all(len(c.ref_cells) <= 1 for c in cells.values())


def test_fold_plans():
    p = FoldPlan.loo(10)
    assert len(p.subsets) == 11 and p.subsets[0] == tuple(range(10))
    assert [p.held_out(k) for k in range(1, 11)] == [[i] for i in range(10)]
    k = FoldPlan.kfold(10, 3, seed=1)
    held = sorted(i for f in range(1, 4) for i in k.held_out(f))
    assert held == list(range(10))
    with pytest.raises(ValueError):
        FoldPlan(((1, 0),))
    with pytest.raises(ValueError):
        FoldPlan((tuple(range(3)), (0, 1, 2)))


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_cv_loo_structure(task, caplog):
    rng = np.random.default_rng(5)
    loss = SquaredLoss() if task == "regression" else LogisticLoss()
    ds = random_dataset(rng, 10, 5, "itemset", task)
    lm = lambda_max(ds, loss, 3)
    grid = make_grid(lm, 4)
    plan = FoldPlan.loo(10)
    recs = cv_path(ds, loss, plan, grid.lambdas, 0.1, Hyperparams(lm, 0.1))
    assert [(r.fold, r.lam_index) for r in recs] == [(f, k) for f in range(11) for k in range(4)]
    for r in recs:
        expect = ([(0, r.lam_index)] if r.fold else []) + ([(r.fold, r.lam_index - 1)] if r.lam_index else [])
        assert list(r.cell.ref_cells) == expect
        assert r.cell.result.stats.n_refs == max(len(expect), 1)
        assert r.cell.solution.gap < 1e-4
        assert math.isnan(r.metric) == (r.fold == 0)
        if r.fold:
            sub = ds.subset(plan.subsets[r.fold])
            # metric recomputed from scratch on the held-out instance
            z = r.cell.solution.beta0 + sum(
                b for p, b in r.cell.solution.beta.items() if p.occurs_in(ds.structures[r.fold - 1])
            )
            y = ds.labels[r.fold - 1]
            ref = (y - z) ** 2 if task == "regression" else float((1.0 if z >= 0 else -1.0) != y)
            assert r.metric == pytest.approx(ref)
            if not r.cell.solution.beta:
                b0 = loss.null_intercept(sub.labels)
                null = (y - b0) ** 2 if task == "regression" else float((1.0 if b0 >= 0 else -1.0) != y)
                assert r.metric == pytest.approx(null)


def test_cv_fold_solutions_match_oracle():
    rng = np.random.default_rng(6)
    loss = SquaredLoss()
    ds = random_dataset(rng, 10, 4, "sequence", "regression")
    lm = lambda_max(ds, loss, 3)
    plan = FoldPlan.loo(10)
    recs = cv_path(ds, loss, plan, make_grid(lm, 4).lambdas, 0.1, Hyperparams(lm, 0.1, epsilon=1e-9))
    for r in recs:
        sub = ds.subset(plan.subsets[r.fold])
        status, detail, _ = oracle_compare(sub, loss, r.cell.solution, r.lam, r.kappa, 3, 1e-9)
        assert status == "match", detail


def test_cv_threads_agree():
    rng = np.random.default_rng(7)
    loss = LogisticLoss()
    ds = random_dataset(rng, 10, 5, "sequence", "classification")
    lm = lambda_max(ds, loss, 3)
    lams = make_grid(lm, 4).lambdas
    a = cv_path(ds, loss, FoldPlan.loo(10), lams, 0.0, Hyperparams(lm), threads=1)
    b = cv_path(ds, loss, FoldPlan.loo(10), lams, 0.0, Hyperparams(lm), threads=3)
    assert [(r.fold, r.lam_index, r.metric) for r in a] == [(r.fold, r.lam_index, r.metric) for r in b]
    assert all(x.cell.solution.beta == y.cell.solution.beta for x, y in zip(a, b))


def _rec(fold, lam, kappa, metric):
    return CVRecord(fold, 0, lam, kappa, metric, None)


def test_select_single_candidate():
    assert select_hyperparams([_rec(1, 0.5, 0.1, 3.0)]) == (0.5, 0.1)


def test_select_ties_go_to_larger_lambda():
    recs = [_rec(f, lam, k, 1.0) for f in (1, 2) for lam in (1.0, 0.5, 0.1) for k in (0.0, 1.0)]
    assert select_hyperparams(recs) == (1.0, 0.0)


def test_select_three_fold_average():
    # fold-averaged: (1.0,0)=(4+2+3)/3=3, (0.5,0)=(1+5+1.5)/3=2.5, (0.5,1)=(2+2+2)/3=2
    table = {(1.0, 0.0): (4, 2, 3), (0.5, 0.0): (1, 5, 1.5), (0.5, 1.0): (2, 2, 2)}
    recs = [_rec(f + 1, lam, k, m) for (lam, k), ms in table.items() for f, m in enumerate(ms)]
    recs.append(_rec(0, 1.0, 0.0, math.nan))
    assert select_hyperparams(recs) == (0.5, 1.0)
    with pytest.raises(ValueError):
        select_hyperparams([_rec(0, 1.0, 0.0, math.nan)])


def test_validation_metric_null_model(tiny):
    sol = null_reference(3)
    sol.beta0 = 0.5
    assert validation_metric(tiny, sol, [0, 2]) == pytest.approx(((1 - 0.5) ** 2 + 0.25) / 2)
    assert math.isnan(validation_metric(tiny, sol, []))
