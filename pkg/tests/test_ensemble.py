import dataclasses
import inspect
import math

import numpy as np
import pytest

import oracles
from resetmt import ensemble
from resetmt.classifiers import ClassifierSpec
from resetmt.ensemble import (
    ESCALATION_STEP,
    EnsembleConfig,
    PseudoRanking,
    RescoringInput,
    build_features,
    evaluate_models,
    fold_assignment,
    initial_positive_set,
    knn_zero_feature,
    rescore,
    run_ensemble,
    select_side_info,
)
from resetmt.model import ConfigError, SeedSpec
from resetmt.reset import split_decoys
from resetmt.simgen import GeometricSimSpec, simulate_geometric
from resetmt.pvalue_adapter import pvalues_to_table

RF = ClassifierSpec("rf", rf_trees=30)
NN = ClassifierSpec("nn", nn_hidden=2, nn_maxiter=100)


def auc(scores, positive):
    scores = np.asarray(scores)
    pos, neg = scores[positive], scores[~positive]
    greater = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return greater / (pos.size * neg.size)


def test_config_validation():
    for kw in ({"K": 1}, {"r": 0}, {"min_positive": 0}, {"alpha0": 0}, {"alpha0": 1.5}, {"grid": ()}):
        with pytest.raises(ConfigError):
            EnsembleConfig(**kw)
    assert EnsembleConfig().K == 3 and EnsembleConfig().r == 10 and len(EnsembleConfig().grid) == 11


# --------------------------------------------------------------------------
# heuristic I


def test_knn_feature_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(5):
        A = rng.normal(size=(int(rng.integers(5, 60)), 2))
        Z = rng.normal(size=(int(rng.integers(0, 40)), 2))
        k = int(rng.integers(1, 25))
        got = knn_zero_feature(A, Z, k)
        want = oracles.knn_counts(A.tolist(), Z.tolist(), min(k, len(A) + len(Z) - 1))
        np.testing.assert_array_equal(got, want)


def test_knn_feature_large_instance():
    rng = np.random.default_rng(1)
    A = rng.uniform(size=(300, 2))
    Z = rng.uniform(size=(200, 2))
    np.testing.assert_array_equal(knn_zero_feature(A, Z, 20), oracles.knn_counts(A.tolist(), Z.tolist(), 20))


def test_knn_feature_edge_cases():
    A = np.random.default_rng(2).normal(size=(10, 2))
    assert np.all(knn_zero_feature(A, np.empty((0, 2))) == 0)
    assert np.all(knn_zero_feature(A, None) == 0)
    # one isolated nonzero point surrounded by 20 zero-scoring points
    Z = np.random.default_rng(3).normal(scale=0.01, size=(20, 2)) + 100
    assert knn_zero_feature(np.array([[100.0, 100.0]]), Z, 20)[0] == 20


# --------------------------------------------------------------------------
# heuristic II


def _screen_input(x, rng, n=200):
    pl = np.where(rng.random(n) < 0.5, 1, -1)
    w = rng.exponential(size=n)
    return RescoringInput(pl, w, x(w, pl)[:, None], c0=0.5, s=0.5)


def test_noise_columns_retained_at_nominal_rate():
    rng = np.random.default_rng(4)
    trials = 10_000
    kept = sum(select_side_info(_screen_input(lambda w, pl: rng.random(w.size), rng)).size for _ in range(trials))
    assert abs(kept / trials - 0.01) <= 0.005


def test_perfect_signal_always_retained():
    rng = np.random.default_rng(5)
    kept = [select_side_info(_screen_input(lambda w, pl: w * pl, rng)).size for _ in range(100)]
    assert np.mean(kept) == 1.0


def test_no_side_info_columns():
    inp = RescoringInput([1, -1, 1], [1.0, 2.0, 3.0], np.empty((3, 0)), c0=0.5, s=0.5)
    assert select_side_info(inp).size == 0
    assert build_features(inp, EnsembleConfig()).names == ("W",)


def test_feature_names_and_knn_column():
    rng = np.random.default_rng(6)
    n = 300
    pl = np.where(rng.random(n) < 0.5, 1, -1)
    w = rng.exponential(size=n)
    x = np.column_stack([w * pl, rng.random(n)])
    inp = RescoringInput(pl, w, x, c0=0.5, s=0.5, zero_side_info=rng.random((50, 2)))
    fs = build_features(inp, EnsembleConfig())
    assert fs.names[0] == "W" and "x0" in fs.names and fs.names[-1] == "knn_zero"
    assert fs.matrix.shape == (n, len(fs.names))


# --------------------------------------------------------------------------
# heuristic III


def _scores_with_clean_separation(rng, n_targets=120, n_decoys=60):
    pl = np.array([1] * n_targets + [-1] * n_decoys)
    w = np.concatenate([rng.uniform(5, 10, n_targets), rng.uniform(0, 4, n_decoys)])
    # a few decoys mixed into the target range
    w[n_targets : n_targets + 5] = rng.uniform(5, 10, 5)
    return pl, w


def test_positive_set_without_decoys_is_all_targets():
    rng = np.random.default_rng(7)
    inp = RescoringInput(np.ones(80, dtype=int), rng.random(80), np.empty((80, 0)), c0=0.5, s=0.5)
    fs = build_features(inp, EnsembleConfig())
    pos = initial_positive_set(inp, fs, EnsembleConfig(), 0.1, rng)
    np.testing.assert_array_equal(pos, np.arange(80))


def test_positive_set_is_seqstep_prefix():
    rng = np.random.default_rng(8)
    pl, w = _scores_with_clean_separation(rng)
    inp = RescoringInput(pl, w, np.empty((pl.size, 0)), c0=0.5, s=0.5)
    config = EnsembleConfig(alpha0=0.5, min_positive=1)
    pos = initial_positive_set(inp, build_features(inp, config), config, 0.1, rng)
    order = np.argsort(-w)
    c = ensemble.ensemble_c(0.5, 0.5)
    k, n_found = oracles.seqstep_count(list(pl[order]), 0.5, c, plus=False)
    assert pos.size == n_found
    np.testing.assert_array_equal(np.sort(pos), np.sort([i for i in order[:k] if pl[i] == 1]))


@pytest.mark.parametrize("alpha0, min_positive", [(0.05, 50), (0.5, 500), (0.01, 100), (0.3, 1)])
def test_escalation_postcondition(alpha0, min_positive):
    rng = np.random.default_rng(9)
    pl = np.where(rng.random(400) < 0.6, 1, -1)
    ranking = PseudoRanking(pl, rng.random(400), 0.75, rng)
    found, level = ranking.escalate(alpha0, min_positive)
    assert found.size >= min(min_positive, int(np.sum(pl == 1)))
    assert np.all(pl[found] == 1)
    steps = round((level - alpha0) / ESCALATION_STEP)
    assert steps <= math.ceil((1 - alpha0) / ESCALATION_STEP) + 1


# --------------------------------------------------------------------------
# evaluation and rescoring


def test_fold_partition():
    rng = np.random.default_rng(10)
    for n, K in [(10, 3), (100, 3), (7, 2), (5, 5)]:
        folds = fold_assignment(n, K, rng)
        sizes = np.bincount(folds, minlength=K)
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 1


def _separable_input(rng, n_targets=150, n_decoys=90):
    pl = np.array([1] * n_targets + [-1] * n_decoys)
    w = np.where(pl == 1, rng.uniform(5, 10, pl.size), rng.uniform(0, 4, pl.size))
    return RescoringInput(pl, w, np.empty((pl.size, 0)), c0=0.5, s=0.5)


def test_separable_case_counts():
    rng = np.random.default_rng(11)
    inp = _separable_input(rng)
    config = EnsembleConfig(K=3, r=2, grid=(RF, NN))
    positive = inp.pseudo_targets
    ev = evaluate_models(inp, inp.scores[:, None], positive, config, 0.1, rng)
    # each fold's pseudo targets all rank above its decoys, so SeqStep passes
    # through every pseudo target in every test fold
    np.testing.assert_array_equal(ev.counts, [config.r * positive.size] * 2)


def test_rescore_is_mean_over_repetitions():
    rng = np.random.default_rng(12)
    inp = _separable_input(rng)
    config = EnsembleConfig(K=2, r=3, grid=(RF,))
    ev = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, config, 0.1, rng)
    assert ev.scores.shape == (1, 3, inp.n)
    manual = sum(ev.scores[0, rep] for rep in range(3)) / 3
    np.testing.assert_allclose(rescore(ev), manual, atol=1e-12)
    assert ev.winner == 0


def test_rescore_single_repetition_is_raw_output():
    rng = np.random.default_rng(13)
    inp = _separable_input(rng)
    config = EnsembleConfig(K=2, r=1, grid=(NN,))
    ev = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, config, 0.1, rng)
    np.testing.assert_array_equal(rescore(ev), ev.scores[0, 0])


def test_evaluation_is_deterministic():
    inp = _separable_input(np.random.default_rng(14))
    config = EnsembleConfig(K=3, r=2, grid=(RF, NN, ClassifierSpec("spline")))
    a = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, config, 0.1, np.random.default_rng(1))
    b = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, config, 0.1, np.random.default_rng(1))
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_parallel_matches_serial():
    inp = _separable_input(np.random.default_rng(15))
    serial = EnsembleConfig(K=3, r=2, grid=(RF, NN))
    par = dataclasses.replace(serial, n_jobs=2)
    a = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, serial, 0.1, np.random.default_rng(1))
    b = evaluate_models(inp, inp.scores[:, None], inp.pseudo_targets, par, 0.1, np.random.default_rng(1))
    np.testing.assert_array_equal(a.scores, b.scores)


# --------------------------------------------------------------------------
# the driver


def test_label_isolation_seam():
    # the engine's only input type carries pseudo labels, never original labels
    fields = {f.name for f in dataclasses.fields(RescoringInput)}
    assert "labels" not in fields and "pseudo_labels" in fields
    params = inspect.signature(run_ensemble).parameters
    assert list(params) == ["inp", "config", "alpha", "seeds"]


def test_grid_of_one_selects_that_model():
    inp = _separable_input(np.random.default_rng(17))
    res = run_ensemble(inp, EnsembleConfig(K=2, r=1, grid=(NN,), min_positive=10), 0.1, SeedSpec(0))
    assert res.winners == (NN.name, NN.name)
    assert all(size >= min(10, inp.pseudo_targets.size) for size in res.positive_sizes)


def test_no_training_decoys_keeps_scores():
    w = np.arange(20, dtype=float)
    inp = RescoringInput(np.ones(20, dtype=int), w, np.empty((20, 0)), 0.5, 0.5)
    np.testing.assert_array_equal(run_ensemble(inp, EnsembleConfig(), 0.1, SeedSpec(0)).rescored, w)


def test_run_ensemble_deterministic():
    inp = _separable_input(np.random.default_rng(18))
    config = EnsembleConfig(K=2, r=2, grid=(RF, NN), min_positive=10)
    a = run_ensemble(inp, config, 0.1, SeedSpec(5)).rescored
    b = run_ensemble(inp, config, 0.1, SeedSpec(5)).rescored
    np.testing.assert_array_equal(a, b)


@pytest.mark.slow
def test_rescoring_improves_ranking_on_geometric_simulation():
    gains = []
    for run in range(20):
        seeds = SeedSpec(run)
        pt, truth = simulate_geometric(GeometricSimSpec(scenario="circle_center"), seeds.stream("simulation"))
        table, kept = pvalues_to_table(pt)
        false_null = truth.false_null[kept]
        pseudo = split_decoys(table.labels, 0.5, seeds.stream("decoy_split"))
        inp = RescoringInput(pseudo.pseudo_labels, table.scores, table.side_info, 0.5, 0.5)
        res = run_ensemble(inp, EnsembleConfig(), 0.1, seeds.child(0))
        gains.append(auc(res.rescored, false_null) - auc(table.scores, false_null))
    assert np.mean(gains) > 0
