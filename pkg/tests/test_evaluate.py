import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridsindy.errors import DataError
from gridsindy.evaluate import (AggregateReport, EvaluationRecord, Pipeline, active_features,
                                aggregate, evaluate_batch, evaluate_chunk, fit_chunk,
                                prepare_chunk)
from gridsindy.ingest import FrequencyChunk
from gridsindy.library import LibrarySpec
from gridsindy.preprocess import SmoothingConfig
from gridsindy.regression import CoefficientMatrix, STLSQConfig, stlsq

import batches

P2_STLSQ = Pipeline(None, LibrarySpec.from_name("p2"), STLSQConfig(1e-3, 1e-6))
# over-rich library with almost no sparsity pressure
P3_LOOSE = Pipeline(None, LibrarySpec.from_name("p3"), STLSQConfig(1e-10, 1e-3))


def rec(rmse, stable=True, n_active=2, cid="c"):
    return EvaluationRecord(cid, stable, rmse if stable else None, n_active)


# -- rmse -------------------------------------------------------------------------

def test_rmse_examples():
    from gridsindy.evaluate import rmse
    x = np.linspace(-1, 1, 17)
    assert rmse(x, x) == 0.0
    assert rmse(x + 0.01, x) == pytest.approx(0.01, rel=1e-12)
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), rel=1e-15)
    assert rmse([0, 0], [3, 4]) == pytest.approx(3.5355, abs=1e-4)
    with pytest.raises(DataError):
        rmse([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        rmse([], [])


# -- active_features -------------------------------------------------------------------

def test_active_features_examples():
    assert active_features(CoefficientMatrix(np.zeros(5), list("abcde")), 1e-9).tolist() == [0]
    cm = CoefficientMatrix([1e-7, 1e-5, 0.3], ["a", "b", "c"])
    assert active_features(cm, 1e-6).tolist() == [2]
    # the threshold itself counts as active
    assert active_features(cm, 1e-5).tolist() == [2]
    with pytest.raises(DataError):
        active_features(cm, -1.0)


@pytest.mark.parametrize("k", range(5))
def test_active_features_match_stlsq_mask(k):
    prep = prepare_chunk(batches.clean_batch()[k], None, LibrarySpec.from_name("p2"))
    cm = stlsq(prep.features, prep.omega_dot, STLSQConfig(1e-3, 1e-6))
    mask = cm.diagnostics["active_mask"][:, 0]
    names = prep.features.names
    # the intercept is never thresholded, so compare on the thresholded columns
    penal = np.array([n != "1" for n in names])
    assert active_features(cm, 1e-3).tolist() == [int(mask[penal].sum())]
    assert int((np.abs(cm.values[:, 0]) >= 1e-6).sum()) == int(
        (mask & ((np.abs(cm.values[:, 0]) >= 1e-6) | penal)).sum())


# -- aggregate ------------------------------------------------------------------------

def test_aggregate_example():
    recs = [rec(0.01), rec(0.02), rec(0.03), rec(None, stable=False)]
    a = aggregate(recs)
    assert a.mean_stable_rmse == pytest.approx(0.02, rel=1e-15)
    assert a.stability_fraction == 0.75
    assert a.n_chunks == 4 and a.n_stable == 3
    assert a.rmse_std == pytest.approx(np.std([0.01, 0.02, 0.03]), rel=1e-12)


def test_all_unstable():
    a = aggregate([rec(None, stable=False), rec(None, stable=False)])
    assert a.stability_fraction == 0 and a.mean_stable_rmse is None and a.rmse_std is None
    assert a.to_dict()["mean_stable_rmse"] is None


def test_aggregate_empty():
    with pytest.raises(DataError):
        aggregate([])


def test_negative_rmse_rejected():
    with pytest.raises(DataError):
        EvaluationRecord("c", True, -1.0, 0)


def test_aggregate_thousand_records_brute_force(rng):
    n = 1000
    stable = rng.random(n) < 0.7
    vals = rng.lognormal(-4, 1, n)
    recs = [EvaluationRecord(f"c{i}", bool(s), float(v) if s else None, int(k))
            for i, (s, v, k) in enumerate(zip(stable, vals, rng.integers(0, 20, n)))]
    a = aggregate(recs)
    good = [r.rmse for r in recs if r.stable]
    total = math.fsum(good)
    mean = total / len(good)
    var = math.fsum((x - mean) ** 2 for x in good) / len(good)
    assert abs(a.mean_stable_rmse - mean) < 1e-12
    assert abs(a.rmse_std - math.sqrt(var)) < 1e-12
    assert a.stability_fraction == len(good) / n
    assert a.mean_active_features == pytest.approx(math.fsum(r.n_active for r in recs) / n,
                                                   abs=1e-12)


records = st.lists(st.tuples(st.booleans(), st.floats(0, 10), st.integers(0, 20)),
                   min_size=1, max_size=60)


@given(records, st.randoms(use_true_random=False))
def test_aggregate_permutation_invariant(rows, rnd):
    recs = [EvaluationRecord(str(i), s, v if s else None, k) for i, (s, v, k) in enumerate(rows)]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    assert aggregate(recs) == aggregate(shuffled)


@given(records)
def test_stability_fraction_is_exact_ratio(rows):
    recs = [EvaluationRecord(str(i), s, v if s else None, k) for i, (s, v, k) in enumerate(rows)]
    a = aggregate(recs)
    assert 0 <= a.stability_fraction <= 1
    k = sum(s for s, _, _ in rows)
    assert a.stability_fraction == k / len(rows)
    assert Fraction(a.stability_fraction).limit_denominator(len(rows)) == Fraction(k, len(rows))


def test_report_dict_keys():
    d = aggregate([rec(0.1)]).to_dict()
    assert set(d) == {f for f in AggregateReport.__dataclass_fields__}


# -- evaluate_chunk ------------------------------------------------------------------------

def test_noiseless_linear_chunk():
    r = evaluate_chunk(batches.clean_batch()[0], P2_STLSQ)
    assert r.stable and r.rmse < 1e-3
    assert r.n_active <= 10


def test_chunk_fit_internals():
    f = fit_chunk(batches.clean_batch()[1], P2_STLSQ)
    assert len(f.simulation.trajectory.omega) == len(f.omega_raw)
    assert f.simulation.trajectory.omega[0] == f.omega_smooth[0]
    assert f.record.rmse == pytest.approx(
        np.sqrt(np.mean((f.simulation.trajectory.omega - f.omega_raw) ** 2)), rel=1e-15)


def test_over_rich_library_has_divergent_chunks():
    a = aggregate(evaluate_batch(batches.noisy_batch(), P3_LOOSE))
    assert a.stability_fraction < 1
    assert a.n_stable > 0


def test_evaluate_deterministic():
    c = batches.noisy_batch()[3]
    assert evaluate_chunk(c, P3_LOOSE) == evaluate_chunk(c, P3_LOOSE)


def test_parallel_batch_matches_serial():
    chunks = batches.noisy_batch()[:6]
    assert evaluate_batch(chunks, P3_LOOSE, jobs=2) == evaluate_batch(chunks, P3_LOOSE)


def test_larger_bound_only_helps():
    chunks = batches.noisy_batch()
    tight = Pipeline(None, P3_LOOSE.library, P3_LOOSE.optimizer, divergence_factor=5.0,
                     divergence_floor=0.5)
    lo = evaluate_batch(chunks, tight)
    hi = evaluate_batch(chunks, P3_LOOSE)
    assert sum(r.stable for r in lo) < sum(r.stable for r in hi)
    for a, b in zip(lo, hi):
        if a.stable:
            assert b.stable and a.rmse == b.rmse


def test_errors_carry_chunk_id():
    flat = FrequencyChunk("flat-chunk", 0.0, np.full(50, 50.0), 50.0)
    pipe = Pipeline(SmoothingConfig(1.0), LibrarySpec.from_name("p2"), STLSQConfig(0.0, 0.0))
    with pytest.raises(DataError, match="flat-chunk"):
        evaluate_chunk(flat, pipe)


def test_pipeline_dict():
    d = P2_STLSQ.to_dict()
    assert d["smoothing"] is None and d["library"]["poly_degree"] == 2
    assert d["optimizer"]["type"] == "stlsq"
