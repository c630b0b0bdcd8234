import numpy as np
import pytest

import rrrann


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    return rng.standard_normal((2000, 16), dtype=np.float32), rng.standard_normal((50, 16), dtype=np.float32)


def test_full_probe_is_exact(data):
    corpus, queries = data
    index = rrrann.Index.build(corpus, clusters=20, rank=8, seed=1)
    assert len(index) == 2000
    assert index.num_clusters == 20
    ids, scores = index.query_batch(queries, k=10, w=20, t=2000)
    truth = rrrann.brute_force_knn(corpus, queries, 10)
    assert rrrann.recall_at_k(ids, truth, 10) == 1.0
    assert np.all(np.diff(scores, axis=1) >= 0)


def test_single_query_matches_batch(data):
    corpus, queries = data
    index = rrrann.Index.build(corpus, metric="ip", clusters=10, rank=4, seed=2)
    ids, scores = index.query(queries[3], k=5, w=3, t=40)
    batch_ids, batch_scores = index.query_batch(queries, k=5, w=3, t=40)
    np.testing.assert_array_equal(ids, batch_ids[3])
    np.testing.assert_array_equal(scores, batch_scores[3])


def test_save_load_round_trip(data, tmp_path):
    corpus, queries = data
    index = rrrann.Index.build(corpus, clusters=10, rank=4, reduced_dim=8, seed=3)
    path = str(tmp_path / "a.idx")
    index.save(path)
    loaded = rrrann.Index.load(path)
    assert loaded.to_bytes() == index.to_bytes()
    assert rrrann.Index.from_bytes(index.to_bytes()).projected_dim == 8
    a = index.query_batch(queries, k=10, w=4, t=50)
    b = loaded.query_batch(queries, k=10, w=4, t=50)
    np.testing.assert_array_equal(a[0], b[0])
    assert index.footprint()["code_bytes"] > 0


def test_errors_carry_category(data, tmp_path):
    corpus, queries = data
    with pytest.raises(rrrann.ParameterError):
        rrrann.Index.build(corpus, clusters=10, rank=99)
    with pytest.raises(rrrann.ParameterError):
        rrrann.Index.build(corpus, metric="hamming")
    index = rrrann.Index.build(corpus, clusters=10, rank=4)
    with pytest.raises(rrrann.ShapeError):
        index.query(np.zeros(3, dtype=np.float32))
    with pytest.raises(rrrann.DataError):
        rrrann.Index.load(str(tmp_path / "missing.idx"))
    with pytest.raises(rrrann.FormatError):
        rrrann.Index.from_bytes(b"RRRANN01 nope")
    assert issubclass(rrrann.FormatError, rrrann.RrrannError)
