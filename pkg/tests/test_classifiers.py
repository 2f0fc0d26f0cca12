import numpy as np
import pytest

from eeprnet.classifiers import (
    ClassifierError,
    ScoreMatrix,
    cosine_distance,
    knn_score,
    load_pls,
    pls_train,
    score_probes,
    softmax_score,
    svm_train,
    zscore_apply,
    zscore_fit,
)


def _ols_pm1(x, labels, classes):
    y = np.where(labels[:, None] == classes[None], 1.0, -1.0)
    a = np.hstack([x, np.ones((len(x), 1))])
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    return sol[:-1], sol[-1]


def _krylov_pls(x, y, k):
    # PLS1 with K components = least squares restricted to the Krylov space of (X'X, X'y)
    xc, yc = x - x.mean(0), y - y.mean()
    s, sxx = xc.T @ yc, xc.T @ xc
    v = [s]
    for _ in range(k - 1):
        v.append(sxx @ v[-1])
    v = np.linalg.qr(np.stack(v, 1))[0]
    return v @ np.linalg.solve(v.T @ sxx @ v, v.T @ s)


def test_pls_full_rank_equals_ols(rng):
    x = rng.normal(size=(40, 6))
    labels = rng.integers(0, 3, 40)
    classes = np.arange(3)
    model = pls_train(x, labels, k=6)
    coef, icpt = _ols_pm1(x, labels, classes)
    np.testing.assert_allclose(model.coef, coef, atol=1e-9)
    np.testing.assert_allclose(model.intercept, icpt, atol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_pls_truncated_matches_krylov(rng, k):
    x = rng.normal(size=(30, 8))
    labels = rng.integers(0, 3, 30)
    model = pls_train(x, labels, k=k)
    for c in range(3):
        y = np.where(labels == c, 1.0, -1.0)
        np.testing.assert_allclose(model.coef[:, c], _krylov_pls(x, y, k), atol=1e-9)
    full = pls_train(x, labels, k=6)
    np.testing.assert_allclose(full.truncated(k).coef, model.coef, atol=1e-10)


def test_pls_duplicate_columns_and_early_stop(rng):
    base = rng.normal(size=(12, 2))
    x = np.hstack([base, base, base])  # rank 2
    labels = np.repeat([0, 1, 2], 4)
    model = pls_train(x, labels, k=5)
    assert np.isfinite(model.coef).all()
    pred = model.predict(x)
    ref_coef, ref_icpt = _ols_pm1(base, labels, np.arange(3))
    np.testing.assert_allclose(pred, base @ ref_coef + ref_icpt, atol=1e-8)


def test_pls_rejects_bad_k(rng):
    x = rng.normal(size=(5, 10))
    with pytest.raises(ClassifierError):
        pls_train(x, [0, 0, 1, 1, 2], k=5)
    with pytest.raises(ClassifierError):
        pls_train(x, [0] * 5, k=2)


def test_pls_save_load(tmp_path, rng):
    x = rng.normal(size=(20, 5))
    labels = rng.integers(0, 2, 20)
    model = pls_train(x, labels, k=3)
    stats = zscore_fit(x)
    from eeprnet.classifiers import save_pls

    save_pls(tmp_path / "p.palmw", model, stats)
    classes, coef, icpt, st = load_pls(tmp_path / "p.palmw")
    np.testing.assert_array_equal(classes, model.classes)
    np.testing.assert_allclose(coef, model.coef, rtol=1e-6)
    np.testing.assert_allclose(st.mean, stats.mean, rtol=1e-6)


def test_zscore_clamps_constant_dims(rng):
    x = np.hstack([rng.normal(size=(10, 2)), np.full((10, 1), 3.0)])
    stats = zscore_fit(x)
    z = zscore_apply(stats, x)
    assert stats.clamped.tolist() == [False, False, True]
    np.testing.assert_allclose(z[:, :2].mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(z[:, :2].std(0), 1, atol=1e-12)
    np.testing.assert_array_equal(z[:, 2], 0)
    with pytest.raises(ClassifierError):
        zscore_fit(x[:1])


def test_svm_separable_and_shrink(rng):
    centers = np.array([[4.0, 0], [-4.0, 0], [0, 4.0]])
    labels = np.repeat([0, 1, 2], 10)
    x = centers[labels] + rng.normal(scale=0.3, size=(30, 2))
    model = svm_train(x, labels)
    pred = model.classes[(x @ model.weight + model.bias).argmax(1)]
    assert (pred == labels).all()
    strong = svm_train(x, labels, reg=1e6, epochs=5)
    assert np.abs(strong.weight).max() < 1e-4


def test_cosine_distance_and_knn_scale_invariance(rng):
    g = rng.normal(size=(6, 4))
    labels = np.array([0, 0, 1, 1, 2, 2])
    p = rng.normal(size=(3, 4))
    d = cosine_distance(p, g)
    brute = np.array([[1 - a @ b / np.linalg.norm(a) / np.linalg.norm(b) for b in g] for a in p])
    np.testing.assert_allclose(d, brute, atol=1e-12)
    s1 = knn_score(g, labels, p).scores
    s2 = knn_score(g * 7.0, labels, p * 0.01).scores
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    zero = cosine_distance(np.zeros((1, 4)), g)
    np.testing.assert_allclose(zero, 1.0)


def test_softmax_rows_sum_to_one(rng):
    sm = softmax_score(rng.normal(size=(4, 3)) * 5, [10, 20, 30])
    np.testing.assert_allclose(sm.scores.sum(1), 1.0, atol=1e-12)
    with pytest.raises(ClassifierError):
        softmax_score(np.zeros((1, 3)), [10, 20, 30], gallery_classes=[10, 20])


def test_score_probes_dispatch(rng):
    g = rng.normal(size=(12, 5))
    labels = np.repeat([3, 1, 2], 4)
    p = g[[0, 4, 8]] + 0.01
    for clf in ("pls", "svm", "knn"):
        sm = score_probes(clf, g, labels, p)
        np.testing.assert_array_equal(sm.classes, [1, 2, 3])
        assert sm.scores.shape == (3, 3)
    logits = rng.normal(size=(3, 3))
    sm = score_probes("softmax", g, labels, p, logits, np.array([3, 1, 2]))
    np.testing.assert_array_equal(sm.classes, [1, 2, 3])
    np.testing.assert_allclose(sm.scores[:, 2], softmax_score(logits, [3, 1, 2]).scores[:, 0])
    with pytest.raises(ClassifierError):
        score_probes("lda", g, labels, p)


def test_score_matrix_rejects_nan(tmp_path):
    with pytest.raises(ClassifierError):
        ScoreMatrix(np.array([[np.nan, 1.0]]), np.array([0, 1]), "x")
    sm = ScoreMatrix(np.array([[0.5, 1.0]]), np.array([0, 1]), "x", ["a"])
    sm.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "probe_id,0,1"
