import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsehar.codebook import Codebook, init_codebook
from sparsehar.features import (
    ENGINEERED_NAMES,
    PcaExtractor,
    ecdf_normalize,
    engineered_features,
    engineered_matrix,
    extract_activation,
    extract_activations,
    pca_features,
    pca_fit,
    read_feature_csv,
    write_feature_csv,
)
from sparsehar.solvers import SolverError


def order_statistic_quantile(v, p):
    """Weibull-position quantile from sorted values, by hand."""
    s = np.sort(v)
    pos = (len(s) + 1) * p
    if pos <= 1:
        return s[0]
    if pos >= len(s):
        return s[-1]
    lo = int(np.floor(pos))
    return s[lo - 1] + (pos - lo) * (s[lo] - s[lo - 1])


def test_activation_of_atom_is_single_nonzero():
    cb = Codebook(basis=init_codebook(10, 16, seed=1).basis, alpha=1e-3)
    act = extract_activation(cb, cb.basis[:, 4], frame_id=7)
    assert act.nonzero == 1 and act.values[4] == pytest.approx(1.0, abs=1e-3)
    assert act.frame_id == 7


def test_zero_frame_zero_activation():
    cb = Codebook(basis=init_codebook(10, 16, seed=1).basis, alpha=0.1)
    assert extract_activation(cb, np.zeros(16)).nonzero == 0


@pytest.mark.parametrize("alpha", [0.001, 0.01, 0.1, 0.5, 1.0])
def test_planted_support_recovered(alpha):
    # swept: support [1, 5, 9] holds for alpha in [0.001, 1.0] and loses atom 1 at 1.5
    rng = np.random.default_rng(4)
    D = rng.normal(size=(20, 12))
    D /= np.linalg.norm(D, axis=0)
    a = np.zeros(12)
    a[[1, 5, 9]] = [1.0, -0.8, 1.2]
    got = extract_activations(D, D @ a, alpha=alpha)[0]
    assert np.flatnonzero(got).tolist() == [1, 5, 9]


def test_activation_length_mismatch():
    cb = Codebook(basis=init_codebook(3, 5).basis, alpha=0.1)
    with pytest.raises(SolverError):
        extract_activations(cb, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        extract_activations(cb.basis, np.zeros((2, 5)))


def test_ecdf_constant():
    np.testing.assert_array_equal(ecdf_normalize(np.full(12, 3.5), 5), np.full(5, 3.5))


def test_ecdf_permutation_of_1_to_100():
    v = np.random.default_rng(0).permutation(np.arange(1, 101)).astype(float)
    out = ecdf_normalize(v, 3)
    np.testing.assert_allclose(out, [25.25, 50.5, 75.75], atol=1e-12)
    np.testing.assert_allclose(out, [order_statistic_quantile(v, k / 4) for k in (1, 2, 3)], atol=1e-12)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.integers(2, 40), st.integers(0, 1000))
def test_ecdf_sorted_permutation_invariant_and_matches_oracle(vals, m, seed):
    v = np.array(vals)
    out = ecdf_normalize(v, m)
    assert np.all(np.diff(out) >= 0)
    np.testing.assert_array_equal(out, ecdf_normalize(np.random.default_rng(seed).permutation(v), m))
    ref = [order_statistic_quantile(v, k / (m + 1)) for k in range(1, m + 1)]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-6)


def test_ecdf_batch_shape_and_points():
    assert ecdf_normalize(np.zeros((7, 20)), 30).shape == (7, 30)
    with pytest.raises(ValueError):
        ecdf_normalize(np.zeros(5), 1)


def test_pca_line_through_mean():
    t = np.linspace(-3, 3, 40)[:, None]
    X = np.array([1.0, 2.0, -1.0]) + t * np.array([0.6, 0.0, 0.8])
    m = pca_fit(X)
    assert m.dim == 1
    assert m.explained[0] == pytest.approx(1.0)


def test_pca_isotropic_keeps_all():
    X = np.random.default_rng(0).normal(size=(500, 3))
    assert pca_fit(X, retain=0.99).dim == 3


def test_pca_zero_variance_warns():
    with pytest.warns(UserWarning, match="zero-variance"):
        m = pca_fit(np.ones((5, 4)))
    assert m.dim == 1


def test_pca_rejects_small_or_bad():
    with pytest.raises(ValueError):
        pca_fit(np.ones((1, 3)))
    with pytest.raises(ValueError):
        pca_fit(np.array([[1.0, np.nan], [0.0, 1.0]]))


@given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.floats(0.5, 0.999))
def test_pca_orthonormal_and_retained_variance(seed, m, retain):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, m)) @ rng.normal(size=(m, m))
    model = pca_fit(X, retain=retain)
    G = model.components @ model.components.T
    np.testing.assert_allclose(G, np.eye(model.dim), atol=1e-8)
    assert model.explained[: model.dim].sum() >= retain - 1e-12
    # back-projection loses at most 1 - retain of the total variance
    C = X - model.mean
    R = C - (C @ model.components.T) @ model.components
    assert np.sum(R**2) <= (1 - retain) * np.sum(C**2) + 1e-9


def test_pca_projection_examples(rng):
    X = rng.normal(size=(50, 4)) * [3.0, 2.0, 1.0, 0.5]
    model = pca_fit(X)
    np.testing.assert_allclose(pca_features(model, model.mean), np.zeros(model.dim), atol=1e-12)
    step = model.mean + model.components[0]
    e1 = np.zeros(model.dim)
    e1[0] = 1.0
    np.testing.assert_allclose(pca_features(model, step), e1, atol=1e-12)
    # direct recomputation from the covariance eigenvectors
    w, V = np.linalg.eigh(np.cov(X.T))
    V = V[:, ::-1][:, : model.dim]
    V *= np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(model.dim)])
    np.testing.assert_allclose(pca_features(model, X), (X - X.mean(0)) @ V, atol=1e-10)
    with pytest.raises(ValueError):
        pca_features(model, np.zeros(3))


def test_pca_extractor_round_trip(rng):
    frames = rng.normal(size=(40, 100))
    ex = PcaExtractor(points=10).fit(frames)
    assert ex.transform(frames).shape == (40, ex.model.dim)
    assert ex.transform(np.zeros((0, 100))).shape == (0, ex.model.dim)


def test_engineered_constant():
    f = engineered_features(np.full(50, 9.81), 100.0)
    assert f["mean"] == pytest.approx(9.81)
    assert f["variance"] == 0
    assert f["zero_crossing_rate"] == 0
    assert f["band_ratio_0_2"] == 0 and f["band_ratio_2_4"] == 0


def test_engineered_short_frame_moments():
    f = engineered_features([1.0, 2.0, 3.0, 4.0], 20.0)
    assert f["mean"] == 2.5
    # position (4 + 1) * 0.75 = 3.75 between the 3rd and 4th order statistics
    assert f["third_quartile"] == pytest.approx(3.75)
    assert f["variance"] == pytest.approx(1.25)


def test_engineered_bin_aligned_sine():
    t = np.arange(100) / 100.0
    f = engineered_features(np.sin(2 * np.pi * 3 * t), 100.0)
    assert f["peak_frequency"] == 3.0
    assert f["band_ratio_2_4"] == pytest.approx(1.0, abs=1e-9)
    assert f["band_ratio_0_2"] == pytest.approx(0.0, abs=1e-9)
    # a phase offset keeps samples off the zeros: six sign changes over 99 gaps
    g = engineered_features(np.sin(2 * np.pi * 3 * t + 0.3), 100.0)
    assert g["zero_crossing_rate"] == pytest.approx(6 / 99)
    assert g["peak_frequency"] == 3.0


def test_engineered_validation():
    with pytest.raises(ValueError):
        engineered_features([1.0, 2.0, 3.0], 100.0)
    with pytest.raises(ValueError):
        engineered_features(np.zeros(10), 8.0)


@given(st.integers(0, 2**32 - 1), st.integers(4, 120))
def test_engineered_invariants(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
    f = engineered_features(x, 50.0)
    assert set(f) == set(ENGINEERED_NAMES)
    assert f["variance"] >= 0
    assert 0 <= f["band_ratio_0_2"] <= 1 and 0 <= f["band_ratio_2_4"] <= 1
    assert f["peak_frequency"] in set(np.fft.rfftfreq(n, 1 / 50.0)[1:])
    g = engineered_features(rng.permutation(x), 50.0)
    for k in ("mean", "variance", "third_quartile"):
        assert g[k] == pytest.approx(f[k], rel=1e-12, abs=1e-12)


def test_engineered_matrix_columns(rng):
    M = engineered_matrix(rng.normal(size=(3, 40)), 100.0)
    assert M.shape == (3, 11)
    assert engineered_matrix(np.zeros((0, 40)), 100.0).shape == (0, 11)


def test_feature_csv_round_trip(tmp_path, rng):
    F = rng.normal(size=(4, 3))
    write_feature_csv(tmp_path / "f.csv", F, "sparse", labels=[0, 1, -1, 0], vocabulary=["a", "b"])
    back, labels, names = read_feature_csv(tmp_path / "f.csv")
    assert back.tobytes() == F.tobytes()
    assert labels == ["a", "b", "", "a"]
    assert names == ["activation_0", "activation_1", "activation_2"]
    write_feature_csv(tmp_path / "e.csv", np.zeros((1, 11)), "engineered")
    _, labels, names = read_feature_csv(tmp_path / "e.csv")
    assert labels is None and names == list(ENGINEERED_NAMES)
