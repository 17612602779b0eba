import numpy as np
import pytest
from scipy.special import softmax

from arclsr1.checks import shipped_objectives
from arclsr1.errors import InvalidArgument, ParseError
from arclsr1.problems import (
    IRIS_PARAMS,
    Mlp,
    MlpSpec,
    Quadratic,
    autoencoder_spec,
    gradient_error,
    iris_spec,
    load_idx,
    load_iris,
    logistic_regression,
    mlp,
    rosenbrock,
    synth_blobs,
)
from arclsr1.problems.data import DATA_ENV, IRIS_FILE, write_idx


def test_quadratic_and_rosenbrock_examples():
    q = Quadratic(np.eye(3))
    f, g = q.value_and_gradient(np.array([1.0, 0.0, 0.0]))
    assert f == 0.5
    np.testing.assert_array_equal(g, [1.0, 0.0, 0.0])
    f, g = rosenbrock(2).value_and_gradient(np.ones(2))
    assert f == 0 and np.all(g == 0)
    assert rosenbrock(2).value(np.array([-1.2, 1.0])) == pytest.approx(24.2)


@pytest.mark.parametrize("name, obj", shipped_objectives(), ids=lambda v: v if isinstance(v, str) else "")
def test_gradient_matches_finite_differences(name, obj):
    rng = np.random.default_rng(60)
    theta = obj.spec.initial_params(1) * 10 if isinstance(obj, Mlp) else rng.standard_normal(obj.dim)
    assert gradient_error(obj, theta) < 1e-5


def test_iris_network_parameter_count():
    spec = iris_spec()
    assert spec.n_params == IRIS_PARAMS == 2953
    assert len(spec.widths) == 4  # three fully connected layers
    assert spec.initial_params().shape == (2953,)
    assert np.abs(spec.initial_params()).max() <= 0.05


def test_single_linear_layer_mse_is_least_squares():
    rng = np.random.default_rng(61)
    x, t = rng.standard_normal(3), rng.standard_normal(2)
    obj = Mlp(MlpSpec((3, 2), loss="mse", output_activation="identity"), x[None, :], t[None, :])
    theta = rng.standard_normal(obj.dim)
    W, b = theta[:6].reshape(3, 2), theta[6:]
    r = x @ W + b - t
    f, g = obj.value_and_gradient(theta)
    assert f == pytest.approx(np.mean(r * r), rel=1e-14)
    np.testing.assert_allclose(g[:6], np.outer(x, r).ravel(), rtol=1e-13)  # 2 r / 2 outputs
    np.testing.assert_allclose(g[6:], r, rtol=1e-13)


def test_softmax_gradient_at_uniform_logits():
    spec = MlpSpec((2, 4), loss="softmax_cross_entropy")
    obj = Mlp(spec, np.array([[0.0, 0.0]]), np.array([1]))
    f, g = obj.value_and_gradient(np.zeros(obj.dim))
    assert f == pytest.approx(np.log(4))
    np.testing.assert_allclose(g[-4:], np.full(4, 0.25) - np.eye(4)[1])


def test_full_index_batch_equals_full_gradient_and_permutation():
    ds = load_iris(seed=0).standardized()
    obj = mlp(iris_spec(0), ds, "train")
    theta = iris_spec(0).initial_params(2)
    f, g = obj.value_and_gradient(theta)
    fb, gb = obj.value_and_gradient_batch(theta, np.arange(obj.n_samples))
    assert fb == pytest.approx(f, rel=1e-12)
    assert np.linalg.norm(gb - g) <= 1e-12 * np.linalg.norm(g)
    perm = np.random.default_rng(0).permutation(obj.n_samples)
    fp, gp = obj.value_and_gradient_batch(theta, perm)
    assert fp == pytest.approx(f, rel=1e-12)
    assert np.linalg.norm(gp - g) <= 1e-12 * np.linalg.norm(g)
    out = obj.forward(theta, obj.X)
    np.testing.assert_allclose(obj.forward(theta, obj.X[perm]), out[perm], rtol=1e-14)


def test_mlp_dimension_checks():
    with pytest.raises(InvalidArgument):
        Mlp(MlpSpec((3, 2)), np.ones((4, 2)), np.zeros(4, dtype=int))
    with pytest.raises(InvalidArgument):
        Mlp(MlpSpec((2, 2)), np.ones((4, 2)), np.full(4, 5))
    with pytest.raises(InvalidArgument):
        MlpSpec((2, 2), activation="gelu")


def test_load_iris_bundled():
    ds = load_iris(seed=0)
    assert ds.inputs.shape == (150, 4) and ds.n_classes == 3
    np.testing.assert_array_equal(ds.inputs[0], [5.1, 3.5, 1.4, 0.2])
    assert ds.targets[0] == 0
    assert len(ds.test_idx) == 30 and np.bincount(ds.targets[ds.test_idx]).tolist() == [10, 10, 10]
    assert not set(ds.train_idx) & set(ds.test_idx)


def test_load_iris_header_and_errors(tmp_path):
    rows = [f"5.1,3.5,1.4,0.2,{c}" for c in ("Iris-setosa", "Iris-versicolor", "Iris-virginica") for _ in range(5)]
    good = tmp_path / "iris.csv"
    good.write_text("sepal_length,sepal_width,petal_length,petal_width,species\n" + "\n".join(rows) + "\n")
    ds = load_iris(good)
    assert len(ds) == 15
    bad = tmp_path / "bad.csv"
    bad.write_text("5.1,3.5,1.4,0.2,Iris-setosa\n5.1,x,1.4,0.2,Iris-setosa\n")
    with pytest.raises(ParseError, match=":2:"):
        load_iris(bad)
    bad.write_text("5.1,3.5,1.4,0.2,Iris-setosa\n5.1,3.5,1.4\n")
    with pytest.raises(ParseError, match=":2: expected 5 fields"):
        load_iris(bad)


def test_idx_roundtrip_and_errors(tmp_path):
    images = np.arange(8, dtype=np.uint8).reshape(2, 2, 2) * 30
    write_idx(tmp_path / "img", images)
    write_idx(tmp_path / "lab", np.array([0, 1], dtype=np.uint8))
    raw = (tmp_path / "img").read_bytes()
    assert raw[:16] == bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2])
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    assert ds.inputs.shape == (2, 4)
    np.testing.assert_allclose(ds.inputs[1], images[1].ravel() / 255.0)
    (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x04" + raw[4:])
    with pytest.raises(ParseError, match="byte offset 0"):
        load_idx(tmp_path / "bad", tmp_path / "lab")
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(ParseError, match="byte offset 16"):
        load_idx(tmp_path / "short", tmp_path / "lab")


def test_bundled_digits_and_limit():
    ds = load_idx(limit=100)
    assert ds.inputs.shape == (100, 64)
    assert 0.0 <= ds.inputs.min() and ds.inputs.max() <= 1.0
    assert autoencoder_spec().widths == (64, 32, 16, 32, 64)


def test_data_dir_override(tmp_path, monkeypatch):
    rows = ["1,2,3,4,Iris-setosa"] * 5 + ["1,2,3,5,Iris-versicolor"] * 5
    (tmp_path / IRIS_FILE).write_text("\n".join(rows) + "\n")
    monkeypatch.setenv(DATA_ENV, str(tmp_path))
    assert len(load_iris()) == 10


def test_separable_blobs_reach_full_accuracy():
    from arclsr1.arcs import ArcsConfig, minimize

    blobs = synth_blobs(50, seed=0)
    obj = logistic_regression(blobs)
    res = minimize(obj, np.zeros(3), ArcsConfig(k_max=100))
    assert obj.accuracy(res.theta) == 1.0


def test_softmax_reference():
    # the log-softmax path matches a direct softmax at moderate logits
    spec = MlpSpec((2, 3), loss="softmax_cross_entropy")
    X = np.array([[0.3, -1.0]])
    obj = Mlp(spec, X, np.array([2]))
    theta = np.arange(obj.dim, dtype=float) / 10
    logits = obj.forward(theta, X)
    assert obj.value(theta) == pytest.approx(-np.log(softmax(logits[0])[2]))
