import numpy as np
import pytest

import kilab

TORUS = {"kind": "torus", "dim": 1}
SPHERE = {"kind": "sphere", "dim": 3}
LAPLACE = {"family": "laplace"}


def test_sample_shapes_and_determinism():
    X = kilab.sample(SPHERE, 200, 4)
    assert X.shape == (200, 3)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(X, kilab.sample(SPHERE, 200, 4))


def test_quadrature_weights_sum_to_one():
    nodes, weights = kilab.quadrature(TORUS, 64)
    assert nodes.shape == (64, 1)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)


def test_laplace_gram_matches_numpy():
    X = kilab.sample(TORUS, 30, 1)
    d = np.abs(X - X.T)
    assert np.allclose(kilab.gram(LAPLACE, X), np.exp(-d), atol=1e-14)


def test_interpolation_and_ridge():
    X = kilab.sample(TORUS, 50, 2)
    Y = np.sin(X[:, 0]) + 0.1 * np.random.default_rng(0).standard_normal(50)
    f = kilab.fit(LAPLACE, X, Y)
    assert np.max(np.abs(f.predict(X) - Y)) < 1e-8
    K = kilab.gram(LAPLACE, X)
    ridge = kilab.fit(LAPLACE, X, Y, lam=0.1)
    assert np.allclose(ridge.dual, np.linalg.solve(K + 50 * 0.1 * np.eye(50), Y), atol=1e-10)


def test_singular_interpolation_raises():
    X = np.array([[0.1], [0.9]])
    with pytest.raises(kilab.InterpolationInfeasible):
        kilab.fit({"family": "constant"}, X, np.ones(2))


def test_bad_domain_raises_config_error():
    with pytest.raises(kilab.ConfigError):
        kilab.sample({"kind": "sphere", "dim": 0}, 3, 0)


def test_variance_curve_non_increasing():
    X = kilab.sample(TORUS, 40, 3)
    v = kilab.variance_curve(LAPLACE, TORUS, X, 1.0, np.logspace(-6, 0, 12), 256)
    assert np.all(np.diff(v) <= 1e-12 * v[:-1])


def test_effective_dimension_power_law():
    lam = np.logspace(-6, -2, 5)
    n1 = [kilab.effective_dimension_power_law(1.0, 2.0, 10**6, l) for l in lam]
    slope = np.polyfit(np.log(lam), np.log(n1), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.02)
    assert kilab.effective_dimension([1.0], 1.0) == pytest.approx(0.5)


def test_spectra():
    values = kilab.dot_product_spectrum({"family": "ntk2"}, 3, 40, 160)
    assert np.all(np.diff(values) <= 0)
    fit = kilab.fit_decay(list(values), 5, len(values))
    assert fit["beta"] == pytest.approx(1.5, abs=0.2)
    emp, window = kilab.empirical_spectrum(LAPLACE, kilab.sample(TORUS, 100, 0))
    assert emp.sum() == pytest.approx(1.0, rel=1e-10)
    assert window[0] >= 1


def test_network_training():
    X = kilab.sample(SPHERE, 5, 1)
    Y = np.linspace(-1, 1, 5)
    net = kilab.init_network(512, 3, 2)
    assert np.max(np.abs(net.forward(X))) == 0.0
    trained, losses = kilab.train(net, X, Y, eta=2.0, steps=5000, tolerance=1e-8)
    assert losses[-1] < losses[0]
    grid = kilab.sample(SPHERE, 50, 3)
    assert kilab.sup_gap(trained, kilab.ntk_interpolator(X, Y), grid) < 0.5


def test_run_experiment(tmp_path):
    config = {
        "kernel": LAPLACE,
        "domain": TORUS,
        "noise": {"sigma": 0.5},
        "n_grid": [32, 64],
        "seeds": 2,
        "integration": {"resolution": 256},
    }
    summary = kilab.run("scaling", config, str(tmp_path))
    assert summary["experiment"] == "interpolation_scaling"
    assert len(summary["records_table"]) == 4
    assert (tmp_path / "records.csv").exists()
    with pytest.raises(kilab.ConfigError):
        kilab.run("scaling", {**config, "seedz": 1})
