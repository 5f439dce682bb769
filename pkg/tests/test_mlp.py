"""
Tests for the MLP: parameter layout, initialization and backpropagation
against central finite differences.
"""

import numpy as np
import pytest

from app.core.errors import DimensionError
from app.models.learning import Dataset, MLPSpec
from app.services.mlp import MLP, MLPObjective


def _finite_difference(mlp, weights, features, targets, step=1e-5):
    gradient = np.zeros_like(weights)
    for i in range(weights.size):
        bump = np.zeros_like(weights)
        bump[i] = step
        gradient[i] = (
            mlp.loss(weights + bump, features, targets) - mlp.loss(weights - bump, features, targets)
        ) / (2 * step)
    return gradient


@pytest.mark.parametrize(
    "activation,head",
    [("tanh", "softmax_ce"), ("tanh", "linear_mse"), ("relu", "softmax_ce"), ("relu", "linear_mse")],
)
def test_backprop_matches_finite_differences(rng, activation, head):
    outputs = 3 if head == "softmax_ce" else 1
    mlp = MLP(MLPSpec(layer_sizes=[4, 5, outputs], activation=activation, head=head))
    weights = mlp.init_weights(rng) + 0.1 * rng.standard_normal(mlp.num_params)
    features = rng.standard_normal((7, 4))
    targets = rng.integers(0, 3, size=7) if head == "softmax_ce" else rng.standard_normal(7)

    loss, analytic = mlp.loss_and_gradient(weights, features, targets)
    numeric = _finite_difference(mlp, weights, features, targets)

    assert loss == pytest.approx(mlp.loss(weights, features, targets))
    relative = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
    assert relative <= 1e-4


def test_two_hidden_layers_gradient(rng):
    mlp = MLP(MLPSpec(layer_sizes=[3, 4, 4, 2], activation="tanh", head="softmax_ce"))
    weights = mlp.init_weights(rng)
    features = rng.standard_normal((5, 3))
    targets = np.array([0, 1, 1, 0, 1])
    _, analytic = mlp.loss_and_gradient(weights, features, targets)
    numeric = _finite_difference(mlp, weights, features, targets)
    assert np.linalg.norm(analytic - numeric) <= 1e-4 * np.linalg.norm(numeric)


def test_parameter_count_and_init(rng):
    mlp = MLP(MLPSpec(layer_sizes=[784, 100, 10]))
    assert mlp.num_params == 784 * 100 + 100 + 100 * 10 + 10
    weights = mlp.init_weights(rng)
    (w1, b1), (w2, b2) = mlp.unpack(weights)
    assert w1.shape == (784, 100) and w2.shape == (100, 10)
    np.testing.assert_array_equal(b1, 0.0)
    assert np.max(np.abs(w1)) <= np.sqrt(6.0 / 884)


def test_unpack_rejects_wrong_length():
    mlp = MLP(MLPSpec(layer_sizes=[2, 2]))
    with pytest.raises(DimensionError):
        mlp.unpack(np.zeros(5))


def test_forward_rejects_wrong_features(rng):
    mlp = MLP(MLPSpec(layer_sizes=[2, 2]))
    with pytest.raises(DimensionError):
        mlp.predict(mlp.init_weights(rng), np.zeros((3, 4)))


def test_uniform_logits_give_log_classes():
    mlp = MLP(MLPSpec(layer_sizes=[2, 4]))
    loss = mlp.loss(np.zeros(mlp.num_params), np.ones((6, 2)), np.arange(6) % 4)
    assert loss == pytest.approx(np.log(4))


def test_predict_shapes(rng):
    regression = MLP(MLPSpec(layer_sizes=[5, 3, 1], head="linear_mse"))
    assert regression.predict(regression.init_weights(rng), np.zeros((4, 5))).shape == (4,)
    classifier = MLP(MLPSpec(layer_sizes=[5, 3, 10]))
    labels = classifier.predict(classifier.init_weights(rng), rng.standard_normal((4, 5)))
    assert labels.shape == (4,) and labels.dtype.kind == "i"


def test_objective_wraps_dataset(rng):
    mlp = MLP(MLPSpec(layer_sizes=[2, 1], head="linear_mse"))
    data = Dataset(features=rng.standard_normal((10, 2)), targets=rng.standard_normal(10), task="regression")
    objective = MLPObjective(mlp, data)
    weights = mlp.init_weights(rng)
    assert objective.loss(weights) == pytest.approx(mlp.loss(weights, data.features, data.targets))
    assert objective.gradient(weights).shape == (mlp.num_params,)


def test_invalid_layer_sizes():
    with pytest.raises(ValueError):
        MLPSpec(layer_sizes=[3, 0, 1])
