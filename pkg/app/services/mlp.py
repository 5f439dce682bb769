"""
MLP Module

A small fully-connected network on a flat parameter vector, written directly
against numpy so federated updates can be formed, normalized and transmitted
as plain vectors.

Layer l maps (n, fan_in) -> (n, fan_out) with weights W_l and bias b_l; the
flat vector stores [W_1, b_1, W_2, b_2, ...] in row-major order. Hidden layers
use ReLU or tanh. The head is either softmax with cross-entropy (integer class
labels) or linear with mean squared error. Losses are means over samples.
"""

import logging
from typing import List, Tuple

import numpy as np

from app.core.errors import DimensionError
from app.models.learning import Dataset, MLPSpec

# Configure logger
logger = logging.getLogger(__name__)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return 1.0 - a ** 2


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class MLP:
    """
    Fully-connected network described by an MLPSpec.

    Attributes:
        spec: Architecture
        num_params: Length d of the flat parameter vector
    """

    def __init__(self, spec: MLPSpec):
        self.spec = spec
        self._shapes: List[Tuple[int, int]] = list(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]))
        self.num_params = sum(fan_in * fan_out + fan_out for fan_in, fan_out in self._shapes)
        logger.debug(f"MLP {spec.layer_sizes} ({spec.activation}, {spec.head}): {self.num_params} parameters")

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)) and zero biases."""
        chunks = []
        for fan_in, fan_out in self._shapes:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        return np.concatenate(chunks)

    def unpack(self, weights: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector into per-layer (W, b) views."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.num_params,):
            raise DimensionError(
                f"expected a parameter vector of length {self.num_params}, got shape {weights.shape}"
            )
        layers = []
        offset = 0
        for fan_in, fan_out in self._shapes:
            w = weights[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = weights[offset:offset + fan_out]
            offset += fan_out
            layers.append((w, b))
        return layers

    def _forward(self, weights: np.ndarray, features: np.ndarray):
        layers = self.unpack(weights)
        if features.ndim != 2 or features.shape[1] != self.spec.layer_sizes[0]:
            raise DimensionError(
                f"expected features of shape (n, {self.spec.layer_sizes[0]}), got {features.shape}"
            )
        pre_activations = []
        activations = [features]
        a = features
        for index, (w, b) in enumerate(layers):
            z = a @ w + b
            pre_activations.append(z)
            a = z if index == len(layers) - 1 else _activate(self.spec.activation, z)
            activations.append(a)
        return layers, pre_activations, activations

    def predict(self, weights: np.ndarray, features: np.ndarray) -> np.ndarray:
        """Class indices for the softmax head, real predictions for the linear head."""
        _, _, activations = self._forward(weights, features)
        output = activations[-1]
        if self.spec.head == "softmax_ce":
            return np.argmax(output, axis=1)
        return output[:, 0] if output.shape[1] == 1 else output

    def _output_loss(self, output: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
        n = output.shape[0]
        if self.spec.head == "softmax_ce":
            labels = np.asarray(targets, dtype=np.int64)
            log_probs = _log_softmax(output)
            loss = -float(np.mean(log_probs[np.arange(n), labels]))
            delta = np.exp(log_probs)
            delta[np.arange(n), labels] -= 1.0
            return loss, delta / n
        residual = output - np.asarray(targets, dtype=np.float64).reshape(n, -1)
        return float(np.mean(residual ** 2)), 2.0 * residual / residual.size

    def loss(self, weights: np.ndarray, features: np.ndarray, targets: np.ndarray) -> float:
        _, _, activations = self._forward(weights, features)
        return self._output_loss(activations[-1], targets)[0]

    def loss_and_gradient(
        self,
        weights: np.ndarray,
        features: np.ndarray,
        targets: np.ndarray,
    ) -> Tuple[float, np.ndarray]:
        """
        Mean loss and its gradient by backpropagation.

        Args:
            weights: Flat parameter vector
            features: (n, input_dim) inputs
            targets: Integer labels (softmax head) or reals (linear head)

        Returns:
            Tuple containing:
                - loss value
                - flat gradient of length num_params
        """
        layers, pre_activations, activations = self._forward(weights, features)
        loss, delta = self._output_loss(activations[-1], targets)

        grads: List[np.ndarray] = []
        for index in range(len(layers) - 1, -1, -1):
            w, _ = layers[index]
            grads.append(delta.sum(axis=0))
            grads.append((activations[index].T @ delta).reshape(-1))
            if index > 0:
                back = delta @ w.T
                delta = back * _activation_grad(
                    self.spec.activation, pre_activations[index - 1], activations[index]
                )
        return loss, np.concatenate(grads[::-1])


class MLPObjective:
    """Local loss of an MLP on one dataset, exposed as loss(w) / gradient(w)."""

    def __init__(self, mlp: MLP, data: Dataset):
        self.mlp = mlp
        self.data = data

    def loss(self, weights: np.ndarray) -> float:
        return self.mlp.loss(weights, self.data.features, self.data.targets)

    def gradient(self, weights: np.ndarray) -> np.ndarray:
        return self.mlp.loss_and_gradient(weights, self.data.features, self.data.targets)[1]
