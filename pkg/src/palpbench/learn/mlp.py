"""Feedforward network trained by mini-batch gradient descent on cross-entropy.

Written directly in numpy so the analytic gradients can be checked against
central finite differences (the backprop correctness oracle).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MlpError(ValueError):
    pass


class DivergenceError(MlpError):
    pass


def relu(x):
    return np.maximum(0.0, x)


def softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    layer_sizes: tuple  # (in, hidden..., out)
    weights: list  # per layer, (n_in, n_out)
    biases: list  # per layer, (n_out,)
    class_names: tuple = ()
    loss_history: list = field(default_factory=list)
    activation: str = "relu"

    def forward(self, X):
        """Returns (activations per layer, output probabilities)."""
        h = np.atleast_2d(np.asarray(X, dtype=float))
        acts = [h]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ w + b)
            acts.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        return acts, softmax(logits)

    def predict_proba(self, X):
        return self.forward(X)[1]

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)


def init_model(layer_sizes, seed=0, class_names=()):
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpModel(
        layer_sizes=tuple(layer_sizes), weights=weights, biases=biases,
        class_names=tuple(class_names),
    )


def cross_entropy(probs, labels):
    n = len(labels)
    picked = probs[np.arange(n), labels]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def loss_and_gradients(model: MlpModel, X, labels):
    """Mean cross-entropy over the batch plus gradients for every parameter."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=int)
    acts, probs = model.forward(X)
    n = len(labels)
    loss = cross_entropy(probs, labels)

    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    for layer in reversed(range(len(model.weights))):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0)
    return loss, grad_w, grad_b


def mlp_train(
    X,
    labels,
    class_names,
    hidden=(32,),
    epochs=300,
    lr=0.05,
    batch_size=32,
    seed=0,
) -> MlpModel:
    """Deterministic mini-batch gradient descent; returns the trained model.

    Raises DivergenceError (naming the learning rate) if the loss goes
    non-finite.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise MlpError(f"need at least 2 classes, got {len(classes)}")
    counts = np.bincount(labels, minlength=len(class_names))
    thin = [class_names[c] for c in range(len(class_names)) if 0 < counts[c] < 2]
    if thin:
        raise MlpError(f"need at least 2 samples per class; too few for {thin}")

    sizes = (X.shape[1], *hidden, len(class_names))
    model = init_model(sizes, seed=seed, class_names=class_names)
    rng = np.random.default_rng(seed + 1)
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grad_w, grad_b = loss_and_gradients(model, X[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"loss diverged (lr={lr}); reduce the learning rate")
            for layer in range(len(model.weights)):
                model.weights[layer] -= lr * grad_w[layer]
                model.biases[layer] -= lr * grad_b[layer]
            epoch_loss += loss
            n_batches += 1
        model.loss_history.append(epoch_loss / max(n_batches, 1))
    return model
