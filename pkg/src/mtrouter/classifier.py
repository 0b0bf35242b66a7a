"""Online multiclass classifier mapping features to engine probabilities.

The reference learner is multinomial logistic regression trained one
example at a time by plain SGD on cross-entropy with an L2 penalty. It is
deliberately boring: O(K·F) per update keeps the per-request decision in
the millisecond range, zero initialization yields uniform probabilities
(maximum entropy, hence exploration) until the first label arrives, and
the gradient is simple enough to audit against finite differences.

Anything exposing ``predict_proba`` / ``learn`` / ``updates_seen`` with the
same contracts can replace it; the router and queue only rely on that
surface.
"""

from __future__ import annotations

from typing import Protocol, Union

import numpy as np

from .domain import ClassProbabilities, FeatureVector

ArrayLike = Union[FeatureVector, np.ndarray]


class OnlineClassifier(Protocol):
    updates_seen: int

    def predict_proba(self, fv: ArrayLike) -> ClassProbabilities: ...

    def learn(self, fv: ArrayLike, label: int) -> None: ...

    def probs_batch(self, features: np.ndarray) -> np.ndarray: ...


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def normalized_entropy(p) -> float:
    """Shannon entropy of ``p`` divided by ln K, clamped to [0, 1].

    0·ln 0 counts as 0, so one-hot vectors score exactly 0.0 and the
    uniform vector exactly 1.0.
    """
    probs = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    k = probs.shape[-1]
    if k <= 1:
        return 0.0
    positive = probs[probs > 0.0]
    h = -float(np.sum(positive * np.log(positive)))
    return min(1.0, max(0.0, h / np.log(k)))


def entropies_batch(probs: np.ndarray) -> np.ndarray:
    """Row-wise normalized entropy of an (n, K) probability matrix."""
    k = probs.shape[-1]
    if k <= 1:
        return np.zeros(probs.shape[0])
    safe = np.where(probs > 0.0, probs, 1.0)
    h = -np.sum(np.where(probs > 0.0, probs * np.log(safe), 0.0), axis=-1)
    return np.clip(h / np.log(k), 0.0, 1.0)


def _as_array(fv: ArrayLike) -> np.ndarray:
    return fv.values if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)


class OnlineSoftmaxModel:
    """Multinomial logistic regression with incremental SGD updates.

    Loss per example: cross-entropy + (l2 / 2) · ‖W‖²; the bias is not
    regularized. The gradient w.r.t. logit j is p_j − [j = label].

    ``learning_rate`` is constant unless ``lr_decay`` is set, in which case
    step t uses learning_rate / sqrt(t).
    """

    def __init__(
        self,
        n_classes: int,
        n_features: int,
        learning_rate: float = 0.3,
        l2: float = 1e-6,
        lr_decay: bool = False,
    ):
        if n_classes < 1 or n_features < 1:
            raise ValueError("n_classes and n_features must be >= 1")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if l2 < 0:
            raise ValueError("l2 must be nonnegative")
        self.n_classes = n_classes
        self.n_features = n_features
        self.learning_rate = learning_rate
        self.l2 = l2
        self.lr_decay = lr_decay
        self.weights = np.zeros((n_classes, n_features))
        self.bias = np.zeros(n_classes)
        self.updates_seen = 0

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")

    def logits(self, fv: ArrayLike) -> np.ndarray:
        x = _as_array(fv)
        self._check_dim(x)
        return self.weights @ x + self.bias

    def predict_proba(self, fv: ArrayLike) -> ClassProbabilities:
        return ClassProbabilities(softmax(self.logits(fv)))

    def predict(self, fv: ArrayLike) -> tuple[int, ClassProbabilities]:
        """Return (argmax engine, probabilities); ties go to the lowest id."""
        probs = self.predict_proba(fv)
        return int(np.argmax(probs.probs)), probs

    def probs_batch(self, features: np.ndarray) -> np.ndarray:
        """Probabilities for an (n, F) feature matrix, one row per input."""
        self._check_dim(features)
        return softmax(features @ self.weights.T + self.bias)

    def _step_size(self) -> float:
        if self.lr_decay:
            return self.learning_rate / np.sqrt(self.updates_seen + 1)
        return self.learning_rate

    def gradients(self, fv: ArrayLike, label: int) -> tuple[np.ndarray, np.ndarray]:
        """Analytic gradient of the per-example loss w.r.t. (weights, bias)."""
        x = _as_array(fv)
        self._check_dim(x)
        if not 0 <= label < self.n_classes:
            raise ValueError(f"label {label} out of range [0, {self.n_classes})")
        p = softmax(self.weights @ x + self.bias)
        g = p.copy()
        g[label] -= 1.0
        grad_w = np.outer(g, x) + self.l2 * self.weights
        return grad_w, g

    def loss(self, fv: ArrayLike, label: int) -> float:
        """Per-example loss the update descends: CE + (l2/2)·‖W‖²."""
        x = _as_array(fv)
        self._check_dim(x)
        logits = self.weights @ x + self.bias
        shifted = logits - logits.max()
        log_probs = shifted - np.log(np.exp(shifted).sum())
        return float(-log_probs[label] + 0.5 * self.l2 * np.sum(self.weights ** 2))

    def learn(self, fv: ArrayLike, label: int) -> None:
        """One SGD step toward ``label``; increments ``updates_seen``."""
        grad_w, grad_b = self.gradients(fv, label)
        lr = self._step_size()
        self.weights -= lr * grad_w
        self.bias -= lr * grad_b
        self.updates_seen += 1

    # Checkpoint format (text, documented so it can be diffed):
    #   line 1: "softmax-model v1"
    #   line 2: classes=K features=F updates_seen=N learning_rate=R l2=L lr_decay=0|1
    #   lines 3..K+2: F weights per line, row-major, printf %.17g
    #   line K+3: K bias values, %.17g
    # %.17g round-trips float64 exactly, so save→load→save is byte-identical.

    _MAGIC = "softmax-model v1"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self._MAGIC + "\n")
            fh.write(
                f"classes={self.n_classes} features={self.n_features} "
                f"updates_seen={self.updates_seen} "
                f"learning_rate={self.learning_rate:.17g} l2={self.l2:.17g} "
                f"lr_decay={int(self.lr_decay)}\n"
            )
            for row in self.weights:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            fh.write(" ".join(f"{v:.17g}" for v in self.bias) + "\n")

    @classmethod
    def load(cls, path) -> "OnlineSoftmaxModel":
        with open(path, "r", encoding="utf-8") as fh:
            magic = fh.readline().rstrip("\n")
            if magic != cls._MAGIC:
                raise ValueError(f"not a softmax-model checkpoint: {magic!r}")
            header = dict(item.split("=", 1) for item in fh.readline().split())
            model = cls(
                n_classes=int(header["classes"]),
                n_features=int(header["features"]),
                learning_rate=float(header["learning_rate"]),
                l2=float(header["l2"]),
                lr_decay=bool(int(header["lr_decay"])),
            )
            model.updates_seen = int(header["updates_seen"])
            for i in range(model.n_classes):
                row = np.array([float(v) for v in fh.readline().split()])
                if row.shape[0] != model.n_features:
                    raise ValueError(f"weight row {i} has wrong length")
                model.weights[i] = row
            bias = np.array([float(v) for v in fh.readline().split()])
            if bias.shape[0] != model.n_classes:
                raise ValueError("bias row has wrong length")
            model.bias = bias
        return model
