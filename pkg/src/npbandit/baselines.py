"""Ridge regression and disjoint LinUCB.

Contexts are augmented with a trailing constant 1; the intercept is left
out of the L2 penalty, so ``gram = X~^T X~ + alpha * diag(1, ..., 1, 0)``.
"""

from __future__ import annotations

import numpy as np

from .core import ValidationError, as_context, as_contexts


class RankDeficientError(np.linalg.LinAlgError):
    pass


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((len(X), 1))])


class RidgeModel:
    """Incrementally updated ridge regressor for a single arm.

    ``gram`` and ``moment`` accumulate sufficient statistics; the inverse
    of the regularized gram is kept current with rank-one
    (Sherman-Morrison) updates once it exists, so decisions cost O(D^2).
    """

    def __init__(self, dim: int, l2_alpha: float = 1.0):
        if l2_alpha < 0:
            raise ValidationError("l2_alpha must be nonnegative")
        self.dim = dim
        self.l2_alpha = float(l2_alpha)
        penalty = np.full(dim + 1, self.l2_alpha)
        penalty[-1] = 0.0
        self.gram = np.diag(penalty)
        self.moment = np.zeros(dim + 1)
        self.count = 0
        self._inv = None
        self._weights = None

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = self.gram_inverse() @ self.moment
        return self._weights

    def gram_inverse(self) -> np.ndarray:
        if self._inv is None:
            try:
                inv = np.linalg.inv(self.gram)
            except np.linalg.LinAlgError:
                inv = None
            if inv is None or np.linalg.matrix_rank(self.gram) < self.dim + 1:
                raise RankDeficientError(
                    f"design matrix has rank {np.linalg.matrix_rank(self.gram)} < {self.dim + 1}; "
                    "add data or use l2_alpha > 0"
                )
            self._inv = inv
        return self._inv

    def update(self, x, y: float) -> None:
        z = np.append(as_context(x, self.dim), 1.0)
        self.gram += np.outer(z, z)
        self.moment += y * z
        self.count += 1
        self._weights = None
        if self.count % 4096 == 0:
            self._inv = None  # bound Sherman-Morrison drift
        elif self._inv is not None:
            Az = self._inv @ z
            self._inv -= np.outer(Az, Az) / (1.0 + z @ Az)

    def refresh(self) -> None:
        """Drop the cached inverse so the next read recomputes it from ``gram``."""
        self._inv = None
        self._weights = None

    def predict(self, X) -> np.ndarray:
        X = as_contexts(X, self.dim)
        return _augment(X) @ self.weights

    def width(self, X) -> np.ndarray:
        """``sqrt(x~^T gram^-1 x~)`` per row."""
        Z = _augment(as_contexts(X, self.dim))
        q = np.einsum("ij,jk,ik->i", Z, self.gram_inverse(), Z)
        return np.sqrt(np.maximum(q, 0.0))


def ridge_fit(contexts, rewards, l2_alpha: float) -> RidgeModel:
    X = as_contexts(contexts)
    y = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if len(X) != len(y):
        raise ValidationError("contexts and rewards differ in length")
    if len(X) < 1:
        raise ValidationError("need at least one observation")
    model = RidgeModel(X.shape[1], l2_alpha)
    Z = _augment(X)
    model.gram += Z.T @ Z
    model.moment += Z.T @ y
    model.count = len(X)
    rank = np.linalg.matrix_rank(model.gram)
    if rank < X.shape[1] + 1:
        raise RankDeficientError(f"design matrix has rank {rank} < {X.shape[1] + 1}")
    model._weights = np.linalg.solve(model.gram, model.moment)
    return model


def linucb_scores(models, X, confidence: float) -> np.ndarray:
    X = as_contexts(X, models[0].dim)
    return np.column_stack([m.predict(X) + confidence * m.width(X) for m in models])


def linucb_decide(models, x, confidence: float) -> int:
    """Arm maximizing prediction + confidence * width; lowest index wins ties."""
    if confidence < 0:
        raise ValidationError("confidence must be nonnegative")
    x = as_context(x, models[0].dim)
    scores = linucb_scores(models, x[None, :], confidence)[0]
    return int(np.argmax(scores))
