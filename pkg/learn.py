"""
Multiclass linear models: one-vs-rest hinge-loss SVM and multinomial
logistic regression, both trained by seeded mini-batch (sub)gradient descent.

Weights are stored as C rows of D + 1 values; the last column is the bias,
applied through a constant-1 feature appended to every (standardised) input.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from config import Config
from errors import (
    EmptyTrainingSetError,
    FeatureMismatchError,
    InconsistentFeatureDimsError,
    KinkTooCloseError,
    LabelOutsideSpaceError,
    ModelError,
    WrongModelKindError,
)
from features import FeatureConfig, FeatureKind, FeatureVector

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8


class ModelKind(str, Enum):
    SVM = "svm"
    LOGREG = "logreg"


class Task(str, Enum):
    COUNTRY = "country"
    YEAR = "year"


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class names for one task; the order fixes weight rows."""

    task: Task
    labels: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise ModelError("label space must not be empty")
        if len(set(labels)) != len(labels):
            raise ModelError(f"label space has duplicate labels: {labels}")
        if len(labels) == 1:
            logger.warning(f"Label space for {Task(self.task).value} has a single class")
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise LabelOutsideSpaceError(
                f"label {label!r} is not one of {list(self.labels)}"
            ) from None


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    l2_lambda: float = 1e-4
    epochs_sgd: int = 100
    batch_size: int = 32
    seed: int = field(default_factory=lambda: Config.SEED)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ModelError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_lambda < 0:
            raise ModelError(f"l2_lambda must be non-negative, got {self.l2_lambda}")
        if self.epochs_sgd < 1:
            raise ModelError(f"epochs_sgd must be at least 1, got {self.epochs_sgd}")
        if self.batch_size < 1:
            raise ModelError(f"batch_size must be at least 1, got {self.batch_size}")


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-dimension shift and scale fitted on the training set."""

    mean: NDArray[np.float64]
    scale: NDArray[np.float64]

    @classmethod
    def fit(cls, X: NDArray[np.float64]) -> "Standardizer":
        mean = X.mean(axis=0)
        variance = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
        return cls(mean=mean, scale=np.sqrt(variance))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), scale=np.ones(dim))

    def transform(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        return (X - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class LinearModel:
    kind: ModelKind
    label_space: LabelSpace
    weights: NDArray[np.float64]
    feature_kind: FeatureKind
    feature_dim: int
    config_fingerprint: str = ""
    standardizer: Optional[Standardizer] = None
    feature_config: Optional[FeatureConfig] = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        expected = (self.label_space.size, self.feature_dim + 1)
        if weights.shape != expected:
            raise ModelError(f"weights have shape {weights.shape}, expected {expected}")
        if not np.all(np.isfinite(weights)):
            raise ModelError("weights contain non-finite values")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "feature_kind", FeatureKind(self.feature_kind))
        if self.standardizer is None:
            object.__setattr__(self, "standardizer", Standardizer.identity(self.feature_dim))
        if self.feature_config is not None and not self.config_fingerprint:
            object.__setattr__(self, "config_fingerprint", self.feature_config.fingerprint())


Objective = Callable[..., Tuple[float, NDArray[np.float64]]]


def add_bias_column(X: NDArray[np.float64]) -> NDArray[np.float64]:
    """Append the constant-1 feature."""
    X = np.atleast_2d(X)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _sample_weights(n: int, sample_weight: Optional[NDArray[np.float64]]) -> NDArray[np.float64]:
    if sample_weight is None:
        return np.ones(n)
    return np.asarray(sample_weight, dtype=np.float64)


def _l2_term(W: NDArray[np.float64], l2_lambda: float) -> Tuple[float, NDArray[np.float64]]:
    """Ridge penalty on every column but the bias."""
    grad = np.zeros_like(W)
    grad[:, :-1] = l2_lambda * W[:, :-1]
    return 0.5 * l2_lambda * float(np.sum(W[:, :-1] ** 2)), grad


def logreg_objective(
    W: NDArray[np.float64],
    Xt: NDArray[np.float64],
    y: NDArray[np.intp],
    l2_lambda: float,
    sample_weight: Optional[NDArray[np.float64]] = None
) -> Tuple[float, NDArray[np.float64]]:
    """
    Mean softmax cross-entropy plus ridge penalty, and its gradient.

    Args:
        W: Weights (C, D+1)
        Xt: Inputs with bias column (n, D+1)
        y: Class indices (n,)
        l2_lambda: Ridge strength (bias excluded)
        sample_weight: Optional per-sample weights; the data term is their weighted mean

    Returns:
        (loss, gradient with the shape of W)
    """
    weight = _sample_weights(Xt.shape[0], sample_weight)
    total = weight.sum()
    logits = Xt @ W.T
    logits = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    log_prob = logits - log_norm
    rows = np.arange(Xt.shape[0])
    data_loss = -float(np.sum(weight * log_prob[rows, y])) / total

    residual = np.exp(log_prob)
    residual[rows, y] -= 1.0
    data_grad = (residual * weight[:, np.newaxis]).T @ Xt / total

    reg_loss, reg_grad = _l2_term(W, l2_lambda)
    return data_loss + reg_loss, data_grad + reg_grad


def _signed_targets(n: int, n_classes: int, y: NDArray[np.intp]) -> NDArray[np.float64]:
    signs = -np.ones((n, n_classes))
    signs[np.arange(n), y] = 1.0
    return signs


def svm_objective(
    W: NDArray[np.float64],
    Xt: NDArray[np.float64],
    y: NDArray[np.intp],
    l2_lambda: float,
    sample_weight: Optional[NDArray[np.float64]] = None
) -> Tuple[float, NDArray[np.float64]]:
    """
    Sum over classes of the one-vs-rest hinge objectives, and a subgradient.

    Class c treats its own samples as +1 and all others as -1; a sample is
    active for c when its margin s * (w_c . x) is below 1.
    """
    weight = _sample_weights(Xt.shape[0], sample_weight)
    total = weight.sum()
    signs = _signed_targets(Xt.shape[0], W.shape[0], y)
    margins = signs * (Xt @ W.T)
    hinge = np.maximum(0.0, 1.0 - margins)
    data_loss = float(np.sum(weight[:, np.newaxis] * hinge)) / total

    active = (margins < 1.0).astype(np.float64)
    coef = -signs * active * weight[:, np.newaxis]
    data_grad = coef.T @ Xt / total

    reg_loss, reg_grad = _l2_term(W, l2_lambda)
    return data_loss + reg_loss, data_grad + reg_grad


OBJECTIVES: Dict[ModelKind, Objective] = {
    ModelKind.SVM: svm_objective,
    ModelKind.LOGREG: logreg_objective,
}


def _stack(X: Sequence[FeatureVector]) -> Tuple[NDArray[np.float64], FeatureKind, int]:
    """Stack feature vectors into a matrix, checking kind and dimension agree."""
    if len(X) == 0:
        raise EmptyTrainingSetError("no training samples")
    kind, dim = X[0].kind, X[0].dim
    for i, vector in enumerate(X):
        if vector.kind != kind or vector.dim != dim:
            raise InconsistentFeatureDimsError(
                f"sample {i} is {vector.kind.value}/{vector.dim}, expected {kind.value}/{dim}"
            )
    return np.vstack([vector.values for vector in X]), kind, dim


def _fit(
    kind: ModelKind,
    X: Sequence[FeatureVector],
    y: Sequence[str],
    ls: LabelSpace,
    tc: TrainConfig,
    cfg: Optional[FeatureConfig] = None
) -> LinearModel:
    if len(X) != len(y):
        raise ModelError(f"{len(X)} samples but {len(y)} labels")
    matrix, feature_kind, dim = _stack(X)
    if matrix.shape[0] < ls.size:
        raise EmptyTrainingSetError(
            f"{matrix.shape[0]} samples cannot cover {ls.size} classes"
        )
    targets = np.array([ls.index(label) for label in y], dtype=np.intp)

    standardizer = Standardizer.fit(matrix)
    Xt = add_bias_column(standardizer.transform(matrix))
    objective = OBJECTIVES[kind]

    W = np.zeros((ls.size, dim + 1))
    rng = np.random.default_rng(tc.seed)
    n = Xt.shape[0]
    for epoch in range(tc.epochs_sgd):
        order = rng.permutation(n)
        for start in range(0, n, tc.batch_size):
            batch = order[start:start + tc.batch_size]
            _, grad = objective(W, Xt[batch], targets[batch], tc.l2_lambda)
            W -= tc.learning_rate * grad

    loss, _ = objective(W, Xt, targets, tc.l2_lambda)
    logger.info(
        f"Trained {kind.value} on {n} samples x {dim} features, "
        f"{ls.size} classes, final loss {loss:.4f}"
    )
    return LinearModel(
        kind=kind,
        label_space=ls,
        weights=W,
        feature_kind=feature_kind,
        feature_dim=dim,
        standardizer=standardizer,
        feature_config=cfg,
    )


def train_logreg(
    X: Sequence[FeatureVector],
    y: Sequence[str],
    ls: LabelSpace,
    tc: TrainConfig,
    cfg: Optional[FeatureConfig] = None
) -> LinearModel:
    """
    Train multinomial logistic regression.

    Args:
        X: Training descriptors, all of one kind and dimension
        y: Label name per descriptor
        ls: Label space defining row order
        tc: Optimiser settings; tc.seed drives the per-epoch shuffle
        cfg: Feature configuration the descriptors were extracted with

    Returns:
        Trained LinearModel (bit-identical for identical inputs and seed)
    """
    return _fit(ModelKind.LOGREG, X, y, ls, tc, cfg)


def train_svm(
    X: Sequence[FeatureVector],
    y: Sequence[str],
    ls: LabelSpace,
    tc: TrainConfig,
    cfg: Optional[FeatureConfig] = None
) -> LinearModel:
    """Train one-vs-rest linear SVMs (same optimiser as train_logreg)."""
    return _fit(ModelKind.SVM, X, y, ls, tc, cfg)


TRAINERS = {
    ModelKind.SVM: train_svm,
    ModelKind.LOGREG: train_logreg,
}


# Prediction

def _check_feature(m: LinearModel, x: FeatureVector) -> None:
    if x.kind != m.feature_kind or x.dim != m.feature_dim:
        raise FeatureMismatchError(
            f"model expects {m.feature_kind.value}/{m.feature_dim}, "
            f"got {x.kind.value}/{x.dim}"
        )


def predict_scores_batch(m: LinearModel, X: Sequence[FeatureVector]) -> NDArray[np.float64]:
    """Raw class scores for a stack of descriptors, shape (n, C)."""
    for x in X:
        _check_feature(m, x)
    matrix = np.vstack([x.values for x in X])
    Xt = add_bias_column(m.standardizer.transform(matrix))
    return Xt @ m.weights.T


def predict_scores(m: LinearModel, x: FeatureVector) -> NDArray[np.float64]:
    """Raw scores W . x~ (x standardised, bias appended)."""
    return predict_scores_batch(m, [x])[0]


def softmax(scores: NDArray[np.float64]) -> NDArray[np.float64]:
    shifted = np.asarray(scores, dtype=np.float64) - np.max(scores, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def predict_proba(m: LinearModel, x: FeatureVector) -> NDArray[np.float64]:
    """
    Class probabilities of a logistic-regression model.

    Every component lies in (0, 1) mathematically. In float64, a score more
    than about 745 below the maximum underflows to exactly 0.0 and the top
    class then rounds to exactly 1.0; the sum stays 1.
    """
    if m.kind != ModelKind.LOGREG:
        raise WrongModelKindError(f"predict_proba needs a logreg model, got {m.kind.value}")
    return softmax(predict_scores(m, x))


def predict_label(m: LinearModel, x: FeatureVector) -> str:
    """Label of the highest score; ties go to the lowest label index."""
    return m.label_space.labels[int(np.argmax(predict_scores(m, x)))]


def predict_labels(m: LinearModel, X: Sequence[FeatureVector]) -> list:
    if len(X) == 0:
        return []
    scores = predict_scores_batch(m, X)
    return [m.label_space.labels[int(i)] for i in np.argmax(scores, axis=1)]


# Gradient verification

def gradient_check(
    kind: ModelKind,
    X: Union[Sequence[FeatureVector], NDArray[np.float64]],
    y: Sequence[str],
    ls: LabelSpace,
    W: NDArray[np.float64],
    eps: float = 1e-5,
    l2_lambda: float = 1e-4
) -> float:
    """
    Compare the analytic gradient with central finite differences.

    Inputs are used as given (no standardisation).

    Returns:
        max over weights of |g_a - g_n| / max(1, |g_a| + |g_n|)

    Raises:
        KinkTooCloseError: for svm, a margin lies within 10 * eps of the hinge
    """
    kind = ModelKind(kind)
    if not 1e-7 <= eps <= 1e-4:
        raise ModelError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    matrix = np.vstack([x.values for x in X]) if not isinstance(X, np.ndarray) else np.atleast_2d(X)
    Xt = add_bias_column(matrix.astype(np.float64))
    targets = np.array([ls.index(label) for label in y], dtype=np.intp)
    W = np.array(W, dtype=np.float64)

    if kind == ModelKind.SVM:
        margins = _signed_targets(Xt.shape[0], ls.size, targets) * (Xt @ W.T)
        if np.any(np.abs(1.0 - margins) < 10 * eps):
            raise KinkTooCloseError("a hinge kink lies within 10*eps of W")

    objective = OBJECTIVES[kind]
    _, analytic = objective(W, Xt, targets, l2_lambda)
    numeric = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        original = W[idx]
        W[idx] = original + eps
        plus, _ = objective(W, Xt, targets, l2_lambda)
        W[idx] = original - eps
        minus, _ = objective(W, Xt, targets, l2_lambda)
        W[idx] = original
        numeric[idx] = (plus - minus) / (2 * eps)

    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))
    return float(error.max())
