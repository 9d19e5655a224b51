"""Feed-forward network engine: initialization, inference, training, input gradients.

Networks are ReLU multilayer perceptrons with a single sigmoid output unit.
All evaluation is batched over the rows of a matrix; the single-row entry
points are the one-row case of the same code path.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.special import expit

from ..models.base import content_digest, read_document, write_document
from ..models.dataset import DatasetSchema, EncoderState, Provenance, TabularDataset
from ..models.network import (
    ModelDocument,
    NetworkParams,
    NetworkSpec,
    TrainConfig,
    TrainingMetadata,
)
from .errors import ConfigurationError, DataError, InputError, NumericalFailureError

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5

TargetColumn = Literal["label", "protected"]


@dataclass(frozen=True)
class TrainingRun:
    """Trained parameters plus the per-epoch training loss."""

    params: NetworkParams
    loss_history: List[float]
    train_accuracy: float


def init_network(spec: NetworkSpec) -> NetworkParams:
    """Glorot-uniform weights from a generator seeded by ``spec.seed``; zero biases."""
    if spec.input_dim < 1 or any(w < 1 for w in spec.hidden_widths):
        raise ConfigurationError(f"invalid network dimensions: {spec.layer_dims}")
    rng = np.random.default_rng(spec.seed)
    weights = []
    biases = []
    for rows, cols in spec.layer_dims:
        limit = math.sqrt(6.0 / (cols + rows))
        weights.append(rng.uniform(-limit, limit, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return NetworkParams(spec=spec, weights=tuple(weights), biases=tuple(biases))


def _as_matrix(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InputError(
            f"input has {X.shape[-1] if X.ndim else 0} features, network expects {params.input_dim}"
        )
    if not np.all(np.isfinite(X)):
        raise InputError("input contains non-finite values")
    return X


def _forward_layers(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], X: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Pre-activations and activations of every layer, input first."""
    pre_activations = []
    activations = [X]
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        activations.append(a)
    return pre_activations, activations


def _forward_pass(
    params: NetworkParams, X: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    return _forward_layers(params.weights, params.biases, X)


def logits(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Final pre-activation of every row."""
    pre, _ = _forward_pass(params, _as_matrix(params, X))
    return pre[-1][:, 0]


# Sigmoid saturates to exactly 0.0 or 1.0 once |logit| exceeds about 37;
# probabilities are clipped to stay strictly inside (0, 1).
PROBA_FLOOR = float(np.finfo(np.float64).tiny)
PROBA_CEIL = float(np.nextafter(1.0, 0.0))


def predict_proba(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Sigmoid output of every row of ``X``, clipped to the open interval (0, 1)."""
    return np.clip(expit(logits(params, X)), PROBA_FLOOR, PROBA_CEIL)


def predict(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Hard 0/1 predictions at the 0.5 threshold (0.5 itself is positive)."""
    return (predict_proba(params, X) >= DECISION_THRESHOLD).astype(np.int8)


def forward(params: NetworkParams, x: Sequence[float]) -> float:
    """Probability output for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("forward expects a single input vector")
    return float(predict_proba(params, x)[0])


def input_gradients(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """d(probability)/d(input) for every row, by reverse-mode differentiation.

    ReLU derivative at exactly 0 is taken as 0.
    """
    X = _as_matrix(params, X)
    pre, _ = _forward_pass(params, X)
    p = expit(pre[-1][:, 0])
    delta = (p * (1.0 - p))[:, None] @ params.weights[-1]
    for i in range(params.n_layers - 2, -1, -1):
        delta = delta * (pre[i] > 0.0)
        delta = delta @ params.weights[i]
    return delta


def input_gradient(params: NetworkParams, x: Sequence[float]) -> np.ndarray:
    """Gradient of the output probability with respect to one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("input_gradient expects a single input vector")
    return input_gradients(params, x)[0]


def binary_cross_entropy(z: np.ndarray, y: np.ndarray) -> float:
    """Mean BCE computed from logits: softplus(z) - y*z."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def accuracy(params: NetworkParams, X: np.ndarray, y: np.ndarray) -> float:
    """Fraction of rows whose hard prediction equals ``y``."""
    y = np.asarray(y).reshape(-1)
    if y.shape[0] == 0:
        raise InputError("accuracy of an empty set is undefined")
    return float(np.mean(predict(params, X) == y))


class AdamOptimizer:
    """Adam with bias correction over a list of parameter arrays."""

    def __init__(self, shapes: Sequence[Tuple[int, ...]], cfg: TrainConfig):
        self.learning_rate = cfg.learning_rate
        self.beta1 = cfg.adam_beta1
        self.beta2 = cfg.adam_beta2
        self.epsilon = cfg.adam_epsilon
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        """Return updated copies of ``params``."""
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        updated = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            updated.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon))
        return updated


def _parameter_gradients(
    weights: List[np.ndarray], biases: List[np.ndarray], X: np.ndarray, y: np.ndarray
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Batch BCE loss and its gradients with respect to every weight and bias."""
    pre_activations, activations = _forward_layers(weights, biases, X)
    last = len(weights) - 1

    z_out = pre_activations[-1][:, 0]
    loss = binary_cross_entropy(z_out, y)

    delta = ((expit(z_out) - y) / X.shape[0])[:, None]
    grad_w: List[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(weights)
    for i in range(last, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (pre_activations[i - 1] > 0.0)
    return loss, grad_w, grad_b


def _binary_target(data: TabularDataset, target_column: TargetColumn) -> np.ndarray:
    y = np.asarray(data.target(target_column), dtype=np.float64)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError(f"target column '{target_column}' is not binary {{0,1}}")
    return y


def train_with_history(
    params: NetworkParams,
    data: TabularDataset,
    cfg: TrainConfig,
    target_column: TargetColumn = "label",
) -> TrainingRun:
    """Train with mini-batch Adam and record the full-set loss after each epoch."""
    if data.n_rows == 0:
        raise DataError("cannot train on an empty dataset")
    if data.input_dim != params.input_dim:
        raise ConfigurationError(
            f"dataset has {data.input_dim} features, network expects {params.input_dim}"
        )
    X = data.features
    y = _binary_target(data, target_column)

    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    optimizer = AdamOptimizer([p.shape for p in weights + biases], cfg)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = data.n_rows
    n_layers = len(weights)

    logger.info(
        f"Training {params.spec.layer_dims} on {n} rows, target '{target_column}', "
        f"{cfg.epochs} epochs, batch {cfg.batch_size}, lr {cfg.learning_rate}"
    )

    history: List[float] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for batch, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[start:start + cfg.batch_size]
            loss, grad_w, grad_b = _parameter_gradients(weights, biases, X[idx], y[idx])
            if not math.isfinite(loss):
                raise NumericalFailureError(
                    f"non-finite loss at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch
                )
            updated = optimizer.step(weights + biases, grad_w + grad_b)
            weights, biases = updated[:n_layers], updated[n_layers:]
            if not all(np.all(np.isfinite(p)) for p in updated):
                raise NumericalFailureError(
                    f"non-finite parameter at epoch {epoch}, batch {batch}",
                    epoch=epoch,
                    batch=batch,
                )

        epoch_loss, _, _ = _parameter_gradients(weights, biases, X, y)
        if not math.isfinite(epoch_loss):
            raise NumericalFailureError(f"non-finite loss after epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)
        logger.debug(f"epoch {epoch}: loss {epoch_loss:.6f}")

    trained = NetworkParams(spec=params.spec, weights=tuple(weights), biases=tuple(biases))
    train_acc = accuracy(trained, X, y)
    logger.info(f"Training finished: loss {history[-1]:.6f}, accuracy {train_acc:.4f}")
    return TrainingRun(params=trained, loss_history=history, train_accuracy=train_acc)


def train(
    params: NetworkParams,
    data: TabularDataset,
    cfg: TrainConfig,
    target_column: TargetColumn = "label",
) -> NetworkParams:
    """Train ``params`` on ``data`` and return the updated parameters."""
    return train_with_history(params, data, cfg, target_column).params


def dataset_digest(data: TabularDataset) -> str:
    """Content hash of a dataset's encoded values."""
    return content_digest(
        {
            "columns": data.column_names,
            "features": data.features.tolist(),
            "labels": data.labels.tolist(),
            "protected": data.protected.tolist(),
        }
    )


def training_metadata(
    run: TrainingRun,
    data: TabularDataset,
    cfg: TrainConfig,
    target_column: TargetColumn,
    test: Optional[TabularDataset] = None,
) -> TrainingMetadata:
    """Metadata block stored alongside trained parameters."""
    test_acc = None
    if test is not None and test.n_rows > 0:
        test_acc = accuracy(run.params, test.features, test.target(target_column))
    data_digest = dataset_digest(data)
    config_digest = content_digest(
        {
            "command": "train",
            "spec": run.params.spec.model_dump(mode="json"),
            "train_config": cfg.model_dump(mode="json"),
            "target": target_column,
            "dataset": data_digest,
        }
    )
    return TrainingMetadata(
        target=target_column,
        train_config=cfg,
        n_train=data.n_rows,
        loss_history=run.loss_history,
        train_accuracy=run.train_accuracy,
        test_accuracy=test_acc,
        dataset_digest=data_digest,
        augmented=data.provenance == Provenance.AUGMENTED,
        config_digest=config_digest,
    )


def save_model(
    params: NetworkParams,
    path: Union[str, Path],
    training: Optional[TrainingMetadata] = None,
    dataset_schema: Optional[DatasetSchema] = None,
    encoder: Optional[EncoderState] = None,
) -> Path:
    """Persist a network as a versioned JSON model file."""
    document = params.to_document(training=training, dataset_schema=dataset_schema, encoder=encoder)
    out = write_document(document, path)
    logger.info(f"Saved model {params.digest[:12]} to {out}")
    return out


def load_model(path: Union[str, Path]) -> Tuple[NetworkParams, ModelDocument]:
    """Load a model file, verifying shapes and the stored digest."""
    try:
        document = read_document(ModelDocument, path)
        params = NetworkParams.from_document(document)
    except FileNotFoundError as e:
        raise ConfigurationError(f"model file not found: {path}") from e
    except (ValidationError, ValueError) as e:
        raise ConfigurationError(f"invalid model file {path}: {e}") from e
    return params, document
