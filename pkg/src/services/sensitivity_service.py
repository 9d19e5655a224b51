"""Protected-status feature weights and prediction sensitivity.

For a classifier F and a protected-status model A over the same inputs:

    PSW(x) = |dA/dx|                       (element-wise)
    PS(x)  = sum_i PSW(x)[i] * |dF/dx|[i]

The per-feature products are kept so a high score can be traced to the
features driving it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.network import NetworkParams
from .errors import ConfigurationError, InputError
from .network_service import input_gradient, input_gradients

logger = logging.getLogger(__name__)

# Rows per gradient evaluation; fixed so results never depend on worker count.
CHUNK_ROWS = 4096


@dataclass(frozen=True)
class SensitivityRecord:
    """Prediction sensitivity of a single example."""

    psw: np.ndarray
    pred_grad_abs: np.ndarray
    featurewise: np.ndarray
    ps: float

    @property
    def input_dim(self) -> int:
        return int(self.psw.shape[0])

    def to_dict(self, names: Sequence[str], k: int = 5) -> Dict[str, Any]:
        """JSON-ready form including the top-k feature contributions."""
        k = min(k, self.input_dim)
        return {
            "ps": self.ps,
            "psw": self.psw.tolist(),
            "grad_abs": self.pred_grad_abs.tolist(),
            "featurewise": self.featurewise.tolist(),
            "top_features": [
                {"name": name, "value": value} for name, value in top_features(self, k, names)
            ],
        }


@dataclass(frozen=True)
class SensitivityBatch:
    """Prediction sensitivity of many examples, one row per example."""

    psw: np.ndarray
    pred_grad_abs: np.ndarray
    featurewise: np.ndarray
    ps: np.ndarray

    def __len__(self) -> int:
        return int(self.ps.shape[0])

    def record(self, i: int) -> SensitivityRecord:
        return SensitivityRecord(
            psw=self.psw[i],
            pred_grad_abs=self.pred_grad_abs[i],
            featurewise=self.featurewise[i],
            ps=float(self.ps[i]),
        )


def ordered_row_sums(matrix: np.ndarray) -> np.ndarray:
    """Row sums accumulated left to right in ascending column index.

    numpy's reductions use pairwise summation, whose association order
    differs from a plain left-to-right sum for wide rows.
    """
    matrix = np.atleast_2d(matrix)
    total = np.zeros(matrix.shape[0])
    for j in range(matrix.shape[1]):
        total = total + matrix[:, j]
    return total


def _check_pair(A: NetworkParams, F: NetworkParams) -> None:
    if A.input_dim != F.input_dim:
        raise ConfigurationError(
            f"protected-status model expects {A.input_dim} inputs, classifier {F.input_dim}"
        )


def protected_status_weights(A: NetworkParams, x: Sequence[float]) -> np.ndarray:
    """Element-wise absolute input gradient of the protected-status model."""
    return np.abs(input_gradient(A, x))


def sensitivity_from_gradients(
    grad_a: Sequence[float], grad_f: Sequence[float]
) -> SensitivityRecord:
    """Combine the two input gradients of one example into a record."""
    psw = np.abs(np.asarray(grad_a, dtype=np.float64))
    pred_grad_abs = np.abs(np.asarray(grad_f, dtype=np.float64))
    if psw.shape != pred_grad_abs.shape or psw.ndim != 1:
        raise ConfigurationError(
            f"gradient shapes differ: {psw.shape} vs {pred_grad_abs.shape}"
        )
    featurewise = psw * pred_grad_abs
    ps = float(ordered_row_sums(featurewise[None, :])[0])
    return SensitivityRecord(psw=psw, pred_grad_abs=pred_grad_abs, featurewise=featurewise, ps=ps)


def prediction_sensitivity(
    A: NetworkParams, F: NetworkParams, x: Sequence[float]
) -> SensitivityRecord:
    """Prediction sensitivity of F at ``x`` weighted by A's protected-status gradient."""
    _check_pair(A, F)
    return sensitivity_from_gradients(input_gradient(A, x), input_gradient(F, x))


def _batch_chunk(A: NetworkParams, F: NetworkParams, X: np.ndarray) -> Tuple[np.ndarray, ...]:
    psw = np.abs(input_gradients(A, X))
    pred_grad_abs = np.abs(input_gradients(F, X))
    featurewise = psw * pred_grad_abs
    return psw, pred_grad_abs, featurewise, ordered_row_sums(featurewise)


def prediction_sensitivities(
    A: NetworkParams,
    F: NetworkParams,
    X: np.ndarray,
    workers: int = 1,
) -> SensitivityBatch:
    """Prediction sensitivity of every row of ``X``.

    Chunks may be evaluated on a thread pool; output order always matches
    input order.
    """
    _check_pair(A, F)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("prediction_sensitivities expects a 2-D matrix")
    if X.shape[1] != F.input_dim:
        raise InputError(f"input has {X.shape[1]} features, models expect {F.input_dim}")
    if X.shape[0] == 0:
        empty = np.zeros((0, X.shape[1]))
        return SensitivityBatch(empty, empty.copy(), empty.copy(), np.zeros(0))

    chunks = [X[i:i + CHUNK_ROWS] for i in range(0, X.shape[0], CHUNK_ROWS)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _batch_chunk(A, F, c), chunks))
    else:
        parts = [_batch_chunk(A, F, c) for c in chunks]

    psw, pred_grad_abs, featurewise, ps = (np.concatenate(p) for p in zip(*parts))
    logger.debug(f"Computed prediction sensitivity for {X.shape[0]} rows")
    return SensitivityBatch(psw=psw, pred_grad_abs=pred_grad_abs, featurewise=featurewise, ps=ps)


def top_features(
    record: SensitivityRecord, k: int, names: Optional[Sequence[str]] = None
) -> List[Tuple[str, float]]:
    """The k largest feature-wise contributions, descending, ties by column index."""
    d = record.input_dim
    if names is None:
        names = [f"x{i}" for i in range(d)]
    if len(names) != d:
        raise InputError(f"{len(names)} names given for {d} features")
    if k < 0 or k > d:
        raise InputError(f"k must be between 0 and {d}, got {k}")
    values = record.featurewise
    order = sorted(range(d), key=lambda i: (-values[i], i))[:k]
    return [(names[i], float(values[i])) for i in order]
