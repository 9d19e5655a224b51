"""Continual audit of a deployed classifier.

A baseline of prediction sensitivity is computed on a reference set at
training time. Live predictions whose sensitivity exceeds
``mean + k_sigma * std`` raise an alarm; the prediction itself is never
altered.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..models.audit import FeatureContribution
from ..models.base import content_digest, read_document, write_document
from ..models.dataset import TabularDataset
from ..models.monitor import AlarmEvent, Baseline, MonitorEvent, MonitorSummary
from ..models.network import NetworkParams
from .audit_service import summarize_ps
from .dataset_service import DEPLOY_ABSENT_FILL, TabularEncoder
from .errors import ConfigurationError, DigestMismatchError, FairwatchError, InputError
from .network_service import DECISION_THRESHOLD, dataset_digest, predict_proba
from .sensitivity_service import prediction_sensitivities, top_features

logger = logging.getLogger(__name__)

StreamRow = Union[Mapping[str, Any], Sequence[float], np.ndarray, Exception]


def neutralize_protected(X: np.ndarray, protected_index: Optional[int]) -> np.ndarray:
    """Copy of ``X`` with the protected slot set to the deploy-absent fill value."""
    if protected_index is None:
        raise ConfigurationError("deploy-absent scoring needs the protected feature index")
    X = np.array(X, dtype=np.float64, copy=True)
    X[:, protected_index] = DEPLOY_ABSENT_FILL
    return X


def compute_baseline(
    F: NetworkParams,
    A: NetworkParams,
    reference: TabularDataset,
    k_sigma: float = 3.0,
    workers: int = 1,
    deploy_absent: bool = False,
    protected_index: Optional[int] = None,
) -> Baseline:
    """Mean and population standard deviation of ps over the reference rows.

    With ``deploy_absent`` the protected slot of every reference row is
    filled exactly as the monitor fills live rows, so both see the same
    input distribution.
    """
    if reference.n_rows == 0:
        raise InputError("baseline reference set is empty")
    if k_sigma < 0:
        raise InputError(f"k_sigma must be >= 0, got {k_sigma}")
    index = reference.protected_index if protected_index is None else protected_index
    X = neutralize_protected(reference.features, index) if deploy_absent else reference.features
    ps = prediction_sensitivities(A, F, X, workers=workers).ps
    summary = summarize_ps(ps)
    baseline = Baseline(
        mean_ps=summary.mean,
        std_ps=summary.std,
        n=summary.count,
        classifier_digest=F.digest,
        protected_status_digest=A.digest,
        k_sigma=k_sigma,
        quantiles=summary.quantiles,
        outliers=0,
        feature_names=reference.column_names,
        protected_deploy_absent=deploy_absent,
        protected_index=index,
        config_digest=content_digest(
            {
                "command": "baseline",
                "classifier": F.digest,
                "protected_status": A.digest,
                "reference": dataset_digest(reference),
                "k_sigma": k_sigma,
                "deploy_absent": deploy_absent,
            }
        ),
    )
    outliers = int(np.sum(ps > baseline.threshold()))
    baseline = baseline.model_copy(update={"outliers": outliers})
    if baseline.n < 2:
        logger.warning("Baseline built from a single row; std is 0")
    logger.info(
        f"Baseline over {baseline.n} rows: mean ps {baseline.mean_ps:.6g}, "
        f"std {baseline.std_ps:.6g}, {outliers} reference outliers at k={k_sigma:g}"
    )
    return baseline


def verify_digests(baseline: Baseline, F: NetworkParams, A: NetworkParams) -> None:
    """Refuse to monitor with models other than the ones the baseline was built from."""
    live = {"classifier": F.digest, "protected_status": A.digest}
    for role, digest in baseline.model_digests.items():
        if live[role] != digest:
            raise DigestMismatchError(
                f"{role} model digest {live[role][:12]} does not match baseline {digest[:12]}"
            )


def check(
    ps: float,
    baseline: Baseline,
    k_sigma: float = 3.0,
    live_digests: Optional[Mapping[str, str]] = None,
    row_id: Optional[int] = None,
) -> AlarmEvent:
    """Alarm iff ``ps > mean_ps + k_sigma * std_ps``."""
    if live_digests is not None:
        for role, digest in baseline.model_digests.items():
            if live_digests.get(role) != digest:
                raise DigestMismatchError(f"{role} model digest does not match baseline")
    if k_sigma < 0:
        raise InputError(f"k_sigma must be >= 0, got {k_sigma}")
    threshold = baseline.threshold(k_sigma)
    return AlarmEvent(
        row_id=row_id,
        ps=ps,
        threshold=threshold,
        verdict="alarm" if ps > threshold else "ok",
    )


class SensitivityMonitor:
    """Scores a stream of rows with F and checks each against the baseline.

    Rows are either raw records keyed by column name (encoded with the
    encoder frozen at training time) or already-encoded vectors. Events come
    out in input order.
    """

    def __init__(
        self,
        F: NetworkParams,
        A: NetworkParams,
        baseline: Baseline,
        k_sigma: float = 3.0,
        top_k: int = 5,
        encoder: Optional[TabularEncoder] = None,
        feature_names: Optional[Sequence[str]] = None,
        protected_index: Optional[int] = None,
        deploy_absent: bool = False,
        batch_size: int = 256,
        workers: int = 1,
    ):
        verify_digests(baseline, F, A)
        if F.input_dim != A.input_dim:
            raise ConfigurationError(
                f"classifier expects {F.input_dim} inputs, protected-status model {A.input_dim}"
            )
        if k_sigma < 0:
            raise InputError(f"k_sigma must be >= 0, got {k_sigma}")
        if batch_size < 1:
            raise InputError("batch_size must be >= 1")
        self.F = F
        self.A = A
        self.baseline = baseline
        self.k_sigma = k_sigma
        self.threshold = baseline.threshold(k_sigma)
        self.encoder = encoder
        if encoder is not None:
            feature_names = [c.name for c in encoder.columns]
            protected_index = encoder.protected_index
            if protected_index is not None:
                deploy_absent = deploy_absent or encoder.schema.protected_deploy_absent
        deploy_absent = deploy_absent or baseline.protected_deploy_absent
        if protected_index is None:
            protected_index = baseline.protected_index
        if deploy_absent and protected_index is None:
            raise ConfigurationError("deploy-absent monitoring needs the protected feature index")
        if deploy_absent != baseline.protected_deploy_absent:
            logger.warning(
                "Baseline and monitor disagree on filling the protected slot; "
                "rebuild the baseline with the same setting"
            )
        self.feature_names = list(feature_names or baseline.feature_names) or [
            f"x{i}" for i in range(F.input_dim)
        ]
        if len(self.feature_names) != F.input_dim:
            raise ConfigurationError(
                f"{len(self.feature_names)} feature names for {F.input_dim} model inputs"
            )
        self.top_k = min(top_k, F.input_dim)
        self.protected_index = protected_index
        self.deploy_absent = deploy_absent
        self.batch_size = batch_size
        self.workers = workers
        self.summary = MonitorSummary(k_sigma=k_sigma, threshold=self.threshold)
        self.logger = logging.getLogger(__name__)

    def encode(self, row: StreamRow) -> np.ndarray:
        """Encoded feature vector of one stream row."""
        if isinstance(row, Exception):
            raise row
        if isinstance(row, Mapping):
            if self.encoder is None:
                raise InputError("keyed rows need the encoder stored with the model")
            x = self.encoder.encode_record(row, allow_missing_protected=self.deploy_absent)
        else:
            try:
                x = np.asarray(row, dtype=np.float64).reshape(-1)
            except (TypeError, ValueError) as e:
                raise InputError(f"row is not numeric: {e}") from e
        if x.shape[0] != self.F.input_dim:
            raise InputError(f"row has {x.shape[0]} features, model expects {self.F.input_dim}")
        if not np.all(np.isfinite(x)):
            raise InputError("row contains non-finite values")
        if self.deploy_absent:
            x = x.copy()
            x[self.protected_index] = DEPLOY_ABSENT_FILL
        return x

    def _score(self, start: int, rows: List[StreamRow]) -> List[MonitorEvent]:
        encoded: Dict[int, np.ndarray] = {}
        errors: Dict[int, str] = {}
        for offset, row in enumerate(rows):
            try:
                encoded[offset] = self.encode(row)
            except (FairwatchError, ValueError, TypeError) as e:
                errors[offset] = str(e)
                self.logger.warning(f"Row {start + offset}: {e}")

        scored: Dict[int, MonitorEvent] = {}
        if encoded:
            offsets = sorted(encoded)
            X = np.vstack([encoded[o] for o in offsets])
            probs = predict_proba(self.F, X)
            batch = prediction_sensitivities(self.A, self.F, X, workers=self.workers)
            for j, offset in enumerate(offsets):
                record = batch.record(j)
                event = check(record.ps, self.baseline, self.k_sigma, row_id=start + offset)
                contributions = []
                if event.verdict == "alarm":
                    contributions = [
                        FeatureContribution(name=n, value=v)
                        for n, v in top_features(record, self.top_k, self.feature_names)
                    ]
                scored[offset] = MonitorEvent(
                    row_id=start + offset,
                    probability=float(probs[j]),
                    prediction=int(probs[j] >= DECISION_THRESHOLD),
                    ps=record.ps,
                    verdict=event.verdict,
                    threshold=event.threshold,
                    top_features=contributions,
                )

        events = []
        for offset in range(len(rows)):
            if offset in errors:
                events.append(MonitorEvent(row_id=start + offset, error=errors[offset]))
            else:
                events.append(scored[offset])
        return events

    def monitor_stream(self, rows: Iterable[StreamRow]) -> Iterator[MonitorEvent]:
        """Yield one event per input row, in input order."""
        pending: List[StreamRow] = []
        start = 0
        for row in rows:
            pending.append(row)
            if len(pending) >= self.batch_size:
                yield from self._emit(start, pending)
                start += len(pending)
                pending = []
        if pending:
            yield from self._emit(start, pending)

    def _emit(self, start: int, rows: List[StreamRow]) -> Iterator[MonitorEvent]:
        for event in self._score(start, rows):
            self.summary = self.summary.model_copy(
                update={
                    "rows": self.summary.rows + 1,
                    "alarms": self.summary.alarms + int(event.is_alarm),
                    "errors": self.summary.errors + int(event.error is not None),
                }
            )
            yield event


def read_stream(path: Union[str, Path], chunk_rows: int = 1024) -> Iterator[StreamRow]:
    """Rows of an NDJSON (one object per line) or CSV stream file.

    Unparseable NDJSON lines are yielded as ``InputError`` instances so the
    monitor reports them in place.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"stream file not found: {path}")
    if path.suffix.lower() == ".csv":
        for chunk in pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True, chunksize=chunk_rows
        ):
            yield from chunk.to_dict(orient="records")
        return
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                yield InputError(f"line {line_no}: invalid JSON: {e.msg}")
                continue
            if not isinstance(row, (dict, list)):
                yield InputError(f"line {line_no}: expected an object or array")
                continue
            yield row


def save_baseline(baseline: Baseline, path: Union[str, Path]) -> Path:
    out = write_document(baseline, path)
    logger.info(f"Saved baseline to {out}")
    return out


def load_baseline(path: Union[str, Path]) -> Baseline:
    try:
        return read_document(Baseline, path)
    except FileNotFoundError as e:
        raise ConfigurationError(f"baseline file not found: {path}") from e
    except (ValidationError, ValueError) as e:
        raise ConfigurationError(f"invalid baseline {path}: {e}") from e
