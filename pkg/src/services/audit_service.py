"""Counterfactual-fairness audit of a classifier against a fair reference.

The match set holds the test rows on which the audited classifier F and a
counterfactually fair reference F_hat agree. Prediction sensitivity is then
evaluated as a detector of non-members: a threshold distinguisher flags a
row as a non-member when its sensitivity exceeds theta, and sweeping theta
gives the ROC curve.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..models.audit import (
    AuditRecord,
    AuditReport,
    GroupMetrics,
    MatchMembership,
    MatchSet,
    PsSummary,
    RocCurve,
)
from ..models.base import content_digest
from ..models.dataset import TabularDataset
from ..models.network import NetworkParams
from .errors import ConfigurationError, InputError, UndefinedMetricError
from .network_service import dataset_digest, predict
from .sensitivity_service import prediction_sensitivities

logger = logging.getLogger(__name__)

PS_QUANTILES = (0.5, 0.9, 0.99)


def build_match_set(F: NetworkParams, F_hat: NetworkParams, test: TabularDataset) -> MatchSet:
    """Flag the rows on which both classifiers make the same hard prediction."""
    for name, params in (("classifier", F), ("reference", F_hat)):
        if params.input_dim != test.input_dim:
            raise ConfigurationError(
                f"{name} expects {params.input_dim} inputs, test data has {test.input_dim}"
            )
    if test.n_rows == 0:
        return MatchSet(flags=np.zeros(0, dtype=bool))
    return MatchSet(flags=predict(F, test.features) == predict(F_hat, test.features))


def distinguish(ps: float, theta: float) -> MatchMembership:
    """Member iff ``ps <= theta``."""
    return MatchMembership.MEMBER if ps <= theta else MatchMembership.NON_MEMBER


def roc_curve(scores: Sequence[float], positives: Sequence[bool]) -> RocCurve:
    """ROC of ``scores`` as a detector of ``positives``, one step per distinct score.

    The AUC is accumulated from integer counts, so it equals the pairwise
    statistic P(s_pos > s_neg) + P(tie) / 2 exactly.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(positives, dtype=bool).reshape(-1)
    if s.shape != y.shape:
        raise InputError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    if not np.all(np.isfinite(s)):
        raise InputError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = int(y.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )

    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each run of equal scores
    ends = np.nonzero(np.diff(s_sorted))[0]
    ends = np.append(ends, s_sorted.shape[0] - 1)
    tp = np.concatenate([[0], np.cumsum(y_sorted, dtype=np.int64)[ends]])
    fp = np.concatenate([[0], np.cumsum(~y_sorted, dtype=np.int64)[ends]])

    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * n_pos * n_neg)

    points = [(int(f) / n_neg, int(t) / n_pos) for f, t in zip(fp, tp)]
    thresholds: List[Optional[float]] = [None] + [float(v) for v in s_sorted[ends]]
    return RocCurve(points=points, thresholds=thresholds, auc=auc)


def _group_rates(preds: np.ndarray, protected: np.ndarray) -> tuple:
    preds = np.asarray(preds).reshape(-1).astype(bool)
    protected = np.asarray(protected).reshape(-1)
    if preds.shape != protected.shape:
        raise InputError(f"{preds.shape[0]} predictions for {protected.shape[0]} protected values")
    group1 = protected == 1
    group0 = protected == 0
    if not np.all(group1 | group0):
        raise InputError("protected values must be 0 or 1")
    if not group1.any() or not group0.any():
        raise UndefinedMetricError("both protected groups must be non-empty")
    return float(preds[group1].mean()), float(preds[group0].mean())


def statistical_parity_difference(preds: Sequence[bool], protected: Sequence[float]) -> float:
    """Pr(positive | protected=1) - Pr(positive | protected=0)."""
    rate1, rate0 = _group_rates(np.asarray(preds), np.asarray(protected))
    return rate1 - rate0


def disparate_impact_ratio(preds: Sequence[bool], protected: Sequence[float]) -> float:
    """min(rate1/rate0, rate0/rate1); 1.0 means parity."""
    rate1, rate0 = _group_rates(np.asarray(preds), np.asarray(protected))
    if rate1 == 0.0 and rate0 == 0.0:
        raise UndefinedMetricError("no positive predictions in either protected group")
    if rate1 == 0.0 or rate0 == 0.0:
        return 0.0
    return min(rate1 / rate0, rate0 / rate1)


def group_metrics(model: str, preds: np.ndarray, test: TabularDataset) -> GroupMetrics:
    """Accuracy and group-fairness metrics; undefined metrics are noted, not raised."""
    notes: List[str] = []
    acc = float(np.mean(preds == test.labels)) if test.n_rows else 0.0
    rates = spd = dir_ = None
    try:
        rates = _group_rates(preds, test.protected)
        spd = rates[0] - rates[1]
    except UndefinedMetricError as e:
        notes.append(f"statistical_parity_difference: {e}")
    if rates is not None:
        try:
            dir_ = disparate_impact_ratio(preds, test.protected)
        except UndefinedMetricError as e:
            notes.append(f"disparate_impact_ratio: {e}")
    for note in notes:
        logger.warning(f"{model}: undefined metric, {note}")
    return GroupMetrics(
        model=model,
        accuracy=acc,
        positive_rate_protected=rates[0] if rates else None,
        positive_rate_unprotected=rates[1] if rates else None,
        statistical_parity_difference=spd,
        disparate_impact_ratio=dir_,
        notes=notes,
    )


def summarize_ps(ps: np.ndarray) -> PsSummary:
    """Count, mean, population std and upper quantiles of a ps sample."""
    ps = np.asarray(ps, dtype=np.float64)
    if ps.shape[0] == 0:
        return PsSummary(count=0)
    quantiles: Dict[str, float] = {
        f"q{q:g}": float(np.quantile(ps, q)) for q in PS_QUANTILES
    }
    quantiles["max"] = float(ps.max())
    return PsSummary(
        count=int(ps.shape[0]),
        mean=float(ps.mean()),
        std=float(ps.std()),
        quantiles=quantiles,
    )


def audit_config_digest(
    F: NetworkParams, F_hat: NetworkParams, A: NetworkParams, test: TabularDataset
) -> str:
    """Digest identifying the models and test data of an audit."""
    return content_digest(
        {
            "classifier": F.digest,
            "reference": F_hat.digest,
            "protected_status": A.digest,
            "test": dataset_digest(test),
        }
    )


def audit_report(
    F: NetworkParams,
    F_hat: NetworkParams,
    A: NetworkParams,
    test: TabularDataset,
    include_records: bool = False,
    config_digest: Optional[str] = None,
    test_set: str = "original",
    top_k: int = 5,
    workers: int = 1,
) -> AuditReport:
    """Full audit of F against F_hat on ``test`` with A as the protected-status model."""
    if A.input_dim != test.input_dim:
        raise ConfigurationError(
            f"protected-status model expects {A.input_dim} inputs, test data has {test.input_dim}"
        )
    match = build_match_set(F, F_hat, test)
    batch = prediction_sensitivities(A, F, test.features, workers=workers)
    preds_f = predict(F, test.features) if test.n_rows else np.zeros(0, dtype=np.int8)
    preds_ref = predict(F_hat, test.features) if test.n_rows else np.zeros(0, dtype=np.int8)

    roc = None
    auc = None
    auc_status = "not_applicable"
    if match.members and match.non_members:
        roc = roc_curve(batch.ps, ~match.flags)
        auc = roc.auc
        auc_status = "computed"
    else:
        logger.warning(
            f"AUC not applicable: {match.members} members, {match.non_members} non-members"
        )

    records = None
    if include_records:
        k = min(top_k, test.input_dim)
        records = []
        for i in range(test.n_rows):
            records.append(
                AuditRecord(
                    row_id=int(test.row_ids[i]),
                    membership=(
                        MatchMembership.MEMBER if match.flags[i] else MatchMembership.NON_MEMBER
                    ),
                    classifier_prediction=int(preds_f[i]),
                    reference_prediction=int(preds_ref[i]),
                    **batch.record(i).to_dict(test.column_names, k),
                )
            )

    report = AuditReport(
        config_digest=config_digest or audit_config_digest(F, F_hat, A, test),
        test_set=test_set,
        n_rows=test.n_rows,
        members=match.members,
        non_members=match.non_members,
        auc_status=auc_status,
        auc=auc,
        roc=roc,
        classifier=group_metrics("classifier", preds_f, test),
        reference=group_metrics("reference", preds_ref, test),
        ps_summary={
            MatchMembership.MEMBER.value: summarize_ps(batch.ps[match.flags]),
            MatchMembership.NON_MEMBER.value: summarize_ps(batch.ps[~match.flags]),
        },
        ps_overall=summarize_ps(batch.ps),
        records=records,
    )
    logger.info(
        f"Audit ({test_set}): {report.members} members, {report.non_members} non-members, "
        f"AUC {'n/a' if auc is None else f'{auc:.4f}'}"
    )
    return report


def write_roc_csv(roc: RocCurve, path: Union[str, Path]) -> Path:
    """Plot-ready ROC points with header ``threshold,fpr,tpr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "threshold": [float("inf") if t is None else t for t in roc.thresholds],
            "fpr": [p[0] for p in roc.points],
            "tpr": [p[1] for p in roc.points],
        }
    )
    frame.to_csv(path, index=False)
    return path
