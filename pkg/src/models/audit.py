"""Match sets, ROC curves and the audit report document."""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from .base import FairwatchModel


class MatchMembership(str, Enum):
    """Distinguisher verdict for one prediction."""
    MEMBER = "member"
    NON_MEMBER = "non_member"


@dataclass(frozen=True)
class MatchSet:
    """Rows on which the audited classifier and the fair reference agree."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool, copy=True).reshape(-1)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def members(self) -> int:
        return int(self.flags.sum())

    @property
    def non_members(self) -> int:
        return int(self.flags.shape[0] - self.flags.sum())

    @property
    def counts(self) -> Tuple[int, int]:
        return self.members, self.non_members

    def __len__(self) -> int:
        return int(self.flags.shape[0])


class RocCurve(FairwatchModel):
    """ROC of prediction sensitivity against match-set non-membership.

    ``thresholds[i]`` is the score at or above which rows count as predicted
    non-members at point ``i``; the first point (nothing flagged) has none.
    """

    points: List[Tuple[float, float]] = Field(..., min_length=2)
    thresholds: List[Optional[float]]
    auc: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_points(self):
        if len(self.thresholds) != len(self.points):
            raise ValueError("one threshold per ROC point required")
        if self.points[0] != (0.0, 0.0) or self.points[-1] != (1.0, 1.0):
            raise ValueError("ROC must start at (0, 0) and end at (1, 1)")
        return self


class GroupMetrics(FairwatchModel):
    """Group-fairness and accuracy figures of one classifier on the test set."""

    model: Literal["classifier", "reference"]
    accuracy: float = Field(..., ge=0.0, le=1.0)
    positive_rate_protected: Optional[float] = None
    positive_rate_unprotected: Optional[float] = None
    statistical_parity_difference: Optional[float] = None
    disparate_impact_ratio: Optional[float] = None
    notes: List[str] = Field(default_factory=list)


class PsSummary(FairwatchModel):
    """Distribution of prediction sensitivity over a group of rows."""

    count: int = Field(..., ge=0)
    mean: Optional[float] = None
    std: Optional[float] = None
    quantiles: Dict[str, float] = Field(default_factory=dict)


class FeatureContribution(FairwatchModel):
    name: str
    value: float


class AuditRecord(FairwatchModel):
    """Per-row audit detail, written only on request."""

    row_id: int
    ps: float
    psw: List[float] = Field(default_factory=list)
    grad_abs: List[float] = Field(default_factory=list)
    featurewise: List[float] = Field(default_factory=list)
    membership: MatchMembership
    classifier_prediction: int
    reference_prediction: int
    top_features: List[FeatureContribution] = Field(default_factory=list)


class AuditReport(FairwatchModel):
    """Outcome of auditing a classifier against a counterfactually fair reference."""

    config_digest: str
    test_set: str = "original"
    n_rows: int = Field(..., ge=0)
    members: int = Field(..., ge=0)
    non_members: int = Field(..., ge=0)
    auc_status: Literal["computed", "not_applicable"]
    auc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    roc: Optional[RocCurve] = None
    classifier: GroupMetrics
    reference: GroupMetrics
    ps_summary: Dict[str, PsSummary]
    ps_overall: PsSummary
    records: Optional[List[AuditRecord]] = None

    @model_validator(mode="after")
    def validate_counts(self):
        if self.members + self.non_members != self.n_rows:
            raise ValueError("members + non_members must equal n_rows")
        if (self.auc_status == "computed") != (self.auc is not None):
            raise ValueError("auc must be present exactly when auc_status is 'computed'")
        return self
