"""Baseline and event documents of the deployment-time monitor."""

from typing import Dict, List, Literal, Optional

from pydantic import Field, model_validator

from .audit import FeatureContribution
from .base import FairwatchModel

Verdict = Literal["ok", "alarm"]


class Baseline(FairwatchModel):
    """Prediction-sensitivity statistics of a reference set, bound to two models."""

    mean_ps: float = Field(..., ge=0.0)
    std_ps: float = Field(..., ge=0.0)
    n: int = Field(..., ge=1)
    classifier_digest: str
    protected_status_digest: str
    k_sigma: float = Field(default=3.0, ge=0.0)
    quantiles: Dict[str, float] = Field(default_factory=dict)
    outliers: int = Field(default=0, ge=0, description="Reference rows above the alarm threshold")
    feature_names: List[str] = Field(default_factory=list)
    protected_deploy_absent: bool = Field(
        default=False, description="Protected slot was filled with the neutral value before scoring"
    )
    protected_index: Optional[int] = Field(default=None, ge=0)
    config_digest: Optional[str] = None

    def threshold(self, k_sigma: Optional[float] = None) -> float:
        """Alarm threshold mean + k * std."""
        k = self.k_sigma if k_sigma is None else k_sigma
        return self.mean_ps + k * self.std_ps

    @property
    def model_digests(self) -> Dict[str, str]:
        return {
            "classifier": self.classifier_digest,
            "protected_status": self.protected_status_digest,
        }


class AlarmEvent(FairwatchModel):
    """Verdict of the alarm rule for one prediction."""

    row_id: Optional[int] = None
    ps: float = Field(..., ge=0.0)
    threshold: float
    verdict: Verdict
    top_features: List[FeatureContribution] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_verdict(self):
        if (self.verdict == "alarm") != (self.ps > self.threshold):
            raise ValueError("verdict must be 'alarm' exactly when ps exceeds the threshold")
        return self


class MonitorEvent(FairwatchModel):
    """One line of monitor output; ``error`` is set instead of scores for bad rows."""

    row_id: int
    probability: Optional[float] = None
    prediction: Optional[int] = None
    ps: Optional[float] = None
    verdict: Optional[Verdict] = None
    threshold: Optional[float] = None
    top_features: List[FeatureContribution] = Field(default_factory=list)
    error: Optional[str] = None

    @property
    def is_alarm(self) -> bool:
        return self.verdict == "alarm"


class MonitorSummary(FairwatchModel):
    """Totals of a batch monitor run."""

    rows: int = Field(default=0, ge=0)
    alarms: int = Field(default=0, ge=0)
    errors: int = Field(default=0, ge=0)
    k_sigma: float
    threshold: float

    @property
    def alarm_rate(self) -> float:
        scored = self.rows - self.errors
        return self.alarms / scored if scored else 0.0
