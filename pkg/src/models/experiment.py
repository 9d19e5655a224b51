"""Experiment recipes and their per-trial and aggregate results."""

from typing import List, Literal, Optional

from pydantic import Field, field_validator, model_validator

from .base import UINT64_MAX, FairwatchModel
from .dataset import BiasSpec, CausalModelSpec
from .network import TrainConfig

TestSetName = Literal["original", "augmented"]


class SyntheticRecipe(FairwatchModel):
    """Fair graph versus biased graph on two-cluster data."""

    causal: CausalModelSpec = Field(
        default_factory=lambda: CausalModelSpec(n_samples=2000, bias=BiasSpec())
    )
    reference_training: Literal["fair", "augmented"] = Field(
        default="fair",
        description="Train the reference on fair-graph data or on the augmented biased data",
    )
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    test_sets: List[TestSetName] = Field(default_factory=lambda: ["original"])

    @model_validator(mode="after")
    def validate_bias(self):
        if self.causal.bias is None:
            raise ValueError("synthetic experiments need causal.bias")
        return self


class TabularRecipe(FairwatchModel):
    """Audit on a user-supplied CSV with a counterfactually augmented reference."""

    data: str
    schema_path: str
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    test_sets: List[TestSetName] = Field(default_factory=lambda: ["original", "augmented"])


class ExperimentRecipe(FairwatchModel):
    """Everything needed to run a seeded multi-trial audit experiment."""

    kind: Literal["synthetic", "tabular"]
    trials: int = Field(default=30, ge=1)
    seeds: Optional[List[int]] = Field(
        default=None, description="Explicit trial seeds; defaults to 0..trials-1"
    )
    hidden_widths: List[int] = Field(default_factory=lambda: [32])
    train: TrainConfig = Field(default_factory=TrainConfig)
    epochs: List[int] = Field(
        default_factory=list, description="Epoch counts to sweep; empty means train.epochs"
    )
    synthetic: Optional[SyntheticRecipe] = None
    tabular: Optional[TabularRecipe] = None
    k_sigma: float = Field(default=3.0, ge=0.0)
    top_k: int = Field(default=5, ge=0)
    include_records: bool = False

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None:
            if not v:
                raise ValueError("seeds must not be empty")
            if any(s < 0 or s > UINT64_MAX for s in v):
                raise ValueError("seeds must be unsigned 64-bit integers")
            if len(set(v)) != len(v):
                raise ValueError("seeds must be distinct")
        return v

    @field_validator("epochs")
    @classmethod
    def validate_epochs(cls, v: List[int]) -> List[int]:
        if any(e < 1 for e in v):
            raise ValueError("every epoch count must be >= 1")
        return v

    @model_validator(mode="before")
    @classmethod
    def default_synthetic_section(cls, data):
        if isinstance(data, dict) and data.get("kind") == "synthetic" and data.get("synthetic") is None:
            data = {**data, "synthetic": {}}
        return data

    @model_validator(mode="after")
    def validate_kind(self):
        if self.kind == "tabular" and self.tabular is None:
            raise ValueError("tabular experiments need a 'tabular' section")
        return self

    @property
    def trial_seeds(self) -> List[int]:
        return list(self.seeds) if self.seeds is not None else list(range(self.trials))

    @property
    def epoch_sweep(self) -> List[int]:
        return list(self.epochs) or [self.train.epochs]

    @property
    def test_sets(self) -> List[TestSetName]:
        section = self.synthetic if self.kind == "synthetic" else self.tabular
        return list(section.test_sets)


class TrialResult(FairwatchModel):
    """Headline numbers of one audited (seed, epochs, test set) run."""

    seed: int
    epochs: int
    test_set: TestSetName
    auc_status: Literal["computed", "not_applicable"]
    auc: Optional[float] = None
    members: int
    non_members: int
    mean_ps_member: Optional[float] = None
    mean_ps_non_member: Optional[float] = None
    classifier_accuracy: float
    reference_accuracy: float
    classifier_spd: Optional[float] = None
    reference_spd: Optional[float] = None
    classifier_dir: Optional[float] = None
    reference_dir: Optional[float] = None
    member_alarm_rate: Optional[float] = Field(
        default=None, description="Share of match-set rows whose ps exceeds the trial baseline threshold"
    )
    non_member_alarm_rate: Optional[float] = None
    report_path: str


class GroupSummary(FairwatchModel):
    """Aggregate over the trials of one (epochs, test set) combination."""

    epochs: int
    test_set: TestSetName
    n_trials: int
    auc_values: List[float] = Field(default_factory=list)
    auc_mean: Optional[float] = None
    auc_std: Optional[float] = None
    trials_non_member_ps_higher: int = 0
    trials_reference_spd_smaller: int = 0
    trials_reference_dir_closer: int = 0
    trials_non_member_alarm_rate_higher: int = 0
    classifier_accuracy_mean: float
    reference_accuracy_mean: float


class ExperimentSummary(FairwatchModel):
    recipe_digest: str
    kind: Literal["synthetic", "tabular"]
    groups: List[GroupSummary]
    trials: List[TrialResult]
