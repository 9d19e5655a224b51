"""Dataset schema, synthetic causal-model spec and encoded tabular datasets."""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from .base import UINT64_MAX, FairwatchModel


class Provenance(str, Enum):
    """Where a dataset came from."""
    ORIGINAL = "original"
    FAIR_SYNTHETIC = "fair-synthetic"
    BIASED_SYNTHETIC = "biased-synthetic"
    AUGMENTED = "augmented"


class ColumnSchema(FairwatchModel):
    """One raw CSV column used as a model feature."""

    name: str = Field(..., min_length=1)
    kind: Literal["numeric", "categorical"]
    levels: Optional[List[str]] = Field(
        default=None, description="Declared categorical levels, in encoding order"
    )
    standardize: bool = Field(
        default=True, description="Standardize numeric values with training statistics"
    )

    @model_validator(mode="after")
    def validate_levels(self):
        """Levels only make sense for categoricals and must be unique."""
        if self.levels is not None:
            if self.kind != "categorical":
                raise ValueError(f"column '{self.name}': levels given for a numeric column")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"column '{self.name}': duplicate levels")
        return self


class DatasetSchema(FairwatchModel):
    """Schema document describing a CSV file."""

    columns: List[ColumnSchema] = Field(..., min_length=1)
    label: str = Field(..., min_length=1)
    protected: str = Field(..., min_length=1)
    positive_label_value: str
    protected_one_value: str
    protected_deploy_absent: bool = Field(
        default=False, description="Protected attribute is unavailable at prediction time"
    )
    include_protected: bool = Field(
        default=True, description="Keep the protected attribute as a model input"
    )
    provenance: Provenance = Provenance.ORIGINAL

    @field_validator("positive_label_value", "protected_one_value", mode="before")
    @classmethod
    def coerce_to_string(cls, v):
        """Raw cells are compared as stripped strings."""
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return str(v)
        return v

    @model_validator(mode="after")
    def validate_columns(self):
        """Column names are unique and the label is never a feature."""
        names = [c.name for c in self.columns]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate column names: {duplicates}")
        if self.label in names:
            raise ValueError(f"label column '{self.label}' must not be listed as a feature")
        if self.label == self.protected:
            raise ValueError("label and protected columns must differ")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [c.name for c in self.columns]

    def raw_columns(self) -> List[str]:
        """Every raw column the schema needs from a CSV header."""
        names = self.feature_names
        if self.protected not in names:
            names = names + [self.protected]
        return names + [self.label]


class BiasSpec(FairwatchModel):
    """Label-conditional protected-attribute probabilities (graph with bias)."""

    p_protected_given_positive: float = Field(default=0.25, ge=0.0, le=1.0)
    p_protected_given_negative: float = Field(default=0.75, ge=0.0, le=1.0)


class CausalModelSpec(FairwatchModel):
    """Parameters of the two-cluster synthetic data generator."""

    n_samples: int = Field(..., ge=1)
    class_means: Tuple[Tuple[float, float], Tuple[float, float]] = ((-1.0, -1.0), (1.0, 1.0))
    class_stddev: float = Field(default=1.0, gt=0.0)
    bias: Optional[BiasSpec] = None
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)

    @model_validator(mode="after")
    def validate_means(self):
        if tuple(self.class_means[0]) == tuple(self.class_means[1]):
            raise ValueError("class_means must be distinct")
        return self


class NumericStats(FairwatchModel):
    """Frozen standardization statistics of a numeric column."""

    mean: float
    scale: float = Field(..., gt=0.0)


class EncoderState(FairwatchModel):
    """Fitted encoder state persisted inside model files."""

    numeric: Dict[str, NumericStats] = Field(default_factory=dict)
    levels: Dict[str, List[str]] = Field(default_factory=dict)


@dataclass(frozen=True)
class FeatureColumn:
    """One encoded feature column."""

    name: str
    kind: Literal["numeric", "categorical", "protected"]
    group: str
    level: Optional[str] = None


@dataclass(frozen=True)
class TabularDataset:
    """Encoded feature matrix with binary labels and a protected attribute.

    ``protected`` always holds the 0/1 protected status of every row; when the
    attribute is also a model input, ``protected_index`` is its column in
    ``features`` and the two are kept identical.
    """

    columns: Tuple[FeatureColumn, ...]
    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    protected_index: Optional[int]
    provenance: Provenance
    row_ids: np.ndarray
    unseen_levels: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(-1)
        protected = np.array(self.protected, dtype=np.float64, copy=True).reshape(-1)
        row_ids = np.array(self.row_ids, dtype=np.int64, copy=True).reshape(-1)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = features.shape
        if len(self.columns) != d:
            raise ValueError(f"{len(self.columns)} column descriptors for {d} feature columns")
        if labels.shape[0] != n or protected.shape[0] != n or row_ids.shape[0] != n:
            raise ValueError("features, labels, protected and row_ids must have equal length")
        if self.protected_index is not None:
            if not 0 <= self.protected_index < d:
                raise ValueError(f"protected index {self.protected_index} out of range")
            if not np.array_equal(features[:, self.protected_index], protected):
                raise ValueError("protected feature column disagrees with protected vector")
        for array in (features, labels, protected, row_ids):
            array.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "protected", protected)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def column_names(self) -> List[str]:
        return [c.name for c in self.columns]

    def target(self, column: Literal["label", "protected"]) -> np.ndarray:
        """Training target vector selected by name."""
        if column == "label":
            return self.labels
        if column == "protected":
            return self.protected
        raise ValueError(f"unknown target column: {column}")

    def subset(self, indices: Sequence[int]) -> "TabularDataset":
        """Rows at ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            protected=self.protected[idx],
            row_ids=self.row_ids[idx],
        )

    def with_protected(self, protected: np.ndarray, provenance: Provenance) -> "TabularDataset":
        """Copy with a new protected vector mirrored into the feature column."""
        protected = np.asarray(protected, dtype=np.float64)
        features = self.features.copy()
        if self.protected_index is not None:
            features[:, self.protected_index] = protected
        return replace(self, features=features, protected=protected, provenance=provenance)

    def categorical_groups(self) -> Dict[str, List[int]]:
        """Encoded column indices of each one-hot group."""
        groups: Dict[str, List[int]] = {}
        for i, column in enumerate(self.columns):
            if column.kind == "categorical":
                groups.setdefault(column.group, []).append(i)
        return groups
