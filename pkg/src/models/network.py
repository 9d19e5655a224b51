"""Network architecture, training configuration and persisted parameters."""

from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from .base import UINT64_MAX, FairwatchModel, content_digest
from .dataset import DatasetSchema, EncoderState

MODEL_FORMAT_VERSION = 1
FLOAT_DIGITS = 17


class NetworkSpec(FairwatchModel):
    """Feed-forward architecture: ReLU hidden layers, one sigmoid output unit."""

    input_dim: int = Field(..., ge=1)
    hidden_widths: List[int] = Field(default_factory=list)
    hidden_activation: Literal["relu"] = "relu"
    output_activation: Literal["sigmoid"] = "sigmoid"
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)

    @field_validator("hidden_widths")
    @classmethod
    def validate_widths(cls, v: List[int]) -> List[int]:
        if any(w < 1 for w in v):
            raise ValueError("every hidden width must be >= 1")
        return v

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        """(output dim, input dim) of every layer, input to output."""
        sizes = [self.input_dim, *self.hidden_widths, 1]
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]


class TrainConfig(FairwatchModel):
    """Mini-batch Adam on binary cross-entropy."""

    learning_rate: float = Field(default=0.001, gt=0.0)
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=32, ge=1)
    adam_beta1: float = Field(default=0.9, gt=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, gt=0.0, lt=1.0)
    adam_epsilon: float = Field(default=1e-8, gt=0.0)
    shuffle_seed: int = Field(default=0, ge=0, le=UINT64_MAX)


class TrainingMetadata(FairwatchModel):
    """What a model file records about how it was trained."""

    target: Literal["label", "protected"]
    train_config: TrainConfig
    n_train: int = Field(..., ge=1)
    loss_history: List[float] = Field(default_factory=list)
    train_accuracy: float = Field(..., ge=0.0, le=1.0)
    test_accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    dataset_digest: str
    augmented: bool = False
    config_digest: Optional[str] = Field(
        default=None, description="Digest of architecture, train config, target and training data"
    )


class ModelDocument(FairwatchModel):
    """Versioned JSON form of a trained network."""

    format_version: Literal[1] = MODEL_FORMAT_VERSION
    float_digits: int = FLOAT_DIGITS
    spec: NetworkSpec
    layer_dims: List[Tuple[int, int]]
    weights: List[List[List[float]]]
    biases: List[List[float]]
    training: Optional[TrainingMetadata] = None
    dataset_schema: Optional[DatasetSchema] = None
    encoder: Optional[EncoderState] = None
    digest: str

    @model_validator(mode="after")
    def validate_shapes(self):
        """Stored arrays must match the declared layer dimensions."""
        if self.layer_dims != self.spec.layer_dims:
            raise ValueError("layer_dims do not match spec")
        if len(self.weights) != len(self.layer_dims) or len(self.biases) != len(self.layer_dims):
            raise ValueError("one weight matrix and one bias vector per layer required")
        for i, (rows, cols) in enumerate(self.layer_dims):
            if len(self.weights[i]) != rows or any(len(r) != cols for r in self.weights[i]):
                raise ValueError(f"layer {i}: weight matrix is not {rows}x{cols}")
            if len(self.biases[i]) != rows:
                raise ValueError(f"layer {i}: bias vector length is not {rows}")
        return self


@dataclass(frozen=True)
class NetworkParams:
    """Immutable weights and biases of a feed-forward network."""

    spec: NetworkSpec
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=np.float64, copy=True) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64, copy=True).reshape(-1) for b in self.biases)
        expected = self.spec.layer_dims
        if len(weights) != len(expected) or len(biases) != len(expected):
            raise ValueError(f"expected {len(expected)} layers, got {len(weights)}")
        for i, ((rows, cols), w, b) in enumerate(zip(expected, weights, biases)):
            if w.shape != (rows, cols):
                raise ValueError(f"layer {i}: weight shape {w.shape} != {(rows, cols)}")
            if b.shape != (rows,):
                raise ValueError(f"layer {i}: bias shape {b.shape} != {(rows,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameter")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @classmethod
    def from_arrays(
        cls,
        weights: Sequence[Sequence[Sequence[float]]],
        biases: Sequence[Sequence[float]],
        seed: int = 0,
    ) -> "NetworkParams":
        """Wrap hand-set arrays, inferring the architecture from their shapes."""
        mats = [np.asarray(w, dtype=np.float64) for w in weights]
        spec = NetworkSpec(
            input_dim=int(mats[0].shape[1]),
            hidden_widths=[int(m.shape[0]) for m in mats[:-1]],
            seed=seed,
        )
        return cls(spec=spec, weights=tuple(mats), biases=tuple(biases))

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameter_payload(self) -> dict:
        """Plain-JSON form of the architecture and parameters."""
        return {
            "spec": self.spec.model_dump(mode="json"),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @property
    def digest(self) -> str:
        """Content hash of architecture and parameters."""
        return content_digest(self.parameter_payload())

    def to_document(
        self,
        training: Optional[TrainingMetadata] = None,
        dataset_schema: Optional[DatasetSchema] = None,
        encoder: Optional[EncoderState] = None,
    ) -> ModelDocument:
        payload = self.parameter_payload()
        return ModelDocument(
            spec=self.spec,
            layer_dims=self.spec.layer_dims,
            weights=payload["weights"],
            biases=payload["biases"],
            training=training,
            dataset_schema=dataset_schema,
            encoder=encoder,
            digest=self.digest,
        )

    @classmethod
    def from_document(cls, document: ModelDocument) -> "NetworkParams":
        params = cls(
            spec=document.spec,
            weights=tuple(np.asarray(w, dtype=np.float64) for w in document.weights),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in document.biases),
        )
        if params.digest != document.digest:
            raise ValueError("model file digest does not match its parameters")
        return params
