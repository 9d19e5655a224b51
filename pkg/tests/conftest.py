"""Pytest configuration and fixtures for fairwatch tests."""

import json
import os
from pathlib import Path
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import pytest

# Set test environment variables
os.environ["FAIRWATCH_LOG_LEVEL"] = "INFO"
os.environ["FAIRWATCH_LOG_FORMAT"] = "text"
os.environ["FAIRWATCH_WORKERS"] = "1"
os.environ["FAIRWATCH_OUTPUT_DIR"] = "./test_runs"

from src.models.dataset import (
    BiasSpec,
    CausalModelSpec,
    ColumnSchema,
    DatasetSchema,
    FeatureColumn,
    Provenance,
    TabularDataset,
)
from src.models.network import NetworkParams, NetworkSpec
from src.services.dataset_service import generate_biased_synthetic
from src.services.network_service import init_network


def linear_model(weights: Sequence[float], bias: float = 0.0) -> NetworkParams:
    """Logistic regression as a network without hidden layers."""
    return NetworkParams.from_arrays([[list(weights)]], [[bias]])


def make_dataset(
    features: np.ndarray,
    labels: Sequence[int],
    protected: Sequence[float],
    protected_index=None,
    provenance: Provenance = Provenance.ORIGINAL,
) -> TabularDataset:
    """Dataset with numeric columns x0..x{d-1}; the protected column is marked if given."""
    features = np.asarray(features, dtype=np.float64)
    columns = []
    for j in range(features.shape[1]):
        kind = "protected" if j == protected_index else "numeric"
        columns.append(FeatureColumn(f"x{j}", kind, f"x{j}"))
    return TabularDataset(
        columns=tuple(columns),
        features=features,
        labels=np.asarray(labels),
        protected=np.asarray(protected, dtype=np.float64),
        protected_index=protected_index,
        provenance=provenance,
        row_ids=np.arange(features.shape[0]),
    )


@pytest.fixture
def linear_pair() -> Tuple[NetworkParams, NetworkParams]:
    """(A, F) linear models whose gradients at x=0 are [1, -2] and [3, -1], so ps = 5."""
    return linear_model([4.0, -8.0]), linear_model([12.0, -4.0])


@pytest.fixture
def baseline_pair() -> Tuple[NetworkParams, NetworkParams]:
    """(F, A) one-unit ReLU networks giving ps 2 at x=[1, 0] and ps 0 at x=[-1, 0]."""
    F = NetworkParams.from_arrays([[[1.0, 0.0]], [[8.0]]], [[0.0], [-8.0]])
    A = NetworkParams.from_arrays([[[1.0, 0.0]], [[4.0]]], [[0.0], [-4.0]])
    return F, A


@pytest.fixture
def random_network() -> Callable[..., NetworkParams]:
    """Factory for seeded networks with non-zero random biases."""

    def factory(input_dim: int, hidden: Sequence[int], seed: int) -> NetworkParams:
        params = init_network(NetworkSpec(input_dim=input_dim, hidden_widths=list(hidden), seed=seed))
        rng = np.random.default_rng(seed + 1_000_003)
        biases = tuple(rng.normal(0.0, 0.5, size=b.shape) for b in params.biases)
        return NetworkParams(spec=params.spec, weights=params.weights, biases=biases)

    return factory


@pytest.fixture
def separable_dataset() -> TabularDataset:
    """200 points of [-3, 3]^2 with a margin around x0 + x1 = 0, labelled by its sign."""
    rng = np.random.default_rng(11)
    points = rng.uniform(-3.0, 3.0, size=(2000, 2))
    points = points[np.abs(points.sum(axis=1)) >= 1.0][:200]
    labels = (points.sum(axis=1) > 0).astype(np.int8)
    protected = (points[:, 0] > 0).astype(np.float64)
    return make_dataset(points, labels, protected)


@pytest.fixture
def biased_synthetic() -> TabularDataset:
    """400 rows from the biased two-cluster generator."""
    return generate_biased_synthetic(CausalModelSpec(n_samples=400, bias=BiasSpec(), seed=7))


@pytest.fixture
def adult_like_schema() -> DatasetSchema:
    """Schema of the small mixed-type CSV written by ``adult_like_csv``."""
    return DatasetSchema(
        columns=[
            ColumnSchema(name="age", kind="numeric"),
            ColumnSchema(name="workclass", kind="categorical"),
            ColumnSchema(name="hours", kind="numeric"),
            ColumnSchema(name="sex", kind="categorical"),
        ],
        label="income",
        protected="sex",
        positive_label_value=">50K",
        protected_one_value="Female",
    )


ADULT_LIKE_ROWS = [
    ("39", "State-gov", "40", "Male", "<=50K"),
    ("50", "Self-emp", "13", "Male", "<=50K"),
    ("38", "Private", "40", "Male", "<=50K"),
    ("53", "Private", "40", "Male", "<=50K"),
    ("28", "Private", "40", "Female", "<=50K"),
    ("37", "Private", "40", "Female", "<=50K"),
    ("49", "Private", "16", "Female", "<=50K"),
    ("52", "Self-emp", "45", "Male", ">50K"),
    ("31", "Private", "50", "Female", ">50K"),
    ("42", "Private", "40", "Male", ">50K"),
    ("37", "Private", "80", "Male", ">50K"),
    ("30", "State-gov", "40", "Male", ">50K"),
]


@pytest.fixture
def adult_like_csv(tmp_path: Path, adult_like_schema: DatasetSchema) -> Dict[str, Path]:
    """Paths of a 12-row CSV with numeric, categorical, protected and label columns."""
    csv_path = tmp_path / "adult.csv"
    lines = ["age, workclass, hours, sex, income"]
    lines += [", ".join(row) for row in ADULT_LIKE_ROWS]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    schema_path = tmp_path / "adult.schema.json"
    schema_path.write_text(json.dumps(adult_like_schema.model_dump(mode="json")), encoding="utf-8")
    return {"data": csv_path, "schema": schema_path}
