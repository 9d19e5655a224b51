"""Tabular data: CSV ingestion and encoding, synthetic causal-model data,
label-conditional bias injection, counterfactual augmentation and splitting."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sklearn.datasets import make_blobs
from sklearn.model_selection import train_test_split as sklearn_split
from sklearn.preprocessing import StandardScaler

from ..models.base import read_document, write_document
from ..models.dataset import (
    CausalModelSpec,
    ColumnSchema,
    DatasetSchema,
    EncoderState,
    FeatureColumn,
    NumericStats,
    Provenance,
    TabularDataset,
)
from .errors import DataError, InputError, SchemaError

logger = logging.getLogger(__name__)

# Encoded value of the protected slot when the attribute is unavailable.
DEPLOY_ABSENT_FILL = 0.5

SYNTHETIC_FEATURES = ("x0", "x1")
SYNTHETIC_PROTECTED = "protected"


def derive_seed(seed: int, *path: int) -> int:
    """32-bit seed for the child stream ``path`` of a 64-bit master seed."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Schema and CSV ingestion
# ---------------------------------------------------------------------------


def read_schema(path: Union[str, Path]) -> DatasetSchema:
    """Load and validate a schema document."""
    try:
        return read_document(DatasetSchema, path)
    except FileNotFoundError as e:
        raise SchemaError(f"schema file not found: {path}") from e
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise SchemaError(f"invalid schema {path}: {fields}: {e}") from e
    except ValueError as e:
        raise SchemaError(f"schema {path} is not valid JSON: {e}") from e


def read_table(path: Union[str, Path], schema: DatasetSchema) -> pd.DataFrame:
    """Read a CSV as stripped strings and check that every schema column is present."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"data file is empty: {path}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    for name in schema.raw_columns():
        if name not in frame.columns:
            raise SchemaError(f"column '{name}' declared in schema is missing from {path}")
    needed = schema.raw_columns()
    frame = frame[needed].apply(lambda s: s.str.strip())
    logger.info(f"Read {len(frame)} rows from {path}")
    return frame.reset_index(drop=True)


def _parse_numeric(series: pd.Series, column: str) -> np.ndarray:
    # Index labels are source-file row positions (0-based, header excluded).
    values = np.empty(len(series))
    for i, (row, cell) in enumerate(series.items()):
        try:
            values[i] = float(cell)
        except (TypeError, ValueError):
            raise DataError(f"unparseable value {cell!r} in column '{column}' at row {row + 1}")
        if not np.isfinite(values[i]):
            raise DataError(f"non-finite value {cell!r} in column '{column}' at row {row + 1}")
    return values


class TabularEncoder:
    """Standardizes numeric columns, one-hot encodes categoricals and maps the
    protected attribute to {0, 1}.

    Statistics and levels come from the frame passed to :meth:`fit` (the
    training split) and are frozen into model files via :attr:`state`.
    """

    def __init__(self, schema: DatasetSchema, state: Optional[EncoderState] = None):
        self.schema = schema
        self._state = state
        self.logger = logging.getLogger(__name__)

    @property
    def is_fitted(self) -> bool:
        return self._state is not None

    @property
    def state(self) -> EncoderState:
        if self._state is None:
            raise DataError("encoder has not been fitted")
        return self._state

    def fit(self, frame: pd.DataFrame) -> "TabularEncoder":
        """Learn standardization statistics and categorical levels from ``frame``."""
        numeric: Dict[str, NumericStats] = {}
        levels: Dict[str, List[str]] = {}
        for column in self.schema.columns:
            if column.name == self.schema.protected:
                continue
            if column.kind == "numeric" and column.standardize:
                values = _parse_numeric(frame[column.name], column.name)
                scaler = StandardScaler().fit(values.reshape(-1, 1))
                numeric[column.name] = NumericStats(
                    mean=float(scaler.mean_[0]), scale=float(scaler.scale_[0])
                )
            elif column.kind == "categorical":
                levels[column.name] = (
                    list(column.levels)
                    if column.levels is not None
                    else sorted(set(frame[column.name].tolist()))
                )
        self._state = EncoderState(numeric=numeric, levels=levels)
        return self

    @property
    def columns(self) -> Tuple[FeatureColumn, ...]:
        """Encoded column descriptors in encoding order."""
        out: List[FeatureColumn] = []
        for column in self.schema.columns:
            if column.name == self.schema.protected:
                if self.schema.include_protected:
                    out.append(FeatureColumn(column.name, "protected", column.name))
            elif column.kind == "numeric":
                out.append(FeatureColumn(column.name, "numeric", column.name))
            else:
                for level in self.state.levels[column.name]:
                    out.append(
                        FeatureColumn(f"{column.name}={level}", "categorical", column.name, level)
                    )
        if self.schema.include_protected and self.schema.protected not in self.schema.feature_names:
            out.append(FeatureColumn(self.schema.protected, "protected", self.schema.protected))
        return tuple(out)

    @property
    def protected_index(self) -> Optional[int]:
        for i, column in enumerate(self.columns):
            if column.kind == "protected":
                return i
        return None

    def protected_values(self, frame: pd.DataFrame) -> np.ndarray:
        """Raw protected cells mapped to 1.0 (the schema's one value) or 0.0."""
        cells = frame[self.schema.protected].astype(str).str.strip()
        return (cells == self.schema.protected_one_value).to_numpy(dtype=np.float64)

    def encode_features(
        self, frame: pd.DataFrame, allow_missing_protected: bool = False
    ) -> Tuple[np.ndarray, Dict[str, int]]:
        """Encoded feature matrix of ``frame`` and the count of unseen levels per column.

        With ``allow_missing_protected`` a frame without the protected column
        gets the neutral fill value in its slot.
        """
        state = self.state
        n = len(frame)
        blocks: List[np.ndarray] = []
        unseen: Dict[str, int] = {}
        for column in self.schema.columns:
            if column.name == self.schema.protected:
                if self.schema.include_protected:
                    blocks.append(self._protected_block(frame, allow_missing_protected))
                continue
            if column.name not in frame.columns:
                raise SchemaError(f"column '{column.name}' is missing")
            if column.kind == "numeric":
                values = _parse_numeric(frame[column.name], column.name)
                stats = state.numeric.get(column.name)
                if stats is not None:
                    values = (values - stats.mean) / stats.scale
                blocks.append(values.reshape(-1, 1))
            else:
                block, missing = self._one_hot(frame[column.name], state.levels[column.name])
                if missing:
                    unseen[column.name] = missing
                blocks.append(block)
        if self.schema.include_protected and self.schema.protected not in self.schema.feature_names:
            blocks.append(self._protected_block(frame, allow_missing_protected))
        features = np.hstack(blocks) if blocks else np.zeros((n, 0))
        for name, count in unseen.items():
            self.logger.warning(f"{count} rows with unseen levels in column '{name}' encoded as all-zeros")
        return features, unseen

    def _protected_block(self, frame: pd.DataFrame, allow_missing: bool) -> np.ndarray:
        if self.schema.protected not in frame.columns:
            if not allow_missing:
                raise SchemaError(f"column '{self.schema.protected}' is missing")
            return np.full((len(frame), 1), DEPLOY_ABSENT_FILL)
        return self.protected_values(frame).reshape(-1, 1)

    @staticmethod
    def _one_hot(series: pd.Series, levels: Sequence[str]) -> Tuple[np.ndarray, int]:
        cells = series.astype(str).str.strip()
        categorical = pd.Categorical(cells, categories=list(levels))
        codes = np.asarray(categorical.codes)
        block = np.zeros((len(cells), len(levels)))
        known = codes >= 0
        block[np.nonzero(known)[0], codes[known]] = 1.0
        return block, int((~known).sum())

    def transform(
        self,
        frame: pd.DataFrame,
        provenance: Optional[Provenance] = None,
        row_ids: Optional[Sequence[int]] = None,
    ) -> TabularDataset:
        """Encode a labelled frame into a dataset."""
        features, unseen = self.encode_features(frame)
        labels = (
            frame[self.schema.label].astype(str).str.strip() == self.schema.positive_label_value
        ).to_numpy(dtype=np.int8)
        return TabularDataset(
            columns=self.columns,
            features=features,
            labels=labels,
            protected=self.protected_values(frame),
            protected_index=self.protected_index,
            provenance=provenance or self.schema.provenance,
            row_ids=np.arange(len(frame)) if row_ids is None else np.asarray(row_ids),
            unseen_levels=unseen,
        )

    def encode_record(
        self, record: Mapping[str, Any], allow_missing_protected: bool = False
    ) -> np.ndarray:
        """Encode one row keyed by raw column name."""
        frame = pd.DataFrame([{k: "" if v is None else str(v) for k, v in record.items()}])
        features, _ = self.encode_features(frame, allow_missing_protected=allow_missing_protected)
        return features[0]

    def decode_categoricals(self, data: TabularDataset) -> pd.DataFrame:
        """Recover raw categorical levels from one-hot groups (None for all-zero rows)."""
        decoded: Dict[str, List[Optional[str]]] = {}
        for group, indices in data.categorical_groups().items():
            block = data.features[:, indices]
            levels = [data.columns[i].level for i in indices]
            decoded[group] = [
                levels[int(np.argmax(row))] if row.sum() == 1.0 else None for row in block
            ]
        return pd.DataFrame(decoded)


def load_csv(
    path: Union[str, Path],
    schema: DatasetSchema,
    encoder: Optional[TabularEncoder] = None,
) -> TabularDataset:
    """Load and encode a CSV.

    Without an encoder one is fitted on this file, which should then be the
    training split.
    """
    frame = read_table(path, schema)
    if encoder is None:
        encoder = TabularEncoder(schema).fit(frame)
    data = encoder.transform(frame)
    logger.info(
        f"Encoded {data.n_rows} rows into {data.input_dim} features from {path}"
        + (f" (unseen levels: {data.unseen_levels})" if data.unseen_levels else "")
    )
    return data


def load_csv_split(
    path: Union[str, Path],
    schema: DatasetSchema,
    test_fraction: float,
    seed: int,
) -> Tuple[TabularDataset, TabularDataset, TabularEncoder]:
    """Split raw rows, fit the encoder on the training part, encode both parts."""
    frame = read_table(path, schema)
    train_idx, test_idx = _split_indices(len(frame), test_fraction, seed)
    encoder = TabularEncoder(schema).fit(frame.iloc[train_idx])
    train = encoder.transform(frame.iloc[train_idx], row_ids=train_idx)
    test = encoder.transform(frame.iloc[test_idx], row_ids=test_idx)
    logger.info(f"Split {path}: {train.n_rows} train / {test.n_rows} test rows")
    return train, test, encoder


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def synthetic_schema(provenance: Provenance) -> DatasetSchema:
    """Schema of the synthetic two-feature datasets (no standardization)."""
    return DatasetSchema(
        columns=[
            ColumnSchema(name=SYNTHETIC_FEATURES[0], kind="numeric", standardize=False),
            ColumnSchema(name=SYNTHETIC_FEATURES[1], kind="numeric", standardize=False),
            ColumnSchema(name=SYNTHETIC_PROTECTED, kind="numeric", standardize=False),
        ],
        label="label",
        protected=SYNTHETIC_PROTECTED,
        positive_label_value="1",
        protected_one_value="1",
        provenance=provenance,
    )


def generate_fair_synthetic(spec: CausalModelSpec) -> TabularDataset:
    """Two Gaussian clusters, one per label, with a fair-coin protected attribute."""
    if spec.bias is not None:
        raise InputError("generate_fair_synthetic requires a spec without bias")
    if spec.n_samples < 1:
        raise InputError("n_samples must be >= 1")
    X, y = make_blobs(
        n_samples=spec.n_samples,
        n_features=2,
        centers=np.asarray(spec.class_means, dtype=np.float64),
        cluster_std=spec.class_stddev,
        shuffle=True,
        random_state=derive_seed(spec.seed, 0),
    )
    rng = np.random.default_rng(derive_seed(spec.seed, 1))
    protected = rng.integers(0, 2, size=spec.n_samples).astype(np.float64)
    columns = (
        FeatureColumn(SYNTHETIC_FEATURES[0], "numeric", SYNTHETIC_FEATURES[0]),
        FeatureColumn(SYNTHETIC_FEATURES[1], "numeric", SYNTHETIC_FEATURES[1]),
        FeatureColumn(SYNTHETIC_PROTECTED, "protected", SYNTHETIC_PROTECTED),
    )
    return TabularDataset(
        columns=columns,
        features=np.column_stack([X, protected]),
        labels=y,
        protected=protected,
        protected_index=2,
        provenance=Provenance.FAIR_SYNTHETIC,
        row_ids=np.arange(spec.n_samples),
    )


def inject_label_bias(
    data: TabularDataset,
    p_pos: float = 0.25,
    p_neg: float = 0.75,
    seed: int = 0,
) -> TabularDataset:
    """Redraw the protected attribute with a label-dependent probability of being 1."""
    for name, p in (("p_pos", p_pos), ("p_neg", p_neg)):
        if not 0.0 <= p <= 1.0:
            raise InputError(f"{name} must be a probability, got {p}")
    if data.provenance != Provenance.FAIR_SYNTHETIC:
        raise DataError(f"bias injection expects fair-synthetic data, got {data.provenance.value}")
    rng = np.random.default_rng(seed)
    draws = rng.random(data.n_rows)
    threshold = np.where(data.labels == 1, p_pos, p_neg)
    protected = (draws < threshold).astype(np.float64)
    return data.with_protected(protected, Provenance.BIASED_SYNTHETIC)


def generate_biased_synthetic(spec: CausalModelSpec) -> TabularDataset:
    """Fair generation followed by bias injection with ``spec.bias``.

    Features and labels are identical to the fair dataset of the same seed.
    """
    if spec.bias is None:
        raise InputError("generate_biased_synthetic requires a spec with bias")
    fair = generate_fair_synthetic(spec.model_copy(update={"bias": None}))
    return inject_label_bias(
        fair,
        p_pos=spec.bias.p_protected_given_positive,
        p_neg=spec.bias.p_protected_given_negative,
        seed=derive_seed(spec.seed, 2),
    )


# ---------------------------------------------------------------------------
# Augmentation and splitting
# ---------------------------------------------------------------------------


def counterfactual_augment(data: TabularDataset) -> TabularDataset:
    """Original rows followed by one copy of each with the protected value negated."""
    if not np.all(np.isin(data.protected, (0.0, 1.0))):
        raise DataError("counterfactual augmentation requires a binary protected attribute")
    flipped = 1.0 - data.protected
    flipped_features = data.features.copy()
    if data.protected_index is not None:
        flipped_features[:, data.protected_index] = flipped
    return TabularDataset(
        columns=data.columns,
        features=np.vstack([data.features, flipped_features]),
        labels=np.concatenate([data.labels, data.labels]),
        protected=np.concatenate([data.protected, flipped]),
        protected_index=data.protected_index,
        provenance=Provenance.AUGMENTED,
        row_ids=np.concatenate([data.row_ids, data.row_ids]),
    )


def _split_indices(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < fraction < 1.0:
        raise InputError(f"split fraction must be in (0, 1), got {fraction}")
    try:
        train_idx, test_idx = sklearn_split(
            np.arange(n), test_size=fraction, random_state=derive_seed(seed, 3), shuffle=True
        )
    except ValueError as e:
        raise InputError(f"cannot split {n} rows at fraction {fraction}: {e}") from e
    return train_idx, test_idx


def train_test_split(
    data: TabularDataset, fraction: float, seed: int
) -> Tuple[TabularDataset, TabularDataset]:
    """Seeded shuffle, then ``fraction`` of the rows (rounded up) go to the test split."""
    train_idx, test_idx = _split_indices(data.n_rows, fraction, seed)
    return data.subset(train_idx), data.subset(test_idx)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def encoded_schema(data: TabularDataset) -> DatasetSchema:
    """Schema describing a dataset saved in encoded form."""
    names = data.column_names
    protected_name = (
        data.columns[data.protected_index].name if data.protected_index is not None else "protected"
    )
    label_name = "label"
    while label_name in names or label_name == protected_name:
        label_name = f"_{label_name}"
    return DatasetSchema(
        columns=[ColumnSchema(name=n, kind="numeric", standardize=False) for n in names],
        label=label_name,
        protected=protected_name,
        positive_label_value="1",
        protected_one_value="1",
        include_protected=data.protected_index is not None,
        provenance=data.provenance,
    )


def save_dataset(
    data: TabularDataset,
    csv_path: Union[str, Path],
    schema_path: Optional[Union[str, Path]] = None,
    schema: Optional[DatasetSchema] = None,
) -> Tuple[Path, Path]:
    """Write a dataset as CSV plus schema JSON; reloading with the schema is exact."""
    csv_path = Path(csv_path)
    schema_path = Path(schema_path) if schema_path else csv_path.with_suffix(".schema.json")
    schema = schema or encoded_schema(data)
    columns: Dict[str, List[str]] = {}
    for j, column in enumerate(data.columns):
        if column.kind == "protected":
            columns[column.name] = [str(int(v)) for v in data.features[:, j].tolist()]
        else:
            columns[column.name] = [repr(float(v)) for v in data.features[:, j].tolist()]
    if data.protected_index is None:
        columns[schema.protected] = [str(int(v)) for v in data.protected.tolist()]
    columns[schema.label] = [str(int(v)) for v in data.labels.tolist()]
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(columns).to_csv(csv_path, index=False)
    write_document(schema, schema_path)
    logger.info(f"Saved {data.n_rows} rows to {csv_path} (schema {schema_path})")
    return csv_path, schema_path
