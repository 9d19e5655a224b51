"""Tests for the sensitivity baseline and the deployment-time monitor."""

import json

import numpy as np
import pytest

from src.models.monitor import Baseline
from src.services.dataset_service import (
    DEPLOY_ABSENT_FILL,
    TabularEncoder,
    load_csv,
    read_schema,
    read_table,
)
from src.services.errors import ConfigurationError, DigestMismatchError, InputError
from src.services.monitor_service import (
    SensitivityMonitor,
    check,
    compute_baseline,
    load_baseline,
    read_stream,
    save_baseline,
    verify_digests,
)
from src.services.sensitivity_service import prediction_sensitivity
from tests.conftest import linear_model, make_dataset


@pytest.fixture
def two_point_reference():
    """Rows where the baseline pair gives ps 2 and 0."""
    return make_dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), [1, 0], [1.0, 0.0])


@pytest.fixture
def fitted_baseline(baseline_pair, two_point_reference):
    """Baseline with mean 1 and std 1 for the baseline pair."""
    F, A = baseline_pair
    return compute_baseline(F, A, two_point_reference)


def manual_baseline(mean: float, std: float) -> Baseline:
    return Baseline(
        mean_ps=mean,
        std_ps=std,
        n=10,
        classifier_digest="f" * 64,
        protected_status_digest="a" * 64,
    )


@pytest.mark.service
class TestComputeBaseline:
    """Test baseline statistics."""

    def test_two_point_statistics(self, fitted_baseline, baseline_pair):
        """ps values {0, 2} give mean 1 and population std 1."""
        F, A = baseline_pair

        assert fitted_baseline.mean_ps == 1.0
        assert fitted_baseline.std_ps == 1.0
        assert fitted_baseline.n == 2
        assert fitted_baseline.classifier_digest == F.digest
        assert fitted_baseline.protected_status_digest == A.digest
        assert fitted_baseline.feature_names == ["x0", "x1"]

    def test_config_digest_tracks_run_settings(self, baseline_pair, two_point_reference, fitted_baseline):
        """The baseline records a digest of its inputs that changes with k."""
        F, A = baseline_pair

        again = compute_baseline(F, A, two_point_reference)
        wider = compute_baseline(F, A, two_point_reference, k_sigma=4.0)
        assert len(fitted_baseline.config_digest) == 64
        assert again.config_digest == fitted_baseline.config_digest
        assert wider.config_digest != fitted_baseline.config_digest
        assert fitted_baseline.protected_deploy_absent is False

    def test_zero_protected_model(self, baseline_pair, two_point_reference):
        """A zero-weight protected-status model gives a degenerate baseline."""
        F, _ = baseline_pair
        A = linear_model([0.0, 0.0])

        baseline = compute_baseline(F, A, two_point_reference)
        assert baseline.mean_ps == 0.0
        assert baseline.std_ps == 0.0

    def test_single_row(self, baseline_pair):
        """One reference row is accepted with std 0."""
        F, A = baseline_pair
        reference = make_dataset(np.array([[1.0, 0.0]]), [1], [1.0])

        baseline = compute_baseline(F, A, reference)
        assert baseline.n == 1
        assert baseline.mean_ps == 2.0
        assert baseline.std_ps == 0.0

    def test_empty_reference(self, baseline_pair):
        """A baseline needs at least one row."""
        F, A = baseline_pair
        empty = make_dataset(np.zeros((0, 2)), [], [])

        with pytest.raises(InputError):
            compute_baseline(F, A, empty)

    def test_save_and_load(self, fitted_baseline, tmp_path):
        """Baselines survive a round trip through JSON."""
        path = save_baseline(fitted_baseline, tmp_path / "baseline.json")

        assert load_baseline(path) == fitted_baseline

    def test_missing_file(self, tmp_path):
        """Loading a baseline that does not exist is a configuration error."""
        with pytest.raises(ConfigurationError):
            load_baseline(tmp_path / "nope.json")


@pytest.mark.unit
class TestCheck:
    """Test the alarm rule."""

    def test_mean_is_ok(self):
        """ps at the mean never alarms."""
        event = check(1.0, manual_baseline(1.0, 1.0))

        assert event.verdict == "ok"
        assert event.threshold == 4.0

    def test_far_tail_alarms(self):
        """ps at mean + 3.5 std alarms at k = 3."""
        assert check(4.5, manual_baseline(1.0, 1.0)).verdict == "alarm"

    def test_threshold_itself_is_ok(self):
        """The inequality is strict."""
        assert check(4.0, manual_baseline(1.0, 1.0)).verdict == "ok"

    def test_zero_std_alarms_on_any_increase(self):
        """With std 0 anything above the mean alarms."""
        baseline = manual_baseline(0.5, 0.0)

        assert check(0.5 + 1e-9, baseline).verdict == "alarm"
        assert check(0.5, baseline).verdict == "ok"

    def test_alarms_shrink_as_k_grows(self):
        """Alarm sets are nested in k."""
        baseline = manual_baseline(1.0, 0.5)
        ps_values = np.random.default_rng(0).exponential(1.0, size=500)

        alarm_sets = []
        for k in (1.0, 2.0, 3.0, 4.0):
            alarm_sets.append({i for i, ps in enumerate(ps_values) if check(float(ps), baseline, k).verdict == "alarm"})
        for looser, stricter in zip(alarm_sets, alarm_sets[1:]):
            assert stricter <= looser

    def test_live_digest_mismatch(self):
        """Digests passed with the check must match the baseline."""
        baseline = manual_baseline(1.0, 1.0)

        with pytest.raises(DigestMismatchError):
            check(1.0, baseline, live_digests={"classifier": "f" * 64, "protected_status": "b" * 64})

    def test_negative_k(self):
        """k must be non-negative."""
        with pytest.raises(InputError):
            check(1.0, manual_baseline(1.0, 1.0), k_sigma=-1.0)


@pytest.mark.service
class TestSensitivityMonitor:
    """Test stream monitoring."""

    def test_digest_mismatch_blocks_monitoring(self, fitted_baseline, baseline_pair):
        """A retrained classifier is refused before any row is scored."""
        _, A = baseline_pair
        other_F = linear_model([1.0, 1.0])

        with pytest.raises(DigestMismatchError):
            SensitivityMonitor(other_F, A, fitted_baseline)
        with pytest.raises(DigestMismatchError):
            verify_digests(fitted_baseline, other_F, A)

    def test_empty_stream(self, fitted_baseline, baseline_pair):
        """No rows in, no events out."""
        F, A = baseline_pair
        monitor = SensitivityMonitor(F, A, fitted_baseline)

        assert list(monitor.monitor_stream([])) == []
        assert monitor.summary.rows == 0

    def test_alarm_on_tail_row(self, baseline_pair):
        """A row above mean + k std alarms and names its top features."""
        F, A = baseline_pair
        reference = make_dataset(np.array([[-1.0, 0.0], [-2.0, 0.0], [1.0, 0.0]]), [0, 0, 1], [0, 0, 1])
        baseline = compute_baseline(F, A, reference)
        monitor = SensitivityMonitor(F, A, baseline, k_sigma=1.0, top_k=1)

        events = list(monitor.monitor_stream([[1.0, 0.0], [-1.0, 0.0]]))
        assert events[0].verdict == "alarm"
        assert events[0].ps == 2.0
        assert events[0].prediction == 1
        assert [c.name for c in events[0].top_features] == ["x0"]
        assert events[1].verdict == "ok"
        assert events[1].top_features == []
        assert monitor.summary.alarms == 1

    def test_order_is_preserved(self, random_network):
        """Events come out in input order across batches."""
        A = random_network(3, [4], seed=1)
        F = random_network(3, [5], seed=2)
        rng = np.random.default_rng(3)
        reference = make_dataset(rng.normal(size=(50, 3)), [0] * 50, [0] * 50)
        baseline = compute_baseline(F, A, reference)
        monitor = SensitivityMonitor(F, A, baseline, batch_size=3)
        rows = rng.normal(size=(10, 3))

        events = list(monitor.monitor_stream(rows))
        assert [e.row_id for e in events] == list(range(10))
        for event, row in zip(events, rows):
            assert event.ps == pytest.approx(prediction_sensitivity(A, F, row).ps, rel=1e-12, abs=1e-15)

    def test_malformed_rows_become_error_events(self, fitted_baseline, baseline_pair):
        """Bad rows are reported in place and the stream continues."""
        F, A = baseline_pair
        monitor = SensitivityMonitor(F, A, fitted_baseline)
        rows = [
            [1.0, 0.0],
            ["a", "b"],
            [1.0, 2.0, 3.0],
            InputError("line 4: invalid JSON"),
            {"x0": 1.0},
            [-1.0, 0.0],
        ]

        events = list(monitor.monitor_stream(rows))
        assert [e.row_id for e in events] == list(range(6))
        assert [e.error is None for e in events] == [True, False, False, False, False, True]
        assert "invalid JSON" in events[3].error
        assert events[1].ps is None
        assert monitor.summary.errors == 4
        assert monitor.summary.rows == 6

    def test_deploy_absent_slot_is_filled(self, random_network):
        """When the protected attribute is unavailable its slot gets the neutral value."""
        A = random_network(3, [4], seed=5)
        F = random_network(3, [4], seed=6)
        reference = make_dataset(np.random.default_rng(7).normal(size=(20, 3)), [0] * 20, [0] * 20)
        baseline = compute_baseline(F, A, reference)
        monitor = SensitivityMonitor(F, A, baseline, protected_index=2, deploy_absent=True)

        x = monitor.encode([0.3, -0.1, 1.0])
        assert x[2] == DEPLOY_ABSENT_FILL
        event = next(monitor.monitor_stream([[0.3, -0.1, 1.0]]))
        assert event.ps == pytest.approx(prediction_sensitivity(A, F, [0.3, -0.1, DEPLOY_ABSENT_FILL]).ps)

    def test_deploy_absent_baseline_matches_live_scoring(self, random_network):
        """Reference rows streamed through a deploy-absent monitor reproduce the baseline."""
        rng = np.random.default_rng(21)
        protected = rng.integers(0, 2, size=500).astype(np.float64)
        features = np.column_stack([rng.normal(size=(500, 2)), protected])
        reference = make_dataset(features, [0] * 500, protected, protected_index=2)
        A = random_network(3, [6], seed=12)
        F = random_network(3, [6], seed=13)

        baseline = compute_baseline(F, A, reference, deploy_absent=True)
        assert baseline.protected_deploy_absent
        assert baseline.protected_index == 2

        monitor = SensitivityMonitor(F, A, baseline)
        assert monitor.deploy_absent
        ps = np.array([e.ps for e in monitor.monitor_stream(reference.features)])
        assert ps.mean() == pytest.approx(baseline.mean_ps, rel=1e-9)
        assert ps.std() == pytest.approx(baseline.std_ps, rel=1e-9)
        assert monitor.summary.alarms == baseline.outliers

    def test_deploy_absent_without_protected_index(self, baseline_pair, two_point_reference):
        """Filling the protected slot needs to know where it is."""
        F, A = baseline_pair

        with pytest.raises(ConfigurationError, match="protected feature index"):
            compute_baseline(F, A, two_point_reference, deploy_absent=True)

    def test_few_alarms_on_reference_distribution(self):
        """Fresh rows from the reference distribution rarely alarm at k = 3."""
        A = linear_model([0.3, -0.2])
        F = linear_model([0.4, 0.1], bias=0.05)
        rng = np.random.default_rng(11)
        reference = make_dataset(rng.normal(size=(2000, 2)), [0] * 2000, [0] * 2000)
        baseline = compute_baseline(F, A, reference)
        monitor = SensitivityMonitor(F, A, baseline)

        events = list(monitor.monitor_stream(rng.normal(size=(2000, 2))))
        assert sum(e.is_alarm for e in events) <= 20
        assert monitor.summary.alarm_rate <= 0.01

    def test_keyed_rows_use_stored_encoder(self, adult_like_csv, random_network, tmp_path):
        """Raw CSV records are encoded with the training-time encoder."""
        schema = read_schema(adult_like_csv["schema"])
        encoder = TabularEncoder(schema).fit(read_table(adult_like_csv["data"], schema))
        data = load_csv(adult_like_csv["data"], schema, encoder=encoder)
        A = random_network(data.input_dim, [4], seed=8)
        F = random_network(data.input_dim, [4], seed=9)
        baseline = compute_baseline(F, A, data)
        stream = tmp_path / "live.csv"
        stream.write_text(
            "age,workclass,hours,sex\n39,State-gov,40,Male\n28,Private,40,Female\n",
            encoding="utf-8",
        )
        monitor = SensitivityMonitor(F, A, baseline, encoder=encoder)

        events = list(monitor.monitor_stream(read_stream(stream)))
        assert len(events) == 2
        assert all(e.error is None for e in events)
        assert events[0].ps == pytest.approx(prediction_sensitivity(A, F, data.features[0]).ps)
        assert events[1].ps == pytest.approx(prediction_sensitivity(A, F, data.features[4]).ps)

    def test_keyed_rows_without_protected_column(self, adult_like_csv, adult_like_schema, random_network, tmp_path):
        """A deploy-absent schema scores rows that lack the protected column."""
        schema = adult_like_schema.model_copy(update={"protected_deploy_absent": True})
        encoder = TabularEncoder(schema).fit(read_table(adult_like_csv["data"], schema))
        data = load_csv(adult_like_csv["data"], schema, encoder=encoder)
        A = random_network(data.input_dim, [4], seed=8)
        F = random_network(data.input_dim, [4], seed=9)
        baseline = compute_baseline(F, A, data, deploy_absent=True)
        stream = tmp_path / "live.ndjson"
        stream.write_text(json.dumps({"age": "39", "workclass": "State-gov", "hours": "40"}) + "\n", encoding="utf-8")
        monitor = SensitivityMonitor(F, A, baseline, encoder=encoder)

        events = list(monitor.monitor_stream(read_stream(stream)))
        assert events[0].error is None
        expected = data.features[0].copy()
        expected[encoder.protected_index] = DEPLOY_ABSENT_FILL
        assert events[0].ps == pytest.approx(prediction_sensitivity(A, F, expected).ps)


@pytest.mark.unit
class TestReadStream:
    """Test stream file parsing."""

    def test_ndjson(self, tmp_path):
        """Objects and arrays pass through; bad lines become errors; blank lines are skipped."""
        path = tmp_path / "rows.ndjson"
        path.write_text(
            "\n".join([json.dumps({"age": "39"}), json.dumps([1.0, 2.0]), "not json", "", "3"]) + "\n",
            encoding="utf-8",
        )

        rows = list(read_stream(path))
        assert rows[0] == {"age": "39"}
        assert rows[1] == [1.0, 2.0]
        assert isinstance(rows[2], InputError)
        assert isinstance(rows[3], InputError)
        assert len(rows) == 4

    def test_csv(self, tmp_path):
        """CSV rows come back as string-valued records."""
        path = tmp_path / "rows.csv"
        path.write_text("a,b\n1,x\n2,y\n", encoding="utf-8")

        assert list(read_stream(path, chunk_rows=1)) == [{"a": "1", "b": "x"}, {"a": "2", "b": "y"}]

    def test_missing_file(self, tmp_path):
        """The stream file must exist."""
        with pytest.raises(ConfigurationError):
            list(read_stream(tmp_path / "absent.ndjson"))
