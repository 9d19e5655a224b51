"""Seeded multi-trial audit experiments.

Each trial trains three networks (the audited classifier F, the
counterfactually fair reference F_hat and the protected-status model A),
audits F against F_hat on every requested test set and writes models and
reports under ``<out>/trial-<seed>/epochs-<n>/``. Trials are independent and
may run in separate processes.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..models.base import content_digest, write_document
from ..models.dataset import DatasetSchema, EncoderState, TabularDataset
from ..models.experiment import (
    ExperimentRecipe,
    ExperimentSummary,
    GroupSummary,
    TrialResult,
)
from ..models.monitor import Baseline
from ..models.network import NetworkParams, NetworkSpec
from .audit_service import audit_config_digest, audit_report, build_match_set, write_roc_csv
from .dataset_service import (
    counterfactual_augment,
    derive_seed,
    generate_fair_synthetic,
    inject_label_bias,
    load_csv_split,
    read_schema,
    synthetic_schema,
    train_test_split,
)
from .monitor_service import compute_baseline, neutralize_protected, save_baseline
from .network_service import (
    TargetColumn,
    init_network,
    save_model,
    train_with_history,
    training_metadata,
)
from .sensitivity_service import prediction_sensitivities

logger = logging.getLogger(__name__)

# Child-stream indices of a trial seed.
SEED_DATA = 10
SEED_BIAS = 11
SEED_SPLIT = 12
SEED_MODELS = {"classifier": 20, "reference": 30, "protected_status": 40}


@dataclass(frozen=True)
class TrialData:
    """Datasets of one trial, already split."""

    classifier_train: TabularDataset
    reference_train: TabularDataset
    test: TabularDataset
    schema: DatasetSchema
    encoder: Optional[EncoderState] = None


def _synthetic_trial_data(recipe: ExperimentRecipe, seed: int) -> TrialData:
    section = recipe.synthetic
    bias = section.causal.bias
    spec = section.causal.model_copy(update={"seed": derive_seed(seed, SEED_DATA), "bias": None})
    fair = generate_fair_synthetic(spec)
    biased = inject_label_bias(
        fair,
        p_pos=bias.p_protected_given_positive,
        p_neg=bias.p_protected_given_negative,
        seed=derive_seed(seed, SEED_BIAS),
    )
    # Same split seed, so both graphs share row assignments.
    split_seed = derive_seed(seed, SEED_SPLIT)
    fair_train, _ = train_test_split(fair, section.test_fraction, split_seed)
    biased_train, biased_test = train_test_split(biased, section.test_fraction, split_seed)
    reference_train = (
        fair_train
        if section.reference_training == "fair"
        else counterfactual_augment(biased_train)
    )
    return TrialData(
        classifier_train=biased_train,
        reference_train=reference_train,
        test=biased_test,
        schema=synthetic_schema(biased.provenance),
    )


def _tabular_trial_data(recipe: ExperimentRecipe, seed: int, base_dir: Path) -> TrialData:
    section = recipe.tabular
    schema = read_schema(base_dir / section.schema_path)
    train, test, encoder = load_csv_split(
        base_dir / section.data, schema, section.test_fraction, derive_seed(seed, SEED_SPLIT)
    )
    return TrialData(
        classifier_train=train,
        reference_train=counterfactual_augment(train),
        test=test,
        schema=schema,
        encoder=encoder.state,
    )


def _fit(
    role: str,
    data: TabularDataset,
    target: TargetColumn,
    recipe: ExperimentRecipe,
    seed: int,
    epochs: int,
    trial: TrialData,
    test: TabularDataset,
    out_dir: Path,
) -> NetworkParams:
    spec = NetworkSpec(
        input_dim=data.input_dim,
        hidden_widths=recipe.hidden_widths,
        seed=derive_seed(seed, SEED_MODELS[role]),
    )
    cfg = recipe.train.model_copy(
        update={"epochs": epochs, "shuffle_seed": derive_seed(seed, SEED_MODELS[role] + 1)}
    )
    run = train_with_history(init_network(spec), data, cfg, target_column=target)
    save_model(
        run.params,
        out_dir / f"{role}.json",
        training=training_metadata(run, data, cfg, target, test=test),
        dataset_schema=trial.schema,
        encoder=trial.encoder,
    )
    return run.params


def _alarm_rates(
    F: NetworkParams,
    F_hat: NetworkParams,
    A: NetworkParams,
    baseline: Baseline,
    test: TabularDataset,
) -> Tuple[Optional[float], Optional[float]]:
    """Share of match-set members and non-members that the monitor would flag."""
    match = build_match_set(F, F_hat, test)
    X = test.features
    if baseline.protected_deploy_absent:
        X = neutralize_protected(X, baseline.protected_index)
    alarms = prediction_sensitivities(A, F, X).ps > baseline.threshold()
    member = float(alarms[match.flags].mean()) if match.members else None
    non_member = float(alarms[~match.flags].mean()) if match.non_members else None
    return member, non_member


def run_trial(
    recipe: ExperimentRecipe,
    seed: int,
    epochs: int,
    out_dir: Union[str, Path],
    base_dir: Union[str, Path] = ".",
) -> List[TrialResult]:
    """Train the three models of one trial and audit on every requested test set."""
    out_dir = Path(out_dir)
    trial_dir = out_dir / f"trial-{seed:03d}" / f"epochs-{epochs}"
    trial = (
        _synthetic_trial_data(recipe, seed)
        if recipe.kind == "synthetic"
        else _tabular_trial_data(recipe, seed, Path(base_dir))
    )
    logger.info(
        f"Trial seed={seed} epochs={epochs}: {trial.classifier_train.n_rows} train rows, "
        f"{trial.test.n_rows} test rows"
    )

    def fit(role: str, data: TabularDataset, target: TargetColumn) -> NetworkParams:
        return _fit(role, data, target, recipe, seed, epochs, trial, trial.test, trial_dir)

    F = fit("classifier", trial.classifier_train, "label")
    F_hat = fit("reference", trial.reference_train, "label")
    A = fit("protected_status", trial.classifier_train, "protected")
    deploy_absent = trial.schema.protected_deploy_absent and trial.classifier_train.protected_index is not None
    baseline = compute_baseline(
        F, A, trial.classifier_train, k_sigma=recipe.k_sigma, deploy_absent=deploy_absent
    )
    save_baseline(baseline, trial_dir / "baseline.json")

    results = []
    recipe_digest = content_digest(recipe)
    for test_set in recipe.test_sets:
        test = trial.test if test_set == "original" else counterfactual_augment(trial.test)
        digest = content_digest(
            {
                "recipe": recipe_digest,
                "seed": seed,
                "epochs": epochs,
                "audit": audit_config_digest(F, F_hat, A, test),
            }
        )
        report = audit_report(
            F,
            F_hat,
            A,
            test,
            include_records=recipe.include_records,
            config_digest=digest,
            test_set=test_set,
            top_k=recipe.top_k,
        )
        report_path = write_document(report, trial_dir / f"report-{test_set}.json")
        member_alarm_rate, non_member_alarm_rate = _alarm_rates(F, F_hat, A, baseline, test)
        if report.roc is not None:
            write_roc_csv(report.roc, trial_dir / f"roc-{test_set}.csv")
        results.append(
            TrialResult(
                seed=seed,
                epochs=epochs,
                test_set=test_set,
                auc_status=report.auc_status,
                auc=report.auc,
                members=report.members,
                non_members=report.non_members,
                mean_ps_member=report.ps_summary["member"].mean,
                mean_ps_non_member=report.ps_summary["non_member"].mean,
                classifier_accuracy=report.classifier.accuracy,
                reference_accuracy=report.reference.accuracy,
                classifier_spd=report.classifier.statistical_parity_difference,
                reference_spd=report.reference.statistical_parity_difference,
                classifier_dir=report.classifier.disparate_impact_ratio,
                reference_dir=report.reference.disparate_impact_ratio,
                member_alarm_rate=member_alarm_rate,
                non_member_alarm_rate=non_member_alarm_rate,
                report_path=report_path.relative_to(out_dir).as_posix(),
            )
        )
    return results


def _run_task(args: Tuple[ExperimentRecipe, int, int, str, str]) -> List[TrialResult]:
    recipe, seed, epochs, out_dir, base_dir = args
    return run_trial(recipe, seed, epochs, out_dir, base_dir)


def summarize(recipe: ExperimentRecipe, trials: List[TrialResult]) -> ExperimentSummary:
    """Aggregate trial results per (epochs, test set), in recipe order."""
    groups = []
    for epochs in recipe.epoch_sweep:
        for test_set in recipe.test_sets:
            rows = [t for t in trials if t.epochs == epochs and t.test_set == test_set]
            aucs = [t.auc for t in rows if t.auc is not None]
            groups.append(
                GroupSummary(
                    epochs=epochs,
                    test_set=test_set,
                    n_trials=len(rows),
                    auc_values=aucs,
                    auc_mean=float(np.mean(aucs)) if aucs else None,
                    auc_std=float(np.std(aucs)) if aucs else None,
                    trials_non_member_ps_higher=sum(
                        1
                        for t in rows
                        if t.mean_ps_member is not None
                        and t.mean_ps_non_member is not None
                        and t.mean_ps_non_member > t.mean_ps_member
                    ),
                    trials_reference_spd_smaller=sum(
                        1
                        for t in rows
                        if t.classifier_spd is not None
                        and t.reference_spd is not None
                        and abs(t.reference_spd) < abs(t.classifier_spd)
                    ),
                    trials_reference_dir_closer=sum(
                        1
                        for t in rows
                        if t.classifier_dir is not None
                        and t.reference_dir is not None
                        and abs(1.0 - t.reference_dir) < abs(1.0 - t.classifier_dir)
                    ),
                    trials_non_member_alarm_rate_higher=sum(
                        1
                        for t in rows
                        if t.member_alarm_rate is not None
                        and t.non_member_alarm_rate is not None
                        and t.non_member_alarm_rate > t.member_alarm_rate
                    ),
                    classifier_accuracy_mean=(
                        float(np.mean([t.classifier_accuracy for t in rows])) if rows else 0.0
                    ),
                    reference_accuracy_mean=(
                        float(np.mean([t.reference_accuracy for t in rows])) if rows else 0.0
                    ),
                )
            )
    return ExperimentSummary(
        recipe_digest=content_digest(recipe), kind=recipe.kind, groups=groups, trials=trials
    )


def run_experiment(
    recipe: ExperimentRecipe,
    out_dir: Union[str, Path],
    workers: int = 1,
    base_dir: Union[str, Path] = ".",
) -> ExperimentSummary:
    """Run every (seed, epochs) trial of ``recipe`` and write ``summary.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (recipe, seed, epochs, str(out_dir), str(base_dir))
        for epochs in recipe.epoch_sweep
        for seed in recipe.trial_seeds
    ]
    logger.info(f"Running {len(tasks)} {recipe.kind} trials with {workers} worker(s)")
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_run_task, tasks))
    else:
        nested = [_run_task(task) for task in tasks]

    summary = summarize(recipe, [result for results in nested for result in results])
    write_document(summary, out_dir / "summary.json")
    pd.DataFrame([t.model_dump(mode="json") for t in summary.trials]).to_csv(
        out_dir / "summary.csv", index=False
    )
    for group in summary.groups:
        auc = "n/a" if group.auc_mean is None else f"{group.auc_mean:.4f} +/- {group.auc_std:.4f}"
        logger.info(
            f"epochs={group.epochs} test={group.test_set}: AUC {auc}, "
            f"non-member ps higher in {group.trials_non_member_ps_higher}/{group.n_trials} trials"
        )
    return summary

