"""
Ablation and robustness experiments.

Both write pandas tables: ablation.csv (one row per mode, per-seed accuracies
and their median) and robustness.csv (accuracy per frame-dropout rate).
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from config.train_config import ABLATION_MODES, MODE_LABELS, TrainConfig
from nn_core.grad_check import GradCheckReport, grad_check
from pipeline.data import collate, load_splits, prepare_split
from pipeline.model import DSLNet
from pipeline.trainer import evaluate, train
from skel_data.models import SkeletonSequence
from skel_data.sequence_io import IoError

logger = logging.getLogger(__name__)

ABLATION_NAME = "ablation.csv"
ROBUSTNESS_NAME = "robustness.csv"


def _write_csv(df: pd.DataFrame, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format="%.2f")
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}") from e
    logger.info(f"✓ Wrote {len(df)} rows to {path}")
    return path


def ablate(
    config: TrainConfig,
    out_dir: Optional[Path] = None,
    modes: Sequence[str] = ABLATION_MODES,
) -> pd.DataFrame:
    """
    Train every ablation mode on every seed in config.ablation_seeds.

    All modes of one seed see the same raw train/test sequences.

    Returns:
        DataFrame with columns mode, label, seed_<s>..., median
    """
    rows = {mode: {"mode": mode, "label": MODE_LABELS[mode]} for mode in modes}
    for seed in config.ablation_seeds:
        seeded = config.with_overrides(seed=seed)
        train_seqs, test_seqs = load_splits(seeded)
        for mode in modes:
            logger.info(f"Ablation: {MODE_LABELS[mode]} (seed={seed})")
            result = train(seeded.with_overrides(mode=mode), train_seqs, test_seqs)
            rows[mode][f"seed_{seed}"] = result.report.test_accuracy

    df = pd.DataFrame(list(rows.values()))
    seed_cols = [f"seed_{s}" for s in config.ablation_seeds]
    df["median"] = df[seed_cols].median(axis=1).round(2)

    for _, row in df.iterrows():
        logger.info(f"  {row['label']:<32} median={row['median']:.2f}%")
    if out_dir is not None:
        _write_csv(df, Path(out_dir) / ABLATION_NAME)
    return df


def robustness(
    config: TrainConfig,
    out_dir: Optional[Path] = None,
    model: Optional[DSLNet] = None,
    test_sequences: Optional[Sequence[SkeletonSequence]] = None,
) -> pd.DataFrame:
    """
    Accuracy under frame dropout at each rate in config.robustness_rates.

    Trains a model first unless one is given.

    Returns:
        DataFrame with columns dropout_rate, accuracy, pattern
    """
    if model is None or test_sequences is None:
        train_seqs, loaded_test = load_splits(config)
        test_sequences = loaded_test if test_sequences is None else test_sequences
        if model is None:
            model = train(config, train_seqs, test_sequences).model

    records = []
    for rate in config.robustness_rates:
        report = evaluate(model, test_sequences, dropout_rate=rate, pattern=config.dropout_pattern)
        logger.info(f"✓ dropout {rate:.0%} ({config.dropout_pattern}): accuracy {report.test_accuracy:.2f}%")
        records.append(
            {"dropout_rate": rate, "accuracy": report.test_accuracy, "pattern": config.dropout_pattern}
        )

    df = pd.DataFrame(records, columns=["dropout_rate", "accuracy", "pattern"])
    if out_dir is not None:
        _write_csv(df, Path(out_dir) / ROBUSTNESS_NAME)
    return df


def toy_config(mode: str = "dual_geo_ot", seed: int = 0) -> TrainConfig:
    """
    Two-class, eight-frame configuration small enough for full finite differences.

    k=1 and tanh activations keep every op smooth (no max over ties, no ReLU kinks).
    """
    return TrainConfig.model_validate(
        {
            "mode": mode,
            "seed": seed,
            "epochs": 1,
            "batch_size": 2,
            "dropout": 0.0,
            "dataset": {
                "shapes": [0],
                "trajectories": [0, 1],
                "train_per_class": 1,
                "test_per_class": 1,
                "duration_frames": 8,
            },
            "augment": {"enabled": False},
            "tssn": {
                "k": 1,
                "num_blocks": 1,
                "channels": [4],
                "lstm_hidden": 4,
                "attn_heads": 2,
                "out_dim": 4,
                "activation": "tanh",
            },
            "ftde": {"conv_channels": [4], "conv_kernels": [3], "lstm_hidden": 4, "out_dim": 4, "activation": "tanh"},
            "finsler": {"phi_hidden": 4},
            "fusion": {"attn_heads": 2, "proj_dim": 3, "num_classes": 2},
        }
    )


def desk_config(seed: int = 0) -> TrainConfig:
    """
    The 10-class synthetic benchmark (5 shapes x 2 trajectories, 40 train / 10 test
    per class, T=40) with narrow streams sized to train on one CPU core in a few minutes.

    Training stops early once train accuracy reaches 99%. configs/desk.cfg holds the
    same settings for the CLI.
    """
    return TrainConfig.model_validate(
        {
            "seed": seed,
            "epochs": 12,
            "batch_size": 16,
            "stop_train_accuracy": 99.0,
            "tssn": {
                "k": 4,
                "num_blocks": 2,
                "channels": [16, 32],
                "lstm_hidden": 16,
                "attn_heads": 2,
                "out_dim": 32,
            },
            "ftde": {"conv_channels": [16, 32], "conv_kernels": [3, 3], "lstm_hidden": 16, "out_dim": 32},
            "finsler": {"phi_hidden": 16},
            "fusion": {"attn_heads": 2, "proj_dim": 16, "num_classes": 10},
            "schedule": {"lr_max": 5e-3},
        }
    )


def check_model_gradients(
    config: Optional[TrainConfig] = None,
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_elements: Optional[int] = 20,
) -> GradCheckReport:
    """Finite-difference check of the full training loss over every model parameter."""
    config = config or toy_config()
    train_seqs, _ = load_splits(config)
    model = DSLNet(config, dims=train_seqs[0].dims)
    batch = collate(prepare_split(train_seqs, config), config.tssn.k)

    report = grad_check(
        lambda: model.loss(batch).total,
        model.store,
        eps=eps,
        tol=tol,
        max_elements=max_elements,
        seed=config.seed,
    )
    status = "✓ passed" if report.passed else "✗ FAILED"
    logger.info(f"{status}: max relative error {report.max_rel_error:.3e} (tol {tol:g})")
    return report
