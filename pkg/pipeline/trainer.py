"""
Training loop and evaluation.

AdamW with a cosine-annealed learning rate, one optimizer step per batch.
Augmentation seeds are derived per (seed, epoch, sample), so a run is fully
determined by its config.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from config.errors import DSLNetError
from config.settings import settings
from config.train_config import TrainConfig
from nn_core.autograd import set_training
from nn_core.checkpoint import Checkpoint, save_checkpoint
from nn_core.optim import ScheduleSpec, adamw_step, cosine_lr
from pipeline.data import DatasetError, drop_frames, iterate_batches, load_splits, prepare_split, sample_seed
from pipeline.metrics import EpochRecord, MetricsReport, accuracy, confusion_matrix, write_metrics
from pipeline.model import DSLNet
from skel_data.models import SkeletonSequence

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.json"


class DivergenceError(DSLNetError, RuntimeError):
    """The training loss became NaN or infinite."""


@dataclass
class TrainResult:
    model: DSLNet
    checkpoint: Checkpoint
    report: MetricsReport


def _predict_all(model: DSLNet, samples, batch_size: int) -> np.ndarray:
    preds = [model.predict(batch) for batch in iterate_batches(samples, batch_size, model.config.tssn.k)]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def train(
    config: TrainConfig,
    train_sequences: Optional[Sequence[SkeletonSequence]] = None,
    test_sequences: Optional[Sequence[SkeletonSequence]] = None,
    out_dir: Optional[Path] = None,
) -> TrainResult:
    """
    Train one model.

    Args:
        config: experiment configuration
        train_sequences, test_sequences: raw splits; built from config.dataset when omitted
        out_dir: when given, checkpoint.ckpt and metrics.json are written there

    Returns:
        TrainResult with the trained model, its checkpoint and the metrics report
    """
    if train_sequences is None:
        train_sequences, test_sequences = load_splits(config)
    test_sequences = list(test_sequences or [])
    if not train_sequences:
        raise DatasetError("training split is empty")

    model = DSLNet(config, dims=train_sequences[0].dims)
    batches_per_epoch = math.ceil(len(train_sequences) / config.batch_size)
    schedule = ScheduleSpec(
        lr_max=config.schedule.lr_max,
        lr_min=config.schedule.lr_min,
        total_steps=max(1, config.epochs * batches_per_epoch),
    )
    opt = config.optimizer
    shuffle_rng = np.random.default_rng([config.seed, 1])
    clean_train = prepare_split(train_sequences, config)
    train_labels = np.array([s.label for s in clean_train])

    records: List[EpochRecord] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        samples = prepare_split(train_sequences, config, epoch=epoch)
        set_training(True)
        loss_sum = 0.0
        progress = tqdm(
            iterate_batches(samples, config.batch_size, config.tssn.k, shuffle_rng),
            total=batches_per_epoch,
            desc=f"Epoch {epoch}/{config.epochs}",
            disable=not settings.progress_bar,
        )
        for batch in progress:
            lr = cosine_lr(schedule, step)
            model.store.zero_grad()
            loss = model.loss(batch).total
            value = loss.item()
            if not np.isfinite(value):
                logger.error(f"Loss became {value} at epoch {epoch}, step {step} (lr={lr:.2e})")
                raise DivergenceError(f"non-finite loss {value} at epoch {epoch}, step {step}")
            loss.backward()
            adamw_step(model.store, lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay)
            step += 1
            loss_sum += value * batch.size
            logger.debug(f"step {step}: loss={value:.4f} lr={lr:.2e}")
            progress.set_postfix(loss=f"{value:.4f}")

        train_acc = accuracy(train_labels, _predict_all(model, clean_train, config.eval_batch_size))
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=round(loss_sum / len(samples), 6),
                train_accuracy=train_acc,
                lr=cosine_lr(schedule, step),
            )
        )
        logger.info(f"✓ Epoch {epoch}/{config.epochs}: loss={records[-1].train_loss:.4f} train_acc={train_acc:.2f}%")
        if config.stop_train_accuracy is not None and train_acc >= config.stop_train_accuracy:
            logger.info(f"Train accuracy reached {config.stop_train_accuracy:.1f}%, stopping after epoch {epoch}")
            break

    report = evaluate(model, test_sequences)
    report.epochs = records
    ckpt = model.to_checkpoint()

    if out_dir is not None:
        out_dir = Path(out_dir)
        save_checkpoint(out_dir / CHECKPOINT_NAME, ckpt)
        write_metrics(report, out_dir / METRICS_NAME)
    logger.info(f"✓ Training finished: test accuracy {report.test_accuracy:.2f}% on {report.num_test} samples")
    return TrainResult(model=model, checkpoint=ckpt, report=report)


def evaluate(
    model: Union[DSLNet, Checkpoint],
    sequences: Sequence[SkeletonSequence],
    dropout_rate: float = 0.0,
    pattern: str = "random",
) -> MetricsReport:
    """
    Eval-mode accuracy, optionally after dropping floor(rate * T) frames per sequence.

    Dropped frames are chosen with a per-sample seed derived from the model
    seed and the sample index, so the random pattern drops nested frame sets
    as the rate grows.
    """
    if isinstance(model, Checkpoint):
        model = DSLNet.from_checkpoint(model)
    config = model.config
    kept = [
        drop_frames(seq, dropout_rate, np.random.default_rng(sample_seed(config.seed, 3, i)), pattern)
        for i, seq in enumerate(sequences)
    ]
    samples = prepare_split(kept, config)
    labels = np.array([s.label for s in samples], dtype=int)
    preds = _predict_all(model, samples, config.eval_batch_size)

    return MetricsReport(
        mode=config.mode,
        seed=config.seed,
        test_accuracy=accuracy(labels, preds),
        num_test=len(samples),
        confusion=confusion_matrix(labels, preds, config.fusion.num_classes) if len(samples) else [],
        dropout_rate=dropout_rate,
        dropout_pattern=pattern,
    )
