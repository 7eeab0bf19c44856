"""Export pre-classifier features (for t-SNE style inspection) as CSV."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from nn_core.autograd import eval_mode, no_grad
from nn_core.checkpoint import Checkpoint
from pipeline.data import iterate_batches, prepare_split
from pipeline.model import DSLNet
from skel_data.models import SkeletonSequence
from skel_data.sequence_io import IoError

logger = logging.getLogger(__name__)


def extract_features(model: DSLNet, sequences: Sequence[SkeletonSequence]) -> pd.DataFrame:
    """
    One row per sequence: f0..f{n-1} holding the fused feature fed to the
    classifier ([F_s^attn ; F_t^aligned] for dual_geo_ot), then label.
    """
    config = model.config
    samples = prepare_split(sequences, config)
    rows, labels = [], []
    with eval_mode(), no_grad():
        for batch in iterate_batches(samples, config.eval_batch_size, config.tssn.k):
            rows.append(model.forward(batch).features.data)
            labels.append(batch.labels)

    if not rows:
        raise ValueError("no sequences to export")
    features = np.concatenate(rows, axis=0)
    df = pd.DataFrame(features, columns=[f"f{i}" for i in range(features.shape[1])])
    df["label"] = np.concatenate(labels)
    return df


def export_features(
    model: Union[DSLNet, Checkpoint],
    sequences: Sequence[SkeletonSequence],
    path: Path,
) -> pd.DataFrame:
    if isinstance(model, Checkpoint):
        model = DSLNet.from_checkpoint(model)
    df = extract_features(model, sequences)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format="%.10g")
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}") from e
    logger.info(f"✓ Exported {len(df)} x {df.shape[1] - 1} features to {path}")
    return df
