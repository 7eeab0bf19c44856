"""
效率报告: analytic FLOP count, parameter count and per-sample latency.

Multiply-adds count as 2 FLOPs (dense 2mn, conv1d 2*T*k*C_in*C_out, LSTM gate
matmuls, attention QKV/scores/weighted sum/output); elementwise ops are free.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Optional, Sequence

from pydantic import BaseModel, Field

from config.train_config import TrainConfig
from nn_core.params import ParamStore
from pipeline.data import collate, prepare_sample
from pipeline.model import DSLNet
from skel_data.models import SkeletonSequence
from skel_data.sequence_io import IoError

logger = logging.getLogger(__name__)

BENCH_NAME = "bench.json"
REALTIME_BUDGET_MS = 33.0


class ParamCount(BaseModel):
    total: int = Field(..., ge=0)
    millions: float = Field(..., ge=0.0, description="Params (M), 3 decimals")


class BenchReport(BaseModel):
    """Written to bench.json (kept apart from the byte-deterministic metrics.json)"""
    mode: str
    steps: int = Field(..., ge=1, description="Frames per sequence used for the FLOP estimate")
    flops: int = Field(..., ge=0)
    gflops: float
    params: ParamCount
    inference_ms: Optional[float] = Field(None, description="Mean eval-mode forward time per sample")
    realtime: Optional[bool] = Field(None, description=f"inference_ms below {REALTIME_BUDGET_MS:.0f} ms")
    repeats: int = 0


def flop_estimate(config: TrainConfig, steps: Optional[int] = None, dims: int = 2) -> int:
    """Inference FLOPs for one sequence of `steps` frames (default: dataset.duration_frames)."""
    steps = steps or config.dataset.duration_frames
    return DSLNet(config, dims=dims).flops(steps)


def count_parameters(store: ParamStore) -> ParamCount:
    total = store.num_parameters()
    return ParamCount(total=total, millions=round(total / 1e6, 3))


def measure_latency(model: DSLNet, sequences: Sequence[SkeletonSequence], repeats: int = 5) -> float:
    """
    Mean wall-clock milliseconds per single-sample eval forward.

    Preprocessing is excluded; one warm-up pass runs before timing.
    """
    if not sequences:
        raise ValueError("measure_latency needs at least one sequence")
    config = model.config
    batches = [collate([prepare_sample(seq, config.mode, config.epsilon)], config.tssn.k) for seq in sequences]
    model.predict(batches[0])

    start = time.perf_counter()
    for _ in range(repeats):
        for batch in batches:
            model.predict(batch)
    elapsed = time.perf_counter() - start
    return 1000.0 * elapsed / (repeats * len(batches))


def bench(
    model: DSLNet,
    sequences: Sequence[SkeletonSequence] = (),
    steps: Optional[int] = None,
    repeats: int = 5,
    out_dir: Optional[Path] = None,
) -> BenchReport:
    config = model.config
    steps = steps or config.dataset.duration_frames
    flops = model.flops(steps)
    params = count_parameters(model.store)

    latency = measure_latency(model, sequences, repeats) if sequences else None
    report = BenchReport(
        mode=config.mode,
        steps=steps,
        flops=flops,
        gflops=round(flops / 1e9, 4),
        params=params,
        inference_ms=None if latency is None else round(latency, 3),
        realtime=None if latency is None else latency < REALTIME_BUDGET_MS,
        repeats=repeats if sequences else 0,
    )
    logger.info(f"✓ {config.mode}: {report.gflops} GFLOPs @ T={steps}, {params.millions}M params")
    if latency is not None:
        logger.info(f"  inference {latency:.2f} ms/sample (realtime={report.realtime})")

    if out_dir is not None:
        path = Path(out_dir) / BENCH_NAME
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise IoError(f"Cannot write {path}: {e}") from e
    return report
