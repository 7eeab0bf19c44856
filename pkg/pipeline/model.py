"""
DSLNet model assembly.

Each ablation mode builds only the components it uses, so every registered
parameter receives a gradient on every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.train_config import TrainConfig
from fusion.cross_attention import CrossAttention
from fusion.head import ClassifierHead, LossBreakdown, ProjectionHeads, classify, cross_entropy, loss_total
from fusion.transport import GeoOTAlignment
from ftde.network import FtdeNetwork
from nn_core import functional as F
from nn_core.autograd import Value, concat, eval_mode, no_grad
from nn_core.checkpoint import Checkpoint
from nn_core.params import ParamStore
from pipeline.data import Batch
from tssn.network import TssnNetwork

logger = logging.getLogger(__name__)

GEO_OT_MODES = ("dual_geo_ot", "global_norm")
CROSS_ATTN_MODES = GEO_OT_MODES + ("dual_cross_attn",)


@dataclass
class ModelOutput:
    logits: Value                          # B x C
    features: Value                        # B x F, input of the classifier
    shape_global: Optional[Value] = None   # B x d_s (F_s or F_s^attn)
    traj_aligned: Optional[Value] = None   # B x d_t (F_t^aligned), Geo-OT modes only
    gamma: Optional[Value] = None          # B x T transport plan, Geo-OT modes only


class DSLNet:
    """Dual-reference dual-stream network for one ablation mode."""

    def __init__(self, config: TrainConfig, dims: int = 2):
        self.config = config
        self.mode = config.mode
        self.dims = dims
        self.store = ParamStore(seed=config.seed)
        self.dropout_rng = np.random.default_rng([config.seed, 7])

        fusion = config.fusion
        self.tssn = TssnNetwork(self.store, config.tssn, in_dims=dims) if self.mode != "ftde_only" else None
        self.ftde = (
            FtdeNetwork(self.store, config.ftde, config.finsler, dims=dims) if self.mode != "tssn_only" else None
        )
        d_s, d_t = config.tssn.out_dim, config.ftde.out_dim

        self.cross = None
        if self.mode in CROSS_ATTN_MODES:
            self.cross = CrossAttention(self.store, "fusion.cross", d_s, d_t, fusion.attn_heads, fusion.residual)

        self.geo_ot = GeoOTAlignment(fusion) if self.mode in GEO_OT_MODES else None
        self.proj = (
            ProjectionHeads(self.store, "fusion.proj", d_s, d_t, fusion.proj_dim) if self.geo_ot is not None else None
        )

        if self.mode == "tssn_only":
            head_in = d_s
        elif self.mode == "ftde_only":
            head_in = d_t
        else:
            head_in = d_s + d_t
        self.head = ClassifierHead(self.store, "fusion.head", head_in, fusion.num_classes)
        logger.info(f"Built DSLNet[{self.mode}] with {self.store.num_parameters():,} parameters")

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------
    def forward(self, batch: Batch) -> ModelOutput:
        mask = batch.mask
        shape_seq = shape_global = traj_seq = None

        if self.tssn is not None:
            tssn_out = self.tssn(batch.shape_stream, batch.neighbors, mask)
            shape_seq, shape_global = tssn_out.seq, tssn_out.pooled
        if self.ftde is not None:
            traj_seq = self.ftde(batch.features, batch.speed, batch.v_hat, mask).seq

        traj_aligned = gamma = None
        if self.mode == "tssn_only":
            features = shape_global
        elif self.mode == "ftde_only":
            features = F.masked_mean(traj_seq, mask, axis=1)
        elif self.mode == "dual_concat":
            features = concat([shape_global, F.masked_mean(traj_seq, mask, axis=1)], axis=-1)
        else:
            enhanced = self.cross(shape_seq, traj_seq, mask)
            shape_global = enhanced.shape_global
            if self.geo_ot is not None:
                traj_aligned, gamma, _ = self.geo_ot(shape_global, enhanced.traj_seq, mask)
                features = concat([shape_global, traj_aligned], axis=-1)
            else:
                features = concat([shape_global, F.masked_mean(enhanced.traj_seq, mask, axis=1)], axis=-1)

        if self.geo_ot is not None:
            logits = classify(
                F.dropout(shape_global, self.config.dropout, self.dropout_rng),
                F.dropout(traj_aligned, self.config.dropout, self.dropout_rng),
                self.head,
            )
        else:
            logits = self.head(F.dropout(features, self.config.dropout, self.dropout_rng))
        return ModelOutput(
            logits=logits,
            features=features,
            shape_global=shape_global,
            traj_aligned=traj_aligned,
            gamma=gamma,
        )

    def loss(self, batch: Batch, output: Optional[ModelOutput] = None) -> LossBreakdown:
        """CE plus alpha_loss * L_geo in the Geo-OT modes, CE alone otherwise."""
        output = output or self.forward(batch)
        if self.proj is None:
            ce = cross_entropy(output.logits, batch.labels)
            return LossBreakdown(total=ce, ce=ce)
        return loss_total(
            output.logits,
            batch.labels,
            output.shape_global,
            output.traj_aligned,
            self.proj,
            self.config.fusion.alpha_loss,
        )

    def predict(self, batch: Batch) -> np.ndarray:
        with eval_mode(), no_grad():
            return np.argmax(self.forward(batch).logits.data, axis=-1)

    def flops(self, steps: int, batch: int = 1) -> int:
        """Inference FLOPs for `batch` sequences of `steps` frames (projection heads excluded)."""
        total = 0
        if self.tssn is not None:
            total += self.tssn.flops(batch, steps)
        if self.ftde is not None:
            total += self.ftde.flops(batch, steps)
        if self.cross is not None:
            total += self.cross.flops(batch, steps)
        return total + self.head.flops(batch)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
    def to_checkpoint(self) -> Checkpoint:
        record = {"dims": self.dims, "train": self.config.model_dump(mode="json")}
        return Checkpoint.from_store(self.store, record)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "DSLNet":
        config = TrainConfig.model_validate(ckpt.config["train"])
        model = cls(config, dims=int(ckpt.config.get("dims", 2)))
        ckpt.restore(model.store)
        return model
