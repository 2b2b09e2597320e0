"""Staged training: speech-branch pretraining, fine-tuning, then joint tuning.

Plain (or momentum) SGD, one utterance per step, with seeded shuffling so the
loss curve is reproducible bit for bit.  During the joint stage the train-set
decode metrics can be polled every few epochs and training stops early once
the configured targets are met.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import FeatureConfig, log_power_features, read_wav, AudioClip
from .data import Manifest
from .decode import decode_two_step
from .errors import NumericError, ValidationError
from .metrics import intent_accuracy, slots_edit_f1
from .model import JointModel, MODE_E2E, MODE_TWO_STAGE

log = logging.getLogger(__name__)

STAGE_ASR_PRETRAIN = "asr_pretrain"
STAGE_ASR_FINETUNE = "asr_finetune"
STAGE_JOINT_FINETUNE = "joint_finetune"
_STAGES = (STAGE_ASR_PRETRAIN, STAGE_ASR_FINETUNE, STAGE_JOINT_FINETUNE)


@dataclass
class StageConfig:
    stage: str
    epochs: int
    lr: float
    momentum: float = 0.0
    eval_every: int = 0
    target_slots_f1: float | None = None
    target_intent_acc: float | None = None

    def __post_init__(self):
        if self.stage not in _STAGES:
            raise ValidationError(f"unknown stage {self.stage!r}, expected one of {_STAGES}")
        if self.epochs < 0 or self.lr <= 0:
            raise ValidationError("epochs must be >= 0 and lr > 0")


@dataclass
class TrainConfig:
    seed: int = 0
    beam_size: int = 5
    mode: str = MODE_E2E
    stages: list[StageConfig] = field(default_factory=list)

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if self.mode not in (MODE_E2E, MODE_TWO_STAGE):
            raise ValidationError(f"unknown mode {self.mode!r}")


def corpus_features(manifest: Manifest, feature: FeatureConfig) -> list[np.ndarray]:
    feats = []
    for rec in manifest.records:
        if rec.samples is not None:
            clip = AudioClip(np.asarray(rec.samples), 16000)
        elif rec.audio_path is not None:
            path = Path(rec.audio_path)
            if not path.is_absolute() and manifest.base_dir is not None:
                path = manifest.base_dir / path
            clip = read_wav(path)
        else:
            raise ValidationError(f"record {rec.id!r} has no audio")
        feats.append(log_power_features(clip, feature))
    return feats


class _Sgd:
    def __init__(self, params, lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        for name, tensor in self.params.items():
            if tensor.grad is None:
                continue
            if not np.isfinite(tensor.grad).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            v = self.velocity[name]
            v *= self.momentum
            v -= self.lr * tensor.grad
            tensor.data = tensor.data + v


def evaluate_train_set(
    model: JointModel, manifest: Manifest, features: list[np.ndarray], beam_size: int
) -> dict[str, float]:
    """Decode the training corpus and score it end to end."""
    hyps, ref_pairs, ref_intents, hyp_intents = [], [], [], []
    for rec, feats in zip(manifest.records, features):
        result = decode_two_step(model, feats, beam_size=beam_size)
        hyps.append((result.words, result.slots))
        ref_pairs.append((rec.words, rec.slots))
        ref_intents.append(rec.intent)
        hyp_intents.append(result.intent)
    report = slots_edit_f1(ref_pairs, hyps)
    return {
        "slots_edit_f1": report.f1,
        "intent_accuracy": intent_accuracy(ref_intents, hyp_intents),
    }


def train(
    model: JointModel,
    manifest: Manifest,
    config: TrainConfig,
    feature: FeatureConfig = FeatureConfig(),
    pretrain_manifest: Manifest | None = None,
) -> list[dict]:
    """Run the staged schedule in order; returns one log row per epoch.

    The speech-branch stages optimize the transcript loss only; the joint
    stage optimizes the full sum.  ``pretrain_manifest`` (when given) feeds
    the first stage, mirroring pretraining on an external transcribed corpus.
    """
    if not model.params:
        model.init_params(config.seed)
    records = manifest.records
    if not records:
        raise ValidationError("cannot train on an empty manifest")
    features = corpus_features(manifest, feature)
    pre_records, pre_features = records, features
    if pretrain_manifest is not None:
        pre_records = pretrain_manifest.records
        pre_features = corpus_features(pretrain_manifest, feature)

    history: list[dict] = []
    stop_asr = config.mode == MODE_TWO_STAGE
    for stage_idx, stage in enumerate(config.stages):
        data = (
            list(zip(pre_records, pre_features))
            if stage.stage == STAGE_ASR_PRETRAIN
            else list(zip(records, features))
        )
        opt = _Sgd(model.params, stage.lr, stage.momentum)
        for epoch in range(stage.epochs):
            order = list(range(len(data)))
            random.Random(f"{config.seed}:{stage_idx}:{epoch}").shuffle(order)
            total = 0.0
            for i in order:
                rec, feats = data[i]
                model.zero_grads()
                if stage.stage == STAGE_JOINT_FINETUNE:
                    loss, _, _ = model.loss_slu(
                        feats, rec.words, rec.slots, rec.intent, stop_asr_grad=stop_asr
                    )
                else:
                    out = model.forward(feats, rec.words)
                    loss = model.loss_asr(out.asr_logits, out.asr_targets)
                loss.backward()
                opt.step()
                total += loss.item()
            mean_loss = total / len(data)
            if not np.isfinite(mean_loss):
                raise NumericError(
                    f"training diverged: loss {mean_loss} in stage {stage.stage} epoch {epoch}"
                )
            row = {"stage": stage.stage, "epoch": epoch, "loss": mean_loss}
            polling = (
                stage.eval_every
                and stage.stage == STAGE_JOINT_FINETUNE
                and (epoch + 1) % stage.eval_every == 0
            )
            if polling:
                row.update(evaluate_train_set(model, manifest, features, config.beam_size))
                log.info(
                    "stage %s epoch %d loss %.4f slots_edit_f1 %.3f intent_acc %.3f",
                    stage.stage, epoch, mean_loss,
                    row["slots_edit_f1"], row["intent_accuracy"],
                )
            history.append(row)
            if polling and stage.target_slots_f1 is not None and stage.target_intent_acc is not None:
                if (
                    row["slots_edit_f1"] >= stage.target_slots_f1
                    and row["intent_accuracy"] >= stage.target_intent_acc
                ):
                    log.info("targets reached, stopping stage %s early", stage.stage)
                    break
    return history
