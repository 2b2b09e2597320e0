"""Desk-scale joint speech understanding model.

Two branches share one loss: a feature encoder with a teacher-forced subword
decoder produces per-subword states and transcript logits; a word-embedding
plus single self-attention layer produces states for a second tokenization.
Both are projected to word level through their first-index matrices and
concatenated; intent and slot heads read the concatenated rows.  The slot
head is a per-token linear layer or a linear layer plus CRF.

All tensors are float64 so finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import FeatureConfig
from .autodiff import Tensor, concat, cross_entropy_row, softmax_rows, wrap
from .crf import crf_nll_t
from .errors import DimensionError, ValidationError
from .ioutil import atomic_write_text
from .subword import (
    POOL_FIRST,
    POOL_LAST,
    POOL_MEAN,
    SubwordVocab,
    TokenizationResult,
    pooling_matrix,
    tokenize,
)

CHECKPOINT_VERSION = 1

HEAD_LINEAR = "linear"
HEAD_CRF = "crf"

MODE_E2E = "e2e"
MODE_TWO_STAGE = "two_stage"


@dataclass
class ModelConfig:
    feature_dim: int
    asr_hidden: int = 16
    nlu_hidden: int = 16
    subsample_stride: int = 3
    slot_head: str = HEAD_LINEAR
    max_positions: int = 64
    label_smoothing: float = 0.1
    word_pooling: str = POOL_FIRST  # how subword states map to word states

    def __post_init__(self):
        if self.slot_head not in (HEAD_LINEAR, HEAD_CRF):
            raise ValidationError(f"unknown slot head {self.slot_head!r}")
        if self.subsample_stride < 1:
            raise ValidationError("subsample stride must be >= 1")
        if self.word_pooling not in (POOL_FIRST, POOL_LAST, POOL_MEAN):
            raise ValidationError(f"unknown word pooling {self.word_pooling!r}")


@dataclass
class ForwardOutputs:
    ha: Tensor  # (asr subwords, asr_hidden)
    hb: Tensor  # (nlu subwords, nlu_hidden)
    hcat: Tensor  # (words, asr_hidden + nlu_hidden)
    asr_logits: Tensor  # (asr subwords + 1, asr output vocab), last row predicts EOS
    slot_scores: Tensor  # (words, num_tags)
    intent_logits: Tensor  # (1, num_intents)
    asr_targets: list[int] = field(default_factory=list)
    tok_a: TokenizationResult | None = None
    tok_b: TokenizationResult | None = None


def subsample_features(features: np.ndarray, stride: int) -> np.ndarray:
    """Strided mean-pooling over time; output length is ceil(T / stride)."""
    features = np.asarray(features, dtype=np.float64)
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return features.copy()
    t = features.shape[0]
    groups = -(-t // stride)
    return np.stack(
        [features[g * stride : min((g + 1) * stride, t)].mean(axis=0) for g in range(groups)]
    )


def serialize_slots(words, slots) -> list[str]:
    """Interleave words and slot tags into one sequence [w1, s1, w2, s2, ...]."""
    words, slots = list(words), list(slots)
    if len(words) != len(slots):
        raise ValidationError(f"cannot serialize: {len(words)} words vs {len(slots)} slots")
    out: list[str] = []
    for w, s in zip(words, slots):
        out += [w, s]
    return out


def deserialize_slots(seq) -> tuple[list[str], list[str]]:
    seq = list(seq)
    if len(seq) % 2:
        raise ValidationError(f"serialized sequence has odd length {len(seq)}")
    return seq[0::2], seq[1::2]


class JointModel:
    """Parameter container plus forward/loss graph builders."""

    def __init__(
        self,
        config: ModelConfig,
        asr_vocab: SubwordVocab,
        nlu_vocab: SubwordVocab,
        slot_tags: list[str],
        intents: list[str],
    ):
        self.config = config
        self.asr_vocab = asr_vocab
        self.nlu_vocab = nlu_vocab
        self.slot_tags = list(slot_tags)
        self.intents = list(intents)

        self.asr_pieces = asr_vocab.sorted_pieces()
        self.eos_id = len(self.asr_pieces)
        self.bos_id = len(self.asr_pieces) + 1
        self._asr_piece_id = {p: i for i, p in enumerate(self.asr_pieces)}
        self.nlu_pieces = nlu_vocab.sorted_pieces()
        self._nlu_piece_id = {p: i for i, p in enumerate(self.nlu_pieces)}
        self._tag_id = {t: i for i, t in enumerate(self.slot_tags)}
        self._intent_id = {t: i for i, t in enumerate(self.intents)}
        self.params: dict[str, Tensor] = {}

    # -- vocabulary plumbing ------------------------------------------------

    @property
    def asr_output_size(self) -> int:
        return len(self.asr_pieces) + 1  # pieces + EOS

    def asr_ids(self, tokens) -> list[int]:
        try:
            return [self._asr_piece_id[t] for t in tokens]
        except KeyError as exc:
            raise ValidationError(f"subword {exc.args[0]!r} not in ASR vocabulary") from exc

    def asr_tokens(self, ids) -> list[str]:
        return [self.asr_pieces[i] for i in ids]

    def nlu_ids(self, tokens) -> list[int]:
        try:
            return [self._nlu_piece_id[t] for t in tokens]
        except KeyError as exc:
            raise ValidationError(f"subword {exc.args[0]!r} not in NLU vocabulary") from exc

    def tag_ids(self, slots) -> list[int]:
        try:
            return [self._tag_id[t] for t in slots]
        except KeyError as exc:
            raise ValidationError(f"slot tag {exc.args[0]!r} not in tag set") from exc

    def intent_id(self, intent: str) -> int:
        try:
            return self._intent_id[intent]
        except KeyError as exc:
            raise ValidationError(f"intent {intent!r} not in intent set") from exc

    # -- parameters -----------------------------------------------------------

    def init_params(self, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        cfg = self.config
        fa, fb = cfg.asr_hidden, cfg.nlu_hidden
        fcat = fa + fb
        n_tags, n_intents = len(self.slot_tags), len(self.intents)

        def mat(rows, cols, scale=None):
            scale = scale if scale is not None else 1.0 / math.sqrt(max(rows, 1))
            return Tensor(rng.normal(0.0, scale, size=(rows, cols)), requires_grad=True)

        def vec(size):
            return Tensor(np.zeros(size), requires_grad=True)

        p = {
            "asr.enc_w": mat(cfg.feature_dim, fa),
            "asr.enc_b": vec(fa),
            "asr.enc_pos": mat(cfg.max_positions, fa, scale=0.1),
            "asr.emb": mat(len(self.asr_pieces) + 2, fa),
            "asr.dec_pos": mat(cfg.max_positions, fa, scale=0.1),
            "asr.attn_q": mat(fa, fa),
            "asr.dec_w": mat(2 * fa, fa),
            "asr.dec_b": vec(fa),
            "asr.out_w": mat(fa, self.asr_output_size),
            "asr.out_b": vec(self.asr_output_size),
            "nlu.emb": mat(len(self.nlu_pieces), fb),
            "nlu.pos": mat(cfg.max_positions, fb, scale=0.1),
            "nlu.attn_q": mat(fb, fb),
            "nlu.attn_k": mat(fb, fb),
            "nlu.attn_v": mat(fb, fb),
            "nlu.ff_w": mat(fb, fb),
            "nlu.ff_b": vec(fb),
            "ic.sentinel": mat(1, fcat, scale=0.1),
            "ic.w": mat(fcat, n_intents),
            "ic.b": vec(n_intents),
            "sl.w": mat(fcat, n_tags),
            "sl.b": vec(n_tags),
        }
        if cfg.slot_head == HEAD_CRF:
            p["sl.trans"] = mat(n_tags, n_tags, scale=0.1)
            p["sl.start"] = Tensor(rng.normal(0.0, 0.1, size=n_tags), requires_grad=True)
            p["sl.end"] = Tensor(rng.normal(0.0, 0.1, size=n_tags), requires_grad=True)
        self.params = p

    def detached_params(self) -> dict[str, Tensor]:
        return {name: t.detach() for name, t in self.params.items()}

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def param_blocks(self) -> dict[str, list[str]]:
        blocks: dict[str, list[str]] = {}
        for name in self.params:
            blocks.setdefault(name.split(".", 1)[0], []).append(name)
        return blocks

    # -- forward pieces ---------------------------------------------------

    def encode_features(self, features: np.ndarray, params: dict[str, Tensor] | None = None) -> Tensor:
        p = params or self.params
        sub = subsample_features(features, self.config.subsample_stride)
        if sub.shape[1] != self.config.feature_dim:
            raise DimensionError(
                f"feature dim {sub.shape[1]} != configured {self.config.feature_dim}"
            )
        frames = sub.shape[0]
        if frames > self.config.max_positions:
            raise DimensionError(
                f"{frames} frames exceed max_positions {self.config.max_positions}"
            )
        pos = p["asr.enc_pos"].gather_rows(list(range(frames)))
        return (wrap(sub) @ p["asr.enc_w"] + p["asr.enc_b"] + pos).tanh()

    def decoder_states(self, prev_ids: list[int], steps: list[int], enc: Tensor, p) -> tuple[Tensor, Tensor]:
        """Hidden rows and logits for decoder steps given previous-token ids."""
        emb = p["asr.emb"].gather_rows(prev_ids) + p["asr.dec_pos"].gather_rows(steps)
        q = emb @ p["asr.attn_q"]
        scores = (q @ enc.T) * (1.0 / math.sqrt(self.config.asr_hidden))
        ctx = softmax_rows(scores) @ enc
        hidden = (concat([emb, ctx], axis=1) @ p["asr.dec_w"] + p["asr.dec_b"]).tanh()
        logits = hidden @ p["asr.out_w"] + p["asr.out_b"]
        return hidden, logits

    def nlu_states(self, ids_b: list[int], p) -> Tensor:
        emb = p["nlu.emb"].gather_rows(ids_b) + p["nlu.pos"].gather_rows(list(range(len(ids_b))))
        att = softmax_rows(
            (emb @ p["nlu.attn_q"]) @ (emb @ p["nlu.attn_k"]).T
            * (1.0 / math.sqrt(self.config.nlu_hidden))
        )
        ctx = att @ (emb @ p["nlu.attn_v"])
        return ((emb + ctx) @ p["nlu.ff_w"] + p["nlu.ff_b"]).tanh()

    def intent_logits_from(self, hcat_rows: list[Tensor], p) -> Tensor:
        pooled = concat([p["ic.sentinel"], *hcat_rows], axis=0).mean(axis=0, keepdims=True)
        return pooled @ p["ic.w"] + p["ic.b"]

    def forward(
        self,
        features: np.ndarray,
        words,
        params: dict[str, Tensor] | None = None,
        stop_asr_grad: bool = False,
    ) -> ForwardOutputs:
        """Teacher-forced forward pass over one utterance.

        The ground-truth words feed both tokenizers; with ``stop_asr_grad``
        the concatenation reads a detached copy of the decoder states, so
        slot/intent errors cannot reach the speech branch (the 2-stage
        baseline).  Transcript logits are unaffected by the flag.
        """
        p = params or self.params
        words = list(words)
        if not words:
            raise ValidationError("forward requires at least one word")
        tok_a = tokenize(words, self.asr_vocab)
        tok_b = tokenize(words, self.nlu_vocab)
        ids_a = self.asr_ids(tok_a.tokens)
        ids_b = self.nlu_ids(tok_b.tokens)
        if len(ids_a) + 1 > self.config.max_positions:
            raise DimensionError("utterance exceeds max decoder positions")

        enc = self.encode_features(features, p)
        prev = [self.bos_id] + ids_a
        h_dec, asr_logits = self.decoder_states(prev, list(range(len(prev))), enc, p)
        ha = h_dec.gather_rows(list(range(len(ids_a))))
        hb = self.nlu_states(ids_b, p)

        ha_nlu = ha.detach() if stop_asr_grad else ha
        ma = pooling_matrix(tok_a, self.config.word_pooling)
        mb = pooling_matrix(tok_b, self.config.word_pooling)
        hcat = concat([wrap(ma.T) @ ha_nlu, wrap(mb.T) @ hb], axis=1)
        slot_scores = hcat @ p["sl.w"] + p["sl.b"]
        intent_logits = self.intent_logits_from([hcat], p)
        return ForwardOutputs(
            ha=ha,
            hb=hb,
            hcat=hcat,
            asr_logits=asr_logits,
            slot_scores=slot_scores,
            intent_logits=intent_logits,
            asr_targets=ids_a + [self.eos_id],
            tok_a=tok_a,
            tok_b=tok_b,
        )

    # -- losses ----------------------------------------------------------

    def loss_asr(self, asr_logits: Tensor, targets: list[int], smoothing: float | None = None) -> Tensor:
        """Mean per-token negative log-likelihood with label smoothing."""
        n, k = asr_logits.shape
        if n != len(targets):
            raise DimensionError(f"{n} logit rows vs {len(targets)} targets")
        eps = self.config.label_smoothing if smoothing is None else smoothing
        lse = asr_logits.logsumexp(axis=1)
        picked = asr_logits.reshape(n * k).gather_rows(
            [i * k + t for i, t in enumerate(targets)]
        )
        if eps == 0.0:
            return (lse - picked).mean()
        return (lse - ((1.0 - eps) * picked + eps * asr_logits.mean(axis=1))).mean()

    def loss_nlu(self, slot_scores: Tensor, intent_logits: Tensor, slots, intent: str) -> Tensor:
        """Slot sequence NLL (per-token sum or CRF) plus intent NLL."""
        tag_ids = self.tag_ids(slots)
        n, k = slot_scores.shape
        if n != len(tag_ids):
            raise DimensionError(f"{n} slot score rows vs {len(tag_ids)} tags")
        if self.config.slot_head == HEAD_CRF:
            slot_term = crf_nll_t(
                slot_scores, tag_ids, self.params["sl.trans"], self.params["sl.start"], self.params["sl.end"]
            )
        else:
            lse = slot_scores.logsumexp(axis=1)
            picked = slot_scores.reshape(n * k).gather_rows(
                [i * k + t for i, t in enumerate(tag_ids)]
            )
            slot_term = (lse - picked).sum()
        return slot_term + cross_entropy_row(intent_logits, self.intent_id(intent))

    def loss_slu(
        self,
        features: np.ndarray,
        words,
        slots,
        intent: str,
        stop_asr_grad: bool = False,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """(total, asr term, nlu term); the total is the exact unweighted sum."""
        out = self.forward(features, words, stop_asr_grad=stop_asr_grad)
        asr = self.loss_asr(out.asr_logits, out.asr_targets)
        nlu = self.loss_nlu(out.slot_scores, out.intent_logits, slots, intent)
        return asr + nlu, asr, nlu

    # -- checkpointing ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "model": asdict(self.config),
            "asr_vocab": {"kind": self.asr_vocab.kind, "pieces": self.asr_vocab.sorted_pieces(), "unk": self.asr_vocab.unk},
            "nlu_vocab": {"kind": self.nlu_vocab.kind, "pieces": self.nlu_vocab.sorted_pieces(), "unk": self.nlu_vocab.unk},
            "slot_tags": self.slot_tags,
            "intents": self.intents,
            "params": {
                name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
                for name, t in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "JointModel":
        version = obj.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {version!r}")
        model = cls(
            ModelConfig(**obj["model"]),
            SubwordVocab.create(obj["asr_vocab"]["kind"], obj["asr_vocab"]["pieces"], obj["asr_vocab"]["unk"]),
            SubwordVocab.create(obj["nlu_vocab"]["kind"], obj["nlu_vocab"]["pieces"], obj["nlu_vocab"]["unk"]),
            obj["slot_tags"],
            obj["intents"],
        )
        params = {}
        for name, spec in obj["params"].items():
            arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
            params[name] = Tensor(arr, requires_grad=True)
        model.params = params
        return model


def save_checkpoint(
    model: JointModel,
    path: str | Path,
    feature: FeatureConfig | None = None,
    beam_size: int = 5,
) -> None:
    obj = model.to_dict()
    obj["feature"] = asdict(feature or FeatureConfig())
    obj["beam_size"] = beam_size
    atomic_write_text(path, json.dumps(obj))


def load_checkpoint(path: str | Path) -> tuple[JointModel, FeatureConfig, int]:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a valid checkpoint: {exc}") from exc
    try:
        model = JointModel.from_dict(obj)
        feature = FeatureConfig(**obj.get("feature", {}))
        beam_size = int(obj.get("beam_size", 5))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed checkpoint: {exc}") from exc
    return model, feature, beam_size
