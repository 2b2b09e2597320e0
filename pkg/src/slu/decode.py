"""Two-step inference: transcript beam search, then slot/intent decoding.

Step one searches subword space for the best transcript under the
first-order decoder; only the top-1 hypothesis survives.  Step two rebuilds
the word-level concatenated states from the same audio features plus that
hypothesis and decodes the intent (argmax) and slot path (argmax per token,
or Viterbi under the CRF head).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, wrap
from .crf import CrfParams, crf_viterbi
from .errors import DecodeError
from .model import JointModel, HEAD_CRF
from .subword import TokenizationResult, first_index_matrix, merge_tokens, pooling_matrix, tokenize


@dataclass
class DecodeResult:
    words: list[str]
    slots: list[str]
    intent: str
    asr_tokens: list[str]
    asr_logprob: float


@dataclass(frozen=True)
class _Hyp:
    tokens: tuple[int, ...]
    logp: float

    def key(self):
        return (-self.logp, self.tokens)


def step_logprobs(model: JointModel, params, enc: Tensor, prev_id: int, step: int) -> np.ndarray:
    """Log-probabilities over the ASR output vocabulary for one decoder step."""
    _, logits = model.decoder_states([prev_id], [step], enc, params)
    row = logits.data[0]
    return row - np.log(np.exp(row - row.max()).sum()) - row.max()


def beam_search_transcript(
    model: JointModel,
    features: np.ndarray,
    beam_size: int,
    max_len: int = 40,
    params=None,
) -> tuple[list[int], float]:
    """Top-1 subword id sequence (without EOS) and its total log-probability.

    EOS competes for beam slots like any other symbol, so beam_size=1 is
    exactly greedy decoding; hypotheses that emit EOS retire from the beam.
    Live hypotheses surviving to max_len are closed with a forced EOS.  Ties
    break deterministically on the token id tuple.
    """
    if beam_size < 1:
        raise DecodeError(f"beam size must be >= 1, got {beam_size}")
    max_len = min(max_len, model.config.max_positions - 1)
    p = params or model.detached_params()
    enc = model.encode_features(features, p)
    live = [_Hyp((), 0.0)]
    done: list[_Hyp] = []
    cache: dict[tuple[int, int], np.ndarray] = {}

    def logprobs_after(hyp: _Hyp, step: int) -> np.ndarray:
        prev = hyp.tokens[-1] if hyp.tokens else model.bos_id
        key = (prev, step)
        if key not in cache:
            cache[key] = step_logprobs(model, p, enc, prev, step)
        return cache[key]

    for step in range(max_len):
        candidates: list[tuple[_Hyp, bool]] = []
        for hyp in live:
            logprobs = logprobs_after(hyp, step)
            candidates.append(
                (_Hyp(hyp.tokens, hyp.logp + float(logprobs[model.eos_id])), True)
            )
            for tok in range(len(model.asr_pieces)):
                candidates.append(
                    (_Hyp(hyp.tokens + (tok,), hyp.logp + float(logprobs[tok])), False)
                )
        candidates.sort(key=lambda c: c[0].key())
        top = candidates[:beam_size]
        done.extend(hyp for hyp, ended in top if ended)
        live = [hyp for hyp, ended in top if not ended]
        if not live:
            break
    for hyp in live:  # close out hypotheses that hit the length bound
        done.append(_Hyp(hyp.tokens, hyp.logp + float(logprobs_after(hyp, max_len)[model.eos_id])))
    if not done:
        raise DecodeError("beam search produced no complete hypothesis")
    best = min(done, key=_Hyp.key)
    return list(best.tokens), best.logp


def decode_two_step(
    model: JointModel,
    features: np.ndarray,
    beam_size: int = 5,
    max_len: int = 40,
) -> DecodeResult:
    params = model.detached_params()
    ids, logp = beam_search_transcript(model, features, beam_size, max_len, params)
    tokens = model.asr_tokens(ids)
    words, first_index = merge_tokens(tokens, model.asr_vocab)

    if not words:
        # Degenerate transcript: intent from the sentinel row alone, no slots.
        intent_logits = model.intent_logits_from([], params)
        intent = model.intents[int(np.argmax(intent_logits.data[0]))]
        return DecodeResult([], [], intent, tokens, logp)

    enc = model.encode_features(features, params)
    prev = [model.bos_id] + ids
    h_dec, _ = model.decoder_states(prev, list(range(len(prev))), enc, params)
    ha = h_dec.gather_rows(list(range(len(ids))))
    tok_hyp = TokenizationResult(tokens, first_index, first_index_matrix(first_index, len(ids)))
    ma = pooling_matrix(tok_hyp, model.config.word_pooling)

    tok_b = tokenize(words, model.nlu_vocab)
    hb = model.nlu_states(model.nlu_ids(tok_b.tokens), params)
    mb = pooling_matrix(tok_b, model.config.word_pooling)
    hcat = concat([wrap(ma.T) @ ha, wrap(mb.T) @ hb], axis=1)

    intent_logits = model.intent_logits_from([hcat], params)
    intent = model.intents[int(np.argmax(intent_logits.data[0]))]

    slot_scores = (hcat @ params["sl.w"] + params["sl.b"]).data
    if model.config.slot_head == HEAD_CRF:
        crf = CrfParams(
            params["sl.trans"].data, params["sl.start"].data, params["sl.end"].data
        )
        tag_ids = crf_viterbi(slot_scores, crf)
    else:
        tag_ids = [int(i) for i in slot_scores.argmax(axis=1)]
    slots = [model.slot_tags[i] for i in tag_ids]
    return DecodeResult(words, slots, intent, tokens, logp)
