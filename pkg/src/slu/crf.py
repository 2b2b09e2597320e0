"""Linear-chain CRF: exact partition function, path scores, and Viterbi.

Path score = start[y_0] + sum_t emissions[t, y_t] + sum_t transitions[y_{t-1}, y_t]
           + end[y_{N-1}].

Plain numpy functions serve scoring and decoding; the Tensor variants build
the training graph for the sequence log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import DimensionError


@dataclass
class CrfParams:
    transitions: np.ndarray  # (num_tags, num_tags), [from, to]
    start: np.ndarray  # (num_tags,)
    end: np.ndarray  # (num_tags,)

    @classmethod
    def zeros(cls, num_tags: int) -> "CrfParams":
        return cls(
            np.zeros((num_tags, num_tags)), np.zeros(num_tags), np.zeros(num_tags)
        )


def _check(emissions: np.ndarray, crf: CrfParams) -> np.ndarray:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise DimensionError(f"emissions must be (positions x tags), got {emissions.shape}")
    if crf.transitions.shape != (emissions.shape[1], emissions.shape[1]):
        raise DimensionError("transition matrix does not match emission tag count")
    return emissions


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(x - m).sum(axis=axis))


def crf_log_z(emissions: np.ndarray, crf: CrfParams) -> float:
    """Log of the sum over all tag paths of exp(path score)."""
    emissions = _check(emissions, crf)
    alpha = crf.start + emissions[0]
    for row in emissions[1:]:
        alpha = _logsumexp(alpha[:, None] + crf.transitions, axis=0) + row
    return float(_logsumexp(alpha + crf.end, axis=0))


def crf_path_score(emissions: np.ndarray, tags, crf: CrfParams) -> float:
    emissions = _check(emissions, crf)
    tags = list(tags)
    if len(tags) != emissions.shape[0]:
        raise DimensionError("tag path length does not match emissions")
    score = crf.start[tags[0]] + emissions[0, tags[0]] + crf.end[tags[-1]]
    for t in range(1, len(tags)):
        score += crf.transitions[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return float(score)


def crf_viterbi(emissions: np.ndarray, crf: CrfParams) -> list[int]:
    """Highest-scoring tag path; ties resolve to the lowest tag index."""
    emissions = _check(emissions, crf)
    n, k = emissions.shape
    delta = crf.start + emissions[0]
    back = np.zeros((n, k), dtype=np.intp)
    for t in range(1, n):
        scores = delta[:, None] + crf.transitions  # [from, to]
        back[t] = scores.argmax(axis=0)  # argmax takes the first (lowest) index
        delta = scores.max(axis=0) + emissions[t]
    last = int(np.argmax(delta + crf.end))
    path = [last]
    for t in range(n - 1, 0, -1):
        last = int(back[t, last])
        path.append(last)
    path.reverse()
    return path


def crf_log_z_t(emissions: Tensor, transitions: Tensor, start: Tensor, end: Tensor) -> Tensor:
    """Differentiable partition function for (N, K) emission scores."""
    n, k = emissions.shape
    alpha = start.reshape(1, k) + emissions.gather_rows([0])
    for t in range(1, n):
        step = alpha.reshape(k, 1) + transitions
        alpha = step.logsumexp(axis=0, keepdims=True) + emissions.gather_rows([t])
    return (alpha + end.reshape(1, k)).logsumexp(axis=1).sum()


def crf_path_score_t(emissions: Tensor, tags, transitions: Tensor, start: Tensor, end: Tensor) -> Tensor:
    tags = list(tags)
    n, k = emissions.shape
    emitted = emissions.reshape(n * k).gather_rows(
        [t * k + tag for t, tag in enumerate(tags)]
    ).sum()
    score = emitted + start.gather_rows([tags[0]]).sum() + end.gather_rows([tags[-1]]).sum()
    if n > 1:
        flat = transitions.reshape(k * k)
        moves = flat.gather_rows([tags[t - 1] * k + tags[t] for t in range(1, n)]).sum()
        score = score + moves
    return score


def crf_nll_t(emissions: Tensor, tags, transitions: Tensor, start: Tensor, end: Tensor) -> Tensor:
    """Negative sequence log-likelihood: logZ - path score."""
    return crf_log_z_t(emissions, transitions, start, end) - crf_path_score_t(
        emissions, tags, transitions, start, end
    )
