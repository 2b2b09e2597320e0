"""Edit-distance alignment, WER, and end-to-end slot/intent scoring.

The slots edit F1 tolerates hypothesis/reference length mismatches: word
sequences are first aligned by minimum edit distance, then slot values are
tallied per label as true positives, insertions (FP), deletions (FN), and
substitutions (FN on the reference label plus FP on the hypothesis label).
The corpus score is computed from summed tallies, never averaged per
utterance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import OUTSIDE, base_label
from .errors import ValidationError

MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"


@dataclass(frozen=True)
class AlignOp:
    kind: str
    ref_idx: int | None = None
    hyp_idx: int | None = None


@dataclass
class AlignmentTrace:
    ops: list[AlignOp]
    cost: int


@dataclass
class LabelTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class SlotScoreReport:
    per_label: dict[str, LabelTally] = field(default_factory=dict)
    f1: float = 0.0
    precision: float = 0.0
    recall: float = 0.0

    def tally(self, label: str) -> LabelTally:
        return self.per_label.setdefault(label, LabelTally())

    def finalize(self) -> "SlotScoreReport":
        tp = sum(t.tp for t in self.per_label.values())
        fp = sum(t.fp for t in self.per_label.values())
        fn = sum(t.fn for t in self.per_label.values())
        self.precision = tp / (tp + fp) if tp + fp else 0.0
        self.recall = tp / (tp + fn) if tp + fn else 0.0
        denom = 2 * tp + fp + fn
        self.f1 = 2 * tp / denom if denom else 0.0
        return self


def align(ref, hyp) -> AlignmentTrace:
    """Minimum-edit-distance alignment with unit SUB/DEL/INS costs.

    Among optimal traces, ties are broken during the backtrace by preferring
    MATCH > SUB > DEL > INS, which makes the trace deterministic.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        ri = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if ri == hyp[j - 1] else 1)
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == dist[i - 1][j - 1]:
            ops.append(AlignOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and here == dist[i - 1][j - 1] + 1:
            ops.append(AlignOp(SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and here == dist[i - 1][j] + 1:
            ops.append(AlignOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(AlignOp(INS, None, j - 1))
            j -= 1
    ops.reverse()
    return AlignmentTrace(ops, dist[n][m])


def edit_counts(ref, hyp) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions) from the optimal alignment."""
    trace = align(ref, hyp)
    subs = sum(1 for op in trace.ops if op.kind == SUB)
    dels = sum(1 for op in trace.ops if op.kind == DEL)
    inss = sum(1 for op in trace.ops if op.kind == INS)
    return subs, dels, inss


def wer(ref, hyp) -> float:
    """(S + D + I) / len(ref); undefined for an empty reference."""
    ref = list(ref)
    if not ref:
        raise ValidationError("WER is undefined for an empty reference")
    return sum(edit_counts(ref, hyp)) / len(ref)


def corpus_wer(refs, hyps) -> float:
    """Corpus-level WER: total edits over total reference words."""
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValidationError(f"ref/hyp count mismatch: {len(refs)} vs {len(hyps)}")
    total_words = sum(len(list(r)) for r in refs)
    if total_words == 0:
        raise ValidationError("WER is undefined for an empty reference corpus")
    total_edits = sum(sum(edit_counts(r, h)) for r, h in zip(refs, hyps))
    return total_edits / total_words


def _check_pair(words, slots, side: str, idx: int) -> None:
    if len(words) != len(slots):
        raise ValidationError(
            f"{side} pair {idx}: words length {len(words)} != slots length {len(slots)}"
        )


def slots_edit_f1(refs, hyps, require_value_match: bool = True) -> SlotScoreReport:
    """Alignment-based slot F1 over a corpus of (words, slots) pairs.

    A true positive requires the aligned words to be equal as well as the
    slot label (a recognition error on a slot word counts as a substitution
    of its slot value).  Set ``require_value_match=False`` to count any
    diagonally aligned position with matching labels as a TP.
    """
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValidationError(f"ref/hyp corpus size mismatch: {len(refs)} vs {len(hyps)}")
    report = SlotScoreReport()
    for idx, ((r_words, r_slots), (h_words, h_slots)) in enumerate(zip(refs, hyps)):
        r_words, r_slots = list(r_words), list(r_slots)
        h_words, h_slots = list(h_words), list(h_slots)
        _check_pair(r_words, r_slots, "ref", idx)
        _check_pair(h_words, h_slots, "hyp", idx)
        trace = align(r_words, h_words)
        for op in trace.ops:
            rv = base_label(r_slots[op.ref_idx]) if op.ref_idx is not None else None
            hv = base_label(h_slots[op.hyp_idx]) if op.hyp_idx is not None else None
            if op.kind == MATCH or (op.kind == SUB and not require_value_match):
                if rv == hv:
                    if rv != OUTSIDE:
                        report.tally(rv).tp += 1
                    continue
            if rv is not None and rv != OUTSIDE:
                report.tally(rv).fn += 1
            if hv is not None and hv != OUTSIDE:
                report.tally(hv).fp += 1
    return report.finalize()


def extract_spans(slots) -> list[tuple[str, int, int]]:
    """BIO spans as (label, start, end) with inclusive ends.

    An I- tag without a preceding same-label tag opens a new span; bare
    labels are treated as B- tags.
    """
    spans: list[tuple[str, int, int]] = []
    current: list | None = None  # [label, start, end]
    for i, tag in enumerate(slots):
        if tag == OUTSIDE:
            if current:
                spans.append(tuple(current))
                current = None
            continue
        label = base_label(tag)
        continues = tag.startswith("I-") and current is not None and current[0] == label
        if continues:
            current[2] = i
        else:
            if current:
                spans.append(tuple(current))
            current = [label, i, i]
    if current:
        spans.append(tuple(current))
    return spans


def span_slot_f1(refs, hyps) -> SlotScoreReport:
    """Conventional span-level slot F1 for the oracle-text setting.

    Requires every hypothesis to have the same word count as its reference;
    use slots_edit_f1 when lengths can differ.
    """
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValidationError(f"ref/hyp corpus size mismatch: {len(refs)} vs {len(hyps)}")
    report = SlotScoreReport()
    for idx, ((r_words, r_slots), (h_words, h_slots)) in enumerate(zip(refs, hyps)):
        r_words, r_slots = list(r_words), list(r_slots)
        h_words, h_slots = list(h_words), list(h_slots)
        _check_pair(r_words, r_slots, "ref", idx)
        _check_pair(h_words, h_slots, "hyp", idx)
        if len(r_words) != len(h_words):
            raise ValidationError(
                f"pair {idx}: hypothesis length differs from reference; "
                "span F1 assumes oracle text, use slots_edit_f1 instead"
            )
        ref_spans = set(extract_spans(r_slots))
        hyp_spans = set(extract_spans(h_slots))
        for label, lo, hi in ref_spans & hyp_spans:
            report.tally(label).tp += 1
        for label, lo, hi in ref_spans - hyp_spans:
            report.tally(label).fn += 1
        for label, lo, hi in hyp_spans - ref_spans:
            report.tally(label).fp += 1
    return report.finalize()


def intent_f1(refs, hyps) -> float:
    """Micro-averaged intent F1; equals accuracy for single-label prediction."""
    refs, hyps = list(refs), list(hyps)
    if not refs or len(refs) != len(hyps):
        raise ValidationError(
            f"intent label lists must be non-empty and equal length: {len(refs)} vs {len(hyps)}"
        )
    tp = fp = fn = 0
    for r, h in zip(refs, hyps):
        if r == h:
            tp += 1
        else:
            fn += 1  # missed the reference label
            fp += 1  # predicted a wrong label
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def intent_accuracy(refs, hyps) -> float:
    refs, hyps = list(refs), list(hyps)
    if not refs or len(refs) != len(hyps):
        raise ValidationError("intent label lists must be non-empty and equal length")
    return sum(r == h for r, h in zip(refs, hyps)) / len(refs)
