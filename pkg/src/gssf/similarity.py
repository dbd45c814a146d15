"""Pairwise similarity between answers, built on the trained recognizer.

For answers a and b, the one-directional score is the total log-probability
of a's decoded tokens when teacher-forced through the decoder conditioned on
b's encoding, minus the total log-probability the decoder assigned to those
same tokens under a's own encoding. The symmetric score averages the two
directions; min/max/one-directional variants and a negated token edit
distance baseline share the same "larger means more similar" convention.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import seq2seq
from .ink import RawInk, extract_features, resample_and_normalize
from .seq2seq import Annotations, ModelParams, ScoredDecode


class SimilarityKind(str, Enum):
    GSSF = "gssf"
    ASYMMETRIC = "asymmetric"
    MIN = "min"
    MAX = "max"
    NEG_EDIT_DISTANCE = "neg_edit_distance"


#: Kinds derived from the cross-conditioned score F (everything but the edit baseline).
GSSF_FAMILY = frozenset(
    {SimilarityKind.GSSF, SimilarityKind.ASYMMETRIC, SimilarityKind.MIN, SimilarityKind.MAX}
)
#: Kinds for which score(a, b) == score(b, a).
SYMMETRIC_KINDS = frozenset(
    {SimilarityKind.GSSF, SimilarityKind.MIN, SimilarityKind.MAX,
     SimilarityKind.NEG_EDIT_DISTANCE}
)


class UnscorableAnswer(ValueError):
    """An answer whose greedy decode is empty cannot be scored by the F family."""


@dataclass
class AnswerScoring:
    """Per-answer cache: encoder annotations plus the greedy decode."""

    id: str
    annotations: Annotations
    decode: ScoredDecode

    @property
    def scorable(self) -> bool:
        return len(self.decode.tokens) > 0


def score_answer(params: ModelParams, ink: RawInk) -> AnswerScoring:
    """Preprocess, encode and greedy-decode one answer (done once per answer)."""
    feats = extract_features(resample_and_normalize(ink, params.arch.resample_spacing))
    ann = seq2seq.encode(params, feats)
    decode = seq2seq.greedy_decode(params, ann, params.arch.max_decode_len)
    return AnswerScoring(id=ink.id, annotations=ann, decode=decode)


def score_answers(params: ModelParams, inks: list[RawInk],
                  threads: int | None = None) -> list[AnswerScoring]:
    """Score a whole answer set; order follows the input regardless of threading."""
    if threads is not None and threads <= 1:
        return [score_answer(params, ink) for ink in inks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ink: score_answer(params, ink), inks))


def conditional_score(a: AnswerScoring, b: AnswerScoring, params: ModelParams) -> float:
    """One-directional score F(a|b): how plausible a's decode is under b's encoding.

    Zero when a and b are the same answer (both terms cancel); always finite.
    """
    if not a.scorable:
        raise UnscorableAnswer(f"unscorable answer {a.id!r}")
    if a is b or a.id == b.id:
        return 0.0
    cross = seq2seq.teacher_forced_logprobs(params, b.annotations, a.decode.tokens)
    return float(np.sum(cross) - np.sum(a.decode.self_logprobs))


def gssf_score(a: AnswerScoring, b: AnswerScoring, params: ModelParams) -> float:
    """Symmetric similarity: the average of F(a|b) and F(b|a)."""
    return (conditional_score(a, b, params) + conditional_score(b, a, params)) / 2.0


def variant_score(kind: SimilarityKind, a: AnswerScoring, b: AnswerScoring,
                  params: ModelParams) -> float:
    """Similarity under any supported kind (larger = more similar)."""
    kind = SimilarityKind(kind)
    if kind == SimilarityKind.NEG_EDIT_DISTANCE:
        return -float(edit_distance(a.decode.tokens, b.decode.tokens))
    if not b.scorable:
        raise UnscorableAnswer(f"unscorable answer {b.id!r}")
    if kind == SimilarityKind.ASYMMETRIC:
        return conditional_score(a, b, params)
    fab = conditional_score(a, b, params)
    fba = conditional_score(b, a, params)
    if kind == SimilarityKind.MIN:
        return min(fab, fba)
    if kind == SimilarityKind.MAX:
        return max(fab, fba)
    return (fab + fba) / 2.0


def cross_score_matrix(answers: list[AnswerScoring], params: ModelParams,
                       threads: int | None = None) -> np.ndarray:
    """F[i, j] = F(answer_i | answer_j) over all scorable pairs, NaN elsewhere.

    Column j teacher-forces every other answer's decode against answer j's
    encoding in one batch; columns are independent, so any thread count
    yields identical values. Diagonal entries are exactly zero.
    """
    n = len(answers)
    scorable = [i for i, a in enumerate(answers) if a.scorable]
    f = np.full((n, n), np.nan)
    for i in scorable:
        f[i, i] = 0.0
    self_sums = {i: float(np.sum(answers[i].decode.self_logprobs)) for i in scorable}

    def fill_column(j: int) -> None:
        rows = [i for i in scorable if i != j]
        if not rows:
            return
        sums = seq2seq.cross_logprob_sums(
            params, answers[j].annotations, [answers[i].decode.tokens for i in rows])
        for i, s in zip(rows, sums):
            f[i, j] = s - self_sums[i]

    if threads is not None and threads <= 1:
        for j in scorable:
            fill_column(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_column, scorable))
    return f


def edit_distance(source: list, target: list) -> int:
    """Levenshtein distance over token symbols (unit-cost insert/delete/substitute)."""
    if len(source) < len(target):
        source, target = target, source
    prev = list(range(len(target) + 1))
    for i, s_tok in enumerate(source, start=1):
        cur = [i] + [0] * len(target)
        for j, t_tok in enumerate(target, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (s_tok != t_tok))
        prev = cur
    return prev[-1]
