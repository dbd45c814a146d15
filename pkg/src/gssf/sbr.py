"""Similarity-based representation: the N x N pairwise score matrix.

Row i is answer i's similarity vector against the whole answer set. Rows are
normalized into [0, 1] (global min-max by default, preserving symmetry)
before clustering consumes them. Matrices export to CSV and to 8-bit binary
PGM heatmaps for visual inspection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .seq2seq import ModelParams
from .similarity import (AnswerScoring, SimilarityKind, UnscorableAnswer,
                         cross_score_matrix, edit_distance)

log = logging.getLogger(__name__)


@dataclass
class SbRMatrix:
    values: np.ndarray
    ids: list[str]
    kind: SimilarityKind
    normalized: bool = False
    degenerate: bool = False

    def validate(self) -> None:
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ValueError("matrix shape does not match the id list")
        if not np.isfinite(self.values).all():
            raise ValueError("matrix contains non-finite entries")
        if self.normalized and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("normalized matrix has entries outside [0, 1]")


def build_sbr_matrix(answers: list[AnswerScoring], kind: SimilarityKind,
                     params: ModelParams, threads: int | None = None,
                     f: np.ndarray | None = None) -> SbRMatrix:
    """Pairwise similarity matrix (unnormalized) under the given kind.

    For the F-family kinds, any answer with an empty decode gets its row and
    column (diagonal excluded) filled with the minimum computed score; at
    least one answer must be scorable. Pass ``f`` (a precomputed
    ``cross_score_matrix``) to share one cross-scoring pass between kinds.
    """
    n = len(answers)
    if n < 2:
        raise ValueError("need at least two answers")
    kind = SimilarityKind(kind)
    ids = [a.id for a in answers]

    if kind == SimilarityKind.NEG_EDIT_DISTANCE:
        values = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d = -float(edit_distance(answers[i].decode.tokens, answers[j].decode.tokens))
                values[i, j] = values[j, i] = d
        return SbRMatrix(values=values, ids=ids, kind=kind)

    if not any(a.scorable for a in answers):
        raise UnscorableAnswer("all answers are unscorable")
    if f is None:
        f = cross_score_matrix(answers, params, threads=threads)
    elif f.shape != (n, n):
        raise ValueError("precomputed cross-score matrix has the wrong shape")
    values = np.zeros((n, n))
    if kind == SimilarityKind.ASYMMETRIC:
        values = f.copy()
    else:
        for i in range(n):
            for j in range(i + 1, n):
                if kind == SimilarityKind.GSSF:
                    v = (f[i, j] + f[j, i]) / 2.0
                elif kind == SimilarityKind.MIN:
                    v = min(f[i, j], f[j, i])
                else:
                    v = max(f[i, j], f[j, i])
                values[i, j] = values[j, i] = v
    np.fill_diagonal(values, 0.0)

    bad = [i for i, a in enumerate(answers) if not a.scorable]
    if bad:
        fill = np.nanmin(np.where(np.isfinite(values), values, np.nan))
        for i in bad:
            values[i, :] = fill
            values[:, i] = fill
            values[i, i] = 0.0
        log.warning("%d unscorable answer(s) assigned the sentinel score %.6g", len(bad), fill)
    return SbRMatrix(values=values, ids=ids, kind=kind)


def normalize_unit_interval(m: SbRMatrix, mode: str = "global") -> SbRMatrix:
    """Min-max normalize all entries into [0, 1].

    ``mode="global"`` (default) uses one min/max over the whole matrix, which
    preserves symmetry; ``mode="per_row"`` rescales each row independently
    (ablation only). A constant matrix (or row) normalizes to zeros and sets
    the ``degenerate`` flag.
    """
    if m.normalized:
        raise ValueError("matrix is already normalized")
    m.validate()
    values = m.values
    if mode == "global":
        vmin, vmax = float(values.min()), float(values.max())
        if vmax == vmin:
            log.warning("degenerate similarity matrix: all entries equal %.6g", vmin)
            return replace(m, values=np.zeros_like(values), normalized=True, degenerate=True)
        out = (values - vmin) / (vmax - vmin)
        return replace(m, values=out, normalized=True)
    if mode == "per_row":
        out = np.zeros_like(values)
        degenerate = False
        for i, row in enumerate(values):
            rmin, rmax = float(row.min()), float(row.max())
            if rmax == rmin:
                degenerate = True
            else:
                out[i] = (row - rmin) / (rmax - rmin)
        if degenerate:
            log.warning("degenerate row(s) in per-row normalization")
        return replace(m, values=out, normalized=True, degenerate=degenerate)
    raise ValueError(f"unknown normalization mode {mode!r}")


def to_csv(m: SbRMatrix) -> str:
    for sample_id in m.ids:
        if "," in sample_id or "\n" in sample_id:
            raise ValueError(f"id {sample_id!r} cannot be written to CSV")
    lines = ["id," + ",".join(m.ids)]
    for sample_id, row in zip(m.ids, m.values):
        lines.append(sample_id + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def save_csv(path: str | Path, m: SbRMatrix) -> None:
    Path(path).write_text(to_csv(m), encoding="utf-8")


def load_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read back a matrix CSV as (ids, values); kind/normalization are not stored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("id,"):
        raise ValueError(f"{path}: not a similarity-matrix CSV")
    ids = lines[0].split(",")[1:]
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append([float(v) for v in parts[1:]])
    values = np.asarray(rows, dtype=np.float64)
    if values.shape != (len(ids), len(ids)):
        raise ValueError(f"{path}: matrix is not square")
    return ids, values


def to_pgm(m: SbRMatrix) -> bytes:
    """8-bit binary PGM heatmap; requires a normalized matrix."""
    if not m.normalized:
        raise ValueError("heatmap export needs a normalized matrix")
    m.validate()
    n = len(m.ids)
    pixels = np.rint(255.0 * m.values).astype(np.uint8)
    return f"P5\n{n} {n}\n255\n".encode("ascii") + pixels.tobytes()


def save_pgm(path: str | Path, m: SbRMatrix) -> None:
    Path(path).write_bytes(to_pgm(m))
