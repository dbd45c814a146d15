"""Pen-trajectory data model, preprocessing and per-point feature extraction.

An answer is an ordered list of strokes, each an ordered polyline of (x, y)
pen positions. Preprocessing scales the whole trajectory to unit height and
resamples every stroke to a uniform arc-length step, after which each point
is expanded into an 8-dimensional feature row consumed by the recognizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InkError(ValueError):
    """Raised for structurally invalid or degenerate ink."""


@dataclass
class RawInk:
    """One handwritten answer: strokes in writing order plus metadata.

    ``strokes`` is a list of (P, 2) float arrays. ``category`` is the
    ground-truth answer class (if known) and ``label`` the ground-truth
    token sequence (if known).
    """

    strokes: list[np.ndarray]
    id: str = ""
    category: str | None = None
    label: list[str] | None = None

    def __post_init__(self):
        self.strokes = [np.asarray(s, dtype=np.float64) for s in self.strokes]

    def validate(self) -> None:
        if not self.strokes:
            raise InkError(f"ink {self.id!r}: no strokes")
        for i, s in enumerate(self.strokes):
            if s.ndim != 2 or s.shape[1] != 2 or s.shape[0] < 1:
                raise InkError(f"ink {self.id!r}: stroke {i} is not a (P, 2) polyline")
            if not np.isfinite(s).all():
                raise InkError(f"ink {self.id!r}: stroke {i} has non-finite coordinates")

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (L, 2) points and their (L,) stroke indices, writing order."""
        self.validate()
        pts = np.concatenate(self.strokes, axis=0)
        sidx = np.concatenate(
            [np.full(len(s), i, dtype=np.int64) for i, s in enumerate(self.strokes)]
        )
        return pts, sidx


def _resample_stroke(pts: np.ndarray, step: float) -> np.ndarray:
    """Split every polyline segment into equal chords of roughly ``step``.

    Original vertices are kept (corners are never cut), so the output traces
    the same curve; consecutive duplicate points collapse. A second pass at
    the same step subdivides nothing, which makes resampling idempotent.
    """
    seg = np.diff(pts, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    if len(pts) == 1 or float(seglen.sum()) == 0.0:
        return pts[:1].copy()
    out = [pts[0]]
    for a, b, length in zip(pts[:-1], pts[1:], seglen):
        if length == 0.0:
            continue
        pieces = max(1, int(round(length / step)))
        for j in range(1, pieces):
            out.append(a + (b - a) * (j / pieces))
        out.append(b)
    return np.asarray(out)


def resample_and_normalize(ink: RawInk, spacing: float = 0.05) -> RawInk:
    """Resample strokes at uniform arc length, then scale to y-extent [0, 1].

    Strokes are resampled first (step = ``spacing`` times the raw height) so
    that the subsequent normalization, which translates the min corner of the
    resampled points to the origin and scales both axes uniformly (aspect
    preserved), leaves the output extent exactly [0, 1]. Within each stroke
    the output points are approximately ``spacing`` apart; single-point (or
    zero-length) strokes survive as one point. Idempotent up to float
    round-off.
    """
    ink.validate()
    if spacing <= 0:
        raise InkError("spacing must be positive")
    pts = np.concatenate(ink.strokes, axis=0)
    extent = pts.max(axis=0) - pts.min(axis=0)
    if extent[0] == 0.0 and extent[1] == 0.0:
        raise InkError(f"ink {ink.id!r}: degenerate extent")
    # Height-zero ink (a horizontal line) falls back to width scaling.
    ref = extent[1] if extent[1] > 0.0 else extent[0]
    strokes = [_resample_stroke(s, spacing * ref) for s in ink.strokes]
    rpts = np.concatenate(strokes, axis=0)
    mins = rpts.min(axis=0)
    rext = rpts.max(axis=0) - mins
    if rext[0] == 0.0 and rext[1] == 0.0:
        raise InkError(f"ink {ink.id!r}: degenerate extent")
    # True division keeps the attained extremes exactly at 0 and 1.
    denom = rext[1] if rext[1] > 0.0 else rext[0]
    strokes = [(s - mins) / denom for s in strokes]
    return RawInk(strokes=strokes, id=ink.id, category=ink.category, label=ink.label)


def extract_features(ink: RawInk) -> np.ndarray:
    """Per-point 8-feature matrix: position, first/second forward offsets, pen state.

    Row i is [x, y, x(i+1)-x, y(i+1)-y, x(i+2)-x, y(i+2)-y, down, up] where
    missing forward neighbours are clamped to the final point (so the offsets
    vanish) and ``down``/``up`` one-hot encode whether the next point belongs
    to the same stroke. The final point is always flagged pen-up.
    """
    pts, sidx = ink.points()
    n = len(pts)
    ext = np.vstack([pts, pts[-1:], pts[-1:]])
    d1 = ext[1 : n + 1] - pts
    d2 = ext[2 : n + 2] - pts
    down = np.zeros(n)
    down[:-1] = (sidx[:-1] == sidx[1:]).astype(np.float64)
    feats = np.column_stack([pts[:, 0], pts[:, 1], d1[:, 0], d1[:, 1], d2[:, 0], d2[:, 1], down, 1.0 - down])
    return np.ascontiguousarray(feats, dtype=np.float64)


def load_jsonl(path: str | Path) -> list[RawInk]:
    """Read an answer set from JSON Lines (one sample object per line)."""
    inks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InkError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                ink = RawInk(
                    strokes=[np.asarray(s, dtype=np.float64) for s in obj["strokes"]],
                    id=str(obj["id"]),
                    category=obj.get("category"),
                    label=list(obj["label"]) if obj.get("label") is not None else None,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InkError(f"{path}:{lineno}: malformed sample ({exc})") from exc
            ink.validate()
            inks.append(ink)
    if not inks:
        raise InkError(f"{path}: empty answer set")
    ids = [ink.id for ink in inks]
    if len(set(ids)) != len(ids):
        raise InkError(f"{path}: duplicate sample ids")
    return inks


def save_jsonl(path: str | Path, inks: list[RawInk]) -> None:
    """Write an answer set as JSON Lines; floats keep shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as fh:
        for ink in inks:
            ink.validate()
            obj = {
                "id": ink.id,
                "category": ink.category,
                "label": ink.label,
                "strokes": [s.tolist() for s in ink.strokes],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
