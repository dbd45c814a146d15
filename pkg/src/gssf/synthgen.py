"""Deterministic synthetic answer-set generator.

Expressions are laid out glyph by glyph from a small hand-authored template
set (digits, operators, variables, parentheses, fraction bar). Each glyph
gets an independent random affine wobble (scale/rotation/shear) and
per-point Gaussian noise, all drawn from per-sample generators derived from
(seed, sample index) so output is independent of generation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ink import RawInk, resample_and_normalize

GLYPH_GAP = 0.15
SHUFFLE_STREAM = 999983  # sub-stream tag for the final sample shuffle


class SynthesisError(ValueError):
    pass


@dataclass
class SymbolTemplate:
    """Prototype glyph: polyline strokes inside the unit box, plus the
    horizontal space the glyph occupies."""

    symbol: str
    strokes: list[np.ndarray]
    advance: float

    def __post_init__(self):
        self.strokes = [np.asarray(s, dtype=np.float64) for s in self.strokes]
        if not self.strokes:
            raise SynthesisError(f"template {self.symbol!r}: no strokes")
        for s in self.strokes:
            if s.ndim != 2 or s.shape[1] != 2 or len(s) < 2:
                raise SynthesisError(f"template {self.symbol!r}: bad stroke shape")
            if s.min() < 0.0 or s.max() > 1.0:
                raise SynthesisError(f"template {self.symbol!r}: points leave the unit box")


def default_templates() -> dict[str, SymbolTemplate]:
    raw: dict[str, tuple[list[list[tuple[float, float]]], float]] = {
        "0": ([[(0.5, 0.95), (0.2, 0.8), (0.1, 0.5), (0.2, 0.2), (0.5, 0.05),
                (0.8, 0.2), (0.9, 0.5), (0.8, 0.8), (0.5, 0.95)]], 0.75),
        "1": ([[(0.25, 0.75), (0.5, 0.95), (0.5, 0.05)]], 0.5),
        "2": ([[(0.15, 0.75), (0.3, 0.95), (0.65, 0.95), (0.8, 0.75), (0.8, 0.55),
                (0.15, 0.1), (0.15, 0.05), (0.85, 0.05)]], 0.75),
        "3": ([[(0.15, 0.85), (0.4, 0.95), (0.7, 0.85), (0.7, 0.6), (0.45, 0.5),
                (0.7, 0.4), (0.7, 0.15), (0.4, 0.05), (0.15, 0.15)]], 0.7),
        "4": ([[(0.65, 0.95), (0.15, 0.35), (0.85, 0.35)],
               [(0.65, 0.7), (0.65, 0.05)]], 0.8),
        "5": ([[(0.8, 0.95), (0.2, 0.95), (0.2, 0.55), (0.55, 0.6), (0.8, 0.45),
                (0.8, 0.2), (0.55, 0.05), (0.2, 0.1)]], 0.7),
        "6": ([[(0.75, 0.9), (0.4, 0.7), (0.2, 0.4), (0.25, 0.15), (0.5, 0.05),
                (0.75, 0.15), (0.8, 0.35), (0.6, 0.5), (0.3, 0.45)]], 0.7),
        "7": ([[(0.15, 0.95), (0.85, 0.95), (0.4, 0.05)]], 0.7),
        "8": ([[(0.5, 0.95), (0.25, 0.8), (0.4, 0.55), (0.7, 0.4), (0.75, 0.2),
                (0.5, 0.05), (0.25, 0.2), (0.3, 0.4), (0.6, 0.55), (0.75, 0.8),
                (0.5, 0.95)]], 0.75),
        "9": ([[(0.75, 0.65), (0.5, 0.55), (0.25, 0.65), (0.2, 0.85), (0.45, 0.95),
                (0.7, 0.9), (0.75, 0.65), (0.7, 0.3), (0.4, 0.05)]], 0.7),
        "+": ([[(0.5, 0.8), (0.5, 0.2)], [(0.15, 0.5), (0.85, 0.5)]], 0.7),
        "-": ([[(0.15, 0.5), (0.85, 0.5)]], 0.7),
        "=": ([[(0.15, 0.62), (0.85, 0.62)], [(0.15, 0.38), (0.85, 0.38)]], 0.7),
        "x": ([[(0.15, 0.85), (0.85, 0.15)], [(0.85, 0.85), (0.15, 0.15)]], 0.7),
        "y": ([[(0.15, 0.9), (0.5, 0.45)], [(0.85, 0.9), (0.45, 0.4), (0.2, 0.05)]], 0.7),
        "(": ([[(0.65, 0.95), (0.45, 0.7), (0.38, 0.5), (0.45, 0.3), (0.65, 0.05)]], 0.45),
        ")": ([[(0.35, 0.95), (0.55, 0.7), (0.62, 0.5), (0.55, 0.3), (0.35, 0.05)]], 0.45),
        "frac": ([[(0.05, 0.5), (0.95, 0.5)]], 1.1),
    }
    return {
        sym: SymbolTemplate(symbol=sym, strokes=[np.asarray(s) for s in strokes], advance=adv)
        for sym, (strokes, adv) in raw.items()
    }


@dataclass(frozen=True)
class JitterParams:
    sigma: float = 0.0          # per-point noise, fraction of glyph height
    scale: float = 0.0          # per-glyph scale range 1 +- scale
    rotation_deg: float = 0.0   # per-glyph rotation range in degrees
    shear: float = 0.0          # per-glyph horizontal shear range

    def validate(self) -> None:
        if min(self.sigma, self.scale, self.rotation_deg, self.shear) < 0:
            raise SynthesisError("jitter ranges must be non-negative")


@dataclass(frozen=True)
class CategorySpec:
    label: tuple[str, ...]
    count: int
    id: str = ""


@dataclass(frozen=True)
class AnswerSetSpec:
    categories: tuple[CategorySpec, ...]
    jitter: JitterParams = field(default_factory=JitterParams)
    spacing: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if len(self.categories) < 2:
            raise SynthesisError("need at least two categories")
        if any(c.count < 1 for c in self.categories):
            raise SynthesisError("category counts must be at least 1")
        if any(len(c.label) == 0 for c in self.categories):
            raise SynthesisError("category labels must be non-empty")
        ids = [c.id for c in self.categories if c.id]
        if len(ids) != len(set(ids)):
            raise SynthesisError("category ids must be distinct")
        if self.spacing <= 0:
            raise SynthesisError("spacing must be positive")
        if self.seed < 0:
            raise SynthesisError("seed must be non-negative")
        self.jitter.validate()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "spacing": self.spacing,
            "jitter": {
                "sigma": self.jitter.sigma,
                "scale": self.jitter.scale,
                "rotation_deg": self.jitter.rotation_deg,
                "shear": self.jitter.shear,
            },
            "categories": [
                {"label": list(c.label), "count": c.count, **({"id": c.id} if c.id else {})}
                for c in self.categories
            ],
        }

    @staticmethod
    def from_dict(obj: dict) -> "AnswerSetSpec":
        try:
            jitter = JitterParams(**obj.get("jitter", {}))
            categories = tuple(
                CategorySpec(label=tuple(c["label"]), count=int(c["count"]),
                             id=str(c.get("id", "")))
                for c in obj["categories"]
            )
            spec = AnswerSetSpec(
                categories=categories,
                jitter=jitter,
                spacing=float(obj.get("spacing", 0.05)),
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SynthesisError(f"malformed answer-set spec: {exc}") from exc
        spec.validate()
        return spec


def load_spec(path: str | Path) -> AnswerSetSpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SynthesisError(f"{path}: cannot read spec ({exc})") from exc
    return AnswerSetSpec.from_dict(obj)


def render_expression(tokens: list[str], templates: dict[str, SymbolTemplate],
                      jitter: JitterParams, rng: np.random.Generator) -> RawInk:
    """Lay glyphs left to right and apply the per-glyph jitter model."""
    if not tokens:
        raise SynthesisError("cannot render an empty token sequence")
    jitter.validate()
    strokes: list[np.ndarray] = []
    cursor = 0.0
    for tok in tokens:
        try:
            tpl = templates[tok]
        except KeyError:
            raise SynthesisError(f"no template for token {tok!r}") from None
        scale = 1.0 + rng.uniform(-jitter.scale, jitter.scale)
        theta = math.radians(rng.uniform(-jitter.rotation_deg, jitter.rotation_deg))
        shear = rng.uniform(-jitter.shear, jitter.shear)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        # rotation @ shear @ isotropic scale, applied about the glyph centre
        mat = np.array([[cos_t, -sin_t], [sin_t, cos_t]]) @ np.array([[1.0, shear], [0.0, 1.0]])
        mat *= scale
        centre = np.array([tpl.advance / 2.0, 0.5])
        offset = np.array([cursor, 0.0])
        for proto in tpl.strokes:
            pts = (proto - centre) @ mat.T + centre + offset
            pts = pts + rng.normal(0.0, 1.0, size=pts.shape) * jitter.sigma
            strokes.append(pts)
        cursor += tpl.advance + GLYPH_GAP
    return RawInk(strokes=strokes)


def generate_answer_set(spec: AnswerSetSpec,
                        templates: dict[str, SymbolTemplate] | None = None) -> list[RawInk]:
    """Render every category's samples, resample, label and shuffle them.

    Deterministic for a fixed spec: sample i draws from a generator seeded by
    (spec.seed, i), so parallel or partial generation cannot change output.
    """
    spec.validate()
    if templates is None:
        templates = default_templates()
    for cat in spec.categories:
        for tok in cat.label:
            if tok not in templates:
                raise SynthesisError(f"no template for token {tok!r}")
    samples: list[RawInk] = []
    index = 0
    for ci, cat in enumerate(spec.categories):
        cat_id = cat.id or f"c{ci:02d}"
        for si in range(cat.count):
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
            ink = render_expression(list(cat.label), templates, spec.jitter, rng)
            ink = resample_and_normalize(ink, spec.spacing)
            samples.append(RawInk(strokes=ink.strokes, id=f"{cat_id}_{si:03d}",
                                  category=cat_id, label=list(cat.label)))
            index += 1
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, SHUFFLE_STREAM]))
    return [samples[i] for i in shuffle_rng.permutation(len(samples))]
