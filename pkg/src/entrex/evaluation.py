"""Micro precision/recall/F1 scoring of predicted relations at four levels.

Matching keys refine from the bare unordered identifier pair up to the
pair plus relation type plus novelty.  Counts are pooled across all
documents (micro averaging) before the metrics are computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .corpus import CorpusError, Document, RelationAnnotation


class MatchLevel(Enum):
    PAIR = "pair"
    PAIR_TYPE = "pair+type"
    PAIR_NOVELTY = "pair+novelty"
    PAIR_TYPE_NOVELTY = "pair+type+novelty"

    @classmethod
    def from_string(cls, value: str) -> "MatchLevel":
        for level in cls:
            if level.value == value:
                return level
        raise ValueError(
            f"unknown match level {value!r}; expected one of "
            f"{[lvl.value for lvl in cls]}"
        )


def match_key(pmid: str, rel: RelationAnnotation, level: MatchLevel) -> tuple:
    key: tuple = (pmid, rel.pair_key())
    if level in (MatchLevel.PAIR_TYPE, MatchLevel.PAIR_TYPE_NOVELTY):
        key += (rel.relation_type,)
    if level in (MatchLevel.PAIR_NOVELTY, MatchLevel.PAIR_TYPE_NOVELTY):
        key += (rel.novelty,)
    return key


def _key_set(relations: Iterable[tuple[str, RelationAnnotation]], level: MatchLevel, side: str) -> set:
    keys = [match_key(pmid, rel, level) for pmid, rel in relations]
    unique = set(keys)
    if len(unique) != len(keys):
        raise ValueError(f"duplicate {side} relations under the {level.value} key")
    return unique


def match_counts(
    gold: Sequence[tuple[str, RelationAnnotation]],
    pred: Sequence[tuple[str, RelationAnnotation]],
    level: MatchLevel,
) -> tuple[int, int, int]:
    """(TP, FP, FN) under the level's match key; duplicates are rejected."""
    gold_keys = _key_set(gold, level, "gold")
    pred_keys = _key_set(pred, level, "predicted")
    tp = len(gold_keys & pred_keys)
    return tp, len(pred_keys) - tp, len(gold_keys) - tp


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with the degenerate-count conventions.

    All-zero counts score 1.0 (nothing to find, nothing found); zero TP
    with any FP or FN scores 0.0.
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be non-negative")
    if tp == 0:
        return (1.0, 1.0, 1.0) if fp == 0 and fn == 0 else (0.0, 0.0, 0.0)
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return p, r, 2.0 * p * r / (p + r)


@dataclass(frozen=True)
class LevelMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "LevelMetrics":
        p, r, f = prf(tp, fp, fn)
        return cls(tp, fp, fn, p, r, f)

    def to_json_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
        }


@dataclass(frozen=True)
class MetricsReport:
    levels: dict[MatchLevel, LevelMetrics]
    per_relation_type: dict[str, LevelMetrics]

    def to_json_dict(self) -> dict:
        return {
            "levels": {lvl.value: m.to_json_dict() for lvl, m in self.levels.items()},
            "per_relation_type": {
                t: m.to_json_dict() for t, m in sorted(self.per_relation_type.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def render_table(self) -> str:
        """Terminal table: one row per level, Precision/Recall/F1 columns."""
        header = f"{'level':<22} {'TP':>5} {'FP':>5} {'FN':>5} {'Precision':>10} {'Recall':>10} {'F1':>10}"
        lines = [header, "-" * len(header)]
        for level in MatchLevel:
            m = self.levels[level]
            lines.append(
                f"{level.value:<22} {m.tp:>5} {m.fp:>5} {m.fn:>5} "
                f"{m.precision:>10.4f} {m.recall:>10.4f} {m.f1:>10.4f}"
            )
        if self.per_relation_type:
            lines.append("")
            lines.append(f"{'relation type (pair+type)':<28}{'Precision':>10} {'Recall':>10} {'F1':>10}")
            for rel_type, m in sorted(self.per_relation_type.items()):
                lines.append(
                    f"{rel_type:<28}{m.precision:>10.4f} {m.recall:>10.4f} {m.f1:>10.4f}"
                )
        return "\n".join(lines) + "\n"


def evaluate(
    gold_corpus: Sequence[Document],
    predictions: Mapping[str, Iterable[RelationAnnotation]],
) -> MetricsReport:
    """Score predictions against gold relations, pooled across documents."""
    by_pmid = {doc.pmid: doc for doc in gold_corpus}
    gold_pairs: list[tuple[str, RelationAnnotation]] = [
        (doc.pmid, rel) for doc in gold_corpus for rel in doc.relations
    ]
    pred_pairs: list[tuple[str, RelationAnnotation]] = []
    for pmid, rels in predictions.items():
        doc = by_pmid.get(pmid)
        if doc is None:
            raise CorpusError("prediction for unknown document", pmid=pmid)
        known = doc.mention_identifiers()
        for rel in rels:
            for endpoint in (rel.id_a, rel.id_b):
                if endpoint not in known:
                    raise CorpusError(
                        f"predicted relation endpoint {endpoint!r} has no mention",
                        pmid=pmid,
                    )
            pred_pairs.append((pmid, rel))

    levels = {
        level: LevelMetrics.from_counts(*match_counts(gold_pairs, pred_pairs, level))
        for level in MatchLevel
    }
    rel_types = sorted(
        {r.relation_type for _, r in gold_pairs} | {r.relation_type for _, r in pred_pairs}
    )
    per_type = {}
    for rel_type in rel_types:
        g = [(p, r) for p, r in gold_pairs if r.relation_type == rel_type]
        q = [(p, r) for p, r in pred_pairs if r.relation_type == rel_type]
        per_type[rel_type] = LevelMetrics.from_counts(
            *match_counts(g, q, MatchLevel.PAIR_TYPE)
        )
    return MetricsReport(levels=levels, per_relation_type=per_type)
