"""Entity-aware masking: sample identifiers, mask all their mention tokens.

Selection is per identifier: each distinct groundable identifier is an
independent Bernoulli(threshold) draw, repaired so that at least one
identifier stays unmasked and at least one is masked.  Masking an
identifier replaces every token of every one of its mentions with the
MASK token and records one (token range, identifier, type) target per
masked mention.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document
from .tokenizer import (
    CLS_ID,
    MASK_ID,
    SEP_ID,
    TokenizedDocument,
    Vocabulary,
    tokenize_document,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskingConfig:
    threshold: float = 0.2
    seed: int = 0
    min_unmasked_identifiers: int = 1
    min_masked_identifiers: int = 1
    # Alternative reading of the no-full-masking rule: never mask both
    # endpoints of an annotated relation in the same instance.  Off by
    # default; the document-level guarantee above always holds.
    protect_pair_endpoints: bool = False

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0,1], got {self.threshold}")
        if self.min_unmasked_identifiers < 1:
            raise ValueError("min_unmasked_identifiers must be >= 1")
        if self.min_masked_identifiers < 0:
            raise ValueError("min_masked_identifiers must be >= 0")


@dataclass(frozen=True)
class MaskedTarget:
    token_start: int
    token_end: int
    identifier_index: int
    type_index: int


@dataclass(frozen=True)
class MaskedInstance:
    """A token sequence with masked entity spans and their recovery targets."""

    pmid: str
    token_ids: tuple[int, ...]
    masked_targets: tuple[MaskedTarget, ...]


def select_masked_identifiers(
    doc: Document, rng: np.random.Generator, cfg: MaskingConfig
) -> set[str]:
    """Draw the set of identifiers to mask for one pretraining instance."""
    identifiers = doc.groundable_identifiers()
    if len(identifiers) < 2:
        raise ValueError(
            f"document {doc.pmid} has {len(identifiers)} groundable identifiers; need >= 2"
        )
    selected = [i for i in identifiers if rng.random() < cfg.threshold]
    if cfg.protect_pair_endpoints:
        chosen = set(selected)
        for r in doc.relations:
            a, b = r.pair_key()
            if a in chosen and b in chosen:
                chosen.remove(a if rng.random() < 0.5 else b)
        selected = [i for i in identifiers if i in chosen]
    max_selected = len(identifiers) - cfg.min_unmasked_identifiers
    while len(selected) > max_selected:
        selected.pop(int(rng.integers(len(selected))))
    while len(selected) < min(cfg.min_masked_identifiers, max_selected):
        unselected = [i for i in identifiers if i not in selected]
        selected.append(unselected[int(rng.integers(len(unselected)))])
    return set(selected)


def apply_entity_mask(
    tok: TokenizedDocument,
    doc: Document,
    selected: set[str],
    vocab: Vocabulary,
) -> MaskedInstance:
    """Mask every mention of every selected identifier; emit per-mention targets."""
    known = doc.mention_identifiers()
    missing = selected - known
    if missing:
        raise ValueError(f"selected identifiers with no mention in {doc.pmid}: {sorted(missing)}")
    token_ids = list(tok.token_ids)
    targets: list[MaskedTarget] = []
    for m, (lo, hi) in zip(doc.mentions, tok.mention_token_ranges):
        hit = sorted(set(m.identifiers) & selected)
        if not hit:
            continue
        token_ids[lo:hi] = [MASK_ID] * (hi - lo)
        targets.append(
            MaskedTarget(lo, hi, vocab.identifier_index(hit[0]), vocab.type_index(m.entity_type))
        )
    return MaskedInstance(doc.pmid, tuple(token_ids), tuple(targets))


def frame_instance(inst: MaskedInstance, max_len: int) -> MaskedInstance:
    """Add CLS/SEP, truncate to max_len keeping SEP final, shift targets."""
    ids = (CLS_ID,) + inst.token_ids + (SEP_ID,)
    targets = [
        MaskedTarget(t.token_start + 1, t.token_end + 1, t.identifier_index, t.type_index)
        for t in inst.masked_targets
    ]
    if len(ids) > max_len:
        ids = ids[: max_len - 1] + (SEP_ID,)
        targets = [t for t in targets if t.token_end <= max_len - 1]
    return MaskedInstance(inst.pmid, ids, tuple(targets))


def _document_rng(base_seed: int, epoch_seed: int, pmid: str) -> np.random.Generator:
    pmid_hash = int.from_bytes(hashlib.sha256(pmid.encode("utf-8")).digest()[:8], "little")
    seq = np.random.SeedSequence([base_seed, epoch_seed, pmid_hash])
    return np.random.Generator(np.random.PCG64(seq))


def build_pretraining_instances(
    corpus: Sequence[Document],
    vocab: Vocabulary,
    cfg: MaskingConfig,
    epoch_seed: int,
    max_len: int = 512,
) -> list[MaskedInstance]:
    """One framed masked instance per eligible document, fully seed-determined."""
    instances: list[MaskedInstance] = []
    for doc in corpus:
        if len(doc.groundable_identifiers()) < 2:
            log.info("masking skip pmid=%s reason=fewer-than-2-identifiers", doc.pmid)
            continue
        rng = _document_rng(cfg.seed, epoch_seed, doc.pmid)
        selected = select_masked_identifiers(doc, rng, cfg)
        tok = tokenize_document(doc, vocab)
        inst = frame_instance(apply_entity_mask(tok, doc, selected, vocab), max_len)
        if not inst.masked_targets:
            log.warning("masking skip pmid=%s reason=targets-truncated-away", doc.pmid)
            continue
        instances.append(inst)
    return instances


def render_mask_preview(
    corpus: Sequence[Document],
    vocab: Vocabulary,
    cfg: MaskingConfig,
    epoch_seed: int = 0,
) -> str:
    """Line-oriented preview: bracketed masked spans plus a target table.

    Per document: a ``pmid:`` line, a ``masked:`` line with the selected
    identifiers, a ``text:`` line with every masked mention bracketed,
    then one tab-separated ``target`` line per masked mention
    (surface, identifier, type).  Documents are separated by blank lines;
    ineligible documents get a single ``skip`` line.
    """
    blocks: list[str] = []
    for doc in corpus:
        if len(doc.groundable_identifiers()) < 2:
            blocks.append(f"pmid: {doc.pmid}\nskip: fewer than 2 groundable identifiers")
            continue
        rng = _document_rng(cfg.seed, epoch_seed, doc.pmid)
        selected = select_masked_identifiers(doc, rng, cfg)
        masked = [m for m in doc.mentions if set(m.identifiers) & selected]
        text = doc.full_text
        for m in sorted(masked, key=lambda m: m.start, reverse=True):
            text = f"{text[:m.start]}[{text[m.start:m.end]}]{text[m.end:]}"
        lines = [
            f"pmid: {doc.pmid}",
            f"masked: {' '.join(sorted(selected))}",
            f"text: {text}",
        ]
        for m in masked:
            ident = sorted(set(m.identifiers) & selected)[0]
            lines.append(f"target\t{m.surface}\t{ident}\t{m.entity_type}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
