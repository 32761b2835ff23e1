"""Corpus vocabulary, offset-faithful word tokenization, and pair tagging.

Tokenization is word level: lower-cased runs of word characters plus
single punctuation characters, with extra token boundaries forced at
every mention start and end so mentions always align to whole tokens.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import (
    NO_NOVELTY_LABEL,
    NO_RELATION_LABEL,
    NULL_IDENTIFIER,
    Document,
    Mention,
)

SPECIAL_TOKENS = ("[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]")
CLS_ID, SEP_ID, PAD_ID, UNK_ID, MASK_ID = range(5)
NOVELTY_LABELS = (NO_NOVELTY_LABEL, "No", "Novel")

VOCAB_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _tag_token(role: str, entity_type: str, close: bool) -> str:
    return f"[{'/' if close else ''}{role}={entity_type}]"


def tag_tokens_for_types(type_labels: Iterable[str]) -> list[str]:
    """Open/close SRC and TGT tag tokens, one quadruple per entity type."""
    out = []
    for t in type_labels:
        for role in ("SRC", "TGT"):
            out.append(_tag_token(role, t, close=False))
            out.append(_tag_token(role, t, close=True))
    return out


@dataclass(frozen=True)
class Vocabulary:
    """Token ids plus the label spaces for identifiers, types, relations, novelty."""

    tokens: tuple[str, ...]
    identifier_labels: tuple[str, ...]
    type_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    novelty_labels: tuple[str, ...] = NOVELTY_LABELS

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIAL_TOKENS:
            raise ValueError("special tokens must occupy ids 0..4")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        if not self.relation_labels or self.relation_labels[0] != NO_RELATION_LABEL:
            raise ValueError(f"relation label {NO_RELATION_LABEL!r} must sit at index 0")
        if self.novelty_labels != NOVELTY_LABELS:
            raise ValueError(f"novelty labels must be {NOVELTY_LABELS}")

    @cached_property
    def token_to_id(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    @cached_property
    def _identifier_to_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.identifier_labels)}

    @cached_property
    def _type_to_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.type_labels)}

    @cached_property
    def _relation_to_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.relation_labels)}

    def __len__(self) -> int:
        return len(self.tokens)

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def identifier_index(self, identifier: str) -> int:
        try:
            return self._identifier_to_index[identifier]
        except KeyError:
            raise KeyError(f"identifier {identifier!r} not in vocabulary") from None

    def type_index(self, entity_type: str) -> int:
        try:
            return self._type_to_index[entity_type]
        except KeyError:
            raise KeyError(f"entity type {entity_type!r} not in vocabulary") from None

    def relation_index(self, label: str) -> int:
        try:
            return self._relation_to_index[label]
        except KeyError:
            raise KeyError(f"relation label {label!r} not in vocabulary") from None

    def novelty_index(self, label: str) -> int:
        try:
            return self.novelty_labels.index(label)
        except ValueError:
            raise KeyError(f"novelty label {label!r} not in vocabulary") from None

    def tag_id(self, role: str, entity_type: str, close: bool = False) -> int:
        token = _tag_token(role, entity_type, close)
        tag = self.token_to_id.get(token)
        if tag is None:
            raise KeyError(f"tag token {token!r} not in vocabulary")
        return tag

    def tag_ids(self) -> set[int]:
        return {self.token_to_id[t] for t in tag_tokens_for_types(self.type_labels)}

    def to_json_dict(self) -> dict:
        return {
            "version": VOCAB_FORMAT_VERSION,
            "special_tokens": {t: i for i, t in enumerate(SPECIAL_TOKENS)},
            "tokens": list(self.tokens),
            "identifier_labels": list(self.identifier_labels),
            "type_labels": list(self.type_labels),
            "relation_labels": list(self.relation_labels),
            "novelty_labels": list(self.novelty_labels),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vocabulary":
        version = data.get("version")
        if version != VOCAB_FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary format version {version!r}")
        return cls(
            tokens=tuple(data["tokens"]),
            identifier_labels=tuple(data["identifier_labels"]),
            type_labels=tuple(data["type_labels"]),
            relation_labels=tuple(data["relation_labels"]),
            novelty_labels=tuple(data["novelty_labels"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(vocab.to_json() + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    return Vocabulary.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def split_tokens(text: str, mentions: Sequence[Mention] = ()) -> list[tuple[int, int, str]]:
    """Lower-cased (start, end, token) triples with mention-boundary cuts."""
    cuts = sorted({m.start for m in mentions} | {m.end for m in mentions} | {0, len(text)})
    out: list[tuple[int, int, str]] = []
    for seg_start, seg_end in zip(cuts, cuts[1:]):
        for match in _TOKEN_RE.finditer(text, seg_start, seg_end):
            out.append((match.start(), match.end(), match.group().lower()))
    return out


@dataclass(frozen=True)
class TokenizedDocument:
    """Token ids with character spans and per-mention token ranges."""

    token_ids: tuple[int, ...]
    spans: tuple[tuple[int, int], ...]
    mention_token_ranges: tuple[tuple[int, int], ...]  # aligned with the document's mentions


def tokenize(text: str, mentions: Sequence[Mention], vocab: Vocabulary) -> TokenizedDocument:
    """Tokenize text and align every mention to a contiguous token range."""
    triples = split_tokens(text, mentions)
    spans = tuple((s, e) for s, e, _ in triples)
    token_ids = tuple(vocab.token_id(t) for _, _, t in triples)
    ranges = []
    for m in mentions:
        inside = [i for i, (s, e) in enumerate(spans) if m.start <= s and e <= m.end]
        if not inside:
            raise ValueError(
                f"mention {m.surface!r} at [{m.start},{m.end}) produced no tokens"
            )
        lo, hi = inside[0], inside[-1] + 1
        if inside != list(range(lo, hi)):
            raise ValueError(f"mention {m.surface!r} tokens are not contiguous")
        ranges.append((lo, hi))
    return TokenizedDocument(token_ids, spans, tuple(ranges))


def tokenize_document(doc: Document, vocab: Vocabulary) -> TokenizedDocument:
    return tokenize(doc.full_text, doc.mentions, vocab)


def build_vocab(corpus: Sequence[Document], min_freq: int = 1) -> Vocabulary:
    """Build the vocabulary and label spaces from a parsed corpus.

    Word tokens with frequency >= min_freq are kept; ids are assigned by
    descending frequency then lexicographic order, after the special and
    tag tokens.  Rebuilding from the same corpus is byte-identical.
    """
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    identifiers: set[str] = set()
    types: set[str] = set()
    relations: set[str] = set()
    for doc in corpus:
        counts.update(t for _, _, t in split_tokens(doc.full_text, doc.mentions))
        for m in doc.mentions:
            types.add(m.entity_type)
            identifiers.update(i for i in m.identifiers if i != NULL_IDENTIFIER)
        for r in doc.relations:
            relations.add(r.relation_type)
    if NO_RELATION_LABEL in relations:
        raise ValueError(f"corpus uses the reserved relation label {NO_RELATION_LABEL!r}")
    type_labels = tuple(sorted(types))
    words = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    tokens = tuple(SPECIAL_TOKENS) + tuple(tag_tokens_for_types(type_labels)) + tuple(words)
    return Vocabulary(
        tokens=tokens,
        identifier_labels=tuple(sorted(identifiers)),
        type_labels=type_labels,
        relation_labels=(NO_RELATION_LABEL,) + tuple(sorted(relations)),
    )


def insert_pair_tags(
    tok: TokenizedDocument,
    doc: Document,
    src_id: str,
    tgt_id: str,
    vocab: Vocabulary,
    max_len: int = 512,
) -> tuple[int, ...]:
    """CLS + tokens with SRC/TGT tags around every mention of the pair + SEP.

    A mention carrying both identifiers gets SRC tags.  Output longer
    than max_len is prefix-truncated with SEP kept final.
    """
    known = doc.mention_identifiers()
    for ident in (src_id, tgt_id):
        if ident not in known:
            raise ValueError(f"identifier {ident!r} not present in document {doc.pmid}")
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for m, (lo, hi) in zip(doc.mentions, tok.mention_token_ranges):
        if src_id in m.identifiers:
            role = "SRC"
        elif tgt_id in m.identifiers:
            role = "TGT"
        else:
            continue
        opens.setdefault(lo, []).append(vocab.tag_id(role, m.entity_type, close=False))
        closes.setdefault(hi, []).append(vocab.tag_id(role, m.entity_type, close=True))
    out = [CLS_ID]
    for j in range(len(tok.token_ids) + 1):
        out.extend(closes.get(j, ()))
        if j < len(tok.token_ids):
            out.extend(opens.get(j, ()))
            out.append(tok.token_ids[j])
    out.append(SEP_ID)
    if len(out) > max_len:
        out = out[: max_len - 1] + [SEP_ID]
    return tuple(out)
