"""PubTator corpus parsing, validation, and entity-pair candidate generation.

The on-disk format is line oriented: one block per document, blocks
separated by a blank line.  A block carries a ``PMID|t|`` title line, a
``PMID|a|`` abstract line, and then tab-separated annotation lines --
entity mentions with character offsets, and relations with novelty
labels.  Offsets are global: they index into ``title + " " + abstract``.

Parsing is strict.  Any malformed line, bad offset, or inconsistent
annotation rejects the whole file with a :class:`CorpusError` that names
the PMID and line number.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

NULL_IDENTIFIER = "-"            # unnormalized mention, excluded from pairing and masking
NO_RELATION_LABEL = "None"       # reserved label for unannotated candidate pairs
NO_NOVELTY_LABEL = "NoneClass"   # novelty label reserved for unannotated pairs
NOVELTY_CLASSES = ("No", "Novel")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data, with PMID/line context."""

    def __init__(self, message: str, pmid: str | None = None, line_no: int | None = None):
        self.pmid = pmid
        self.line_no = line_no
        where = []
        if line_no is not None:
            where.append(f"line {line_no}")
        if pmid:
            where.append(f"PMID {pmid}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def canonical_pair(id_a: str, id_b: str) -> tuple[str, str]:
    """Unordered identifier pair stored in lexicographic order."""
    return (id_a, id_b) if id_a <= id_b else (id_b, id_a)


@dataclass(frozen=True)
class Mention:
    """One entity mention: a character span plus its concept annotations."""

    start: int
    end: int
    surface: str
    entity_type: str
    identifiers: tuple[str, ...]


@dataclass(frozen=True)
class RelationAnnotation:
    """A typed, novelty-labeled relation between two concept identifiers."""

    id_a: str
    id_b: str
    relation_type: str
    novelty: str

    def pair_key(self) -> tuple[str, str]:
        return canonical_pair(self.id_a, self.id_b)


@dataclass(frozen=True)
class Document:
    """A parsed title+abstract document with mention and relation annotations."""

    pmid: str
    title: str
    abstract: str
    mentions: tuple[Mention, ...] = ()
    relations: tuple[RelationAnnotation, ...] = ()

    @property
    def full_text(self) -> str:
        """Title and abstract joined by a single space; offsets index into this."""
        return f"{self.title} {self.abstract}"

    def mention_identifiers(self) -> set[str]:
        """Every identifier attached to any mention, including the null one."""
        return {i for m in self.mentions for i in m.identifiers}

    def groundable_identifiers(self) -> list[str]:
        """Distinct non-null identifiers in canonical (sorted) order."""
        return sorted(i for i in self.mention_identifiers() if i != NULL_IDENTIFIER)

    def identifier_types(self) -> dict[str, str]:
        """Concept type per identifier, taken from its first mention."""
        types: dict[str, str] = {}
        for m in self.mentions:
            for i in m.identifiers:
                types.setdefault(i, m.entity_type)
        return types


@dataclass(frozen=True)
class PairCandidate:
    """One unordered identifier pair, labeled from gold relations when present."""

    src_id: str
    tgt_id: str
    src_type: str
    tgt_type: str
    relation_label: str = NO_RELATION_LABEL
    novelty_label: str = NO_NOVELTY_LABEL


def validate_document(doc: Document) -> None:
    """Check every document invariant; raise CorpusError on the first violation."""
    pmid = doc.pmid
    if not pmid or any(c in pmid for c in "|\t\n"):
        raise CorpusError(f"invalid PMID {pmid!r}", pmid=pmid)
    if "\n" in doc.title or "\n" in doc.abstract:
        raise CorpusError("title/abstract must be single lines", pmid=pmid)
    text = doc.full_text
    boundary = len(doc.title)  # index of the separator space
    prev_start = -1
    for m in doc.mentions:
        if not (0 <= m.start < m.end <= len(text)):
            raise CorpusError(
                f"mention offsets [{m.start},{m.end}) outside text of length {len(text)}",
                pmid=pmid,
            )
        if text[m.start:m.end] != m.surface:
            raise CorpusError(
                f"mention surface {m.surface!r} does not match text "
                f"{text[m.start:m.end]!r} at [{m.start},{m.end})",
                pmid=pmid,
            )
        if m.start <= boundary < m.end:
            raise CorpusError(
                f"mention [{m.start},{m.end}) crosses the title/abstract boundary",
                pmid=pmid,
            )
        if not m.identifiers or any(not i for i in m.identifiers):
            raise CorpusError("mention has an empty identifier", pmid=pmid)
        if m.start < prev_start:
            raise CorpusError("mentions not sorted by start offset", pmid=pmid)
        prev_start = m.start
    known = doc.mention_identifiers()
    seen_pairs: set[tuple[str, str]] = set()
    for r in doc.relations:
        if r.id_a == r.id_b:
            raise CorpusError(f"self-relation on identifier {r.id_a!r}", pmid=pmid)
        if r.novelty not in NOVELTY_CLASSES:
            raise CorpusError(f"unknown novelty label {r.novelty!r}", pmid=pmid)
        key = r.pair_key()
        if key in seen_pairs:
            raise CorpusError(f"duplicate relation pair {key}", pmid=pmid)
        seen_pairs.add(key)
        for endpoint in key:
            if endpoint not in known:
                raise CorpusError(
                    f"relation endpoint {endpoint!r} has no mention", pmid=pmid
                )


def _parse_int_offset(field: str, what: str, pmid: str, line_no: int) -> int:
    if not field.isdigit():
        raise CorpusError(f"{what} {field!r} is not a non-negative integer", pmid, line_no)
    return int(field)


def _parse_block(numbered: list[tuple[int, str]]) -> Document:
    line_no, first = numbered[0]
    head = first.split("|", 2)
    if len(head) != 3 or head[1] != "t":
        raise CorpusError("expected 'PMID|t|title' line", line_no=line_no)
    pmid, _, title = head
    if len(numbered) < 2:
        raise CorpusError("block has no abstract line", pmid, line_no)
    line_no_a, second = numbered[1]
    head = second.split("|", 2)
    if len(head) != 3 or head[1] != "a":
        raise CorpusError("expected 'PMID|a|abstract' line", pmid, line_no_a)
    if head[0] != pmid:
        raise CorpusError(f"abstract PMID {head[0]!r} does not match title", pmid, line_no_a)
    abstract = head[2]
    full_text = f"{title} {abstract}"

    mentions: list[Mention] = []
    relations: list[tuple[int, RelationAnnotation]] = []
    for line_no, line in numbered[2:]:
        fields = line.split("\t")
        if fields[0] != pmid:
            raise CorpusError(f"annotation PMID {fields[0]!r} does not match block", pmid, line_no)
        if len(fields) == 6:
            start = _parse_int_offset(fields[1], "start offset", pmid, line_no)
            end = _parse_int_offset(fields[2], "end offset", pmid, line_no)
            surface, entity_type, id_field = fields[3], fields[4], fields[5]
            if not (start < end <= len(full_text)):
                raise CorpusError(
                    f"offsets [{start},{end}) out of range for text of length {len(full_text)}",
                    pmid, line_no,
                )
            if full_text[start:end] != surface:
                raise CorpusError(
                    f"surface {surface!r} does not match text {full_text[start:end]!r}",
                    pmid, line_no,
                )
            identifiers = tuple(i.strip() for i in id_field.split(","))
            if any(not i for i in identifiers):
                raise CorpusError(f"empty identifier in {id_field!r}", pmid, line_no)
            mentions.append(Mention(start, end, surface, entity_type, identifiers))
        elif len(fields) == 5:
            _, relation_type, id_a, id_b, novelty = fields
            if novelty not in NOVELTY_CLASSES:
                raise CorpusError(f"unknown novelty label {novelty!r}", pmid, line_no)
            if id_a == id_b:
                raise CorpusError(f"self-relation on identifier {id_a!r}", pmid, line_no)
            relations.append((line_no, RelationAnnotation(id_a, id_b, relation_type, novelty)))
        else:
            raise CorpusError(
                f"annotation line has {len(fields)} fields (expected 6 for an entity, 5 for a relation)",
                pmid, line_no,
            )

    mentions.sort(key=lambda m: (m.start, m.end))
    known = {i for m in mentions for i in m.identifiers}
    seen_pairs: set[tuple[str, str]] = set()
    for line_no, r in relations:
        key = r.pair_key()
        if key in seen_pairs:
            raise CorpusError(f"duplicate relation pair {key}", pmid, line_no)
        seen_pairs.add(key)
        for endpoint in key:
            if endpoint not in known:
                raise CorpusError(f"relation endpoint {endpoint!r} has no mention", pmid, line_no)

    doc = Document(
        pmid=pmid,
        title=title,
        abstract=abstract,
        mentions=tuple(mentions),
        relations=tuple(r for _, r in relations),
    )
    validate_document(doc)
    return doc


def parse_pubtator(stream: str | TextIO) -> list[Document]:
    """Parse blank-line-separated PubTator blocks into validated documents."""
    text = stream if isinstance(stream, str) else stream.read()
    docs: list[Document] = []
    seen_pmids: set[str] = set()
    block: list[tuple[int, str]] = []
    lines = text.splitlines()
    for line_no, raw in enumerate(lines + [""], start=1):
        line = raw.rstrip("\r")
        if line:
            block.append((line_no, line))
            continue
        if block:
            doc = _parse_block(block)
            if doc.pmid in seen_pmids:
                raise CorpusError("duplicate document", doc.pmid, block[0][0])
            seen_pmids.add(doc.pmid)
            docs.append(doc)
            block = []
    return docs


def candidate_pairs(
    doc: Document,
    type_pair_allowlist: Iterable[tuple[str, str]] | None = None,
) -> list[PairCandidate]:
    """Enumerate all unordered pairs of distinct groundable identifiers.

    Pairs matching a gold relation carry its relation and novelty labels;
    all others are labeled ``None``/``NoneClass``.  Order is deterministic:
    lexicographic over canonical pairs.  ``type_pair_allowlist``, when
    given, keeps only pairs whose unordered type combination is listed.
    """
    identifiers = doc.groundable_identifiers()
    types = doc.identifier_types()
    annotated = {r.pair_key(): r for r in doc.relations}
    allowed = None
    if type_pair_allowlist is not None:
        allowed = {frozenset(p) for p in type_pair_allowlist}
    out: list[PairCandidate] = []
    for src_id, tgt_id in itertools.combinations(identifiers, 2):
        src_type, tgt_type = types[src_id], types[tgt_id]
        if allowed is not None and frozenset((src_type, tgt_type)) not in allowed:
            continue
        rel = annotated.get((src_id, tgt_id))
        if rel is None:
            out.append(PairCandidate(src_id, tgt_id, src_type, tgt_type))
        else:
            out.append(
                PairCandidate(src_id, tgt_id, src_type, tgt_type, rel.relation_type, rel.novelty)
            )
    return out


def write_pubtator(
    docs: Iterable[Document],
    predicted: Mapping[str, Iterable[RelationAnnotation]] | None = None,
) -> str:
    """Serialize documents back to PubTator text.

    With ``predicted=None`` the documents' own relations are written, so
    ``parse_pubtator(write_pubtator(docs))`` round-trips.  Otherwise the
    gold relation lines are replaced by ``predicted[pmid]`` (documents
    absent from the map get no relation lines).
    """
    docs = list(docs)
    if predicted is not None:
        known_pmids = {d.pmid for d in docs}
        for pmid in predicted:
            if pmid not in known_pmids:
                raise CorpusError("prediction for unknown document", pmid=pmid)
    blocks: list[str] = []
    for doc in docs:
        validate_document(doc)
        lines = [f"{doc.pmid}|t|{doc.title}", f"{doc.pmid}|a|{doc.abstract}"]
        for m in doc.mentions:
            lines.append(
                f"{doc.pmid}\t{m.start}\t{m.end}\t{m.surface}\t{m.entity_type}\t"
                + ",".join(m.identifiers)
            )
        if predicted is None:
            relations: Iterable[RelationAnnotation] = doc.relations
        else:
            relations = predicted.get(doc.pmid, ())
        known = doc.mention_identifiers()
        for r in relations:
            for endpoint in (r.id_a, r.id_b):
                if endpoint not in known:
                    raise CorpusError(
                        f"predicted relation endpoint {endpoint!r} has no mention",
                        pmid=doc.pmid,
                    )
            if r.novelty not in NOVELTY_CLASSES:
                raise CorpusError(f"unknown novelty label {r.novelty!r}", pmid=doc.pmid)
            lines.append(f"{doc.pmid}\t{r.relation_type}\t{r.id_a}\t{r.id_b}\t{r.novelty}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
