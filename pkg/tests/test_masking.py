"""Entity masking selection, application, and instance-building tests."""

import numpy as np
import pytest

from entrex.corpus import parse_pubtator
from entrex.masking import (
    MaskingConfig,
    apply_entity_mask,
    build_pretraining_instances,
    frame_instance,
    render_mask_preview,
    select_masked_identifiers,
)
from entrex.synthetic import random_document
from entrex.tokenizer import CLS_ID, MASK_ID, SEP_ID, build_vocab, tokenize_document


def _rng(seed=0):
    return np.random.default_rng(seed)


def _doc_and_vocab(seed=0, **kwargs):
    doc = random_document(_rng(seed), "1", **kwargs)
    return doc, build_vocab([doc])


def test_threshold_zero_selects_exactly_one():
    doc, _ = _doc_and_vocab(1, min_identifiers=4, max_identifiers=6)
    cfg = MaskingConfig(threshold=0.0)
    for s in range(20):
        selected = select_masked_identifiers(doc, _rng(s), cfg)
        assert len(selected) == 1


def test_threshold_one_selects_all_but_one():
    doc, _ = _doc_and_vocab(2, min_identifiers=5, max_identifiers=5)
    k = len(doc.groundable_identifiers())
    cfg = MaskingConfig(threshold=1.0)
    for s in range(20):
        selected = select_masked_identifiers(doc, _rng(s), cfg)
        assert len(selected) == k - 1


def test_selection_requires_two_identifiers():
    doc, _ = _doc_and_vocab(3, min_identifiers=1, max_identifiers=1)
    with pytest.raises(ValueError):
        select_masked_identifiers(doc, _rng(), MaskingConfig())


def test_selection_rate_matches_threshold():
    """Pre-repair Bernoulli rate over 10,000 draws sits in [0.18, 0.22].

    min_masked=0 disables the none-selected repair; with 10 identifiers a
    document triggers the all-selected repair with probability 0.2**10,
    so the measured rate is the raw Bernoulli rate.
    """
    cfg = MaskingConfig(threshold=0.2, min_masked_identifiers=0)
    rng = _rng(404)
    draws = 0
    hits = 0
    doc = random_document(_rng(77), "1", min_identifiers=10, max_identifiers=10)
    k = len(doc.groundable_identifiers())
    while draws < 10_000:
        selected = select_masked_identifiers(doc, rng, cfg)
        hits += len(selected)
        draws += k
    rate = hits / draws
    assert 0.18 <= rate <= 0.22


def test_config_validation():
    with pytest.raises(ValueError):
        MaskingConfig(threshold=1.5)
    with pytest.raises(ValueError):
        MaskingConfig(min_unmasked_identifiers=0)


def test_apply_empty_selection_is_identity():
    doc, vocab = _doc_and_vocab(4)
    tok = tokenize_document(doc, vocab)
    inst = apply_entity_mask(tok, doc, set(), vocab)
    assert inst.token_ids == tok.token_ids
    assert inst.masked_targets == ()


def test_apply_masks_every_mention_of_identifier():
    text = (
        "6|t|aa here.\n"
        "6|a|bb cc dd and aa.\n"
        "6\t0\t2\taa\tGene\tG1\n"
        "6\t9\t17\tbb cc dd\tChemical\tC1\n"
        "6\t22\t24\taa\tGene\tG1\n"
    )
    doc = parse_pubtator(text)[0]
    vocab = build_vocab([doc])
    tok = tokenize_document(doc, vocab)
    inst = apply_entity_mask(tok, doc, {"G1", "C1"}, vocab)
    # G1 has 2 single-token mentions, C1 one 3-token mention
    assert len(inst.masked_targets) == 3
    assert sum(1 for t in inst.token_ids if t == MASK_ID) == 5


def test_apply_rejects_unknown_identifier():
    doc, vocab = _doc_and_vocab(5)
    tok = tokenize_document(doc, vocab)
    with pytest.raises(ValueError):
        apply_entity_mask(tok, doc, {"NOPE"}, vocab)


def test_mask_position_set_oracle():
    """MASK positions equal a brute-force scan over selected mention ranges."""
    rng = _rng(31)
    for i in range(100):
        doc = random_document(rng, str(i), min_identifiers=2, max_identifiers=8)
        vocab = build_vocab([doc])
        tok = tokenize_document(doc, vocab)
        selected = select_masked_identifiers(doc, rng, MaskingConfig(threshold=0.4))
        inst = apply_entity_mask(tok, doc, selected, vocab)

        expected = set()
        for m, (lo, hi) in zip(doc.mentions, tok.mention_token_ranges):
            if any(i in selected for i in m.identifiers):
                expected.update(range(lo, hi))
        got = {j for j, t in enumerate(inst.token_ids) if t == MASK_ID}
        assert got == expected
        # one target per masked mention, identifier taken from the selection
        n_masked_mentions = sum(
            1 for m in doc.mentions if set(m.identifiers) & selected
        )
        assert len(inst.masked_targets) == n_masked_mentions
        for t in inst.masked_targets:
            assert vocab.identifier_labels[t.identifier_index] in selected


def test_frame_instance_shifts_targets():
    doc, vocab = _doc_and_vocab(6)
    tok = tokenize_document(doc, vocab)
    selected = select_masked_identifiers(doc, _rng(1), MaskingConfig(threshold=0.5))
    inst = apply_entity_mask(tok, doc, selected, vocab)
    framed = frame_instance(inst, max_len=512)
    assert framed.token_ids[0] == CLS_ID and framed.token_ids[-1] == SEP_ID
    for t0, t1 in zip(inst.masked_targets, framed.masked_targets):
        assert (t1.token_start, t1.token_end) == (t0.token_start + 1, t0.token_end + 1)
        assert all(framed.token_ids[j] == MASK_ID for j in range(t1.token_start, t1.token_end))


def test_build_instances_deterministic():
    rng = _rng(7)
    corpus = [random_document(rng, str(i)) for i in range(6)]
    vocab = build_vocab(corpus)
    cfg = MaskingConfig(threshold=0.2, seed=3)
    a = build_pretraining_instances(corpus, vocab, cfg, epoch_seed=11)
    b = build_pretraining_instances(corpus, vocab, cfg, epoch_seed=11)
    assert a == b
    c = build_pretraining_instances(corpus, vocab, cfg, epoch_seed=12)
    assert a != c  # different epoch reshuffles the masking


def test_build_instances_skips_single_identifier_docs():
    rng = _rng(8)
    eligible = random_document(rng, "10", min_identifiers=3, max_identifiers=3)
    lonely = random_document(rng, "11", min_identifiers=1, max_identifiers=1)
    vocab = build_vocab([eligible, lonely])
    out = build_pretraining_instances([eligible, lonely], vocab, MaskingConfig(), 0)
    assert [i.pmid for i in out] == ["10"]


def test_every_identifier_masked_across_epochs():
    """Coverage: over 50 epochs each identifier of a 5-identifier doc is masked."""
    doc = random_document(_rng(55), "1", min_identifiers=5, max_identifiers=5)
    vocab = build_vocab([doc])
    cfg = MaskingConfig(threshold=0.2, seed=9)
    masked_ever = set()
    for epoch in range(50):
        for inst in build_pretraining_instances([doc], vocab, cfg, epoch_seed=epoch):
            masked_ever.update(
                vocab.identifier_labels[t.identifier_index] for t in inst.masked_targets
            )
    assert masked_ever == set(doc.groundable_identifiers())


def test_at_least_one_identifier_unmasked():
    rng = _rng(66)
    for i in range(50):
        doc = random_document(rng, str(i), min_identifiers=2, max_identifiers=6)
        vocab = build_vocab([doc])
        for epoch in range(3):
            for inst in build_pretraining_instances(
                [doc], vocab, MaskingConfig(threshold=0.9), epoch_seed=epoch
            ):
                masked = {
                    vocab.identifier_labels[t.identifier_index] for t in inst.masked_targets
                }
                assert masked < set(doc.groundable_identifiers())


def test_preview_is_stable_and_lists_targets():
    doc, vocab = _doc_and_vocab(12, min_identifiers=3, max_identifiers=3)
    cfg = MaskingConfig(threshold=0.5, seed=1)
    a = render_mask_preview([doc], vocab, cfg)
    b = render_mask_preview([doc], vocab, cfg)
    assert a == b
    assert a.startswith("pmid: 1\n")
    assert "masked: " in a and "target\t" in a
    assert "[" in a.split("text: ", 1)[1]
