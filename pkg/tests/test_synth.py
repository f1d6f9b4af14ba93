import pytest

from xfer_forge.corpus import check_tree, write_text_corpus
from xfer_forge.synth import (
    Production,
    SentenceSampler,
    alphabets_disjoint,
    build_lexicon,
    gen_synthetic_language,
    load_spec,
    make_language_spec,
    save_spec,
    similarity_label,
)
from xfer_forge.seeding import derive_rng

SRC = make_language_spec("alpha", "abcdefghij", lexicon_size=120, seed=3)
TGT = make_language_spec("beta", "klmnopqrst", lexicon_size=120, seed=4)


def test_spec_roundtrip(tmp_path):
    p = tmp_path / "spec.json"
    save_spec(SRC, p)
    assert load_spec(p) == SRC


def test_generation_is_deterministic(tmp_path):
    out = []
    for _ in range(2):
        corpus, treebank, tasks = gen_synthetic_language(SRC, 200, seed=7)
        p = tmp_path / "c.txt"
        write_text_corpus(corpus, p)
        out.append(p.read_bytes())
        assert treebank.sentences == gen_synthetic_language(SRC, 200, seed=7)[1].sentences
    assert out[0] == out[1]


def test_different_seed_changes_output():
    c1, _, _ = gen_synthetic_language(SRC, 50, seed=1)
    c2, _, _ = gen_synthetic_language(SRC, 50, seed=2)
    assert c1.documents != c2.documents


def test_treebank_trees_are_valid():
    _, treebank, _ = gen_synthetic_language(SRC, 200, seed=0)
    assert len(treebank) > 0
    for i, sent in enumerate(treebank.sentences):
        check_tree(sent.heads, index=i)
        assert len(sent.tokens) == len(sent.upos) == len(sent.heads)


def test_treebank_has_punct_and_length_range():
    _, treebank, _ = gen_synthetic_language(SRC, 300, seed=0)
    assert any("PUNCT" in s.upos for s in treebank.sentences)
    assert any(5 <= len(s) <= 50 for s in treebank.sentences)


def test_grammar_task_balanced_50_50():
    _, _, tasks = gen_synthetic_language(SRC, 300, seed=5)
    labels = [ex.label for ex in tasks["grammar"].examples]
    assert labels.count("acceptable") == labels.count("unacceptable")


def test_disjoint_alphabets_share_no_word_types():
    assert alphabets_disjoint(SRC, TGT)
    c1, _, t1 = gen_synthetic_language(SRC, 200, seed=1)
    c2, _, t2 = gen_synthetic_language(TGT, 200, seed=1)
    words1 = {w for s in c1.documents for w in s.split()}
    words2 = {w for s in c2.documents for w in s.split()}
    assert not words1 & words2


def test_similarity_labels_match_definition():
    _, _, tasks = gen_synthetic_language(SRC, 200, seed=2)
    for ex in tasks["similarity"].examples:
        assert 0.0 <= ex.label <= 5.0
        assert ex.label == round(ex.label, 2)
    # identical content words -> 5.0
    assert similarity_label(["aa", "bb"], ["noun", "verb"], ["aa", "bb"], ["noun", "verb"]) == 5.0
    # disjoint -> 0.0
    assert similarity_label(["aa"], ["noun"], ["bb"], ["noun"]) == 0.0


def test_parity_pairs_complete_and_balanced():
    _, _, tasks = gen_synthetic_language(SRC, 300, seed=3)
    parity = tasks["parity"]
    by_pair = {}
    for ex in parity.examples:
        by_pair.setdefault(ex.pair_id, []).append(ex)
    for pid, pair in by_pair.items():
        assert len(pair) == 2
        assert pair[0].label == pair[1].label
        assert pair[0].split == pair[1].split
        assert {pair[0].variant_tag, pair[1].variant_tag} == {"p0", "p1"}
    labels = [pair[0].label for pair in by_pair.values()]
    assert abs(labels.count("entail") - labels.count("contradict")) <= 1


def test_sense_task_marker_semantics():
    _, _, tasks = gen_synthetic_language(SRC, 200, seed=4)
    lexicon = build_lexicon(SRC)
    markers = set(lexicon.words["marker"])
    for ex in tasks["sense"].examples:
        m_a = ex.text_a.split()[0]
        m_b = ex.text_b.split()[0]
        assert m_a in markers and m_b in markers
        assert ex.label == ("same" if m_a == m_b else "different")
        # the target word is shared between contexts
        assert ex.text_a.split()[1] == ex.text_b.split()[1]


def test_inference_has_mismatched_dev_split():
    _, _, tasks = gen_synthetic_language(SRC, 300, seed=6)
    splits = {ex.split for ex in tasks["inference"].examples}
    assert {"train", "dev", "dev_mm"} <= splits


def test_nonterminating_grammar_reports_depth():
    bad = make_language_spec(
        "bad",
        "abcd",
        lexicon_size=30,
        seed=0,
        productions=[
            Production("S", ("NP", "verb"), 1, 1.0),
            Production("NP", ("adj", "NP"), 1, 1.0),
            Production("NP", ("noun",), 0, 1e-12),
        ],
    )
    sampler = SentenceSampler(bad, max_depth=25)
    rng = derive_rng(0)
    with pytest.raises(RuntimeError, match="depth"):
        for _ in range(200):
            sampler.sample(rng)


def test_invalid_grammar_rejected():
    with pytest.raises(ValueError, match="all-terminal"):
        make_language_spec(
            "bad",
            "abcd",
            lexicon_size=30,
            seed=0,
            productions=[
                Production("S", ("NP",), 0, 1.0),
                Production("NP", ("adj", "NP"), 1, 1.0),
            ],
        )


def test_n_sentences_must_be_positive():
    with pytest.raises(ValueError):
        gen_synthetic_language(SRC, 0, seed=0)
