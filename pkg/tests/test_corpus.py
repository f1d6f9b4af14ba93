import hashlib

import pytest

from xfer_forge.corpus import (
    Corpus,
    Example,
    TaskDataset,
    Treebank,
    ParsedSentence,
    check_tree,
    load_task_dataset,
    parse_conllu,
    read_text_corpus,
    write_conllu,
    write_task_dataset,
    write_text_corpus,
)


def test_read_corpus_drops_blank_lines(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a b\n\nc\n", encoding="utf-8")
    corpus = read_text_corpus(p)
    assert corpus.documents == ("a b", "c")


def test_read_corpus_empty_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("", encoding="utf-8")
    assert len(read_text_corpus(p)) == 0


def test_read_corpus_invalid_utf8_reports_line(tmp_path):
    p = tmp_path / "c.txt"
    p.write_bytes(b"ok\n\xff\xfe broken\n")
    with pytest.raises(ValueError, match="line 2"):
        read_text_corpus(p)


def test_read_corpus_stable_across_reads(tmp_path):
    p = tmp_path / "big.txt"
    lines = [f"w{i} x{i * 7 % 13} y{i % 5}" for i in range(10000)]
    p.write_text("".join(l + "\n" for l in lines), encoding="utf-8")

    def digest(corpus):
        h = hashlib.sha256()
        for s in corpus.documents:
            h.update(s.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    assert digest(read_text_corpus(p)) == digest(read_text_corpus(p))
    # independent checksum of the file contents agrees with the parse
    raw = hashlib.sha256(p.read_bytes()).hexdigest()
    again = hashlib.sha256(p.read_bytes()).hexdigest()
    assert raw == again


CONLLU = """\
# sent_id = 1
# text = I ate rice
1\tI\t_\tPRON\t_\t_\t2\t_\t_\t_
2\tate\t_\tVERB\t_\t_\t0\t_\t_\t_
3\trice\t_\tNOUN\t_\t_\t2\t_\t_\t_

"""


def test_parse_conllu_basic(tmp_path):
    p = tmp_path / "t.conllu"
    p.write_text(CONLLU, encoding="utf-8")
    bank = parse_conllu(p)
    assert len(bank) == 1
    sent = bank.sentences[0]
    assert sent.tokens == ("I", "ate", "rice")
    assert sent.upos == ("PRON", "VERB", "NOUN")
    assert sent.heads == (2, 0, 2)


def test_parse_conllu_empty_file(tmp_path):
    p = tmp_path / "t.conllu"
    p.write_text("", encoding="utf-8")
    assert len(parse_conllu(p)) == 0


def test_parse_conllu_skips_ranges_and_empty_nodes(tmp_path):
    text = (
        "1\tvamos\t_\tVERB\t_\t_\t0\t_\t_\t_\n"
        "2-3\tal\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "2\ta\t_\tADP\t_\t_\t1\t_\t_\t_\n"
        "3\tel\t_\tDET\t_\t_\t2\t_\t_\t_\n"
        "3.1\tghost\t_\tX\t_\t_\t1\t_\t_\t_\n\n"
    )
    p = tmp_path / "t.conllu"
    p.write_text(text, encoding="utf-8")
    bank = parse_conllu(p)
    assert bank.sentences[0].tokens == ("vamos", "a", "el")


def test_parse_conllu_rejects_bad_head(tmp_path):
    p = tmp_path / "t.conllu"
    p.write_text("1\tx\t_\tX\t_\t_\tBAD\t_\t_\t_\n\n", encoding="utf-8")
    with pytest.raises(ValueError, match="non-integer HEAD"):
        parse_conllu(p)


def test_parse_conllu_rejects_multiroot(tmp_path):
    text = (
        "1\ta\t_\tX\t_\t_\t0\t_\t_\t_\n"
        "2\tb\t_\tX\t_\t_\t0\t_\t_\t_\n\n"
    )
    p = tmp_path / "t.conllu"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(ValueError, match="root"):
        parse_conllu(p)


def test_parse_conllu_rejects_cycle(tmp_path):
    text = (
        "1\ta\t_\tX\t_\t_\t2\t_\t_\t_\n"
        "2\tb\t_\tX\t_\t_\t1\t_\t_\t_\n"
        "3\tc\t_\tX\t_\t_\t0\t_\t_\t_\n\n"
    )
    p = tmp_path / "t.conllu"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(ValueError, match="cyc"):
        parse_conllu(p)


def test_conllu_roundtrip(tmp_path):
    bank = Treebank(
        "t",
        (
            ParsedSentence(("a", "b", "c"), ("NOUN", "VERB", "PUNCT"), (2, 0, 2)),
            ParsedSentence(("x", "y"), ("DET", "NOUN"), (2, 0)),
        ),
    )
    p = tmp_path / "t.conllu"
    write_conllu(bank, p)
    again = parse_conllu(p, name="t")
    assert again == bank


def test_check_tree_catches_cycles():
    with pytest.raises(ValueError):
        check_tree([2, 1, 0])


def test_corpus_roundtrip(tmp_path):
    corpus = Corpus("c", ("one two", "three"))
    p = tmp_path / "c.txt"
    write_text_corpus(corpus, p)
    assert read_text_corpus(p, name="c") == corpus


def make_dataset():
    return TaskDataset(
        name="toy",
        kind="pair-regression",
        label_space=[0.0, 5.0],
        examples=[
            Example("a b", "c d", 2.5, split="train"),
            Example("e", "f", 0.0, split="dev"),
        ],
    )


def test_task_dataset_roundtrip(tmp_path):
    ds = make_dataset()
    p = tmp_path / "toy.jsonl"
    write_task_dataset(ds, p)
    again = load_task_dataset(p)
    assert again.name == ds.name
    assert again.kind == ds.kind
    assert again.label_space == ds.label_space
    assert again.examples == ds.examples


def test_task_dataset_regression_label_in_range(tmp_path):
    ds = make_dataset()
    p = tmp_path / "toy.jsonl"
    write_task_dataset(ds, p)
    assert load_task_dataset(p).examples[0].label == 2.5


def test_task_dataset_rejects_unknown_label(tmp_path):
    ds = TaskDataset(
        name="cls",
        kind="single-classification",
        label_space=["yes", "no"],
        examples=[Example("a", None, "yes"), Example("b", None, "maybe")],
    )
    p = tmp_path / "cls.jsonl"
    write_task_dataset(ds, p)
    with pytest.raises(ValueError, match="record 1"):
        load_task_dataset(p)


def test_task_dataset_pair_requires_text_b(tmp_path):
    ds = TaskDataset(
        name="p",
        kind="pair-classification",
        label_space=["x"],
        examples=[Example("a", None, "x")],
    )
    p = tmp_path / "p.jsonl"
    write_task_dataset(ds, p)
    with pytest.raises(ValueError, match="text_b"):
        load_task_dataset(p)
