from fractions import Fraction

import numpy as np
import pytest

from xfer_forge.corpus import Corpus
from xfer_forge.tokenizer import (
    CLS_ID,
    SEP_ID,
    SPECIALS,
    UNK_ID,
    Vocabulary,
    decode,
    encode,
    encode_pretokenized,
    load_vocab,
    pre_tokenize,
    save_tokenizer_config,
    save_vocab,
    train_wordpiece,
    train_wordpiece_detailed,
    truncate_vocabulary,
)


# ---------------------------------------------------------------- oracle ----
def oracle_merge_sequence(corpus, vocab_size, lowercase=False):
    """Brute-force WordPiece trainer: recounts everything at every step.

    Words are tuples of symbol strings; scores are exact Fractions;
    merging is left-to-right non-overlapping. Returns the merge sequence.
    """
    from collections import Counter

    counts = Counter()
    for sent in corpus.documents:
        counts.update(pre_tokenize(sent, lowercase=lowercase))
    words = {
        tuple([w[0]] + ["##" + c for c in w[1:]]): n for w, n in sorted(counts.items())
    }
    alphabet = {s for seq in words for s in seq}
    merges = []
    n_tokens = 5 + len(alphabet)
    vocab = set(alphabet)
    while n_tokens < vocab_size:
        pair_counts = Counter()
        sym_counts = Counter()
        for seq, n in words.items():
            for s in seq:
                sym_counts[s] += n
            for a, b in zip(seq, seq[1:]):
                pair_counts[(a, b)] += n
        if not pair_counts:
            break
        best = min(
            pair_counts,
            key=lambda p: (
                -Fraction(pair_counts[p], sym_counts[p[0]] * sym_counts[p[1]]),
                p,
            ),
        )
        merges.append(best)
        a, b = best
        merged = a + (b[2:] if b.startswith("##") else b)
        new_words = {}
        for seq, n in words.items():
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            new_words[tuple(out)] = new_words.get(tuple(out), 0) + n
        words = new_words
        if merged not in vocab:
            vocab.add(merged)
            n_tokens += 1
    return merges


def random_corpus(rng, n_words=20, n_sentences=6):
    alphabet = list("abcdef")
    words = [
        "".join(rng.choice(alphabet, size=rng.integers(1, 6)))
        for _ in range(n_words)
    ]
    sentences = tuple(
        " ".join(rng.choice(words, size=rng.integers(1, 8)))
        for _ in range(n_sentences)
    )
    return Corpus("rand", sentences)


# ---------------------------------------------------------------- training --
def test_single_possible_merge():
    corpus = Corpus("aa", ("aa aa aa",))
    vocab = train_wordpiece(corpus, 8)
    assert "a" in vocab.tokens
    assert "##a" in vocab.tokens
    assert "aa" in vocab.tokens


def test_merge_sequence_matches_bruteforce_oracle():
    rng = np.random.default_rng(123)
    for trial in range(20):
        corpus = random_corpus(rng)
        vocab_size = int(rng.integers(12, 40))
        try:
            _, merges = train_wordpiece_detailed(corpus, vocab_size)
        except ValueError:
            continue  # vocab_size below alphabet floor for this draw
        expected = oracle_merge_sequence(corpus, vocab_size)
        assert merges == expected, f"trial {trial}"


def test_vocab_size_floor_enforced():
    corpus = Corpus("c", ("abc def",))
    with pytest.raises(ValueError, match="alphabet"):
        train_wordpiece(corpus, 6)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty"):
        train_wordpiece(Corpus("e", ()), 100)


def test_rank_ordering_invariant():
    rng = np.random.default_rng(5)
    corpus = random_corpus(rng, n_words=30, n_sentences=20)
    vocab = train_wordpiece(corpus, 60)
    freqs = vocab.frequencies
    for i in range(6, len(vocab)):
        assert freqs[i - 1] >= freqs[i]
        if freqs[i - 1] == freqs[i]:
            assert vocab.tokens[i - 1] < vocab.tokens[i]


def test_training_deterministic_bytes(tmp_path):
    rng = np.random.default_rng(9)
    corpus = random_corpus(rng, n_words=25, n_sentences=15)
    files = []
    for i in range(2):
        vocab = train_wordpiece(corpus, 50)
        p = tmp_path / f"v{i}.txt"
        save_vocab(vocab, p)
        files.append(p.read_bytes())
    assert files[0] == files[1]


def test_specials_occupy_first_five_ranks():
    corpus = Corpus("c", ("ab ba",))
    vocab = train_wordpiece(corpus, 12)
    assert vocab.tokens[:5] == SPECIALS


# ---------------------------------------------------------------- truncate --
def test_truncate_identity():
    vocab = train_wordpiece(Corpus("c", ("ab ba ab",)), 12)
    assert truncate_vocabulary(vocab, len(vocab)) == vocab


def test_truncate_keeps_top_ranks():
    rng = np.random.default_rng(17)
    corpus = random_corpus(rng, n_words=30, n_sentences=30)
    vocab = train_wordpiece(corpus, 64)
    cut = truncate_vocabulary(vocab, 10)
    assert len(cut) == 10
    assert cut.tokens[:5] == SPECIALS
    # sort oracle: survivors are the 5 highest-frequency non-specials
    ranked = sorted(
        range(5, len(vocab)),
        key=lambda i: (-vocab.frequencies[i], vocab.tokens[i]),
    )
    assert list(cut.tokens[5:]) == [vocab.tokens[i] for i in ranked[:5]]


def test_truncate_below_specials_rejected():
    vocab = train_wordpiece(Corpus("c", ("ab",)), 10)
    with pytest.raises(ValueError):
        truncate_vocabulary(vocab, 4)


def test_ordering_violation_detected():
    with pytest.raises(ValueError, match="ordering"):
        Vocabulary(SPECIALS + ("x", "y", "z"), (0,) * 5 + (1, 5, 2))


# ---------------------------------------------------------------- encoding --
def crafted_vocab(extra):
    return Vocabulary(SPECIALS + tuple(extra))


def test_encode_empty_text():
    vocab = crafted_vocab(["a"])
    enc = encode(vocab, "", max_len=16)
    assert enc.ids == (CLS_ID, SEP_ID)
    assert enc.word_spans == ()


def test_encode_unknown_word_is_single_unk():
    vocab = crafted_vocab(["ab"])
    enc = encode(vocab, "zq", max_len=16)
    assert enc.ids == (CLS_ID, UNK_ID, SEP_ID)
    assert enc.word_spans == ((1, 2),)


def test_encode_greedy_longest_match():
    vocab = crafted_vocab(["un", "##aff", "##able", "##a", "u", "##n"])
    enc = encode(vocab, "unaffable", max_len=16)
    toks = [vocab.tokens[i] for i in enc.ids]
    assert toks == ["[CLS]", "un", "##aff", "##able", "[SEP]"]
    assert enc.word_spans == ((1, 4),)


def test_encode_pair_layout_and_types():
    vocab = crafted_vocab(["a", "b"])
    enc = encode(vocab, "a", "b", max_len=16)
    assert [vocab.tokens[i] for i in enc.ids] == ["[CLS]", "a", "[SEP]", "b", "[SEP]"]
    assert enc.type_ids == (0, 0, 0, 1, 1)


def test_encode_length_bound_and_longest_first_truncation():
    vocab = crafted_vocab(["a", "b"])
    enc = encode(vocab, "a " * 30, "b " * 5, max_len=16)
    assert len(enc.ids) <= 16
    toks = [vocab.tokens[i] for i in enc.ids]
    assert toks.count("a") == 8 and toks.count("b") == 5  # longer side trimmed


def test_encode_very_long_word_is_unk():
    vocab = crafted_vocab(["a"])
    enc = encode(vocab, "a" * 101, max_len=16)
    assert enc.ids == (CLS_ID, UNK_ID, SEP_ID)


def test_word_spans_partition_non_special_positions():
    vocab = crafted_vocab(["ab", "##c", "d"])
    enc = encode(vocab, "abc d", "abc", max_len=16)
    covered = sorted(i for s, e in enc.word_spans for i in range(s, e))
    non_special = [i for i, t in enumerate(enc.ids) if t >= 5]
    assert covered == non_special


def test_encode_max_len_floor():
    vocab = crafted_vocab(["a"])
    with pytest.raises(ValueError):
        encode(vocab, "a", max_len=4)


# ---------------------------------------------------------------- decode ----
def test_decode_empty():
    vocab = crafted_vocab(["a"])
    assert decode(vocab, [CLS_ID, SEP_ID]) == ""


def test_decode_joins_continuations():
    vocab = crafted_vocab(["un", "##aff", "##able"])
    enc = encode(vocab, "unaffable", max_len=16)
    assert decode(vocab, enc.ids) == "unaffable"


def test_decode_rejects_out_of_range():
    vocab = crafted_vocab(["a"])
    with pytest.raises(ValueError):
        decode(vocab, [99])


def test_roundtrip_on_training_corpus():
    rng = np.random.default_rng(31)
    corpus = random_corpus(rng, n_words=25, n_sentences=25)
    vocab = train_wordpiece(corpus, 80)
    for sent in corpus.documents:
        enc = encode(vocab, sent, max_len=128)
        if UNK_ID in enc.ids:
            continue
        assert decode(vocab, enc.ids) == " ".join(sent.split())


def test_encode_pretokenized_alignment():
    vocab = crafted_vocab(["ab", "##c", "d"])
    enc = encode_pretokenized(vocab, ["abc", "d"], max_len=16)
    assert len(enc.word_spans) == 2
    assert enc.ids[0] == CLS_ID and enc.ids[-1] == SEP_ID


def test_vocab_file_roundtrip(tmp_path):
    vocab = train_wordpiece(Corpus("c", ("ab ba ab baa",)), 16)
    save_vocab(vocab, tmp_path / "v.txt")
    save_tokenizer_config(vocab, tmp_path / "cfg.json")
    again = load_vocab(tmp_path / "v.txt", tmp_path / "cfg.json")
    assert again.tokens == vocab.tokens
    assert again.frequencies is None


def test_pretokenize_splits_punct():
    assert pre_tokenize("a,b c.") == ["a", ",", "b", "c", "."]
    assert pre_tokenize("A B", lowercase=True) == ["a", "b"]
